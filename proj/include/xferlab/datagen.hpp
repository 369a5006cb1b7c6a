#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "xferlab/tensor.hpp"

#include "json.hpp"

namespace xferlab::datagen {

enum class Shift { none, acoustic, vocabulary, keyword };

std::string to_string(Shift s);
Shift shift_from_string(const std::string& s);

// Pseudo-acoustic domain: every token id owns a fixed feature template; an
// utterance concatenates per-token templates repeated for a sampled frame
// count plus Gaussian noise. Shifts transform features (acoustic), redraw
// templates (vocabulary) or emit short single-token utterances (keyword).
struct DomainSpec {
  int vocab_size = 16;
  int feature_dim = 16;
  int min_tokens = 3;
  int max_tokens = 8;
  int min_frames = 3;  // per token
  int max_frames = 6;
  uint64_t template_seed = 1234;
  double noise_sigma = 0.1;
  Shift shift = Shift::none;
  // acoustic: plane rotations of up to 45 degrees at strength 1, plus a
  // constant offset on every channel
  double rotation_strength = 0.0;
  double channel_offset = 0.0;
  // vocabulary: templates of the last new_token_count ids are redrawn
  int new_token_count = 0;
  // keyword: single-token utterances with short frame counts
  int keyword_min_frames = 2;
  int keyword_max_frames = 4;
};

nlohmann::json to_json(const DomainSpec& s);
DomainSpec domain_spec_from_json(const nlohmann::json& j);

struct Utterance {
  std::string id;
  Tensor features;  // [T, F]
  std::vector<int> tokens;
};

struct Dataset {
  std::vector<Utterance> utts;
  bool empty() const { return utts.empty(); }
  std::size_t size() const { return utts.size(); }
};

struct DomainData {
  Dataset train;
  Dataset eval;
};

// Deterministic in (spec.template_seed, seed); train/eval draws come from
// disjoint streams and carry disjoint ids.
DomainData generate_domain(const DomainSpec& spec, int n_train, int n_eval,
                           uint64_t seed);

// Directory layout: manifest.jsonl with one {id, features, n_frames, n_feats,
// tokens} object per line; feature files are "XFF1" + u32le T + u32le F +
// T*F f32le row-major. Features are f32-quantized at generation time, so the
// round trip is bit-exact.
void write_dataset(const Dataset& set, const std::filesystem::path& dir);
Dataset read_dataset(const std::filesystem::path& dir);

}  // namespace xferlab::datagen
