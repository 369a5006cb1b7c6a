#include "xferlab/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "xferlab/access_log.hpp"

namespace xferlab::datagen {

std::string to_string(Shift s) {
  switch (s) {
    case Shift::none: return "none";
    case Shift::acoustic: return "acoustic";
    case Shift::vocabulary: return "vocabulary";
    case Shift::keyword: return "keyword";
  }
  throw ConfigError("bad shift");
}

Shift shift_from_string(const std::string& s) {
  if (s == "none") return Shift::none;
  if (s == "acoustic") return Shift::acoustic;
  if (s == "vocabulary") return Shift::vocabulary;
  if (s == "keyword") return Shift::keyword;
  throw ConfigError("unknown shift: " + s);
}

nlohmann::json to_json(const DomainSpec& s) {
  return nlohmann::json{{"vocab_size", s.vocab_size},
                        {"feature_dim", s.feature_dim},
                        {"min_tokens", s.min_tokens},
                        {"max_tokens", s.max_tokens},
                        {"min_frames", s.min_frames},
                        {"max_frames", s.max_frames},
                        {"template_seed", s.template_seed},
                        {"noise_sigma", s.noise_sigma},
                        {"shift", to_string(s.shift)},
                        {"rotation_strength", s.rotation_strength},
                        {"channel_offset", s.channel_offset},
                        {"new_token_count", s.new_token_count},
                        {"keyword_min_frames", s.keyword_min_frames},
                        {"keyword_max_frames", s.keyword_max_frames}};
}

DomainSpec domain_spec_from_json(const nlohmann::json& j) {
  DomainSpec s;
  s.vocab_size = j.value("vocab_size", s.vocab_size);
  s.feature_dim = j.value("feature_dim", s.feature_dim);
  s.min_tokens = j.value("min_tokens", s.min_tokens);
  s.max_tokens = j.value("max_tokens", s.max_tokens);
  s.min_frames = j.value("min_frames", s.min_frames);
  s.max_frames = j.value("max_frames", s.max_frames);
  s.template_seed = j.value("template_seed", s.template_seed);
  s.noise_sigma = j.value("noise_sigma", s.noise_sigma);
  s.shift = shift_from_string(j.value("shift", "none"));
  s.rotation_strength = j.value("rotation_strength", s.rotation_strength);
  s.channel_offset = j.value("channel_offset", s.channel_offset);
  s.new_token_count = j.value("new_token_count", s.new_token_count);
  s.keyword_min_frames = j.value("keyword_min_frames", s.keyword_min_frames);
  s.keyword_max_frames = j.value("keyword_max_frames", s.keyword_max_frames);
  return s;
}

namespace {

void validate(const DomainSpec& s) {
  if (s.vocab_size < 2) throw ConfigError("domain: vocab_size must be >= 2");
  if (s.feature_dim < 4) throw ConfigError("domain: feature_dim must be >= 4");
  if (s.min_frames < 2) throw ConfigError("domain: frames_per_token must be >= 2");
  if (s.min_tokens < 1 || s.max_tokens < s.min_tokens || s.max_frames < s.min_frames)
    throw ConfigError("domain: bad token/frame ranges");
  if (s.shift == Shift::vocabulary &&
      (s.new_token_count < 1 || s.new_token_count > s.vocab_size))
    throw ConfigError("domain: new_token_count out of range");
  if (s.shift == Shift::keyword &&
      (s.keyword_min_frames < 2 || s.keyword_max_frames < s.keyword_min_frames))
    throw ConfigError("domain: bad keyword frame range");
}

std::vector<std::vector<double>> make_templates(const DomainSpec& s) {
  std::vector<std::vector<double>> tpl(static_cast<std::size_t>(s.vocab_size));
  for (int v = 0; v < s.vocab_size; ++v) {
    const bool redraw =
        s.shift == Shift::vocabulary && v >= s.vocab_size - s.new_token_count;
    RngStream rng(s.template_seed, redraw ? "template.shifted" : "template",
                  static_cast<uint64_t>(v));
    auto& t = tpl[static_cast<std::size_t>(v)];
    t.resize(static_cast<std::size_t>(s.feature_dim));
    for (double& x : t) x = rng.normal();
  }
  return tpl;
}

// Rotations act on disjoint random coordinate planes; strength 1 rotates each
// plane by 45 degrees. Strength 0 is exactly the identity.
struct AcousticShift {
  std::vector<std::pair<int, int>> planes;
  double cos_a = 1.0, sin_a = 0.0;
  double offset = 0.0;
  bool active = false;

  void apply(std::vector<double>& frame) const {
    if (!active) return;
    for (auto [i, j] : planes) {
      const double a = frame[static_cast<std::size_t>(i)];
      const double b = frame[static_cast<std::size_t>(j)];
      frame[static_cast<std::size_t>(i)] = cos_a * a - sin_a * b;
      frame[static_cast<std::size_t>(j)] = sin_a * a + cos_a * b;
    }
    for (double& x : frame) x += offset;
  }
};

AcousticShift make_acoustic_shift(const DomainSpec& s) {
  AcousticShift sh;
  if (s.shift != Shift::acoustic || (s.rotation_strength == 0 && s.channel_offset == 0))
    return sh;
  sh.active = true;
  const double angle = s.rotation_strength * (3.14159265358979323846 / 4.0);
  sh.cos_a = std::cos(angle);
  sh.sin_a = std::sin(angle);
  sh.offset = s.channel_offset;
  std::vector<int> perm(static_cast<std::size_t>(s.feature_dim));
  for (int i = 0; i < s.feature_dim; ++i) perm[static_cast<std::size_t>(i)] = i;
  RngStream rng(s.template_seed, "acoustic.planes");
  for (int i = s.feature_dim - 1; i > 0; --i)
    std::swap(perm[static_cast<std::size_t>(i)],
              perm[static_cast<std::size_t>(rng.uniform_int(0, i))]);
  for (int i = 0; i + 1 < s.feature_dim; i += 2)
    sh.planes.emplace_back(perm[static_cast<std::size_t>(i)],
                           perm[static_cast<std::size_t>(i + 1)]);
  return sh;
}

Utterance make_utterance(const DomainSpec& s,
                         const std::vector<std::vector<double>>& templates,
                         const AcousticShift& shift, const std::string& split,
                         int index, uint64_t seed) {
  RngStream rng(seed, split + ".utt", static_cast<uint64_t>(index));
  const bool kw = s.shift == Shift::keyword;
  const int n_tok = kw ? 1 : rng.uniform_int(s.min_tokens, s.max_tokens);
  const int fmin = kw ? s.keyword_min_frames : s.min_frames;
  const int fmax = kw ? s.keyword_max_frames : s.max_frames;

  Utterance u;
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%s-%05d", split.c_str(), index);
  u.id = buf;

  std::vector<std::vector<double>> frames;
  for (int k = 0; k < n_tok; ++k) {
    // no immediate repeats: back-to-back copies of one template are not
    // segmentable, which would put an artificial floor under the WER
    int tok = rng.uniform_int(0, s.vocab_size - 1);
    while (k > 0 && tok == u.tokens.back()) tok = rng.uniform_int(0, s.vocab_size - 1);
    u.tokens.push_back(tok);
    const int reps = rng.uniform_int(fmin, fmax);
    for (int r = 0; r < reps; ++r) {
      std::vector<double> frame = templates[static_cast<std::size_t>(tok)];
      for (double& x : frame) x += s.noise_sigma * rng.normal();
      shift.apply(frame);
      frames.push_back(std::move(frame));
    }
  }
  u.features = Tensor({static_cast<int>(frames.size()), s.feature_dim});
  std::size_t o = 0;
  for (const auto& fr : frames)
    for (double x : fr)
      // quantize to f32 so the on-disk round trip reproduces bits exactly
      u.features.data[o++] = static_cast<double>(static_cast<float>(x));
  return u;
}

}  // namespace

DomainData generate_domain(const DomainSpec& spec, int n_train, int n_eval,
                           uint64_t seed) {
  validate(spec);
  if (n_train < 1 || n_eval < 1) throw ConfigError("generate_domain: counts must be >= 1");
  const auto templates = make_templates(spec);
  const auto shift = make_acoustic_shift(spec);
  DomainData out;
  for (int i = 0; i < n_train; ++i)
    out.train.utts.push_back(make_utterance(spec, templates, shift, "train", i, seed));
  for (int i = 0; i < n_eval; ++i)
    out.eval.utts.push_back(make_utterance(spec, templates, shift, "eval", i, seed));
  return out;
}

void write_dataset(const Dataset& set, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir / "feats");
  std::ofstream manifest(dir / "manifest.jsonl", std::ios::trunc);
  if (!manifest) throw DataError("cannot write manifest in " + dir.string());
  for (const Utterance& u : set.utts) {
    const std::string rel = "feats/" + u.id + ".xff";
    const int T = u.features.shape[0];
    const int F = u.features.shape[1];
    manifest << nlohmann::json{{"id", u.id},
                               {"features", rel},
                               {"n_frames", T},
                               {"n_feats", F},
                               {"tokens", u.tokens}}
                    .dump()
             << "\n";
    std::ofstream ff(dir / rel, std::ios::binary | std::ios::trunc);
    if (!ff) throw DataError("cannot write feature file " + (dir / rel).string());
    ff.write("XFF1", 4);
    const std::uint32_t t32 = static_cast<std::uint32_t>(T);
    const std::uint32_t f32n = static_cast<std::uint32_t>(F);
    ff.write(reinterpret_cast<const char*>(&t32), 4);
    ff.write(reinterpret_cast<const char*>(&f32n), 4);
    std::vector<float> buf(u.features.data.size());
    for (std::size_t i = 0; i < buf.size(); ++i)
      buf[i] = static_cast<float>(u.features.data[i]);
    ff.write(reinterpret_cast<const char*>(buf.data()),
             static_cast<std::streamsize>(buf.size() * sizeof(float)));
    if (!ff) throw DataError("feature write failed: " + (dir / rel).string());
  }
}

Dataset read_dataset(const std::filesystem::path& dir) {
  const auto manifest_path = dir / "manifest.jsonl";
  iolog::note_open(manifest_path.string());
  std::ifstream manifest(manifest_path);
  if (!manifest) throw DataError("missing manifest: " + manifest_path.string());
  Dataset set;
  std::string line;
  int line_no = 0;
  while (std::getline(manifest, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw DataError("manifest parse error at line " + std::to_string(line_no) + ": " +
                      e.what());
    }
    Utterance u;
    try {
      u.id = j.at("id").get<std::string>();
      u.tokens = j.at("tokens").get<std::vector<int>>();
      const int T = j.at("n_frames").get<int>();
      const int F = j.at("n_feats").get<int>();
      const std::string rel = j.at("features").get<std::string>();
      const auto fpath = dir / rel;
      iolog::note_open(fpath.string());
      std::ifstream ff(fpath, std::ios::binary);
      if (!ff) throw DataError("missing feature file: " + fpath.string());
      char magic[4];
      ff.read(magic, 4);
      if (!ff || std::memcmp(magic, "XFF1", 4) != 0)
        throw DataError("bad magic in feature file: " + fpath.string());
      std::uint32_t t32 = 0, f32n = 0;
      ff.read(reinterpret_cast<char*>(&t32), 4);
      ff.read(reinterpret_cast<char*>(&f32n), 4);
      if (!ff || static_cast<int>(t32) != T || static_cast<int>(f32n) != F)
        throw DataError("feature header mismatch vs manifest: " + fpath.string());
      std::vector<float> buf(static_cast<std::size_t>(T) * static_cast<std::size_t>(F));
      ff.read(reinterpret_cast<char*>(buf.data()),
              static_cast<std::streamsize>(buf.size() * sizeof(float)));
      if (ff.gcount() != static_cast<std::streamsize>(buf.size() * sizeof(float)))
        throw DataError("feature file truncated: " + fpath.string());
      u.features = Tensor({T, F});
      for (std::size_t i = 0; i < buf.size(); ++i)
        u.features.data[i] = static_cast<double>(buf[i]);
    } catch (const nlohmann::json::exception& e) {
      throw DataError("manifest field error at line " + std::to_string(line_no) + ": " +
                      e.what());
    }
    set.utts.push_back(std::move(u));
  }
  return set;
}

}  // namespace xferlab::datagen
