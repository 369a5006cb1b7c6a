#include <cstring>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "xferlab/datagen.hpp"

using namespace xferlab;
using namespace xferlab::datagen;

namespace {

bool same_dataset(const Dataset& a, const Dataset& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const Utterance& ua = a.utts[i];
    const Utterance& ub = b.utts[i];
    if (ua.id != ub.id || ua.tokens != ub.tokens ||
        ua.features.shape != ub.features.shape)
      return false;
    if (std::memcmp(ua.features.data.data(), ub.features.data.data(),
                    ua.features.data.size() * sizeof(double)) != 0)
      return false;
  }
  return true;
}

DomainSpec base_spec() {
  DomainSpec s;
  s.vocab_size = 8;
  s.feature_dim = 8;
  s.min_tokens = 2;
  s.max_tokens = 4;
  s.min_frames = 2;
  s.max_frames = 3;
  return s;
}

}  // namespace

TEST_CASE("generation is deterministic in its seeds") {
  const auto a = generate_domain(base_spec(), 20, 10, 5);
  const auto b = generate_domain(base_spec(), 20, 10, 5);
  CHECK(same_dataset(a.train, b.train));
  CHECK(same_dataset(a.eval, b.eval));
  const auto c = generate_domain(base_spec(), 20, 10, 6);
  CHECK_FALSE(same_dataset(a.train, c.train));
}

TEST_CASE("train and eval draws are disjoint by id") {
  const auto d = generate_domain(base_spec(), 15, 15, 5);
  for (const auto& tr : d.train.utts)
    for (const auto& ev : d.eval.utts) CHECK(tr.id != ev.id);
}

TEST_CASE("null acoustic shift is exactly the original domain") {
  DomainSpec shifted = base_spec();
  shifted.shift = Shift::acoustic;
  shifted.rotation_strength = 0.0;
  shifted.channel_offset = 0.0;
  const auto a = generate_domain(base_spec(), 10, 5, 5);
  const auto b = generate_domain(shifted, 10, 5, 5);
  CHECK(same_dataset(a.train, b.train));
}

TEST_CASE("full-strength acoustic shift moves features but not labels") {
  DomainSpec shifted = base_spec();
  shifted.shift = Shift::acoustic;
  shifted.rotation_strength = 1.0;
  shifted.channel_offset = 0.5;
  const auto a = generate_domain(base_spec(), 10, 5, 5);
  const auto b = generate_domain(shifted, 10, 5, 5);
  REQUIRE(a.train.size() == b.train.size());
  double total_l2 = 0.0;
  for (std::size_t i = 0; i < a.train.size(); ++i) {
    CHECK(a.train.utts[i].tokens == b.train.utts[i].tokens);
    REQUIRE(a.train.utts[i].features.numel() == b.train.utts[i].features.numel());
    for (std::size_t k = 0; k < a.train.utts[i].features.numel(); ++k) {
      const double d =
          a.train.utts[i].features.data[k] - b.train.utts[i].features.data[k];
      total_l2 += d * d;
    }
  }
  CHECK(total_l2 > 1.0);
}

TEST_CASE("keyword domains emit single short utterances") {
  DomainSpec kw = base_spec();
  kw.shift = Shift::keyword;
  kw.keyword_min_frames = 2;
  kw.keyword_max_frames = 4;
  const auto d = generate_domain(kw, 25, 10, 9);
  for (const auto& u : d.train.utts) {
    CHECK(u.tokens.size() == 1);
    CHECK(u.features.shape[0] >= 2);
    CHECK(u.features.shape[0] <= 4);
  }
}

TEST_CASE("vocabulary shift redraws only the tail templates") {
  DomainSpec vs = base_spec();
  vs.shift = Shift::vocabulary;
  vs.new_token_count = 2;  // ids 6 and 7
  const auto a = generate_domain(base_spec(), 30, 5, 5);
  const auto b = generate_domain(vs, 30, 5, 5);
  REQUIRE(a.train.size() == b.train.size());
  for (std::size_t i = 0; i < a.train.size(); ++i) {
    CHECK(a.train.utts[i].tokens == b.train.utts[i].tokens);
    bool has_shifted_token = false;
    for (int t : a.train.utts[i].tokens) has_shifted_token |= t >= 6;
    const bool same_features =
        std::memcmp(a.train.utts[i].features.data.data(),
                    b.train.utts[i].features.data.data(),
                    a.train.utts[i].features.data.size() * sizeof(double)) == 0;
    CHECK(same_features == !has_shifted_token);
  }
}

TEST_CASE("dataset round-trips through the directory format") {
  const auto dir = std::filesystem::temp_directory_path() / "xferlab_ds_rt";
  std::filesystem::remove_all(dir);
  const auto d = generate_domain(base_spec(), 8, 3, 5);
  write_dataset(d.train, dir);
  const Dataset back = read_dataset(dir);
  CHECK(same_dataset(d.train, back));
  std::filesystem::remove_all(dir);
}

TEST_CASE("an empty dataset writes a valid empty manifest") {
  const auto dir = std::filesystem::temp_directory_path() / "xferlab_ds_empty";
  std::filesystem::remove_all(dir);
  write_dataset(Dataset{}, dir);
  CHECK(read_dataset(dir).empty());
  std::filesystem::remove_all(dir);
}

TEST_CASE("corrupt inputs are rejected with context") {
  const auto dir = std::filesystem::temp_directory_path() / "xferlab_ds_bad";
  std::filesystem::remove_all(dir);
  const auto d = generate_domain(base_spec(), 3, 1, 5);
  write_dataset(d.train, dir);

  SUBCASE("missing manifest") {
    CHECK_THROWS_AS(read_dataset(dir / "nope"), DataError);
  }
  SUBCASE("malformed manifest line reports the line number") {
    std::ofstream m(dir / "manifest.jsonl", std::ios::app);
    m << "{not json\n";
    m.close();
    try {
      read_dataset(dir);
      FAIL("expected DataError");
    } catch (const DataError& e) {
      CHECK(std::string(e.what()).find("line 4") != std::string::npos);
    }
  }
  SUBCASE("truncated feature file") {
    const auto feat = dir / "feats" / (d.train.utts[0].id + ".xff");
    std::filesystem::resize_file(feat, std::filesystem::file_size(feat) - 8);
    CHECK_THROWS_AS(read_dataset(dir), DataError);
  }
  SUBCASE("header mismatch against the manifest") {
    const auto feat = dir / "feats" / (d.train.utts[0].id + ".xff");
    std::fstream f(feat, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(4);
    const std::uint32_t wrong = 9999;
    f.write(reinterpret_cast<const char*>(&wrong), 4);
    f.close();
    CHECK_THROWS_AS(read_dataset(dir), DataError);
  }
  std::filesystem::remove_all(dir);
}

TEST_CASE("spec validation") {
  DomainSpec s = base_spec();
  s.vocab_size = 1;
  CHECK_THROWS_AS(generate_domain(s, 1, 1, 1), ConfigError);
  s = base_spec();
  s.min_frames = 1;
  CHECK_THROWS_AS(generate_domain(s, 1, 1, 1), ConfigError);
  s = base_spec();
  CHECK_THROWS_AS(generate_domain(s, 0, 1, 1), ConfigError);
  s.shift = Shift::vocabulary;
  s.new_token_count = 0;
  CHECK_THROWS_AS(generate_domain(s, 1, 1, 1), ConfigError);
}

TEST_CASE("feature files carry the XFF1 magic and f32 layout") {
  const auto dir = std::filesystem::temp_directory_path() / "xferlab_ds_fmt";
  std::filesystem::remove_all(dir);
  const auto d = generate_domain(base_spec(), 1, 1, 5);
  write_dataset(d.train, dir);
  const auto feat = dir / "feats" / (d.train.utts[0].id + ".xff");
  std::ifstream f(feat, std::ios::binary);
  char magic[4];
  f.read(magic, 4);
  CHECK(std::memcmp(magic, "XFF1", 4) == 0);
  std::uint32_t t = 0, ff = 0;
  f.read(reinterpret_cast<char*>(&t), 4);
  f.read(reinterpret_cast<char*>(&ff), 4);
  CHECK(static_cast<int>(t) == d.train.utts[0].features.shape[0]);
  CHECK(static_cast<int>(ff) == 8);
  CHECK(std::filesystem::file_size(feat) == 4 + 8 + t * ff * sizeof(float));
  std::filesystem::remove_all(dir);
}
