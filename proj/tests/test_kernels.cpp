#include <cstring>
#include <vector>

#include "doctest.h"
#include "helpers.hpp"
#include "xferlab/kernels.hpp"

using namespace xferlab;

namespace {

std::vector<double> rand_vec(std::size_t n, uint64_t seed) {
  std::vector<double> v(n);
  RngStream rng(seed, "kern");
  for (double& x : v) x = rng.normal();
  return v;
}

bool bits_equal(const std::vector<double>& a, const std::vector<double>& b) {
  return a.size() == b.size() &&
         std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

}  // namespace

TEST_CASE("every available lane matches the scalar reference bit for bit") {
  const auto& ref = kern::scalar();
  const std::vector<std::size_t> sizes{1, 2, 3, 4, 5, 7, 8, 15, 16, 33, 64, 100};
  for (const kern::Backend* b : kern::available()) {
    CAPTURE(b->name);
    for (std::size_t n : sizes) {
      const auto x = rand_vec(n, 1000 + n);
      const auto y = rand_vec(n, 2000 + n);
      std::vector<double> out_ref(n), out_b(n);

      ref.add(x.data(), y.data(), out_ref.data(), n);
      b->add(x.data(), y.data(), out_b.data(), n);
      CHECK(bits_equal(out_ref, out_b));

      ref.sub(x.data(), y.data(), out_ref.data(), n);
      b->sub(x.data(), y.data(), out_b.data(), n);
      CHECK(bits_equal(out_ref, out_b));

      ref.mul(x.data(), y.data(), out_ref.data(), n);
      b->mul(x.data(), y.data(), out_b.data(), n);
      CHECK(bits_equal(out_ref, out_b));

      ref.scale(1.7, x.data(), out_ref.data(), n);
      b->scale(1.7, x.data(), out_b.data(), n);
      CHECK(bits_equal(out_ref, out_b));

      auto acc_ref = y;
      auto acc_b = y;
      ref.axpy(-0.3, x.data(), acc_ref.data(), n);
      b->axpy(-0.3, x.data(), acc_b.data(), n);
      CHECK(bits_equal(acc_ref, acc_b));
    }
  }
}

TEST_CASE("matmul_acc lanes agree bitwise and match a naive product") {
  const auto& ref = kern::scalar();
  RngStream dims(42, "dims");
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t m = static_cast<std::size_t>(dims.uniform_int(1, 17));
    const std::size_t k = static_cast<std::size_t>(dims.uniform_int(1, 17));
    const std::size_t n = static_cast<std::size_t>(dims.uniform_int(1, 17));
    const auto a = rand_vec(m * k, 10 + static_cast<uint64_t>(trial));
    const auto b = rand_vec(k * n, 20 + static_cast<uint64_t>(trial));
    const auto c0 = rand_vec(m * n, 30 + static_cast<uint64_t>(trial));

    auto c_ref = c0;
    ref.matmul_acc(a.data(), b.data(), c_ref.data(), m, k, n);

    for (const kern::Backend* lane : kern::available()) {
      auto c_lane = c0;
      lane->matmul_acc(a.data(), b.data(), c_lane.data(), m, k, n);
      CAPTURE(lane->name);
      CHECK(bits_equal(c_ref, c_lane));
    }

    // naive (i,j,k) accumulation as an independent route
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        double acc = c0[i * n + j];
        for (std::size_t kk = 0; kk < k; ++kk) acc += a[i * k + kk] * b[kk * n + j];
        CHECK(testutil::rel_err(acc, c_ref[i * n + j]) < 1e-12);
      }
  }
}

TEST_CASE("transpose round-trips") {
  const auto a = rand_vec(6 * 11, 5);
  std::vector<double> t(a.size()), back(a.size());
  kern::transpose(a.data(), t.data(), 6, 11);
  kern::transpose(t.data(), back.data(), 11, 6);
  CHECK(bits_equal(a, back));
  CHECK(t[3 * 6 + 2] == a[2 * 11 + 3]);
}

TEST_CASE("force selects lanes and rejects unknown names") {
  const std::string original = kern::active().name;
  CHECK(kern::force("scalar"));
  CHECK(std::string(kern::active().name) == "scalar");
  CHECK_FALSE(kern::force("not-a-backend"));
  CHECK(std::string(kern::active().name) == "scalar");
  CHECK(kern::force(original));
}
