#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "xferlab/rng.hpp"
#include "xferlab/tensor.hpp"

namespace testutil {

inline xferlab::Tensor random_tensor(std::vector<int> shape, uint64_t seed,
                                     const char* site = "t", double scale = 1.0) {
  xferlab::Tensor t(std::move(shape));
  xferlab::RngStream rng(seed, site);
  for (double& v : t.data) v = scale * rng.normal();
  return t;
}

// guarded relative error: relative for large values, absolute near zero
inline double rel_err(double a, double b) {
  return std::fabs(a - b) / std::max({1.0, std::fabs(a), std::fabs(b)});
}

// Central finite differences against the grads already stored in `params`
// (caller runs the analytic backward first). `eval` must rebuild the forward
// pass from the current parameter values.
inline double max_fd_error(const std::vector<xferlab::Tensor*>& params,
                           const std::function<double()>& eval, double h = 1e-5) {
  double worst = 0.0;
  for (xferlab::Tensor* p : params) {
    for (std::size_t i = 0; i < p->numel(); ++i) {
      const double keep = p->data[i];
      p->data[i] = keep + h;
      const double up = eval();
      p->data[i] = keep - h;
      const double down = eval();
      p->data[i] = keep;
      const double fd = (up - down) / (2.0 * h);
      const double analytic = p->grad.empty() ? 0.0 : p->grad[i];
      worst = std::max(worst, rel_err(analytic, fd));
    }
  }
  return worst;
}

}  // namespace testutil
