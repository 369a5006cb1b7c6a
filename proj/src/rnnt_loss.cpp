#include "xferlab/rnnt_loss.hpp"

#include <cmath>

namespace xferlab {

namespace {

void check_lattice(const std::vector<int>& shape, const std::vector<int>& target,
                   int blank_id) {
  if (shape.size() != 3) throw ShapeError("transducer loss: log_probs must be [T,U+1,V+1]");
  const int T = shape[0], U1 = shape[1], K = shape[2];
  if (T < 1) throw ShapeError("transducer loss: T must be >= 1");
  if (U1 != static_cast<int>(target.size()) + 1)
    throw ShapeError("transducer loss: U axis must be targets + 1");
  if (blank_id < 0 || blank_id >= K) throw DataError("transducer loss: bad blank id");
  for (int y : target)
    if (y < 0 || y >= K || y == blank_id)
      throw DataError("transducer loss: target id out of range");
}

}  // namespace

Tape::Id transducer_log_loss(Tape& tape, Tape::Id log_probs,
                             const std::vector<int>& target, int blank_id) {
  const auto& shape = tape.shape_of(log_probs);
  check_lattice(shape, target, blank_id);
  const int T = shape[0];
  const int U = static_cast<int>(target.size());
  const std::size_t U1 = static_cast<std::size_t>(U + 1);
  const std::size_t K = static_cast<std::size_t>(shape[2]);
  auto at = [&](int t, int u, int k) -> std::size_t {
    return (static_cast<std::size_t>(t) * U1 + static_cast<std::size_t>(u)) * K +
           static_cast<std::size_t>(k);
  };

  // alpha(t,u): log-probability of consuming t frames and emitting u labels
  std::vector<Tape::Id> alpha(U1);
  for (int t = 0; t < T; ++t) {
    std::vector<Tape::Id> next(U1);
    for (int u = 0; u <= U; ++u) {
      Tape::Id from_blank = -1;
      if (t > 0)
        from_blank = tape.add(alpha[u], tape.pick(log_probs, at(t - 1, u, blank_id)));
      Tape::Id from_label = -1;
      if (u > 0)
        from_label =
            tape.add(next[u - 1], tape.pick(log_probs, at(t, u - 1, target[u - 1])));
      if (t == 0 && u == 0)
        next[u] = tape.constant_scalar(0.0);
      else if (from_blank < 0)
        next[u] = from_label;
      else if (from_label < 0)
        next[u] = from_blank;
      else
        next[u] = tape.logaddexp(from_blank, from_label);
    }
    alpha = std::move(next);
  }
  return tape.neg(tape.add(alpha[U], tape.pick(log_probs, at(T - 1, U, blank_id))));
}

double brute_force_log_loss(const Tensor& log_probs, const std::vector<int>& target,
                            int blank_id) {
  check_lattice(log_probs.shape, target, blank_id);
  const int T = log_probs.shape[0];
  const int U = static_cast<int>(target.size());
  if (T + U > 12) throw ConfigError("brute_force_log_loss: T + U must be <= 12");
  const std::size_t U1 = static_cast<std::size_t>(U + 1);
  const std::size_t K = static_cast<std::size_t>(log_probs.shape[2]);
  auto lp = [&](int t, int u, int k) {
    return log_probs.data[(static_cast<std::size_t>(t) * U1 + static_cast<std::size_t>(u)) *
                              K +
                          static_cast<std::size_t>(k)];
  };

  // Walk every interleaving of T-1 interior blanks with U labels; the final
  // move is always the blank exit from (T-1, U).
  std::vector<double> path_scores;
  struct Frame {
    int t, u;
    double acc;
  };
  std::vector<Frame> stack{{0, 0, 0.0}};
  while (!stack.empty()) {
    Frame f = stack.back();
    stack.pop_back();
    if (f.t == T - 1 && f.u == U) {
      path_scores.push_back(f.acc + lp(f.t, f.u, blank_id));
      continue;
    }
    if (f.t + 1 < T) stack.push_back({f.t + 1, f.u, f.acc + lp(f.t, f.u, blank_id)});
    if (f.u < U) stack.push_back({f.t, f.u + 1, f.acc + lp(f.t, f.u, target[f.u])});
  }

  double mx = path_scores[0];
  for (double s : path_scores) mx = std::max(mx, s);
  double sum = 0.0;
  for (double s : path_scores) sum += std::exp(s - mx);
  return -(mx + std::log(sum));
}

}  // namespace xferlab
