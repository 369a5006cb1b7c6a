#pragma once

#include <vector>

#include "xferlab/tensor.hpp"

namespace xferlab {

// Transducer negative log-likelihood over the alignment lattice.
//
// log_probs: [T, U+1, V+1] per-(frame, label-history) log-distributions with
// blank at index blank_id. The forward recursion runs in log space on the
// tape, so gradients flow back to log_probs (and from there into the model).
Tape::Id transducer_log_loss(Tape& tape, Tape::Id log_probs,
                             const std::vector<int>& target, int blank_id);

// Exhaustive-enumeration oracle: sums every monotonic alignment path (all U
// labels, T blanks, final-frame blank exit) and returns the negated logsumexp.
// Independent of the tape recursion on purpose; guarded to T + U <= 12.
double brute_force_log_loss(const Tensor& log_probs, const std::vector<int>& target,
                            int blank_id);

}  // namespace xferlab
