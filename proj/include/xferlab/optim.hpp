#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "xferlab/param_store.hpp"

#include "json.hpp"

namespace xferlab {

struct TrainConfig {
  enum class Mode { finetune, adapter };

  int total_steps = 100;
  double warmup_fraction = 0.1;
  double lr_peak = 1e-3;
  int batch_size = 4;
  uint64_t seed = 0;
  Mode mode = Mode::finetune;
  double weight_decay = 0.0;
  double clip_norm = 5.0;
};

nlohmann::json to_json(const TrainConfig& c);
TrainConfig train_config_from_json(const nlohmann::json& j);

// Linear warmup to lr_peak over warmup_fraction * total_steps, then
// inverse-square-root decay: lr = lr_peak * min(step/w, sqrt(w/step)).
double lr_at(int step, const TrainConfig& cfg);

// Decoupled-weight-decay Adam. Moment buffers exist only for trainable
// parameters; frozen parameters are never touched. Weight decay multiplies
// directly into the parameter (scaled by lr), never through the moments.
class AdamW {
 public:
  struct Hyper {
    double beta1 = 0.9;
    double beta2 = 0.98;
    double eps = 1e-9;
    double weight_decay = 0.0;
  };

  AdamW() = default;
  explicit AdamW(Hyper h) : hyper_(h) {}

  // Applies one update from the grads currently held by the trainable
  // tensors. Throws NumericError on a non-finite gradient.
  void step(ParamStore& store, double lr);

  int steps_taken() const { return t_; }

 private:
  struct Moments {
    std::vector<double> m, v;
  };
  Hyper hyper_{};
  std::unordered_map<std::string, Moments> moments_;
  int t_ = 0;
};

// Scales trainable grads so the global L2 norm is at most max_norm; returns
// the pre-clip norm. Throws NumericError if any gradient is non-finite.
double clip_grad_norm(ParamStore& store, double max_norm);

}  // namespace xferlab
