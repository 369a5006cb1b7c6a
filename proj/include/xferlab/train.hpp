#pragma once

#include <filesystem>
#include <vector>

#include "xferlab/datagen.hpp"
#include "xferlab/model.hpp"
#include "xferlab/optim.hpp"

namespace xferlab {

struct StepRecord {
  int step;
  double lr;
  double loss;
};

// One training run: sample a batch with replacement, forward + lattice loss,
// backward, clip, AdamW with the warmup/decay schedule. Deterministic in
// (cfg.seed, data, initial params).
//
// adapt() is the constrained-adaptation entry point: it accepts exactly one
// dataset handle — the new domain's training set — so original-domain data is
// structurally out of reach during adaptation. Adapter mode requires injected
// adapters and a frozen base and trains only "adapter." parameters; finetune
// mode marks every parameter trainable.
std::vector<StepRecord> adapt(TransducerModel& model,
                              const datagen::Dataset& new_domain_train,
                              const TrainConfig& cfg);

// Same loop without the adaptation contracts; used to train the base model.
std::vector<StepRecord> run_training(TransducerModel& model,
                                     const datagen::Dataset& train_data,
                                     const TrainConfig& cfg);

void write_step_log(const std::filesystem::path& path,
                    const std::vector<StepRecord>& log);

}  // namespace xferlab
