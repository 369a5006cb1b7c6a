#include "xferlab/train.hpp"

#include <cstdio>
#include <fstream>

#include "xferlab/rnnt_loss.hpp"

namespace xferlab {

std::vector<StepRecord> run_training(TransducerModel& model,
                                     const datagen::Dataset& train_data,
                                     const TrainConfig& cfg) {
  if (train_data.empty()) throw DataError("training data is empty");

  AdamW::Hyper hyper;
  hyper.weight_decay = cfg.weight_decay;
  AdamW opt(hyper);
  ParamStore& store = model.store();

  std::vector<StepRecord> log;
  log.reserve(static_cast<std::size_t>(cfg.total_steps));
  const int n = static_cast<int>(train_data.size());
  for (int step = 1; step <= cfg.total_steps; ++step) {
    RngStream batch_rng(cfg.seed, "batch", static_cast<uint64_t>(step));
    Tape tape;
    std::vector<Tape::Id> losses;
    losses.reserve(static_cast<std::size_t>(cfg.batch_size));
    for (int b = 0; b < cfg.batch_size; ++b) {
      const auto& utt =
          train_data.utts[static_cast<std::size_t>(batch_rng.uniform_int(0, n - 1))];
      ForwardMode mode{true, cfg.seed, static_cast<uint64_t>(step)};
      Tape::Id lp = model.forward(tape, utt.features, utt.tokens, mode);
      losses.push_back(transducer_log_loss(tape, lp, utt.tokens, model.blank_id()));
    }
    Tape::Id loss = tape.mean_scalars(losses);
    const double loss_value = tape.scalar_val(loss);

    const double lr = lr_at(step, cfg);
    store.zero_grads();
    tape.backward(loss);
    clip_grad_norm(store, cfg.clip_norm);
    opt.step(store, lr);
    log.push_back({step, lr, loss_value});
  }
  return log;
}

std::vector<StepRecord> adapt(TransducerModel& model,
                              const datagen::Dataset& new_domain_train,
                              const TrainConfig& cfg) {
  if (cfg.mode == TrainConfig::Mode::adapter) {
    if (model.adapters().empty())
      throw ConfigError("adapter-mode adaptation requires injected adapters");
    for (const auto* e : model.store().entries()) {
      const bool is_adapter = e->name.rfind("adapter.", 0) == 0;
      if (e->trainable != is_adapter)
        throw ConfigError("adapter-mode adaptation requires a frozen base (freeze_base)");
    }
  } else {
    for (auto* e : model.store().entries()) model.store().set_trainable(e->name, true);
  }
  return run_training(model, new_domain_train, cfg);
}

void write_step_log(const std::filesystem::path& path,
                    const std::vector<StepRecord>& log) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write step log: " + path.string());
  out << "step,lr,loss\n";
  char buf[96];
  for (const StepRecord& r : log) {
    std::snprintf(buf, sizeof(buf), "%d,%.9g,%.9g\n", r.step, r.lr, r.loss);
    out << buf;
  }
}

}  // namespace xferlab
