#include "xferlab/optim.hpp"

#include <algorithm>
#include <cmath>

namespace xferlab {

nlohmann::json to_json(const TrainConfig& c) {
  return nlohmann::json{
      {"total_steps", c.total_steps},
      {"warmup_fraction", c.warmup_fraction},
      {"lr_peak", c.lr_peak},
      {"batch_size", c.batch_size},
      {"seed", c.seed},
      {"mode", c.mode == TrainConfig::Mode::adapter ? "adapter" : "finetune"},
      {"weight_decay", c.weight_decay},
      {"clip_norm", c.clip_norm}};
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
  TrainConfig c;
  c.total_steps = j.at("total_steps").get<int>();
  c.warmup_fraction = j.value("warmup_fraction", 0.1);
  c.lr_peak = j.at("lr_peak").get<double>();
  c.batch_size = j.value("batch_size", 4);
  c.seed = j.value("seed", 0);
  const std::string mode = j.value("mode", "finetune");
  if (mode == "adapter")
    c.mode = TrainConfig::Mode::adapter;
  else if (mode == "finetune")
    c.mode = TrainConfig::Mode::finetune;
  else
    throw ConfigError("train config: unknown mode " + mode);
  c.weight_decay = j.value("weight_decay", 0.0);
  c.clip_norm = j.value("clip_norm", 5.0);
  if (c.total_steps < 1) throw ConfigError("train config: total_steps must be >= 1");
  if (c.warmup_fraction <= 0 || c.warmup_fraction >= 1)
    throw ConfigError("train config: warmup_fraction must be in (0,1)");
  if (c.batch_size < 1) throw ConfigError("train config: batch_size must be >= 1");
  return c;
}

double lr_at(int step, const TrainConfig& cfg) {
  if (step < 1 || step > cfg.total_steps) throw ConfigError("lr_at: step out of range");
  const double w = cfg.warmup_fraction * static_cast<double>(cfg.total_steps);
  const double s = static_cast<double>(step);
  return cfg.lr_peak * std::min(s / w, std::sqrt(w / s));
}

void AdamW::step(ParamStore& store, double lr) {
  ++t_;
  const double bc1 = 1.0 - std::pow(hyper_.beta1, t_);
  const double bc2 = 1.0 - std::pow(hyper_.beta2, t_);
  for (auto* e : store.entries()) {
    if (!e->trainable) continue;
    Tensor& p = e->tensor;
    p.ensure_grad();
    Moments& mo = moments_[e->name];
    if (mo.m.size() != p.numel()) {
      mo.m.assign(p.numel(), 0.0);
      mo.v.assign(p.numel(), 0.0);
    }
    for (std::size_t i = 0; i < p.numel(); ++i) {
      const double g = p.grad[i];
      if (!std::isfinite(g))
        throw NumericError("non-finite gradient in parameter " + e->name);
      mo.m[i] = hyper_.beta1 * mo.m[i] + (1.0 - hyper_.beta1) * g;
      mo.v[i] = hyper_.beta2 * mo.v[i] + (1.0 - hyper_.beta2) * g * g;
      const double mhat = mo.m[i] / bc1;
      const double vhat = mo.v[i] / bc2;
      p.data[i] -= lr * (mhat / (std::sqrt(vhat) + hyper_.eps));
      if (hyper_.weight_decay > 0.0) p.data[i] -= lr * hyper_.weight_decay * p.data[i];
    }
  }
}

double clip_grad_norm(ParamStore& store, double max_norm) {
  double sq = 0.0;
  for (auto* e : store.entries()) {
    if (!e->trainable || e->tensor.grad.empty()) continue;
    for (double g : e->tensor.grad) {
      if (!std::isfinite(g))
        throw NumericError("non-finite gradient in parameter " + e->name);
      sq += g * g;
    }
  }
  const double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0.0) {
    const double s = max_norm / norm;
    for (auto* e : store.entries()) {
      if (!e->trainable || e->tensor.grad.empty()) continue;
      for (double& g : e->tensor.grad) g *= s;
    }
  }
  return norm;
}

}  // namespace xferlab
