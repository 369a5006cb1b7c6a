#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "xferlab/param_store.hpp"
#include "xferlab/tensor.hpp"

#include "json.hpp"

namespace xferlab {

inline constexpr double kLayerNormEps = 1e-5;

enum class AdapterPosition { encoder, decoder, joint };

std::string to_string(AdapterPosition p);
AdapterPosition adapter_position_from_string(const std::string& s);

// One grid-search axis point: where the adapter goes and how it regularizes.
struct AdapterSpec {
  AdapterPosition position = AdapterPosition::encoder;
  int hidden_dim = 8;
  double dropout = 0.0;
  double stochastic_depth = 0.0;
  double init_scale = 1e-2;
};

nlohmann::json to_json(const AdapterSpec& s);
AdapterSpec adapter_spec_from_json(const nlohmann::json& j);

struct ModelConfig {
  int feature_dim = 16;
  int vocab_size = 16;
  int d_model = 64;
  int n_blocks = 4;
  int n_heads = 4;
  int ffn_mult = 4;
  int lstm_hidden = 64;
  int joint_hidden = 64;
};

nlohmann::json to_json(const ModelConfig& c);
ModelConfig model_config_from_json(const nlohmann::json& j);

// Residual bottleneck: LN -> down-projection -> Swish -> up-projection, added
// back onto the input. Up-projection starts at zero, so a fresh adapter is
// exactly the identity.
struct AdapterParams {
  Tensor* ln_gamma = nullptr;
  Tensor* ln_beta = nullptr;
  Tensor* w_down = nullptr;
  Tensor* b_down = nullptr;
  Tensor* w_up = nullptr;
  Tensor* b_up = nullptr;
};

struct AdapterRuntime {
  bool train = false;
  double dropout = 0.0;
  double stochastic_depth = 0.0;
  uint64_t seed = 0;
  uint64_t step = 0;
  std::string site;  // rng stream key for this instance
};

// Train mode: skip the whole module with probability stochastic_depth, else
// apply with dropout on the bottleneck output. Eval mode: always apply,
// deterministic.
Tape::Id adapter_forward(Tape& tape, Tape::Id x, const AdapterParams& p,
                         const AdapterRuntime& rt);

// parameters added by one adapter instance on a d_in-wide activation
std::size_t adapter_param_count(int d_in, int hidden);

struct ForwardMode {
  bool train = false;
  uint64_t seed = 0;
  uint64_t step = 0;
};

// Encoder blocks (pre-norm FFN / self-attention / FFN with a final layer
// norm), single-layer LSTM prediction network, additive joint network.
// Adapters are injectable at the three positions: after each encoder block's
// final norm, on the prediction-network output, and on the joint hidden
// activation before the output projection.
class TransducerModel {
 public:
  TransducerModel(ModelConfig cfg, uint64_t init_seed);

  const ModelConfig& config() const { return cfg_; }
  int blank_id() const { return cfg_.vocab_size; }
  ParamStore& store() { return store_; }
  const ParamStore& store() const { return store_; }
  const std::vector<AdapterSpec>& adapters() const { return adapters_; }
  bool has_adapter(AdapterPosition p) const;

  // Installs adapter instances for spec.position: zero-initialized
  // up-projection keeps the model's function unchanged until training moves
  // the new weights. Throws ConfigError on duplicate injection.
  void inject_adapters(const AdapterSpec& spec, uint64_t seed);

  // features: [T, F]; targets: label ids in [0, V). Returns log-probs
  // [T, U+1, V+1], log-softmaxed over the last axis.
  Tape::Id forward(Tape& tape, const Tensor& features, const std::vector<int>& targets,
                   const ForwardMode& mode);

  Tape::Id encode(Tape& tape, const Tensor& features, const ForwardMode& mode);

  // Frame-synchronous greedy decoding: emit argmax symbols, advance the label
  // state on non-blank, advance the frame on blank or at the per-frame cap.
  std::vector<int> greedy_decode(const Tensor& features, int max_symbols_per_frame = 10);

  TransducerModel clone() const;

  void save(const std::filesystem::path& path,
            const nlohmann::json& extra = nlohmann::json::object()) const;
  static TransducerModel load(const std::filesystem::path& path);

 private:
  struct Lin {
    Tensor* w = nullptr;
    Tensor* b = nullptr;
  };
  struct Norm {
    Tensor* g = nullptr;
    Tensor* b = nullptr;
  };
  struct Block {
    Norm ln1;
    Lin ffn1_in, ffn1_out;
    Norm ln2;
    Lin wq, wk, wv, wo;
    Norm ln3;
    Lin ffn2_in, ffn2_out;
    Norm ln4;
    std::optional<AdapterParams> adapter;
  };

  explicit TransducerModel(ModelConfig cfg);  // params bound later
  void register_base_params(uint64_t seed);
  void bind();

  Tape::Id linear(Tape& tape, Tape::Id x, const Lin& l);
  Tape::Id predict(Tape& tape, const std::vector<int>& targets, const ForwardMode& mode);
  Tape::Id lstm_step(Tape& tape, Tape::Id x_t, Tape::Id& h, Tape::Id& c);
  AdapterRuntime adapter_runtime(const AdapterSpec& spec, const std::string& site,
                                 const ForwardMode& mode) const;

  ModelConfig cfg_;
  ParamStore store_;
  std::vector<AdapterSpec> adapters_;

  Lin frontend_;
  std::vector<Block> blocks_;
  Tensor* embed_ = nullptr;
  Tensor* lstm_wx_ = nullptr;
  Tensor* lstm_wh_ = nullptr;
  Tensor* lstm_b_ = nullptr;
  Lin joint_enc_, joint_pred_, joint_out_;
  std::optional<AdapterParams> decoder_adapter_;
  std::optional<AdapterParams> joint_adapter_;
  const AdapterSpec* decoder_spec_ = nullptr;
  const AdapterSpec* joint_spec_ = nullptr;
  const AdapterSpec* encoder_spec_ = nullptr;
};

// Marks every parameter without the "adapter." prefix non-trainable and every
// adapter parameter trainable.
void freeze_base(ParamStore& store);

struct BudgetCheck {
  bool compliant = false;
  double fraction = 0.0;  // added adapter params / base params
};
BudgetCheck check_param_budget(const TransducerModel& model, const AdapterSpec& spec,
                               double budget_fraction);

}  // namespace xferlab
