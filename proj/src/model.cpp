#include "xferlab/model.hpp"

#include <cmath>

namespace xferlab {

std::string to_string(AdapterPosition p) {
  switch (p) {
    case AdapterPosition::encoder: return "encoder";
    case AdapterPosition::decoder: return "decoder";
    case AdapterPosition::joint: return "joint";
  }
  throw ConfigError("bad adapter position");
}

AdapterPosition adapter_position_from_string(const std::string& s) {
  if (s == "encoder") return AdapterPosition::encoder;
  if (s == "decoder") return AdapterPosition::decoder;
  if (s == "joint") return AdapterPosition::joint;
  throw ConfigError("unknown adapter position: " + s);
}

nlohmann::json to_json(const AdapterSpec& s) {
  return nlohmann::json{{"position", to_string(s.position)},
                        {"hidden_dim", s.hidden_dim},
                        {"dropout", s.dropout},
                        {"stochastic_depth", s.stochastic_depth},
                        {"init_scale", s.init_scale}};
}

AdapterSpec adapter_spec_from_json(const nlohmann::json& j) {
  AdapterSpec s;
  s.position = adapter_position_from_string(j.at("position").get<std::string>());
  s.hidden_dim = j.at("hidden_dim").get<int>();
  s.dropout = j.at("dropout").get<double>();
  s.stochastic_depth = j.at("stochastic_depth").get<double>();
  s.init_scale = j.value("init_scale", 1e-2);
  if (s.hidden_dim < 1) throw ConfigError("adapter hidden_dim must be >= 1");
  if (s.dropout < 0 || s.dropout >= 1) throw ConfigError("adapter dropout must be in [0,1)");
  if (s.stochastic_depth < 0 || s.stochastic_depth > 1)
    throw ConfigError("adapter stochastic_depth must be in [0,1]");
  return s;
}

nlohmann::json to_json(const ModelConfig& c) {
  return nlohmann::json{{"feature_dim", c.feature_dim}, {"vocab_size", c.vocab_size},
                        {"d_model", c.d_model},         {"n_blocks", c.n_blocks},
                        {"n_heads", c.n_heads},         {"ffn_mult", c.ffn_mult},
                        {"lstm_hidden", c.lstm_hidden}, {"joint_hidden", c.joint_hidden}};
}

ModelConfig model_config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.feature_dim = j.value("feature_dim", c.feature_dim);
  c.vocab_size = j.value("vocab_size", c.vocab_size);
  c.d_model = j.value("d_model", c.d_model);
  c.n_blocks = j.value("n_blocks", c.n_blocks);
  c.n_heads = j.value("n_heads", c.n_heads);
  c.ffn_mult = j.value("ffn_mult", c.ffn_mult);
  c.lstm_hidden = j.value("lstm_hidden", c.lstm_hidden);
  c.joint_hidden = j.value("joint_hidden", c.joint_hidden);
  if (c.vocab_size < 2 || c.d_model < 1 || c.n_blocks < 1 || c.n_heads < 1 ||
      c.d_model % c.n_heads != 0)
    throw ConfigError("invalid model config");
  return c;
}

std::size_t adapter_param_count(int d_in, int hidden) {
  const std::size_t d = static_cast<std::size_t>(d_in);
  const std::size_t h = static_cast<std::size_t>(hidden);
  return 2 * d + (d * h + h) + (h * d + d);
}

Tape::Id adapter_forward(Tape& tape, Tape::Id x, const AdapterParams& p,
                         const AdapterRuntime& rt) {
  if (rt.train && rt.stochastic_depth > 0.0) {
    RngStream skip(rt.seed, rt.site + ".sdepth", rt.step);
    if (skip.uniform() < rt.stochastic_depth) return x;
  }
  Tape::Id h = tape.layer_norm(x, tape.leaf(*p.ln_gamma), tape.leaf(*p.ln_beta),
                               kLayerNormEps);
  h = tape.add_row(tape.matmul(h, tape.leaf(*p.w_down)), tape.leaf(*p.b_down));
  h = tape.swish(h);
  h = tape.add_row(tape.matmul(h, tape.leaf(*p.w_up)), tape.leaf(*p.b_up));
  if (rt.train && rt.dropout > 0.0)
    h = tape.dropout(h, rt.dropout, RngStream(rt.seed, rt.site + ".dropout", rt.step));
  return tape.add(x, h);
}

namespace {

Tensor init_uniform(std::vector<int> shape, double limit, RngStream rng) {
  Tensor t(std::move(shape));
  for (double& v : t.data) v = rng.uniform(-limit, limit);
  return t;
}

Tensor init_xavier(int fan_in, int fan_out, std::vector<int> shape, RngStream rng) {
  return init_uniform(std::move(shape), std::sqrt(6.0 / (fan_in + fan_out)), rng);
}

}  // namespace

TransducerModel::TransducerModel(ModelConfig cfg) : cfg_(cfg) {}

TransducerModel::TransducerModel(ModelConfig cfg, uint64_t init_seed) : cfg_(cfg) {
  register_base_params(init_seed);
  bind();
}

void TransducerModel::register_base_params(uint64_t seed) {
  const int d = cfg_.d_model;
  const int f = cfg_.ffn_mult * d;
  const int hid = cfg_.lstm_hidden;
  const int j = cfg_.joint_hidden;
  const int vk = cfg_.vocab_size + 1;

  auto lin = [&](const std::string& name, int in, int out) {
    store_.add(name + ".w", init_xavier(in, out, {in, out}, RngStream(seed, name + ".w")));
    store_.add(name + ".b", Tensor({out}));
  };
  auto norm = [&](const std::string& name, int dim) {
    store_.add(name + ".g", Tensor({dim}, 1.0));
    store_.add(name + ".b", Tensor({dim}));
  };

  lin("frontend", cfg_.feature_dim, d);
  for (int i = 0; i < cfg_.n_blocks; ++i) {
    const std::string p = "enc." + std::to_string(i) + ".";
    norm(p + "ln1", d);
    lin(p + "ffn1.in", d, f);
    lin(p + "ffn1.out", f, d);
    norm(p + "ln2", d);
    lin(p + "attn.q", d, d);
    lin(p + "attn.k", d, d);
    lin(p + "attn.v", d, d);
    lin(p + "attn.o", d, d);
    norm(p + "ln3", d);
    lin(p + "ffn2.in", d, f);
    lin(p + "ffn2.out", f, d);
    norm(p + "ln4", d);
  }
  store_.add("pred.embed",
             init_xavier(vk, d, {vk, d}, RngStream(seed, "pred.embed")));
  store_.add("pred.wx", init_xavier(d, 4 * hid, {d, 4 * hid}, RngStream(seed, "pred.wx")));
  store_.add("pred.wh",
             init_xavier(hid, 4 * hid, {hid, 4 * hid}, RngStream(seed, "pred.wh")));
  Tensor lb({4 * hid});
  for (int i = hid; i < 2 * hid; ++i) lb.data[i] = 1.0;  // forget-gate bias
  store_.add("pred.b", std::move(lb));
  lin("joint.enc", d, j);
  lin("joint.pred", hid, j);
  lin("joint.out", j, vk);
}

void TransducerModel::bind() {
  auto lin = [&](const std::string& name) {
    return Lin{&store_.get(name + ".w"), &store_.get(name + ".b")};
  };
  auto norm = [&](const std::string& name) {
    return Norm{&store_.get(name + ".g"), &store_.get(name + ".b")};
  };
  auto adapter = [&](const std::string& prefix) {
    return AdapterParams{&store_.get(prefix + ".ln.g"),   &store_.get(prefix + ".ln.b"),
                         &store_.get(prefix + ".down.w"), &store_.get(prefix + ".down.b"),
                         &store_.get(prefix + ".up.w"),   &store_.get(prefix + ".up.b")};
  };

  frontend_ = lin("frontend");
  blocks_.assign(static_cast<std::size_t>(cfg_.n_blocks), Block{});
  for (int i = 0; i < cfg_.n_blocks; ++i) {
    const std::string p = "enc." + std::to_string(i) + ".";
    Block& b = blocks_[static_cast<std::size_t>(i)];
    b.ln1 = norm(p + "ln1");
    b.ffn1_in = lin(p + "ffn1.in");
    b.ffn1_out = lin(p + "ffn1.out");
    b.ln2 = norm(p + "ln2");
    b.wq = lin(p + "attn.q");
    b.wk = lin(p + "attn.k");
    b.wv = lin(p + "attn.v");
    b.wo = lin(p + "attn.o");
    b.ln3 = norm(p + "ln3");
    b.ffn2_in = lin(p + "ffn2.in");
    b.ffn2_out = lin(p + "ffn2.out");
    b.ln4 = norm(p + "ln4");
  }
  embed_ = &store_.get("pred.embed");
  lstm_wx_ = &store_.get("pred.wx");
  lstm_wh_ = &store_.get("pred.wh");
  lstm_b_ = &store_.get("pred.b");
  joint_enc_ = lin("joint.enc");
  joint_pred_ = lin("joint.pred");
  joint_out_ = lin("joint.out");

  decoder_adapter_.reset();
  joint_adapter_.reset();
  decoder_spec_ = joint_spec_ = encoder_spec_ = nullptr;
  for (const AdapterSpec& s : adapters_) {
    switch (s.position) {
      case AdapterPosition::encoder:
        encoder_spec_ = &s;
        for (int i = 0; i < cfg_.n_blocks; ++i)
          blocks_[static_cast<std::size_t>(i)].adapter =
              adapter("adapter.encoder." + std::to_string(i));
        break;
      case AdapterPosition::decoder:
        decoder_spec_ = &s;
        decoder_adapter_ = adapter("adapter.decoder");
        break;
      case AdapterPosition::joint:
        joint_spec_ = &s;
        joint_adapter_ = adapter("adapter.joint");
        break;
    }
  }
}

bool TransducerModel::has_adapter(AdapterPosition p) const {
  for (const AdapterSpec& s : adapters_)
    if (s.position == p) return true;
  return false;
}

void TransducerModel::inject_adapters(const AdapterSpec& spec, uint64_t seed) {
  if (spec.hidden_dim < 1) throw ConfigError("adapter hidden_dim must be >= 1");
  if (has_adapter(spec.position))
    throw ConfigError("adapter already injected at position " + to_string(spec.position));

  const int d_in = spec.position == AdapterPosition::encoder   ? cfg_.d_model
                   : spec.position == AdapterPosition::decoder ? cfg_.lstm_hidden
                                                               : cfg_.joint_hidden;
  const int n_instances =
      spec.position == AdapterPosition::encoder ? cfg_.n_blocks : 1;
  for (int i = 0; i < n_instances; ++i) {
    const std::string prefix =
        spec.position == AdapterPosition::encoder
            ? "adapter.encoder." + std::to_string(i)
            : "adapter." + to_string(spec.position);
    store_.add(prefix + ".ln.g", Tensor({d_in}, 1.0));
    store_.add(prefix + ".ln.b", Tensor({d_in}));
    store_.add(prefix + ".down.w",
               init_uniform({d_in, spec.hidden_dim}, spec.init_scale,
                            RngStream(seed, prefix + ".down.w")));
    store_.add(prefix + ".down.b", Tensor({spec.hidden_dim}));
    // zero up-projection: the adapted forward is pointwise identical to the
    // base model until training moves these
    store_.add(prefix + ".up.w", Tensor({spec.hidden_dim, d_in}));
    store_.add(prefix + ".up.b", Tensor({d_in}));
  }
  adapters_.push_back(spec);
  bind();
}

Tape::Id TransducerModel::linear(Tape& tape, Tape::Id x, const Lin& l) {
  return tape.add_row(tape.matmul(x, tape.leaf(*l.w)), tape.leaf(*l.b));
}

AdapterRuntime TransducerModel::adapter_runtime(const AdapterSpec& spec,
                                                const std::string& site,
                                                const ForwardMode& mode) const {
  AdapterRuntime rt;
  rt.train = mode.train;
  rt.dropout = spec.dropout;
  rt.stochastic_depth = spec.stochastic_depth;
  rt.seed = mode.seed;
  rt.step = mode.step;
  rt.site = site;
  return rt;
}

Tape::Id TransducerModel::encode(Tape& tape, const Tensor& features,
                                 const ForwardMode& mode) {
  if (features.shape.size() != 2 || features.shape[1] != cfg_.feature_dim)
    throw ShapeError("encode: features must be [T, feature_dim]");
  if (features.shape[0] < 1) throw ShapeError("encode: need at least one frame");
  const int dh = cfg_.d_model / cfg_.n_heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));

  Tape::Id x = tape.constant(features.shape, features.data);
  x = linear(tape, x, frontend_);
  for (int bi = 0; bi < cfg_.n_blocks; ++bi) {
    Block& b = blocks_[static_cast<std::size_t>(bi)];
    // pre-norm FFN
    Tape::Id h = tape.layer_norm(x, tape.leaf(*b.ln1.g), tape.leaf(*b.ln1.b), kLayerNormEps);
    h = tape.swish(linear(tape, h, b.ffn1_in));
    h = linear(tape, h, b.ffn1_out);
    x = tape.add(x, h);
    // self-attention
    h = tape.layer_norm(x, tape.leaf(*b.ln2.g), tape.leaf(*b.ln2.b), kLayerNormEps);
    {
      Tape::Id q = linear(tape, h, b.wq);
      Tape::Id k = linear(tape, h, b.wk);
      Tape::Id v = linear(tape, h, b.wv);
      std::vector<Tape::Id> heads;
      for (int hd = 0; hd < cfg_.n_heads; ++hd) {
        const int j0 = hd * dh, j1 = (hd + 1) * dh;
        Tape::Id qh = tape.slice_last(q, j0, j1);
        Tape::Id kh = tape.slice_last(k, j0, j1);
        Tape::Id vh = tape.slice_last(v, j0, j1);
        Tape::Id p = tape.softmax(tape.scale(tape.matmul_nt(qh, kh), inv_sqrt));
        heads.push_back(tape.matmul(p, vh));
      }
      h = linear(tape, tape.concat_last(heads), b.wo);
    }
    x = tape.add(x, h);
    // post FFN
    h = tape.layer_norm(x, tape.leaf(*b.ln3.g), tape.leaf(*b.ln3.b), kLayerNormEps);
    h = tape.swish(linear(tape, h, b.ffn2_in));
    h = linear(tape, h, b.ffn2_out);
    x = tape.add(x, h);
    x = tape.layer_norm(x, tape.leaf(*b.ln4.g), tape.leaf(*b.ln4.b), kLayerNormEps);
    if (b.adapter)
      x = adapter_forward(tape, x, *b.adapter,
                          adapter_runtime(*encoder_spec_,
                                          "adapter.encoder." + std::to_string(bi), mode));
  }
  return x;
}

Tape::Id TransducerModel::lstm_step(Tape& tape, Tape::Id x_t, Tape::Id& h, Tape::Id& c) {
  const int hid = cfg_.lstm_hidden;
  Tape::Id gates = tape.add(
      tape.add_row(tape.matmul(x_t, tape.leaf(*lstm_wx_)), tape.leaf(*lstm_b_)),
      tape.matmul(h, tape.leaf(*lstm_wh_)));
  Tape::Id gi = tape.sigmoid(tape.slice_last(gates, 0, hid));
  Tape::Id gf = tape.sigmoid(tape.slice_last(gates, hid, 2 * hid));
  Tape::Id gg = tape.tanh(tape.slice_last(gates, 2 * hid, 3 * hid));
  Tape::Id go = tape.sigmoid(tape.slice_last(gates, 3 * hid, 4 * hid));
  c = tape.add(tape.mul(gf, c), tape.mul(gi, gg));
  h = tape.mul(go, tape.tanh(c));
  return h;
}

Tape::Id TransducerModel::predict(Tape& tape, const std::vector<int>& targets,
                                  const ForwardMode& mode) {
  std::vector<int> ids;
  ids.reserve(targets.size() + 1);
  ids.push_back(blank_id());  // start symbol
  for (int y : targets) {
    if (y < 0 || y >= cfg_.vocab_size) throw DataError("predict: token id out of range");
    ids.push_back(y);
  }
  Tape::Id emb = tape.embed(tape.leaf(*embed_), ids);
  Tape::Id h = tape.constant({1, cfg_.lstm_hidden},
                             std::vector<double>(static_cast<std::size_t>(cfg_.lstm_hidden)));
  Tape::Id c = tape.constant({1, cfg_.lstm_hidden},
                             std::vector<double>(static_cast<std::size_t>(cfg_.lstm_hidden)));
  std::vector<Tape::Id> outs;
  for (std::size_t u = 0; u < ids.size(); ++u) {
    Tape::Id x_t = tape.rows(emb, static_cast<int>(u), static_cast<int>(u) + 1);
    outs.push_back(lstm_step(tape, x_t, h, c));
  }
  Tape::Id pred = tape.stack_rows(outs);
  if (decoder_adapter_)
    pred = adapter_forward(tape, pred, *decoder_adapter_,
                           adapter_runtime(*decoder_spec_, "adapter.decoder", mode));
  return pred;
}

Tape::Id TransducerModel::forward(Tape& tape, const Tensor& features,
                                  const std::vector<int>& targets,
                                  const ForwardMode& mode) {
  Tape::Id enc = encode(tape, features, mode);
  Tape::Id pred = predict(tape, targets, mode);
  Tape::Id eproj = linear(tape, enc, joint_enc_);
  Tape::Id pproj = linear(tape, pred, joint_pred_);
  Tape::Id z = tape.tanh(tape.add_outer(eproj, pproj));
  if (joint_adapter_)
    z = adapter_forward(tape, z, *joint_adapter_,
                        adapter_runtime(*joint_spec_, "adapter.joint", mode));
  Tape::Id logits = linear(tape, z, joint_out_);
  return tape.log_softmax(logits);
}

std::vector<int> TransducerModel::greedy_decode(const Tensor& features,
                                                int max_symbols_per_frame) {
  if (max_symbols_per_frame < 1)
    throw ConfigError("greedy_decode: max_symbols_per_frame must be >= 1");
  Tape tape;
  const ForwardMode mode{};  // eval
  Tape::Id enc = encode(tape, features, mode);
  Tape::Id eproj = linear(tape, enc, joint_enc_);
  const int T = features.shape[0];

  Tape::Id h = tape.constant({1, cfg_.lstm_hidden},
                             std::vector<double>(static_cast<std::size_t>(cfg_.lstm_hidden)));
  Tape::Id c = tape.constant({1, cfg_.lstm_hidden},
                             std::vector<double>(static_cast<std::size_t>(cfg_.lstm_hidden)));
  auto advance = [&](int token) {
    Tape::Id x_t = tape.embed(tape.leaf(*embed_), {token});
    lstm_step(tape, x_t, h, c);
  };
  advance(blank_id());  // start symbol

  auto decoder_out = [&]() {
    Tape::Id out = h;
    if (decoder_adapter_)
      out = adapter_forward(tape, out, *decoder_adapter_,
                            adapter_runtime(*decoder_spec_, "adapter.decoder", mode));
    return linear(tape, out, joint_pred_);
  };

  std::vector<int> hyp;
  Tape::Id pproj = decoder_out();
  for (int t = 0; t < T; ++t) {
    Tape::Id erow = tape.rows(eproj, t, t + 1);
    for (int emitted = 0; emitted < max_symbols_per_frame; ++emitted) {
      Tape::Id z = tape.tanh(tape.add(erow, pproj));
      if (joint_adapter_)
        z = adapter_forward(tape, z, *joint_adapter_,
                            adapter_runtime(*joint_spec_, "adapter.joint", mode));
      const auto& logits = tape.val(linear(tape, z, joint_out_));
      int best = 0;
      for (std::size_t k = 1; k < logits.size(); ++k)
        if (logits[k] > logits[best]) best = static_cast<int>(k);
      if (best == blank_id()) break;
      hyp.push_back(best);
      advance(best);
      pproj = decoder_out();
    }
  }
  return hyp;
}

TransducerModel TransducerModel::clone() const {
  TransducerModel m(cfg_);
  m.store_ = store_.clone();
  m.adapters_ = adapters_;
  m.bind();
  return m;
}

void TransducerModel::save(const std::filesystem::path& path,
                           const nlohmann::json& extra) const {
  nlohmann::json header = extra;
  header["model"] = to_json(cfg_);
  nlohmann::json specs = nlohmann::json::array();
  for (const AdapterSpec& s : adapters_) specs.push_back(to_json(s));
  header["adapters"] = std::move(specs);
  save_checkpoint(path, store_, header);
}

TransducerModel TransducerModel::load(const std::filesystem::path& path) {
  Checkpoint ck = load_checkpoint(path);
  TransducerModel m(model_config_from_json(ck.header.at("model")));
  m.store_ = std::move(ck.store);
  for (const auto& j : ck.header.at("adapters"))
    m.adapters_.push_back(adapter_spec_from_json(j));
  m.bind();
  return m;
}

void freeze_base(ParamStore& store) {
  for (auto* e : store.entries())
    store.set_trainable(e->name, e->name.rfind("adapter.", 0) == 0);
}

BudgetCheck check_param_budget(const TransducerModel& model, const AdapterSpec& spec,
                               double budget_fraction) {
  if (budget_fraction <= 0 || budget_fraction >= 1)
    throw ConfigError("budget_fraction must be in (0,1)");
  if (spec.hidden_dim < 1) throw ConfigError("adapter hidden_dim must be >= 1");
  std::size_t base = 0;
  for (const auto* e : model.store().entries())
    if (e->name.rfind("adapter.", 0) != 0) base += e->tensor.numel();
  const ModelConfig& c = model.config();
  const int d_in = spec.position == AdapterPosition::encoder   ? c.d_model
                   : spec.position == AdapterPosition::decoder ? c.lstm_hidden
                                                               : c.joint_hidden;
  const int instances = spec.position == AdapterPosition::encoder ? c.n_blocks : 1;
  const std::size_t added =
      static_cast<std::size_t>(instances) * adapter_param_count(d_in, spec.hidden_dim);
  BudgetCheck out;
  out.fraction = static_cast<double>(added) / static_cast<double>(base);
  out.compliant = out.fraction <= budget_fraction;
  return out;
}

}  // namespace xferlab
