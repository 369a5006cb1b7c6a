#include "xferlab/harness.hpp"

#include <atomic>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <thread>

namespace xferlab::harness {

namespace {

DomainConfig domain_from_json(const nlohmann::json& j, const ModelConfig& model) {
  DomainConfig d;
  if (j.contains("spec")) d.spec = datagen::domain_spec_from_json(j.at("spec"));
  d.spec.vocab_size = model.vocab_size;
  d.spec.feature_dim = model.feature_dim;
  d.n_train = j.value("n_train", d.n_train);
  d.n_eval = j.value("n_eval", d.n_eval);
  d.seed = j.value("seed", d.seed);
  return d;
}

nlohmann::json domain_to_json(const DomainConfig& d) {
  return nlohmann::json{{"spec", datagen::to_json(d.spec)},
                        {"n_train", d.n_train},
                        {"n_eval", d.n_eval},
                        {"seed", d.seed}};
}

std::map<std::string, std::vector<int>> hidden_dims_from_json(
    const nlohmann::json& j, const std::vector<AdapterPosition>& positions) {
  std::map<std::string, std::vector<int>> out;
  if (j.is_array()) {
    const auto dims = j.get<std::vector<int>>();
    for (AdapterPosition p : positions) out[to_string(p)] = dims;
  } else if (j.is_object()) {
    for (auto it = j.begin(); it != j.end(); ++it)
      out[it.key()] = it.value().get<std::vector<int>>();
  } else {
    throw ConfigError("grid.adapter.hidden_dims must be an array or an object");
  }
  for (AdapterPosition p : positions)
    if (!out.count(to_string(p)) || out[to_string(p)].empty())
      throw ConfigError("grid.adapter.hidden_dims missing entry for " + to_string(p));
  return out;
}

}  // namespace

HarnessConfig config_from_json(const nlohmann::json& j) {
  HarnessConfig cfg;
  if (j.contains("model")) cfg.model = model_config_from_json(j.at("model"));

  const auto& data = j.at("data");
  cfg.data_root = data.value("root", std::string("data"));
  cfg.original = domain_from_json(data.at("original"), cfg.model);
  cfg.new_domain = domain_from_json(data.at("new"), cfg.model);

  if (j.contains("selection")) {
    cfg.kappa = j.at("selection").value("kappa", 3.0);
    cfg.budget_fraction = j.at("selection").value("budget_fraction", 0.005);
  }
  if (cfg.kappa <= 0) throw ConfigError("selection.kappa must be positive");

  cfg.base_train = train_config_from_json(j.at("base_train"));
  cfg.base_train.mode = TrainConfig::Mode::finetune;
  if (!j.at("base_train").contains("weight_decay")) cfg.base_train.weight_decay = 1e-3;

  const auto& g = j.at("grid");
  cfg.grid.trials = g.value("trials", 5);
  cfg.grid.seed = g.value("seed", 7);
  cfg.grid.batch_size = g.value("batch_size", 4);
  cfg.grid.finetune_weight_decay = g.value("finetune_weight_decay", 1e-3);
  cfg.grid.adapter_weight_decay = g.value("adapter_weight_decay", 0.0);
  if (cfg.grid.trials < 1) throw ConfigError("grid.trials must be >= 1");
  if (g.contains("adapter")) {
    const auto& a = g.at("adapter");
    for (const auto& p : a.at("positions"))
      cfg.grid.adapter.positions.push_back(
          adapter_position_from_string(p.get<std::string>()));
    cfg.grid.adapter.hidden_dims =
        hidden_dims_from_json(a.at("hidden_dims"), cfg.grid.adapter.positions);
    cfg.grid.adapter.dropout_rates = a.at("dropout_rates").get<std::vector<double>>();
    cfg.grid.adapter.stochastic_depth_rates =
        a.at("stochastic_depth_rates").get<std::vector<double>>();
    cfg.grid.adapter.step_counts = a.at("step_counts").get<std::vector<int>>();
    cfg.grid.adapter.learning_rates = a.at("learning_rates").get<std::vector<double>>();
  }
  if (g.contains("finetune")) {
    GridFinetuneAxes ft;
    ft.learning_rates = g.at("finetune").at("learning_rates").get<std::vector<double>>();
    ft.step_counts = g.at("finetune").at("step_counts").get<std::vector<int>>();
    cfg.grid.finetune = std::move(ft);
  }
  if (cfg.grid.adapter.positions.empty() && !cfg.grid.finetune)
    throw ConfigError("grid defines no candidates");

  cfg.decode_max_symbols = j.value("decode_max_symbols", 10);
  return cfg;
}

HarnessConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config: " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config is not valid JSON: " + std::string(e.what()));
  }
  try {
    return config_from_json(j);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config field error: " + std::string(e.what()));
  }
}

nlohmann::json to_json(const HarnessConfig& cfg) {
  nlohmann::json grid{{"trials", cfg.grid.trials},
                      {"seed", cfg.grid.seed},
                      {"batch_size", cfg.grid.batch_size},
                      {"finetune_weight_decay", cfg.grid.finetune_weight_decay},
                      {"adapter_weight_decay", cfg.grid.adapter_weight_decay}};
  if (!cfg.grid.adapter.positions.empty()) {
    nlohmann::json positions = nlohmann::json::array();
    for (AdapterPosition p : cfg.grid.adapter.positions) positions.push_back(to_string(p));
    grid["adapter"] = {{"positions", positions},
                       {"hidden_dims", cfg.grid.adapter.hidden_dims},
                       {"dropout_rates", cfg.grid.adapter.dropout_rates},
                       {"stochastic_depth_rates", cfg.grid.adapter.stochastic_depth_rates},
                       {"step_counts", cfg.grid.adapter.step_counts},
                       {"learning_rates", cfg.grid.adapter.learning_rates}};
  }
  if (cfg.grid.finetune)
    grid["finetune"] = {{"learning_rates", cfg.grid.finetune->learning_rates},
                        {"step_counts", cfg.grid.finetune->step_counts}};
  return nlohmann::json{
      {"model", to_json(cfg.model)},
      {"data",
       {{"root", cfg.data_root.string()},
        {"original", domain_to_json(cfg.original)},
        {"new", domain_to_json(cfg.new_domain)}}},
      {"selection", {{"kappa", cfg.kappa}, {"budget_fraction", cfg.budget_fraction}}},
      {"base_train", to_json(cfg.base_train)},
      {"grid", grid},
      {"decode_max_symbols", cfg.decode_max_symbols}};
}

EvalReport evaluate_model(TransducerModel& model, const datagen::Dataset& set,
                          const std::string& dataset_id, int max_symbols) {
  if (set.empty()) throw DataError("evaluate: dataset " + dataset_id + " is empty");
  std::vector<std::vector<int>> refs, hyps;
  refs.reserve(set.size());
  hyps.reserve(set.size());
  bool all_single = true;
  for (const auto& utt : set.utts) {
    for (int tok : utt.tokens)
      if (tok < 0 || tok >= model.config().vocab_size)
        throw DataError("evaluate: dataset vocabulary exceeds checkpoint vocab_size");
    refs.push_back(utt.tokens);
    hyps.push_back(model.greedy_decode(utt.features, max_symbols));
    all_single = all_single && utt.tokens.size() == 1;
  }
  EvalReport r;
  r.dataset_id = dataset_id;
  r.wer = wer(refs, hyps, &r.n_words, &r.n_errors);
  if (all_single) {
    std::vector<int> labels;
    labels.reserve(refs.size());
    for (const auto& ref : refs) labels.push_back(ref[0]);
    r.keyword_accuracy = keyword_accuracy(labels, hyps);
  }
  return r;
}

CandidateRun run_candidate(const TransducerModel& base,
                           const datagen::Dataset& new_train,
                           const std::map<std::string, const datagen::Dataset*>& eval_sets,
                           const std::map<std::string, EvalReport>& before,
                           const CandidateSpec& cand, const HarnessConfig& cfg) {
  CandidateRun run{base.clone(), {}, {}, 0};

  TrainConfig tc;
  tc.total_steps = cand.steps;
  tc.lr_peak = cand.lr;
  tc.batch_size = cfg.grid.batch_size;
  tc.seed = cand.seed;
  if (cand.finetune) {
    tc.mode = TrainConfig::Mode::finetune;
    tc.weight_decay = cfg.grid.finetune_weight_decay;
  } else {
    tc.mode = TrainConfig::Mode::adapter;
    tc.weight_decay = cfg.grid.adapter_weight_decay;
    run.model.inject_adapters(cand.adapter, cand.seed);
    freeze_base(run.model.store());
  }
  {
    iolog::PhaseScope phase("adaptation");
    run.step_log = adapt(run.model, new_train, tc);
  }
  run.trainable_params = run.model.store().trainable_params();

  iolog::PhaseScope phase("evaluation");
  for (const auto& [id, set] : eval_sets) {
    BeforeAfter ba;
    ba.before = before.at(id);
    ba.after = evaluate_model(run.model, *set, id, cfg.decode_max_symbols);
    run.reports.emplace(id, std::move(ba));
  }
  return run;
}

std::vector<CandidateSpec> expand_grid(const GridSpec& grid) {
  std::vector<CandidateSpec> cells;
  if (grid.finetune) {
    for (double lr : grid.finetune->learning_rates)
      for (int steps : grid.finetune->step_counts) {
        CandidateSpec c;
        c.finetune = true;
        c.steps = steps;
        c.lr = lr;
        cells.push_back(c);
      }
  }
  const GridAdapterAxes& a = grid.adapter;
  for (AdapterPosition pos : a.positions)
    for (int hidden : a.hidden_dims.at(to_string(pos)))
      for (double dropout : a.dropout_rates)
        for (double sdepth : a.stochastic_depth_rates)
          for (int steps : a.step_counts)
            for (double lr : a.learning_rates) {
              CandidateSpec c;
              c.adapter.position = pos;
              c.adapter.hidden_dim = hidden;
              c.adapter.dropout = dropout;
              c.adapter.stochastic_depth = sdepth;
              c.steps = steps;
              c.lr = lr;
              cells.push_back(c);
            }
  if (cells.empty()) throw ConfigError("grid expansion produced no candidates");
  return cells;
}

namespace {

std::string make_candidate_id(std::size_t index, const CandidateSpec& c) {
  char buf[128];
  if (c.finetune)
    std::snprintf(buf, sizeof(buf), "c%03zu-finetune-s%d-lr%g", index, c.steps, c.lr);
  else
    std::snprintf(buf, sizeof(buf), "c%03zu-%s-h%d-d%g-sd%g-s%d-lr%g", index,
                  to_string(c.adapter.position).c_str(), c.adapter.hidden_dim,
                  c.adapter.dropout, c.adapter.stochastic_depth, c.steps, c.lr);
  return buf;
}

double mean_new_after(const CellResult& cell,
                      const std::vector<std::string>& new_datasets) {
  double acc = 0.0;
  for (const auto& id : new_datasets) acc += cell.mean_reports.at(id).after.wer;
  return acc / static_cast<double>(new_datasets.size());
}

}  // namespace

void score_cells(GridOutcome& outcome, const SelectionConfig& selection) {
  for (CellResult& cell : outcome.cells) {
    std::vector<const TrialResult*> good;
    for (TrialResult& t : cell.trials) {
      if (!t.error.empty()) continue;
      t.score = score(t.reports, selection);
      good.push_back(&t);
    }
    cell.failed = good.empty();
    if (cell.failed) continue;

    cell.mean_reports.clear();
    for (const auto& [id, ba0] : good.front()->reports) {
      BeforeAfter mean = ba0;
      double before_wer = 0.0, after_wer = 0.0;
      for (const TrialResult* t : good) {
        before_wer += t->reports.at(id).before.wer;
        after_wer += t->reports.at(id).after.wer;
      }
      mean.before.wer = before_wer / static_cast<double>(good.size());
      mean.after.wer = after_wer / static_cast<double>(good.size());
      cell.mean_reports.emplace(id, std::move(mean));
    }
    cell.score = score(cell.mean_reports, selection);
    cell.mean_new_wer_after = mean_new_after(cell, selection.new_datasets);
  }
}

void select_winners(GridOutcome& outcome) {
  auto tiebreak = [&](const CellResult& a, const CellResult& b) {
    if (a.trainable_params != b.trainable_params)
      return a.trainable_params < b.trainable_params;
    if (a.spec.steps != b.spec.steps) return a.spec.steps < b.spec.steps;
    return a.candidate_id < b.candidate_id;
  };
  auto by_score = [&](int lhs, int rhs) {
    const CellResult& a = outcome.cells[static_cast<std::size_t>(lhs)];
    const CellResult& b = outcome.cells[static_cast<std::size_t>(rhs)];
    if (a.score.score != b.score.score) return a.score.score > b.score.score;
    return tiebreak(a, b);
  };
  auto by_new_wer = [&](int lhs, int rhs) {
    const CellResult& a = outcome.cells[static_cast<std::size_t>(lhs)];
    const CellResult& b = outcome.cells[static_cast<std::size_t>(rhs)];
    if (a.mean_new_wer_after != b.mean_new_wer_after)
      return a.mean_new_wer_after < b.mean_new_wer_after;
    return tiebreak(a, b);
  };

  outcome.constrained = outcome.unconstrained = -1;
  outcome.ranking.clear();
  for (std::size_t i = 0; i < outcome.cells.size(); ++i) {
    if (outcome.cells[i].failed) continue;
    const int idx = static_cast<int>(i);
    outcome.ranking.push_back(idx);
    if (outcome.constrained < 0 || by_score(idx, outcome.constrained))
      outcome.constrained = idx;
    if (outcome.unconstrained < 0 || by_new_wer(idx, outcome.unconstrained))
      outcome.unconstrained = idx;
  }
  std::sort(outcome.ranking.begin(), outcome.ranking.end(), by_score);
}

GridOutcome run_grid(const HarnessConfig& cfg, const TransducerModel& base,
                     const datagen::Dataset& new_train,
                     const std::map<std::string, const datagen::Dataset*>& eval_sets,
                     const std::map<std::string, EvalReport>& before, int jobs) {
  GridOutcome outcome;
  const auto cells = expand_grid(cfg.grid);
  outcome.cells.resize(cells.size());
  for (std::size_t i = 0; i < cells.size(); ++i) {
    CellResult& cell = outcome.cells[i];
    cell.spec = cells[i];
    cell.candidate_id = make_candidate_id(i, cells[i]);
    if (cells[i].finetune) {
      cell.trainable_params = base.store().total_params();
    } else {
      cell.budget_compliant =
          check_param_budget(base, cells[i].adapter, cfg.budget_fraction).compliant;
      const ModelConfig& mc = base.config();
      const int d_in = cells[i].adapter.position == AdapterPosition::encoder
                           ? mc.d_model
                           : cells[i].adapter.position == AdapterPosition::decoder
                                 ? mc.lstm_hidden
                                 : mc.joint_hidden;
      const int instances =
          cells[i].adapter.position == AdapterPosition::encoder ? mc.n_blocks : 1;
      cell.trainable_params = static_cast<std::size_t>(instances) *
                              adapter_param_count(d_in, cells[i].adapter.hidden_dim);
    }
    cell.trials.resize(static_cast<std::size_t>(cfg.grid.trials));
    for (int t = 0; t < cfg.grid.trials; ++t)
      cell.trials[static_cast<std::size_t>(t)].seed =
          RngStream(cfg.grid.seed, "trial." + cell.candidate_id,
                    static_cast<uint64_t>(t))
              .next_u64();
  }

  struct Task {
    std::size_t cell;
    int trial;
  };
  std::vector<Task> tasks;
  for (std::size_t i = 0; i < cells.size(); ++i)
    for (int t = 0; t < cfg.grid.trials; ++t) tasks.push_back({i, t});

  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    while (true) {
      const std::size_t k = next.fetch_add(1);
      if (k >= tasks.size()) break;
      CellResult& cell = outcome.cells[tasks[k].cell];
      TrialResult& trial = cell.trials[static_cast<std::size_t>(tasks[k].trial)];
      CandidateSpec cand = cell.spec;
      cand.seed = trial.seed;
      try {
        CandidateRun run = run_candidate(base, new_train, eval_sets, before, cand, cfg);
        trial.reports = std::move(run.reports);
      } catch (const std::exception& e) {
        trial.error = e.what();
      }
    }
  };

  const int n_jobs =
      std::max(1, std::min<int>(jobs, static_cast<int>(tasks.size())));
  if (n_jobs == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < n_jobs; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }

  score_cells(outcome, cfg.selection());
  select_winners(outcome);
  return outcome;
}

std::string ranking_csv(const GridOutcome& outcome) {
  std::string csv =
      "candidate_id,position,hidden_dim,dropout,stochastic_depth,steps,lr,"
      "o_scale,a_werr,score,kappa_violated\n";
  char buf[256];
  for (int idx : outcome.ranking) {
    const CellResult& c = outcome.cells[static_cast<std::size_t>(idx)];
    const bool ft = c.spec.finetune;
    std::snprintf(buf, sizeof(buf), "%s,%s,%d,%.6g,%.6g,%d,%.6g,%.6f,%.6f,%.6f,%d\n",
                  c.candidate_id.c_str(), c.spec.position_name().c_str(),
                  ft ? 0 : c.spec.adapter.hidden_dim, ft ? 0.0 : c.spec.adapter.dropout,
                  ft ? 0.0 : c.spec.adapter.stochastic_depth, c.spec.steps, c.spec.lr,
                  c.score.o_scale, c.score.a_werr, c.score.score,
                  c.score.kappa_violated ? 1 : 0);
    csv += buf;
  }
  return csv;
}

namespace {

nlohmann::json reports_json(const std::map<std::string, BeforeAfter>& reports) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [id, ba] : reports)
    j[id] = {{"before", to_json(ba.before)}, {"after", to_json(ba.after)}};
  return j;
}

nlohmann::json cell_json(const CellResult& c) {
  nlohmann::json j{{"candidate_id", c.candidate_id},
                   {"position", c.spec.position_name()},
                   {"steps", c.spec.steps},
                   {"lr", c.spec.lr},
                   {"trainable_params", c.trainable_params},
                   {"budget_compliant", c.budget_compliant},
                   {"failed", c.failed}};
  if (!c.spec.finetune) j["adapter"] = to_json(c.spec.adapter);
  if (!c.failed) {
    j["score"] = to_json(c.score);
    j["mean_reports"] = reports_json(c.mean_reports);
    j["mean_new_wer_after"] = c.mean_new_wer_after;
  }
  nlohmann::json trials = nlohmann::json::array();
  for (const TrialResult& t : c.trials) {
    nlohmann::json tj{{"seed", t.seed}};
    if (t.error.empty()) {
      tj["reports"] = reports_json(t.reports);
      tj["score"] = to_json(t.score);
    } else {
      tj["error"] = t.error;
    }
    trials.push_back(std::move(tj));
  }
  j["trials"] = std::move(trials);
  return j;
}

}  // namespace

nlohmann::json outcome_json(const GridOutcome& outcome) {
  nlohmann::json cells = nlohmann::json::array();
  for (const CellResult& c : outcome.cells) cells.push_back(cell_json(c));
  nlohmann::json j{{"cells", std::move(cells)}};
  j["constrained_winner"] =
      outcome.constrained >= 0
          ? nlohmann::json(outcome.cells[static_cast<std::size_t>(outcome.constrained)]
                               .candidate_id)
          : nlohmann::json();
  j["unconstrained_winner"] =
      outcome.unconstrained >= 0
          ? nlohmann::json(outcome.cells[static_cast<std::size_t>(outcome.unconstrained)]
                               .candidate_id)
          : nlohmann::json();
  return j;
}

bool path_under(const std::filesystem::path& p, const std::filesystem::path& dir) {
  std::string sp = std::filesystem::absolute(p).lexically_normal().string();
  std::string sd = std::filesystem::absolute(dir).lexically_normal().string();
  while (!sd.empty() && sd.back() == std::filesystem::path::preferred_separator)
    sd.pop_back();
  if (sp == sd) return true;
  return sp.size() > sd.size() && sp.compare(0, sd.size(), sd) == 0 &&
         sp[sd.size()] == std::filesystem::path::preferred_separator;
}

bool adaptation_isolated(const std::vector<iolog::Record>& records,
                         const std::filesystem::path& original_root) {
  for (const auto& r : records)
    if (r.phase == "adaptation" && path_under(r.path, original_root)) return false;
  return true;
}

namespace {

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc | std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
}

void write_json(const std::filesystem::path& path, const nlohmann::json& j) {
  write_text(path, j.dump(2) + "\n");
}

nlohmann::json access_log_json() {
  nlohmann::json j = nlohmann::json::array();
  for (const auto& r : iolog::snapshot()) j.push_back({{"phase", r.phase}, {"path", r.path}});
  return j;
}

struct LoadedEvalSets {
  datagen::Dataset original, new_domain;
  std::map<std::string, const datagen::Dataset*> map() const {
    return {{"original", &original}, {"new", &new_domain}};
  }
};

LoadedEvalSets load_eval_sets(const HarnessConfig& cfg) {
  LoadedEvalSets sets;
  sets.original = datagen::read_dataset(cfg.original_eval_dir());
  sets.new_domain = datagen::read_dataset(cfg.new_eval_dir());
  return sets;
}

std::map<std::string, EvalReport> evaluate_all(
    TransducerModel& model, const std::map<std::string, const datagen::Dataset*>& sets,
    int max_symbols) {
  iolog::PhaseScope phase("evaluation");
  std::map<std::string, EvalReport> out;
  for (const auto& [id, set] : sets) out.emplace(id, evaluate_model(model, *set, id, max_symbols));
  return out;
}

}  // namespace

int cmd_gen_data(const std::filesystem::path& config_path) {
  const HarnessConfig cfg = load_config(config_path);
  const auto orig =
      datagen::generate_domain(cfg.original.spec, cfg.original.n_train,
                               cfg.original.n_eval, cfg.original.seed);
  datagen::write_dataset(orig.train, cfg.original_train_dir());
  datagen::write_dataset(orig.eval, cfg.original_eval_dir());
  const auto shifted =
      datagen::generate_domain(cfg.new_domain.spec, cfg.new_domain.n_train,
                               cfg.new_domain.n_eval, cfg.new_domain.seed);
  datagen::write_dataset(shifted.train, cfg.new_train_dir());
  datagen::write_dataset(shifted.eval, cfg.new_eval_dir());
  std::cout << "wrote " << orig.train.size() << "+" << orig.eval.size()
            << " original and " << shifted.train.size() << "+" << shifted.eval.size()
            << " new-domain utterances under " << cfg.data_root.string() << "\n";
  return 0;
}

int cmd_train_base(const std::filesystem::path& config_path,
                   const std::filesystem::path& out_dir) {
  const HarnessConfig cfg = load_config(config_path);
  std::filesystem::create_directories(out_dir);
  const datagen::Dataset train = datagen::read_dataset(cfg.original_train_dir());

  TransducerModel model(cfg.model, cfg.base_train.seed);
  const auto log = run_training(model, train, cfg.base_train);
  write_step_log(out_dir / "steps.csv", log);
  model.save(out_dir / "base.ckpt");

  const LoadedEvalSets sets = load_eval_sets(cfg);
  const auto reports = evaluate_all(model, sets.map(), cfg.decode_max_symbols);
  nlohmann::json rj = nlohmann::json::object();
  for (const auto& [id, r] : reports) rj[id] = to_json(r);
  write_json(out_dir / "reports.json", rj);
  for (const auto& [id, r] : reports)
    std::cout << id << ": WER " << r.wer << "% (" << r.n_errors << "/" << r.n_words
              << ")\n";
  return 0;
}

int cmd_adapt(const std::filesystem::path& config_path,
              const std::filesystem::path& base_ckpt, const CandidateSpec& cand,
              const std::filesystem::path& out_dir) {
  const HarnessConfig cfg = load_config(config_path);
  std::filesystem::create_directories(out_dir);
  TransducerModel base = TransducerModel::load(base_ckpt);

  const LoadedEvalSets sets = load_eval_sets(cfg);
  const auto before = evaluate_all(base, sets.map(), cfg.decode_max_symbols);

  datagen::Dataset new_train;
  {
    iolog::PhaseScope phase("adaptation");
    new_train = datagen::read_dataset(cfg.new_train_dir());
  }
  CandidateRun run = run_candidate(base, new_train, sets.map(), before, cand, cfg);

  write_step_log(out_dir / "steps.csv", run.step_log);
  run.model.save(out_dir / "adapted.ckpt");
  write_json(out_dir / "reports.json", reports_json(run.reports));
  const CandidateScore cs = score(run.reports, cfg.selection());
  nlohmann::json sj = to_json(cs);
  sj["position"] = cand.position_name();
  sj["steps"] = cand.steps;
  sj["lr"] = cand.lr;
  sj["seed"] = cand.seed;
  sj["trainable_params"] = run.trainable_params;
  if (!cand.finetune) {
    sj["adapter"] = to_json(cand.adapter);
    sj["budget"] = check_param_budget(base, cand.adapter, cfg.budget_fraction).fraction;
  }
  write_json(out_dir / "score.json", sj);
  write_json(out_dir / "access_log.json", access_log_json());

  if (!adaptation_isolated(iolog::snapshot(), cfg.data_root / "original"))
    throw std::logic_error("adaptation phase touched original-domain files");
  std::cout << "score " << cs.score << " (o_scale " << cs.o_scale << ", a_werr "
            << cs.a_werr << ", kappa_violated " << cs.kappa_violated << ")\n";
  return 0;
}

int cmd_grid(const std::filesystem::path& config_path,
             const std::filesystem::path& base_ckpt, int jobs,
             const std::filesystem::path& out_dir) {
  const HarnessConfig cfg = load_config(config_path);
  std::filesystem::create_directories(out_dir);
  TransducerModel base = TransducerModel::load(base_ckpt);

  const LoadedEvalSets sets = load_eval_sets(cfg);
  const auto before = evaluate_all(base, sets.map(), cfg.decode_max_symbols);
  const datagen::Dataset new_train = datagen::read_dataset(cfg.new_train_dir());

  const GridOutcome outcome = run_grid(cfg, base, new_train, sets.map(), before, jobs);
  write_text(out_dir / "ranking.csv", ranking_csv(outcome));
  write_json(out_dir / "outcome.json", outcome_json(outcome));

  std::cout << ranking_csv(outcome);
  if (outcome.constrained >= 0)
    std::cout << "constrained winner: "
              << outcome.cells[static_cast<std::size_t>(outcome.constrained)].candidate_id
              << "\n";
  if (outcome.unconstrained >= 0)
    std::cout << "unconstrained winner: "
              << outcome.cells[static_cast<std::size_t>(outcome.unconstrained)]
                     .candidate_id
              << "\n";
  return 0;
}

int cmd_evaluate(const std::filesystem::path& ckpt,
                 const std::vector<std::filesystem::path>& data_dirs,
                 const std::filesystem::path& out_file) {
  TransducerModel model = TransducerModel::load(ckpt);
  iolog::PhaseScope phase("evaluation");
  nlohmann::json rj = nlohmann::json::array();
  std::string csv = "dataset_id,wer,n_words,n_errors,keyword_accuracy\n";
  char buf[256];
  for (const auto& dir : data_dirs) {
    const datagen::Dataset set = datagen::read_dataset(dir);
    const EvalReport r = evaluate_model(model, set, dir.string());
    rj.push_back(to_json(r));
    std::snprintf(buf, sizeof(buf), "%s,%.6f,%ld,%ld,%.6f\n", r.dataset_id.c_str(), r.wer,
                  r.n_words, r.n_errors, r.keyword_accuracy);
    csv += buf;
    std::cout << r.dataset_id << ": WER " << r.wer << "%\n";
  }
  write_json(out_file, rj);
  std::filesystem::path csv_path = out_file;
  csv_path.replace_extension(".csv");
  write_text(csv_path, csv);
  return 0;
}

}  // namespace xferlab::harness
