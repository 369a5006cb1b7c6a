#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "xferlab/access_log.hpp"
#include "xferlab/datagen.hpp"
#include "xferlab/metrics.hpp"
#include "xferlab/model.hpp"
#include "xferlab/train.hpp"

#include "json.hpp"

namespace xferlab::harness {

struct DomainConfig {
  datagen::DomainSpec spec;
  int n_train = 500;
  int n_eval = 200;
  uint64_t seed = 0;
};

struct GridAdapterAxes {
  std::vector<AdapterPosition> positions;
  // hidden dims per position name; a flat JSON array applies to every position
  std::map<std::string, std::vector<int>> hidden_dims;
  std::vector<double> dropout_rates;
  std::vector<double> stochastic_depth_rates;
  std::vector<int> step_counts;
  std::vector<double> learning_rates;
};

struct GridFinetuneAxes {
  std::vector<double> learning_rates;
  std::vector<int> step_counts;
};

struct GridSpec {
  GridAdapterAxes adapter;
  std::optional<GridFinetuneAxes> finetune;
  int trials = 5;
  uint64_t seed = 7;
  int batch_size = 4;
  double finetune_weight_decay = 1e-3;
  double adapter_weight_decay = 0.0;
};

struct HarnessConfig {
  ModelConfig model;
  std::filesystem::path data_root = "data";
  DomainConfig original;
  DomainConfig new_domain;
  double kappa = 3.0;
  double budget_fraction = 0.005;
  TrainConfig base_train;
  GridSpec grid;
  int decode_max_symbols = 10;

  std::filesystem::path original_train_dir() const { return data_root / "original" / "train"; }
  std::filesystem::path original_eval_dir() const { return data_root / "original" / "eval"; }
  std::filesystem::path new_train_dir() const { return data_root / "new" / "train"; }
  std::filesystem::path new_eval_dir() const { return data_root / "new" / "eval"; }

  SelectionConfig selection() const {
    return SelectionConfig{kappa, {"original"}, {"new"}};
  }
};

HarnessConfig config_from_json(const nlohmann::json& j);
HarnessConfig load_config(const std::filesystem::path& path);
nlohmann::json to_json(const HarnessConfig& cfg);

// One grid cell (or one `adapt` invocation): finetune or a positioned adapter
// plus its training budget.
struct CandidateSpec {
  bool finetune = false;
  AdapterSpec adapter{};
  int steps = 100;
  double lr = 1e-3;
  uint64_t seed = 0;

  std::string position_name() const {
    return finetune ? "finetune" : to_string(adapter.position);
  }
};

EvalReport evaluate_model(TransducerModel& model, const datagen::Dataset& set,
                          const std::string& dataset_id, int max_symbols = 10);

struct CandidateRun {
  TransducerModel model;  // adapted
  std::map<std::string, BeforeAfter> reports;
  std::vector<StepRecord> step_log;
  std::size_t trainable_params = 0;
};

// Clones the base, prepares the candidate (inject + freeze, or unfreeze all),
// adapts on the new-domain training set, evaluates after. The adaptation
// phase is instrumented via iolog.
CandidateRun run_candidate(const TransducerModel& base,
                           const datagen::Dataset& new_train,
                           const std::map<std::string, const datagen::Dataset*>& eval_sets,
                           const std::map<std::string, EvalReport>& before,
                           const CandidateSpec& cand, const HarnessConfig& cfg);

struct TrialResult {
  uint64_t seed = 0;
  std::map<std::string, BeforeAfter> reports;
  CandidateScore score;
  std::string error;  // non-empty marks a crashed trial
};

struct CellResult {
  std::string candidate_id;
  CandidateSpec spec;
  std::size_t trainable_params = 0;
  bool budget_compliant = true;
  std::vector<TrialResult> trials;
  std::map<std::string, BeforeAfter> mean_reports;  // over successful trials
  CandidateScore score;                             // scored on the means
  double mean_new_wer_after = 0.0;                  // unconstrained ranking key
  bool failed = false;
};

struct GridOutcome {
  std::vector<CellResult> cells;
  std::vector<int> ranking;  // indexes of non-failed cells in CSV order
  int constrained = -1;      // index into cells, -1 when all failed
  int unconstrained = -1;
};

std::vector<CandidateSpec> expand_grid(const GridSpec& grid);

// Cells run as independent jobs up to `jobs` threads; results and seeds are
// deterministic regardless of scheduling.
GridOutcome run_grid(const HarnessConfig& cfg, const TransducerModel& base,
                     const datagen::Dataset& new_train,
                     const std::map<std::string, const datagen::Dataset*>& eval_sets,
                     const std::map<std::string, EvalReport>& before, int jobs);

// Aggregates trials into mean reports and scores each cell; pure, so fixture
// tests can drive it with hand-written reports.
void score_cells(GridOutcome& outcome, const SelectionConfig& selection);

// Constrained winner maximizes the score; unconstrained winner maximizes
// new-domain improvement ignoring original-domain degradation. Ties prefer
// fewer trainable parameters, then fewer steps, then candidate id.
void select_winners(GridOutcome& outcome);

std::string ranking_csv(const GridOutcome& outcome);
nlohmann::json outcome_json(const GridOutcome& outcome);

bool path_under(const std::filesystem::path& p, const std::filesystem::path& dir);

// True when no file under `original_root` was opened while the thread was in
// the "adaptation" phase.
bool adaptation_isolated(const std::vector<iolog::Record>& records,
                         const std::filesystem::path& original_root);

int cmd_gen_data(const std::filesystem::path& config_path);
int cmd_train_base(const std::filesystem::path& config_path,
                   const std::filesystem::path& out_dir);
int cmd_adapt(const std::filesystem::path& config_path,
              const std::filesystem::path& base_ckpt, const CandidateSpec& cand,
              const std::filesystem::path& out_dir);
int cmd_grid(const std::filesystem::path& config_path,
             const std::filesystem::path& base_ckpt, int jobs,
             const std::filesystem::path& out_dir);
int cmd_evaluate(const std::filesystem::path& ckpt,
                 const std::vector<std::filesystem::path>& data_dirs,
                 const std::filesystem::path& out_file);

int run_cli(int argc, const char* const* argv);
int run_cli(const std::vector<std::string>& args);  // args[0] is the program name

}  // namespace xferlab::harness
