#include <iostream>
#include <string>
#include <vector>

#include "xferlab/harness.hpp"

#include "CLI11.hpp"

namespace xferlab::harness {

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitNumeric = 4;

int dispatch(const std::vector<std::string>& args) {
  CLI::App app{"xferlab - constrained domain adaptation lab for neural transducers"};
  app.require_subcommand(1);

  std::string config, out, base, ckpt;
  std::vector<std::string> data_dirs;
  int jobs = 1;
  CandidateSpec cand;
  std::string position = "encoder";
  int hidden = 8;
  double dropout = 0.0, sdepth = 0.0, lr = 1e-3;
  int steps = 100;
  uint64_t seed = 0;

  auto* gen = app.add_subcommand("gen-data", "generate the synthetic domains");
  gen->add_option("--config", config, "config JSON")->required();

  auto* tb = app.add_subcommand("train-base", "train the base model on the original domain");
  tb->add_option("--config", config, "config JSON")->required();
  tb->add_option("--out", out, "output directory")->required();

  auto* ad = app.add_subcommand("adapt", "adapt one candidate on the new domain");
  ad->add_option("--config", config, "config JSON")->required();
  ad->add_option("--base", base, "base checkpoint")->required();
  ad->add_option("--position", position, "encoder|decoder|joint|finetune")->required();
  ad->add_option("--hidden", hidden, "adapter hidden dim");
  ad->add_option("--dropout", dropout, "adapter dropout rate");
  ad->add_option("--sdepth", sdepth, "adapter stochastic depth rate");
  ad->add_option("--steps", steps, "training steps")->required();
  ad->add_option("--lr", lr, "peak learning rate")->required();
  ad->add_option("--seed", seed, "run seed");
  ad->add_option("--out", out, "output directory")->required();

  auto* gr = app.add_subcommand("grid", "run the full candidate grid");
  gr->add_option("--config", config, "config JSON")->required();
  gr->add_option("--base", base, "base checkpoint")->required();
  gr->add_option("--jobs", jobs, "parallel jobs");
  gr->add_option("--out", out, "output directory")->required();

  auto* ev = app.add_subcommand("evaluate", "evaluate a checkpoint on datasets");
  ev->add_option("--ckpt", ckpt, "checkpoint")->required();
  ev->add_option("--data", data_dirs, "dataset directories")->required()->expected(-1);
  ev->add_option("--out", out, "output JSON file")->required();

  // CLI11 consumes the vector back to front
  std::vector<std::string> rev(args.rbegin(), args.rend());
  rev.pop_back();  // program name
  try {
    app.parse(rev);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitConfig;
  }

  if (gen->parsed()) return cmd_gen_data(config);
  if (tb->parsed()) return cmd_train_base(config, out);
  if (ad->parsed()) {
    if (position == "finetune") {
      cand.finetune = true;
    } else {
      cand.adapter.position = adapter_position_from_string(position);
      cand.adapter.hidden_dim = hidden;
      cand.adapter.dropout = dropout;
      cand.adapter.stochastic_depth = sdepth;
    }
    cand.steps = steps;
    cand.lr = lr;
    cand.seed = seed;
    return cmd_adapt(config, base, cand, out);
  }
  if (gr->parsed()) return cmd_grid(config, base, jobs, out);
  if (ev->parsed()) {
    std::vector<std::filesystem::path> dirs(data_dirs.begin(), data_dirs.end());
    return cmd_evaluate(ckpt, dirs, out);
  }
  return kExitConfig;
}

}  // namespace

int run_cli(const std::vector<std::string>& args) {
  try {
    return dispatch(args);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const NumericError& e) {
    std::cerr << "numerical abort: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

int run_cli(int argc, const char* const* argv) {
  return run_cli(std::vector<std::string>(argv, argv + argc));
}

}  // namespace xferlab::harness
