#include "xferlab/metrics.hpp"

#include <algorithm>

namespace xferlab {

double wer_degradation(double wer_o, double wer_o_star) {
  if (wer_o < 0 || wer_o_star < 0) throw ConfigError("wer_degradation: negative WER");
  return std::max(0.0, wer_o_star - wer_o);
}

double o_scale(const std::vector<double>& degradations, double kappa) {
  if (degradations.empty()) throw ConfigError("o_scale: no degradations");
  if (kappa <= 0) throw ConfigError("o_scale: kappa must be positive");
  double acc = 0.0;
  for (double deg : degradations) acc += std::max(0.0, (kappa - deg) / kappa);
  return acc / static_cast<double>(degradations.size());
}

double a_werr(double wer_a, double wer_a_star) {
  if (wer_a <= 0) throw ConfigError("a_werr: pre-adaptation WER must be positive");
  return std::max(0.0, (wer_a - wer_a_star) / wer_a);
}

double keyword_accuracy(const std::vector<int>& ref_labels,
                        const std::vector<std::vector<int>>& hyps) {
  if (ref_labels.size() != hyps.size())
    throw ConfigError("keyword_accuracy: ref/hyp size mismatch");
  if (ref_labels.empty()) throw DataError("keyword_accuracy: empty evaluation set");
  long hits = 0;
  for (std::size_t i = 0; i < ref_labels.size(); ++i)
    if (hyps[i].size() == 1 && hyps[i][0] == ref_labels[i]) ++hits;
  return 100.0 * static_cast<double>(hits) / static_cast<double>(ref_labels.size());
}

CandidateScore score(const std::map<std::string, BeforeAfter>& reports,
                     const SelectionConfig& cfg) {
  if (cfg.original_datasets.empty() || cfg.new_datasets.empty())
    throw ConfigError("score: selection config needs original and new datasets");
  CandidateScore out;
  for (const auto& id : cfg.original_datasets) {
    auto it = reports.find(id);
    if (it == reports.end()) throw ConfigError("score: missing reports for dataset " + id);
    const double deg = wer_degradation(it->second.before.wer, it->second.after.wer);
    out.wer_deg.push_back(deg);
    if (deg >= cfg.kappa) out.kappa_violated = true;
  }
  out.o_scale = o_scale(out.wer_deg, cfg.kappa);

  double wer_a = 0.0, wer_a_star = 0.0;
  for (const auto& id : cfg.new_datasets) {
    auto it = reports.find(id);
    if (it == reports.end()) throw ConfigError("score: missing reports for dataset " + id);
    wer_a += it->second.before.wer;
    wer_a_star += it->second.after.wer;
  }
  wer_a /= static_cast<double>(cfg.new_datasets.size());
  wer_a_star /= static_cast<double>(cfg.new_datasets.size());
  out.a_werr = a_werr(wer_a, wer_a_star);
  out.score = out.o_scale * out.a_werr;
  return out;
}

nlohmann::json to_json(const EvalReport& r) {
  nlohmann::json j{{"dataset_id", r.dataset_id},
                   {"wer", r.wer},
                   {"n_words", r.n_words},
                   {"n_errors", r.n_errors}};
  if (r.keyword_accuracy >= 0) j["keyword_accuracy"] = r.keyword_accuracy;
  return j;
}

EvalReport eval_report_from_json(const nlohmann::json& j) {
  EvalReport r;
  r.dataset_id = j.at("dataset_id").get<std::string>();
  r.wer = j.at("wer").get<double>();
  r.n_words = j.at("n_words").get<long>();
  r.n_errors = j.at("n_errors").get<long>();
  r.keyword_accuracy = j.value("keyword_accuracy", -1.0);
  return r;
}

nlohmann::json to_json(const CandidateScore& s) {
  return nlohmann::json{{"wer_deg", s.wer_deg},
                        {"o_scale", s.o_scale},
                        {"a_werr", s.a_werr},
                        {"score", s.score},
                        {"kappa_violated", s.kappa_violated}};
}

}  // namespace xferlab
