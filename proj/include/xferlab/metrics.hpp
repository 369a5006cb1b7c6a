#pragma once

#include <map>
#include <string>
#include <vector>

#include "xferlab/errors.hpp"

#include "json.hpp"

namespace xferlab {

struct EvalReport {
  std::string dataset_id;
  double wer = 0.0;  // percent
  long n_words = 0;
  long n_errors = 0;
  double keyword_accuracy = -1.0;  // percent; < 0 when not applicable
};

struct SelectionConfig {
  double kappa = 3.0;  // percent, max tolerable absolute WER degradation
  std::vector<std::string> original_datasets;
  std::vector<std::string> new_datasets;
};

struct CandidateScore {
  std::vector<double> wer_deg;  // per original dataset, clamped at 0
  double o_scale = 0.0;
  double a_werr = 0.0;
  double score = 0.0;
  bool kappa_violated = false;
};

struct EditCounts {
  int subs = 0;
  int ins = 0;
  int dels = 0;
  int total() const { return subs + ins + dels; }
};

// Levenshtein with unit costs. Among minimal-cost alignments the one with the
// most diagonal moves is chosen (substitution preferred over insertion over
// deletion); the ins/del split is then pinned by the length difference, which
// makes the counts deterministic and swap-symmetric.
template <class Tok>
EditCounts edit_distance(const std::vector<Tok>& ref, const std::vector<Tok>& hyp) {
  const std::size_t n = ref.size(), m = hyp.size();
  std::vector<int> dist((n + 1) * (m + 1));
  std::vector<int> diag((n + 1) * (m + 1));
  auto d = [&](std::size_t i, std::size_t j) -> int& { return dist[i * (m + 1) + j]; };
  auto g = [&](std::size_t i, std::size_t j) -> int& { return diag[i * (m + 1) + j]; };
  for (std::size_t i = 0; i <= n; ++i) d(i, 0) = static_cast<int>(i);
  for (std::size_t j = 0; j <= m; ++j) d(0, j) = static_cast<int>(j);
  for (std::size_t i = 1; i <= n; ++i)
    for (std::size_t j = 1; j <= m; ++j) {
      const int sub = d(i - 1, j - 1) + (ref[i - 1] == hyp[j - 1] ? 0 : 1);
      const int ins = d(i, j - 1) + 1;
      const int del = d(i - 1, j) + 1;
      const int best = std::min(sub, std::min(ins, del));
      d(i, j) = best;
      int best_diag = -1;
      if (sub == best) best_diag = g(i - 1, j - 1) + 1;
      if (ins == best) best_diag = std::max(best_diag, g(i, j - 1));
      if (del == best) best_diag = std::max(best_diag, g(i - 1, j));
      g(i, j) = best_diag;
    }
  const int cost = d(n, m);
  const int diagonal = g(n, m);
  EditCounts c;
  c.subs = 2 * diagonal + cost - static_cast<int>(n) - static_cast<int>(m);
  c.ins = (cost - c.subs + static_cast<int>(m) - static_cast<int>(n)) / 2;
  c.dels = (cost - c.subs + static_cast<int>(n) - static_cast<int>(m)) / 2;
  return c;
}

// Corpus WER as a percentage: 100 * total errors / total reference words.
template <class Tok>
double wer(const std::vector<std::vector<Tok>>& ref_corpus,
           const std::vector<std::vector<Tok>>& hyp_corpus, long* out_words = nullptr,
           long* out_errors = nullptr) {
  if (ref_corpus.size() != hyp_corpus.size())
    throw ConfigError("wer: ref/hyp corpus size mismatch");
  long words = 0, errors = 0;
  for (std::size_t u = 0; u < ref_corpus.size(); ++u) {
    words += static_cast<long>(ref_corpus[u].size());
    errors += edit_distance(ref_corpus[u], hyp_corpus[u]).total();
  }
  if (words == 0) throw DataError("wer: reference corpus has no words");
  if (out_words) *out_words = words;
  if (out_errors) *out_errors = errors;
  return 100.0 * static_cast<double>(errors) / static_cast<double>(words);
}

// max(0, WER_o* - WER_o), both percentages
double wer_degradation(double wer_o, double wer_o_star);

// (1/N) * sum_i max(0, (kappa - deg_i) / kappa)
double o_scale(const std::vector<double>& degradations, double kappa);

// max(0, (WER_a - WER_a*) / WER_a); requires WER_a > 0
double a_werr(double wer_a, double wer_a_star);

// Exact-match keyword accuracy: hypothesis must equal [label] exactly.
double keyword_accuracy(const std::vector<int>& ref_labels,
                        const std::vector<std::vector<int>>& hyps);

struct BeforeAfter {
  EvalReport before;
  EvalReport after;
};

// Composes the degradation weight and the relative-improvement clamp into the
// selection score. New-domain WERs aggregate as an unweighted mean over the
// configured new datasets. kappa_violated flags any per-dataset degradation
// at or beyond kappa; it is reported, not scored.
CandidateScore score(const std::map<std::string, BeforeAfter>& reports,
                     const SelectionConfig& cfg);

nlohmann::json to_json(const EvalReport& r);
EvalReport eval_report_from_json(const nlohmann::json& j);
nlohmann::json to_json(const CandidateScore& s);

}  // namespace xferlab
