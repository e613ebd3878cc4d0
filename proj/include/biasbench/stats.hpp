#ifndef BIASBENCH_STATS_HPP
#define BIASBENCH_STATS_HPP

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "biasbench/eval.hpp"

namespace biasbench::stats {

// 2x2 joint-correctness counts for two models on aligned predictions.
struct ContingencyTable {
  long both_correct = 0;
  long a_only = 0;  // b in the classic notation: A correct, B wrong
  long b_only = 0;  // c: A wrong, B correct
  long both_wrong = 0;

  long n() const { return both_correct + a_only + b_only + both_wrong; }
  long discordant() const { return a_only + b_only; }
};

enum class Variant { Chi2, Chi2Corrected, Exact };

const char* variant_name(Variant variant);

struct McNemarResult {
  double chi2 = 0.0;
  double p_value = 1.0;
  Variant variant = Variant::Chi2;
  bool significant_at_05 = false;  // p < 0.05, strict
};

// Requires the same example ids with the same gold labels on both sides;
// order-independent. Throws Error(Alignment) otherwise.
ContingencyTable build_contingency(std::span<const eval::PredictionRecord> a,
                                   std::span<const eval::PredictionRecord> b);

// chi2 = (b - c)^2 / (b + c), 1 df; with continuity correction the numerator
// is max(0, |b - c| - 1)^2. Zero discordant pairs give the distinguished
// "no discordance" result (chi2 = 0, p = 1).
McNemarResult mcnemar_chi2(const ContingencyTable& table, bool continuity_correction);

// Two-sided exact binomial test on the discordant pairs at rate 1/2:
// p = min(1, 2 * sum_{i >= max(b,c)} C(m, i) / 2^m) with m = b + c.
McNemarResult mcnemar_exact(const ContingencyTable& table);

// Survival function of chi-squared with 1 df: erfc(sqrt(x / 2)).
double chi2_survival_1df(double statistic);

struct ComparisonRow {
  std::string model_a;
  std::string model_b;
  McNemarResult result;
  std::optional<double> reference_p;  // reported value to show alongside, never instead
};

std::string render_comparison_markdown(std::span<const ComparisonRow> rows);
std::string render_comparison_dsv(std::span<const ComparisonRow> rows, char delimiter = '\t');

}  // namespace biasbench::stats

#endif  // BIASBENCH_STATS_HPP
