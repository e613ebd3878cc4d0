#include "biasbench/stats.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <sstream>

#include "biasbench/common.hpp"
#include "biasbench/kv.hpp"

namespace biasbench::stats {

const char* variant_name(Variant variant) {
  switch (variant) {
    case Variant::Chi2: return "chi2";
    case Variant::Chi2Corrected: return "chi2-corrected";
    case Variant::Exact: return "exact";
  }
  return "unknown";
}

ContingencyTable build_contingency(std::span<const eval::PredictionRecord> a,
                                   std::span<const eval::PredictionRecord> b) {
  if (a.size() != b.size()) {
    fail(ErrorKind::Alignment, "prediction sets differ in size: " + std::to_string(a.size()) +
                                   " vs " + std::to_string(b.size()));
  }
  std::map<std::string, const eval::PredictionRecord*> by_id;
  for (const auto& r : b) {
    if (!by_id.emplace(r.example_id, &r).second) {
      fail(ErrorKind::Alignment, "duplicate example id in second prediction set: " + r.example_id);
    }
  }
  ContingencyTable table;
  for (const auto& ra : a) {
    auto it = by_id.find(ra.example_id);
    if (it == by_id.end()) {
      fail(ErrorKind::Alignment, "example id missing from second prediction set: " + ra.example_id);
    }
    const auto& rb = *it->second;
    if (ra.gold != rb.gold) {
      fail(ErrorKind::Alignment, "gold label disagreement for example id: " + ra.example_id);
    }
    const bool a_correct = ra.predicted == ra.gold;
    const bool b_correct = rb.predicted == rb.gold;
    if (a_correct && b_correct) table.both_correct++;
    else if (a_correct) table.a_only++;
    else if (b_correct) table.b_only++;
    else table.both_wrong++;
    by_id.erase(it);
  }
  // equal sizes + unique ids on both sides make leftovers impossible
  return table;
}

double chi2_survival_1df(double statistic) {
  if (statistic < 0.0) fail(ErrorKind::InvalidArgument, "chi2 statistic must be >= 0");
  return std::erfc(std::sqrt(statistic / 2.0));
}

McNemarResult mcnemar_chi2(const ContingencyTable& table, bool continuity_correction) {
  McNemarResult result;
  const double b = static_cast<double>(table.a_only);
  const double c = static_cast<double>(table.b_only);
  if (table.discordant() == 0) {
    // No discordant pairs: the statistic is undefined, report the
    // distinguished result rather than an error.
    result.chi2 = 0.0;
    result.p_value = 1.0;
    result.variant = Variant::Chi2;
    result.significant_at_05 = false;
    return result;
  }
  if (continuity_correction) {
    const double adjusted = std::max(0.0, std::abs(b - c) - 1.0);
    result.chi2 = adjusted * adjusted / (b + c);
    result.variant = Variant::Chi2Corrected;
  } else {
    result.chi2 = (b - c) * (b - c) / (b + c);
    result.variant = Variant::Chi2;
  }
  result.p_value = chi2_survival_1df(result.chi2);
  result.significant_at_05 = result.p_value < 0.05;
  return result;
}

namespace {

// Tail sum of C(m, i) for i in [lo, m], exact in unsigned 64-bit arithmetic.
// Valid for m <= 62 (the largest m with C(m, m/2) < 2^63).
unsigned long long binomial_tail(int m, int lo) {
  // Pascal's row m built iteratively.
  std::vector<unsigned long long> row(static_cast<std::size_t>(m) + 1, 0);
  row[0] = 1;
  for (int r = 1; r <= m; ++r) {
    for (int i = r; i >= 1; --i) row[static_cast<std::size_t>(i)] += row[static_cast<std::size_t>(i - 1)];
  }
  unsigned long long sum = 0;
  for (int i = lo; i <= m; ++i) sum += row[static_cast<std::size_t>(i)];
  return sum;
}

// log C(m, i) via lgamma, for the large-m fallback.
double log_binomial(int m, int i) {
  return std::lgamma(m + 1.0) - std::lgamma(i + 1.0) - std::lgamma(m - i + 1.0);
}

}  // namespace

McNemarResult mcnemar_exact(const ContingencyTable& table) {
  McNemarResult result;
  result.variant = Variant::Exact;
  const long b = table.a_only;
  const long c = table.b_only;
  const long m = b + c;
  // The uncorrected statistic is carried for reference.
  result.chi2 = m > 0 ? static_cast<double>((b - c) * (b - c)) / static_cast<double>(m) : 0.0;

  if (m == 0) {
    result.p_value = 1.0;
    result.significant_at_05 = false;
    return result;
  }

  const int lo = static_cast<int>(std::max(b, c));
  double p;
  if (m <= 62) {
    // Exact dyadic rational: both numerator and denominator are exact in
    // double for the ranges tests pin down.
    const unsigned long long tail = binomial_tail(static_cast<int>(m), lo);
    p = 2.0 * static_cast<double>(tail) / std::ldexp(1.0, static_cast<int>(m));
  } else {
    const double log_half_m = static_cast<double>(m) * std::log(2.0);
    double tail = 0.0;
    for (int i = lo; i <= static_cast<int>(m); ++i) {
      tail += std::exp(log_binomial(static_cast<int>(m), i) - log_half_m);
    }
    p = 2.0 * tail;
  }
  result.p_value = std::min(1.0, p);
  result.significant_at_05 = result.p_value < 0.05;
  return result;
}

namespace {

std::string p_cell(const ComparisonRow& row) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.3f", row.result.p_value);
  std::string cell(buf);
  if (row.result.significant_at_05) cell += "*";
  return cell;
}

std::string chi2_cell(const ComparisonRow& row) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", row.result.chi2);
  return std::string(buf);
}

}  // namespace

std::string render_comparison_markdown(std::span<const ComparisonRow> rows) {
  const bool any_reference = std::any_of(rows.begin(), rows.end(),
                                         [](const ComparisonRow& r) { return r.reference_p.has_value(); });
  std::ostringstream out;
  out << "| Models | chi2 | p |" << (any_reference ? " reference p |" : "") << "\n";
  out << "| --- | --- | --- |" << (any_reference ? " --- |" : "") << "\n";
  for (const auto& row : rows) {
    out << "| " << row.model_a << " vs. " << row.model_b << " | " << chi2_cell(row) << " | "
        << p_cell(row) << " |";
    if (any_reference) {
      if (row.reference_p) {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%.3f", *row.reference_p);
        out << " " << buf << " |";
      } else {
        out << " - |";
      }
    }
    out << "\n";
  }
  out << "\n*p<.05\n";
  return out.str();
}

std::string render_comparison_dsv(std::span<const ComparisonRow> rows, char delimiter) {
  std::ostringstream out;
  out << "model_a" << delimiter << "model_b" << delimiter << "chi2" << delimiter << "p_value"
      << delimiter << "variant" << delimiter << "significant_at_05" << delimiter
      << "reference_p\n";
  for (const auto& row : rows) {
    out << row.model_a << delimiter << row.model_b << delimiter << format_real(row.result.chi2)
        << delimiter << format_real(row.result.p_value) << delimiter
        << variant_name(row.result.variant) << delimiter << (row.result.significant_at_05 ? 1 : 0)
        << delimiter << (row.reference_p ? format_real(*row.reference_p) : std::string("-"))
        << "\n";
  }
  return out.str();
}

}  // namespace biasbench::stats
