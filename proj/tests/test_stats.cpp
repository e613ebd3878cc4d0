#include "biasbench/stats.hpp"

#include <cmath>

#include "biasbench/common.hpp"
#include "biasbench/rng.hpp"
#include "doctest.h"

using namespace biasbench;
using namespace biasbench::stats;
using biasbench::eval::PredictionRecord;

namespace {

std::vector<PredictionRecord> preds(const std::vector<int>& gold,
                                    const std::vector<int>& predicted,
                                    const std::string& model) {
  std::vector<PredictionRecord> out;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    out.push_back({"e" + std::to_string(i), gold[i], predicted[i],
                   predicted[i] == 1 ? 0.9 : 0.1, model, 0});
  }
  return out;
}

// Brute force: exact tail count over all 2^m equally likely discordant
// outcomes, the rational oracle for the exact test.
double exact_oracle(long b, long c) {
  const int m = static_cast<int>(b + c);
  if (m == 0) return 1.0;
  const int lo = static_cast<int>(std::max(b, c));
  unsigned long long tail = 0;
  for (unsigned long long mask = 0; mask < (1ULL << m); ++mask) {
    if (__builtin_popcountll(mask) >= lo) tail++;
  }
  const double p = 2.0 * static_cast<double>(tail) / std::ldexp(1.0, m);
  return p < 1.0 ? p : 1.0;
}

}  // namespace

TEST_CASE("contingency counts match the worked example") {
  // gold [1,0,1,1,0], A [1,0,0,1,0], B [1,1,0,1,1]
  auto a = preds({1, 0, 1, 1, 0}, {1, 0, 0, 1, 0}, "A");
  auto b = preds({1, 0, 1, 1, 0}, {1, 1, 0, 1, 1}, "B");
  ContingencyTable t = build_contingency(a, b);
  CHECK(t.both_correct == 2);
  CHECK(t.a_only == 2);
  CHECK(t.b_only == 0);
  CHECK(t.both_wrong == 1);
  CHECK(t.n() == 5);
}

TEST_CASE("identical models have no discordant pairs") {
  auto a = preds({1, 0, 1}, {1, 1, 0}, "A");
  ContingencyTable t = build_contingency(a, a);
  CHECK(t.a_only == 0);
  CHECK(t.b_only == 0);
  CHECK(t.n() == 3);
}

TEST_CASE("swapping the models swaps the discordant counts only") {
  auto a = preds({1, 0, 1, 1, 0, 0}, {1, 0, 0, 1, 1, 0}, "A");
  auto b = preds({1, 0, 1, 1, 0, 0}, {0, 0, 1, 1, 0, 1}, "B");
  ContingencyTable ab = build_contingency(a, b);
  ContingencyTable ba = build_contingency(b, a);
  CHECK(ab.a_only == ba.b_only);
  CHECK(ab.b_only == ba.a_only);
  CHECK(ab.both_correct == ba.both_correct);
  CHECK(ab.both_wrong == ba.both_wrong);

  // chi2 and p are invariant under the swap.
  McNemarResult r_ab = mcnemar_chi2(ab, false);
  McNemarResult r_ba = mcnemar_chi2(ba, false);
  CHECK(r_ab.chi2 == r_ba.chi2);
  CHECK(r_ab.p_value == r_ba.p_value);
  CHECK(mcnemar_exact(ab).p_value == mcnemar_exact(ba).p_value);
}

TEST_CASE("misaligned prediction sets are rejected") {
  auto a = preds({1, 0}, {1, 0}, "A");
  auto b = preds({1, 0}, {1, 0}, "B");
  b[1].example_id = "other";
  CHECK_THROWS_AS(build_contingency(a, b), Error);

  auto c = preds({1, 0}, {1, 0}, "C");
  c[0].gold = 0;
  CHECK_THROWS_WITH_AS(build_contingency(a, c), doctest::Contains("gold"), Error);

  auto shorter = preds({1}, {1}, "D");
  CHECK_THROWS_AS(build_contingency(a, shorter), Error);
}

TEST_CASE("balanced discordance gives chi2 zero and p one") {
  ContingencyTable t{10, 4, 4, 2};
  McNemarResult r = mcnemar_chi2(t, false);
  CHECK(r.chi2 == doctest::Approx(0.0));
  CHECK(r.p_value == doctest::Approx(1.0));
  CHECK_FALSE(r.significant_at_05);
}

TEST_CASE("zero discordant pairs yield the distinguished result") {
  ContingencyTable t{7, 0, 0, 3};
  McNemarResult r = mcnemar_chi2(t, true);  // correction request is moot here
  CHECK(r.chi2 == 0.0);
  CHECK(r.p_value == 1.0);
  CHECK(r.variant == Variant::Chi2);
  CHECK_FALSE(r.significant_at_05);
}

TEST_CASE("chi2 statistic and p for b=10, c=2") {
  ContingencyTable t{0, 10, 2, 0};
  McNemarResult plain = mcnemar_chi2(t, false);
  CHECK(plain.chi2 == doctest::Approx(64.0 / 12.0).epsilon(1e-12));
  CHECK(plain.p_value == doctest::Approx(0.0209213353377940).epsilon(1e-9));
  CHECK(plain.variant == Variant::Chi2);
  CHECK(plain.significant_at_05);

  McNemarResult corrected = mcnemar_chi2(t, true);
  CHECK(corrected.chi2 == doctest::Approx(49.0 / 12.0).epsilon(1e-12));
  CHECK(corrected.p_value == doctest::Approx(0.0433081428107920).epsilon(1e-9));
  CHECK(corrected.variant == Variant::Chi2Corrected);
  CHECK(corrected.significant_at_05);
}

TEST_CASE("continuity correction floors at zero") {
  ContingencyTable t{0, 3, 3, 0};  // |b - c| = 0 < 1
  McNemarResult r = mcnemar_chi2(t, true);
  CHECK(r.chi2 == doctest::Approx(0.0));
  CHECK(r.p_value == doctest::Approx(1.0));
}

TEST_CASE("chi2 survival matches the published test rows") {
  // Reported (chi2, p) pairs round-trip through the 1-df survival function.
  CHECK(chi2_survival_1df(3.84) == doctest::Approx(0.0500435212487051).epsilon(1e-9));
  CHECK(chi2_survival_1df(3.63) == doctest::Approx(0.0567468164893814).epsilon(1e-9));
  CHECK(chi2_survival_1df(4.86) == doctest::Approx(0.0274863361115103).epsilon(1e-9));
  // The 5.65 row's reported p (0.031) is not reproducible with 1 df: the
  // survival function gives ~0.0175.
  CHECK(chi2_survival_1df(5.65) == doctest::Approx(0.0174553721631063).epsilon(1e-9));
}

TEST_CASE("exact test matches the hand-enumerated small cases") {
  ContingencyTable two_zero{0, 2, 0, 0};
  CHECK(mcnemar_exact(two_zero).p_value == doctest::Approx(0.5).epsilon(1e-15));

  ContingencyTable ten_two{0, 10, 2, 0};
  // 2 * (C(12,10) + C(12,11) + C(12,12)) / 2^12 = 158 / 4096
  CHECK(mcnemar_exact(ten_two).p_value == doctest::Approx(158.0 / 4096.0).epsilon(1e-15));
  CHECK(mcnemar_exact(ten_two).variant == Variant::Exact);

  ContingencyTable balanced{0, 6, 6, 0};
  CHECK(mcnemar_exact(balanced).p_value == 1.0);  // capped

  ContingencyTable empty{5, 0, 0, 5};
  CHECK(mcnemar_exact(empty).p_value == 1.0);
}

TEST_CASE("exact test equals brute-force enumeration for all b, c <= 12") {
  for (long b = 0; b <= 12; ++b) {
    for (long c = 0; c <= 12; ++c) {
      ContingencyTable t{0, b, c, 0};
      const double got = mcnemar_exact(t).p_value;
      const double want = exact_oracle(b, c);
      CHECK_MESSAGE(got == want, "b=", b, " c=", c, " got=", got, " want=", want);
    }
  }
}

TEST_CASE("exact test stays sane for large discordant counts") {
  ContingencyTable t{0, 80, 40, 0};  // m = 120 exercises the log-space path
  const double p = mcnemar_exact(t).p_value;
  CHECK(p > 0.0);
  CHECK(p < 0.001);  // 80/40 split is far in the tail
  ContingencyTable even{0, 60, 60, 0};
  CHECK(mcnemar_exact(even).p_value == doctest::Approx(1.0));
}

TEST_CASE("p is monotone in |b - c| when b + c is fixed") {
  for (int m : {6, 9, 14}) {
    double last_chi2 = -1.0, last_exact = 2.0;
    for (int b = (m + 1) / 2; b <= m; ++b) {
      ContingencyTable t{0, b, m - b, 0};
      const double p_chi2 = mcnemar_chi2(t, false).p_value;
      const double p_exact = mcnemar_exact(t).p_value;
      if (last_chi2 >= 0.0) CHECK(p_chi2 <= last_chi2);
      CHECK(p_exact <= last_exact);
      last_chi2 = p_chi2;
      last_exact = p_exact;
      CHECK(p_chi2 >= 0.0);
      CHECK(p_chi2 <= 1.0);
      CHECK(p_exact >= 0.0);
      CHECK(p_exact <= 1.0);
    }
  }
}

TEST_CASE("significance flag is strict at the 0.05 boundary") {
  Rng rng(17);
  for (int trial = 0; trial < 200; ++trial) {
    ContingencyTable t{static_cast<long>(rng.below(50)), static_cast<long>(rng.below(30)),
                       static_cast<long>(rng.below(30)), static_cast<long>(rng.below(50))};
    McNemarResult r = rng.below(2) ? mcnemar_exact(t) : mcnemar_chi2(t, rng.below(2) != 0);
    CHECK(r.significant_at_05 == (r.p_value < 0.05));
  }
}

TEST_CASE("comparison report has the published shape") {
  std::vector<ComparisonRow> rows{
      {"T5", "DA-T5", {4.86, chi2_survival_1df(4.86), Variant::Chi2, true}, {}},
      {"BART", "DA-BART", {3.63, chi2_survival_1df(3.63), Variant::Chi2, false}, {}},
  };
  const std::string markdown = render_comparison_markdown(rows);
  CHECK(markdown.find("| T5 vs. DA-T5 | 4.86 | 0.027* |") != std::string::npos);
  CHECK(markdown.find("| BART vs. DA-BART | 3.63 | 0.057 |") != std::string::npos);
  CHECK(markdown.find("*p<.05") != std::string::npos);

  const std::string dsv = render_comparison_dsv(rows);
  CHECK(dsv.find("T5\tDA-T5\t") != std::string::npos);
  CHECK(dsv.find("chi2") != std::string::npos);
}

TEST_CASE("comparison report renders a reference p next to the computed one") {
  std::vector<ComparisonRow> rows{
      {"BERT", "DA-BERT", {5.65, chi2_survival_1df(5.65), Variant::Chi2, true}, 0.031},
  };
  const std::string markdown = render_comparison_markdown(rows);
  CHECK(markdown.find("0.017*") != std::string::npos);  // computed, kept
  CHECK(markdown.find("0.031") != std::string::npos);   // reported, shown alongside
}

TEST_CASE("empty comparison list renders a header-only table") {
  const std::string markdown = render_comparison_markdown({});
  CHECK(markdown.find("| Models | chi2 | p |") != std::string::npos);
  const std::string dsv = render_comparison_dsv({});
  CHECK(dsv.rfind("model_a\tmodel_b", 0) == 0);
}
