#include "biasbench/corpus.hpp"

#include <algorithm>
#include <map>
#include <set>

#include "biasbench/common.hpp"
#include "biasbench/rng.hpp"
#include "biasbench/text.hpp"
#include "doctest.h"
#include "test_util.hpp"

using namespace biasbench;
using namespace biasbench::corpus;

namespace {

Dataset tiny_dataset(std::size_t n_per_class) {
  Dataset d;
  d.name = "tiny";
  for (std::size_t i = 0; i < n_per_class; ++i) {
    d.sentences.push_back({"pos-" + std::to_string(i), "clearly slanted words", 1,
                           Source::Synthetic, ""});
    d.sentences.push_back({"neg-" + std::to_string(i), "a plain factual sentence", 0,
                           Source::Synthetic, ""});
  }
  return d;
}

}  // namespace

TEST_CASE("normalize_text collapses whitespace and applies NFC") {
  CHECK(normalize_text("  the  senator\tsaid \n") == "the senator said");
  CHECK(normalize_text("plain") == "plain");
  // e + combining acute composes to the precomposed character
  CHECK(normalize_text("caf\x65\xcc\x81") == "caf\xc3\xa9");
  CHECK(normalize_text("a\xc2\xa0\x62") == "a b");  // no-break space
  CHECK(normalize_text("   ") == "");
}

TEST_CASE("tokenize lowercases and splits on whitespace") {
  auto tokens = tokenize("The Senator SAID");
  REQUIRE(tokens.size() == 3);
  CHECK(tokens[0] == "the");
  CHECK(tokens[1] == "senator");
  CHECK(tokens[2] == "said");
  CHECK(tokenize("").empty());
}

TEST_CASE("ingest_wnc expands pairs into labeled sentences") {
  bbtest::TempDir tmp;
  const std::string path = tmp.file("wnc.tsv");
  bbtest::write_file(path,
                     "id1\tsrc_tok\ttgt_tok\tthe senator callously dismissed the idea\t"
                     "the senator dismissed the idea\tpos\tpos\n");
  IngestReport report;
  Dataset d = ingest_wnc(path, {}, &report);
  REQUIRE(d.size() == 2);
  CHECK(d.sentences[0].label == 1);
  CHECK(d.sentences[0].text == "the senator callously dismissed the idea");
  CHECK(d.sentences[1].label == 0);
  CHECK(d.sentences[1].text == "the senator dismissed the idea");
  CHECK(d.sentences[0].pair_id == d.sentences[1].pair_id);
  CHECK(d.sentences[0].id != d.sentences[1].id);
  CHECK(report.pairs_read == 1);
  CHECK(report.sentences_emitted == 2);
}

TEST_CASE("ingest_wnc drops pairs identical after normalization") {
  bbtest::TempDir tmp;
  const std::string path = tmp.file("wnc.tsv");
  bbtest::write_file(path,
                     "id1\ta\tb\tsame  sentence\tsame sentence\tp\tp\n"
                     "id2\ta\tb\tbiased one\tneutral one\tp\tp\n");
  IngestReport report;
  Dataset d = ingest_wnc(path, {}, &report);
  CHECK(d.size() == 2);
  CHECK(report.pairs_read == 2);
  CHECK(report.pairs_dropped_identical == 1);
}

TEST_CASE("ingest_wnc collects malformed rows with line numbers") {
  bbtest::TempDir tmp;
  const std::string path = tmp.file("wnc.tsv");
  bbtest::write_file(path,
                     "# comment line\n"
                     "id1\ta\tb\tbiased text\tneutral text\tp\tp\n"
                     "too\tfew\tcolumns\n"
                     "id3\ta\tb\tother biased\tother neutral\tp\tp\n");
  IngestReport report;
  Dataset d = ingest_wnc(path, {}, &report);
  CHECK(d.size() == 4);
  REQUIRE(report.rows_malformed == 1);
  REQUIRE(report.row_errors.size() == 1);
  CHECK(report.row_errors[0].row == 3);
}

TEST_CASE("ingest_wnc honors the pair limit and column options") {
  bbtest::TempDir tmp;
  const std::string path = tmp.file("wnc.tsv");
  bbtest::write_file(path,
                     "first biased\tfirst neutral\n"
                     "second biased\tsecond neutral\n"
                     "third biased\tthird neutral\n");
  WncOptions options;
  options.pre_column = 0;
  options.post_column = 1;
  options.limit = 2;
  IngestReport report;
  Dataset d = ingest_wnc(path, options, &report);
  CHECK(d.size() == 4);
  CHECK(report.pairs_read == 2);
}

TEST_CASE("ingest_wnc hard-errors on empty or missing files") {
  bbtest::TempDir tmp;
  const std::string empty = tmp.file("empty.tsv");
  bbtest::write_file(empty, "");
  CHECK_THROWS_AS(ingest_wnc(empty, {}, nullptr), Error);
  CHECK_THROWS_AS(ingest_wnc(tmp.file("missing.tsv"), {}, nullptr), Error);
}

TEST_CASE("ingest_wnc is idempotent") {
  bbtest::TempDir tmp;
  const std::string path = tmp.file("wnc.tsv");
  bbtest::write_file(path, "a biased line\ta neutral line\nmore bias here\tless bias here\n");
  WncOptions options;
  options.pre_column = 0;
  options.post_column = 1;
  Dataset first = ingest_wnc(path, options, nullptr);
  Dataset second = ingest_wnc(path, options, nullptr);
  REQUIRE(first.size() == second.size());
  for (std::size_t i = 0; i < first.size(); ++i) {
    CHECK(first.sentences[i].id == second.sentences[i].id);
    CHECK(first.sentences[i].text == second.sentences[i].text);
    CHECK(first.sentences[i].label == second.sentences[i].label);
  }
}

TEST_CASE("ingest_babe maps labels and excludes unknown ones") {
  bbtest::TempDir tmp;
  const std::string path = tmp.file("babe.csv");
  bbtest::write_file(path,
                     "text;label;topic\n"
                     "a slanted sentence;Biased;politics\n"
                     "a bland sentence;Non-biased;sports\n"
                     "an argued sentence;No agreement;misc\n"
                     "\"quoted; with delimiter\";biased;misc\n");
  IngestReport report;
  Dataset d = ingest_babe(path, {}, &report);
  REQUIRE(d.size() == 3);
  CHECK(d.sentences[0].label == 1);
  CHECK(d.sentences[1].label == 0);
  CHECK(d.sentences[2].label == 1);
  CHECK(d.sentences[2].text == "quoted; with delimiter");
  CHECK(report.labels_excluded == 1);
}

TEST_CASE("ingest_babe requires the configured columns") {
  bbtest::TempDir tmp;
  const std::string path = tmp.file("babe.csv");
  bbtest::write_file(path, "sentence;verdict\nwhatever;Biased\n");
  CHECK_THROWS_WITH_AS(ingest_babe(path, {}, nullptr),
                       doctest::Contains("required column 'text'"), Error);
  BabeOptions options;
  options.text_column = "sentence";
  options.label_column = "verdict";
  Dataset d = ingest_babe(path, options, nullptr);
  CHECK(d.size() == 1);
}

TEST_CASE("make_folds splits a balanced dataset evenly") {
  Dataset d = tiny_dataset(5);  // 5 per class
  FoldPlan plan = make_folds(d, 5, 17);
  std::map<int, std::array<int, 2>> per_fold;
  for (const auto& s : d.sentences) {
    per_fold[plan.assignments.at(s.id)][static_cast<std::size_t>(s.label)]++;
  }
  REQUIRE(per_fold.size() == 5);
  for (const auto& [fold, counts] : per_fold) {
    CHECK(counts[0] == 1);
    CHECK(counts[1] == 1);
  }
}

TEST_CASE("make_folds puts the remainder in exactly one fold") {
  // 6 positive, 5 negative, k = 5: positive counts must be {2,1,1,1,1}.
  Dataset d;
  d.name = "imbalanced";
  for (int i = 0; i < 6; ++i) {
    d.sentences.push_back({"p" + std::to_string(i), "x y", 1, Source::Synthetic, ""});
  }
  for (int i = 0; i < 5; ++i) {
    d.sentences.push_back({"n" + std::to_string(i), "x y", 0, Source::Synthetic, ""});
  }
  FoldPlan plan = make_folds(d, 5, 3);
  std::array<int, 5> pos_counts{};
  std::array<int, 5> neg_counts{};
  for (const auto& s : d.sentences) {
    const int fold = plan.assignments.at(s.id);
    (s.label == 1 ? pos_counts : neg_counts)[static_cast<std::size_t>(fold)]++;
  }
  int folds_with_two = 0;
  for (int c : pos_counts) {
    CHECK((c == 1 || c == 2));
    if (c == 2) folds_with_two++;
  }
  CHECK(folds_with_two == 1);
  for (int c : neg_counts) CHECK(c == 1);
}

TEST_CASE("make_folds is deterministic and seed-sensitive") {
  Dataset d = tiny_dataset(20);
  FoldPlan a = make_folds(d, 5, 99);
  FoldPlan b = make_folds(d, 5, 99);
  CHECK(a.assignments == b.assignments);
  CHECK(a.hash() == b.hash());
  FoldPlan c = make_folds(d, 5, 100);
  CHECK(a.assignments != c.assignments);
}

TEST_CASE("make_folds rejects a class with fewer examples than k") {
  Dataset d = tiny_dataset(3);
  CHECK_THROWS_WITH_AS(make_folds(d, 5, 1), doctest::Contains("class"), Error);
  CHECK_THROWS_AS(make_folds(d, 1, 1), Error);
}

TEST_CASE("fold plans satisfy partition and stratification invariants") {
  Rng rng(2024);
  for (int trial = 0; trial < 100; ++trial) {
    const int k = 2 + static_cast<int>(rng.below(9));
    const std::size_t n_pos = static_cast<std::size_t>(k) + rng.below(200);
    const std::size_t n_neg = static_cast<std::size_t>(k) + rng.below(200);
    Dataset d;
    d.name = "random";
    for (std::size_t i = 0; i < n_pos; ++i) {
      d.sentences.push_back({"p" + std::to_string(i), "t", 1, Source::Synthetic, ""});
    }
    for (std::size_t i = 0; i < n_neg; ++i) {
      d.sentences.push_back({"n" + std::to_string(i), "t", 0, Source::Synthetic, ""});
    }
    FoldPlan plan = make_folds(d, k, rng.next_u64());

    // Partition: every id exactly once.
    plan.check_covers(d);
    // Stratification: per-fold class counts within 1 of class_total / k.
    std::vector<std::array<long, 2>> counts(static_cast<std::size_t>(k), {0, 0});
    for (const auto& s : d.sentences) {
      counts[static_cast<std::size_t>(plan.assignments.at(s.id))]
            [static_cast<std::size_t>(s.label)]++;
    }
    for (int f = 0; f < k; ++f) {
      const double pos_share = static_cast<double>(n_pos) / k;
      const double neg_share = static_cast<double>(n_neg) / k;
      CHECK(std::abs(counts[static_cast<std::size_t>(f)][1] - pos_share) <= 1.0);
      CHECK(std::abs(counts[static_cast<std::size_t>(f)][0] - neg_share) <= 1.0);
    }
  }
}

TEST_CASE("make_synthetic meets its size and marker contracts") {
  auto [pretrain, finetune] = make_synthetic(100, 7);
  CHECK(pretrain.size() == 200);
  CHECK(finetune.size() == 100);
  auto counts = finetune.class_counts();
  CHECK(counts[0] == 50);
  CHECK(counts[1] == 50);

  std::set<std::string> markers;
  for (const auto& m : synthetic_markers(7)) markers.insert(m);
  auto has_marker = [&markers](const std::string& text) {
    for (const auto& token : tokenize(text)) {
      if (markers.count(token)) return true;
    }
    return false;
  };
  for (const auto& ds : {pretrain, finetune}) {
    for (const auto& s : ds.sentences) {
      CHECK(has_marker(s.text) == (s.label == 1));
    }
  }

  // WNC-style bijection between the two sides of every retained pair.
  std::map<std::string, std::array<int, 2>> pair_sides;
  for (const auto& s : pretrain.sentences) {
    REQUIRE(!s.pair_id.empty());
    pair_sides[s.pair_id][static_cast<std::size_t>(s.label)]++;
  }
  for (const auto& [pair, sides] : pair_sides) {
    CHECK(sides[0] == 1);
    CHECK(sides[1] == 1);
  }
}

TEST_CASE("make_synthetic is deterministic per seed") {
  auto [pre_a, fine_a] = make_synthetic(30, 11);
  auto [pre_b, fine_b] = make_synthetic(30, 11);
  REQUIRE(pre_a.size() == pre_b.size());
  for (std::size_t i = 0; i < pre_a.size(); ++i) {
    CHECK(pre_a.sentences[i].text == pre_b.sentences[i].text);
  }
  auto [pre_c, fine_c] = make_synthetic(30, 12);
  bool any_different = false;
  for (std::size_t i = 0; i < pre_a.size(); ++i) {
    if (pre_a.sentences[i].text != pre_c.sentences[i].text) any_different = true;
  }
  CHECK(any_different);
}

TEST_CASE("dataset cache round-trips") {
  bbtest::TempDir tmp;
  auto [pretrain, finetune] = make_synthetic(25, 5);
  const std::string path = tmp.file("cache.tsv");
  save_cache(finetune, path);
  Dataset loaded = load_cache(path, Source::Synthetic, finetune.name);
  REQUIRE(loaded.size() == finetune.size());
  for (std::size_t i = 0; i < loaded.size(); ++i) {
    CHECK(loaded.sentences[i].id == finetune.sentences[i].id);
    CHECK(loaded.sentences[i].label == finetune.sentences[i].label);
    CHECK(loaded.sentences[i].text == finetune.sentences[i].text);
  }
}

TEST_CASE("load_cache rejects malformed rows") {
  bbtest::TempDir tmp;
  const std::string path = tmp.file("bad.tsv");
  bbtest::write_file(path, "id1\t2\tsome text\n");
  CHECK_THROWS_AS(load_cache(path, Source::Synthetic, "bad"), Error);
  bbtest::write_file(path, "id1\t1\n");
  CHECK_THROWS_AS(load_cache(path, Source::Synthetic, "bad"), Error);
}

TEST_CASE("dataset validation catches duplicate ids") {
  Dataset d;
  d.name = "dup";
  d.sentences.push_back({"same", "text one", 1, Source::Synthetic, ""});
  d.sentences.push_back({"same", "text two", 0, Source::Synthetic, ""});
  CHECK_THROWS_WITH_AS(d.validate(), doctest::Contains("duplicate"), Error);
}
