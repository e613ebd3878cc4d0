#ifndef BIASBENCH_CORPUS_HPP
#define BIASBENCH_CORPUS_HPP

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "biasbench/kv.hpp"

namespace biasbench::corpus {

enum class Source { Wnc, Babe, Synthetic };

const char* source_name(Source source);

// One text unit with a binary label: 1 = Biased, 0 = Non-biased.
struct LabeledSentence {
  std::string id;
  std::string text;  // normalized (NFC, collapsed whitespace)
  int label = 0;
  Source source = Source::Synthetic;
  std::string pair_id;  // set for sentences that came from a WNC pair
};

struct Dataset {
  std::string name;
  std::vector<LabeledSentence> sentences;

  std::size_t size() const { return sentences.size(); }
  std::array<std::size_t, 2> class_counts() const;

  // Checks the per-record invariants: labels in {0,1}, non-empty text,
  // unique ids. Throws Error(InvalidArgument) on violation.
  void validate() const;
};

struct RowError {
  std::size_t row = 0;  // 1-based line/record number in the source file
  std::string message;
};

// Emitted alongside every dataset so corpus sizes stay checkable.
struct IngestReport {
  std::string dataset_name;
  std::string source_path;
  std::size_t rows_read = 0;
  std::size_t pairs_read = 0;               // WNC only
  std::size_t pairs_dropped_identical = 0;  // WNC only
  std::size_t labels_excluded = 0;          // BABE only
  std::size_t rows_malformed = 0;
  std::size_t sentences_emitted = 0;
  std::vector<RowError> row_errors;

  KvPairs to_kv() const;
  void write(const std::string& path, const std::string& config_hash,
             const std::string& cache_digest) const;
};

struct WncOptions {
  // Column defaults match the released corpus layout (raw sentence columns).
  int pre_column = 3;
  int post_column = 4;
  long limit = -1;  // pairs; negative = no limit
};

// Expands each biased/neutralized pair into two labeled sentences sharing a
// pair_id. Pairs whose sides are identical after normalization are dropped.
Dataset ingest_wnc(const std::string& path, const WncOptions& options,
                   IngestReport* report);

struct BabeOptions {
  char delimiter = ';';
  std::string text_column = "text";
  std::string label_column = "label";
};

// Reads a header-bearing delimited file; rows whose label is neither
// "Biased" nor "Non-biased" (case-insensitive) are excluded and counted.
Dataset ingest_babe(const std::string& path, const BabeOptions& options,
                    IngestReport* report);

// Deterministic stratified fold assignment.
struct FoldPlan {
  int k = 0;
  std::uint64_t seed = 0;
  std::map<std::string, int> assignments;  // id -> fold in [0, k)

  std::uint64_t hash() const;
  std::vector<std::size_t> fold_sizes() const;
  // Throws unless the plan's ids are exactly the dataset's ids.
  void check_covers(const Dataset& dataset) const;
};

FoldPlan make_folds(const Dataset& dataset, int k, std::uint64_t seed);

// Desk-scale corpus generator. Biased sentences plant 2-3 marker tokens from
// a seeded lexicon; their neutral pair twins replace the markers with filler
// words, mirroring how the real pair corpus was built.
struct SyntheticSpec {
  std::size_t pretrain_pairs = 500;
  std::size_t finetune_sentences = 300;
  std::uint64_t vocab_seed = 1;
};

struct SyntheticCorpus {
  Dataset pretrain;  // 2 * pretrain_pairs sentences, one pair each
  Dataset finetune;  // finetune_sentences sentences, 50/50 classes
};

SyntheticCorpus synthetic_corpus(const SyntheticSpec& spec);

// (pretrain, finetune) with finetune_sentences == n_pairs.
std::pair<Dataset, Dataset> make_synthetic(std::size_t n_pairs,
                                           std::uint64_t vocab_seed);

// The marker lexicon used by a given seed; exposed so tests can check the
// planted-marker property.
std::vector<std::string> synthetic_markers(std::uint64_t vocab_seed);

// Cache format: one "id <TAB> label <TAB> text" per line.
void save_cache(const Dataset& dataset, const std::string& path);
Dataset load_cache(const std::string& path, Source source, const std::string& name);

}  // namespace biasbench::corpus

#endif  // BIASBENCH_CORPUS_HPP
