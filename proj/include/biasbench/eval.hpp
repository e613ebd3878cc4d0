#ifndef BIASBENCH_EVAL_HPP
#define BIASBENCH_EVAL_HPP

#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "biasbench/corpus.hpp"
#include "biasbench/model.hpp"
#include "biasbench/train.hpp"

namespace biasbench::eval {

// The atom of all evaluation and significance testing.
struct PredictionRecord {
  std::string example_id;
  int gold = 0;
  int predicted = 0;  // 1 iff prob_biased > 0.5 (0.5 maps to 0)
  double prob_biased = 0.0;
  std::string model_id;
  int fold = 0;
};

// Unweighted mean of per-class F1 over classes {0, 1}. A class with zero
// predicted and zero actual positives contributes F1 = 0.
double macro_f1(std::span<const PredictionRecord> records);

struct CvResult {
  std::string model_id;
  std::vector<double> fold_f1;
  double mean_f1 = 0.0;
  double std_error = 0.0;  // sample stddev of fold scores / sqrt(k)
  std::vector<PredictionRecord> predictions;  // out-of-fold, one per example
};

using BundleFactory = std::function<model::ModelBundle()>;

// For each fold: fine-tune a fresh snapshot on the other folds, predict the
// held-out fold. The factory must return a RAW or DOMAIN_ADAPTED bundle.
CvResult cross_validate(const BundleFactory& make_bundle, const corpus::Dataset& dataset,
                        const corpus::FoldPlan& plan, const train::TrainConfig& config,
                        const std::string& model_id);

double mean_of(std::span<const double> values);
double std_error_of(std::span<const double> values);

// Prediction file: '#'-prefixed key-value header block, then one
// "example_id <TAB> gold <TAB> predicted <TAB> prob_biased <TAB> fold" per line.
struct PredictionFileHeader {
  std::string model_id;
  std::uint64_t seed = 0;
  std::string config_hash;
  std::string fold_plan_hash;
  std::string dataset_digest;
  std::string timestamp;  // informational only; excluded from comparisons
};

void save_predictions(const std::string& path, const PredictionFileHeader& header,
                      std::span<const PredictionRecord> records);
std::pair<PredictionFileHeader, std::vector<PredictionRecord>> load_predictions(
    const std::string& path);

// One row of the cross-validation results table.
struct TableRow {
  std::string model_id;
  double mean_f1 = 0.0;
  double std_error = 0.0;
  enum class Block { Baseline, Literature, DomainAdapted } block = Block::Baseline;
  bool best = false;  // flagged on exactly one row (highest mean F1)
};

struct ComputedRow {
  std::string model_id;
  double mean_f1 = 0.0;
  double std_error = 0.0;
  bool domain_adapted = false;
};

// Orders rows baselines / literature references / domain-adapted and flags
// the best mean F1. Throws on duplicate model ids.
std::vector<TableRow> aggregate_table(std::span<const ComputedRow> computed,
                                      std::span<const TableRow> reference_rows);

std::string render_table_markdown(std::span<const TableRow> rows);
std::string render_table_dsv(std::span<const TableRow> rows, char delimiter = '\t');

// Literature rows file: "model <TAB> mean_f1 <TAB> std_error" with '#' comments.
std::vector<TableRow> load_reference_rows(const std::string& path);

}  // namespace biasbench::eval

#endif  // BIASBENCH_EVAL_HPP
