#ifndef BIASBENCH_PIPELINE_HPP
#define BIASBENCH_PIPELINE_HPP

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "biasbench/corpus.hpp"
#include "biasbench/eval.hpp"
#include "biasbench/model.hpp"
#include "biasbench/stats.hpp"
#include "biasbench/train.hpp"

namespace biasbench::pipeline {

// Everything a run needs, loadable from one INI-style config file. A hash of
// the canonical serialization is embedded in every artifact a run produces.
struct ExperimentConfig {
  // [run]
  std::uint64_t seed = 1;
  std::string out_dir = "out";
  std::string model_name = "toy";

  // [data]
  std::string wnc_path;
  std::string babe_path;
  int wnc_pre_column = 3;
  int wnc_post_column = 4;
  long wnc_limit = -1;
  char babe_delimiter = ';';
  std::string babe_text_column = "text";
  std::string babe_label_column = "label";

  // [synth]
  std::size_t synth_pretrain_pairs = 500;
  std::size_t synth_finetune_sentences = 300;

  // [backend]
  model::BackendMode backend_kind = model::BackendMode::Toy;
  int hidden_dim = 32;
  int max_tokens = 128;
  int vocab_buckets = 4096;
  std::string checkpoint_path;
  double dropout = 0.2;
  bool freeze_encoder = false;

  // [pretrain] / [finetune]
  train::TrainConfig pretrain;  // defaults: 1 epoch
  train::TrainConfig finetune;  // defaults: 4 epochs

  // [eval]
  int folds = 5;

  // [report]
  bool emit_markdown = true;
  bool emit_dsv = true;
  bool include_reference = false;
  std::string reference_rows_path;
  bool allow_mixed_datasets = false;

  ExperimentConfig();

  static ExperimentConfig from_file(const std::string& path);
  static ExperimentConfig from_map(const std::map<std::string, std::string>& values,
                                   const std::string& origin);

  // Applies one "section.key" override; same validation as file loading.
  void set(const std::string& dotted_key, const std::string& value);

  std::string canonical() const;  // all keys, fixed order, defaults materialized
  std::string config_hash() const;

  // Paths derived from out_dir.
  std::string caches_dir() const;
  std::string pretrain_cache() const;
  std::string pretrain_cache_report() const;
  std::string task_cache() const;
  std::string task_cache_report() const;
  std::string bundles_dir() const;
  std::string runs_dir() const;
  std::string reports_dir() const;
};

enum class Mode { Baseline, DomainAdapted };

const char* mode_name(Mode mode);

struct RunManifest {
  std::string path;  // where the manifest itself lives
  std::map<std::string, std::string> entries;

  const std::string& at(const std::string& key) const;
  void write() const;
  static RunManifest read(const std::string& path);
  // COMPLETE status, referenced files present, config hash embedded in each.
  void verify() const;
};

// Advisory lock on an output directory: refuses to construct while another
// writer holds it. Released (and the lock file removed) on destruction.
class DirLock {
 public:
  explicit DirLock(const std::string& dir);
  ~DirLock();
  DirLock(const DirLock&) = delete;
  DirLock& operator=(const DirLock&) = delete;

 private:
  std::string lock_path_;
  int fd_ = -1;
};

struct IngestOutcome {
  corpus::IngestReport pretrain_report;
  corpus::IngestReport task_report;
  bool has_pretrain = false;
  bool has_task = false;
};

// `ingest`: read the configured corpora and write caches + reports.
IngestOutcome run_ingest(const ExperimentConfig& config);

// `synth`: generate the synthetic corpora into the same cache layout.
IngestOutcome run_synth(const ExperimentConfig& config);

// `pretrain`: RAW bundle -> domain-adaptive stage on the pretrain cache.
struct PretrainOutcome {
  std::string raw_bundle_path;
  std::string adapted_bundle_path;
  std::string report_path;
  train::TrainReport report;
};
PretrainOutcome run_pretrain(const ExperimentConfig& config);

// `finetune`: single fine-tuning pass over the whole task cache (no CV).
struct FinetuneOutcome {
  std::string bundle_path;
  std::string report_path;
  train::TrainReport report;
};
FinetuneOutcome run_finetune(const ExperimentConfig& config,
                             const std::string& bundle_path);  // empty = from config

// `pipeline`: stage training + shared-fold cross-validation + artifacts.
RunManifest run_pipeline(const ExperimentConfig& config, Mode mode);

struct CompareOptions {
  bool continuity_correction = false;
  bool exact = false;
  std::optional<double> reference_p;
};

struct CompareOutcome {
  stats::ComparisonRow row;
  stats::ContingencyTable table;
  std::string markdown_path;
  std::string dsv_path;
};

// `compare`: McNemar over two aligned prediction files.
CompareOutcome run_compare(const ExperimentConfig& config, const std::string& predictions_a,
                           const std::string& predictions_b, const CompareOptions& options);

struct ReportOutcome {
  std::vector<eval::TableRow> rows;
  std::string markdown_path;
  std::string dsv_path;
};

// `report`: cross-validation results table over one or more run manifests.
ReportOutcome run_report(const ExperimentConfig& config,
                         const std::vector<std::string>& manifest_paths);

std::string utc_timestamp();

}  // namespace biasbench::pipeline

#endif  // BIASBENCH_PIPELINE_HPP
