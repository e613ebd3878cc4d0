#include "biasbench.h"

#include <cmath>
#include <cstring>
#include <string>
#include <utility>

#include "biasbench/common.hpp"
#include "biasbench/corpus.hpp"
#include "biasbench/eval.hpp"
#include "biasbench/model.hpp"
#include "biasbench/pipeline.hpp"
#include "biasbench/stats.hpp"
#include "biasbench/text.hpp"

namespace {

thread_local std::string g_last_error;

bb_status status_of(biasbench::ErrorKind kind) {
  using biasbench::ErrorKind;
  switch (kind) {
    case ErrorKind::Io: return BB_ERR_IO;
    case ErrorKind::Parse: return BB_ERR_PARSE;
    case ErrorKind::InvalidArgument: return BB_ERR_INVALID_ARGUMENT;
    case ErrorKind::State: return BB_ERR_STATE;
    case ErrorKind::Numeric: return BB_ERR_NUMERIC;
    case ErrorKind::Alignment: return BB_ERR_ALIGNMENT;
    case ErrorKind::Locked: return BB_ERR_LOCKED;
    case ErrorKind::Internal: return BB_ERR_INTERNAL;
  }
  return BB_ERR_INTERNAL;
}

template <typename Fn>
bb_status guarded(Fn&& fn) {
  try {
    fn();
    g_last_error.clear();
    return BB_OK;
  } catch (const biasbench::Error& e) {
    g_last_error = e.what();
    return status_of(e.kind());
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return BB_ERR_INTERNAL;
  } catch (...) {
    g_last_error = "unknown error";
    return BB_ERR_INTERNAL;
  }
}

bb_status fail_arg(const char* message) {
  g_last_error = message;
  return BB_ERR_INVALID_ARGUMENT;
}

bb_status copy_out(const std::string& value, char* buffer, size_t buffer_size) {
  if (buffer == nullptr) return BB_OK;
  if (buffer_size <= value.size()) return fail_arg("output buffer too small");
  std::memcpy(buffer, value.c_str(), value.size() + 1);
  return BB_OK;
}

}  // namespace

struct bb_experiment {
  biasbench::pipeline::ExperimentConfig config;
};

struct bb_dataset {
  biasbench::corpus::Dataset dataset;
};

struct bb_fold_plan {
  biasbench::corpus::FoldPlan plan;
};

struct bb_bundle {
  biasbench::model::ModelBundle bundle;
};

extern "C" {

const char* bb_version(void) { return "1.0.0"; }

const char* bb_status_name(bb_status status) {
  switch (status) {
    case BB_OK: return "ok";
    case BB_ERR_IO: return "io";
    case BB_ERR_PARSE: return "parse";
    case BB_ERR_INVALID_ARGUMENT: return "invalid-argument";
    case BB_ERR_STATE: return "state";
    case BB_ERR_NUMERIC: return "numeric";
    case BB_ERR_ALIGNMENT: return "alignment";
    case BB_ERR_LOCKED: return "locked";
    case BB_ERR_INTERNAL: return "internal";
  }
  return "unknown";
}

const char* bb_last_error(void) { return g_last_error.c_str(); }

/* --- experiment configuration ----------------------------------------- */

bb_status bb_experiment_default(bb_experiment** out) {
  if (!out) return fail_arg("out is null");
  return guarded([&] { *out = new bb_experiment{}; });
}

bb_status bb_experiment_load(const char* config_path, bb_experiment** out) {
  if (!out || !config_path) return fail_arg("config_path/out is null");
  return guarded([&] {
    *out = new bb_experiment{
        biasbench::pipeline::ExperimentConfig::from_file(config_path)};
  });
}

bb_status bb_experiment_set(bb_experiment* experiment, const char* key, const char* value) {
  if (!experiment || !key || !value) return fail_arg("experiment/key/value is null");
  return guarded([&] { experiment->config.set(key, value); });
}

bb_status bb_experiment_get(const bb_experiment* experiment, const char* key, char* buffer,
                            size_t buffer_size) {
  if (!experiment || !key) return fail_arg("experiment/key is null");
  bb_status result = BB_OK;
  bb_status run = guarded([&] {
    if (std::string(key) == "run.out") {  // not part of the canonical form
      result = copy_out(experiment->config.out_dir, buffer, buffer_size);
      return;
    }
    const std::string canonical = experiment->config.canonical();
    const std::string needle = std::string(key) + " = ";
    std::size_t pos = 0;
    while (pos < canonical.size()) {
      std::size_t end = canonical.find('\n', pos);
      if (end == std::string::npos) end = canonical.size();
      const std::string line = canonical.substr(pos, end - pos);
      if (line.rfind(needle, 0) == 0) {
        result = copy_out(line.substr(needle.size()), buffer, buffer_size);
        return;
      }
      pos = end + 1;
    }
    biasbench::fail(biasbench::ErrorKind::InvalidArgument,
                    std::string("unknown config key '") + key + "'");
  });
  return run != BB_OK ? run : result;
}

bb_status bb_experiment_hash(const bb_experiment* experiment, char* buffer,
                             size_t buffer_size) {
  if (!experiment) return fail_arg("experiment is null");
  bb_status result = BB_OK;
  bb_status run =
      guarded([&] { result = copy_out(experiment->config.config_hash(), buffer, buffer_size); });
  return run != BB_OK ? run : result;
}

void bb_experiment_free(bb_experiment* experiment) { delete experiment; }

/* --- corpus ------------------------------------------------------------ */

bb_status bb_ingest_wnc(const char* path, int pre_column, int post_column, long pair_limit,
                        bb_dataset** out) {
  if (!path || !out) return fail_arg("path/out is null");
  return guarded([&] {
    biasbench::corpus::WncOptions options;
    options.pre_column = pre_column;
    options.post_column = post_column;
    options.limit = pair_limit;
    *out = new bb_dataset{biasbench::corpus::ingest_wnc(path, options, nullptr)};
  });
}

bb_status bb_ingest_babe(const char* path, char delimiter, bb_dataset** out) {
  if (!path || !out) return fail_arg("path/out is null");
  return guarded([&] {
    biasbench::corpus::BabeOptions options;
    options.delimiter = delimiter;
    *out = new bb_dataset{biasbench::corpus::ingest_babe(path, options, nullptr)};
  });
}

bb_status bb_dataset_load_cache(const char* path, const char* name, bb_dataset** out) {
  if (!path || !out) return fail_arg("path/out is null");
  return guarded([&] {
    *out = new bb_dataset{biasbench::corpus::load_cache(
        path, biasbench::corpus::Source::Synthetic, name ? name : "dataset")};
  });
}

bb_status bb_dataset_save_cache(const bb_dataset* dataset, const char* path) {
  if (!dataset || !path) return fail_arg("dataset/path is null");
  return guarded([&] { biasbench::corpus::save_cache(dataset->dataset, path); });
}

bb_status bb_dataset_size(const bb_dataset* dataset, long* out) {
  if (!dataset || !out) return fail_arg("dataset/out is null");
  *out = static_cast<long>(dataset->dataset.size());
  return BB_OK;
}

bb_status bb_dataset_class_counts(const bb_dataset* dataset, long* non_biased, long* biased) {
  if (!dataset) return fail_arg("dataset is null");
  const auto counts = dataset->dataset.class_counts();
  if (non_biased) *non_biased = static_cast<long>(counts[0]);
  if (biased) *biased = static_cast<long>(counts[1]);
  return BB_OK;
}

void bb_dataset_free(bb_dataset* dataset) { delete dataset; }

bb_status bb_make_synthetic(long n_pairs, unsigned long long vocab_seed,
                            bb_dataset** pretrain_out, bb_dataset** finetune_out) {
  if (!pretrain_out || !finetune_out) return fail_arg("output handle is null");
  if (n_pairs < 0) return fail_arg("n_pairs must be non-negative");
  return guarded([&] {
    auto [pretrain, finetune] =
        biasbench::corpus::make_synthetic(static_cast<std::size_t>(n_pairs), vocab_seed);
    *pretrain_out = new bb_dataset{std::move(pretrain)};
    *finetune_out = new bb_dataset{std::move(finetune)};
  });
}

bb_status bb_make_folds(const bb_dataset* dataset, int k, unsigned long long seed,
                        bb_fold_plan** out) {
  if (!dataset || !out) return fail_arg("dataset/out is null");
  return guarded(
      [&] { *out = new bb_fold_plan{biasbench::corpus::make_folds(dataset->dataset, k, seed)}; });
}

bb_status bb_fold_plan_hash(const bb_fold_plan* plan, char* buffer, size_t buffer_size) {
  if (!plan) return fail_arg("plan is null");
  return copy_out(biasbench::to_hex(plan->plan.hash()), buffer, buffer_size);
}

bb_status bb_fold_of(const bb_fold_plan* plan, const char* example_id, int* out) {
  if (!plan || !example_id || !out) return fail_arg("plan/example_id/out is null");
  auto it = plan->plan.assignments.find(example_id);
  if (it == plan->plan.assignments.end()) {
    g_last_error = std::string("id not in fold plan: ") + example_id;
    return BB_ERR_INVALID_ARGUMENT;
  }
  *out = it->second;
  return BB_OK;
}

void bb_fold_plan_free(bb_fold_plan* plan) { delete plan; }

/* --- model bundles ------------------------------------------------------ */

bb_status bb_bundle_load(const char* path, bb_bundle** out) {
  if (!path || !out) return fail_arg("path/out is null");
  return guarded([&] { *out = new bb_bundle{biasbench::model::load_bundle(path)}; });
}

bb_status bb_bundle_save(const bb_bundle* bundle, const char* path) {
  if (!bundle || !path) return fail_arg("bundle/path is null");
  return guarded([&] { biasbench::model::save_bundle(bundle->bundle, path); });
}

bb_status bb_bundle_stage(const bb_bundle* bundle, const char** out) {
  if (!bundle || !out) return fail_arg("bundle/out is null");
  *out = biasbench::model::stage_name(bundle->bundle.stage);
  return BB_OK;
}

bb_status bb_bundle_predict(const bb_bundle* bundle, const char* text, double* prob_biased,
                            int* predicted_label) {
  if (!bundle || !text) return fail_arg("bundle/text is null");
  return guarded([&] {
    const std::vector<double> pooled = bundle->bundle.backend.encode(text);
    const biasbench::model::ScoredPrediction scored =
        biasbench::model::forward(bundle->bundle.head, pooled);
    if (prob_biased) *prob_biased = scored.probs[1];
    if (predicted_label) *predicted_label = scored.predicted_label;
  });
}

void bb_bundle_free(bb_bundle* bundle) { delete bundle; }

/* --- evaluation and statistics ------------------------------------------ */

bb_status bb_macro_f1_file(const char* predictions_path, double* out) {
  if (!predictions_path || !out) return fail_arg("predictions_path/out is null");
  return guarded([&] {
    auto [header, records] = biasbench::eval::load_predictions(predictions_path);
    *out = biasbench::eval::macro_f1(records);
  });
}

namespace {

void fill_mcnemar(const biasbench::stats::ContingencyTable& table,
                  const biasbench::stats::McNemarResult& result, bb_mcnemar_result* out) {
  out->chi2 = result.chi2;
  out->p_value = result.p_value;
  out->variant = static_cast<int>(result.variant);
  out->significant_at_05 = result.significant_at_05 ? 1 : 0;
  out->n = table.n();
  out->a_only = table.a_only;
  out->b_only = table.b_only;
}

biasbench::stats::McNemarResult run_variant(const biasbench::stats::ContingencyTable& table,
                                            bb_mcnemar_variant variant) {
  switch (variant) {
    case BB_MCNEMAR_CHI2: return biasbench::stats::mcnemar_chi2(table, false);
    case BB_MCNEMAR_CHI2_CORRECTED: return biasbench::stats::mcnemar_chi2(table, true);
    case BB_MCNEMAR_EXACT: return biasbench::stats::mcnemar_exact(table);
  }
  biasbench::fail(biasbench::ErrorKind::InvalidArgument, "unknown McNemar variant");
}

}  // namespace

bb_status bb_mcnemar_counts(long both_correct, long a_only, long b_only, long both_wrong,
                            bb_mcnemar_variant variant, bb_mcnemar_result* out) {
  if (!out) return fail_arg("out is null");
  if (both_correct < 0 || a_only < 0 || b_only < 0 || both_wrong < 0) {
    return fail_arg("contingency counts must be non-negative");
  }
  return guarded([&] {
    biasbench::stats::ContingencyTable table{both_correct, a_only, b_only, both_wrong};
    fill_mcnemar(table, run_variant(table, variant), out);
  });
}

bb_status bb_mcnemar_files(const char* predictions_a, const char* predictions_b,
                           bb_mcnemar_variant variant, bb_mcnemar_result* out) {
  if (!predictions_a || !predictions_b || !out) return fail_arg("paths/out is null");
  return guarded([&] {
    auto [header_a, records_a] = biasbench::eval::load_predictions(predictions_a);
    auto [header_b, records_b] = biasbench::eval::load_predictions(predictions_b);
    if (header_a.fold_plan_hash != header_b.fold_plan_hash) {
      biasbench::fail(biasbench::ErrorKind::Alignment,
                      "prediction files were made under different fold plans");
    }
    biasbench::stats::ContingencyTable table =
        biasbench::stats::build_contingency(records_a, records_b);
    fill_mcnemar(table, run_variant(table, variant), out);
  });
}

bb_status bb_chi2_survival_1df(double statistic, double* out) {
  if (!out) return fail_arg("out is null");
  return guarded([&] { *out = biasbench::stats::chi2_survival_1df(statistic); });
}

/* --- workflow commands --------------------------------------------------- */

bb_status bb_run_ingest(const bb_experiment* experiment) {
  if (!experiment) return fail_arg("experiment is null");
  return guarded([&] { biasbench::pipeline::run_ingest(experiment->config); });
}

bb_status bb_run_synth(const bb_experiment* experiment) {
  if (!experiment) return fail_arg("experiment is null");
  return guarded([&] { biasbench::pipeline::run_synth(experiment->config); });
}

bb_status bb_run_pretrain(const bb_experiment* experiment) {
  if (!experiment) return fail_arg("experiment is null");
  return guarded([&] { biasbench::pipeline::run_pretrain(experiment->config); });
}

bb_status bb_run_finetune(const bb_experiment* experiment, const char* bundle_path) {
  if (!experiment) return fail_arg("experiment is null");
  return guarded([&] {
    biasbench::pipeline::run_finetune(experiment->config,
                                      bundle_path ? bundle_path : std::string());
  });
}

bb_status bb_run_pipeline(const bb_experiment* experiment, int domain_adapted,
                          char* manifest_path_buffer, size_t buffer_size, double* mean_f1_out) {
  if (!experiment) return fail_arg("experiment is null");
  bb_status result = BB_OK;
  bb_status run = guarded([&] {
    biasbench::pipeline::RunManifest manifest = biasbench::pipeline::run_pipeline(
        experiment->config, domain_adapted ? biasbench::pipeline::Mode::DomainAdapted
                                           : biasbench::pipeline::Mode::Baseline);
    if (mean_f1_out) {
      *mean_f1_out = biasbench::parse_real(manifest.at("mean_f1"), "mean_f1");
    }
    result = copy_out(manifest.path, manifest_path_buffer, buffer_size);
  });
  return run != BB_OK ? run : result;
}

bb_status bb_run_compare(const bb_experiment* experiment, const char* predictions_a,
                         const char* predictions_b, int continuity_correction, int exact,
                         double reference_p, bb_mcnemar_result* out) {
  if (!experiment || !predictions_a || !predictions_b) {
    return fail_arg("experiment/paths is null");
  }
  return guarded([&] {
    biasbench::pipeline::CompareOptions options;
    options.continuity_correction = continuity_correction != 0;
    options.exact = exact != 0;
    if (!std::isnan(reference_p)) options.reference_p = reference_p;
    biasbench::pipeline::CompareOutcome outcome = biasbench::pipeline::run_compare(
        experiment->config, predictions_a, predictions_b, options);
    if (out) fill_mcnemar(outcome.table, outcome.row.result, out);
  });
}

bb_status bb_run_report(const bb_experiment* experiment, const char* const* manifest_paths,
                        size_t manifest_count) {
  if (!experiment || (!manifest_paths && manifest_count > 0)) {
    return fail_arg("experiment/manifest_paths is null");
  }
  return guarded([&] {
    std::vector<std::string> paths(manifest_paths, manifest_paths + manifest_count);
    biasbench::pipeline::run_report(experiment->config, paths);
  });
}

} /* extern "C" */
