/* biasbench: C API for the media-bias classification toolkit.
 *
 * All functions return bb_status; BB_OK means success and anything else is
 * an error whose human-readable message is available from bb_last_error()
 * on the same thread. Handles are opaque and must be released with the
 * matching *_free function. Handles are safe to share across threads for
 * read-only use; training and the run_* workflow commands assume exclusive
 * ownership of their inputs and output directory.
 */
#ifndef BIASBENCH_H
#define BIASBENCH_H

#include <stddef.h>

#if defined(_WIN32)
#define BB_API __declspec(dllexport)
#else
#define BB_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum bb_status {
  BB_OK = 0,
  BB_ERR_IO = 1,
  BB_ERR_PARSE = 2,
  BB_ERR_INVALID_ARGUMENT = 3,
  BB_ERR_STATE = 4,
  BB_ERR_NUMERIC = 5,
  BB_ERR_ALIGNMENT = 6,
  BB_ERR_LOCKED = 7,
  BB_ERR_INTERNAL = 8
} bb_status;

BB_API const char* bb_version(void);
BB_API const char* bb_status_name(bb_status status);
/* Message for the most recent failure on this thread; empty if none. */
BB_API const char* bb_last_error(void);

typedef struct bb_experiment bb_experiment; /* experiment configuration */
typedef struct bb_dataset bb_dataset;       /* immutable labeled sentences */
typedef struct bb_fold_plan bb_fold_plan;   /* stratified fold assignment */
typedef struct bb_bundle bb_bundle;         /* encoder + classifier head */

/* --- experiment configuration ----------------------------------------- */

BB_API bb_status bb_experiment_default(bb_experiment** out);
BB_API bb_status bb_experiment_load(const char* config_path, bb_experiment** out);
/* Overrides one "section.key" (same keys as the config file). */
BB_API bb_status bb_experiment_set(bb_experiment* experiment, const char* key,
                                   const char* value);
BB_API bb_status bb_experiment_get(const bb_experiment* experiment, const char* key,
                                   char* buffer, size_t buffer_size);
BB_API bb_status bb_experiment_hash(const bb_experiment* experiment, char* buffer,
                                    size_t buffer_size);
BB_API void bb_experiment_free(bb_experiment* experiment);

/* --- corpus ------------------------------------------------------------ */

BB_API bb_status bb_ingest_wnc(const char* path, int pre_column, int post_column,
                               long pair_limit, bb_dataset** out);
BB_API bb_status bb_ingest_babe(const char* path, char delimiter, bb_dataset** out);
BB_API bb_status bb_dataset_load_cache(const char* path, const char* name, bb_dataset** out);
BB_API bb_status bb_dataset_save_cache(const bb_dataset* dataset, const char* path);
BB_API bb_status bb_dataset_size(const bb_dataset* dataset, long* out);
BB_API bb_status bb_dataset_class_counts(const bb_dataset* dataset, long* non_biased,
                                         long* biased);
BB_API void bb_dataset_free(bb_dataset* dataset);

BB_API bb_status bb_make_synthetic(long n_pairs, unsigned long long vocab_seed,
                                   bb_dataset** pretrain_out, bb_dataset** finetune_out);

BB_API bb_status bb_make_folds(const bb_dataset* dataset, int k, unsigned long long seed,
                               bb_fold_plan** out);
BB_API bb_status bb_fold_plan_hash(const bb_fold_plan* plan, char* buffer, size_t buffer_size);
BB_API bb_status bb_fold_of(const bb_fold_plan* plan, const char* example_id, int* out);
BB_API void bb_fold_plan_free(bb_fold_plan* plan);

/* --- model bundles ------------------------------------------------------ */

BB_API bb_status bb_bundle_load(const char* path, bb_bundle** out);
BB_API bb_status bb_bundle_save(const bb_bundle* bundle, const char* path);
/* "RAW", "DOMAIN_ADAPTED" or "FINE_TUNED"; the pointer stays valid. */
BB_API bb_status bb_bundle_stage(const bb_bundle* bundle, const char** out);
BB_API bb_status bb_bundle_predict(const bb_bundle* bundle, const char* text,
                                   double* prob_biased, int* predicted_label);
BB_API void bb_bundle_free(bb_bundle* bundle);

/* --- evaluation and statistics ------------------------------------------ */

/* Macro F1 over a stored prediction file. */
BB_API bb_status bb_macro_f1_file(const char* predictions_path, double* out);

typedef enum bb_mcnemar_variant {
  BB_MCNEMAR_CHI2 = 0,
  BB_MCNEMAR_CHI2_CORRECTED = 1,
  BB_MCNEMAR_EXACT = 2
} bb_mcnemar_variant;

typedef struct bb_mcnemar_result {
  double chi2;
  double p_value;
  int variant; /* bb_mcnemar_variant actually used */
  int significant_at_05;
  long n;
  long a_only; /* A correct, B wrong */
  long b_only; /* A wrong, B correct */
} bb_mcnemar_result;

/* McNemar from raw contingency counts. */
BB_API bb_status bb_mcnemar_counts(long both_correct, long a_only, long b_only,
                                   long both_wrong, bb_mcnemar_variant variant,
                                   bb_mcnemar_result* out);
/* McNemar over two aligned prediction files (no report files written). */
BB_API bb_status bb_mcnemar_files(const char* predictions_a, const char* predictions_b,
                                  bb_mcnemar_variant variant, bb_mcnemar_result* out);
/* Survival function of chi-squared with one degree of freedom. */
BB_API bb_status bb_chi2_survival_1df(double statistic, double* out);

/* --- workflow commands (what the CLI verbs call) ------------------------- */

BB_API bb_status bb_run_ingest(const bb_experiment* experiment);
BB_API bb_status bb_run_synth(const bb_experiment* experiment);
BB_API bb_status bb_run_pretrain(const bb_experiment* experiment);
/* bundle_path may be NULL to pick up the configured bundle chain. */
BB_API bb_status bb_run_finetune(const bb_experiment* experiment, const char* bundle_path);
/* domain_adapted: 0 = baseline (skip the intermediate stage), 1 = full path.
 * On success writes the run manifest path into the buffer (if given) and the
 * cross-validated mean macro F1 into mean_f1_out (if given). */
BB_API bb_status bb_run_pipeline(const bb_experiment* experiment, int domain_adapted,
                                 char* manifest_path_buffer, size_t buffer_size,
                                 double* mean_f1_out);
/* reference_p: reported p-value to display alongside the computed one; pass
 * NaN for none. */
BB_API bb_status bb_run_compare(const bb_experiment* experiment, const char* predictions_a,
                                const char* predictions_b, int continuity_correction,
                                int exact, double reference_p, bb_mcnemar_result* out);
BB_API bb_status bb_run_report(const bb_experiment* experiment,
                               const char* const* manifest_paths, size_t manifest_count);

#ifdef __cplusplus
} /* extern "C" */
#endif

#endif /* BIASBENCH_H */
