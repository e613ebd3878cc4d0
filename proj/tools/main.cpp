// biasbench command-line front end. Talks to the shared library exclusively
// through the C API in biasbench.h.

#include <cmath>
#include <cstdio>
#include <memory>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "biasbench.h"

namespace {

struct ExperimentDeleter {
  void operator()(bb_experiment* e) const { bb_experiment_free(e); }
};
using ExperimentPtr = std::unique_ptr<bb_experiment, ExperimentDeleter>;

int report_failure(bb_status status, const char* verb) {
  std::fprintf(stderr, "biasbench %s: error (%s): %s\n", verb, bb_status_name(status),
               bb_last_error());
  return 1;
}

ExperimentPtr load_experiment(const std::string& config_path, const std::string& seed,
                              const std::string& out_dir, bb_status* status) {
  bb_experiment* raw = nullptr;
  *status = config_path.empty() ? bb_experiment_default(&raw)
                                : bb_experiment_load(config_path.c_str(), &raw);
  ExperimentPtr experiment(raw);
  if (*status != BB_OK) return nullptr;
  if (!seed.empty() && (*status = bb_experiment_set(experiment.get(), "run.seed",
                                                    seed.c_str())) != BB_OK) {
    return nullptr;
  }
  if (!out_dir.empty() && (*status = bb_experiment_set(experiment.get(), "run.out",
                                                       out_dir.c_str())) != BB_OK) {
    return nullptr;
  }
  return experiment;
}

void print_mcnemar(const bb_mcnemar_result& result) {
  const char* variant = result.variant == BB_MCNEMAR_EXACT ? "exact"
                        : result.variant == BB_MCNEMAR_CHI2_CORRECTED ? "chi2-corrected"
                                                                      : "chi2";
  std::printf("n=%ld discordant: a_only=%ld b_only=%ld\n", result.n, result.a_only,
              result.b_only);
  std::printf("variant=%s chi2=%.4f p=%.6f%s\n", variant, result.chi2, result.p_value,
              result.significant_at_05 ? " (*p<.05)" : "");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Domain-adaptive pre-training toolkit for sentence-level bias classification"};
  app.require_subcommand(1);

  std::string config_path;
  std::string seed_override;
  std::string out_override;
  app.add_option("--config", config_path, "experiment config file (INI)")
      ->envname("BIASBENCH_CONFIG");
  app.add_option("--seed", seed_override, "override run.seed")->envname("BIASBENCH_SEED");
  app.add_option("--out", out_override, "override run.out (output directory)")
      ->envname("BIASBENCH_OUT");

  auto* cmd_ingest = app.add_subcommand("ingest", "read the configured corpora into caches");
  auto* cmd_synth = app.add_subcommand("synth", "generate the synthetic desk-scale corpora");
  auto* cmd_pretrain =
      app.add_subcommand("pretrain", "domain-adaptive stage over the pre-training cache");

  auto* cmd_finetune = app.add_subcommand("finetune", "single fine-tuning pass (no folds)");
  std::string finetune_bundle;
  cmd_finetune->add_option("--bundle", finetune_bundle, "bundle file to start from");

  auto* cmd_pipeline =
      app.add_subcommand("pipeline", "stage training plus cross-validated evaluation");
  std::string mode = "domain-adapted";
  cmd_pipeline->add_option("--mode", mode, "baseline | domain-adapted")
      ->check(CLI::IsMember({"baseline", "domain-adapted"}));

  auto* cmd_compare = app.add_subcommand("compare", "McNemar test over two prediction files");
  std::string pred_a, pred_b;
  bool correction = false, exact = false;
  double reference_p = std::nan("");
  cmd_compare->add_option("a", pred_a, "first prediction file")->required();
  cmd_compare->add_option("b", pred_b, "second prediction file")->required();
  cmd_compare->add_flag("--continuity-correction", correction, "apply the continuity correction");
  cmd_compare->add_flag("--exact", exact, "use the exact binomial variant");
  cmd_compare->add_option("--reference-p", reference_p,
                          "published p-value to print alongside the computed one");

  auto* cmd_report = app.add_subcommand("report", "cross-validation table over run manifests");
  std::vector<std::string> manifests;
  cmd_report->add_option("manifests", manifests, "run manifest files")->required();

  CLI11_PARSE(app, argc, argv);

  bb_status status = BB_OK;
  ExperimentPtr experiment = load_experiment(config_path, seed_override, out_override, &status);
  if (!experiment) return report_failure(status, "config");

  if (cmd_ingest->parsed()) {
    if ((status = bb_run_ingest(experiment.get())) != BB_OK) {
      return report_failure(status, "ingest");
    }
    std::printf("ingest: caches written\n");
  } else if (cmd_synth->parsed()) {
    if ((status = bb_run_synth(experiment.get())) != BB_OK) {
      return report_failure(status, "synth");
    }
    std::printf("synth: caches written\n");
  } else if (cmd_pretrain->parsed()) {
    if ((status = bb_run_pretrain(experiment.get())) != BB_OK) {
      return report_failure(status, "pretrain");
    }
    std::printf("pretrain: domain-adapted bundle written\n");
  } else if (cmd_finetune->parsed()) {
    status = bb_run_finetune(experiment.get(),
                             finetune_bundle.empty() ? nullptr : finetune_bundle.c_str());
    if (status != BB_OK) return report_failure(status, "finetune");
    std::printf("finetune: fine-tuned bundle written\n");
  } else if (cmd_pipeline->parsed()) {
    char manifest_path[4096] = {0};
    double mean_f1 = 0.0;
    status = bb_run_pipeline(experiment.get(), mode == "domain-adapted" ? 1 : 0, manifest_path,
                             sizeof(manifest_path), &mean_f1);
    if (status != BB_OK) return report_failure(status, "pipeline");
    std::printf("pipeline (%s): mean macro F1 = %.6f\nmanifest: %s\n", mode.c_str(), mean_f1,
                manifest_path);
  } else if (cmd_compare->parsed()) {
    bb_mcnemar_result result{};
    status = bb_run_compare(experiment.get(), pred_a.c_str(), pred_b.c_str(), correction ? 1 : 0,
                            exact ? 1 : 0, reference_p, &result);
    if (status != BB_OK) return report_failure(status, "compare");
    print_mcnemar(result);
  } else if (cmd_report->parsed()) {
    std::vector<const char*> paths;
    paths.reserve(manifests.size());
    for (const auto& m : manifests) paths.push_back(m.c_str());
    status = bb_run_report(experiment.get(), paths.data(), paths.size());
    if (status != BB_OK) return report_failure(status, "report");
    std::printf("report: table written\n");
  }
  return 0;
}
