#include "biasbench/pipeline.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <cctype>
#include <cerrno>
#include <cstring>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "biasbench/common.hpp"
#include "biasbench/rng.hpp"
#include "biasbench/text.hpp"

namespace fs = std::filesystem;

namespace biasbench::pipeline {

const char* mode_name(Mode mode) {
  return mode == Mode::Baseline ? "baseline" : "domain-adapted";
}

ExperimentConfig::ExperimentConfig() {
  pretrain.epochs = 1;   // convergence after one pass over the pair corpus
  finetune.epochs = 4;
}

namespace {

std::string bool_str(bool b) { return b ? "true" : "false"; }

std::string opt_int_str(const std::optional<int>& v) {
  return v ? std::to_string(*v) : "none";
}

std::string opt_real_str(const std::optional<double>& v) {
  return v ? format_real(*v) : "none";
}

std::optional<int> parse_opt_int(const std::string& value, const std::string& key) {
  if (value == "none" || value.empty()) return std::nullopt;
  return static_cast<int>(parse_int(value, key));
}

std::optional<double> parse_opt_real(const std::string& value, const std::string& key) {
  if (value == "none" || value.empty()) return std::nullopt;
  return parse_real(value, key);
}

char parse_delimiter(const std::string& value, const std::string& key) {
  if (value == "tab") return '\t';
  if (value.size() != 1) {
    fail(ErrorKind::Parse, "expected single character or 'tab' for '" + key + "'");
  }
  return value[0];
}

std::string delimiter_str(char d) { return d == '\t' ? "tab" : std::string(1, d); }

void apply_train_key(train::TrainConfig& tc, const std::string& field,
                     const std::string& value, const std::string& key) {
  if (field == "epochs") tc.epochs = static_cast<int>(parse_int(value, key));
  else if (field == "batch_size") tc.batch_size = static_cast<int>(parse_int(value, key));
  else if (field == "learning_rate") tc.learning_rate = parse_real(value, key);
  else if (field == "weight_decay") tc.weight_decay = parse_real(value, key);
  else if (field == "holdout_fraction") tc.holdout_fraction = parse_real(value, key);
  else if (field == "early_stop_patience") tc.early_stop_patience = parse_opt_int(value, key);
  else if (field == "grad_clip") tc.grad_clip = parse_opt_real(value, key);
  else fail(ErrorKind::Parse, "unknown config key '" + key + "'");
}

void emit_train_section(std::ostringstream& out, const char* section,
                        const train::TrainConfig& tc) {
  out << section << ".batch_size = " << tc.batch_size << "\n";
  out << section << ".early_stop_patience = " << opt_int_str(tc.early_stop_patience) << "\n";
  out << section << ".epochs = " << tc.epochs << "\n";
  out << section << ".grad_clip = " << opt_real_str(tc.grad_clip) << "\n";
  out << section << ".holdout_fraction = " << format_real(tc.holdout_fraction) << "\n";
  out << section << ".learning_rate = " << format_real(tc.learning_rate) << "\n";
  out << section << ".weight_decay = " << format_real(tc.weight_decay) << "\n";
}

}  // namespace

void ExperimentConfig::set(const std::string& key, const std::string& value) {
  if (key == "run.seed") seed = static_cast<std::uint64_t>(parse_int(value, key));
  else if (key == "run.out") out_dir = value;
  else if (key == "run.model_name") model_name = value;
  else if (key == "data.wnc") wnc_path = value;
  else if (key == "data.babe") babe_path = value;
  else if (key == "data.wnc_pre_column") wnc_pre_column = static_cast<int>(parse_int(value, key));
  else if (key == "data.wnc_post_column") wnc_post_column = static_cast<int>(parse_int(value, key));
  else if (key == "data.wnc_limit") wnc_limit = parse_int(value, key);
  else if (key == "data.babe_delimiter") babe_delimiter = parse_delimiter(value, key);
  else if (key == "data.babe_text_column") babe_text_column = value;
  else if (key == "data.babe_label_column") babe_label_column = value;
  else if (key == "synth.pretrain_pairs") {
    synth_pretrain_pairs = static_cast<std::size_t>(parse_int(value, key));
  } else if (key == "synth.finetune_sentences") {
    synth_finetune_sentences = static_cast<std::size_t>(parse_int(value, key));
  } else if (key == "backend.kind") {
    if (value == "toy") backend_kind = model::BackendMode::Toy;
    else if (value == "checkpoint") backend_kind = model::BackendMode::Checkpoint;
    else fail(ErrorKind::Parse, "backend.kind must be 'toy' or 'checkpoint'");
  } else if (key == "backend.hidden_dim") {
    hidden_dim = static_cast<int>(parse_int(value, key));
  } else if (key == "backend.max_tokens") {
    max_tokens = static_cast<int>(parse_int(value, key));
  } else if (key == "backend.vocab_buckets") {
    vocab_buckets = static_cast<int>(parse_int(value, key));
  } else if (key == "backend.checkpoint") {
    checkpoint_path = value;
  } else if (key == "backend.dropout") {
    dropout = parse_real(value, key);
  } else if (key == "backend.freeze_encoder") {
    freeze_encoder = parse_bool(value, key);
  } else if (key.rfind("pretrain.", 0) == 0) {
    apply_train_key(pretrain, key.substr(9), value, key);
  } else if (key.rfind("finetune.", 0) == 0) {
    apply_train_key(finetune, key.substr(9), value, key);
  } else if (key == "eval.folds") {
    folds = static_cast<int>(parse_int(value, key));
  } else if (key == "report.markdown") {
    emit_markdown = parse_bool(value, key);
  } else if (key == "report.dsv") {
    emit_dsv = parse_bool(value, key);
  } else if (key == "report.include_reference") {
    include_reference = parse_bool(value, key);
  } else if (key == "report.reference_rows") {
    reference_rows_path = value;
  } else if (key == "report.allow_mixed_datasets") {
    allow_mixed_datasets = parse_bool(value, key);
  } else {
    fail(ErrorKind::Parse, "unknown config key '" + key + "'");
  }
}

ExperimentConfig ExperimentConfig::from_map(const std::map<std::string, std::string>& values,
                                            const std::string& origin) {
  ExperimentConfig config;
  for (const auto& [key, value] : values) {
    try {
      config.set(key, value);
    } catch (const Error& e) {
      throw Error(e.kind(), origin + ": " + e.what());
    }
  }
  if (config.folds < 2) fail(ErrorKind::Parse, origin + ": eval.folds must be >= 2");
  if (config.dropout < 0.0 || config.dropout >= 1.0) {
    fail(ErrorKind::Parse, origin + ": backend.dropout must be in [0, 1)");
  }
  if (config.model_name.empty()) fail(ErrorKind::Parse, origin + ": run.model_name is empty");
  return config;
}

ExperimentConfig ExperimentConfig::from_file(const std::string& path) {
  return from_map(read_ini_file(path), path);
}

// run.out is deliberately left out: where artifacts land is an execution
// detail, and reruns of the same experiment in a fresh directory must carry
// the same hash.
std::string ExperimentConfig::canonical() const {
  std::ostringstream out;
  out << "backend.checkpoint = " << checkpoint_path << "\n";
  out << "backend.dropout = " << format_real(dropout) << "\n";
  out << "backend.freeze_encoder = " << bool_str(freeze_encoder) << "\n";
  out << "backend.hidden_dim = " << hidden_dim << "\n";
  out << "backend.kind = "
      << (backend_kind == model::BackendMode::Toy ? "toy" : "checkpoint") << "\n";
  out << "backend.max_tokens = " << max_tokens << "\n";
  out << "backend.vocab_buckets = " << vocab_buckets << "\n";
  out << "data.babe = " << babe_path << "\n";
  out << "data.babe_delimiter = " << delimiter_str(babe_delimiter) << "\n";
  out << "data.babe_label_column = " << babe_label_column << "\n";
  out << "data.babe_text_column = " << babe_text_column << "\n";
  out << "data.wnc = " << wnc_path << "\n";
  out << "data.wnc_limit = " << wnc_limit << "\n";
  out << "data.wnc_post_column = " << wnc_post_column << "\n";
  out << "data.wnc_pre_column = " << wnc_pre_column << "\n";
  out << "eval.folds = " << folds << "\n";
  emit_train_section(out, "finetune", finetune);
  emit_train_section(out, "pretrain", pretrain);
  out << "report.allow_mixed_datasets = " << bool_str(allow_mixed_datasets) << "\n";
  out << "report.dsv = " << bool_str(emit_dsv) << "\n";
  out << "report.include_reference = " << bool_str(include_reference) << "\n";
  out << "report.markdown = " << bool_str(emit_markdown) << "\n";
  out << "report.reference_rows = " << reference_rows_path << "\n";
  out << "run.model_name = " << model_name << "\n";
  out << "run.seed = " << seed << "\n";
  out << "synth.finetune_sentences = " << synth_finetune_sentences << "\n";
  out << "synth.pretrain_pairs = " << synth_pretrain_pairs << "\n";
  return out.str();
}

std::string ExperimentConfig::config_hash() const { return to_hex(fnv1a64(canonical())); }

std::string ExperimentConfig::caches_dir() const { return (fs::path(out_dir) / "caches").string(); }
std::string ExperimentConfig::pretrain_cache() const {
  return (fs::path(caches_dir()) / "pretrain.tsv").string();
}
std::string ExperimentConfig::pretrain_cache_report() const {
  return (fs::path(caches_dir()) / "pretrain-report.txt").string();
}
std::string ExperimentConfig::task_cache() const {
  return (fs::path(caches_dir()) / "task.tsv").string();
}
std::string ExperimentConfig::task_cache_report() const {
  return (fs::path(caches_dir()) / "task-report.txt").string();
}
std::string ExperimentConfig::bundles_dir() const {
  return (fs::path(out_dir) / "bundles").string();
}
std::string ExperimentConfig::runs_dir() const { return (fs::path(out_dir) / "runs").string(); }
std::string ExperimentConfig::reports_dir() const {
  return (fs::path(out_dir) / "reports").string();
}

const std::string& RunManifest::at(const std::string& key) const {
  auto it = entries.find(key);
  if (it == entries.end()) {
    fail(ErrorKind::Parse, "manifest " + path + " lacks key '" + key + "'");
  }
  return it->second;
}

void RunManifest::write() const {
  KvPairs kv;
  for (const auto& [key, value] : entries) kv.emplace_back(key, value);
  write_kv_file(path, kv);
}

RunManifest RunManifest::read(const std::string& manifest_path) {
  RunManifest m;
  m.path = manifest_path;
  m.entries = read_kv_file(manifest_path);
  if (m.entries.count("artifact") == 0 ||
      m.entries.at("artifact") != "biasbench-run-manifest v1") {
    fail(ErrorKind::Parse, manifest_path + " is not a run manifest");
  }
  return m;
}

void RunManifest::verify() const {
  if (at("status") != "COMPLETE") {
    fail(ErrorKind::State, "manifest " + path + " has status " + at("status"));
  }
  const std::string& hash = at("config_hash");

  auto expect_file = [this](const std::string& key) -> std::string {
    const std::string& p = at(key);
    if (!fs::exists(p)) {
      fail(ErrorKind::Io, "manifest " + path + ": referenced file missing: " + p);
    }
    return p;
  };

  auto check_kv_hash = [&](const std::string& file) {
    auto kv = read_kv_file(file);
    if (kv.count("config_hash") == 0 || kv.at("config_hash") != hash) {
      fail(ErrorKind::State, "manifest " + path + ": " + file + " embeds a different config hash");
    }
  };

  check_kv_hash(expect_file("cv_summary"));
  {
    const std::string pred_path = expect_file("predictions");
    auto [header, records] = eval::load_predictions(pred_path);
    if (header.config_hash != hash) {
      fail(ErrorKind::State,
           "manifest " + path + ": " + pred_path + " embeds a different config hash");
    }
  }
  {
    const std::string bundle_path = expect_file("bundle_raw");
    if (model::load_bundle(bundle_path).provenance != hash) {
      fail(ErrorKind::State,
           "manifest " + path + ": " + bundle_path + " embeds a different config hash");
    }
  }
  if (entries.count("bundle_domain_adapted")) {
    const std::string bundle_path = expect_file("bundle_domain_adapted");
    if (model::load_bundle(bundle_path).provenance != hash) {
      fail(ErrorKind::State,
           "manifest " + path + ": " + bundle_path + " embeds a different config hash");
    }
  }
  if (entries.count("pretrain_report")) check_kv_hash(expect_file("pretrain_report"));
  {
    const std::string cache = expect_file("task_cache");
    if (file_digest(cache) != at("task_cache_digest")) {
      fail(ErrorKind::State, "manifest " + path + ": task cache digest changed: " + cache);
    }
  }
}

DirLock::DirLock(const std::string& dir) {
  fs::create_directories(dir);
  lock_path_ = (fs::path(dir) / ".lock").string();
  fd_ = ::open(lock_path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
  if (fd_ < 0) {
    if (errno == EEXIST) {
      fail(ErrorKind::Locked, "output directory is locked by another run (" + lock_path_ +
                                  "); remove the lock file if that run is gone");
    }
    fail(ErrorKind::Io, "cannot create lock file " + lock_path_ + ": " + std::strerror(errno));
  }
  const std::string pid = std::to_string(::getpid()) + "\n";
  [[maybe_unused]] ssize_t n = ::write(fd_, pid.data(), pid.size());
}

DirLock::~DirLock() {
  if (fd_ >= 0) {
    ::close(fd_);
    ::unlink(lock_path_.c_str());
  }
}

std::string utc_timestamp() {
  std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return std::string(buf);
}

namespace {

corpus::Source task_source(const ExperimentConfig& config) {
  return config.babe_path.empty() ? corpus::Source::Synthetic : corpus::Source::Babe;
}

corpus::Source pretrain_source(const ExperimentConfig& config) {
  return config.wnc_path.empty() ? corpus::Source::Synthetic : corpus::Source::Wnc;
}

corpus::Dataset load_task_cache(const ExperimentConfig& config) {
  if (!fs::exists(config.task_cache())) {
    fail(ErrorKind::Io, "task cache not found: " + config.task_cache() +
                            "; run 'ingest' or 'synth' first");
  }
  return corpus::load_cache(config.task_cache(), task_source(config), "task");
}

corpus::Dataset load_pretrain_cache(const ExperimentConfig& config) {
  if (!fs::exists(config.pretrain_cache())) {
    fail(ErrorKind::Io, "pre-training cache not found: " + config.pretrain_cache() +
                            "; run 'ingest' or 'synth' first");
  }
  return corpus::load_cache(config.pretrain_cache(), pretrain_source(config), "pretrain");
}

model::ModelBundle build_raw_bundle(const ExperimentConfig& config) {
  model::ModelBundle bundle;
  if (config.backend_kind == model::BackendMode::Toy) {
    model::BackendConfig bc;
    bc.mode = model::BackendMode::Toy;
    bc.name = config.model_name;
    bc.hidden_dim = config.hidden_dim;
    bc.max_tokens = config.max_tokens;
    bc.vocab_buckets = config.vocab_buckets;
    bc.init_seed = mix_seed(config.seed, "toy-backend");
    bundle.backend = model::EncoderBackend::toy(bc);
  } else {
    if (config.checkpoint_path.empty()) {
      fail(ErrorKind::InvalidArgument, "backend.kind = checkpoint requires backend.checkpoint");
    }
    bundle.backend = model::EncoderBackend::from_checkpoint(config.checkpoint_path);
  }
  bundle.head = model::ClassifierHead::random_init(bundle.backend.hidden_dim(), config.dropout,
                                                   mix_seed(config.seed, "head"));
  bundle.stage = model::Stage::Raw;
  bundle.provenance = config.config_hash();
  return bundle;
}

train::TrainConfig stage_config(const ExperimentConfig& config, bool pretrain_stage) {
  train::TrainConfig tc = pretrain_stage ? config.pretrain : config.finetune;
  tc.freeze_encoder = config.freeze_encoder;
  tc.seed = mix_seed(config.seed, pretrain_stage ? "pretrain-stage" : "finetune-stage");
  return tc;
}

std::string sanitize_filename(const std::string& name) {
  std::string out;
  for (char c : name) {
    out.push_back(std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' ? c : '-');
  }
  return out.empty() ? std::string("model") : out;
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::Io, "cannot write " + path);
  out << text;
  if (!out.flush()) fail(ErrorKind::Io, "write failed: " + path);
}

}  // namespace

IngestOutcome run_ingest(const ExperimentConfig& config) {
  if (config.wnc_path.empty() && config.babe_path.empty()) {
    fail(ErrorKind::InvalidArgument, "nothing to ingest: set data.wnc and/or data.babe");
  }
  DirLock lock(config.out_dir);
  fs::create_directories(config.caches_dir());
  const std::string hash = config.config_hash();

  IngestOutcome outcome;
  if (!config.wnc_path.empty()) {
    corpus::WncOptions options;
    options.pre_column = config.wnc_pre_column;
    options.post_column = config.wnc_post_column;
    options.limit = config.wnc_limit;
    corpus::Dataset wnc = corpus::ingest_wnc(config.wnc_path, options, &outcome.pretrain_report);
    corpus::save_cache(wnc, config.pretrain_cache());
    outcome.pretrain_report.write(config.pretrain_cache_report(), hash,
                                  file_digest(config.pretrain_cache()));
    outcome.has_pretrain = true;
  }
  if (!config.babe_path.empty()) {
    corpus::BabeOptions options;
    options.delimiter = config.babe_delimiter;
    options.text_column = config.babe_text_column;
    options.label_column = config.babe_label_column;
    corpus::Dataset babe = corpus::ingest_babe(config.babe_path, options, &outcome.task_report);
    corpus::save_cache(babe, config.task_cache());
    outcome.task_report.write(config.task_cache_report(), hash,
                              file_digest(config.task_cache()));
    outcome.has_task = true;
  }
  return outcome;
}

IngestOutcome run_synth(const ExperimentConfig& config) {
  DirLock lock(config.out_dir);
  fs::create_directories(config.caches_dir());
  const std::string hash = config.config_hash();

  corpus::SyntheticSpec spec;
  spec.pretrain_pairs = config.synth_pretrain_pairs;
  spec.finetune_sentences = config.synth_finetune_sentences;
  spec.vocab_seed = config.seed;
  corpus::SyntheticCorpus corpora = corpus::synthetic_corpus(spec);

  IngestOutcome outcome;
  outcome.has_pretrain = true;
  outcome.has_task = true;

  corpus::save_cache(corpora.pretrain, config.pretrain_cache());
  outcome.pretrain_report.dataset_name = corpora.pretrain.name;
  outcome.pretrain_report.source_path = "synthetic:seed=" + std::to_string(config.seed);
  outcome.pretrain_report.pairs_read = spec.pretrain_pairs;
  outcome.pretrain_report.sentences_emitted = corpora.pretrain.size();
  outcome.pretrain_report.write(config.pretrain_cache_report(), hash,
                                file_digest(config.pretrain_cache()));

  corpus::save_cache(corpora.finetune, config.task_cache());
  outcome.task_report.dataset_name = corpora.finetune.name;
  outcome.task_report.source_path = "synthetic:seed=" + std::to_string(config.seed);
  outcome.task_report.sentences_emitted = corpora.finetune.size();
  outcome.task_report.write(config.task_cache_report(), hash, file_digest(config.task_cache()));
  return outcome;
}

PretrainOutcome run_pretrain(const ExperimentConfig& config) {
  DirLock lock(config.out_dir);
  fs::create_directories(config.bundles_dir());
  const std::string base = (fs::path(config.bundles_dir()) /
                            sanitize_filename(config.model_name)).string();

  corpus::Dataset pre = load_pretrain_cache(config);
  model::ModelBundle bundle = build_raw_bundle(config);

  PretrainOutcome outcome;
  outcome.raw_bundle_path = base + "-raw.bbm";
  model::save_bundle(bundle, outcome.raw_bundle_path);

  outcome.report = train::pretrain_domain(bundle, pre, stage_config(config, true));
  outcome.adapted_bundle_path = base + "-domain-adapted.bbm";
  model::save_bundle(bundle, outcome.adapted_bundle_path);
  outcome.report_path = base + "-pretrain-report.txt";
  outcome.report.write(outcome.report_path, config.config_hash());
  return outcome;
}

FinetuneOutcome run_finetune(const ExperimentConfig& config, const std::string& bundle_path) {
  DirLock lock(config.out_dir);
  fs::create_directories(config.bundles_dir());
  const std::string base = (fs::path(config.bundles_dir()) /
                            sanitize_filename(config.model_name)).string();

  corpus::Dataset task = load_task_cache(config);

  model::ModelBundle bundle;
  if (!bundle_path.empty()) {
    bundle = model::load_bundle(bundle_path);
  } else if (fs::exists(base + "-domain-adapted.bbm")) {
    bundle = model::load_bundle(base + "-domain-adapted.bbm");
  } else if (fs::exists(base + "-raw.bbm")) {
    bundle = model::load_bundle(base + "-raw.bbm");
  } else {
    bundle = build_raw_bundle(config);
    model::save_bundle(bundle, base + "-raw.bbm");
  }

  FinetuneOutcome outcome;
  outcome.report = train::finetune(bundle, task, stage_config(config, false));
  outcome.bundle_path = base + "-fine-tuned.bbm";
  model::save_bundle(bundle, outcome.bundle_path);
  outcome.report_path = base + "-finetune-report.txt";
  outcome.report.write(outcome.report_path, config.config_hash());
  return outcome;
}

RunManifest run_pipeline(const ExperimentConfig& config, Mode mode) {
  DirLock lock(config.out_dir);

  const std::string model_id =
      mode == Mode::DomainAdapted ? "DA-" + config.model_name : config.model_name;
  const fs::path run_dir = fs::path(config.runs_dir()) / sanitize_filename(model_id);
  fs::create_directories(run_dir);

  const std::string incomplete_marker = (run_dir / "INCOMPLETE").string();
  write_text_file(incomplete_marker, "run in progress or aborted\n");

  RunManifest manifest;
  manifest.path = (run_dir / "manifest.txt").string();
  manifest.entries["artifact"] = "biasbench-run-manifest v1";
  manifest.entries["mode"] = mode_name(mode);
  manifest.entries["model_id"] = model_id;
  manifest.entries["config_hash"] = config.config_hash();
  manifest.entries["seed"] = std::to_string(config.seed);
  manifest.entries["created_utc"] = utc_timestamp();

  std::string stage = "setup";
  try {
    stage = "load-task-cache";
    corpus::Dataset task = load_task_cache(config);
    manifest.entries["task_cache"] = config.task_cache();
    manifest.entries["task_cache_digest"] = file_digest(config.task_cache());

    stage = "build-bundle";
    model::ModelBundle bundle = build_raw_bundle(config);
    const std::string raw_path = (run_dir / "bundle-raw.bbm").string();
    model::save_bundle(bundle, raw_path);
    manifest.entries["bundle_raw"] = raw_path;

    if (mode == Mode::DomainAdapted) {
      stage = "pretrain";
      corpus::Dataset pre = load_pretrain_cache(config);
      manifest.entries["pretrain_cache"] = config.pretrain_cache();
      manifest.entries["pretrain_cache_digest"] = file_digest(config.pretrain_cache());
      train::TrainReport report = train::pretrain_domain(bundle, pre, stage_config(config, true));
      const std::string adapted_path = (run_dir / "bundle-domain-adapted.bbm").string();
      model::save_bundle(bundle, adapted_path);
      manifest.entries["bundle_domain_adapted"] = adapted_path;
      const std::string report_path = (run_dir / "pretrain-report.txt").string();
      report.write(report_path, config.config_hash());
      manifest.entries["pretrain_report"] = report_path;
    }

    stage = "folds";
    corpus::FoldPlan plan = corpus::make_folds(task, config.folds, config.seed);
    manifest.entries["folds"] = std::to_string(config.folds);
    manifest.entries["fold_plan_hash"] = to_hex(plan.hash());

    stage = "cross-validate";
    const model::ModelBundle snapshot = bundle;
    eval::CvResult cv = eval::cross_validate([&snapshot]() { return snapshot; }, task, plan,
                                             stage_config(config, false), model_id);

    stage = "write-artifacts";
    eval::PredictionFileHeader header;
    header.model_id = model_id;
    header.seed = config.seed;
    header.config_hash = config.config_hash();
    header.fold_plan_hash = to_hex(plan.hash());
    header.dataset_digest = manifest.entries["task_cache_digest"];
    header.timestamp = utc_timestamp();
    const std::string predictions_path = (run_dir / "predictions.tsv").string();
    eval::save_predictions(predictions_path, header, cv.predictions);
    manifest.entries["predictions"] = predictions_path;

    KvPairs summary;
    summary.emplace_back("artifact", "biasbench-cv-summary v1");
    summary.emplace_back("model_id", model_id);
    summary.emplace_back("mode", mode_name(mode));
    summary.emplace_back("seed", std::to_string(config.seed));
    summary.emplace_back("folds", std::to_string(config.folds));
    summary.emplace_back("fold_plan_hash", to_hex(plan.hash()));
    summary.emplace_back("dataset_digest", manifest.entries["task_cache_digest"]);
    for (std::size_t f = 0; f < cv.fold_f1.size(); ++f) {
      summary.emplace_back("fold_f1_" + std::to_string(f), format_real(cv.fold_f1[f]));
    }
    summary.emplace_back("mean_f1", format_real(cv.mean_f1));
    summary.emplace_back("std_error", format_real(cv.std_error));
    summary.emplace_back("config_hash", config.config_hash());
    const std::string summary_path = (run_dir / "cv-summary.txt").string();
    write_kv_file(summary_path, summary);
    manifest.entries["cv_summary"] = summary_path;

    manifest.entries["mean_f1"] = format_real(cv.mean_f1);
    manifest.entries["std_error"] = format_real(cv.std_error);
    manifest.entries["status"] = "COMPLETE";
    manifest.write();
    fs::remove(incomplete_marker);
    return manifest;
  } catch (const Error& e) {
    manifest.entries["status"] = "INCOMPLETE";
    manifest.entries["failed_stage"] = stage;
    manifest.entries["error"] = e.what();
    manifest.write();
    throw Error(e.kind(), "pipeline stage '" + stage + "' failed: " + e.what());
  } catch (const std::exception& e) {
    manifest.entries["status"] = "INCOMPLETE";
    manifest.entries["failed_stage"] = stage;
    manifest.entries["error"] = e.what();
    manifest.write();
    throw Error(ErrorKind::Internal, "pipeline stage '" + stage + "' failed: " + e.what());
  }
}

CompareOutcome run_compare(const ExperimentConfig& config, const std::string& predictions_a,
                           const std::string& predictions_b, const CompareOptions& options) {
  auto [header_a, records_a] = eval::load_predictions(predictions_a);
  auto [header_b, records_b] = eval::load_predictions(predictions_b);

  if (header_a.fold_plan_hash != header_b.fold_plan_hash) {
    fail(ErrorKind::Alignment, "prediction files were made under different fold plans (" +
                                   header_a.fold_plan_hash + " vs " + header_b.fold_plan_hash + ")");
  }

  // Cheap id diff up front so misalignment reports more than the first hit.
  std::set<std::string> ids_a, ids_b;
  for (const auto& r : records_a) ids_a.insert(r.example_id);
  for (const auto& r : records_b) ids_b.insert(r.example_id);
  if (ids_a != ids_b) {
    std::vector<std::string> only_a, only_b;
    std::set_difference(ids_a.begin(), ids_a.end(), ids_b.begin(), ids_b.end(),
                        std::back_inserter(only_a));
    std::set_difference(ids_b.begin(), ids_b.end(), ids_a.begin(), ids_a.end(),
                        std::back_inserter(only_b));
    std::ostringstream msg;
    msg << "prediction files cover different examples: " << only_a.size()
        << " only in A, " << only_b.size() << " only in B";
    for (std::size_t i = 0; i < only_a.size() && i < 3; ++i) msg << "; A-only " << only_a[i];
    for (std::size_t i = 0; i < only_b.size() && i < 3; ++i) msg << "; B-only " << only_b[i];
    fail(ErrorKind::Alignment, msg.str());
  }

  stats::ContingencyTable table = stats::build_contingency(records_a, records_b);
  stats::McNemarResult result = options.exact
                                    ? stats::mcnemar_exact(table)
                                    : stats::mcnemar_chi2(table, options.continuity_correction);

  CompareOutcome outcome;
  outcome.row = {header_a.model_id, header_b.model_id, result, options.reference_p};
  outcome.table = table;

  fs::create_directories(config.reports_dir());
  const std::string stem = "compare-" + sanitize_filename(header_a.model_id) + "-vs-" +
                           sanitize_filename(header_b.model_id);
  std::vector<stats::ComparisonRow> rows{outcome.row};
  const std::string hash = config.config_hash();
  if (config.emit_markdown) {
    outcome.markdown_path = (fs::path(config.reports_dir()) / (stem + ".md")).string();
    write_text_file(outcome.markdown_path,
                    stats::render_comparison_markdown(rows) + "\nConfig hash: " + hash + "\n");
  }
  if (config.emit_dsv) {
    outcome.dsv_path = (fs::path(config.reports_dir()) / (stem + ".tsv")).string();
    write_text_file(outcome.dsv_path,
                    "# config_hash = " + hash + "\n" + stats::render_comparison_dsv(rows));
  }
  return outcome;
}

ReportOutcome run_report(const ExperimentConfig& config,
                         const std::vector<std::string>& manifest_paths) {
  if (manifest_paths.empty()) {
    fail(ErrorKind::InvalidArgument, "report needs at least one run manifest");
  }

  std::vector<eval::ComputedRow> computed;
  std::string anchor_digest;
  for (const auto& manifest_path : manifest_paths) {
    RunManifest manifest = RunManifest::read(manifest_path);
    manifest.verify();
    const std::string digest = manifest.at("task_cache_digest");
    if (anchor_digest.empty()) {
      anchor_digest = digest;
    } else if (digest != anchor_digest && !config.allow_mixed_datasets) {
      fail(ErrorKind::State,
           "manifest " + manifest_path + " was produced on a different dataset (digest " +
               digest + " vs " + anchor_digest +
               "); pass report.allow_mixed_datasets = true to override");
    }
    auto summary = read_kv_file(manifest.at("cv_summary"));
    computed.push_back({manifest.at("model_id"), parse_real(summary.at("mean_f1"), "mean_f1"),
                        parse_real(summary.at("std_error"), "std_error"),
                        manifest.at("mode") == std::string(mode_name(Mode::DomainAdapted))});
  }

  std::vector<eval::TableRow> references;
  if (config.include_reference) {
    if (config.reference_rows_path.empty()) {
      fail(ErrorKind::InvalidArgument,
           "report.include_reference needs report.reference_rows to point at a rows file");
    }
    references = eval::load_reference_rows(config.reference_rows_path);
  }

  ReportOutcome outcome;
  outcome.rows = eval::aggregate_table(computed, references);

  fs::create_directories(config.reports_dir());
  const std::string hash = config.config_hash();
  if (config.emit_markdown) {
    outcome.markdown_path = (fs::path(config.reports_dir()) / "cv-results.md").string();
    write_text_file(outcome.markdown_path,
                    eval::render_table_markdown(outcome.rows) + "\nConfig hash: " + hash + "\n");
  }
  if (config.emit_dsv) {
    outcome.dsv_path = (fs::path(config.reports_dir()) / "cv-results.tsv").string();
    write_text_file(outcome.dsv_path,
                    "# config_hash = " + hash + "\n" + eval::render_table_dsv(outcome.rows));
  }
  return outcome;
}

}  // namespace biasbench::pipeline
