#include "biasbench/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>
#include <unordered_map>

#include "biasbench/common.hpp"
#include "biasbench/kv.hpp"
#include "biasbench/text.hpp"

namespace biasbench::eval {

double macro_f1(std::span<const PredictionRecord> records) {
  if (records.empty()) fail(ErrorKind::InvalidArgument, "macro_f1 on empty record set");
  // counts[gold][predicted]
  double counts[2][2] = {{0.0, 0.0}, {0.0, 0.0}};
  for (const auto& r : records) {
    if ((r.gold != 0 && r.gold != 1) || (r.predicted != 0 && r.predicted != 1)) {
      fail(ErrorKind::InvalidArgument, "labels must be 0 or 1");
    }
    counts[r.gold][r.predicted] += 1.0;
  }
  double f1_sum = 0.0;
  for (int cls = 0; cls < 2; ++cls) {
    const double tp = counts[cls][cls];
    const double fp = counts[1 - cls][cls];
    const double fn = counts[cls][1 - cls];
    const double precision = (tp + fp) > 0.0 ? tp / (tp + fp) : 0.0;
    const double recall = (tp + fn) > 0.0 ? tp / (tp + fn) : 0.0;
    const double f1 = (precision + recall) > 0.0
                          ? 2.0 * precision * recall / (precision + recall)
                          : 0.0;
    f1_sum += f1;
  }
  return f1_sum / 2.0;
}

double mean_of(std::span<const double> values) {
  if (values.empty()) fail(ErrorKind::InvalidArgument, "mean of empty list");
  double sum = 0.0;
  for (double v : values) sum += v;
  return sum / static_cast<double>(values.size());
}

double std_error_of(std::span<const double> values) {
  if (values.size() < 2) fail(ErrorKind::InvalidArgument, "std_error needs >= 2 values");
  const double mean = mean_of(values);
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  const double sample_sd = std::sqrt(ss / static_cast<double>(values.size() - 1));
  return sample_sd / std::sqrt(static_cast<double>(values.size()));
}

CvResult cross_validate(const BundleFactory& make_bundle, const corpus::Dataset& dataset,
                        const corpus::FoldPlan& plan, const train::TrainConfig& config,
                        const std::string& model_id) {
  plan.check_covers(dataset);

  CvResult result;
  result.model_id = model_id;
  result.predictions.resize(dataset.size());

  for (int fold = 0; fold < plan.k; ++fold) {
    model::ModelBundle bundle = make_bundle();
    if (bundle.stage == model::Stage::FineTuned) {
      fail(ErrorKind::State,
           "cross_validate factory returned a FINE_TUNED bundle; folds must start fresh");
    }

    corpus::Dataset train_split;
    train_split.name = dataset.name + "-minus-fold" + std::to_string(fold);
    for (const auto& s : dataset.sentences) {
      if (plan.assignments.at(s.id) != fold) train_split.sentences.push_back(s);
    }

    train::TrainConfig fold_config = config;
    fold_config.seed = mix_seed(config.seed, "cv-fold", static_cast<std::uint64_t>(fold));
    train::finetune(bundle, train_split, fold_config);

    std::vector<PredictionRecord> fold_records;
    std::vector<double> pooled(static_cast<std::size_t>(bundle.backend.hidden_dim()));
    for (std::size_t i = 0; i < dataset.size(); ++i) {
      const auto& s = dataset.sentences[i];
      if (plan.assignments.at(s.id) != fold) continue;
      bundle.backend.encode(s.text, pooled);
      const model::ScoredPrediction scored = model::forward(bundle.head, pooled);
      PredictionRecord record{s.id,      s.label,  scored.predicted_label,
                              scored.probs[1], model_id, fold};
      result.predictions[i] = record;
      fold_records.push_back(std::move(record));
    }
    result.fold_f1.push_back(macro_f1(fold_records));
  }

  result.mean_f1 = mean_of(result.fold_f1);
  result.std_error = std_error_of(result.fold_f1);
  return result;
}

void save_predictions(const std::string& path, const PredictionFileHeader& header,
                      std::span<const PredictionRecord> records) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::Io, "cannot write predictions: " + path);
  out << "# biasbench-predictions v1\n";
  out << "# model_id: " << header.model_id << "\n";
  out << "# seed: " << header.seed << "\n";
  out << "# config_hash: " << header.config_hash << "\n";
  out << "# fold_plan_hash: " << header.fold_plan_hash << "\n";
  out << "# dataset_digest: " << header.dataset_digest << "\n";
  out << "# timestamp: " << header.timestamp << "\n";
  for (const auto& r : records) {
    out << r.example_id << '\t' << r.gold << '\t' << r.predicted << '\t'
        << format_real(r.prob_biased) << '\t' << r.fold << '\n';
  }
  if (!out.flush()) fail(ErrorKind::Io, "prediction write failed: " + path);
}

std::pair<PredictionFileHeader, std::vector<PredictionRecord>> load_predictions(
    const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::Io, "cannot open predictions: " + path);

  PredictionFileHeader header;
  std::vector<PredictionRecord> records;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line[0] == '#') {
      std::size_t colon = line.find(':');
      if (colon == std::string::npos) continue;
      std::string key = line.substr(1, colon - 1);
      key.erase(0, key.find_first_not_of(' '));
      key.erase(key.find_last_not_of(' ') + 1);
      std::string value = line.substr(colon + 1);
      value.erase(0, value.find_first_not_of(' '));
      if (key == "model_id") header.model_id = value;
      else if (key == "seed") header.seed = static_cast<std::uint64_t>(parse_int(value, "seed"));
      else if (key == "config_hash") header.config_hash = value;
      else if (key == "fold_plan_hash") header.fold_plan_hash = value;
      else if (key == "dataset_digest") header.dataset_digest = value;
      else if (key == "timestamp") header.timestamp = value;
      continue;
    }
    std::istringstream fields(line);
    PredictionRecord r;
    std::string gold, predicted, prob, fold;
    if (!std::getline(fields, r.example_id, '\t') || !std::getline(fields, gold, '\t') ||
        !std::getline(fields, predicted, '\t') || !std::getline(fields, prob, '\t') ||
        !std::getline(fields, fold)) {
      fail(ErrorKind::Parse, path + ":" + std::to_string(lineno) + ": expected 5 tab-separated fields");
    }
    r.gold = static_cast<int>(parse_int(gold, "gold"));
    r.predicted = static_cast<int>(parse_int(predicted, "predicted"));
    r.prob_biased = parse_real(prob, "prob_biased");
    r.fold = static_cast<int>(parse_int(fold, "fold"));
    r.model_id = header.model_id;
    if (r.gold != 0 && r.gold != 1) {
      fail(ErrorKind::Parse, path + ":" + std::to_string(lineno) + ": gold label must be 0 or 1");
    }
    const int implied = r.prob_biased > 0.5 ? 1 : 0;
    if (r.predicted != implied) {
      fail(ErrorKind::Parse, path + ":" + std::to_string(lineno) +
                                 ": predicted label disagrees with prob_biased");
    }
    records.push_back(std::move(r));
  }
  return {header, records};
}

std::vector<TableRow> aggregate_table(std::span<const ComputedRow> computed,
                                      std::span<const TableRow> reference_rows) {
  std::set<std::string> ids;
  auto claim = [&ids](const std::string& id) {
    if (!ids.insert(id).second) {
      fail(ErrorKind::InvalidArgument, "duplicate model id in table: " + id);
    }
  };

  std::vector<TableRow> rows;
  for (const auto& c : computed) {
    if (!c.domain_adapted) {
      claim(c.model_id);
      rows.push_back({c.model_id, c.mean_f1, c.std_error, TableRow::Block::Baseline, false});
    }
  }
  for (const auto& r : reference_rows) {
    claim(r.model_id);
    rows.push_back({r.model_id, r.mean_f1, r.std_error, TableRow::Block::Literature, false});
  }
  for (const auto& c : computed) {
    if (c.domain_adapted) {
      claim(c.model_id);
      rows.push_back({c.model_id, c.mean_f1, c.std_error, TableRow::Block::DomainAdapted, false});
    }
  }
  if (!rows.empty()) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < rows.size(); ++i) {
      if (rows[i].mean_f1 > rows[best].mean_f1) best = i;
    }
    rows[best].best = true;
  }
  return rows;
}

namespace {

std::string f1_cell(const TableRow& row) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.3f (%.3f)", row.mean_f1, row.std_error);
  std::string cell(buf);
  if (row.best) cell = "**" + cell + "**";
  return cell;
}

const char* block_name(TableRow::Block block) {
  switch (block) {
    case TableRow::Block::Baseline: return "baseline";
    case TableRow::Block::Literature: return "literature";
    case TableRow::Block::DomainAdapted: return "domain-adapted";
  }
  return "unknown";
}

}  // namespace

std::string render_table_markdown(std::span<const TableRow> rows) {
  std::ostringstream out;
  out << "| Model | Macro F1 (error) | Block |\n";
  out << "| --- | --- | --- |\n";
  for (const auto& row : rows) {
    out << "| " << row.model_id << " | " << f1_cell(row) << " | " << block_name(row.block)
        << " |\n";
  }
  out << "\nStandard errors across folds in parentheses; best result in bold.\n";
  out << "Literature rows are published values, not computed by this run.\n";
  return out.str();
}

std::string render_table_dsv(std::span<const TableRow> rows, char delimiter) {
  std::ostringstream out;
  out << "model" << delimiter << "mean_f1" << delimiter << "std_error" << delimiter << "block"
      << delimiter << "best\n";
  for (const auto& row : rows) {
    out << row.model_id << delimiter << format_real(row.mean_f1) << delimiter
        << format_real(row.std_error) << delimiter << block_name(row.block) << delimiter
        << (row.best ? 1 : 0) << "\n";
  }
  return out.str();
}

std::vector<TableRow> load_reference_rows(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::Io, "cannot open reference rows: " + path);
  std::vector<TableRow> rows;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    std::istringstream fields(line);
    std::string model, f1, err;
    if (!std::getline(fields, model, '\t') || !std::getline(fields, f1, '\t') ||
        !std::getline(fields, err)) {
      fail(ErrorKind::Parse, path + ":" + std::to_string(lineno) + ": expected 3 tab-separated fields");
    }
    rows.push_back({model, parse_real(f1, "mean_f1"), parse_real(err, "std_error"),
                    TableRow::Block::Literature, false});
  }
  return rows;
}

}  // namespace biasbench::eval
