#include "biasbench/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>
#include <unordered_set>

#include "biasbench/common.hpp"
#include "biasbench/rng.hpp"
#include "biasbench/text.hpp"

namespace biasbench::corpus {

const char* source_name(Source source) {
  switch (source) {
    case Source::Wnc: return "WNC";
    case Source::Babe: return "BABE";
    case Source::Synthetic: return "SYNTHETIC";
  }
  return "UNKNOWN";
}

std::array<std::size_t, 2> Dataset::class_counts() const {
  std::array<std::size_t, 2> counts{0, 0};
  for (const auto& s : sentences) counts[static_cast<std::size_t>(s.label)]++;
  return counts;
}

void Dataset::validate() const {
  std::unordered_set<std::string_view> seen;
  seen.reserve(sentences.size() * 2);
  for (const auto& s : sentences) {
    if (s.label != 0 && s.label != 1) {
      fail(ErrorKind::InvalidArgument,
           "dataset '" + name + "': label of '" + s.id + "' is not binary");
    }
    if (s.text.empty()) {
      fail(ErrorKind::InvalidArgument, "dataset '" + name + "': empty text for '" + s.id + "'");
    }
    if (!seen.insert(s.id).second) {
      fail(ErrorKind::InvalidArgument, "dataset '" + name + "': duplicate id '" + s.id + "'");
    }
  }
}

KvPairs IngestReport::to_kv() const {
  KvPairs kv;
  kv.emplace_back("artifact", "biasbench-ingest-report v1");
  kv.emplace_back("dataset", dataset_name);
  kv.emplace_back("source_path", source_path);
  kv.emplace_back("rows_read", std::to_string(rows_read));
  kv.emplace_back("pairs_read", std::to_string(pairs_read));
  kv.emplace_back("pairs_dropped_identical", std::to_string(pairs_dropped_identical));
  kv.emplace_back("labels_excluded", std::to_string(labels_excluded));
  kv.emplace_back("rows_malformed", std::to_string(rows_malformed));
  kv.emplace_back("sentences_emitted", std::to_string(sentences_emitted));
  for (const auto& err : row_errors) {
    kv.emplace_back("row_error_" + std::to_string(err.row), err.message);
  }
  return kv;
}

void IngestReport::write(const std::string& path, const std::string& config_hash,
                         const std::string& cache_digest) const {
  KvPairs kv = to_kv();
  kv.emplace_back("cache_digest", cache_digest);
  kv.emplace_back("config_hash", config_hash);
  write_kv_file(path, kv);
}

namespace {

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> cells;
  std::size_t start = 0;
  while (true) {
    std::size_t tab = line.find('\t', start);
    if (tab == std::string::npos) {
      cells.push_back(line.substr(start));
      break;
    }
    cells.push_back(line.substr(start, tab - start));
    start = tab + 1;
  }
  return cells;
}

// RFC-4180-ish delimited parsing: double quotes wrap fields, "" escapes a
// quote inside a quoted field. Good enough for the released labeled corpus.
std::vector<std::string> split_delimited(const std::string& line, char delim) {
  std::vector<std::string> cells;
  std::string cell;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cell.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cell.push_back(c);
      }
    } else if (c == '"' && cell.empty()) {
      quoted = true;
    } else if (c == delim) {
      cells.push_back(std::move(cell));
      cell.clear();
    } else {
      cell.push_back(c);
    }
  }
  cells.push_back(std::move(cell));
  return cells;
}

std::string strip_cr(std::string line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
  return line;
}

}  // namespace

Dataset ingest_wnc(const std::string& path, const WncOptions& options,
                   IngestReport* report) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::Io, "cannot open WNC file: " + path);
  if (options.pre_column < 0 || options.post_column < 0 ||
      options.pre_column == options.post_column) {
    fail(ErrorKind::InvalidArgument, "WNC column indices must be distinct and non-negative");
  }

  IngestReport local;
  local.dataset_name = "wnc";
  local.source_path = path;

  Dataset dataset;
  dataset.name = "wnc";

  const std::size_t need =
      static_cast<std::size_t>(std::max(options.pre_column, options.post_column)) + 1;
  std::string line;
  std::size_t lineno = 0;
  bool saw_data_line = false;
  while (std::getline(in, line)) {
    ++lineno;
    line = strip_cr(line);
    if (line.empty() || line[0] == '#') continue;
    saw_data_line = true;
    if (options.limit >= 0 &&
        local.pairs_read >= static_cast<std::size_t>(options.limit)) {
      break;
    }
    local.rows_read++;
    std::vector<std::string> cells = split_tabs(line);
    if (cells.size() < need) {
      local.rows_malformed++;
      local.row_errors.push_back(
          {lineno, "expected at least " + std::to_string(need) + " tab-separated columns, got " +
                       std::to_string(cells.size())});
      continue;
    }
    std::string pre = normalize_text(cells[static_cast<std::size_t>(options.pre_column)]);
    std::string post = normalize_text(cells[static_cast<std::size_t>(options.post_column)]);
    if (pre.empty() || post.empty()) {
      local.rows_malformed++;
      local.row_errors.push_back({lineno, "empty sentence after normalization"});
      continue;
    }
    local.pairs_read++;
    if (pre == post) {
      local.pairs_dropped_identical++;
      continue;
    }
    std::string pair_id = "wnc-" + std::to_string(lineno);
    dataset.sentences.push_back({pair_id + "-1", pre, 1, Source::Wnc, pair_id});
    dataset.sentences.push_back({pair_id + "-0", post, 0, Source::Wnc, pair_id});
  }
  if (!saw_data_line) fail(ErrorKind::Parse, "WNC file has no data rows: " + path);

  local.sentences_emitted = dataset.sentences.size();
  dataset.validate();
  if (report) *report = local;
  return dataset;
}

Dataset ingest_babe(const std::string& path, const BabeOptions& options,
                    IngestReport* report) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::Io, "cannot open BABE file: " + path);

  IngestReport local;
  local.dataset_name = "babe";
  local.source_path = path;

  std::string header_line;
  if (!std::getline(in, header_line)) fail(ErrorKind::Parse, "BABE file is empty: " + path);
  header_line = strip_cr(header_line);
  std::vector<std::string> header = split_delimited(header_line, options.delimiter);
  long text_col = -1;
  long label_col = -1;
  for (std::size_t i = 0; i < header.size(); ++i) {
    std::string name = normalize_text(header[i]);
    if (name == options.text_column) text_col = static_cast<long>(i);
    if (name == options.label_column) label_col = static_cast<long>(i);
  }
  if (text_col < 0) {
    fail(ErrorKind::Parse, "BABE file lacks required column '" + options.text_column + "'");
  }
  if (label_col < 0) {
    fail(ErrorKind::Parse, "BABE file lacks required column '" + options.label_column + "'");
  }

  Dataset dataset;
  dataset.name = "babe";
  std::string line;
  std::size_t lineno = 1;  // header consumed
  while (std::getline(in, line)) {
    ++lineno;
    line = strip_cr(line);
    if (line.empty()) continue;
    local.rows_read++;
    std::vector<std::string> cells = split_delimited(line, options.delimiter);
    std::size_t want = static_cast<std::size_t>(std::max(text_col, label_col)) + 1;
    if (cells.size() < want) {
      local.rows_malformed++;
      local.row_errors.push_back({lineno, "row has " + std::to_string(cells.size()) +
                                              " columns, need " + std::to_string(want)});
      continue;
    }
    std::string text = normalize_text(cells[static_cast<std::size_t>(text_col)]);
    std::string label_raw = to_lower(normalize_text(cells[static_cast<std::size_t>(label_col)]));
    int label;
    if (label_raw == "biased") {
      label = 1;
    } else if (label_raw == "non-biased") {
      label = 0;
    } else {
      // e.g. no-agreement markers; the binary task admits only two labels
      local.labels_excluded++;
      continue;
    }
    if (text.empty()) {
      local.rows_malformed++;
      local.row_errors.push_back({lineno, "empty text after normalization"});
      continue;
    }
    dataset.sentences.push_back(
        {"babe-" + std::to_string(lineno), text, label, Source::Babe, ""});
  }

  local.sentences_emitted = dataset.sentences.size();
  dataset.validate();
  if (report) *report = local;
  return dataset;
}

std::uint64_t FoldPlan::hash() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  h = fnv1a64(&k, sizeof(k), h);
  h = fnv1a64(&seed, sizeof(seed), h);
  for (const auto& [id, fold] : assignments) {  // std::map: sorted, stable
    h = fnv1a64(id.data(), id.size(), h);
    h = fnv1a64(&fold, sizeof(fold), h);
  }
  return h;
}

std::vector<std::size_t> FoldPlan::fold_sizes() const {
  std::vector<std::size_t> sizes(static_cast<std::size_t>(k), 0);
  for (const auto& [id, fold] : assignments) sizes[static_cast<std::size_t>(fold)]++;
  return sizes;
}

void FoldPlan::check_covers(const Dataset& dataset) const {
  if (assignments.size() != dataset.size()) {
    fail(ErrorKind::InvalidArgument, "fold plan covers " + std::to_string(assignments.size()) +
                                         " ids but dataset has " + std::to_string(dataset.size()));
  }
  for (const auto& s : dataset.sentences) {
    if (assignments.find(s.id) == assignments.end()) {
      fail(ErrorKind::InvalidArgument, "fold plan is missing id '" + s.id + "'");
    }
  }
}

FoldPlan make_folds(const Dataset& dataset, int k, std::uint64_t seed) {
  if (k < 2) fail(ErrorKind::InvalidArgument, "fold count must be >= 2");
  dataset.validate();

  std::array<std::vector<std::string>, 2> by_class;
  for (const auto& s : dataset.sentences) {
    by_class[static_cast<std::size_t>(s.label)].push_back(s.id);
  }
  for (int cls = 0; cls < 2; ++cls) {
    if (by_class[static_cast<std::size_t>(cls)].size() < static_cast<std::size_t>(k)) {
      fail(ErrorKind::InvalidArgument,
           "class " + std::to_string(cls) + " has " +
               std::to_string(by_class[static_cast<std::size_t>(cls)].size()) +
               " examples, need at least k = " + std::to_string(k));
    }
  }

  FoldPlan plan;
  plan.k = k;
  plan.seed = seed;
  for (int cls = 0; cls < 2; ++cls) {
    auto& ids = by_class[static_cast<std::size_t>(cls)];
    Rng rng(mix_seed(seed, "fold-shuffle", static_cast<std::uint64_t>(cls)));
    rng.shuffle(ids);
    for (std::size_t i = 0; i < ids.size(); ++i) {
      plan.assignments[ids[i]] = static_cast<int>(i % static_cast<std::size_t>(k));
    }
  }
  return plan;
}

namespace {

// Pronounceable consonant-vowel word from a seeded stream; keeps synthetic
// corpora readable in dumps.
std::string synth_word(Rng& rng, std::size_t syllables) {
  static const char consonants[] = "bdfgklmnprstvz";
  static const char vowels[] = "aeiou";
  std::string word;
  for (std::size_t s = 0; s < syllables; ++s) {
    word.push_back(consonants[rng.below(sizeof(consonants) - 1)]);
    word.push_back(vowels[rng.below(sizeof(vowels) - 1)]);
  }
  return word;
}

struct SynthLexicon {
  std::vector<std::string> fillers;
  std::vector<std::string> markers;
};

SynthLexicon synth_lexicon(std::uint64_t vocab_seed) {
  SynthLexicon lex;
  Rng rng(mix_seed(vocab_seed, "synth-lexicon"));
  std::set<std::string> used;
  while (lex.fillers.size() < 40) {
    std::string w = synth_word(rng, 2 + rng.below(2));
    if (used.insert(w).second) lex.fillers.push_back(w);
  }
  while (lex.markers.size() < 8) {
    // Markers carry a distinct shape so they never collide with fillers.
    std::string w = synth_word(rng, 2) + "x";
    if (used.insert(w).second) lex.markers.push_back(w);
  }
  return lex;
}

std::string synth_sentence(const SynthLexicon& lex, Rng& rng, bool biased,
                           std::vector<std::size_t>* marker_slots) {
  const std::size_t length = 6 + rng.below(7);  // 6..12 tokens
  std::vector<std::string> tokens(length);
  for (auto& t : tokens) t = lex.fillers[rng.below(lex.fillers.size())];
  if (biased) {
    const std::size_t n_markers = 2 + rng.below(2);  // 2..3 markers
    std::vector<std::size_t> slots(length);
    for (std::size_t i = 0; i < length; ++i) slots[i] = i;
    rng.shuffle(slots);
    for (std::size_t m = 0; m < n_markers; ++m) {
      tokens[slots[m]] = lex.markers[rng.below(lex.markers.size())];
      if (marker_slots) marker_slots->push_back(slots[m]);
    }
  }
  std::string text;
  for (std::size_t i = 0; i < length; ++i) {
    if (i) text.push_back(' ');
    text += tokens[i];
  }
  return text;
}

}  // namespace

std::vector<std::string> synthetic_markers(std::uint64_t vocab_seed) {
  return synth_lexicon(vocab_seed).markers;
}

SyntheticCorpus synthetic_corpus(const SyntheticSpec& spec) {
  if (spec.pretrain_pairs < 10) {
    fail(ErrorKind::InvalidArgument, "synthetic corpus needs at least 10 pairs");
  }
  if (spec.finetune_sentences < 10) {
    fail(ErrorKind::InvalidArgument, "synthetic corpus needs at least 10 fine-tuning sentences");
  }
  SynthLexicon lex = synth_lexicon(spec.vocab_seed);

  SyntheticCorpus out;
  out.pretrain.name = "synthetic-pretrain";
  out.finetune.name = "synthetic-finetune";

  Rng pre_rng(mix_seed(spec.vocab_seed, "synth-pretrain"));
  for (std::size_t p = 0; p < spec.pretrain_pairs; ++p) {
    std::vector<std::size_t> marker_slots;
    std::string biased = synth_sentence(lex, pre_rng, true, &marker_slots);
    // The neutral twin replaces each marker with a filler, like a manual
    // neutralizing revision would.
    std::vector<std::string> tokens = tokenize(biased);
    for (std::size_t slot : marker_slots) {
      tokens[slot] = lex.fillers[pre_rng.below(lex.fillers.size())];
    }
    std::string neutral;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
      if (i) neutral.push_back(' ');
      neutral += tokens[i];
    }
    std::string pair_id = "syn-" + std::to_string(p);
    out.pretrain.sentences.push_back({pair_id + "-1", biased, 1, Source::Synthetic, pair_id});
    out.pretrain.sentences.push_back({pair_id + "-0", neutral, 0, Source::Synthetic, pair_id});
  }

  Rng ft_rng(mix_seed(spec.vocab_seed, "synth-finetune"));
  for (std::size_t i = 0; i < spec.finetune_sentences; ++i) {
    const bool biased = (i % 2) == 0;  // exact 50/50 balance
    out.finetune.sentences.push_back({"syn-ft-" + std::to_string(i),
                                      synth_sentence(lex, ft_rng, biased, nullptr),
                                      biased ? 1 : 0, Source::Synthetic, ""});
  }

  out.pretrain.validate();
  out.finetune.validate();
  return out;
}

std::pair<Dataset, Dataset> make_synthetic(std::size_t n_pairs, std::uint64_t vocab_seed) {
  SyntheticCorpus c = synthetic_corpus({n_pairs, n_pairs, vocab_seed});
  return {std::move(c.pretrain), std::move(c.finetune)};
}

void save_cache(const Dataset& dataset, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::Io, "cannot write cache: " + path);
  for (const auto& s : dataset.sentences) {
    out << s.id << '\t' << s.label << '\t' << s.text << '\n';
  }
  if (!out.flush()) fail(ErrorKind::Io, "cache write failed: " + path);
}

Dataset load_cache(const std::string& path, Source source, const std::string& name) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::Io, "cannot open cache: " + path);
  Dataset dataset;
  dataset.name = name;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    line = strip_cr(line);
    if (line.empty()) continue;
    std::vector<std::string> cells = split_tabs(line);
    if (cells.size() != 3) {
      fail(ErrorKind::Parse, path + ":" + std::to_string(lineno) + ": expected 3 columns");
    }
    if (cells[1] != "0" && cells[1] != "1") {
      fail(ErrorKind::Parse, path + ":" + std::to_string(lineno) + ": label must be 0 or 1");
    }
    dataset.sentences.push_back({cells[0], cells[2], cells[1] == "1" ? 1 : 0, source, ""});
  }
  dataset.validate();
  return dataset;
}

}  // namespace biasbench::corpus
