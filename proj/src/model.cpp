#include "biasbench/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>
#include <unordered_map>

#include "biasbench/common.hpp"
#include "biasbench/text.hpp"

namespace biasbench::model {

namespace {

constexpr double kProbFloor = 1e-12;

void check_dim(std::size_t got, int want, const char* what) {
  if (got != static_cast<std::size_t>(want)) {
    fail(ErrorKind::InvalidArgument, std::string(what) + ": dimension " + std::to_string(got) +
                                         " does not match hidden_dim " + std::to_string(want));
  }
}

}  // namespace

const char* stage_name(Stage stage) {
  switch (stage) {
    case Stage::Raw: return "RAW";
    case Stage::DomainAdapted: return "DOMAIN_ADAPTED";
    case Stage::FineTuned: return "FINE_TUNED";
  }
  return "UNKNOWN";
}

EncoderBackend EncoderBackend::toy(const BackendConfig& config) {
  if (config.hidden_dim < 1) fail(ErrorKind::InvalidArgument, "hidden_dim must be >= 1");
  if (config.max_tokens < 1) fail(ErrorKind::InvalidArgument, "max_tokens must be >= 1");
  if (config.vocab_buckets < 1) fail(ErrorKind::InvalidArgument, "vocab_buckets must be >= 1");
  EncoderBackend b;
  b.config_ = config;
  b.config_.mode = BackendMode::Toy;
  b.pooling_ = Pooling::Mean;
  const std::size_t d = static_cast<std::size_t>(config.hidden_dim);
  b.params_.resize(static_cast<std::size_t>(config.vocab_buckets) * d);
  Rng rng(mix_seed(config.init_seed, "toy-embeddings"));
  const double scale = 1.0 / std::sqrt(static_cast<double>(config.hidden_dim));
  for (double& p : b.params_) p = rng.uniform(-scale, scale);
  return b;
}

EncoderBackend EncoderBackend::from_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::Io, "cannot open checkpoint: " + path);

  auto bad = [&path](std::size_t line, const std::string& what) -> void {
    fail(ErrorKind::Parse, "corrupt checkpoint " + path + ":" + std::to_string(line) + ": " + what);
  };

  std::string line;
  std::size_t lineno = 1;
  if (!std::getline(in, line) || line != "biasbench-checkpoint v1") {
    bad(lineno, "missing 'biasbench-checkpoint v1' header");
  }

  EncoderBackend b;
  b.config_.mode = BackendMode::Checkpoint;
  b.config_.checkpoint_path = path;
  b.config_.vocab_buckets = 0;
  b.config_.init_seed = 0;
  long vocab_count = -1;
  bool have_dim = false;

  while (vocab_count < 0 && std::getline(in, line)) {
    ++lineno;
    std::istringstream fields(line);
    std::string key;
    fields >> key;
    if (key == "name") {
      fields >> b.config_.name;
    } else if (key == "hidden_dim") {
      if (!(fields >> b.config_.hidden_dim) || b.config_.hidden_dim < 1) {
        bad(lineno, "hidden_dim must be a positive integer");
      }
      have_dim = true;
    } else if (key == "max_tokens") {
      if (!(fields >> b.config_.max_tokens) || b.config_.max_tokens < 1) {
        bad(lineno, "max_tokens must be a positive integer");
      }
    } else if (key == "pooling") {
      std::string mode;
      fields >> mode;
      if (mode == "mean") {
        b.pooling_ = Pooling::Mean;
      } else if (mode == "first_token") {
        b.pooling_ = Pooling::FirstToken;
      } else {
        bad(lineno, "pooling must be 'mean' or 'first_token'");
      }
    } else if (key == "vocab") {
      if (!(fields >> vocab_count) || vocab_count < 1) {
        bad(lineno, "vocab must be a positive count");
      }
    } else {
      bad(lineno, "unknown key '" + key + "'");
    }
  }
  if (vocab_count < 0) bad(lineno, "missing 'vocab <n>' line");
  if (!have_dim) bad(lineno, "missing hidden_dim");

  const std::size_t d = static_cast<std::size_t>(b.config_.hidden_dim);
  b.vocab_.reserve(static_cast<std::size_t>(vocab_count));
  b.params_.reserve(static_cast<std::size_t>(vocab_count) * d);
  for (long r = 0; r < vocab_count; ++r) {
    if (!std::getline(in, line)) bad(lineno, "truncated vocabulary table");
    ++lineno;
    std::istringstream fields(line);
    std::string token;
    if (!(fields >> token)) bad(lineno, "missing token");
    std::vector<double> row(d);
    for (std::size_t j = 0; j < d; ++j) {
      if (!(fields >> row[j])) bad(lineno, "row has fewer than hidden_dim values");
    }
    double extra;
    if (fields >> extra) bad(lineno, "row has more than hidden_dim values");
    if (token == "<unk>") b.unk_row_ = r;
    if (token == "<s>") b.start_row_ = r;
    b.vocab_.push_back(token);
    b.params_.insert(b.params_.end(), row.begin(), row.end());
  }

  if (b.pooling_ == Pooling::FirstToken && b.start_row_ < 0) {
    fail(ErrorKind::Parse,
         "corrupt checkpoint " + path + ": first_token pooling requires a '<s>' vocabulary entry");
  }
  b.build_index();
  return b;
}

void EncoderBackend::build_index() {
  index_.clear();
  index_.reserve(vocab_.size() * 2);
  for (std::size_t r = 0; r < vocab_.size(); ++r) index_.emplace(vocab_[r], static_cast<long>(r));
}

std::vector<long> EncoderBackend::token_rows(std::string_view text) const {
  if (params_.empty()) fail(ErrorKind::State, "encoder backend is not initialized");
  std::vector<std::string> tokens = tokenize(text);
  if (tokens.empty()) fail(ErrorKind::InvalidArgument, "cannot encode empty text");
  if (tokens.size() > static_cast<std::size_t>(config_.max_tokens)) {
    tokens.resize(static_cast<std::size_t>(config_.max_tokens));
  }
  std::vector<long> rows;
  rows.reserve(tokens.size());
  if (config_.mode == BackendMode::Toy) {
    for (const auto& t : tokens) {
      rows.push_back(static_cast<long>(fnv1a64(t) %
                                       static_cast<std::uint64_t>(config_.vocab_buckets)));
    }
    return rows;
  }
  for (const auto& t : tokens) {
    auto it = index_.find(t);
    rows.push_back(it != index_.end() ? it->second : unk_row_);  // -1 skips the token
  }
  return rows;
}

void EncoderBackend::encode(std::string_view text, std::span<double> out) const {
  check_dim(out.size(), config_.hidden_dim, "encode output");
  const std::size_t d = static_cast<std::size_t>(config_.hidden_dim);
  std::fill(out.begin(), out.end(), 0.0);

  if (pooling_ == Pooling::FirstToken) {
    token_rows(text);  // still rejects empty text
    const double* row = params_.data() + static_cast<std::size_t>(start_row_) * d;
    std::copy(row, row + d, out.begin());
    return;
  }

  std::size_t used = 0;
  for (long r : token_rows(text)) {
    if (r < 0) continue;
    const double* row = params_.data() + static_cast<std::size_t>(r) * d;
    for (std::size_t j = 0; j < d; ++j) out[j] += row[j];
    ++used;
  }
  if (used > 0) {
    const double inv = 1.0 / static_cast<double>(used);
    for (double& x : out) x *= inv;
  }
}

std::vector<double> EncoderBackend::encode(std::string_view text) const {
  std::vector<double> out(static_cast<std::size_t>(config_.hidden_dim));
  encode(text, out);
  return out;
}

void EncoderBackend::accumulate_encode_gradient(std::string_view text,
                                                std::span<const double> pooled_grad,
                                                std::span<double> param_grad) const {
  check_dim(pooled_grad.size(), config_.hidden_dim, "pooled gradient");
  if (param_grad.size() != params_.size()) {
    fail(ErrorKind::InvalidArgument, "parameter gradient buffer has wrong size");
  }
  const std::size_t d = static_cast<std::size_t>(config_.hidden_dim);

  if (pooling_ == Pooling::FirstToken) {
    double* row = param_grad.data() + static_cast<std::size_t>(start_row_) * d;
    for (std::size_t j = 0; j < d; ++j) row[j] += pooled_grad[j];
    return;
  }

  std::vector<long> rows = token_rows(text);
  std::size_t used = 0;
  for (long r : rows) {
    if (r >= 0) ++used;
  }
  if (used == 0) return;
  const double inv = 1.0 / static_cast<double>(used);
  for (long r : rows) {
    if (r < 0) continue;
    double* row = param_grad.data() + static_cast<std::size_t>(r) * d;
    for (std::size_t j = 0; j < d; ++j) row[j] += inv * pooled_grad[j];
  }
}

ClassifierHead ClassifierHead::zeros(int input_dim, double dropout_rate) {
  if (input_dim < 1) fail(ErrorKind::InvalidArgument, "head input_dim must be >= 1");
  if (dropout_rate < 0.0 || dropout_rate >= 1.0) {
    fail(ErrorKind::InvalidArgument, "dropout_rate must be in [0, 1)");
  }
  ClassifierHead head;
  head.input_dim = input_dim;
  head.weights.assign(static_cast<std::size_t>(input_dim) * 2, 0.0);
  head.dropout_rate = dropout_rate;
  return head;
}

ClassifierHead ClassifierHead::random_init(int input_dim, double dropout_rate,
                                           std::uint64_t seed) {
  ClassifierHead head = zeros(input_dim, dropout_rate);
  Rng rng(mix_seed(seed, "head-init"));
  const double scale = 1.0 / std::sqrt(static_cast<double>(input_dim));
  for (double& w : head.weights) w = rng.uniform(-scale, scale);
  return head;
}

std::array<double, 2> ClassifierHead::logits(std::span<const double> input) const {
  check_dim(input.size(), input_dim, "head input");
  std::array<double, 2> z{bias[0], bias[1]};
  for (std::size_t j = 0; j < input.size(); ++j) {
    z[0] += input[j] * weights[j * 2];
    z[1] += input[j] * weights[j * 2 + 1];
  }
  return z;
}

ModelBundle make_toy_bundle(const BackendConfig& config, double dropout_rate,
                            std::uint64_t head_seed) {
  ModelBundle bundle;
  bundle.backend = EncoderBackend::toy(config);
  bundle.head = ClassifierHead::random_init(config.hidden_dim, dropout_rate, head_seed);
  bundle.stage = Stage::Raw;
  return bundle;
}

std::array<double, 2> softmax2(const std::array<double, 2>& logits) {
  const double m = std::max(logits[0], logits[1]);
  const double e0 = std::exp(logits[0] - m);
  const double e1 = std::exp(logits[1] - m);
  const double sum = e0 + e1;
  return {e0 / sum, e1 / sum};
}

std::array<double, 2> log_softmax2(const std::array<double, 2>& logits) {
  const double m = std::max(logits[0], logits[1]);
  const double lse = m + std::log(std::exp(logits[0] - m) + std::exp(logits[1] - m));
  return {logits[0] - lse, logits[1] - lse};
}

int argmax_label(const std::array<double, 2>& probs) {
  return probs[1] > probs[0] ? 1 : 0;  // tie goes to Non-biased
}

ScoredPrediction forward(const ClassifierHead& head, std::span<const double> pooled,
                         bool training, Rng* rng) {
  check_dim(pooled.size(), head.input_dim, "forward input");
  std::array<double, 2> z;
  if (training && head.dropout_rate > 0.0) {
    if (rng == nullptr) {
      fail(ErrorKind::InvalidArgument, "training-mode forward needs a seeded rng for dropout");
    }
    const double keep = 1.0 - head.dropout_rate;
    std::vector<double> dropped(pooled.size());
    for (std::size_t j = 0; j < pooled.size(); ++j) {
      dropped[j] = rng->uniform() < keep ? pooled[j] / keep : 0.0;
    }
    z = head.logits(dropped);
  } else {
    z = head.logits(pooled);
  }
  ScoredPrediction out;
  out.probs = softmax2(z);
  out.predicted_label = argmax_label(out.probs);
  return out;
}

namespace {

void check_batch(std::size_t n_probs, std::span<const int> labels) {
  if (n_probs == 0) fail(ErrorKind::InvalidArgument, "empty batch");
  if (n_probs != labels.size()) {
    fail(ErrorKind::InvalidArgument, "batch size mismatch between inputs and labels");
  }
  for (int y : labels) {
    if (y != 0 && y != 1) fail(ErrorKind::InvalidArgument, "labels must be 0 or 1");
  }
}

}  // namespace

double cross_entropy(std::span<const std::array<double, 2>> probs,
                     std::span<const int> labels) {
  check_batch(probs.size(), labels);
  double total = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    const auto& p = probs[i];
    if (p[0] < -1e-9 || p[1] < -1e-9 || std::abs(p[0] + p[1] - 1.0) > 1e-6) {
      fail(ErrorKind::InvalidArgument, "probability vector is not a distribution");
    }
    total -= std::log(std::max(p[static_cast<std::size_t>(labels[i])], kProbFloor));
  }
  return total / static_cast<double>(probs.size());
}

double cross_entropy_logits(std::span<const std::array<double, 2>> logits,
                            std::span<const int> labels) {
  check_batch(logits.size(), labels);
  double total = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    total -= log_softmax2(logits[i])[static_cast<std::size_t>(labels[i])];
  }
  return total / static_cast<double>(logits.size());
}

HeadGradient loss_gradient(const ClassifierHead& head,
                           std::span<const std::vector<double>> pooled_batch,
                           std::span<const int> labels,
                           std::vector<std::vector<double>>* pooled_grads) {
  check_batch(pooled_batch.size(), labels);
  const std::size_t d = static_cast<std::size_t>(head.input_dim);
  HeadGradient grad;
  grad.weights.assign(d * 2, 0.0);
  if (pooled_grads) {
    pooled_grads->assign(pooled_batch.size(), std::vector<double>(d, 0.0));
  }
  const double inv_n = 1.0 / static_cast<double>(pooled_batch.size());
  for (std::size_t i = 0; i < pooled_batch.size(); ++i) {
    const auto& x = pooled_batch[i];
    check_dim(x.size(), head.input_dim, "pooled batch entry");
    const std::array<double, 2> p = softmax2(head.logits(x));
    std::array<double, 2> dz{p[0] * inv_n, p[1] * inv_n};
    dz[static_cast<std::size_t>(labels[i])] -= inv_n;
    grad.bias[0] += dz[0];
    grad.bias[1] += dz[1];
    for (std::size_t j = 0; j < d; ++j) {
      grad.weights[j * 2] += x[j] * dz[0];
      grad.weights[j * 2 + 1] += x[j] * dz[1];
    }
    if (pooled_grads) {
      auto& gx = (*pooled_grads)[i];
      for (std::size_t j = 0; j < d; ++j) {
        gx[j] = head.weights[j * 2] * dz[0] + head.weights[j * 2 + 1] * dz[1];
      }
    }
  }
  return grad;
}

// ---------------------------------------------------------------------------
// Bundle serialization.

namespace {

constexpr char kMagic[8] = {'B', 'B', 'M', 'O', 'D', 'E', 'L', '\n'};
constexpr std::uint32_t kFormatVersion = 1;

class Writer {
 public:
  explicit Writer(const std::string& path) : out_(path, std::ios::binary | std::ios::trunc) {
    if (!out_) fail(ErrorKind::Io, "cannot write bundle: " + path);
  }
  void bytes(const void* data, std::size_t n) {
    out_.write(static_cast<const char*>(data), static_cast<std::streamsize>(n));
  }
  void u8(std::uint8_t v) { bytes(&v, 1); }
  void u32(std::uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    bytes(b, 4);
  }
  void u64(std::uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    bytes(b, 8);
  }
  void f64(double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    u64(bits);
  }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    bytes(s.data(), s.size());
  }
  void finish(const std::string& path) {
    if (!out_.flush()) fail(ErrorKind::Io, "bundle write failed: " + path);
  }

 private:
  std::ofstream out_;
};

class Reader {
 public:
  Reader(const std::string& path) : in_(path, std::ios::binary), path_(path) {
    if (!in_) fail(ErrorKind::Io, "cannot open bundle: " + path);
  }
  void bytes(void* data, std::size_t n) {
    in_.read(static_cast<char*>(data), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in_.gcount()) != n) {
      fail(ErrorKind::Parse, "truncated bundle file: " + path_);
    }
  }
  std::uint8_t u8() {
    std::uint8_t v;
    bytes(&v, 1);
    return v;
  }
  std::uint32_t u32() {
    unsigned char b[4];
    bytes(b, 4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    unsigned char b[8];
    bytes(b, 8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return v;
  }
  double f64() {
    std::uint64_t bits = u64();
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
  }
  std::string str() {
    std::uint32_t n = u32();
    if (n > (1u << 26)) fail(ErrorKind::Parse, "implausible string length in bundle: " + path_);
    std::string s(n, '\0');
    if (n) bytes(s.data(), n);
    return s;
  }

 private:
  std::ifstream in_;
  std::string path_;
};

}  // namespace

struct BundleCodec {
  static void write(const ModelBundle& bundle, const std::string& path) {
    Writer w(path);
    w.bytes(kMagic, sizeof(kMagic));
    w.u32(kFormatVersion);

    const EncoderBackend& b = bundle.backend;
    w.u8(b.config_.mode == BackendMode::Toy ? 0 : 1);
    w.str(b.config_.name);
    w.u32(static_cast<std::uint32_t>(b.config_.hidden_dim));
    w.u32(static_cast<std::uint32_t>(b.config_.max_tokens));
    w.u8(b.pooling_ == Pooling::Mean ? 0 : 1);
    if (b.config_.mode == BackendMode::Toy) {
      w.u32(static_cast<std::uint32_t>(b.config_.vocab_buckets));
      w.u64(b.config_.init_seed);
    } else {
      w.str(b.config_.checkpoint_path);
      w.u64(b.vocab_.size());
      for (const auto& t : b.vocab_) w.str(t);
      w.u64(static_cast<std::uint64_t>(b.unk_row_ + 1));
      w.u64(static_cast<std::uint64_t>(b.start_row_ + 1));
    }
    w.u64(b.params_.size());
    for (double p : b.params_) w.f64(p);

    const ClassifierHead& h = bundle.head;
    w.u32(static_cast<std::uint32_t>(h.input_dim));
    for (double x : h.weights) w.f64(x);
    w.f64(h.bias[0]);
    w.f64(h.bias[1]);
    w.f64(h.dropout_rate);

    w.u8(static_cast<std::uint8_t>(bundle.stage));
    w.str(bundle.provenance);
    w.finish(path);
  }

  static ModelBundle read(const std::string& path) {
    Reader r(path);
    char magic[8];
    r.bytes(magic, sizeof(magic));
    if (std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
      fail(ErrorKind::Parse, "not a bundle file (bad magic): " + path);
    }
    const std::uint32_t version = r.u32();
    if (version != kFormatVersion) {
      fail(ErrorKind::Parse, "unsupported bundle format version " + std::to_string(version) +
                                 " in " + path);
    }

    ModelBundle bundle;
    EncoderBackend& b = bundle.backend;
    b.config_.mode = r.u8() == 0 ? BackendMode::Toy : BackendMode::Checkpoint;
    b.config_.name = r.str();
    b.config_.hidden_dim = static_cast<int>(r.u32());
    b.config_.max_tokens = static_cast<int>(r.u32());
    b.pooling_ = r.u8() == 0 ? Pooling::Mean : Pooling::FirstToken;
    if (b.config_.mode == BackendMode::Toy) {
      b.config_.vocab_buckets = static_cast<int>(r.u32());
      b.config_.init_seed = r.u64();
    } else {
      b.config_.vocab_buckets = 0;
      b.config_.init_seed = 0;
      b.config_.checkpoint_path = r.str();
      const std::uint64_t vocab = r.u64();
      b.vocab_.reserve(vocab);
      for (std::uint64_t i = 0; i < vocab; ++i) b.vocab_.push_back(r.str());
      b.unk_row_ = static_cast<long>(r.u64()) - 1;
      b.start_row_ = static_cast<long>(r.u64()) - 1;
      b.build_index();
    }
    const std::uint64_t n_params = r.u64();
    b.params_.resize(n_params);
    for (auto& p : b.params_) p = r.f64();

    ClassifierHead& h = bundle.head;
    h.input_dim = static_cast<int>(r.u32());
    h.weights.resize(static_cast<std::size_t>(h.input_dim) * 2);
    for (auto& x : h.weights) x = r.f64();
    h.bias[0] = r.f64();
    h.bias[1] = r.f64();
    h.dropout_rate = r.f64();

    const std::uint8_t stage = r.u8();
    if (stage > 2) fail(ErrorKind::Parse, "invalid stage tag in bundle: " + path);
    bundle.stage = static_cast<Stage>(stage);
    bundle.provenance = r.str();

    if (h.input_dim != b.config_.hidden_dim) {
      fail(ErrorKind::Parse, "bundle head/backend dimensions disagree: " + path);
    }
    return bundle;
  }
};

void save_bundle(const ModelBundle& bundle, const std::string& path) {
  BundleCodec::write(bundle, path);
}

ModelBundle load_bundle(const std::string& path) { return BundleCodec::read(path); }

}  // namespace biasbench::model
