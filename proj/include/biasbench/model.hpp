#ifndef BIASBENCH_MODEL_HPP
#define BIASBENCH_MODEL_HPP

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "biasbench/rng.hpp"

namespace biasbench::model {

enum class BackendMode { Toy, Checkpoint };
enum class Pooling { Mean, FirstToken };

struct BackendConfig {
  BackendMode mode = BackendMode::Toy;
  std::string name = "toy";
  int hidden_dim = 32;  // the full-size head uses 768; toy default favors speed
  int max_tokens = 128;
  // Toy settings.
  int vocab_buckets = 4096;
  std::uint64_t init_seed = 1;
  // Checkpoint settings.
  std::string checkpoint_path;

  bool operator==(const BackendConfig&) const = default;
};

// Turns a sentence into a fixed-dimension pooled vector. Both modes are
// embedding-table encoders: the toy one hashes tokens into seeded buckets;
// the checkpoint one loads an exported vocabulary table and pools it per the
// file's declared rule. The table is the backend's trainable parameter block.
class EncoderBackend {
 public:
  // A default-constructed backend is an empty placeholder; encoding through
  // it throws Error(State). Build real ones with toy() or from_checkpoint().
  EncoderBackend() = default;

  static EncoderBackend toy(const BackendConfig& config);
  static EncoderBackend from_checkpoint(const std::string& path);

  const BackendConfig& config() const { return config_; }
  int hidden_dim() const { return config_.hidden_dim; }
  Pooling pooling() const { return pooling_; }

  void encode(std::string_view text, std::span<double> out) const;
  std::vector<double> encode(std::string_view text) const;

  // Trainable parameters (row-major rows x hidden_dim), and the gradient of a
  // pooled-vector loss with respect to them.
  std::span<double> parameters() { return params_; }
  std::span<const double> parameters() const { return params_; }
  void accumulate_encode_gradient(std::string_view text,
                                  std::span<const double> pooled_grad,
                                  std::span<double> param_grad) const;

  bool operator==(const EncoderBackend&) const = default;

 private:
  // Row indices of the (truncated) token sequence; -1 marks a skipped token.
  std::vector<long> token_rows(std::string_view text) const;
  void build_index();

  friend struct BundleCodec;

  BackendConfig config_;
  Pooling pooling_ = Pooling::Mean;
  std::vector<std::string> vocab_;  // checkpoint mode only
  std::unordered_map<std::string, long> index_;
  long unk_row_ = -1;  // checkpoint mode: row for unknown tokens
  long start_row_ = -1;  // checkpoint mode: sequence-start row
  std::vector<double> params_;  // rows x hidden_dim
};

// Dropout + affine map to two logits. The only part guaranteed trainable in
// every backend.
struct ClassifierHead {
  int input_dim = 0;
  std::vector<double> weights;  // input_dim x 2, row-major
  std::array<double, 2> bias{0.0, 0.0};
  double dropout_rate = 0.2;

  static ClassifierHead zeros(int input_dim, double dropout_rate);
  // Zero-mean uniform weights scaled by 1/sqrt(input_dim), zero bias.
  static ClassifierHead random_init(int input_dim, double dropout_rate, std::uint64_t seed);

  std::array<double, 2> logits(std::span<const double> input) const;

  bool operator==(const ClassifierHead&) const = default;
};

struct ScoredPrediction {
  std::array<double, 2> probs{0.5, 0.5};
  int predicted_label = 0;  // argmax, ties toward 0 (Non-biased)
};

enum class Stage { Raw, DomainAdapted, FineTuned };

const char* stage_name(Stage stage);

struct ModelBundle {
  EncoderBackend backend;
  ClassifierHead head;
  Stage stage = Stage::Raw;
  std::string provenance;  // config hash of the producing run, or empty
};

ModelBundle make_toy_bundle(const BackendConfig& config, double dropout_rate,
                            std::uint64_t head_seed);

// Max-subtracted softmax; components sum to 1 for logit magnitudes up to 1e4.
std::array<double, 2> softmax2(const std::array<double, 2>& logits);

std::array<double, 2> log_softmax2(const std::array<double, 2>& logits);

int argmax_label(const std::array<double, 2>& probs);

// Evaluation-mode forward is a pure function; training mode applies an
// inverted dropout mask on the pooled input drawn from `rng`.
ScoredPrediction forward(const ClassifierHead& head, std::span<const double> pooled,
                         bool training, Rng* rng);

inline ScoredPrediction forward(const ClassifierHead& head, std::span<const double> pooled) {
  return forward(head, pooled, false, nullptr);
}

// Mean binary cross-entropy over a batch of class-probability vectors.
// Probabilities are clamped below at 1e-12 before the log.
double cross_entropy(std::span<const std::array<double, 2>> probs,
                     std::span<const int> labels);

// Same loss computed from logits in log space (the training path).
double cross_entropy_logits(std::span<const std::array<double, 2>> logits,
                            std::span<const int> labels);

struct HeadGradient {
  std::vector<double> weights;  // input_dim x 2, row-major
  std::array<double, 2> bias{0.0, 0.0};
};

// Analytic gradient of the batch loss with respect to the head parameters,
// evaluation-mode forward (no dropout). If `pooled_grads` is non-null it
// receives per-example gradients with respect to the pooled inputs.
HeadGradient loss_gradient(const ClassifierHead& head,
                           std::span<const std::vector<double>> pooled_batch,
                           std::span<const int> labels,
                           std::vector<std::vector<double>>* pooled_grads = nullptr);

// Bundle file layout (little-endian): magic "BBMODEL\n", u32 format version,
// backend descriptor block, head parameter block (row-major 64-bit reals),
// stage tag byte, provenance string. Round-trips bit-exactly.
void save_bundle(const ModelBundle& bundle, const std::string& path);
ModelBundle load_bundle(const std::string& path);

}  // namespace biasbench::model

#endif  // BIASBENCH_MODEL_HPP
