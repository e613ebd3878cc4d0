#ifndef BIASBENCH_TRAIN_HPP
#define BIASBENCH_TRAIN_HPP

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "biasbench/corpus.hpp"
#include "biasbench/kv.hpp"
#include "biasbench/model.hpp"

namespace biasbench::train {

struct TrainConfig {
  int batch_size = 32;
  double learning_rate = 1e-5;
  int epochs = 1;
  double weight_decay = 0.01;
  std::uint64_t seed = 0;
  std::optional<int> early_stop_patience;  // used when holdout_fraction > 0
  double holdout_fraction = 0.0;           // in [0, 0.5]
  std::optional<double> grad_clip;         // global L2 norm cap
  bool freeze_encoder = false;

  void validate() const;
};

struct TrainReport {
  long steps = 0;
  std::vector<double> epoch_losses;    // mean training loss per epoch
  std::vector<double> holdout_losses;  // empty unless holdout_fraction > 0
  double wall_time_seconds = 0.0;
  model::Stage final_stage = model::Stage::Raw;

  KvPairs to_kv() const;
  void write(const std::string& path, const std::string& config_hash) const;
};

// Decoupled-weight-decay Adam: beta1 = 0.9, beta2 = 0.999, eps = 1e-8, bias
// correction on both moments.
struct AdamWState {
  std::vector<double> m;
  std::vector<double> v;
  long t = 0;

  explicit AdamWState(std::size_t size) : m(size, 0.0), v(size, 0.0) {}
};

struct AdamWParams {
  double learning_rate = 1e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
};

// One update in place. Throws Error(Numeric) naming `block_name` if any
// gradient component is non-finite.
void adamw_step(std::span<double> params, std::span<const double> grads, AdamWState& state,
                const AdamWParams& opt, std::string_view block_name);

// Domain-adaptive stage: requires a RAW bundle, leaves it DOMAIN_ADAPTED.
TrainReport pretrain_domain(model::ModelBundle& bundle, const corpus::Dataset& data,
                            const TrainConfig& config);

// Task stage: accepts RAW (baseline path) or DOMAIN_ADAPTED, leaves FINE_TUNED.
TrainReport finetune(model::ModelBundle& bundle, const corpus::Dataset& data,
                     const TrainConfig& config);

}  // namespace biasbench::train

#endif  // BIASBENCH_TRAIN_HPP
