#include "biasbench/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>

#include "biasbench/common.hpp"
#include "biasbench/rng.hpp"

namespace biasbench::train {

void TrainConfig::validate() const {
  if (batch_size < 1) fail(ErrorKind::InvalidArgument, "batch_size must be >= 1");
  if (!(learning_rate > 0.0)) fail(ErrorKind::InvalidArgument, "learning_rate must be > 0");
  if (epochs < 0) fail(ErrorKind::InvalidArgument, "epochs must be >= 0");
  if (weight_decay < 0.0) fail(ErrorKind::InvalidArgument, "weight_decay must be >= 0");
  if (holdout_fraction < 0.0 || holdout_fraction > 0.5) {
    fail(ErrorKind::InvalidArgument, "holdout_fraction must be in [0, 0.5]");
  }
  if (early_stop_patience && *early_stop_patience < 1) {
    fail(ErrorKind::InvalidArgument, "early_stop_patience must be >= 1");
  }
  if (grad_clip && !(*grad_clip > 0.0)) {
    fail(ErrorKind::InvalidArgument, "grad_clip must be > 0");
  }
}

KvPairs TrainReport::to_kv() const {
  KvPairs kv;
  kv.emplace_back("artifact", "biasbench-train-report v1");
  kv.emplace_back("steps", std::to_string(steps));
  kv.emplace_back("final_stage", model::stage_name(final_stage));
  kv.emplace_back("wall_time_seconds", format_real(wall_time_seconds));
  for (std::size_t e = 0; e < epoch_losses.size(); ++e) {
    kv.emplace_back("epoch_loss_" + std::to_string(e), format_real(epoch_losses[e]));
  }
  for (std::size_t e = 0; e < holdout_losses.size(); ++e) {
    kv.emplace_back("holdout_loss_" + std::to_string(e), format_real(holdout_losses[e]));
  }
  return kv;
}

void TrainReport::write(const std::string& path, const std::string& config_hash) const {
  KvPairs kv = to_kv();
  kv.emplace_back("config_hash", config_hash);
  write_kv_file(path, kv);
}

void adamw_step(std::span<double> params, std::span<const double> grads, AdamWState& state,
                const AdamWParams& opt, std::string_view block_name) {
  if (params.size() != grads.size() || params.size() != state.m.size() ||
      params.size() != state.v.size()) {
    fail(ErrorKind::InvalidArgument,
         "optimizer shapes disagree for block '" + std::string(block_name) + "'");
  }
  for (double g : grads) {
    if (!std::isfinite(g)) {
      fail(ErrorKind::Numeric,
           "non-finite gradient in parameter block '" + std::string(block_name) + "'");
    }
  }
  state.t += 1;
  const double bc1 = 1.0 - std::pow(opt.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(opt.beta2, static_cast<double>(state.t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    state.m[i] = opt.beta1 * state.m[i] + (1.0 - opt.beta1) * grads[i];
    state.v[i] = opt.beta2 * state.v[i] + (1.0 - opt.beta2) * grads[i] * grads[i];
    const double m_hat = state.m[i] / bc1;
    const double v_hat = state.v[i] / bc2;
    params[i] -= opt.learning_rate * (m_hat / (std::sqrt(v_hat) + opt.eps) +
                                      opt.weight_decay * params[i]);
  }
}

namespace {

using corpus::Dataset;
using model::ClassifierHead;
using model::ModelBundle;

struct Split {
  std::vector<std::size_t> train;    // indices into dataset.sentences
  std::vector<std::size_t> holdout;  // empty when holdout_fraction == 0
};

Split split_holdout(const Dataset& data, const TrainConfig& config) {
  Split split;
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  if (config.holdout_fraction > 0.0) {
    Rng rng(mix_seed(config.seed, "holdout-split"));
    rng.shuffle(order);
    const auto n_holdout = static_cast<std::size_t>(
        std::floor(config.holdout_fraction * static_cast<double>(data.size())));
    split.holdout.assign(order.begin(), order.begin() + static_cast<long>(n_holdout));
    split.train.assign(order.begin() + static_cast<long>(n_holdout), order.end());
    std::sort(split.train.begin(), split.train.end());
    std::sort(split.holdout.begin(), split.holdout.end());
  } else {
    split.train = std::move(order);
  }
  return split;
}

void require_two_classes(const Dataset& data, std::span<const std::size_t> indices,
                         const char* stage) {
  if (indices.empty()) {
    fail(ErrorKind::InvalidArgument, std::string(stage) + ": training set is empty");
  }
  bool has[2] = {false, false};
  for (std::size_t i : indices) has[static_cast<std::size_t>(data.sentences[i].label)] = true;
  if (!has[0] || !has[1]) {
    fail(ErrorKind::InvalidArgument,
         std::string(stage) + ": training set must contain both classes");
  }
}

double holdout_loss(const ModelBundle& bundle, const Dataset& data,
                    std::span<const std::size_t> indices) {
  std::vector<std::array<double, 2>> logits;
  std::vector<int> labels;
  logits.reserve(indices.size());
  labels.reserve(indices.size());
  std::vector<double> pooled(static_cast<std::size_t>(bundle.backend.hidden_dim()));
  for (std::size_t i : indices) {
    bundle.backend.encode(data.sentences[i].text, pooled);
    logits.push_back(bundle.head.logits(pooled));
    labels.push_back(data.sentences[i].label);
  }
  return model::cross_entropy_logits(logits, labels);
}

// Shared SGD loop for both stages. Trains the head always and the backend
// embedding table unless frozen.
TrainReport run_training(ModelBundle& bundle, const Dataset& data, const TrainConfig& config,
                         const char* stage_label) {
  config.validate();
  data.validate();

  const auto start_time = std::chrono::steady_clock::now();

  Split split = split_holdout(data, config);
  require_two_classes(data, split.train, stage_label);

  const std::size_t d = static_cast<std::size_t>(bundle.backend.hidden_dim());
  const bool train_encoder = !config.freeze_encoder && !bundle.backend.parameters().empty();

  ClassifierHead& head = bundle.head;
  std::span<double> encoder_params = bundle.backend.parameters();

  AdamWParams opt;
  opt.learning_rate = config.learning_rate;
  opt.weight_decay = config.weight_decay;
  AdamWState state_w(head.weights.size());
  AdamWState state_b(2);
  AdamWState state_enc(train_encoder ? encoder_params.size() : 0);

  std::vector<double> encoder_grad(train_encoder ? encoder_params.size() : 0);

  TrainReport report;
  const double keep = 1.0 - head.dropout_rate;

  double best_holdout = std::numeric_limits<double>::infinity();
  int bad_epochs = 0;
  const int patience = config.early_stop_patience.value_or(1);

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::vector<std::size_t> order = split.train;
    Rng shuffle_rng(mix_seed(config.seed, "epoch-shuffle", static_cast<std::uint64_t>(epoch)));
    shuffle_rng.shuffle(order);
    Rng dropout_rng(mix_seed(config.seed, "dropout", static_cast<std::uint64_t>(epoch)));

    double epoch_loss_sum = 0.0;

    for (std::size_t begin = 0; begin < order.size(); begin += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t end =
          std::min(order.size(), begin + static_cast<std::size_t>(config.batch_size));
      const std::size_t n = end - begin;
      const double inv_n = 1.0 / static_cast<double>(n);

      // Forward with dropout on the pooled vectors; keep masks for backward.
      std::vector<std::vector<double>> dropped(n);
      std::vector<std::vector<double>> masks(n);  // per-component 0 or 1/keep
      std::vector<std::array<double, 2>> logits(n);
      std::vector<int> labels(n);
      for (std::size_t i = 0; i < n; ++i) {
        const auto& sentence = data.sentences[order[begin + i]];
        dropped[i] = bundle.backend.encode(sentence.text);
        labels[i] = sentence.label;
        if (head.dropout_rate > 0.0) {
          masks[i].resize(d);
          for (std::size_t j = 0; j < d; ++j) {
            masks[i][j] = dropout_rng.uniform() < keep ? 1.0 / keep : 0.0;
            dropped[i][j] *= masks[i][j];
          }
        }
        logits[i] = head.logits(dropped[i]);
      }

      const double batch_loss = model::cross_entropy_logits(logits, labels);
      if (!std::isfinite(batch_loss)) {
        fail(ErrorKind::Numeric, std::string(stage_label) + ": non-finite loss at step " +
                                     std::to_string(report.steps));
      }
      epoch_loss_sum += batch_loss * static_cast<double>(n);

      // Backward.
      model::HeadGradient grad;
      grad.weights.assign(d * 2, 0.0);
      if (train_encoder) std::fill(encoder_grad.begin(), encoder_grad.end(), 0.0);
      for (std::size_t i = 0; i < n; ++i) {
        std::array<double, 2> dz = model::softmax2(logits[i]);
        for (auto& z : dz) z *= inv_n;
        dz[static_cast<std::size_t>(labels[i])] -= inv_n;
        grad.bias[0] += dz[0];
        grad.bias[1] += dz[1];
        for (std::size_t j = 0; j < d; ++j) {
          grad.weights[j * 2] += dropped[i][j] * dz[0];
          grad.weights[j * 2 + 1] += dropped[i][j] * dz[1];
        }
        if (train_encoder) {
          std::vector<double> pooled_grad(d, 0.0);
          for (std::size_t j = 0; j < d; ++j) {
            const double upstream =
                head.weights[j * 2] * dz[0] + head.weights[j * 2 + 1] * dz[1];
            pooled_grad[j] =
                head.dropout_rate > 0.0 ? upstream * masks[i][j] : upstream;
          }
          bundle.backend.accumulate_encode_gradient(data.sentences[order[begin + i]].text,
                                                    pooled_grad, encoder_grad);
        }
      }

      if (config.grad_clip) {
        double norm_sq = 0.0;
        for (double g : grad.weights) norm_sq += g * g;
        norm_sq += grad.bias[0] * grad.bias[0] + grad.bias[1] * grad.bias[1];
        if (train_encoder) {
          for (double g : encoder_grad) norm_sq += g * g;
        }
        const double norm = std::sqrt(norm_sq);
        if (norm > *config.grad_clip) {
          const double scale = *config.grad_clip / norm;
          for (double& g : grad.weights) g *= scale;
          grad.bias[0] *= scale;
          grad.bias[1] *= scale;
          if (train_encoder) {
            for (double& g : encoder_grad) g *= scale;
          }
        }
      }

      adamw_step(head.weights, grad.weights, state_w, opt, "head.weights");
      adamw_step(head.bias, grad.bias, state_b, opt, "head.bias");
      if (train_encoder) {
        adamw_step(encoder_params, encoder_grad, state_enc, opt, "backend.embeddings");
      }
      report.steps += 1;
    }

    report.epoch_losses.push_back(epoch_loss_sum / static_cast<double>(order.size()));

    if (!split.holdout.empty()) {
      const double h = holdout_loss(bundle, data, split.holdout);
      report.holdout_losses.push_back(h);
      if (h < best_holdout) {
        best_holdout = h;
        bad_epochs = 0;
      } else {
        bad_epochs += 1;
        if (bad_epochs >= patience) break;
      }
    }
  }

  report.wall_time_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start_time).count();
  return report;
}

}  // namespace

TrainReport pretrain_domain(ModelBundle& bundle, const Dataset& data, const TrainConfig& config) {
  if (bundle.stage != model::Stage::Raw) {
    fail(ErrorKind::State, std::string("pretrain requires a RAW bundle, got ") +
                               model::stage_name(bundle.stage));
  }
  TrainReport report = run_training(bundle, data, config, "pretrain");
  bundle.stage = model::Stage::DomainAdapted;
  report.final_stage = bundle.stage;
  return report;
}

TrainReport finetune(ModelBundle& bundle, const Dataset& data, const TrainConfig& config) {
  if (bundle.stage == model::Stage::FineTuned) {
    fail(ErrorKind::State, "finetune requires a RAW or DOMAIN_ADAPTED bundle, got FINE_TUNED");
  }
  TrainReport report = run_training(bundle, data, config, "finetune");
  bundle.stage = model::Stage::FineTuned;
  report.final_stage = bundle.stage;
  return report;
}

}  // namespace biasbench::train
