#include "biasbench/train.hpp"

#include <cmath>

#include "biasbench/common.hpp"
#include "biasbench/corpus.hpp"
#include "biasbench/model.hpp"
#include "doctest.h"
#include "test_util.hpp"

using namespace biasbench;
using namespace biasbench::train;
using biasbench::corpus::Dataset;
using biasbench::corpus::Source;
using biasbench::model::ModelBundle;
using biasbench::model::Stage;

namespace {

ModelBundle small_bundle(double dropout = 0.0, std::uint64_t seed = 11) {
  model::BackendConfig config;
  config.hidden_dim = 16;
  config.vocab_buckets = 512;
  config.max_tokens = 32;
  config.init_seed = seed;
  return model::make_toy_bundle(config, dropout, seed);
}

TrainConfig quick_config(int epochs, std::uint64_t seed = 1) {
  TrainConfig tc;
  tc.epochs = epochs;
  tc.batch_size = 8;
  tc.learning_rate = 0.05;
  tc.weight_decay = 0.0;
  tc.seed = seed;
  return tc;
}

}  // namespace

TEST_CASE("adamw leaves parameters alone with zero gradient and zero decay") {
  std::vector<double> params{1.0, -2.0, 3.0};
  std::vector<double> grads{0.0, 0.0, 0.0};
  AdamWState state(params.size());
  AdamWParams opt;
  opt.learning_rate = 0.1;
  opt.weight_decay = 0.0;
  adamw_step(params, grads, state, opt, "test");
  CHECK(params[0] == doctest::Approx(1.0));
  CHECK(params[1] == doctest::Approx(-2.0));
  CHECK(params[2] == doctest::Approx(3.0));
}

TEST_CASE("adamw takes the hand-computed first step") {
  // p=1, g=1, lr=0.1: bias-corrected m_hat=1, v_hat=1, so p -> ~0.9.
  std::vector<double> params{1.0};
  std::vector<double> grads{1.0};
  AdamWState state(1);
  AdamWParams opt;
  opt.learning_rate = 0.1;
  opt.weight_decay = 0.0;
  adamw_step(params, grads, state, opt, "test");
  CHECK(params[0] == doctest::Approx(1.0 - 0.1 * (1.0 / (1.0 + 1e-8))).epsilon(1e-12));
}

TEST_CASE("adamw applies decoupled weight decay with zero gradient") {
  std::vector<double> params{1.0};
  std::vector<double> grads{0.0};
  AdamWState state(1);
  AdamWParams opt;
  opt.learning_rate = 0.1;
  opt.weight_decay = 0.01;
  adamw_step(params, grads, state, opt, "test");
  CHECK(params[0] == doctest::Approx(0.999).epsilon(1e-12));
}

TEST_CASE("adamw names the block on non-finite gradients") {
  std::vector<double> params{1.0};
  std::vector<double> grads{std::nan("")};
  AdamWState state(1);
  CHECK_THROWS_WITH_AS(adamw_step(params, grads, state, AdamWParams{}, "head.weights"),
                       doctest::Contains("head.weights"), Error);
}

TEST_CASE("pretrain with zero epochs is a stage-only no-op") {
  auto [pre, fine] = corpus::make_synthetic(20, 3);
  ModelBundle bundle = small_bundle();
  const ModelBundle before = bundle;
  TrainReport report = pretrain_domain(bundle, pre, quick_config(0));
  CHECK(report.steps == 0);
  CHECK(report.epoch_losses.empty());
  CHECK(bundle.stage == Stage::DomainAdapted);
  CHECK(bundle.head == before.head);
  CHECK(bundle.backend == before.backend);
}

TEST_CASE("step count follows epochs x ceil(n / batch)") {
  auto [pre, fine] = corpus::make_synthetic(50, 3);  // 100 sentences
  ModelBundle bundle = small_bundle();
  TrainConfig tc = quick_config(1);
  tc.batch_size = 32;
  TrainReport report = pretrain_domain(bundle, pre, tc);
  CHECK(report.steps == 4);  // ceil(100/32) = 4
  CHECK(report.epoch_losses.size() == 1);
  CHECK(report.final_stage == Stage::DomainAdapted);

  ModelBundle bundle2 = small_bundle();
  TrainConfig tc2 = quick_config(3);
  tc2.batch_size = 7;
  TrainReport report2 = pretrain_domain(bundle2, pre, tc2);
  CHECK(report2.steps == 3 * ((100 + 6) / 7));
}

TEST_CASE("pretrain rejects wrong stages and degenerate datasets") {
  auto [pre, fine] = corpus::make_synthetic(20, 3);
  ModelBundle bundle = small_bundle();
  pretrain_domain(bundle, pre, quick_config(0));
  CHECK_THROWS_WITH_AS(pretrain_domain(bundle, pre, quick_config(0)),
                       doctest::Contains("RAW"), Error);

  ModelBundle fresh = small_bundle();
  Dataset empty;
  empty.name = "empty";
  CHECK_THROWS_AS(pretrain_domain(fresh, empty, quick_config(1)), Error);

  Dataset one_class;
  one_class.name = "one-class";
  for (int i = 0; i < 8; ++i) {
    one_class.sentences.push_back(
        {"s" + std::to_string(i), "text here", 1, Source::Synthetic, ""});
  }
  CHECK_THROWS_WITH_AS(pretrain_domain(fresh, one_class, quick_config(1)),
                       doctest::Contains("both classes"), Error);
}

TEST_CASE("loss falls over pretraining on separable synthetic data") {
  auto [pre, fine] = corpus::make_synthetic(500, 9);
  ModelBundle bundle = small_bundle();
  TrainConfig tc = quick_config(3, 5);
  tc.batch_size = 32;
  TrainReport report = pretrain_domain(bundle, pre, tc);
  REQUIRE(report.epoch_losses.size() == 3);
  CHECK(report.epoch_losses.back() < report.epoch_losses.front());
}

TEST_CASE("finetune stage machine accepts RAW and DOMAIN_ADAPTED only") {
  auto [pre, fine] = corpus::make_synthetic(20, 3);

  ModelBundle raw = small_bundle();
  TrainReport r1 = finetune(raw, fine, quick_config(0));
  CHECK(raw.stage == Stage::FineTuned);
  CHECK(r1.final_stage == Stage::FineTuned);

  ModelBundle adapted = small_bundle();
  pretrain_domain(adapted, pre, quick_config(0));
  finetune(adapted, fine, quick_config(0));
  CHECK(adapted.stage == Stage::FineTuned);

  CHECK_THROWS_WITH_AS(finetune(adapted, fine, quick_config(0)),
                       doctest::Contains("FINE_TUNED"), Error);
}

TEST_CASE("finetune with zero epochs leaves parameters unchanged") {
  auto [pre, fine] = corpus::make_synthetic(20, 3);
  ModelBundle bundle = small_bundle();
  const ModelBundle before = bundle;
  finetune(bundle, fine, quick_config(0));
  CHECK(bundle.head == before.head);
  CHECK(bundle.backend == before.backend);
}

TEST_CASE("a small batch is memorized within 200 steps") {
  // 32 sentences, 200 optimizer steps -> training loss under 0.05.
  auto [pre, fine] = corpus::make_synthetic(16, 21);  // 32 pretrain sentences
  ModelBundle bundle = small_bundle(0.0, 22);
  TrainConfig tc;
  tc.batch_size = 32;
  tc.epochs = 200;  // one step per epoch at this size
  tc.learning_rate = 0.05;
  tc.weight_decay = 0.0;
  tc.seed = 4;
  TrainReport report = pretrain_domain(bundle, pre, tc);
  CHECK(report.steps == 200);
  CHECK(report.epoch_losses.back() < 0.05);
}

TEST_CASE("training is deterministic given identical inputs") {
  auto [pre, fine] = corpus::make_synthetic(40, 13);
  ModelBundle a = small_bundle(0.2, 31);
  ModelBundle b = small_bundle(0.2, 31);
  TrainConfig tc = quick_config(2, 77);
  TrainReport ra = pretrain_domain(a, pre, tc);
  TrainReport rb = pretrain_domain(b, pre, tc);
  CHECK(a.head == b.head);
  CHECK(a.backend == b.backend);
  CHECK(ra.epoch_losses == rb.epoch_losses);

  ModelBundle c = small_bundle(0.2, 31);
  TrainConfig other = tc;
  other.seed = 78;
  pretrain_domain(c, pre, other);
  CHECK(a.head != c.head);
}

TEST_CASE("freezing the encoder keeps backend parameters fixed") {
  auto [pre, fine] = corpus::make_synthetic(20, 3);
  ModelBundle bundle = small_bundle();
  const std::vector<double> before(bundle.backend.parameters().begin(),
                                   bundle.backend.parameters().end());
  TrainConfig tc = quick_config(2);
  tc.freeze_encoder = true;
  pretrain_domain(bundle, pre, tc);
  const std::vector<double> after(bundle.backend.parameters().begin(),
                                  bundle.backend.parameters().end());
  CHECK(before == after);

  ModelBundle trained = small_bundle();
  TrainConfig tc2 = quick_config(2);
  pretrain_domain(trained, pre, tc2);
  const std::vector<double> moved(trained.backend.parameters().begin(),
                                  trained.backend.parameters().end());
  CHECK(before != moved);
}

TEST_CASE("holdout split records losses and can stop early") {
  auto [pre, fine] = corpus::make_synthetic(60, 5);
  ModelBundle bundle = small_bundle();
  TrainConfig tc = quick_config(6, 3);
  tc.holdout_fraction = 0.25;
  tc.early_stop_patience = 1;
  TrainReport report = pretrain_domain(bundle, pre, tc);
  CHECK(!report.holdout_losses.empty());
  CHECK(report.holdout_losses.size() == report.epoch_losses.size());
  CHECK(report.epoch_losses.size() <= 6);

  // Step-count law uses the train split size (120 - 30 holdout = 90).
  const long expected_per_epoch = (90 + tc.batch_size - 1) / tc.batch_size;
  CHECK(report.steps == expected_per_epoch * static_cast<long>(report.epoch_losses.size()));
}

TEST_CASE("a saved RAW bundle can be reloaded and pre-trained") {
  bbtest::TempDir tmp;
  auto [pre, fine] = corpus::make_synthetic(20, 3);
  ModelBundle bundle = small_bundle();
  const std::string path = tmp.file("raw.bbm");
  model::save_bundle(bundle, path);

  ModelBundle loaded = model::load_bundle(path);
  CHECK(loaded.stage == Stage::Raw);
  pretrain_domain(loaded, pre, quick_config(1));
  CHECK(loaded.stage == Stage::DomainAdapted);
}

TEST_CASE("gradient clipping caps the global step size") {
  // Adam normalizes gradient scale away, so only a clip far below epsilon
  // visibly shrinks the update.
  auto [pre, fine] = corpus::make_synthetic(20, 3);
  ModelBundle clipped = small_bundle();
  TrainConfig tc = quick_config(1);
  tc.grad_clip = 1e-12;
  pretrain_domain(clipped, pre, tc);

  ModelBundle unclipped = small_bundle();
  pretrain_domain(unclipped, pre, quick_config(1));

  const ModelBundle reference = small_bundle();
  auto movement = [&reference](const ModelBundle& bundle) {
    double total = 0.0;
    for (std::size_t j = 0; j < bundle.head.weights.size(); ++j) {
      total += std::abs(bundle.head.weights[j] - reference.head.weights[j]);
    }
    return total;
  };
  CHECK(movement(clipped) > 0.0);
  CHECK(movement(clipped) < 0.01 * movement(unclipped));
}

TEST_CASE("train config validation rejects nonsense") {
  TrainConfig tc;
  tc.batch_size = 0;
  CHECK_THROWS_AS(tc.validate(), Error);
  tc = TrainConfig{};
  tc.learning_rate = 0.0;
  CHECK_THROWS_AS(tc.validate(), Error);
  tc = TrainConfig{};
  tc.epochs = -1;
  CHECK_THROWS_AS(tc.validate(), Error);
  tc = TrainConfig{};
  tc.holdout_fraction = 0.7;
  CHECK_THROWS_AS(tc.validate(), Error);
}
