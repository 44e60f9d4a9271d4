#include <gtest/gtest.h>

#include <cmath>

#include "adversarial_support.hpp"
#include "shiftgcl/training.hpp"

namespace shiftgcl {
namespace {

using test::AdversarialInstance;
using test::random_adversarial_instance;
using test::random_unit_rows;

Dataset small_cbas(std::uint64_t seed = 3) {
  CbasParams p;
  p.base_nodes = 30;
  p.num_houses = 6;
  p.seed = seed;
  return generate_cbas(p);
}

TrainConfig small_config() {
  TrainConfig cfg;
  cfg.hidden_dim = 8;
  cfg.num_layers = 2;
  cfg.num_prototypes = 5;
  cfg.epochs = 4;
  cfg.eval_every = 2;
  cfg.lr = 1e-2;
  return cfg;
}

ProbeConfig small_probe() {
  ProbeConfig p;
  p.epochs = 20;
  return p;
}

TEST(UpdatePrototypes, ZeroLearningRateLeavesCentersUnchanged) {
  Rng rng(1);
  Prototypes p = Prototypes::random(4, 6, rng);
  const Tensor before = p.centers();
  TrainConfig cfg;
  cfg.prototype_lr = 0.0;
  update_prototypes(random_unit_rows(10, 4, rng), random_unit_rows(10, 4, rng), p, cfg);
  EXPECT_EQ(p.centers(), before);
}

TEST(UpdatePrototypes, SmallStepsDescendAndKeepUnitColumns) {
  Rng rng(2);
  for (int trial = 0; trial < 10; ++trial) {
    Prototypes p = Prototypes::random(5, 4, rng);
    TrainConfig cfg;
    cfg.prototype_lr = 1e-5;
    const auto losses = update_prototypes(random_unit_rows(20, 5, rng), random_unit_rows(20, 5, rng), p, cfg);
    ASSERT_EQ(losses.size(), cfg.prototype_steps + 1);
    for (std::size_t s = 1; s < losses.size(); ++s) EXPECT_LE(losses[s], losses[s - 1] + 1e-9);
    const Tensor norms = kernels::col_sum(kernels::mul(p.centers(), p.centers()));
    for (double x : norms.data()) EXPECT_NEAR(x, 1.0, 1e-12);
  }
}

TEST(AdversarialStep, EveryStepMovesDeltaByEpsilon) {
  Rng rng(3);
  for (int trial = 0; trial < 10; ++trial) {
    AdversarialInstance in = random_adversarial_instance(rng);
    in.cfg.ascent_step_size = 1e-3;
    Rng adv(trial);
    const AdversarialResult r = adversarial_step(in.view_a, in.view_b, in.model, in.prototypes, in.cfg, adv);
    ASSERT_EQ(r.deltas.size(), in.cfg.ascent_steps + 1);
    for (double x : r.deltas[0].data()) EXPECT_LE(std::abs(x), 1e-3);
    for (std::size_t t = 1; t < r.deltas.size(); ++t)
      EXPECT_NEAR(kernels::frobenius_norm(kernels::sub(r.deltas[t], r.deltas[t - 1])), 1e-3, 1e-15);
  }
}

TEST(AdversarialStep, ZeroEpsilonReducesToPlainGradient) {
  Rng rng(4);
  for (int trial = 0; trial < 10; ++trial) {
    AdversarialInstance in = random_adversarial_instance(rng);
    in.cfg.ascent_step_size = 0.0;
    Rng adv(trial);
    const AdversarialResult r = adversarial_step(in.view_a, in.view_b, in.model, in.prototypes, in.cfg, adv);
    for (const Tensor& d : r.deltas)
      for (double x : d.data()) EXPECT_EQ(x, 0.0);
    const std::vector<Tensor> plain = test::plain_robust_gradient(in);
    ASSERT_EQ(plain.size(), r.grads.size());
    for (std::size_t i = 0; i < plain.size(); ++i) EXPECT_LT(kernels::max_abs_diff(plain[i], r.grads[i]), 1e-10);
  }
}

TEST(AdversarialStep, SmallStepsDoNotDecreaseTheLoss) {
  Rng rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    AdversarialInstance in = random_adversarial_instance(rng);
    in.cfg.ascent_step_size = 1e-5;
    Rng adv(100 + trial);
    const AdversarialResult r = adversarial_step(in.view_a, in.view_b, in.model, in.prototypes, in.cfg, adv);
    std::vector<double> losses;
    for (const Tensor& d : r.deltas) losses.push_back(test::robust_loss_at(in, d));
    for (std::size_t t = 0; t < r.step_losses.size(); ++t) EXPECT_NEAR(r.step_losses[t], losses[t], 1e-12);
    for (std::size_t t = 1; t < losses.size(); ++t) EXPECT_GE(losses[t], losses[t - 1] - 1e-8) << "step " << t;
  }
}

TEST(Adam, ZeroGradientAdvancesStepOnly) {
  Tensor p = Tensor::from_rows({{1.5, -2.0}});
  const Tensor before = p;
  OptimizerState s;
  std::vector<Tensor*> params{&p};
  const std::vector<Tensor> grads{Tensor(1, 2)};
  adam_update(params, grads, s, 0.1);
  EXPECT_EQ(p, before);
  EXPECT_EQ(s.step, 1u);
}

TEST(Adam, FirstStepMovesByLearningRate) {
  Tensor p = Tensor::from_rows({{2.0}});
  OptimizerState s;
  std::vector<Tensor*> params{&p};
  adam_update(params, std::vector<Tensor>{Tensor::from_rows({{1.0}})}, s, 0.1);
  // m_hat = v_hat = 1 after bias correction.
  EXPECT_NEAR(p.item(), 2.0 - 0.1 / (1.0 + 1e-8), 1e-15);
}

TEST(Adam, IdenticalInputsGiveIdenticalUpdates) {
  Rng rng(6);
  Tensor a = test::random_tensor(3, 4, rng), b = a;
  const Tensor g = test::random_tensor(3, 4, rng);
  OptimizerState sa, sb;
  std::vector<Tensor*> pa{&a}, pb{&b};
  for (int i = 0; i < 5; ++i) {
    adam_update(pa, std::vector<Tensor>{g}, sa, 0.01);
    adam_update(pb, std::vector<Tensor>{g}, sb, 0.01);
  }
  EXPECT_EQ(a, b);
}

TEST(Checkpoint, RoundTripsBitExactly) {
  Rng rng(7);
  Checkpoint c{init_params({EncoderKind::kSageMean, 2, 5, 7}, 11), Prototypes::random(7, 3, rng), 12,
               "abc|def", "0123456789abcdef"};
  c.model.encoder.weights[0][0] = 0.1 + 0.2;  // not exactly representable in short decimal
  const nlohmann::json j = nlohmann::json::parse(checkpoint_to_json(c).dump());
  const Checkpoint back = checkpoint_from_json(j);
  EXPECT_EQ(back.epoch, 12u);
  EXPECT_EQ(back.rng_state, c.rng_state);
  EXPECT_EQ(back.config_digest, c.config_digest);
  EXPECT_EQ(back.model.config.kind, EncoderKind::kSageMean);
  EXPECT_EQ(back.prototypes.centers(), c.prototypes.centers());
  const auto a = c.model.named_params();
  const auto b = back.model.named_params();
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].first, b[i].first);
    EXPECT_EQ(*a[i].second, *b[i].second);
  }
  EXPECT_EQ(checkpoint_to_json(back), checkpoint_to_json(c));
}

TEST(Pretrain, ZeroEpochsReturnsInitialization) {
  const Dataset d = small_cbas();
  TrainConfig cfg = small_config();
  cfg.epochs = 0;
  const PretrainResult r = pretrain(d, cfg, small_probe());
  EXPECT_TRUE(r.log.empty());
  EXPECT_EQ(r.best_id.epoch, 0u);
  EXPECT_EQ(r.best_ood.epoch, 0u);
  Rng root(cfg.seed);
  const Model init = init_params(cfg.encoder_config(d.graph.feature_dim()), root.next_u64());
  EXPECT_EQ(checkpoint_to_json(r.best_id)["tensors"][0], checkpoint_to_json({init, r.best_id.prototypes, 0, "", ""})["tensors"][0]);
}

TEST(Pretrain, SameSeedIsBitIdentical) {
  const Dataset d = small_cbas();
  const PretrainResult a = pretrain(d, small_config(), small_probe(), "digest");
  const PretrainResult b = pretrain(d, small_config(), small_probe(), "digest");
  ASSERT_EQ(a.log.size(), 4u);
  for (std::size_t i = 0; i < a.log.size(); ++i) EXPECT_EQ(epoch_log_to_json(a.log[i]), epoch_log_to_json(b.log[i]));
  EXPECT_EQ(checkpoint_to_json(a.best_id), checkpoint_to_json(b.best_id));
  EXPECT_EQ(checkpoint_to_json(a.best_ood), checkpoint_to_json(b.best_ood));
  EXPECT_EQ(a.best_id.config_digest, "digest");
}

TEST(Pretrain, LogsCarryValidationMetricsOnEvalEpochs) {
  const PretrainResult r = pretrain(small_cbas(), small_config(), small_probe());
  for (const EpochLog& e : r.log) {
    const bool eval_epoch = e.epoch % 2 == 0;
    EXPECT_EQ(e.id_val_metric.has_value(), eval_epoch) << e.epoch;
    EXPECT_TRUE(std::isfinite(e.loss_mi) && std::isfinite(e.loss_cmi) && std::isfinite(e.loss_rob) &&
                std::isfinite(e.loss_clu));
  }
  for (const auto& [name, t] : r.best_id.model.named_params()) EXPECT_TRUE(t->all_finite()) << name;
  EXPECT_TRUE(r.best_id.prototypes.centers().all_finite());
}

TEST(Pretrain, DivergenceAbortsNamingTheEpoch) {
  TrainConfig cfg = small_config();
  cfg.lr = 1e300;
  try {
    pretrain(small_cbas(), cfg, small_probe());
    FAIL() << "expected NumericalError";
  } catch (const NumericalError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("epoch"), std::string::npos) << msg;
    EXPECT_NE(msg.find("loss_rob"), std::string::npos) << msg;
  }
}

TEST(Pretrain, RejectsInvalidConfig) {
  TrainConfig cfg = small_config();
  cfg.ascent_steps = 0;
  EXPECT_THROW(pretrain(small_cbas(), cfg, small_probe()), std::invalid_argument);
  cfg = small_config();
  cfg.ascent_step_size = -1.0;
  EXPECT_THROW(pretrain(small_cbas(), cfg, small_probe()), std::invalid_argument);
}

}  // namespace
}  // namespace shiftgcl
