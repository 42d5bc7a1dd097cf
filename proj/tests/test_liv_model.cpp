#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "rliv/liv_model.hpp"
#include "rliv/nn/checkpoint.hpp"
#include "rliv/nn/loss.hpp"
#include "rliv/oracles.hpp"

using namespace rliv;
using oracle::detail::grad_vocab;
using oracle::detail::random_batch;

namespace {

ModelConfig small_model() {
  ModelConfig c;
  c.embed_dim = 8;
  c.hidden_dims = {16, 16};
  c.batch_size = 32;
  return c;
}

std::vector<UAState> states_of(const std::vector<TransitionSample>& batch) {
  std::vector<UAState> out;
  for (const auto& s : batch) out.push_back(s.state);
  return out;
}

std::vector<nn::Mat<float>> copy_params(const std::vector<nn::Mat<float>*>& p) {
  std::vector<nn::Mat<float>> out;
  for (auto* m : p) out.push_back(*m);
  return out;
}

}  // namespace

TEST(LivModel, TowerValueIsMinOfComposedHeads) {
  const auto model = LivModel<float>(small_model(), grad_vocab(), 1).cast<double>();
  for (const auto& s : random_batch(grad_vocab(), 200, 2))
    for (Tower t : kAllTowers) {
      const auto d = model.decompose_q(s.state, t);
      const double q1 = d.r_hat + 0.9 * d.v_hat_1;
      const double q2 = d.r_hat + 0.9 * d.v_hat_2;
      EXPECT_NEAR(model.tower_q(s.state, t), std::min(q1, q2), 1e-12);
    }
}

TEST(LivModel, ScoresMatchSingleStateQueries) {
  const LivModel<float> model(small_model(), grad_vocab(), 3);
  const auto batch = random_batch(grad_vocab(), 20, 4);
  const auto scores = model.score(states_of(batch));
  for (std::size_t i = 0; i < batch.size(); ++i)
    for (Tower t : kAllTowers) EXPECT_NEAR(scores[i][t], model.tower_q(batch[i].state, t), 1e-6);
}

TEST(LivModel, ZeroDiscountTargetIsReward) {
  auto cfg = small_model();
  cfg.gamma = 0.0;
  const LivModel<float> model(cfg, grad_vocab(), 5);
  for (const auto& s : random_batch(grad_vocab(), 30, 6))
    for (Tower t : kAllTowers) {
      EXPECT_DOUBLE_EQ(model.bellman_target(s, t), s.reward[t]);
      EXPECT_NEAR(model.tower_q(s.state, t), model.decompose_q(s.state, t).r_hat, 1e-7);
    }
}

TEST(LivModel, TerminalTargetIsReward) {
  const LivModel<float> model(small_model(), grad_vocab(), 7);
  auto batch = random_batch(grad_vocab(), 10, 8);
  for (auto& s : batch) {
    s.terminal = true;
    s.author_items.clear();
    for (Tower t : kAllTowers) EXPECT_EQ(model.bellman_target(s, t), s.reward[t]);
  }
}

TEST(LivModel, NonTerminalTargetMaximizesOverAuthorItems) {
  const auto model = LivModel<float>(small_model(), grad_vocab(), 9).cast<double>();
  auto s = random_batch(grad_vocab(), 1, 10).front();
  double best = -std::numeric_limits<double>::infinity();
  for (const auto& it : s.author_items) {
    UAState n = s.next_state;
    n.author.item_id = it.item_id;
    n.author.category_id = it.category_id;
    const auto d = model.decompose_q(n, Tower::watch);
    // Target heads start equal to the online critics.
    best = std::max(best, std::min(d.r_hat + 0.9 * d.v_hat_1, d.r_hat + 0.9 * d.v_hat_2));
  }
  EXPECT_NEAR(model.bellman_target(s, Tower::watch), s.reward.watch + 0.9 * best, 1e-12);
  s.author_items.clear();
  EXPECT_THROW(model.bellman_target(s, Tower::watch), ValidationError);
}

TEST(LivModel, SingleSampleLossByHand) {
  const auto model = LivModel<float>(small_model(), grad_vocab(), 11).cast<double>();
  const auto batch = random_batch(grad_vocab(), 1, 12);
  const auto& s = batch.front();
  for (Tower t : kAllTowers) {
    const auto d = model.decompose_q(s.state, t);
    const double y = model.bellman_target(s, t);
    const double expect = nn::huber(d.r_hat, s.reward[t], 1.0).value + nn::huber(d.r_hat + 0.9 * d.v_hat_1, y, 1.0).value +
                          nn::huber(d.r_hat + 0.9 * d.v_hat_2, y, 1.0).value;
    EXPECT_NEAR(model.tower_loss(batch, t), expect, 1e-12);
  }
}

TEST(LivModel, TotalLossIsSumOfParts) {
  const LivModel<float> model(small_model(), grad_vocab(), 13);
  const auto batch = random_batch(grad_vocab(), 16, 14);
  double sum = model.assistance_gift_loss(batch);
  EXPECT_GT(sum, 0.0);
  for (Tower t : kAllTowers) {
    const double l = model.tower_loss(batch, t);
    EXPECT_GE(l, 0.0);
    sum += l;
  }
  EXPECT_NEAR(model.total_loss(batch), sum, 1e-9 * std::max(1.0, sum));
}

TEST(LivModel, DisabledAssistanceDropsItsTerm) {
  auto cfg = small_model();
  cfg.assistance = false;
  const LivModel<float> model(cfg, grad_vocab(), 13);
  const auto batch = random_batch(grad_vocab(), 16, 14);
  EXPECT_EQ(model.assistance_gift_loss(batch), 0.0);
  EXPECT_THROW(model.assistance_logit(batch.front().state), ContractError);
  double sum = 0.0;
  for (Tower t : kAllTowers) sum += model.tower_loss(batch, t);
  EXPECT_NEAR(model.total_loss(batch), sum, 1e-9 * std::max(1.0, sum));
}

TEST(LivModel, SingleTowerVariant) {
  auto cfg = small_model();
  cfg.multi_task = false;
  cfg.primary_tower = Tower::watch;
  const LivModel<float> model(cfg, grad_vocab(), 15);
  EXPECT_EQ(model.active_towers(), std::vector<Tower>{Tower::watch});
  const auto batch = random_batch(grad_vocab(), 4, 16);
  EXPECT_THROW(model.tower_loss(batch, Tower::click), ContractError);
  EXPECT_EQ(model.assistance_gift_loss(batch), 0.0);
  const auto scores = model.score(states_of(batch));
  for (const auto& sc : scores) {
    EXPECT_EQ(sc.q_click, 0.0);
    EXPECT_EQ(sc.q_gift, 0.0);
  }
}

TEST(LivModel, UnsupervisedVariantHasNoRewardHead) {
  auto cfg = small_model();
  cfg.supervised = false;
  const auto model = LivModel<float>(cfg, grad_vocab(), 17).cast<double>();
  const auto s = random_batch(grad_vocab(), 1, 18).front();
  const auto d = model.decompose_q(s.state, Tower::click);
  EXPECT_EQ(d.r_hat, 0.0);
  EXPECT_NEAR(model.tower_q(s.state, Tower::click), std::min(d.v_hat_1, d.v_hat_2), 1e-12);
}

TEST(LivModel, RewardHeadLearnsConstantReward) {
  auto cfg = small_model();
  cfg.gamma = 0.0;
  LivModel<float> model(cfg, grad_vocab(), 19);
  auto batch = random_batch(grad_vocab(), 32, 20);
  for (auto& s : batch) {
    s.reward = reward_from_feedback(InteractionOutcome{0, 0, true, 42.0, false, 0.0});
    s.terminal = true;
  }
  ASSERT_DOUBLE_EQ(batch.front().reward.watch, 0.7);
  for (int i = 0; i < 1500; ++i) model.train_step(batch);
  for (const auto& s : batch) EXPECT_NEAR(model.decompose_q(s.state, Tower::watch).r_hat, 0.7, 0.01);
}

TEST(LivModel, AssistanceLearnsSeparableGiftLabel) {
  LivModel<float> model(small_model(), grad_vocab(), 21);
  auto batch = random_batch(grad_vocab(), 48, 22);
  for (auto& s : batch) {
    const bool gives = s.state.user.user_id % 2 == 0;
    s.reward.gift = gives ? 0.2 : 0.0;
    s.reward.gift_amount = gives ? 20.0 : 0.0;
  }
  for (int i = 0; i < 500; ++i) model.train_step(batch);
  EXPECT_LT(model.assistance_gift_loss(batch), 0.1);
  for (const auto& s : batch) EXPECT_EQ(model.assistance_logit(s.state) > 0, s.reward.gift > 0);
}

TEST(LivModel, SmallTabularProblemConverges) {
  oracle::TabularOptions opt;
  opt.mdp.users = 2;
  opt.mdp.authors = 1;
  opt.max_steps = 3000;
  const auto r = oracle::tabular_check(opt);
  EXPECT_TRUE(r.pass) << "click mae " << r.mae[0] << " watch mae " << r.mae[1] << " after " << r.steps;
}

TEST(LivModel, FixedSeedTrainingIsDeterministic) {
  LivModel<float> a(small_model(), grad_vocab(), 23), b(small_model(), grad_vocab(), 23);
  for (int i = 0; i < 100; ++i) {
    const auto batch = random_batch(grad_vocab(), 16, 100 + static_cast<std::uint64_t>(i));
    const auto ma = a.train_step(batch);
    const auto mb = b.train_step(batch);
    ASSERT_EQ(ma.loss.total, mb.loss.total);
  }
  const auto pa = a.online_params(), pb = b.online_params();
  for (std::size_t i = 0; i < pa.size(); ++i) EXPECT_TRUE(*pa[i] == *pb[i]);
  const auto ta = a.target_params(), tb = b.target_params();
  for (std::size_t i = 0; i < ta.size(); ++i) EXPECT_TRUE(*ta[i] == *tb[i]);
}

TEST(LivModel, ZeroTauFreezesTargets) {
  auto cfg = small_model();
  cfg.tau = 0.0;
  LivModel<float> model(cfg, grad_vocab(), 25);
  const auto before = copy_params(model.target_params());
  const auto online_before = copy_params(model.online_params());
  for (int i = 0; i < 20; ++i) model.train_step(random_batch(grad_vocab(), 8, 200 + static_cast<std::uint64_t>(i)));
  const auto after = model.target_params();
  for (std::size_t i = 0; i < after.size(); ++i) EXPECT_TRUE(before[i] == *after[i]);
  bool moved = false;
  const auto online = model.online_params();
  for (std::size_t i = 0; i < online.size(); ++i) moved = moved || !(online_before[i] == *online[i]);
  EXPECT_TRUE(moved);
}

TEST(LivModel, ScoringIsPermutationEquivariant) {
  const LivModel<float> model(small_model(), grad_vocab(), 27);
  auto states = states_of(random_batch(grad_vocab(), 12, 28));
  states.push_back(states.front());
  const auto base = model.score(states);
  for (Tower t : kAllTowers) EXPECT_NEAR(base.front()[t], base.back()[t], 1e-6);
  std::vector<UAState> reversed(states.rbegin(), states.rend());
  const auto rev = model.score(reversed);
  for (std::size_t i = 0; i < states.size(); ++i)
    for (Tower t : kAllTowers) EXPECT_NEAR(rev[i][t], base[states.size() - 1 - i][t], 1e-6);
  EXPECT_TRUE(model.score(std::vector<UAState>{}).empty());
}

TEST(LivModel, CheckpointRoundTrip) {
  LivModel<float> model(small_model(), grad_vocab(), 29);
  for (int i = 0; i < 5; ++i) model.train_step(random_batch(grad_vocab(), 8, 300 + static_cast<std::uint64_t>(i)));
  nn::Checkpoint ck;
  model.save(ck);
  const auto restored_ck = nn::Checkpoint::decode(ck.encode());
  LivModel<float> copy(small_model(), grad_vocab(), 0);
  copy.load(restored_ck);
  EXPECT_EQ(copy.step(), 5);
  const auto states = states_of(random_batch(grad_vocab(), 10, 31));
  EXPECT_EQ(copy.score(states), model.score(states));
  const auto next = random_batch(grad_vocab(), 8, 32);
  EXPECT_EQ(copy.train_step(next).loss.total, model.train_step(next).loss.total);
}

TEST(LivModel, NonFiniteRewardRaisesNumericError) {
  LivModel<float> model(small_model(), grad_vocab(), 33);
  auto batch = random_batch(grad_vocab(), 4, 34);
  batch[1].reward.watch = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(model.train_step(batch), NumericError);
  EXPECT_THROW(model.train_step(std::vector<TransitionSample>{}), ValidationError);
}

TEST(ModelConfig, Validation) {
  auto c = small_model();
  c.gamma = 1.5;
  EXPECT_THROW(c.validate(), ValidationError);
  c = small_model();
  c.tau = -0.1;
  EXPECT_THROW(c.validate(), ValidationError);
  c = small_model();
  c.hidden_dims = {16, 0};
  EXPECT_THROW(LivModel<float>(c, grad_vocab(), 0), ValidationError);
}
