#include <gtest/gtest.h>

#include <cmath>
#include <memory>
#include <vector>

#include "rliv/oracles.hpp"
#include "rliv/ranker.hpp"
#include "rliv/stats.hpp"

using namespace rliv;
using oracle::detail::grad_vocab;
using oracle::detail::random_batch;

namespace {

std::vector<LabeledEvent> corpus(std::size_t n, std::uint64_t seed, bool shuffle_labels) {
  Rng rng(seed);
  std::vector<LabeledEvent> out;
  for (const auto& s : random_batch(grad_vocab(), n, seed)) {
    LabeledEvent ev;
    ev.key = s.key;
    ev.state_at_exposure = s.state;
    ev.action_item = s.action_item;
    const bool clicked = shuffle_labels ? rng.bernoulli(0.5) : (s.state.author.author_id % 2 == 0);
    ev.reward.click = clicked ? 1.0 : 0.0;
    out.push_back(ev);
  }
  return out;
}

double auc_on(const RankingModelNet<float>& net, const std::vector<LabeledEvent>& data) {
  std::vector<UAState> states;
  std::vector<int> labels;
  for (const auto& e : data) {
    states.push_back(e.state_at_exposure);
    labels.push_back(e.reward.click > 0 ? 1 : 0);
  }
  const auto p = net.predict(states);
  return stats::auc(p, labels);
}

ModelConfig small_model() {
  ModelConfig c;
  c.embed_dim = 8;
  c.hidden_dims = {16};
  return c;
}

}  // namespace

TEST(TopK, Examples) {
  const std::vector<double> scores = {0.3, 0.9, 0.5};
  const std::vector<ItemId> items = {10, 11, 12};
  EXPECT_EQ(top_k(scores, items, 2), (std::vector<std::size_t>{1, 2}));
  EXPECT_EQ(top_k(scores, items, 3), (std::vector<std::size_t>{1, 2, 0}));
  EXPECT_TRUE(top_k(scores, items, 0).empty());
  EXPECT_THROW(top_k(scores, items, 4), ValidationError);
  EXPECT_THROW(top_k(scores, std::vector<ItemId>{1}, 1), ValidationError);
}

TEST(TopK, TiesBreakByItemId) {
  const std::vector<double> scores = {0.5, 0.5, 0.5, 0.7};
  const std::vector<ItemId> items = {9, 3, 5, 1};
  EXPECT_EQ(top_k(scores, items, 3), (std::vector<std::size_t>{3, 1, 2}));
}

TEST(ScoreCandidates, RandomPolicyIsReproducible) {
  RankingPolicy p;
  const auto states = [] {
    std::vector<UAState> s(50);
    return s;
  }();
  Rng a(5), b(5), c(6);
  const auto sa = score_candidates(p, states, a);
  EXPECT_EQ(sa, score_candidates(p, states, b));
  EXPECT_NE(sa, score_candidates(p, states, c));
}

TEST(ScoreCandidates, RejectsBadInputs) {
  RankingPolicy p;
  Rng rng;
  EXPECT_THROW(score_candidates(p, std::vector<UAState>{}, rng), ValidationError);
  EXPECT_THROW(score_candidates(p, std::vector<UAState>(301), rng), ValidationError);
  EXPECT_NO_THROW(score_candidates(p, std::vector<UAState>(300), rng));
  p.kind = PolicyKind::rliv_ua;
  EXPECT_THROW(score_candidates(p, std::vector<UAState>(3), rng), ContractError);
  p.kind = PolicyKind::ranking_model;
  EXPECT_THROW(score_candidates(p, std::vector<UAState>(3), rng), ContractError);
}

TEST(ScoreCandidates, TowerWeights) {
  auto model = std::make_shared<const LivModel<float>>(small_model(), grad_vocab(), 1);
  std::vector<UAState> states;
  for (const auto& s : random_batch(grad_vocab(), 8, 2)) states.push_back(s.state);
  const auto q = model->score(states);
  RankingPolicy p;
  p.kind = PolicyKind::rliv_ua;
  p.liv = model;
  Rng rng;
  for (Tower t : kAllTowers) {
    p.weights = {0, 0, 0, 0};
    p.weights[static_cast<std::size_t>(t)] = 1.0;
    const auto s = score_candidates(p, states, rng);
    for (std::size_t i = 0; i < states.size(); ++i) EXPECT_EQ(s[i], q[i][t]);
  }
  p.weights = {0.0, 1.0, 0.0, 0.0};
  const auto base = score_candidates(p, states, rng);
  p.weights = {0.0, 3.0, 0.0, 0.0};
  const auto scaled = score_candidates(p, states, rng);
  const std::vector<ItemId> ids = {0, 1, 2, 3, 4, 5, 6, 7};
  EXPECT_EQ(top_k(base, ids, 8), top_k(scaled, ids, 8));
  p.weights = {0, 0, 0, 0};
  EXPECT_THROW(score_candidates(p, states, rng), ValidationError);
  p.weights = {0, -1, 1, 0};
  EXPECT_THROW(score_candidates(p, states, rng), ValidationError);
}

TEST(PolicyKind, NamesRoundTrip) {
  for (auto k : {PolicyKind::random, PolicyKind::ranking_model, PolicyKind::dqn, PolicyKind::rliv_ua})
    EXPECT_EQ(policy_kind_from_name(policy_kind_name(k)), k);
  EXPECT_THROW(policy_kind_from_name("bandit"), ValidationError);
}

TEST(RankingModel, SeparatesASeparableCorpus) {
  const auto train = corpus(2000, 1, false);
  RankingTrainOptions opt;
  opt.embed_dim = 8;
  opt.hidden = {16};
  opt.epochs = 20;
  opt.batch_size = 64;
  opt.lr = 3e-3;
  const auto net = ranking_model_train(train, grad_vocab(), opt);
  EXPECT_GT(auc_on(net, corpus(1000, 2, false)), 0.95);
  std::vector<UAState> states;
  for (const auto& e : train) states.push_back(e.state_at_exposure);
  for (double p : net.predict(states)) {
    EXPECT_GT(p, 0.0);
    EXPECT_LT(p, 1.0);
  }
}

TEST(RankingModel, RandomLabelsGiveChanceAuc) {
  RankingTrainOptions opt;
  opt.embed_dim = 8;
  opt.hidden = {16};
  opt.epochs = 3;
  const auto net = ranking_model_train(corpus(2000, 3, true), grad_vocab(), opt);
  EXPECT_NEAR(auc_on(net, corpus(4000, 4, true)), 0.5, 0.05);
  EXPECT_THROW(ranking_model_train(std::vector<LabeledEvent>{}, grad_vocab(), opt), ValidationError);
}

TEST(Dqn, ZeroDiscountRegressesToCombinedReward) {
  auto cfg = small_model();
  cfg.gamma = 0.0;
  cfg.lr_critic = 3e-3;
  DqnModel<float> dqn(cfg, grad_vocab(), 5);
  auto batch = random_batch(grad_vocab(), 16, 6);
  for (auto& s : batch) s.terminal = true;
  for (int i = 0; i < 2000; ++i) dqn.train_step(batch);
  std::vector<UAState> states;
  for (const auto& s : batch) states.push_back(s.state);
  const auto q = dqn.q_values(states);
  for (std::size_t i = 0; i < batch.size(); ++i)
    EXPECT_NEAR(q[i], DqnModel<float>::combined_reward(batch[i].reward), 0.05);
}

TEST(Dqn, FixedSeedIsDeterministic) {
  DqnModel<float> a(small_model(), grad_vocab(), 7, 10), b(small_model(), grad_vocab(), 7, 10);
  for (int i = 0; i < 50; ++i) {
    const auto batch = random_batch(grad_vocab(), 8, 40 + static_cast<std::uint64_t>(i));
    ASSERT_EQ(a.train_step(batch), b.train_step(batch));
  }
  std::vector<UAState> states;
  for (const auto& s : random_batch(grad_vocab(), 8, 99)) states.push_back(s.state);
  EXPECT_EQ(a.q_values(states), b.q_values(states));
  EXPECT_EQ(a.q_values(states, true), b.q_values(states, true));
  EXPECT_THROW(DqnModel<float>(small_model(), grad_vocab(), 7, 0), ValidationError);
}

TEST(Dqn, CheckpointRoundTrip) {
  DqnModel<float> a(small_model(), grad_vocab(), 8, 3);
  for (int i = 0; i < 7; ++i) a.train_step(random_batch(grad_vocab(), 8, 60 + static_cast<std::uint64_t>(i)));
  nn::Checkpoint ck;
  a.save(ck);
  DqnModel<float> b(small_model(), grad_vocab(), 0, 3);
  b.load(nn::Checkpoint::decode(ck.encode()));
  EXPECT_EQ(b.step(), 7);
  const auto next = random_batch(grad_vocab(), 8, 70);
  EXPECT_EQ(a.train_step(next), b.train_step(next));
}
