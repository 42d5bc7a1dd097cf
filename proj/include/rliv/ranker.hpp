#pragma once

// Serving-stage ranking and the comparison baselines.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <iostream>
#include <memory>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "rliv/asa.hpp"
#include "rliv/domain.hpp"
#include "rliv/encoder.hpp"
#include "rliv/error.hpp"
#include "rliv/liv_model.hpp"
#include "rliv/nn/adam.hpp"
#include "rliv/nn/checkpoint.hpp"
#include "rliv/nn/dense.hpp"
#include "rliv/nn/embedding.hpp"
#include "rliv/nn/loss.hpp"
#include "rliv/nn/target.hpp"

namespace rliv {

inline constexpr std::size_t kMaxCandidates = 300;

/// Indices of the K best scores: descending score, ties by ascending item id.
inline std::vector<std::size_t> top_k(std::span<const double> scores, std::span<const ItemId> items, std::size_t k) {
  if (scores.size() != items.size()) throw ValidationError("top_k: scores and candidates differ in length");
  if (k > scores.size()) throw ValidationError("top_k: K exceeds the number of candidates");
  std::vector<std::size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), 0);
  auto better = [&](std::size_t a, std::size_t b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return items[a] < items[b];
  };
  std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k), idx.end(), better);
  idx.resize(k);
  return idx;
}

// ---------------------------------------------------------------------------
// Supervised click model: field embeddings, a pairwise interaction vector
// sum_{i<j} e_i * e_j, and an MLP head over concat(fields, interaction).
// Reads only the static fields of a state.

template <class T = float>
class RankingModelNet {
 public:
  using Mat = nn::Mat<T>;
  static constexpr std::size_t kFields = 6;

  RankingModelNet() = default;

  RankingModelNet(const Vocab& v, int dim, const std::vector<int>& hidden, double lr, std::uint64_t seed)
      : dim_(dim), lr_(lr) {
    const std::array<std::int64_t, kFields> sizes = {v.users, v.cohorts, v.activity_tiers, v.authors, v.items, v.categories};
    for (std::size_t k = 0; k < kFields; ++k) {
      Rng rng(derive_seed(seed, "ranking.table", k));
      tables_[k] = nn::EmbeddingTable<T>(sizes[k], dim, rng);
    }
    Rng rng(derive_seed(seed, "ranking.mlp"));
    mlp_ = nn::DenseNetwork<T>(static_cast<Eigen::Index>(kFields + 1) * dim, hidden, 1, rng);
    adam_ = nn::AdamState<T>(params());
  }

  std::vector<Mat*> params() {
    std::vector<Mat*> out;
    for (auto& t : tables_) out.push_back(&t.table());
    mlp_.append_params(out);
    return out;
  }

  std::int64_t step() const { return step_; }

  struct Cache {
    std::array<std::vector<std::int64_t>, kFields> ids;
    std::array<Mat, kFields> e;
    nn::DenseCache<T> mlp;
  };

  Mat logits(std::span<const UAState> states, Cache* cache = nullptr) const {
    Cache local;
    Cache& c = cache ? *cache : local;
    const auto B = static_cast<Eigen::Index>(states.size());
    for (auto& ids : c.ids) ids.resize(states.size());
    for (std::size_t b = 0; b < states.size(); ++b) {
      const auto& s = states[b];
      c.ids[0][b] = s.user.user_id;
      c.ids[1][b] = s.user.cohort_id;
      c.ids[2][b] = s.user.activity_tier;
      c.ids[3][b] = s.author.author_id;
      c.ids[4][b] = s.author.item_id;
      c.ids[5][b] = s.author.category_id;
    }
    Mat x(static_cast<Eigen::Index>(kFields + 1) * dim_, B);
    Mat sum = Mat::Zero(dim_, B);
    Mat sq = Mat::Zero(dim_, B);
    for (std::size_t k = 0; k < kFields; ++k) {
      c.e[k] = Mat::Zero(dim_, B);
      tables_[k].gather_add(c.ids[k], c.e[k]);
      x.middleRows(static_cast<Eigen::Index>(k) * dim_, dim_) = c.e[k];
      sum += c.e[k];
      sq += c.e[k].cwiseProduct(c.e[k]);
    }
    // sum_{i<j} e_i*e_j = ((sum e)^2 - sum e^2) / 2
    x.bottomRows(dim_) = T(0.5) * (sum.cwiseProduct(sum) - sq);
    return cache ? mlp_.forward(x, c.mlp) : mlp_.forward(x);
  }

  std::vector<double> predict(std::span<const UAState> states) const {
    std::vector<double> p(states.size());
    if (states.empty()) return p;
    const Mat l = logits(states);
    for (std::size_t b = 0; b < states.size(); ++b) p[b] = nn::sigmoid(static_cast<double>(l(0, static_cast<Eigen::Index>(b))));
    return p;
  }

  /// Mean BCE and its gradient for click labels.
  double loss_and_grad(std::span<const UAState> states, std::span<const int> labels, nn::GradBundle<T>* grads) const {
    if (states.empty()) throw ValidationError("RankingModelNet: empty batch");
    Cache c;
    const Mat l = logits(states, &c);
    const auto B = static_cast<Eigen::Index>(states.size());
    Mat dl(1, B);
    double loss = 0;
    for (Eigen::Index b = 0; b < B; ++b) {
      const auto v = nn::bce(static_cast<double>(l(0, b)), labels[static_cast<std::size_t>(b)]);
      loss += v.value;
      dl(0, b) = static_cast<T>(v.grad / static_cast<double>(B));
    }
    if (grads) {
      const Mat dx = mlp_.backward(dl, c.mlp, grads->slice(kFields, mlp_.num_tensors()));
      Mat sum = Mat::Zero(dim_, B);
      for (std::size_t k = 0; k < kFields; ++k) sum += c.e[k];
      const Mat dinter = dx.bottomRows(dim_);
      for (std::size_t k = 0; k < kFields; ++k) {
        // d/d e_k of the interaction vector is (sum - e_k), elementwise.
        Mat de = dx.middleRows(static_cast<Eigen::Index>(k) * dim_, dim_) + dinter.cwiseProduct(sum - c.e[k]);
        tables_[k].scatter_add(c.ids[k], de, grads->tensors[k]);
      }
    }
    return loss / static_cast<double>(B);
  }

  double train_step(std::span<const UAState> states, std::span<const int> labels) {
    auto p = params();
    nn::GradBundle<T> g(p);
    const double loss = loss_and_grad(states, labels, &g);
    if (!std::isfinite(loss) || !g.all_finite()) throw NumericError("RankingModelNet: non-finite loss at step " + std::to_string(step_));
    nn::clip_global_norm(g, T(10));
    nn::adam_step<T>(p, g, adam_, lr_);
    ++step_;
    return loss;
  }

  double train_step(std::span<const TransitionSample> batch) {
    std::vector<UAState> s;
    std::vector<int> y;
    for (const auto& b : batch) {
      s.push_back(b.state);
      y.push_back(b.reward.click > 0 ? 1 : 0);
    }
    return train_step(s, y);
  }

  void save(nn::Checkpoint& ck, const std::string& prefix = "ranking.") const
    requires std::is_same_v<T, float>
  {
    auto p = const_cast<RankingModelNet*>(this)->params();
    for (std::size_t i = 0; i < p.size(); ++i) {
      ck.put_tensor(prefix + "p" + std::to_string(i), *p[i]);
      ck.put_tensor(prefix + "adam.m" + std::to_string(i), adam_.first[i]);
      ck.put_tensor(prefix + "adam.v" + std::to_string(i), adam_.second[i]);
    }
    ck.put_bytes(prefix + "step", std::to_string(step_));
    ck.put_bytes(prefix + "adam.t", std::to_string(adam_.step));
  }

  void load(const nn::Checkpoint& ck, const std::string& prefix = "ranking.")
    requires std::is_same_v<T, float>
  {
    auto p = params();
    for (std::size_t i = 0; i < p.size(); ++i) {
      ck.get_tensor(prefix + "p" + std::to_string(i), *p[i]);
      ck.get_tensor(prefix + "adam.m" + std::to_string(i), adam_.first[i]);
      ck.get_tensor(prefix + "adam.v" + std::to_string(i), adam_.second[i]);
    }
    step_ = std::stoll(ck.get_bytes(prefix + "step"));
    adam_.step = std::stoll(ck.get_bytes(prefix + "adam.t"));
  }

 private:
  int dim_ = 0;
  double lr_ = 1e-3;
  std::int64_t step_ = 0;
  std::array<nn::EmbeddingTable<T>, kFields> tables_;
  nn::DenseNetwork<T> mlp_;
  nn::AdamState<T> adam_;
};

struct RankingTrainOptions {
  int epochs = 5;
  int batch_size = 256;
  double lr = 1e-3;
  int embed_dim = 32;
  std::vector<int> hidden = {64, 64};
  std::uint64_t seed = 0;
};

/// Fits a click predictor on a labeled corpus with shuffled minibatches.
inline RankingModelNet<float> ranking_model_train(std::span<const LabeledEvent> corpus, const Vocab& vocab,
                                                  const RankingTrainOptions& opt = {}) {
  if (corpus.empty()) throw ValidationError("ranking_model_train: empty corpus");
  std::size_t positives = 0;
  for (const auto& e : corpus) positives += e.reward.click > 0 ? 1 : 0;
  if (positives == 0 || positives == corpus.size())
    std::cerr << "warning: ranking_model_train: corpus has a single class\n";
  RankingModelNet<float> net(vocab, opt.embed_dim, opt.hidden, opt.lr, opt.seed);
  Rng rng(derive_seed(opt.seed, "ranking.shuffle"));
  std::vector<std::size_t> order(corpus.size());
  std::iota(order.begin(), order.end(), 0);
  for (int ep = 0; ep < opt.epochs; ++ep) {
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(opt.batch_size)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(opt.batch_size));
      std::vector<UAState> s;
      std::vector<int> y;
      for (std::size_t k = start; k < end; ++k) {
        s.push_back(corpus[order[k]].state_at_exposure);
        y.push_back(corpus[order[k]].reward.click > 0 ? 1 : 0);
      }
      net.train_step(s, y);
    }
  }
  return net;
}

// ---------------------------------------------------------------------------
// Single-tower DQN on the combined click + watch reward, one head, hard
// target copy every `target_period` steps.

template <class T = float>
class DqnModel {
 public:
  using Mat = nn::Mat<T>;

  DqnModel() = default;

  DqnModel(const ModelConfig& cfg, const Vocab& vocab, std::uint64_t seed, std::int64_t target_period = 1000)
      : cfg_(cfg), target_period_(target_period) {
    cfg_.validate();
    if (target_period <= 0) throw ValidationError("DqnModel: target period must be positive");
    encoder_ = StateEncoder<T>(vocab, cfg_.embed_dim, derive_seed(seed, "dqn.encoder"));
    Rng rng(derive_seed(seed, "dqn.q"));
    q_ = nn::DenseNetwork<T>(encoder_.out_dim(), cfg_.hidden_dims, 1, rng);
    target_ = q_;
    adam_ = nn::AdamState<T>(params());
  }

  static double combined_reward(const RewardVector& r) { return r.click + r.watch; }

  std::vector<Mat*> params() {
    std::vector<Mat*> out;
    encoder_.append_params(out);
    q_.append_params(out);
    return out;
  }

  std::int64_t step() const { return step_; }

  std::vector<double> q_values(std::span<const UAState> states, bool use_target = false) const {
    std::vector<double> out(states.size());
    if (states.empty()) return out;
    const Mat q = (use_target ? target_ : q_).forward(encoder_.encode(states));
    for (std::size_t b = 0; b < states.size(); ++b) out[b] = static_cast<double>(q(0, static_cast<Eigen::Index>(b)));
    return out;
  }

  std::vector<double> targets(std::span<const TransitionSample> batch) const {
    std::vector<UAState> next;
    std::vector<std::size_t> begin(batch.size() + 1, 0);
    for (std::size_t b = 0; b < batch.size(); ++b) {
      begin[b] = next.size();
      if (batch[b].terminal) continue;
      if (batch[b].author_items.empty()) throw ValidationError("DqnModel: empty author_items on non-terminal sample");
      for (const auto& it : batch[b].author_items) {
        UAState n = batch[b].next_state;
        n.author.item_id = it.item_id;
        n.author.category_id = it.category_id;
        next.push_back(n);
      }
    }
    begin[batch.size()] = next.size();
    const auto q = q_values(next, /*use_target=*/true);
    std::vector<double> y(batch.size());
    for (std::size_t b = 0; b < batch.size(); ++b) {
      y[b] = combined_reward(batch[b].reward);
      if (batch[b].terminal) continue;
      double best = -std::numeric_limits<double>::infinity();
      for (std::size_t j = begin[b]; j < begin[b + 1]; ++j) best = std::max(best, q[j]);
      y[b] += cfg_.gamma * best;
    }
    return y;
  }

  /// Mean Huber loss against fixed targets `y`; accumulates into `grads` when given.
  double loss_and_grad(std::span<const TransitionSample> batch, std::span<const double> y, nn::GradBundle<T>* grads) const {
    if (batch.empty()) throw ValidationError("DqnModel: empty batch");
    if (y.size() != batch.size()) throw ContractError("DqnModel: target vector size mismatch");
    std::vector<UAState> states;
    for (const auto& s : batch) states.push_back(s.state);
    EncodeCache<T> ec;
    const Mat H = encoder_.encode(states, &ec);
    nn::DenseCache<T> qc;
    const Mat q = q_.forward(H, qc);
    const auto B = static_cast<Eigen::Index>(batch.size());
    Mat dq(1, B);
    double loss = 0;
    for (Eigen::Index b = 0; b < B; ++b) {
      const auto h = nn::huber(static_cast<double>(q(0, b)), y[static_cast<std::size_t>(b)], cfg_.huber_delta);
      loss += h.value;
      dq(0, b) = static_cast<T>(h.grad / static_cast<double>(B));
    }
    if (grads) {
      const Mat dH = q_.backward(dq, qc, grads->slice(encoder_.num_tensors(), q_.num_tensors()));
      encoder_.backward(dH, ec, grads->slice(0, encoder_.num_tensors()));
    }
    return loss / static_cast<double>(B);
  }

  double train_step(std::span<const TransitionSample> batch) {
    if (batch.empty()) throw ValidationError("DqnModel::train_step: empty batch");
    const auto y = targets(batch);
    auto p = params();
    nn::GradBundle<T> g(p);
    const double loss = loss_and_grad(batch, y, &g);
    if (!std::isfinite(loss) || !g.all_finite()) throw NumericError("DqnModel: non-finite loss at step " + std::to_string(step_));
    nn::clip_global_norm(g, static_cast<T>(cfg_.grad_clip_norm));
    nn::adam_step<T>(p, g, adam_, cfg_.lr_critic);
    ++step_;
    if (step_ % target_period_ == 0) target_ = q_;
    return loss;
  }

  void save(nn::Checkpoint& ck, const std::string& prefix = "dqn.") const
    requires std::is_same_v<T, float>
  {
    auto self = const_cast<DqnModel*>(this);
    auto p = self->params();
    for (std::size_t i = 0; i < p.size(); ++i) {
      ck.put_tensor(prefix + "p" + std::to_string(i), *p[i]);
      ck.put_tensor(prefix + "adam.m" + std::to_string(i), adam_.first[i]);
      ck.put_tensor(prefix + "adam.v" + std::to_string(i), adam_.second[i]);
    }
    auto t = self->target_.params();
    for (std::size_t i = 0; i < t.size(); ++i) ck.put_tensor(prefix + "target" + std::to_string(i), *t[i]);
    ck.put_bytes(prefix + "step", std::to_string(step_));
    ck.put_bytes(prefix + "adam.t", std::to_string(adam_.step));
  }

  void load(const nn::Checkpoint& ck, const std::string& prefix = "dqn.")
    requires std::is_same_v<T, float>
  {
    auto p = params();
    for (std::size_t i = 0; i < p.size(); ++i) {
      ck.get_tensor(prefix + "p" + std::to_string(i), *p[i]);
      ck.get_tensor(prefix + "adam.m" + std::to_string(i), adam_.first[i]);
      ck.get_tensor(prefix + "adam.v" + std::to_string(i), adam_.second[i]);
    }
    auto t = target_.params();
    for (std::size_t i = 0; i < t.size(); ++i) ck.get_tensor(prefix + "target" + std::to_string(i), *t[i]);
    step_ = std::stoll(ck.get_bytes(prefix + "step"));
    adam_.step = std::stoll(ck.get_bytes(prefix + "adam.t"));
  }

 private:
  ModelConfig cfg_;
  std::int64_t target_period_ = 1000;
  std::int64_t step_ = 0;
  StateEncoder<T> encoder_;
  nn::DenseNetwork<T> q_;
  nn::DenseNetwork<T> target_;
  nn::AdamState<T> adam_;
};

// ---------------------------------------------------------------------------

enum class PolicyKind { random, ranking_model, dqn, rliv_ua };

inline std::string_view policy_kind_name(PolicyKind k) {
  switch (k) {
    case PolicyKind::random: return "random";
    case PolicyKind::ranking_model: return "ranking_model";
    case PolicyKind::dqn: return "dqn";
    case PolicyKind::rliv_ua: return "rliv_ua";
  }
  return "?";
}

inline PolicyKind policy_kind_from_name(std::string_view s) {
  for (auto k : {PolicyKind::random, PolicyKind::ranking_model, PolicyKind::dqn, PolicyKind::rliv_ua})
    if (policy_kind_name(k) == s) return k;
  throw ValidationError("unknown policy kind '" + std::string(s) + "'");
}

/// A ranking policy over an immutable model snapshot.
struct RankingPolicy {
  PolicyKind kind = PolicyKind::random;
  std::array<double, kNumTowers> weights = {0.0, 1.0, 0.0, 0.0};
  /// Weight of the click model's probability added to the LIV score; needs
  /// `ranking` to be set. 0 disables the hook.
  double ranking_mix = 0.0;
  std::shared_ptr<const LivModel<float>> liv;
  std::shared_ptr<const RankingModelNet<float>> ranking;
  std::shared_ptr<const DqnModel<float>> dqn;

  void validate() const {
    if (kind == PolicyKind::rliv_ua) {
      bool positive = false;
      for (double w : weights) {
        if (w < 0) throw ValidationError("RankingPolicy: tower weights must be non-negative");
        positive = positive || w > 0;
      }
      if (!positive) throw ValidationError("RankingPolicy: at least one tower weight must be positive");
      if (!liv) throw ContractError("RankingPolicy: rliv_ua policy without a model snapshot");
      if (ranking_mix < 0) throw ValidationError("RankingPolicy: ranking_mix must be non-negative");
      if (ranking_mix > 0 && !ranking) throw ContractError("RankingPolicy: ranking_mix set without a click model");
    }
    if (kind == PolicyKind::ranking_model && !ranking) throw ContractError("RankingPolicy: missing click model");
    if (kind == PolicyKind::dqn && !dqn) throw ContractError("RankingPolicy: missing DQN snapshot");
  }
};

/// Scores candidate states. Pure in (snapshot, inputs); `rng` is read only by
/// the random policy.
inline std::vector<double> score_candidates(const RankingPolicy& policy, std::span<const UAState> candidates, Rng& rng) {
  if (candidates.empty()) throw ValidationError("score_candidates: empty candidate list");
  if (candidates.size() > kMaxCandidates) throw ValidationError("score_candidates: more than 300 candidates");
  policy.validate();
  std::vector<double> out(candidates.size(), 0.0);
  switch (policy.kind) {
    case PolicyKind::random:
      for (auto& s : out) s = rng.uniform();
      break;
    case PolicyKind::ranking_model: out = policy.ranking->predict(candidates); break;
    case PolicyKind::dqn: out = policy.dqn->q_values(candidates); break;
    case PolicyKind::rliv_ua: {
      const auto scores = policy.liv->score(candidates);
      for (std::size_t i = 0; i < out.size(); ++i)
        for (Tower t : kAllTowers) out[i] += policy.weights[static_cast<std::size_t>(t)] * scores[i][t];
      if (policy.ranking_mix > 0) {
        const auto p = policy.ranking->predict(candidates);
        for (std::size_t i = 0; i < out.size(); ++i) out[i] += policy.ranking_mix * p[i];
      }
      break;
    }
  }
  return out;
}

}  // namespace rliv
