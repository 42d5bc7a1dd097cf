#pragma once

// Multi-task lifelong-interaction-value critic.
//
// One tower per feedback label. Each tower owns a supervised reward head
// r_hat(H), two online critic heads V_k(H) and their target copies. The
// composed value of head k is Q_k = r_hat + gamma * V_k; the tower output is
// min(Q_1, Q_2). With the supervised head disabled the critic heads output Q_k
// directly. All towers read the same state embedding H.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "rliv/domain.hpp"
#include "rliv/encoder.hpp"
#include "rliv/error.hpp"
#include "rliv/nn/adam.hpp"
#include "rliv/nn/checkpoint.hpp"
#include "rliv/nn/dense.hpp"
#include "rliv/nn/loss.hpp"
#include "rliv/nn/target.hpp"
#include "rliv/nn/tensor.hpp"

namespace rliv {

struct ModelConfig {
  double gamma = 0.9;
  double tau = 0.005;
  double lr_critic = 1e-3;
  double lr_embedding = 1e-3;
  int batch_size = 1024;
  std::vector<int> hidden_dims = {64, 64};
  int embed_dim = 32;
  double huber_delta = 1.0;
  double grad_clip_norm = 10.0;
  bool multi_task = true;   // false: only `primary_tower` is built
  bool supervised = true;   // reward-head decomposition
  bool assistance = true;   // gift classifier on static embeddings
  Tower primary_tower = Tower::watch;

  void validate() const {
    if (!(gamma >= 0.0 && gamma <= 1.0)) throw ValidationError("ModelConfig.gamma must be in [0, 1]");
    if (!(tau >= 0.0 && tau <= 1.0)) throw ValidationError("ModelConfig.tau must be in [0, 1]");
    if (!(lr_critic > 0.0) || !(lr_embedding > 0.0)) throw ValidationError("ModelConfig: learning rates must be positive");
    if (batch_size <= 0) throw ValidationError("ModelConfig.batch_size must be positive");
    if (embed_dim <= 0) throw ValidationError("ModelConfig.embed_dim must be positive");
    for (int h : hidden_dims)
      if (h <= 0) throw ValidationError("ModelConfig.hidden_dims entries must be positive");
    if (!(huber_delta > 0.0)) throw ValidationError("ModelConfig.huber_delta must be positive");
    if (!(grad_clip_norm > 0.0)) throw ValidationError("ModelConfig.grad_clip_norm must be positive");
  }

  bool tower_active(Tower t) const { return multi_task || t == primary_tower; }
  bool assistance_active() const { return assistance && tower_active(Tower::gift); }
};

struct TowerLoss {
  double reward_loss = 0.0;  // mean huber(r_hat, r)
  double critic_loss = 0.0;  // mean sum_k huber(Q_k, y)
  double reward_mae = 0.0;
  double target_q_mean = 0.0;
  double total() const { return reward_loss + critic_loss; }
};

struct LossBreakdown {
  std::array<TowerLoss, kNumTowers> towers{};
  std::array<bool, kNumTowers> active{};
  double assist_loss = 0.0;
  bool assist_active = false;
  double total = 0.0;
};

struct StepMetrics {
  std::int64_t step = 0;
  LossBreakdown loss;
  double grad_norm = 0.0;
};

struct QDecomposition {
  double r_hat = 0.0;
  double v_hat_1 = 0.0;
  double v_hat_2 = 0.0;
};

/// Per-tower Bellman targets for a batch; inactive towers are empty.
using TargetSet = std::array<std::vector<double>, kNumTowers>;

template <class T = float>
class LivModel {
 public:
  using Mat = nn::Mat<T>;

  LivModel() = default;

  LivModel(const ModelConfig& cfg, const Vocab& vocab, std::uint64_t seed) : cfg_(cfg), vocab_(vocab), seed_(seed) {
    cfg_.validate();
    encoder_ = StateEncoder<T>(vocab, cfg_.embed_dim, derive_seed(seed, "liv.encoder"));
    const Eigen::Index h_dim = encoder_.out_dim();
    for (Tower t : kAllTowers) {
      if (!cfg_.tower_active(t)) continue;
      auto& tn = towers_[index(t)];
      const auto ti = static_cast<std::uint64_t>(t);
      if (cfg_.supervised) {
        Rng rng(derive_seed(seed, "liv.reward_head", ti));
        tn.reward = nn::DenseNetwork<T>(h_dim, cfg_.hidden_dims, 1, rng);
      }
      for (std::size_t k = 0; k < 2; ++k) {
        Rng rng(derive_seed(seed, "liv.critic_head", ti, k));
        tn.critic[k] = nn::DenseNetwork<T>(h_dim, cfg_.hidden_dims, 1, rng);
        tn.target[k] = tn.critic[k];
      }
    }
    if (cfg_.assistance_active()) {
      Rng rng(derive_seed(seed, "liv.assistance"));
      const int hidden = cfg_.hidden_dims.empty() ? 64 : cfg_.hidden_dims.front();
      assist_ = nn::DenseNetwork<T>(2 * cfg_.embed_dim, {hidden}, 1, rng);
    }
    auto emb = embedding_params();
    auto crit = critic_params();
    emb_adam_ = nn::AdamState<T>(emb);
    critic_adam_ = nn::AdamState<T>(crit);
  }

  const ModelConfig& config() const { return cfg_; }
  const Vocab& vocab() const { return vocab_; }
  std::uint64_t seed() const { return seed_; }
  std::int64_t step() const { return step_; }
  bool tower_active(Tower t) const { return cfg_.tower_active(t); }
  const StateEncoder<T>& encoder() const { return encoder_; }

  std::vector<Tower> active_towers() const {
    std::vector<Tower> out;
    for (Tower t : kAllTowers)
      if (tower_active(t)) out.push_back(t);
    return out;
  }

  // ---- parameter views -------------------------------------------------

  std::vector<Mat*> embedding_params() {
    std::vector<Mat*> out;
    encoder_.append_params(out);
    return out;
  }

  /// Reward heads, critic heads and the assistance net, in a fixed order.
  std::vector<Mat*> critic_params() {
    std::vector<Mat*> out;
    for (Tower t : active_towers()) {
      auto& tn = towers_[index(t)];
      if (cfg_.supervised) tn.reward.append_params(out);
      for (auto& c : tn.critic) c.append_params(out);
    }
    if (cfg_.assistance_active()) assist_.append_params(out);
    return out;
  }

  /// Every trained tensor: embedding params followed by critic params.
  std::vector<Mat*> online_params() {
    auto out = embedding_params();
    auto c = critic_params();
    out.insert(out.end(), c.begin(), c.end());
    return out;
  }

  std::vector<Mat*> target_params() {
    std::vector<Mat*> out;
    for (Tower t : active_towers())
      for (auto& c : towers_[index(t)].target) c.append_params(out);
    return out;
  }

  std::vector<Mat*> target_source_params() {
    std::vector<Mat*> out;
    for (Tower t : active_towers())
      for (auto& c : towers_[index(t)].critic) c.append_params(out);
    return out;
  }

  // ---- inference -------------------------------------------------------

  Mat encode(std::span<const UAState> states) const { return encoder_.encode(states); }

  struct Heads {
    Mat r_hat;  // 1 x B (zero without the supervised head)
    std::array<Mat, 2> v;
  };

  Heads heads(const Mat& H, Tower t, bool use_target = false) const {
    require_active(t);
    const auto& tn = towers_[index(t)];
    Heads out;
    out.r_hat = cfg_.supervised ? tn.reward.forward(H) : Mat::Zero(1, H.cols());
    for (std::size_t k = 0; k < 2; ++k) out.v[k] = (use_target ? tn.target[k] : tn.critic[k]).forward(H);
    return out;
  }

  /// Composed value of each head: r_hat + gamma * V_k, or V_k without the supervised head.
  std::array<Mat, 2> composed(const Heads& h) const {
    std::array<Mat, 2> q;
    for (std::size_t k = 0; k < 2; ++k)
      q[k] = cfg_.supervised ? Mat(h.r_hat + static_cast<T>(cfg_.gamma) * h.v[k]) : h.v[k];
    return q;
  }

  /// Clipped double-Q tower output, 1 x B.
  Mat tower_q(const Mat& H, Tower t, bool use_target = false) const {
    const auto q = composed(heads(H, t, use_target));
    return q[0].cwiseMin(q[1]);
  }

  double tower_q(const UAState& s, Tower t) const { return static_cast<double>(tower_q(encode(std::span(&s, 1)), t)(0, 0)); }

  QDecomposition decompose_q(const UAState& s, Tower t) const {
    const auto h = heads(encode(std::span(&s, 1)), t);
    return {static_cast<double>(h.r_hat(0, 0)), static_cast<double>(h.v[0](0, 0)), static_cast<double>(h.v[1](0, 0))};
  }

  std::vector<LIVScores> score(std::span<const UAState> states) const {
    std::vector<LIVScores> out(states.size());
    if (states.empty()) return out;
    const Mat H = encode(states);
    for (Tower t : active_towers()) {
      const Mat q = tower_q(H, t);
      for (std::size_t b = 0; b < states.size(); ++b) out[b][t] = static_cast<double>(q(0, static_cast<Eigen::Index>(b)));
    }
    return out;
  }

  /// Logit of the assistance gift classifier.
  double assistance_logit(const UAState& s) const {
    if (!cfg_.assistance_active()) throw ContractError("assistance network disabled");
    const Mat H = encode(std::span(&s, 1));
    return static_cast<double>(assist_.forward(H.topRows(2 * cfg_.embed_dim))(0, 0));
  }

  // ---- targets ---------------------------------------------------------

  /// y = r + gamma * max_j min_k Q'_k(next state with item j); y = r when
  /// terminal. Uses target heads; nothing here feeds a gradient.
  TargetSet bellman_targets(std::span<const TransitionSample> batch) const {
    std::vector<UAState> next;
    std::vector<std::size_t> begin(batch.size() + 1, 0);
    for (std::size_t b = 0; b < batch.size(); ++b) {
      const auto& s = batch[b];
      begin[b] = next.size();
      if (s.terminal) continue;
      if (s.author_items.empty()) throw ValidationError("bellman_target: empty author_items on non-terminal sample");
      for (const auto& item : s.author_items) {
        UAState n = s.next_state;
        n.author.item_id = item.item_id;
        n.author.category_id = item.category_id;
        next.push_back(n);
      }
    }
    begin[batch.size()] = next.size();
    const Mat H = next.empty() ? Mat(encoder_.out_dim(), 0) : encode(next);
    TargetSet y;
    for (Tower t : active_towers()) {
      Mat q;
      if (!next.empty()) q = tower_q(H, t, /*use_target=*/true);
      auto& yt = y[index(t)];
      yt.resize(batch.size());
      for (std::size_t b = 0; b < batch.size(); ++b) {
        const double r = batch[b].reward[t];
        if (batch[b].terminal) {
          yt[b] = r;
          continue;
        }
        double best = -std::numeric_limits<double>::infinity();
        for (std::size_t j = begin[b]; j < begin[b + 1]; ++j)
          best = std::max(best, static_cast<double>(q(0, static_cast<Eigen::Index>(j))));
        yt[b] = r + cfg_.gamma * best;
      }
    }
    return y;
  }

  double bellman_target(const TransitionSample& s, Tower t) const {
    require_active(t);
    return bellman_targets(std::span(&s, 1))[index(t)][0];
  }

  // ---- losses ----------------------------------------------------------

  /// Total loss for fixed targets. When `grads` is non-null it receives the
  /// exact gradient with respect to online_params() (accumulated).
  LossBreakdown loss_and_grad(std::span<const TransitionSample> batch, const TargetSet& y,
                              nn::GradBundle<T>* grads) const {
    if (batch.empty()) throw ValidationError("loss: empty batch");
    const auto B = static_cast<Eigen::Index>(batch.size());
    const double inv_b = 1.0 / static_cast<double>(B);
    std::vector<UAState> states;
    states.reserve(batch.size());
    for (const auto& s : batch) states.push_back(s.state);
    EncodeCache<T> ec;
    const Mat H = encoder_.encode(states, &ec);
    Mat dH = Mat::Zero(H.rows(), B);
    const T gamma = static_cast<T>(cfg_.gamma);

    LossBreakdown out;
    std::size_t offset = encoder_.num_tensors();
    for (Tower t : active_towers()) {
      const auto& tn = towers_[index(t)];
      const auto& yt = y[index(t)];
      if (yt.size() != batch.size()) throw ContractError("loss: target vector size mismatch");
      nn::DenseCache<T> rc;
      std::array<nn::DenseCache<T>, 2> cc;
      Mat r_hat = cfg_.supervised ? tn.reward.forward(H, rc) : Mat::Zero(1, B);
      std::array<Mat, 2> v = {tn.critic[0].forward(H, cc[0]), tn.critic[1].forward(H, cc[1])};
      Mat dr = Mat::Zero(1, B);
      std::array<Mat, 2> dv = {Mat::Zero(1, B), Mat::Zero(1, B)};
      TowerLoss& tl = out.towers[index(t)];
      out.active[index(t)] = true;
      for (Eigen::Index b = 0; b < B; ++b) {
        const double r = batch[static_cast<std::size_t>(b)].reward[t];
        if (cfg_.supervised) {
          const auto h = nn::huber(static_cast<double>(r_hat(0, b)), r, cfg_.huber_delta);
          tl.reward_loss += h.value;
          tl.reward_mae += std::abs(static_cast<double>(r_hat(0, b)) - r);
          dr(0, b) += static_cast<T>(h.grad * inv_b);
        }
        for (std::size_t k = 0; k < 2; ++k) {
          const double q = cfg_.supervised ? static_cast<double>(r_hat(0, b)) + cfg_.gamma * static_cast<double>(v[k](0, b))
                                           : static_cast<double>(v[k](0, b));
          const auto h = nn::huber(q, yt[static_cast<std::size_t>(b)], cfg_.huber_delta);
          tl.critic_loss += h.value;
          const T dq = static_cast<T>(h.grad * inv_b);
          if (cfg_.supervised) {
            dr(0, b) += dq;
            dv[k](0, b) = gamma * dq;
          } else {
            dv[k](0, b) = dq;
          }
        }
        tl.target_q_mean += yt[static_cast<std::size_t>(b)];
      }
      tl.reward_loss *= inv_b;
      tl.reward_mae *= inv_b;
      tl.critic_loss *= inv_b;
      tl.target_q_mean *= inv_b;
      out.total += tl.total();
      if (grads) {
        if (cfg_.supervised) {
          dH += tn.reward.backward(dr, rc, grads->slice(offset, tn.reward.num_tensors()));
          offset += tn.reward.num_tensors();
        }
        for (std::size_t k = 0; k < 2; ++k) {
          dH += tn.critic[k].backward(dv[k], cc[k], grads->slice(offset, tn.critic[k].num_tensors()));
          offset += tn.critic[k].num_tensors();
        }
      }
    }
    if (cfg_.assistance_active()) {
      const int e2 = 2 * cfg_.embed_dim;
      nn::DenseCache<T> ac;
      const Mat logits = assist_.forward(H.topRows(e2), ac);
      Mat dl(1, B);
      for (Eigen::Index b = 0; b < B; ++b) {
        const int label = batch[static_cast<std::size_t>(b)].reward.gift > 0 ? 1 : 0;
        const auto l = nn::bce(static_cast<double>(logits(0, b)), label);
        out.assist_loss += l.value;
        dl(0, b) = static_cast<T>(l.grad * inv_b);
      }
      out.assist_loss *= inv_b;
      out.assist_active = true;
      out.total += out.assist_loss;
      if (grads) dH.topRows(e2) += assist_.backward(dl, ac, grads->slice(offset, assist_.num_tensors()));
    }
    if (grads) encoder_.backward(dH, ec, grads->slice(0, encoder_.num_tensors()));
    return out;
  }

  double tower_loss(std::span<const TransitionSample> batch, Tower t) const {
    require_active(t);
    return loss_and_grad(batch, bellman_targets(batch), nullptr).towers[index(t)].total();
  }

  double assistance_gift_loss(std::span<const TransitionSample> batch) const {
    if (!cfg_.assistance_active()) return 0.0;
    return loss_and_grad(batch, bellman_targets(batch), nullptr).assist_loss;
  }

  double total_loss(std::span<const TransitionSample> batch) const {
    return loss_and_grad(batch, bellman_targets(batch), nullptr).total;
  }

  // ---- training --------------------------------------------------------

  /// One Adam step on the total loss, then a soft update of every target head.
  StepMetrics train_step(std::span<const TransitionSample> batch) {
    if (batch.empty()) throw ValidationError("train_step: empty batch");
    const TargetSet y = bellman_targets(batch);
    auto emb = embedding_params();
    auto crit = critic_params();
    auto all = online_params();
    nn::GradBundle<T> grads(all);
    StepMetrics m;
    m.loss = loss_and_grad(batch, y, &grads);
    if (!std::isfinite(m.loss.total) || !grads.all_finite()) throw NumericError(diagnose(batch, y));
    m.grad_norm = static_cast<double>(nn::clip_global_norm(grads, static_cast<T>(cfg_.grad_clip_norm)));

    nn::GradBundle<T> g_emb, g_crit;
    g_emb.tensors.assign(std::make_move_iterator(grads.tensors.begin()),
                         std::make_move_iterator(grads.tensors.begin() + static_cast<std::ptrdiff_t>(emb.size())));
    g_crit.tensors.assign(std::make_move_iterator(grads.tensors.begin() + static_cast<std::ptrdiff_t>(emb.size())),
                          std::make_move_iterator(grads.tensors.end()));
    nn::adam_step<T>(emb, g_emb, emb_adam_, cfg_.lr_embedding);
    nn::adam_step<T>(crit, g_crit, critic_adam_, cfg_.lr_critic);
    auto tgt = target_params();
    auto src = target_source_params();
    nn::soft_update<T>(tgt, src, cfg_.tau);
    m.step = ++step_;
    return m;
  }

  bool all_finite() {
    for (auto* p : online_params())
      if (!p->allFinite()) return false;
    for (auto* p : target_params())
      if (!p->allFinite()) return false;
    return true;
  }

  // ---- persistence -----------------------------------------------------

  std::vector<std::string> online_param_names() const {
    std::vector<std::string> names;
    for (std::size_t k = 0; k < StateEncoder<T>::kTables; ++k) names.push_back(std::string("embedding.") + StateEncoder<T>::table_name(k));
    append_dense_names(names, "embedding.dynamic", encoder_.dynamic_projection());
    for (Tower t : active_towers()) {
      const auto& tn = towers_[index(t)];
      const std::string p = "tower." + std::string(tower_name(t));
      if (cfg_.supervised) append_dense_names(names, p + ".reward", tn.reward);
      for (std::size_t k = 0; k < 2; ++k) append_dense_names(names, p + ".critic" + std::to_string(k + 1), tn.critic[k]);
    }
    if (cfg_.assistance_active()) append_dense_names(names, "assistance", assist_);
    return names;
  }

  std::vector<std::string> target_param_names() const {
    std::vector<std::string> names;
    for (Tower t : active_towers())
      for (std::size_t k = 0; k < 2; ++k)
        append_dense_names(names, "tower." + std::string(tower_name(t)) + ".target" + std::to_string(k + 1),
                           towers_[index(t)].target[k]);
    return names;
  }

  void save(nn::Checkpoint& ck, const std::string& prefix = "liv.") const
    requires std::is_same_v<T, float>
  {
    auto self = const_cast<LivModel*>(this);
    const auto on = self->online_params();
    const auto on_names = online_param_names();
    for (std::size_t i = 0; i < on.size(); ++i) ck.put_tensor(prefix + on_names[i], *on[i]);
    const auto tg = self->target_params();
    const auto tg_names = target_param_names();
    for (std::size_t i = 0; i < tg.size(); ++i) ck.put_tensor(prefix + tg_names[i], *tg[i]);
    save_adam(ck, prefix + "adam.embedding.", emb_adam_);
    save_adam(ck, prefix + "adam.critic.", critic_adam_);
    ck.put_bytes(prefix + "step", std::to_string(step_));
  }

  void load(const nn::Checkpoint& ck, const std::string& prefix = "liv.")
    requires std::is_same_v<T, float>
  {
    const auto on = online_params();
    const auto on_names = online_param_names();
    for (std::size_t i = 0; i < on.size(); ++i) ck.get_tensor(prefix + on_names[i], *on[i]);
    const auto tg = target_params();
    const auto tg_names = target_param_names();
    for (std::size_t i = 0; i < tg.size(); ++i) ck.get_tensor(prefix + tg_names[i], *tg[i]);
    load_adam(ck, prefix + "adam.embedding.", emb_adam_);
    load_adam(ck, prefix + "adam.critic.", critic_adam_);
    step_ = std::stoll(ck.get_bytes(prefix + "step"));
  }

  /// Same architecture with every parameter converted to scalar type U.
  template <class U>
  LivModel<U> cast() const {
    LivModel<U> out(cfg_, vocab_, seed_);
    auto self = const_cast<LivModel*>(this);
    auto src = self->online_params();
    auto dst = out.online_params();
    for (std::size_t i = 0; i < src.size(); ++i) *dst[i] = src[i]->template cast<U>();
    auto st = self->target_params();
    auto dt = out.target_params();
    for (std::size_t i = 0; i < st.size(); ++i) *dt[i] = st[i]->template cast<U>();
    return out;
  }

 private:
  struct TowerNets {
    nn::DenseNetwork<T> reward;
    std::array<nn::DenseNetwork<T>, 2> critic;
    std::array<nn::DenseNetwork<T>, 2> target;
  };

  static std::size_t index(Tower t) { return static_cast<std::size_t>(t); }

  void require_active(Tower t) const {
    if (!tower_active(t)) throw ContractError("tower '" + std::string(tower_name(t)) + "' is not built in this model");
  }

  static void append_dense_names(std::vector<std::string>& names, const std::string& p, const nn::DenseNetwork<T>& net) {
    for (std::size_t l = 0; l < net.num_layers(); ++l) {
      names.push_back(p + ".W" + std::to_string(l));
      names.push_back(p + ".b" + std::to_string(l));
    }
  }

  static void save_adam(nn::Checkpoint& ck, const std::string& p, const nn::AdamState<T>& a)
    requires std::is_same_v<T, float>
  {
    for (std::size_t i = 0; i < a.first.size(); ++i) {
      ck.put_tensor(p + "m" + std::to_string(i), a.first[i]);
      ck.put_tensor(p + "v" + std::to_string(i), a.second[i]);
    }
    ck.put_bytes(p + "t", std::to_string(a.step));
  }

  static void load_adam(const nn::Checkpoint& ck, const std::string& p, nn::AdamState<T>& a)
    requires std::is_same_v<T, float>
  {
    for (std::size_t i = 0; i < a.first.size(); ++i) {
      ck.get_tensor(p + "m" + std::to_string(i), a.first[i]);
      ck.get_tensor(p + "v" + std::to_string(i), a.second[i]);
    }
    a.step = std::stoll(ck.get_bytes(p + "t"));
  }

  std::string diagnose(std::span<const TransitionSample> batch, const TargetSet& y) const {
    std::ostringstream os;
    os << "train_step: non-finite loss at step " << step_ << "; suspicious batch indices:";
    int shown = 0;
    for (std::size_t b = 0; b < batch.size() && shown < 32; ++b) {
      bool bad = false;
      for (Tower t : active_towers())
        if (!std::isfinite(y[index(t)][b]) || !std::isfinite(batch[b].reward[t])) bad = true;
      if (bad) {
        os << ' ' << b << "(user " << batch[b].key.user_id << ", author " << batch[b].key.author_id << ")";
        ++shown;
      }
    }
    if (shown == 0) os << " none (parameters diverged; all " << batch.size() << " samples finite)";
    return os.str();
  }

  ModelConfig cfg_;
  Vocab vocab_;
  std::uint64_t seed_ = 0;
  std::int64_t step_ = 0;
  StateEncoder<T> encoder_;
  std::array<TowerNets, kNumTowers> towers_;
  nn::DenseNetwork<T> assist_;
  nn::AdamState<T> emb_adam_;
  nn::AdamState<T> critic_adam_;
};

}  // namespace rliv
