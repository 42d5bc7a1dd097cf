#pragma once

// Experiment orchestration: per (policy, seed) training runs with
// interleaved evaluation epochs, run-state checkpoints, and the aggregated
// report and data files.

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <memory>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "rliv/asa.hpp"
#include "rliv/config.hpp"
#include "rliv/domain_json.hpp"
#include "rliv/eval.hpp"
#include "rliv/liv_model.hpp"
#include "rliv/nn/checkpoint.hpp"
#include "rliv/ranker.hpp"
#include "rliv/sim.hpp"
#include "rliv/stats.hpp"

#ifndef RLIV_VERSION
#define RLIV_VERSION "0.0.0-dev"
#endif

namespace rliv {

inline std::string version_string() { return "rliv_ua " RLIV_VERSION; }

inline Vocab vocab_for(const SimConfig& s) {
  return Vocab{s.n_users, s.n_cohorts, s.n_activity_tiers, s.n_authors, s.n_authors * s.items_per_author, s.n_categories};
}

struct EpochRecord {
  int epoch = 0;
  double epsilon = 0.0;
  std::int64_t train_steps = 0;
  std::int64_t buffer_size = 0;
  EpochMetrics metrics;
};

struct StepRecord {
  std::int64_t step = 0;
  std::string tower;
  double critic_loss = 0.0;
  double reward_mae = 0.0;
  double target_q_mean = 0.0;
  double assist_loss = 0.0;
};

struct RunResult {
  std::string policy;
  std::uint64_t seed = 0;
  std::vector<EpochRecord> epochs;
  EpochMetrics final_metrics;  // mean over the last `final_epochs` epochs
  std::optional<double> gift_correlation;
  std::int64_t gift_pairs = 0;
  std::vector<StepRecord> steps;
};

inline nlohmann::json to_json(const EpochMetrics& m) {
  nlohmann::json j;
  for (std::size_t i = 0; i < EpochMetrics::kNames.size(); ++i) j[EpochMetrics::kNames[i]] = m.get(i);
  return j;
}

inline EpochMetrics epoch_metrics_from_json(const nlohmann::json& j) {
  EpochMetrics m;
  for (std::size_t i = 0; i < EpochMetrics::kNames.size(); ++i) m.set(i, j.at(EpochMetrics::kNames[i]).get<double>());
  return m;
}

inline nlohmann::json to_json(const RunResult& r) {
  nlohmann::json epochs = nlohmann::json::array();
  for (const auto& e : r.epochs)
    epochs.push_back({{"epoch", e.epoch},
                      {"epsilon", e.epsilon},
                      {"train_steps", e.train_steps},
                      {"buffer_size", e.buffer_size},
                      {"metrics", to_json(e.metrics)}});
  nlohmann::json steps = nlohmann::json::array();
  for (const auto& s : r.steps)
    steps.push_back({s.step, s.tower, s.critic_loss, s.reward_mae, s.target_q_mean, s.assist_loss});
  return {{"policy", r.policy},
          {"seed", r.seed},
          {"epochs", epochs},
          {"final", to_json(r.final_metrics)},
          {"gift_correlation", r.gift_correlation ? nlohmann::json(*r.gift_correlation) : nlohmann::json()},
          {"gift_pairs", r.gift_pairs},
          {"steps", steps}};
}

inline RunResult run_result_from_json(const nlohmann::json& j) {
  RunResult r;
  r.policy = j.at("policy").get<std::string>();
  r.seed = j.at("seed").get<std::uint64_t>();
  for (const auto& e : j.at("epochs"))
    r.epochs.push_back(EpochRecord{e.at("epoch").get<int>(), e.at("epsilon").get<double>(),
                                   e.at("train_steps").get<std::int64_t>(), e.at("buffer_size").get<std::int64_t>(),
                                   epoch_metrics_from_json(e.at("metrics"))});
  r.final_metrics = epoch_metrics_from_json(j.at("final"));
  if (!j.at("gift_correlation").is_null()) r.gift_correlation = j.at("gift_correlation").get<double>();
  r.gift_pairs = j.at("gift_pairs").get<std::int64_t>();
  for (const auto& s : j.at("steps"))
    r.steps.push_back(StepRecord{s[0].get<std::int64_t>(), s[1].get<std::string>(), s[2].get<double>(), s[3].get<double>(),
                                 s[4].get<double>(), s[5].get<double>()});
  return r;
}

namespace detail {

// Fixed-width little-endian packing of replay samples; JSON would be an
// order of magnitude larger for a full buffer.
class Packer {
 public:
  void i64(std::int64_t v) { raw(&v, 8); }
  void f64(double v) { raw(&v, 8); }
  void state(const UAState& s) {
    i64(s.user.user_id), i64(s.user.cohort_id), i64(s.user.activity_tier);
    i64(s.author.author_id), i64(s.author.item_id), i64(s.author.category_id);
    i64(s.dynamic.click_count), i64(s.dynamic.watch_count), i64(s.dynamic.follow_flag), i64(s.dynamic.gift_count);
    f64(s.dynamic.cumulative_watch_seconds), f64(s.dynamic.cumulative_gift_amount);
  }
  void sample(const TransitionSample& t) {
    i64(t.key.user_id), i64(t.key.author_id);
    state(t.state);
    i64(t.action_item);
    f64(t.reward.click), f64(t.reward.watch), f64(t.reward.follow), f64(t.reward.gift);
    f64(t.reward.watch_seconds), f64(t.reward.gift_amount);
    state(t.next_state);
    i64(static_cast<std::int64_t>(t.author_items.size()));
    for (const auto& it : t.author_items) i64(it.item_id), i64(it.category_id);
    i64(t.terminal ? 1 : 0);
  }
  std::string take() { return std::move(out_); }

 private:
  void raw(const void* p, std::size_t n) {
    // Host order; little-endian targets only, checked at compile time.
    static_assert(std::endian::native == std::endian::little);
    out_.append(static_cast<const char*>(p), n);
  }
  std::string out_;
};

class Unpacker {
 public:
  explicit Unpacker(std::string_view in) : in_(in) {}
  std::int64_t i64() {
    std::int64_t v;
    raw(&v);
    return v;
  }
  double f64() {
    double v;
    raw(&v);
    return v;
  }
  UAState state() {
    UAState s;
    s.user.user_id = i64(), s.user.cohort_id = i64(), s.user.activity_tier = i64();
    s.author.author_id = i64(), s.author.item_id = i64(), s.author.category_id = i64();
    s.dynamic.click_count = i64(), s.dynamic.watch_count = i64(), s.dynamic.follow_flag = i64(), s.dynamic.gift_count = i64();
    s.dynamic.cumulative_watch_seconds = f64(), s.dynamic.cumulative_gift_amount = f64();
    return s;
  }
  TransitionSample sample() {
    TransitionSample t;
    t.key.user_id = i64(), t.key.author_id = i64();
    t.state = state();
    t.action_item = i64();
    t.reward.click = f64(), t.reward.watch = f64(), t.reward.follow = f64(), t.reward.gift = f64();
    t.reward.watch_seconds = f64(), t.reward.gift_amount = f64();
    t.next_state = state();
    const std::int64_t n = i64();
    if (n < 0 || n > static_cast<std::int64_t>(in_.size())) throw IntegrityError("replay buffer block: bad item count");
    for (std::int64_t k = 0; k < n; ++k) {
      ItemRef it;
      it.item_id = i64(), it.category_id = i64();
      t.author_items.push_back(it);
    }
    t.terminal = i64() != 0;
    return t;
  }
  std::string_view rest() {
    auto r = in_.substr(pos_);
    pos_ = in_.size();
    return r;
  }

 private:
  template <class T>
  void raw(T* v) {
    if (pos_ + sizeof(T) > in_.size()) throw IntegrityError("replay buffer block truncated");
    std::memcpy(v, in_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
  }
  std::string_view in_;
  std::size_t pos_ = 0;
};

inline std::string pack_buffer(const ReplayBuffer& b) {
  const auto snap = b.snapshot();
  Packer p;
  p.i64(static_cast<std::int64_t>(snap.capacity));
  p.i64(static_cast<std::int64_t>(snap.head));
  p.i64(static_cast<std::int64_t>(snap.storage.size()));
  for (const auto& s : snap.storage) p.sample(s);
  return p.take() + snap.rng;
}

inline ReplayBuffer unpack_buffer(std::string_view bytes) {
  Unpacker u(bytes);
  ReplayBuffer::Snapshot snap;
  snap.capacity = static_cast<std::size_t>(u.i64());
  snap.head = static_cast<std::size_t>(u.i64());
  const std::int64_t n = u.i64();
  if (n < 0 || static_cast<std::size_t>(n) > snap.capacity) throw IntegrityError("replay buffer block: bad size");
  for (std::int64_t i = 0; i < n; ++i) snap.storage.push_back(u.sample());
  snap.rng = std::string(u.rest());
  return ReplayBuffer::from_snapshot(std::move(snap));
}

inline std::string fnv_hex(const std::string& s) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << fnv1a(s);
  return os.str();
}

}  // namespace detail

/// One (policy, seed) training run. Not thread-safe; evaluation inside an
/// epoch fans out over users on immutable snapshots.
class PolicyRun {
 public:
  PolicyRun(const ExperimentConfig& cfg, const PolicySpec& spec, std::uint64_t seed)
      : cfg_(cfg),
        spec_(spec),
        seed_(seed),
        sim_cfg_(with_seed(cfg.sim, derive_seed(seed, "world"))),
        train_sim_(sim_cfg_, 1),
        eval_sim_(sim_cfg_, 2),
        buffer_(static_cast<std::size_t>(cfg.replay_capacity), derive_seed(seed, "replay")),
        explore_rng_(derive_seed(seed, "explore")),
        user_rng_(derive_seed(seed, "train.users")),
        cap_rng_(derive_seed(seed, "item_cap")) {
    const Vocab vocab = vocab_for(sim_cfg_);
    const ModelConfig mc = cfg.model_for(spec);
    const std::uint64_t model_seed = derive_seed(seed, "model");
    policy_.kind = spec.kind;
    policy_.weights = spec.weights;
    policy_.ranking_mix = spec.ranking_mix;
    switch (spec.kind) {
      case PolicyKind::random: break;
      case PolicyKind::rliv_ua:
        liv_ = std::make_shared<LivModel<float>>(mc, vocab, model_seed);
        policy_.liv = liv_;
        if (!mc.multi_task) {
          // One tower: rank by it directly.
          policy_.weights = {};
          policy_.weights[static_cast<std::size_t>(mc.primary_tower)] = 1.0;
        }
        if (spec.ranking_mix > 0) {
          ranking_ = std::make_shared<RankingModelNet<float>>(vocab, mc.embed_dim, mc.hidden_dims, mc.lr_critic,
                                                               derive_seed(seed, "ranking"));
          policy_.ranking = ranking_;
        }
        break;
      case PolicyKind::ranking_model:
        ranking_ = std::make_shared<RankingModelNet<float>>(vocab, mc.embed_dim, mc.hidden_dims, mc.lr_critic,
                                                             derive_seed(seed, "ranking"));
        policy_.ranking = ranking_;
        break;
      case PolicyKind::dqn:
        dqn_ = std::make_shared<DqnModel<float>>(mc, vocab, model_seed, cfg.dqn_target_period);
        policy_.dqn = dqn_;
        break;
    }
    policy_.validate();
    result_.policy = spec.name;
    result_.seed = seed;
  }

  int epoch() const { return static_cast<int>(result_.epochs.size()); }
  bool done() const { return epoch() >= cfg_.epochs; }
  const RunResult& result() const { return result_; }
  const RankingPolicy& policy() const { return policy_; }
  const LivModel<float>* liv() const { return liv_.get(); }
  Simulator& eval_sim() { return eval_sim_; }
  Simulator& train_sim() { return train_sim_; }
  const ReplayBuffer& buffer() const { return buffer_; }
  std::int64_t train_steps() const { return total_steps_; }
  const std::vector<SessionTrace>& last_eval_traces() const { return last_traces_; }

  bool trainable() const { return spec_.kind != PolicyKind::random; }

  double epsilon_at(int e) const {
    if (cfg_.epochs <= 1) return cfg_.epsilon_end;
    const double f = static_cast<double>(e) / static_cast<double>(cfg_.epochs - 1);
    return cfg_.epsilon_start + (cfg_.epsilon_end - cfg_.epsilon_start) * f;
  }

  void run_epoch(int parallel = 1) {
    if (done()) throw ContractError("PolicyRun: all epochs already completed");
    const int e = epoch();
    const double eps = epsilon_at(e);
    if (trainable()) {
      const std::int64_t C = cfg_.train_sessions_per_epoch;
      const std::int64_t S = cfg_.steps_per_epoch;
      const auto n_users = static_cast<std::uint64_t>(sim_cfg_.n_users);
      for (std::int64_t c = 0; c < C; ++c) {
        EpisodeOptions eo;
        eo.epsilon = eps;
        eo.explore_rng = &explore_rng_;
        eo.buffer = &buffer_;
        eo.item_cap_rng = &cap_rng_;
        run_episode(policy_, train_sim_, static_cast<UserId>(user_rng_.below(n_users)), eo);
        const std::int64_t steps = S * (c + 1) / C - S * c / C;
        for (std::int64_t k = 0; k < steps; ++k) train_once();
      }
    }
    const bool last = e + 1 == cfg_.epochs;
    auto ev = evaluate_now(parallel, last);
    result_.epochs.push_back(EpochRecord{e, eps, total_steps_, static_cast<std::int64_t>(buffer_.size()), ev.summary});
    if (last) {
      last_traces_ = std::move(ev.traces);
      finalize();
    }
  }

  /// Greedy evaluation of the current parameters on a fresh world.
  EvalResult evaluate_now(int parallel = 1, bool keep_traces = false) {
    EvalOptions opt;
    opt.n_sessions = cfg_.eval_sessions;
    opt.n_users = cfg_.eval_users;
    opt.parallel = parallel;
    opt.seed = derive_seed(seed_, "eval");
    opt.keep_traces = keep_traces;
    return evaluate(policy_, eval_sim_, opt);
  }

  // ---- run-state checkpoint ---------------------------------------------

  std::string config_digest() const { return detail::fnv_hex(to_json(cfg_).dump()); }

  nn::Checkpoint checkpoint() const {
    nn::Checkpoint ck;
    ck.seed = seed_;
    ck.header = {{"policy", spec_.name},
                 {"kind", std::string(policy_kind_name(spec_.kind))},
                 {"seed", seed_},
                 {"epoch", epoch()},
                 {"config_digest", config_digest()},
                 {"version", version_string()}};
    if (liv_) liv_->save(ck);
    if (ranking_) ranking_->save(ck);
    if (dqn_) dqn_->save(ck);
    nlohmann::json st = {{"total_steps", total_steps_},
                         {"explore_rng", explore_rng_.serialize()},
                         {"user_rng", user_rng_.serialize()},
                         {"cap_rng", cap_rng_.serialize()},
                         {"world", train_sim_.world_to_json()},
                         {"result", to_json(result_)}};
    const auto cbor = nlohmann::json::to_cbor(st);
    ck.put_bytes("run.state", std::string(cbor.begin(), cbor.end()));
    ck.put_bytes("run.buffer", detail::pack_buffer(buffer_));
    return ck;
  }

  void restore(const nn::Checkpoint& ck) {
    const auto& h = ck.header;
    if (h.value("policy", "") != spec_.name || h.value("seed", std::uint64_t{0}) != seed_)
      throw ConfigError("checkpoint belongs to policy '" + h.value("policy", "") + "' seed " +
                        std::to_string(h.value("seed", std::uint64_t{0})) + ", not '" + spec_.name + "' seed " +
                        std::to_string(seed_));
    if (h.value("version", "") != version_string())
      throw ConfigError("checkpoint version '" + h.value("version", "") + "' does not match '" + version_string() + "'");
    if (h.value("config_digest", "") != config_digest())
      throw ConfigError("checkpoint was written under a different configuration");
    if (liv_) liv_->load(ck);
    if (ranking_) ranking_->load(ck);
    if (dqn_) dqn_->load(ck);
    const auto& bytes = ck.get_bytes("run.state");
    const auto st = nlohmann::json::from_cbor(std::vector<std::uint8_t>(bytes.begin(), bytes.end()));
    total_steps_ = st.at("total_steps").get<std::int64_t>();
    explore_rng_.deserialize(st.at("explore_rng").get<std::string>());
    user_rng_.deserialize(st.at("user_rng").get<std::string>());
    cap_rng_.deserialize(st.at("cap_rng").get<std::string>());
    train_sim_.world_from_json(st.at("world"));
    result_ = run_result_from_json(st.at("result"));
    buffer_ = detail::unpack_buffer(ck.get_bytes("run.buffer"));
  }

 private:
  static SimConfig with_seed(SimConfig s, std::uint64_t seed) {
    s.seed = seed;
    return s;
  }

  void train_once() {
    if (buffer_.size() < cfg_.effective_min_buffer()) return;
    const auto batch = buffer_.sample(static_cast<std::size_t>(cfg_.model.batch_size));
    ++total_steps_;
    const bool log = total_steps_ % cfg_.step_log_interval == 0;
    switch (spec_.kind) {
      case PolicyKind::rliv_ua: {
        const auto m = liv_->train_step(batch);
        if (ranking_) ranking_->train_step(batch);
        if (log)
          for (Tower t : liv_->active_towers()) {
            const auto& tl = m.loss.towers[static_cast<std::size_t>(t)];
            result_.steps.push_back(StepRecord{total_steps_, std::string(tower_name(t)), tl.critic_loss, tl.reward_mae,
                                               tl.target_q_mean, m.loss.assist_loss});
          }
        break;
      }
      case PolicyKind::ranking_model: {
        const double l = ranking_->train_step(batch);
        if (log) result_.steps.push_back(StepRecord{total_steps_, "click", l, 0.0, 0.0, 0.0});
        break;
      }
      case PolicyKind::dqn: {
        const double l = dqn_->train_step(batch);
        if (log) result_.steps.push_back(StepRecord{total_steps_, "combined", l, 0.0, 0.0, 0.0});
        break;
      }
      case PolicyKind::random: break;
    }
  }

  void finalize() {
    const std::size_t n = std::min<std::size_t>(static_cast<std::size_t>(cfg_.final_epochs), result_.epochs.size());
    EpochMetrics f;
    for (std::size_t i = result_.epochs.size() - n; i < result_.epochs.size(); ++i)
      for (std::size_t k = 0; k < EpochMetrics::kNames.size(); ++k) f.set(k, f.get(k) + result_.epochs[i].metrics.get(k));
    for (std::size_t k = 0; k < EpochMetrics::kNames.size(); ++k) f.set(k, f.get(k) / static_cast<double>(n));
    result_.final_metrics = f;
    if (liv_ && liv_->tower_active(Tower::gift)) {
      const auto pairs = gift_value_pairs(*liv_, last_traces_);
      result_.gift_pairs = static_cast<std::int64_t>(pairs.size());
      try {
        result_.gift_correlation = gift_value_correlation(pairs);
      } catch (const UnavailableError&) {
        result_.gift_correlation.reset();
      }
    }
  }

  ExperimentConfig cfg_;
  PolicySpec spec_;
  std::uint64_t seed_;
  SimConfig sim_cfg_;
  Simulator train_sim_;
  Simulator eval_sim_;
  ReplayBuffer buffer_;
  Rng explore_rng_;
  Rng user_rng_;
  Rng cap_rng_;
  RankingPolicy policy_;
  std::shared_ptr<LivModel<float>> liv_;
  std::shared_ptr<RankingModelNet<float>> ranking_;
  std::shared_ptr<DqnModel<float>> dqn_;
  std::int64_t total_steps_ = 0;
  RunResult result_;
  std::vector<SessionTrace> last_traces_;
};

// ---------------------------------------------------------------------------

struct Summary {
  double mean = 0.0;
  double std = 0.0;
};

inline Summary summarize_values(const std::vector<double>& v) { return {stats::mean(v), stats::stddev(v)}; }

/// Aggregated report: per policy, mean and std over seeds of the final
/// metrics, plus the per-seed rows they came from.
inline nlohmann::json build_report(const ExperimentConfig& cfg, const std::vector<RunResult>& runs) {
  nlohmann::json policies = nlohmann::json::object();
  for (const auto& spec : cfg.policies) {
    nlohmann::json pj;
    nlohmann::json per_seed = nlohmann::json::array();
    std::vector<std::vector<double>> cols(EpochMetrics::kNames.size());
    std::vector<double> corr;
    for (const auto& r : runs) {
      if (r.policy != spec.name) continue;
      per_seed.push_back({{"seed", r.seed},
                          {"final", to_json(r.final_metrics)},
                          {"gift_correlation", r.gift_correlation ? nlohmann::json(*r.gift_correlation) : nlohmann::json()},
                          {"gift_pairs", r.gift_pairs}});
      for (std::size_t k = 0; k < cols.size(); ++k) cols[k].push_back(r.final_metrics.get(k));
      if (r.gift_correlation) corr.push_back(*r.gift_correlation);
    }
    for (std::size_t k = 0; k < cols.size(); ++k) {
      const auto s = summarize_values(cols[k]);
      pj[EpochMetrics::kNames[k]] = {{"mean", s.mean}, {"std", s.std}};
    }
    if (!corr.empty()) {
      const auto s = summarize_values(corr);
      pj["gift_correlation"] = {{"mean", s.mean}, {"std", s.std}, {"n", corr.size()}};
    }
    pj["kind"] = std::string(policy_kind_name(spec.kind));
    pj["seeds"] = per_seed;
    policies[spec.name] = pj;
  }
  return {{"version", version_string()}, {"config", to_json(cfg)}, {"seeds", cfg.seeds}, {"policies", policies}};
}

inline void write_epochs_csv(std::ostream& os, const std::vector<RunResult>& runs) {
  os << "epoch,policy,seed,session_length,watch_time,ctr,diversity,new_fans\n";
  os << std::setprecision(17);
  for (const auto& r : runs)
    for (const auto& e : r.epochs)
      os << e.epoch << ',' << r.policy << ',' << r.seed << ',' << e.metrics.session_length << ',' << e.metrics.watch_time
         << ',' << e.metrics.ctr << ',' << e.metrics.diversity << ',' << e.metrics.new_fans << '\n';
}

/// Per policy and epoch: mean and std over seeds of each metric.
inline void write_learning_curves_csv(std::ostream& os, const ExperimentConfig& cfg, const std::vector<RunResult>& runs) {
  os << "policy,epoch,metric,mean,std,n_seeds\n";
  os << std::setprecision(17);
  for (const auto& spec : cfg.policies)
    for (int e = 0; e < cfg.epochs; ++e)
      for (std::size_t k = 0; k < EpochMetrics::kNames.size(); ++k) {
        std::vector<double> v;
        for (const auto& r : runs)
          if (r.policy == spec.name && e < static_cast<int>(r.epochs.size())) v.push_back(r.epochs[static_cast<std::size_t>(e)].metrics.get(k));
        if (v.empty()) continue;
        const auto s = summarize_values(v);
        os << spec.name << ',' << e << ',' << EpochMetrics::kNames[k] << ',' << s.mean << ',' << s.std << ',' << v.size() << '\n';
      }
}

inline void write_step_metrics_csv(std::ostream& os, const std::vector<RunResult>& runs) {
  os << "policy,seed,step,tower,critic_loss,reward_mae,target_q_mean,assist_loss\n";
  os << std::setprecision(17);
  for (const auto& r : runs)
    for (const auto& s : r.steps)
      os << r.policy << ',' << r.seed << ',' << s.step << ',' << s.tower << ',' << s.critic_loss << ',' << s.reward_mae
         << ',' << s.target_q_mean << ',' << s.assist_loss << '\n';
}

struct RunOptions {
  std::string out_dir;   // empty: nothing written
  int parallel = 1;
  bool resume = false;
  std::ostream* log = nullptr;
};

struct ExperimentResult {
  std::vector<RunResult> runs;
  nlohmann::json report;
};

namespace detail {
inline void write_file(const std::filesystem::path& p, const std::string& content) {
  std::filesystem::create_directories(p.parent_path());
  const auto tmp = p.string() + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw Error("cannot write '" + tmp + "'");
    f << content;
    if (!f) throw Error("short write to '" + tmp + "'");
  }
  std::filesystem::rename(tmp, p);
}

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream f(p, std::ios::binary);
  if (!f) throw ConfigError("cannot read '" + p.string() + "'");
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}
}  // namespace detail

inline std::filesystem::path run_dir(const std::filesystem::path& out, const std::string& policy, std::uint64_t seed) {
  return out / "runs" / policy / ("seed_" + std::to_string(seed));
}

inline void write_run_metadata(const std::filesystem::path& out, const ExperimentConfig& cfg) {
  detail::write_file(out / "config.json", to_json(cfg).dump(2) + "\n");
  detail::write_file(out / "seeds.json", nlohmann::json(cfg.seeds).dump() + "\n");
  detail::write_file(out / "VERSION", version_string() + "\n");
}

inline void write_experiment_outputs(const std::filesystem::path& out, const ExperimentConfig& cfg,
                                     const std::vector<RunResult>& runs, const nlohmann::json& report) {
  std::ostringstream epochs, curves, steps;
  write_epochs_csv(epochs, runs);
  write_learning_curves_csv(curves, cfg, runs);
  write_step_metrics_csv(steps, runs);
  detail::write_file(out / "epochs.csv", epochs.str());
  detail::write_file(out / "learning_curves.csv", curves.str());
  detail::write_file(out / "step_metrics.csv", steps.str());
  detail::write_file(out / "report.json", report.dump(2) + "\n");
}

/// Trains and evaluates every (policy, seed). With an output directory each
/// completed epoch leaves a checkpoint, so an abort can be resumed.
inline ExperimentResult run_experiment(const ExperimentConfig& cfg, const RunOptions& opt = {}) {
  const std::filesystem::path out = opt.out_dir;
  const bool persist = !opt.out_dir.empty();
  if (persist) write_run_metadata(out, cfg);
  ExperimentResult res;
  for (const auto& spec : cfg.policies)
    for (std::uint64_t seed : cfg.seeds) {
      const auto dir = persist ? run_dir(out, spec.name, seed) : std::filesystem::path();
      if (persist && opt.resume && std::filesystem::exists(dir / "result.json")) {
        res.runs.push_back(run_result_from_json(nlohmann::json::parse(detail::read_file(dir / "result.json"))));
        continue;
      }
      PolicyRun run(cfg, spec, seed);
      if (persist && opt.resume && std::filesystem::exists(dir / "checkpoint.bin")) {
        run.restore(nn::Checkpoint::load((dir / "checkpoint.bin").string()));
        if (opt.log) *opt.log << "resumed " << spec.name << " seed " << seed << " at epoch " << run.epoch() << "\n";
      }
      while (!run.done()) {
        run.run_epoch(opt.parallel);
        if (opt.log) {
          const auto& m = run.result().epochs.back().metrics;
          *opt.log << spec.name << " seed " << seed << " epoch " << run.epoch() - 1 << ": session_length "
                   << m.session_length << ", watch_time " << m.watch_time << ", ctr " << m.ctr << "\n";
        }
        if (persist && cfg.checkpoint) {
          std::filesystem::create_directories(dir);
          run.checkpoint().save((dir / "checkpoint.bin").string());
        }
      }
      if (persist) detail::write_file(dir / "result.json", to_json(run.result()).dump() + "\n");
      res.runs.push_back(run.result());
    }
  res.report = build_report(cfg, res.runs);
  if (persist) write_experiment_outputs(out, cfg, res.runs, res.report);
  return res;
}

}  // namespace rliv
