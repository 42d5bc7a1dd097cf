#pragma once

// Experiment configuration: a strict JSON tree. Every object rejects keys it
// does not know, and every error names the offending field path.

#include <array>
#include <cstdint>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "rliv/domain.hpp"
#include "rliv/error.hpp"
#include "rliv/liv_model.hpp"
#include "rliv/ranker.hpp"
#include "rliv/sim.hpp"

namespace rliv {

struct AblationFlags {
  bool disable_mt = false;
  bool disable_sl = false;
  bool disable_assist = false;

  AblationFlags merged(const AblationFlags& o) const {
    return {disable_mt || o.disable_mt, disable_sl || o.disable_sl, disable_assist || o.disable_assist};
  }
  friend bool operator==(const AblationFlags&, const AblationFlags&) = default;
};

struct PolicySpec {
  std::string name;
  PolicyKind kind = PolicyKind::rliv_ua;
  std::array<double, kNumTowers> weights = {1.0, 1.0, 0.0, 0.0};
  double ranking_mix = 0.0;
  AblationFlags ablation;
};

inline const std::vector<std::string>& ablation_variant_names() {
  static const std::vector<std::string> names = {"full", "no_mt", "no_mt_sl", "no_sl", "no_al_sl"};
  return names;
}

inline AblationFlags ablation_variant_flags(const std::string& v) {
  if (v == "full") return {};
  if (v == "no_mt") return {true, false, false};
  if (v == "no_mt_sl") return {true, true, false};
  if (v == "no_sl") return {false, true, false};
  if (v == "no_al_sl") return {false, true, true};
  throw ConfigError("variants: unknown ablation variant '" + v + "'");
}

struct ExperimentConfig {
  SimConfig sim;
  ModelConfig model;
  std::vector<PolicySpec> policies;
  int epochs = 1;
  std::int64_t steps_per_epoch = 10'000;
  std::int64_t train_sessions_per_epoch = 200;
  std::int64_t eval_sessions = 200;
  std::int64_t eval_users = 0;
  std::vector<std::uint64_t> seeds;
  std::string output_dir = "runs";
  AblationFlags ablation;
  std::vector<std::string> variants;  // used by `ablate`
  double epsilon_start = 0.1;
  double epsilon_end = 0.01;
  std::int64_t replay_capacity = 100'000;
  std::int64_t min_buffer = 0;        // 0: one batch
  std::int64_t dqn_target_period = 1000;
  int final_epochs = 10;
  std::int64_t step_log_interval = 100;
  bool checkpoint = true;

  /// Model hyperparameters of one policy after ablation flags are applied.
  ModelConfig model_for(const PolicySpec& p) const {
    ModelConfig m = model;
    const AblationFlags f = ablation.merged(p.ablation);
    m.multi_task = !f.disable_mt;
    m.supervised = !f.disable_sl;
    m.assistance = !f.disable_assist;
    return m;
  }

  std::size_t effective_min_buffer() const {
    return static_cast<std::size_t>(min_buffer > 0 ? min_buffer : model.batch_size);
  }
};

namespace config_detail {

/// Reads one JSON object, tracking consumed keys for unknown-key rejection.
class ObjectReader {
 public:
  ObjectReader(const nlohmann::json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j.is_object()) throw ConfigError(path_ + ": expected an object");
  }

  bool has(const std::string& key) const { return j_.contains(key); }

  std::string field(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  const nlohmann::json& require(const std::string& key) {
    if (!j_.contains(key)) throw ConfigError(field(key) + ": missing required field");
    seen_.insert(key);
    return j_.at(key);
  }

  template <class T>
  void opt(const std::string& key, T& out) {
    if (!j_.contains(key)) return;
    seen_.insert(key);
    out = convert<T>(j_.at(key), field(key));
  }

  template <class T>
  T req(const std::string& key) {
    return convert<T>(require(key), field(key));
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!seen_.contains(it.key())) throw ConfigError(field(it.key()) + ": unknown key");
  }

  template <class T>
  static T convert(const nlohmann::json& v, const std::string& where) {
    if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean()) throw ConfigError(where + ": expected a boolean");
    } else if constexpr (std::is_integral_v<T>) {
      if (!v.is_number_integer()) throw ConfigError(where + ": expected an integer");
      if constexpr (std::is_unsigned_v<T>)
        if (v.is_number_integer() && !v.is_number_unsigned()) throw ConfigError(where + ": expected a non-negative integer");
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!v.is_number()) throw ConfigError(where + ": expected a number");
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!v.is_string()) throw ConfigError(where + ": expected a string");
    } else if constexpr (std::is_same_v<T, std::vector<int>> || std::is_same_v<T, std::vector<std::uint64_t>> ||
                         std::is_same_v<T, std::vector<std::string>>) {
      if (!v.is_array()) throw ConfigError(where + ": expected an array");
      T out;
      for (std::size_t i = 0; i < v.size(); ++i)
        out.push_back(convert<typename T::value_type>(v[i], where + "[" + std::to_string(i) + "]"));
      return out;
    }
    return v.get<T>();
  }

 private:
  const nlohmann::json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

inline void check(bool ok, const std::string& field, const std::string& msg) {
  if (!ok) throw ConfigError(field + ": " + msg);
}

inline AblationFlags read_ablation(ObjectReader& r) {
  AblationFlags f;
  r.opt("disable_mt", f.disable_mt);
  r.opt("disable_sl", f.disable_sl);
  r.opt("disable_assist", f.disable_assist);
  return f;
}

inline SimConfig read_sim(const nlohmann::json& j) {
  SimConfig s;
  ObjectReader r(j, "sim");
  r.opt("n_users", s.n_users);
  r.opt("n_authors", s.n_authors);
  r.opt("items_per_author", s.items_per_author);
  r.opt("n_categories", s.n_categories);
  r.opt("latent_dim", s.latent_dim);
  r.opt("n_cohorts", s.n_cohorts);
  r.opt("n_activity_tiers", s.n_activity_tiers);
  r.opt("candidates_per_request", s.candidates_per_request);
  r.opt("exposure_k", s.exposure_k);
  r.opt("affinity_temperature", s.affinity_temperature);
  r.opt("engagement_bonus", s.engagement_bonus);
  r.opt("quality_mean", s.quality_mean);
  r.opt("quality_std", s.quality_std);
  r.opt("follow_base", s.follow_base);
  r.opt("gift_base", s.gift_base);
  r.opt("gift_log_mean", s.gift_log_mean);
  r.opt("gift_log_std", s.gift_log_std);
  r.opt("gift_cap", s.gift_cap);
  r.opt("watch_mean_seconds", s.watch_mean_seconds);
  r.opt("max_watch_seconds", s.max_watch_seconds);
  r.opt("quit_patience", s.quit_patience);
  r.opt("quit_base", s.quit_base);
  r.opt("max_requests", s.max_requests);
  r.finish();
  try {
    s.validate();
  } catch (const ValidationError& e) {
    throw ConfigError(e.what());
  }
  return s;
}

inline ModelConfig read_model(const nlohmann::json& j) {
  ModelConfig m;
  ObjectReader r(j, "model");
  r.opt("gamma", m.gamma);
  r.opt("tau", m.tau);
  r.opt("lr_critic", m.lr_critic);
  r.opt("lr_embedding", m.lr_embedding);
  r.opt("batch_size", m.batch_size);
  r.opt("hidden_dims", m.hidden_dims);
  r.opt("embed_dim", m.embed_dim);
  r.opt("huber_delta", m.huber_delta);
  r.opt("grad_clip_norm", m.grad_clip_norm);
  if (r.has("primary_tower")) {
    const auto name = r.req<std::string>("primary_tower");
    try {
      m.primary_tower = tower_from_name(name);
    } catch (const Error&) {
      throw ConfigError("model.primary_tower: unknown tower '" + name + "'");
    }
  }
  r.finish();
  try {
    m.validate();
  } catch (const ValidationError& e) {
    throw ConfigError(e.what());
  }
  return m;
}

inline PolicySpec read_policy(const nlohmann::json& j, const std::string& path) {
  PolicySpec p;
  ObjectReader r(j, path);
  p.name = r.req<std::string>("name");
  check(!p.name.empty(), r.field("name"), "must be non-empty");
  const auto kind = r.req<std::string>("kind");
  try {
    p.kind = policy_kind_from_name(kind);
  } catch (const Error&) {
    throw ConfigError(r.field("kind") + ": unknown policy kind '" + kind + "'");
  }
  if (r.has("weights")) {
    ObjectReader w(r.require("weights"), r.field("weights"));
    p.weights.fill(0.0);  // listed towers only
    for (Tower t : kAllTowers) w.opt(std::string(tower_name(t)), p.weights[static_cast<std::size_t>(t)]);
    w.finish();
    bool positive = false;
    for (double x : p.weights) {
      check(x >= 0.0, r.field("weights"), "tower weights must be non-negative");
      positive = positive || x > 0.0;
    }
    check(positive, r.field("weights"), "at least one tower weight must be positive");
  }
  r.opt("ranking_mix", p.ranking_mix);
  check(p.ranking_mix >= 0.0, r.field("ranking_mix"), "must be non-negative");
  p.ablation = read_ablation(r);
  r.finish();
  return p;
}

}  // namespace config_detail

inline ExperimentConfig parse_experiment_config(const nlohmann::json& j) {
  using config_detail::check;
  ExperimentConfig c;
  config_detail::ObjectReader r(j, "");
  if (r.has("sim")) c.sim = config_detail::read_sim(r.require("sim"));
  if (r.has("model")) c.model = config_detail::read_model(r.require("model"));
  const auto& pol = r.require("policies");
  check(pol.is_array(), "policies", "expected an array");
  check(!pol.empty(), "policies", "must list at least one policy");
  std::set<std::string> names;
  for (std::size_t i = 0; i < pol.size(); ++i) {
    auto p = config_detail::read_policy(pol[i], "policies[" + std::to_string(i) + "]");
    check(names.insert(p.name).second, "policies[" + std::to_string(i) + "].name", "duplicate policy name '" + p.name + "'");
    c.policies.push_back(std::move(p));
  }
  c.epochs = r.req<int>("epochs");
  check(c.epochs >= 1, "epochs", "must be >= 1");
  c.seeds = r.req<std::vector<std::uint64_t>>("seeds");
  check(!c.seeds.empty(), "seeds", "must list at least one seed");
  r.opt("steps_per_epoch", c.steps_per_epoch);
  check(c.steps_per_epoch >= 0, "steps_per_epoch", "must be >= 0");
  r.opt("train_sessions_per_epoch", c.train_sessions_per_epoch);
  check(c.train_sessions_per_epoch >= 1, "train_sessions_per_epoch", "must be >= 1");
  r.opt("eval_sessions", c.eval_sessions);
  check(c.eval_sessions >= 1, "eval_sessions", "must be >= 1");
  r.opt("eval_users", c.eval_users);
  check(c.eval_users >= 0, "eval_users", "must be >= 0");
  r.opt("output_dir", c.output_dir);
  if (r.has("ablation")) {
    config_detail::ObjectReader a(r.require("ablation"), "ablation");
    c.ablation = config_detail::read_ablation(a);
    a.finish();
  }
  r.opt("variants", c.variants);
  for (std::size_t i = 0; i < c.variants.size(); ++i) {
    try {
      ablation_variant_flags(c.variants[i]);
    } catch (const ConfigError&) {
      throw ConfigError("variants[" + std::to_string(i) + "]: unknown ablation variant '" + c.variants[i] + "'");
    }
  }
  r.opt("epsilon_start", c.epsilon_start);
  r.opt("epsilon_end", c.epsilon_end);
  check(c.epsilon_start >= 0.0 && c.epsilon_start <= 1.0, "epsilon_start", "must be in [0, 1]");
  check(c.epsilon_end >= 0.0 && c.epsilon_end <= 1.0, "epsilon_end", "must be in [0, 1]");
  r.opt("replay_capacity", c.replay_capacity);
  check(c.replay_capacity >= 1, "replay_capacity", "must be >= 1");
  r.opt("min_buffer", c.min_buffer);
  check(c.min_buffer >= 0, "min_buffer", "must be >= 0");
  r.opt("dqn_target_period", c.dqn_target_period);
  check(c.dqn_target_period >= 1, "dqn_target_period", "must be >= 1");
  r.opt("final_epochs", c.final_epochs);
  check(c.final_epochs >= 1, "final_epochs", "must be >= 1");
  r.opt("step_log_interval", c.step_log_interval);
  check(c.step_log_interval >= 1, "step_log_interval", "must be >= 1");
  r.opt("checkpoint", c.checkpoint);
  r.finish();
  return c;
}

inline nlohmann::json to_json(const ExperimentConfig& c) {
  const SimConfig& s = c.sim;
  nlohmann::json sim = {{"n_users", s.n_users},
                        {"n_authors", s.n_authors},
                        {"items_per_author", s.items_per_author},
                        {"n_categories", s.n_categories},
                        {"latent_dim", s.latent_dim},
                        {"n_cohorts", s.n_cohorts},
                        {"n_activity_tiers", s.n_activity_tiers},
                        {"candidates_per_request", s.candidates_per_request},
                        {"exposure_k", s.exposure_k},
                        {"affinity_temperature", s.affinity_temperature},
                        {"engagement_bonus", s.engagement_bonus},
                        {"quality_mean", s.quality_mean},
                        {"quality_std", s.quality_std},
                        {"follow_base", s.follow_base},
                        {"gift_base", s.gift_base},
                        {"gift_log_mean", s.gift_log_mean},
                        {"gift_log_std", s.gift_log_std},
                        {"gift_cap", s.gift_cap},
                        {"watch_mean_seconds", s.watch_mean_seconds},
                        {"max_watch_seconds", s.max_watch_seconds},
                        {"quit_patience", s.quit_patience},
                        {"quit_base", s.quit_base},
                        {"max_requests", s.max_requests}};
  const ModelConfig& m = c.model;
  nlohmann::json model = {{"gamma", m.gamma},
                          {"tau", m.tau},
                          {"lr_critic", m.lr_critic},
                          {"lr_embedding", m.lr_embedding},
                          {"batch_size", m.batch_size},
                          {"hidden_dims", m.hidden_dims},
                          {"embed_dim", m.embed_dim},
                          {"huber_delta", m.huber_delta},
                          {"grad_clip_norm", m.grad_clip_norm},
                          {"primary_tower", std::string(tower_name(m.primary_tower))}};
  auto flags = [](const AblationFlags& f) {
    return nlohmann::json{{"disable_mt", f.disable_mt}, {"disable_sl", f.disable_sl}, {"disable_assist", f.disable_assist}};
  };
  nlohmann::json policies = nlohmann::json::array();
  for (const auto& p : c.policies) {
    nlohmann::json w;
    for (Tower t : kAllTowers) w[std::string(tower_name(t))] = p.weights[static_cast<std::size_t>(t)];
    nlohmann::json pj = flags(p.ablation);
    pj["name"] = p.name;
    pj["kind"] = std::string(policy_kind_name(p.kind));
    pj["weights"] = w;
    pj["ranking_mix"] = p.ranking_mix;
    policies.push_back(pj);
  }
  return {{"sim", sim},
          {"model", model},
          {"policies", policies},
          {"epochs", c.epochs},
          {"steps_per_epoch", c.steps_per_epoch},
          {"train_sessions_per_epoch", c.train_sessions_per_epoch},
          {"eval_sessions", c.eval_sessions},
          {"eval_users", c.eval_users},
          {"seeds", c.seeds},
          {"output_dir", c.output_dir},
          {"ablation", flags(c.ablation)},
          {"variants", c.variants},
          {"epsilon_start", c.epsilon_start},
          {"epsilon_end", c.epsilon_end},
          {"replay_capacity", c.replay_capacity},
          {"min_buffer", c.min_buffer},
          {"dqn_target_period", c.dqn_target_period},
          {"final_epochs", c.final_epochs},
          {"step_log_interval", c.step_log_interval},
          {"checkpoint", c.checkpoint}};
}

inline ExperimentConfig load_experiment_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot read config file '" + path + "'");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(f);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("config '" + path + "' is not valid JSON: " + e.what());
  }
  return parse_experiment_config(j);
}

}  // namespace rliv
