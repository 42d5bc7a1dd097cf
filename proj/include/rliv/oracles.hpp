#pragma once

// Independent correctness checks: finite-difference gradients, tabular value
// iteration, ground-truth replay of the sample builder and Monte Carlo
// calibration of the simulator.

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "rliv/asa.hpp"
#include "rliv/eval.hpp"
#include "rliv/liv_model.hpp"
#include "rliv/nn/grad_check.hpp"
#include "rliv/ranker.hpp"
#include "rliv/sim.hpp"

namespace rliv::oracle {

struct Check {
  std::string name;
  bool pass = false;
  double value = 0.0;
  double threshold = 0.0;
  std::string detail;
};

// ---------------------------------------------------------------------------
// Gradients

struct GradientOptions {
  int probes = 100;
  double eps = 1e-5;
  double tolerance = 1e-4;
  std::uint64_t seed = 0;
  /// Test hook applied to every analytic gradient before comparison.
  std::function<void(nn::GradBundle<double>&)> corrupt;
};

/// Central differences on `probes` coordinates drawn from `tensors` (a subset
/// of `params`, by index). A tensor is drawn first, then a coordinate in it.
inline double probe_gradient(std::span<nn::Mat<double>* const> params, std::span<const std::size_t> tensors,
                             const std::function<double()>& loss, const nn::GradBundle<double>& analytic,
                             const GradientOptions& opt, std::uint64_t stream) {
  Rng rng(derive_seed(opt.seed, "oracle.grad.probe", stream));
  double worst = 0.0;
  for (int k = 0; k < opt.probes; ++k) {
    const std::size_t t = tensors[rng.below(tensors.size())];
    nn::Mat<double>& p = *params[t];
    const auto i = static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(p.size())));
    double& x = p.data()[i];
    const double saved = x;
    x = saved + opt.eps;
    const double up = loss();
    x = saved - opt.eps;
    const double down = loss();
    x = saved;
    worst = std::max(worst, nn::relative_error(analytic.tensors[t].data()[i], (up - down) / (2.0 * opt.eps)));
  }
  return worst;
}

namespace detail {

inline Vocab grad_vocab() { return Vocab{12, 4, 3, 6, 18, 5}; }

inline std::vector<TransitionSample> random_batch(const Vocab& v, std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  auto id = [&](std::int64_t size) { return static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(size))); };
  std::vector<TransitionSample> out;
  for (std::size_t b = 0; b < n; ++b) {
    TransitionSample s;
    s.state.user = UserStatic{id(v.users), id(v.cohorts), id(v.activity_tiers)};
    s.state.author = AuthorStatic{id(v.authors), id(v.items), id(v.categories)};
    auto& d = s.state.dynamic;
    d.click_count = id(6);
    d.watch_count = id(6);
    d.follow_flag = id(2);
    d.gift_count = id(3);
    d.cumulative_watch_seconds = rng.uniform(0.0, 200.0);
    d.cumulative_gift_amount = rng.uniform(0.0, 50.0);
    s.key = s.state.key();
    s.action_item = s.state.author.item_id;
    InteractionOutcome o;
    o.clicked = rng.bernoulli(0.6);
    o.watch_seconds = o.clicked ? rng.uniform(0.0, 60.0) : 0.0;
    o.followed = o.clicked && rng.bernoulli(0.3);
    o.gift_amount = (b % 2 == 0) ? rng.uniform(1.0, 40.0) : 0.0;
    s.reward = reward_from_feedback(o);
    s.next_state = approximate_next_state(s.state, s.reward);
    for (int j = 0; j < 3; ++j) s.author_items.push_back(ItemRef{id(v.items), id(v.categories)});
    out.push_back(std::move(s));
  }
  return out;
}

inline std::vector<std::size_t> index_range(std::size_t begin, std::size_t end) {
  std::vector<std::size_t> out;
  for (std::size_t i = begin; i < end; ++i) out.push_back(i);
  return out;
}

}  // namespace detail

/// One check per network shape. Every shape is probed `opt.probes` times.
inline std::vector<Check> gradient_checks(const GradientOptions& opt = {}) {
  std::vector<Check> out;
  auto record = [&](const std::string& name, double err) {
    out.push_back(Check{"grad." + name, err <= opt.tolerance, err, opt.tolerance, ""});
  };
  std::uint64_t stream = 0;

  // Plain relu MLP, parameters and input.
  {
    Rng rng(derive_seed(opt.seed, "oracle.grad.mlp"));
    nn::DenseNetwork<double> net(10, {16, 16}, 3, rng);
    nn::Mat<double> x(10, 5);
    nn::fill_uniform(x, 1.0, rng);
    nn::Mat<double> w(3, 5);
    nn::fill_uniform(w, 1.0, rng);
    auto params = net.params();
    params.push_back(&x);
    nn::GradBundle<double> g(params);
    nn::DenseCache<double> cache;
    net.forward(x, cache);
    g.tensors.back() = net.backward(w, cache, g.slice(0, net.num_tensors()));
    if (opt.corrupt) opt.corrupt(g);
    auto loss = [&] { return net.forward(x).cwiseProduct(w).sum(); };
    record("mlp", probe_gradient(params, detail::index_range(0, params.size()), loss, g, opt, stream++));
  }

  const Vocab vocab = detail::grad_vocab();
  ModelConfig mc;
  mc.embed_dim = 8;
  mc.hidden_dims = {16, 16};
  const auto batch = detail::random_batch(vocab, 6, derive_seed(opt.seed, "oracle.grad.batch"));

  // Full multi-task model: embeddings, every tower's reward and critic heads,
  // and the assistance net, each probed as its own group.
  for (bool supervised : {true, false}) {
    mc.supervised = supervised;
    LivModel<double> model(mc, vocab, derive_seed(opt.seed, "oracle.grad.liv"));
    const TargetSet y = model.bellman_targets(batch);
    auto params = model.online_params();
    nn::GradBundle<double> g(params);
    model.loss_and_grad(batch, y, &g);
    if (opt.corrupt) opt.corrupt(g);
    auto loss = [&] { return model.loss_and_grad(batch, y, nullptr).total; };
    const std::string tag = supervised ? "" : ".no_sl";
    const std::size_t n_emb = model.embedding_params().size();
    record("embeddings" + tag, probe_gradient(params, detail::index_range(0, n_emb), loss, g, opt, stream++));
    std::size_t offset = n_emb;
    const std::size_t per_head = 2 * (mc.hidden_dims.size() + 1);
    for (Tower t : model.active_towers()) {
      const std::string name = "tower." + std::string(tower_name(t));
      if (supervised) {
        record(name + ".reward_head", probe_gradient(params, detail::index_range(offset, offset + per_head), loss, g, opt, stream++));
        offset += per_head;
      }
      record(name + ".critics" + tag,
             probe_gradient(params, detail::index_range(offset, offset + 2 * per_head), loss, g, opt, stream++));
      offset += 2 * per_head;
    }
    if (supervised) {
      record("assistance", probe_gradient(params, detail::index_range(offset, params.size()), loss, g, opt, stream++));
    }
  }

  // Ranking baseline.
  {
    RankingModelNet<double> net(vocab, 8, {16}, 1e-3, derive_seed(opt.seed, "oracle.grad.ranking"));
    std::vector<UAState> states;
    std::vector<int> labels;
    for (const auto& s : batch) {
      states.push_back(s.state);
      labels.push_back(s.reward.click > 0 ? 1 : 0);
    }
    auto params = net.params();
    nn::GradBundle<double> g(params);
    net.loss_and_grad(states, labels, &g);
    if (opt.corrupt) opt.corrupt(g);
    auto loss = [&] { return net.loss_and_grad(states, labels, nullptr); };
    record("ranking_model", probe_gradient(params, detail::index_range(0, params.size()), loss, g, opt, stream++));
  }

  // DQN baseline.
  {
    DqnModel<double> dqn(mc, vocab, derive_seed(opt.seed, "oracle.grad.dqn"));
    const auto y = dqn.targets(batch);
    auto params = dqn.params();
    nn::GradBundle<double> g(params);
    dqn.loss_and_grad(batch, y, &g);
    if (opt.corrupt) opt.corrupt(g);
    auto loss = [&] { return dqn.loss_and_grad(batch, y, nullptr); };
    record("dqn", probe_gradient(params, detail::index_range(0, params.size()), loss, g, opt, stream++));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Tabular value iteration

/// Enumerable lifelong MDP. Author a owns items 2a and 2a+1. A pair's click
/// counter saturates at `click_cap`; below it exactly one of the author's two
/// items is clicked, with a watch reward that depends on the pair only.
struct TabularMdp {
  std::int64_t users = 4;
  std::int64_t authors = 3;
  std::int64_t click_cap = 2;
  double gamma = 0.9;

  Vocab vocab() const { return Vocab{users, 1, 1, authors, 2 * authors, 2}; }

  bool clicks(std::int64_t u, std::int64_t a, std::int64_t c, std::int64_t j) const {
    return c < click_cap && (u + a + c + j) % 2 == 0;
  }
  double watch_fraction(std::int64_t u, std::int64_t a) const { return 0.2 + 0.15 * static_cast<double>((3 * u + a) % 5); }

  UAState state(std::int64_t u, std::int64_t a, std::int64_t c, std::int64_t j) const {
    UAState s;
    s.user = UserStatic{u, 0, 0};
    s.author = AuthorStatic{a, 2 * a + j, j};
    s.dynamic.click_count = c;
    s.dynamic.watch_count = c;
    s.dynamic.cumulative_watch_seconds = static_cast<double>(c) * watch_fraction(u, a) * 60.0;
    return s;
  }

  /// Every (pair, counter, item) transition, built through the sample builder.
  std::vector<TransitionSample> samples() const {
    std::vector<TransitionSample> out;
    for (std::int64_t u = 0; u < users; ++u)
      for (std::int64_t a = 0; a < authors; ++a)
        for (std::int64_t c = 0; c <= click_cap; ++c)
          for (std::int64_t j = 0; j < 2; ++j) {
            LabeledEvent ev;
            ev.key = UAKey{u, a};
            ev.state_at_exposure = state(u, a, c, j);
            ev.action_item = 2 * a + j;
            InteractionOutcome o;
            o.item_id = ev.action_item;
            o.author_id = a;
            o.clicked = clicks(u, a, c, j);
            o.watch_seconds = o.clicked ? watch_fraction(u, a) * 60.0 : 0.0;
            ev.reward = reward_from_feedback(o);
            out.push_back(build_sample(ev, {ItemRef{2 * a, 0}, ItemRef{2 * a + 1, 1}}, /*terminal=*/false));
          }
    return out;
  }

  /// Q*(u, a, c, j) for one tower, by value iteration to a fixed point.
  std::map<std::array<std::int64_t, 4>, double> value_iteration(Tower t) const {
    std::map<std::array<std::int64_t, 4>, double> q;
    auto reward = [&](std::int64_t u, std::int64_t a, std::int64_t c, std::int64_t j) {
      if (!clicks(u, a, c, j)) return 0.0;
      if (t == Tower::click) return 1.0;
      if (t == Tower::watch) return watch_fraction(u, a);
      return 0.0;
    };
    for (std::int64_t u = 0; u < users; ++u)
      for (std::int64_t a = 0; a < authors; ++a)
        for (std::int64_t c = 0; c <= click_cap; ++c)
          for (std::int64_t j = 0; j < 2; ++j) q[{u, a, c, j}] = 0.0;
    for (int it = 0; it < 10000; ++it) {
      double delta = 0.0;
      auto next = q;
      for (auto& [k, v] : next) {
        const auto [u, a, c, j] = k;
        const std::int64_t c2 = clicks(u, a, c, j) ? c + 1 : c;
        const double best = std::max(q[{u, a, c2, 0}], q[{u, a, c2, 1}]);
        v = reward(u, a, c, j) + gamma * best;
        delta = std::max(delta, std::abs(v - q[k]));
      }
      q = std::move(next);
      if (delta < 1e-12) break;
    }
    return q;
  }
};

struct TabularOptions {
  TabularMdp mdp;
  std::int64_t max_steps = 20000;
  std::int64_t check_every = 500;
  double tolerance = 0.05;  // fraction of the value range
  std::uint64_t seed = 0;
};

struct TabularResult {
  std::array<double, kNumTowers> mae{};
  std::array<double, kNumTowers> range{};
  std::int64_t steps = 0;
  bool pass = false;
};

/// Trains a full model on the enumerated transitions (full batch, default
/// hyperparameters) and compares tower_q with value iteration on the towers
/// that carry reward.
inline TabularResult tabular_check(const TabularOptions& opt = {}) {
  const auto& mdp = opt.mdp;
  const auto samples = mdp.samples();
  ModelConfig mc;
  mc.gamma = mdp.gamma;
  LivModel<float> model(mc, mdp.vocab(), derive_seed(opt.seed, "oracle.tabular"));
  const std::array<Tower, 2> towers = {Tower::click, Tower::watch};
  std::array<std::map<std::array<std::int64_t, 4>, double>, 2> truth = {mdp.value_iteration(Tower::click),
                                                                        mdp.value_iteration(Tower::watch)};
  std::vector<UAState> states;
  std::vector<std::array<std::int64_t, 4>> keys;
  for (const auto& [k, v] : truth[0]) {
    keys.push_back(k);
    states.push_back(mdp.state(k[0], k[1], k[2], k[3]));
  }
  TabularResult res;
  auto measure = [&] {
    const auto scores = model.score(states);
    bool ok = true;
    for (std::size_t ti = 0; ti < towers.size(); ++ti) {
      const Tower t = towers[ti];
      double lo = 1e300, hi = -1e300, err = 0.0;
      for (std::size_t i = 0; i < keys.size(); ++i) {
        const double v = truth[ti].at(keys[i]);
        lo = std::min(lo, v);
        hi = std::max(hi, v);
        err += std::abs(scores[i][t] - v);
      }
      res.mae[static_cast<std::size_t>(t)] = err / static_cast<double>(keys.size());
      res.range[static_cast<std::size_t>(t)] = hi - lo;
      ok = ok && res.mae[static_cast<std::size_t>(t)] <= opt.tolerance * (hi - lo);
    }
    return ok;
  };
  while (res.steps < opt.max_steps) {
    model.train_step(samples);
    ++res.steps;
    if (res.steps % opt.check_every == 0 && measure()) {
      res.pass = true;
      return res;
    }
  }
  res.pass = measure();
  return res;
}

// ---------------------------------------------------------------------------
// Sample builder against simulator ground truth

struct AsaResult {
  std::int64_t sessions = 0;
  std::int64_t samples = 0;
  std::int64_t mismatches = 0;
};

/// Replays random-policy sessions and compares every approximated next state
/// with the simulator's counters after the interaction.
inline AsaResult asa_check(const SimConfig& cfg, std::int64_t sessions, std::uint64_t seed = 0) {
  Simulator sim(cfg);
  RankingPolicy policy;
  policy.kind = PolicyKind::random;
  Rng rng(derive_seed(seed, "oracle.asa"));
  ReplayBuffer sink(1);
  AsaResult res;
  const std::int64_t n_users = static_cast<std::int64_t>(sim.population().users.size());
  for (std::int64_t i = 0; i < sessions; ++i) {
    EpisodeOptions eo;
    eo.explore_rng = &rng;
    eo.buffer = &sink;
    const auto ep = run_episode(policy, sim, static_cast<UserId>(i % n_users), eo);
    std::size_t k = 0;
    for (const auto& req : ep.trace.requests)
      for (const auto& rec : req.exposures) {
        const auto& s = ep.samples.at(k++);
        UAState truth = rec.state;
        truth.dynamic = rec.counters_after;
        if (s.next_state != truth || s.state != rec.state) ++res.mismatches;
        ++res.samples;
      }
    if (k != ep.samples.size()) ++res.mismatches;
    ++res.sessions;
  }
  return res;
}

// ---------------------------------------------------------------------------
// Simulator calibration

struct RateCheck {
  std::string channel;
  double observed = 0.0;
  double expected = 0.0;
  double sigma = 0.0;
  std::int64_t trials = 0;
  double z() const { return sigma > 0 ? (observed - expected) / sigma : 0.0; }
};

namespace detail {
inline double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }
inline double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}
}  // namespace detail

/// Runs random-policy sessions until `interactions` exposures are observed
/// and compares click, follow and gift counts with the sum of the configured
/// per-exposure probabilities. Follow and gift are conditioned on a click.
/// Probabilities are recomputed here from the population and config.
inline std::vector<RateCheck> calibration_check(const SimConfig& cfg, std::int64_t interactions, std::uint64_t seed = 0) {
  Simulator sim(cfg);
  const auto& pop = sim.population();
  RankingPolicy policy;
  policy.kind = PolicyKind::random;
  Rng rng(derive_seed(seed, "oracle.calibration"));
  std::array<RateCheck, 3> rc = {RateCheck{"click"}, RateCheck{"follow"}, RateCheck{"gift"}};
  std::array<double, 3> var{};
  auto add = [&](std::size_t k, double p, bool hit) {
    rc[k].expected += p;
    var[k] += p * (1.0 - p);
    rc[k].observed += hit ? 1.0 : 0.0;
    rc[k].trials += 1;
  };
  const std::int64_t n_users = static_cast<std::int64_t>(pop.users.size());
  std::int64_t seen = 0;
  for (std::int64_t i = 0; seen < interactions; ++i) {
    EpisodeOptions eo;
    eo.explore_rng = &rng;
    const auto ep = run_episode(policy, sim, static_cast<UserId>(i % n_users), eo);
    for (const auto& req : ep.trace.requests)
      for (const auto& rec : req.exposures) {
        const UserId u = rec.state.user.user_id;
        const AuthorId a = rec.state.author.author_id;
        const auto& item = pop.items[static_cast<std::size_t>(rec.outcome.item_id)];
        const double aff = detail::dot(pop.users[static_cast<std::size_t>(u)].latent, pop.authors[static_cast<std::size_t>(a)].latent);
        const auto& c = rec.state.dynamic;
        const double p_click = detail::logistic(aff * cfg.affinity_temperature +
                                                cfg.engagement_bonus * std::log(1.0 + static_cast<double>(c.click_count)) +
                                                item.quality);
        add(0, p_click, rec.outcome.clicked);
        if (rec.outcome.clicked) {
          const double ramp = std::min(1.0, static_cast<double>(c.click_count + 1) / 3.0);
          const double p_follow = c.follow_flag ? 0.0 : cfg.follow_base * detail::logistic(aff) * ramp;
          add(1, p_follow, rec.outcome.followed);
          const bool fan = c.follow_flag == 1 || rec.outcome.followed;
          const double p_gift = fan ? cfg.gift_base * detail::logistic(aff) : 0.0;
          add(2, p_gift, rec.outcome.gift_amount > 0.0);
        }
        ++seen;
      }
  }
  for (std::size_t k = 0; k < 3; ++k) rc[k].sigma = std::sqrt(var[k]);
  return {rc.begin(), rc.end()};
}

// ---------------------------------------------------------------------------

struct SuiteOptions {
  SimConfig sim;
  std::int64_t asa_sessions = 10000;
  std::int64_t calibration_interactions = 100000;
  double calibration_sigmas = 3.0;
  std::uint64_t seed = 0;
  GradientOptions gradient;
  TabularOptions tabular;
};

/// All oracle checks as one flat list.
inline std::vector<Check> run_suite(const SuiteOptions& opt) {
  std::vector<Check> out = gradient_checks(opt.gradient);
  {
    const auto r = tabular_check(opt.tabular);
    for (Tower t : {Tower::click, Tower::watch}) {
      const auto i = static_cast<std::size_t>(t);
      const double bound = opt.tabular.tolerance * r.range[i];
      out.push_back(Check{"tabular." + std::string(tower_name(t)), r.pass && r.mae[i] <= bound, r.mae[i], bound,
                          "steps=" + std::to_string(r.steps)});
    }
  }
  {
    const auto r = asa_check(opt.sim, opt.asa_sessions, opt.seed);
    out.push_back(Check{"asa.mismatches", r.mismatches == 0, static_cast<double>(r.mismatches), 0.0,
                        "samples=" + std::to_string(r.samples)});
  }
  for (const auto& r : calibration_check(opt.sim, opt.calibration_interactions, opt.seed)) {
    out.push_back(Check{"calibration." + r.channel, std::abs(r.z()) <= opt.calibration_sigmas, r.z(),
                        opt.calibration_sigmas, "trials=" + std::to_string(r.trials)});
  }
  return out;
}

}  // namespace rliv::oracle
