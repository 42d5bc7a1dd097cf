#pragma once

// Policy rollouts against the simulator and the offline metrics.

#include <algorithm>
#include <cstdint>
#include <map>
#include <set>
#include <span>
#include <thread>
#include <utility>
#include <vector>

#include "rliv/asa.hpp"
#include "rliv/domain.hpp"
#include "rliv/error.hpp"
#include "rliv/liv_model.hpp"
#include "rliv/ranker.hpp"
#include "rliv/sim.hpp"
#include "rliv/stats.hpp"

namespace rliv {

using Exposure = std::pair<AuthorId, CategoryId>;

struct SessionMetrics {
  UserId user_id = 0;
  std::int64_t session_index = 0;
  std::int64_t session_length = 0;
  double watch_time = 0.0;
  double ctr = 0.0;
  std::vector<Exposure> exposures;
  std::int64_t clicks = 0;
  std::int64_t new_follows = 0;
  double gift_total = 0.0;
};

/// Distinct categories divided by the number of exposures.
inline double diversity(std::span<const Exposure> exposures) {
  if (exposures.empty()) throw ValidationError("diversity: no exposures");
  std::set<CategoryId> cats;
  for (const auto& e : exposures) cats.insert(e.second);
  return static_cast<double>(cats.size()) / static_cast<double>(exposures.size());
}

inline SessionMetrics metrics_from_trace(const SessionTrace& t) {
  SessionMetrics m;
  m.user_id = t.user_id;
  m.session_index = t.session_index;
  m.session_length = t.length();
  for (const auto& req : t.requests)
    for (const auto& e : req.exposures) {
      m.exposures.emplace_back(e.state.author.author_id, e.state.author.category_id);
      m.watch_time += e.outcome.watch_seconds;
      m.clicks += e.outcome.clicked ? 1 : 0;
      m.new_follows += e.outcome.followed ? 1 : 0;
      m.gift_total += e.outcome.gift_amount;
    }
  m.ctr = m.exposures.empty() ? 0.0 : static_cast<double>(m.clicks) / static_cast<double>(m.exposures.size());
  return m;
}

struct EpisodeOptions {
  double epsilon = 0.0;         // per-slot exploration probability
  Rng* explore_rng = nullptr;   // exploration and random-policy draws
  ReplayBuffer* buffer = nullptr;
  Rng* item_cap_rng = nullptr;  // subsampling of large author item sets
};

struct Episode {
  SessionTrace trace;
  SessionMetrics metrics;
  std::vector<TransitionSample> samples;
};

/// Fills K slots from the greedy order, replacing each slot with a uniformly
/// drawn unused candidate with probability epsilon.
inline std::vector<std::size_t> explore_slate(std::vector<std::size_t> greedy_order, std::size_t k, double epsilon,
                                              Rng* rng) {
  if (epsilon <= 0.0) {
    greedy_order.resize(k);
    return greedy_order;
  }
  if (!rng) throw ContractError("explore_slate: epsilon > 0 needs an rng");
  std::vector<char> used(greedy_order.size(), 0);
  std::vector<std::size_t> out;
  std::size_t cursor = 0;
  for (std::size_t slot = 0; slot < k; ++slot) {
    if (rng->uniform() < epsilon) {
      std::vector<std::size_t> free;
      for (std::size_t i = 0; i < greedy_order.size(); ++i)
        if (!used[i]) free.push_back(i);
      const std::size_t pick = free[rng->below(free.size())];
      used[pick] = 1;
      out.push_back(greedy_order[pick]);
    } else {
      while (used[cursor]) ++cursor;
      used[cursor] = 1;
      out.push_back(greedy_order[cursor]);
    }
  }
  return out;
}

/// One session: rank sampled candidates, expose the top K, step the
/// simulator until the user quits or the request cap is hit. When a buffer
/// is given, every exposure becomes an ASA sample.
inline Episode run_episode(const RankingPolicy& policy, Simulator& sim, UserId user, const EpisodeOptions& opt = {}) {
  if (policy.kind == PolicyKind::random && !opt.explore_rng) throw ContractError("run_episode: random policy needs an rng");
  Rng dummy;
  Rng& score_rng = opt.explore_rng ? *opt.explore_rng : dummy;
  const auto k = static_cast<std::size_t>(sim.config().exposure_k);
  const RewardScales scales = sim.config().reward_scales();
  Episode ep;
  SessionState s = sim.reset_session(user);
  ep.trace.user_id = user;
  ep.trace.session_index = s.session_index;
  std::int64_t timestamp = 0;
  while (s.alive) {
    const auto cands = sim.sample_candidates(s);
    std::vector<UAState> states;
    states.reserve(cands.size());
    for (ItemId i : cands) {
      const AuthorId a = sim.population().items[static_cast<std::size_t>(i)].author_id;
      states.push_back(sim.make_state(user, i, sim.true_counters(s, make_ua_key(user, a))));
    }
    const auto scores = score_candidates(policy, states, score_rng);
    const auto order = top_k(scores, cands, cands.size());
    const auto slate = explore_slate(order, k, opt.epsilon, opt.explore_rng);
    std::vector<ItemId> exposed;
    for (std::size_t idx : slate) exposed.push_back(cands[idx]);
    auto res = sim.simulate_request(s, exposed);
    RequestRecord rr;
    rr.request_index = s.request_index - 1;
    rr.quit = res.quit;
    rr.exposures = std::move(res.records);
    if (opt.buffer) {
      for (const auto& rec : rr.exposures) {
        LabeledEvent ev;
        ev.key = rec.state.key();
        ev.state_at_exposure = rec.state;
        ev.action_item = rec.outcome.item_id;
        ev.reward = reward_from_feedback(rec.outcome, scales);
        ev.timestamp = timestamp++;
        auto items = sim.author_items(rec.outcome.author_id);
        if (opt.item_cap_rng) items = cap_author_items(std::move(items), *opt.item_cap_rng);
        auto sample = build_sample(ev, std::move(items), /*terminal=*/false);
        opt.buffer->push(sample);
        ep.samples.push_back(std::move(sample));
      }
    }
    ep.trace.requests.push_back(std::move(rr));
  }
  sim.close_session(std::move(s));
  ep.metrics = metrics_from_trace(ep.trace);
  return ep;
}

struct EpochMetrics {
  double session_length = 0.0;
  double watch_time = 0.0;
  double ctr = 0.0;
  double diversity = 0.0;
  double new_fans = 0.0;
  double gift_total = 0.0;

  static constexpr std::array<const char*, 6> kNames = {"session_length", "watch_time", "ctr",
                                                         "diversity", "new_fans", "gift_total"};
  double get(std::size_t i) const {
    const std::array<double, 6> v = {session_length, watch_time, ctr, diversity, new_fans, gift_total};
    return v[i];
  }
  void set(std::size_t i, double x) {
    std::array<double*, 6> v = {&session_length, &watch_time, &ctr, &diversity, &new_fans, &gift_total};
    *v[i] = x;
  }
};

/// Per-session means, reduced in session order.
inline EpochMetrics summarize(std::span<const SessionMetrics> sessions) {
  EpochMetrics m;
  if (sessions.empty()) return m;
  for (const auto& s : sessions) {
    m.session_length += static_cast<double>(s.session_length);
    m.watch_time += s.watch_time;
    m.ctr += s.ctr;
    m.diversity += diversity(s.exposures);
    m.new_fans += static_cast<double>(s.new_follows);
    m.gift_total += s.gift_total;
  }
  const double n = static_cast<double>(sessions.size());
  for (std::size_t i = 0; i < EpochMetrics::kNames.size(); ++i) m.set(i, m.get(i) / n);
  return m;
}

struct EvalOptions {
  std::int64_t n_sessions = 100;
  std::int64_t n_users = 0;   // 0: every user; sessions cycle over users [0, n_users)
  int parallel = 1;
  std::uint64_t seed = 0;     // random-policy stream
  bool keep_traces = false;
};

struct EvalResult {
  std::vector<SessionMetrics> sessions;
  std::vector<SessionTrace> traces;  // filled when keep_traces
  EpochMetrics summary;
};

/// Greedy evaluation on a fresh world. Session i belongs to user
/// i mod n_users; each user's sessions run in order on one worker, so the
/// result is independent of the worker count.
inline EvalResult evaluate(const RankingPolicy& policy, Simulator& sim, const EvalOptions& opt) {
  if (opt.n_sessions < 1) throw ValidationError("evaluate: n_sessions must be >= 1");
  if (opt.parallel < 1) throw ValidationError("evaluate: parallel must be >= 1");
  policy.validate();
  const std::int64_t n_pop = static_cast<std::int64_t>(sim.population().users.size());
  const std::int64_t n_users = opt.n_users > 0 ? std::min(opt.n_users, n_pop) : n_pop;
  sim.reset_world();
  EvalResult out;
  out.sessions.resize(static_cast<std::size_t>(opt.n_sessions));
  if (opt.keep_traces) out.traces.resize(out.sessions.size());

  auto work = [&](int worker, int workers) {
    for (std::int64_t u = worker; u < n_users; u += workers) {
      Rng rng(derive_seed(opt.seed, "eval.policy", static_cast<std::uint64_t>(u)));
      for (std::int64_t i = u; i < opt.n_sessions; i += n_users) {
        EpisodeOptions eo;
        eo.explore_rng = &rng;
        auto ep = run_episode(policy, sim, static_cast<UserId>(u), eo);
        out.sessions[static_cast<std::size_t>(i)] = std::move(ep.metrics);
        if (opt.keep_traces) out.traces[static_cast<std::size_t>(i)] = std::move(ep.trace);
      }
    }
  };
  const int workers = static_cast<int>(std::min<std::int64_t>(opt.parallel, n_users));
  if (workers <= 1) {
    work(0, 1);
  } else {
    std::vector<std::exception_ptr> errors(static_cast<std::size_t>(workers));
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w)
      pool.emplace_back([&, w] {
        try {
          work(w, workers);
        } catch (...) {
          errors[static_cast<std::size_t>(w)] = std::current_exception();
        }
      });
    for (auto& t : pool) t.join();
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
  }
  out.summary = summarize(out.sessions);
  return out;
}

// ---------------------------------------------------------------------------

struct GiftPair {
  UAKey key;
  double q_gift = 0.0;
  double realized_gift = 0.0;
};

/// Pairs with at least one click in the corpus: q_gift at the first click
/// exposure against the pair's total realized gift amount.
inline std::vector<GiftPair> gift_value_pairs(const LivModel<float>& model, std::span<const SessionTrace> corpus) {
  if (!model.tower_active(Tower::gift)) throw ContractError("gift_value_pairs: model has no gift tower");
  std::map<UAKey, std::size_t> index;
  std::vector<GiftPair> pairs;
  std::vector<UAState> first;
  std::map<UAKey, double> totals;
  for (const auto& t : corpus)
    for (const auto& r : t.requests)
      for (const auto& e : r.exposures) {
        const UAKey key = e.state.key();
        totals[key] += e.outcome.gift_amount;
        if (!e.outcome.clicked || index.contains(key)) continue;
        index.emplace(key, pairs.size());
        pairs.push_back(GiftPair{key, 0.0, 0.0});
        first.push_back(e.state);
      }
  const auto scores = model.score(first);
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    pairs[i].q_gift = scores[i][Tower::gift];
    pairs[i].realized_gift = totals[pairs[i].key];
  }
  return pairs;
}

/// Spearman correlation between predicted and realized gift value.
inline double gift_value_correlation(std::span<const GiftPair> pairs) {
  std::vector<double> q, g;
  for (const auto& p : pairs) {
    q.push_back(p.q_gift);
    g.push_back(p.realized_gift);
  }
  std::set<double> distinct(g.begin(), g.end());
  if (distinct.size() < 2) throw UnavailableError("gift_value_correlation: fewer than two distinct realized gift totals");
  return stats::spearman(q, g);
}

}  // namespace rliv
