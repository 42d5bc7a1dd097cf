#pragma once

// Synthetic environment with user/author latent affinities, a progressive
// click -> follow -> gift interaction model and a quitting mechanism whose
// hazard grows with consecutive requests without a click.
//
// Pair counters persist across sessions of the same user (lifelong) and are
// the ground truth the sample builder is checked against.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "rliv/domain.hpp"
#include "rliv/domain_json.hpp"
#include "rliv/error.hpp"
#include "rliv/nn/loss.hpp"
#include "rliv/rng.hpp"

namespace rliv {

struct SimConfig {
  std::int64_t n_users = 2000;
  std::int64_t n_authors = 200;
  std::int64_t items_per_author = 5;
  std::int64_t n_categories = 20;
  int latent_dim = 8;
  std::int64_t n_cohorts = 8;
  std::int64_t n_activity_tiers = 3;
  std::int64_t candidates_per_request = 60;
  std::int64_t exposure_k = 6;
  double affinity_temperature = 2.0;
  double engagement_bonus = 3.0;
  double quality_mean = -4.0;
  double quality_std = 0.5;
  double follow_base = 0.3;
  double gift_base = 0.3;
  double gift_log_mean = 2.0;
  double gift_log_std = 0.8;
  double gift_cap = 100.0;
  double watch_mean_seconds = 20.0;
  double max_watch_seconds = 60.0;
  std::int64_t quit_patience = 3;
  double quit_base = 0.4;
  std::int64_t max_requests = 50;
  std::uint64_t seed = 0;

  RewardScales reward_scales() const { return RewardScales{max_watch_seconds, gift_cap}; }

  void validate() const {
    auto positive = [](std::int64_t v, const char* name) {
      if (v <= 0) throw ValidationError(std::string("SimConfig.") + name + " must be positive");
    };
    auto prob = [](double v, const char* name) {
      if (!(v >= 0.0 && v <= 1.0)) throw ValidationError(std::string("SimConfig.") + name + " must be in [0, 1]");
    };
    positive(n_users, "n_users");
    positive(n_authors, "n_authors");
    positive(items_per_author, "items_per_author");
    positive(n_categories, "n_categories");
    positive(latent_dim, "latent_dim");
    positive(n_cohorts, "n_cohorts");
    positive(n_activity_tiers, "n_activity_tiers");
    positive(candidates_per_request, "candidates_per_request");
    positive(exposure_k, "exposure_k");
    positive(quit_patience, "quit_patience");
    positive(max_requests, "max_requests");
    prob(follow_base, "follow_base");
    prob(gift_base, "gift_base");
    prob(quit_base, "quit_base");
    if (candidates_per_request > n_authors * items_per_author)
      throw ValidationError("SimConfig.candidates_per_request exceeds the catalog size");
    if (exposure_k > candidates_per_request)
      throw ValidationError("SimConfig.exposure_k exceeds candidates_per_request");
    if (!(gift_cap > 0.0) || !(max_watch_seconds > 0.0))
      throw ValidationError("SimConfig.gift_cap and max_watch_seconds must be positive");
    if (!(watch_mean_seconds >= 0.0) || !(gift_log_std >= 0.0) || !(quality_std >= 0.0))
      throw ValidationError("SimConfig: scale parameters must be non-negative");
  }
};

struct SimUser {
  std::vector<double> latent;  // unit norm
  double activity = 1.0;
  std::int64_t cohort_id = 0;
  std::int64_t activity_tier = 0;
};

struct SimAuthor {
  std::vector<double> latent;  // unit norm
  std::vector<ItemId> items;
};

struct SimItem {
  AuthorId author_id = 0;
  CategoryId category_id = 0;
  double quality = 0.0;
};

struct Population {
  std::vector<SimUser> users;
  std::vector<SimAuthor> authors;
  std::vector<SimItem> items;

  friend bool operator==(const Population&, const Population&) = default;
};

namespace detail {
inline void normalize(std::vector<double>& v) {
  const double n = std::sqrt(std::inner_product(v.begin(), v.end(), v.begin(), 0.0));
  if (n > 0) for (double& x : v) x /= n;
  else v[0] = 1.0;
}
}  // namespace detail

inline bool operator==(const SimUser& a, const SimUser& b) {
  return a.latent == b.latent && a.activity == b.activity && a.cohort_id == b.cohort_id &&
         a.activity_tier == b.activity_tier;
}
inline bool operator==(const SimAuthor& a, const SimAuthor& b) { return a.latent == b.latent && a.items == b.items; }
inline bool operator==(const SimItem& a, const SimItem& b) {
  return a.author_id == b.author_id && a.category_id == b.category_id && a.quality == b.quality;
}

inline Population generate_population(const SimConfig& cfg) {
  cfg.validate();
  Population pop;
  Rng rng(derive_seed(cfg.seed, "population"));
  const int d = cfg.latent_dim;
  // Cohorts split users by the sign pattern of their latent vector, so the
  // cohort id carries coarse affinity information.
  const int cohort_bits = std::max(1, static_cast<int>(std::floor(std::log2(static_cast<double>(cfg.n_cohorts)))));
  pop.users.resize(static_cast<std::size_t>(cfg.n_users));
  for (auto& u : pop.users) {
    u.latent.resize(static_cast<std::size_t>(d));
    for (double& x : u.latent) x = rng.normal();
    detail::normalize(u.latent);
    u.activity = rng.uniform(0.5, 1.5);
    std::int64_t c = 0;
    for (int b = 0; b < cohort_bits && b < d; ++b) c = 2 * c + (u.latent[static_cast<std::size_t>(b)] > 0 ? 1 : 0);
    u.cohort_id = c % cfg.n_cohorts;
    u.activity_tier = std::min<std::int64_t>(cfg.n_activity_tiers - 1,
                                             static_cast<std::int64_t>((u.activity - 0.5) * static_cast<double>(cfg.n_activity_tiers)));
  }
  pop.authors.resize(static_cast<std::size_t>(cfg.n_authors));
  for (std::int64_t a = 0; a < cfg.n_authors; ++a) {
    auto& author = pop.authors[static_cast<std::size_t>(a)];
    author.latent.resize(static_cast<std::size_t>(d));
    for (double& x : author.latent) x = rng.normal();
    detail::normalize(author.latent);
    const CategoryId home = static_cast<CategoryId>(rng.below(static_cast<std::uint64_t>(cfg.n_categories)));
    for (std::int64_t k = 0; k < cfg.items_per_author; ++k) {
      SimItem item;
      item.author_id = a;
      item.category_id = (home + static_cast<CategoryId>(rng.below(3))) % cfg.n_categories;
      item.quality = cfg.quality_mean + cfg.quality_std * rng.normal();
      author.items.push_back(static_cast<ItemId>(pop.items.size()));
      pop.items.push_back(item);
    }
  }
  return pop;
}

/// Live state of one session. Holds the user's lifelong pair counters while
/// the session runs; Simulator::close_session commits them back.
struct SessionState {
  UserId user_id = 0;
  std::int64_t session_index = 0;
  std::int64_t request_index = 0;
  std::int64_t consecutive_misses = 0;
  bool alive = true;
  std::map<AuthorId, DynamicCounters> counters;
  Rng outcome_rng;
  Rng candidate_rng;
};

struct RequestResult {
  std::vector<InteractionOutcome> outcomes;
  std::vector<ExposureRecord> records;
  bool quit = false;    // user chose to leave
  bool ended = false;   // session over (quit or request cap)
};

class Simulator {
 public:
  /// `stream` separates the session streams of worlds that share a population
  /// (training and evaluation copies of the same seed).
  explicit Simulator(SimConfig cfg, std::uint64_t stream = 0)
      : cfg_(std::move(cfg)), stream_(stream), pop_(generate_population(cfg_)) {
    reset_world();
  }

  const SimConfig& config() const { return cfg_; }
  const Population& population() const { return pop_; }
  std::int64_t num_items() const { return static_cast<std::int64_t>(pop_.items.size()); }

  /// Forgets all lifelong counters and session counts (population unchanged).
  void reset_world() {
    world_counters_.assign(pop_.users.size(), {});
    sessions_started_.assign(pop_.users.size(), 0);
  }

  double affinity(UserId u, AuthorId a) const {
    const auto& x = pop_.users.at(static_cast<std::size_t>(u)).latent;
    const auto& y = pop_.authors.at(static_cast<std::size_t>(a)).latent;
    return std::inner_product(x.begin(), x.end(), y.begin(), 0.0);
  }

  double click_probability(UserId u, ItemId i, const DynamicCounters& c) const {
    const auto& item = pop_.items.at(static_cast<std::size_t>(i));
    return nn::sigmoid(affinity(u, item.author_id) * cfg_.affinity_temperature +
                       cfg_.engagement_bonus * std::log1p(static_cast<double>(c.click_count)) + item.quality);
  }

  /// Follow probability given a click, where `clicks_after` includes that click.
  double follow_probability(UserId u, AuthorId a, std::int64_t clicks_after, bool already_followed) const {
    if (already_followed) return 0.0;
    return cfg_.follow_base * nn::sigmoid(affinity(u, a)) *
           std::min(1.0, static_cast<double>(clicks_after) / 3.0);
  }

  double gift_probability(UserId u, AuthorId a, bool follow_flag) const {
    return follow_flag ? cfg_.gift_base * nn::sigmoid(affinity(u, a)) : 0.0;
  }

  double quit_probability(std::int64_t consecutive_misses) const {
    return std::min(1.0, cfg_.quit_base * static_cast<double>(consecutive_misses) /
                             static_cast<double>(cfg_.quit_patience));
  }

  SessionState reset_session(UserId u) {
    check_user(u);
    SessionState s;
    s.user_id = u;
    s.session_index = sessions_started_[static_cast<std::size_t>(u)]++;
    s.counters = world_counters_[static_cast<std::size_t>(u)];
    const std::uint64_t base = stream_ == 0 ? cfg_.seed : derive_seed(cfg_.seed, "stream", stream_);
    s.outcome_rng = Rng(derive_seed(base, "session.outcomes", static_cast<std::uint64_t>(u),
                                    static_cast<std::uint64_t>(s.session_index)));
    s.candidate_rng = Rng(derive_seed(base, "session.candidates", static_cast<std::uint64_t>(u),
                                      static_cast<std::uint64_t>(s.session_index)));
    return s;
  }

  void close_session(SessionState&& s) {
    check_user(s.user_id);
    world_counters_[static_cast<std::size_t>(s.user_id)] = std::move(s.counters);
    s.alive = false;
  }

  /// Candidate set of the next request: distinct items drawn uniformly from the catalog.
  std::vector<ItemId> sample_candidates(SessionState& s) const {
    const auto n = static_cast<std::uint64_t>(pop_.items.size());
    const auto m = static_cast<std::uint64_t>(cfg_.candidates_per_request);
    std::vector<ItemId> out;
    out.reserve(m);
    // Floyd's algorithm: m distinct draws from [0, n).
    std::vector<char> taken(n, 0);
    for (std::uint64_t j = n - m; j < n; ++j) {
      const std::uint64_t t = s.candidate_rng.below(j + 1);
      const std::uint64_t pick = taken[t] ? j : t;
      taken[pick] = 1;
      out.push_back(static_cast<ItemId>(pick));
    }
    return out;
  }

  RequestResult simulate_request(SessionState& s, std::span<const ItemId> exposed) {
    if (!s.alive) throw ContractError("simulate_request: session is not alive");
    if (exposed.empty()) throw ValidationError("simulate_request: empty exposure list");
    RequestResult result;
    bool any_click = false;
    for (ItemId i : exposed) {
      if (i < 0 || i >= num_items()) throw ValidationError("simulate_request: unknown item " + std::to_string(i));
      const auto& item = pop_.items[static_cast<std::size_t>(i)];
      const AuthorId a = item.author_id;
      DynamicCounters& c = s.counters[a];
      ExposureRecord rec;
      rec.state = make_state(s.user_id, i, c);

      InteractionOutcome o;
      o.item_id = i;
      o.author_id = a;
      auto& rng = s.outcome_rng;
      const double p_click = click_probability(s.user_id, i, c);
      // Every branch consumes a fixed number of draws so the stream position
      // depends only on the number of exposures.
      const double u_click = rng.uniform();
      const double u_watch = rng.uniform();
      const double u_follow = rng.uniform();
      const double u_gift = rng.uniform();
      const double z_gift = rng.normal();
      o.clicked = u_click < p_click;
      if (o.clicked) {
        any_click = true;
        c.click_count += 1;
        const double aff = affinity(s.user_id, a);
        const double mean = cfg_.watch_mean_seconds * pop_.users[static_cast<std::size_t>(s.user_id)].activity * (1.0 + aff);
        if (mean > 0.0) {
          const double u = std::max(u_watch, std::numeric_limits<double>::min());
          o.watch_seconds = std::min(cfg_.max_watch_seconds, -mean * std::log(u));
        }
        if (o.watch_seconds > 0.0) {
          c.watch_count += 1;
          c.cumulative_watch_seconds += o.watch_seconds;
        }
        if (u_follow < follow_probability(s.user_id, a, c.click_count, c.follow_flag == 1)) {
          o.followed = true;
          c.follow_flag = 1;
        }
        if (u_gift < gift_probability(s.user_id, a, c.follow_flag == 1)) {
          o.gift_amount = std::min(cfg_.gift_cap, std::exp(cfg_.gift_log_mean + cfg_.gift_log_std * z_gift));
          c.gift_count += 1;
          c.cumulative_gift_amount += o.gift_amount;
        }
      }
      rec.outcome = o;
      rec.counters_after = c;
      result.outcomes.push_back(o);
      result.records.push_back(std::move(rec));
    }
    s.consecutive_misses = any_click ? 0 : s.consecutive_misses + 1;
    const double u_quit = s.outcome_rng.uniform();
    result.quit = u_quit < quit_probability(s.consecutive_misses);
    s.request_index += 1;
    result.ended = result.quit || s.request_index >= cfg_.max_requests;
    if (result.ended) s.alive = false;
    return result;
  }

  DynamicCounters true_counters(const SessionState& s, const UAKey& key) const {
    if (key.user_id != s.user_id) return {};
    auto it = s.counters.find(key.author_id);
    return it == s.counters.end() ? DynamicCounters{} : it->second;
  }

  /// Lifelong counters of a pair outside any live session.
  DynamicCounters world_counters(const UAKey& key) const {
    check_user(key.user_id);
    const auto& m = world_counters_[static_cast<std::size_t>(key.user_id)];
    auto it = m.find(key.author_id);
    return it == m.end() ? DynamicCounters{} : it->second;
  }

  UAState make_state(UserId u, ItemId i, const DynamicCounters& c) const {
    const auto& user = pop_.users.at(static_cast<std::size_t>(u));
    const auto& item = pop_.items.at(static_cast<std::size_t>(i));
    UAState s;
    s.user = UserStatic{u, user.cohort_id, user.activity_tier};
    s.author = AuthorStatic{item.author_id, i, item.category_id};
    s.dynamic = c;
    return s;
  }

  std::vector<ItemRef> author_items(AuthorId a) const {
    std::vector<ItemRef> out;
    for (ItemId i : pop_.authors.at(static_cast<std::size_t>(a)).items)
      out.push_back(ItemRef{i, pop_.items[static_cast<std::size_t>(i)].category_id});
    return out;
  }

  nlohmann::json world_to_json() const {
    nlohmann::json users = nlohmann::json::array();
    for (std::size_t u = 0; u < world_counters_.size(); ++u) {
      if (world_counters_[u].empty() && sessions_started_[u] == 0) continue;
      nlohmann::json pairs = nlohmann::json::array();
      for (const auto& [a, c] : world_counters_[u]) pairs.push_back({{"author_id", a}, {"counters", c}});
      users.push_back({{"user_id", u}, {"sessions", sessions_started_[u]}, {"pairs", pairs}});
    }
    return users;
  }

  void world_from_json(const nlohmann::json& j) {
    reset_world();
    for (const auto& u : j) {
      const auto id = u.at("user_id").get<std::size_t>();
      check_user(static_cast<UserId>(id));
      sessions_started_[id] = u.at("sessions").get<std::int64_t>();
      for (const auto& p : u.at("pairs"))
        world_counters_[id][p.at("author_id").get<AuthorId>()] = p.at("counters").get<DynamicCounters>();
    }
  }

 private:
  void check_user(UserId u) const {
    if (u < 0 || u >= static_cast<UserId>(pop_.users.size()))
      throw ValidationError("unknown user " + std::to_string(u));
  }

  SimConfig cfg_;
  std::uint64_t stream_ = 0;
  Population pop_;
  std::vector<std::map<AuthorId, DynamicCounters>> world_counters_;
  std::vector<std::int64_t> sessions_started_;
};

}  // namespace rliv
