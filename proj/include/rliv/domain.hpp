#pragma once

// Core value types shared by the simulator, sample builder, models and harness.

#include <algorithm>
#include <array>
#include <compare>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "rliv/error.hpp"

namespace rliv {

using UserId = std::int64_t;
using AuthorId = std::int64_t;
using ItemId = std::int64_t;
using CategoryId = std::int64_t;

/// The four feedback labels, one critic tower each.
enum class Tower : int { click = 0, watch = 1, follow = 2, gift = 3 };
inline constexpr std::size_t kNumTowers = 4;
inline constexpr std::array<Tower, kNumTowers> kAllTowers = {Tower::click, Tower::watch, Tower::follow,
                                                             Tower::gift};

inline constexpr std::string_view tower_name(Tower t) {
  constexpr std::array<std::string_view, kNumTowers> names = {"click", "watch", "follow", "gift"};
  return names[static_cast<std::size_t>(t)];
}

inline Tower tower_from_name(std::string_view s) {
  for (Tower t : kAllTowers)
    if (tower_name(t) == s) return t;
  throw ValidationError("unknown tower '" + std::string(s) + "'");
}

struct UAKey {
  UserId user_id = 0;
  AuthorId author_id = 0;

  friend auto operator<=>(const UAKey&, const UAKey&) = default;
};

inline UAKey make_ua_key(UserId user_id, AuthorId author_id) {
  if (user_id < 0 || author_id < 0) throw ValidationError("make_ua_key: ids must be non-negative");
  return UAKey{user_id, author_id};
}

/// Per-pair interaction counters (the dynamic part of the state).
struct DynamicCounters {
  std::int64_t click_count = 0;
  std::int64_t watch_count = 0;
  std::int64_t follow_flag = 0;  // 0 or 1
  std::int64_t gift_count = 0;
  double cumulative_watch_seconds = 0.0;
  double cumulative_gift_amount = 0.0;

  friend bool operator==(const DynamicCounters&, const DynamicCounters&) = default;
};

struct UserStatic {
  UserId user_id = 0;
  std::int64_t cohort_id = 0;
  std::int64_t activity_tier = 0;

  friend bool operator==(const UserStatic&, const UserStatic&) = default;
};

struct AuthorStatic {
  AuthorId author_id = 0;
  ItemId item_id = 0;
  CategoryId category_id = 0;

  friend bool operator==(const AuthorStatic&, const AuthorStatic&) = default;
};

struct UAState {
  UserStatic user;
  AuthorStatic author;
  DynamicCounters dynamic;

  UAKey key() const { return UAKey{user.user_id, author.author_id}; }

  friend bool operator==(const UAState&, const UAState&) = default;
};

/// Normalized per-channel rewards. The raw watch seconds and gift amount ride
/// along so the next-state accumulators can be rebuilt without rounding.
struct RewardVector {
  double click = 0.0;   // {0, 1}
  double watch = 0.0;   // watch seconds / max watch seconds, in [0, 1]
  double follow = 0.0;  // {0, 1}
  double gift = 0.0;    // gift amount / gift cap, in [0, 1]
  double watch_seconds = 0.0;
  double gift_amount = 0.0;

  double operator[](Tower t) const {
    switch (t) {
      case Tower::click: return click;
      case Tower::watch: return watch;
      case Tower::follow: return follow;
      case Tower::gift: return gift;
    }
    return 0.0;
  }

  friend bool operator==(const RewardVector&, const RewardVector&) = default;
};

struct ItemRef {
  ItemId item_id = 0;
  CategoryId category_id = 0;

  friend bool operator==(const ItemRef&, const ItemRef&) = default;
};

/// (s, a, r, s') with the author's item set frozen at sample time for the
/// Bellman max.
struct TransitionSample {
  UAKey key;
  UAState state;
  ItemId action_item = 0;
  RewardVector reward;
  UAState next_state;
  std::vector<ItemRef> author_items;
  bool terminal = false;

  friend bool operator==(const TransitionSample&, const TransitionSample&) = default;
};

struct LIVScores {
  double q_click = 0.0;
  double q_watch = 0.0;
  double q_follow = 0.0;
  double q_gift = 0.0;

  double& operator[](Tower t) {
    switch (t) {
      case Tower::click: return q_click;
      case Tower::watch: return q_watch;
      case Tower::follow: return q_follow;
      case Tower::gift: return q_gift;
    }
    return q_click;
  }
  double operator[](Tower t) const { return const_cast<LIVScores&>(*this)[t]; }

  friend bool operator==(const LIVScores&, const LIVScores&) = default;
};

/// What the environment reports for one exposed item.
struct InteractionOutcome {
  ItemId item_id = 0;
  AuthorId author_id = 0;
  bool clicked = false;
  double watch_seconds = 0.0;
  bool followed = false;
  double gift_amount = 0.0;

  friend bool operator==(const InteractionOutcome&, const InteractionOutcome&) = default;
};

struct RewardScales {
  double max_watch_seconds = 60.0;
  double gift_cap = 100.0;
};

inline RewardVector reward_from_feedback(const InteractionOutcome& o, const RewardScales& scales = {}) {
  if (o.watch_seconds < 0.0) throw ValidationError("reward_from_feedback: negative watch time");
  if (o.gift_amount < 0.0) throw ValidationError("reward_from_feedback: negative gift amount");
  RewardVector r;
  r.click = o.clicked ? 1.0 : 0.0;
  r.watch = std::min(o.watch_seconds / scales.max_watch_seconds, 1.0);
  r.follow = o.followed ? 1.0 : 0.0;
  r.gift = std::min(o.gift_amount / scales.gift_cap, 1.0);
  r.watch_seconds = o.watch_seconds;
  r.gift_amount = o.gift_amount;
  return r;
}

/// One exposed item inside a simulated request, with ground-truth counters
/// of the pair before and after the interaction.
struct ExposureRecord {
  UAState state;  // state at exposure (counters before)
  InteractionOutcome outcome;
  DynamicCounters counters_after;

  friend bool operator==(const ExposureRecord&, const ExposureRecord&) = default;
};

struct RequestRecord {
  std::int64_t request_index = 0;
  std::vector<ExposureRecord> exposures;
  bool quit = false;

  friend bool operator==(const RequestRecord&, const RequestRecord&) = default;
};

/// Ordered record of one simulated session.
struct SessionTrace {
  UserId user_id = 0;
  std::int64_t session_index = 0;
  std::vector<RequestRecord> requests;

  std::int64_t length() const { return static_cast<std::int64_t>(requests.size()); }

  friend bool operator==(const SessionTrace&, const SessionTrace&) = default;
};

}  // namespace rliv
