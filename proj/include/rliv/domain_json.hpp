#pragma once

// JSON encodings of the domain types. Field names are part of the JSON-lines
// interchange format and must stay stable.

#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include "json.hpp"
#include "rliv/domain.hpp"

namespace rliv {

using nlohmann::json;

inline void to_json(json& j, const UAKey& k) { j = json{{"user_id", k.user_id}, {"author_id", k.author_id}}; }
inline void from_json(const json& j, UAKey& k) {
  j.at("user_id").get_to(k.user_id);
  j.at("author_id").get_to(k.author_id);
}

inline void to_json(json& j, const DynamicCounters& c) {
  j = json{{"click_count", c.click_count},
           {"watch_count", c.watch_count},
           {"follow_flag", c.follow_flag},
           {"gift_count", c.gift_count},
           {"cumulative_watch_seconds", c.cumulative_watch_seconds},
           {"cumulative_gift_amount", c.cumulative_gift_amount}};
}
inline void from_json(const json& j, DynamicCounters& c) {
  j.at("click_count").get_to(c.click_count);
  j.at("watch_count").get_to(c.watch_count);
  j.at("follow_flag").get_to(c.follow_flag);
  j.at("gift_count").get_to(c.gift_count);
  j.at("cumulative_watch_seconds").get_to(c.cumulative_watch_seconds);
  j.at("cumulative_gift_amount").get_to(c.cumulative_gift_amount);
}

inline void to_json(json& j, const UserStatic& u) {
  j = json{{"user_id", u.user_id}, {"cohort_id", u.cohort_id}, {"activity_tier", u.activity_tier}};
}
inline void from_json(const json& j, UserStatic& u) {
  j.at("user_id").get_to(u.user_id);
  j.at("cohort_id").get_to(u.cohort_id);
  j.at("activity_tier").get_to(u.activity_tier);
}

inline void to_json(json& j, const AuthorStatic& a) {
  j = json{{"author_id", a.author_id}, {"item_id", a.item_id}, {"category_id", a.category_id}};
}
inline void from_json(const json& j, AuthorStatic& a) {
  j.at("author_id").get_to(a.author_id);
  j.at("item_id").get_to(a.item_id);
  j.at("category_id").get_to(a.category_id);
}

inline void to_json(json& j, const UAState& s) {
  j = json{{"user_static", s.user}, {"author_static", s.author}, {"dynamic", s.dynamic}};
}
inline void from_json(const json& j, UAState& s) {
  j.at("user_static").get_to(s.user);
  j.at("author_static").get_to(s.author);
  j.at("dynamic").get_to(s.dynamic);
}

inline void to_json(json& j, const RewardVector& r) {
  j = json{{"r_click", r.click},         {"r_watch", r.watch},
           {"r_follow", r.follow},       {"r_gift", r.gift},
           {"watch_seconds", r.watch_seconds}, {"gift_amount", r.gift_amount}};
}
inline void from_json(const json& j, RewardVector& r) {
  j.at("r_click").get_to(r.click);
  j.at("r_watch").get_to(r.watch);
  j.at("r_follow").get_to(r.follow);
  j.at("r_gift").get_to(r.gift);
  j.at("watch_seconds").get_to(r.watch_seconds);
  j.at("gift_amount").get_to(r.gift_amount);
}

inline void to_json(json& j, const ItemRef& i) { j = json{{"item_id", i.item_id}, {"category_id", i.category_id}}; }
inline void from_json(const json& j, ItemRef& i) {
  j.at("item_id").get_to(i.item_id);
  j.at("category_id").get_to(i.category_id);
}

inline void to_json(json& j, const TransitionSample& s) {
  j = json{{"key", s.key},           {"state", s.state},
           {"action_item", s.action_item}, {"reward", s.reward},
           {"next_state", s.next_state},   {"author_items", s.author_items},
           {"terminal", s.terminal}};
}
inline void from_json(const json& j, TransitionSample& s) {
  j.at("key").get_to(s.key);
  j.at("state").get_to(s.state);
  j.at("action_item").get_to(s.action_item);
  j.at("reward").get_to(s.reward);
  j.at("next_state").get_to(s.next_state);
  j.at("author_items").get_to(s.author_items);
  j.at("terminal").get_to(s.terminal);
}

inline void to_json(json& j, const LIVScores& s) {
  j = json{{"q_click", s.q_click}, {"q_watch", s.q_watch}, {"q_follow", s.q_follow}, {"q_gift", s.q_gift}};
}
inline void from_json(const json& j, LIVScores& s) {
  j.at("q_click").get_to(s.q_click);
  j.at("q_watch").get_to(s.q_watch);
  j.at("q_follow").get_to(s.q_follow);
  j.at("q_gift").get_to(s.q_gift);
}

inline void to_json(json& j, const InteractionOutcome& o) {
  j = json{{"item_id", o.item_id},     {"author_id", o.author_id},
           {"clicked", o.clicked},     {"watch_seconds", o.watch_seconds},
           {"followed", o.followed},   {"gift_amount", o.gift_amount}};
}
inline void from_json(const json& j, InteractionOutcome& o) {
  j.at("item_id").get_to(o.item_id);
  j.at("author_id").get_to(o.author_id);
  j.at("clicked").get_to(o.clicked);
  j.at("watch_seconds").get_to(o.watch_seconds);
  j.at("followed").get_to(o.followed);
  j.at("gift_amount").get_to(o.gift_amount);
}

inline void to_json(json& j, const ExposureRecord& e) {
  j = json{{"state", e.state}, {"outcome", e.outcome}, {"counters_after", e.counters_after}};
}
inline void from_json(const json& j, ExposureRecord& e) {
  j.at("state").get_to(e.state);
  j.at("outcome").get_to(e.outcome);
  j.at("counters_after").get_to(e.counters_after);
}

inline void to_json(json& j, const RequestRecord& r) {
  j = json{{"request_index", r.request_index}, {"exposures", r.exposures}, {"quit", r.quit}};
}
inline void from_json(const json& j, RequestRecord& r) {
  j.at("request_index").get_to(r.request_index);
  j.at("exposures").get_to(r.exposures);
  j.at("quit").get_to(r.quit);
}

inline void to_json(json& j, const SessionTrace& t) {
  j = json{{"user_id", t.user_id}, {"session_index", t.session_index}, {"requests", t.requests}};
}
inline void from_json(const json& j, SessionTrace& t) {
  j.at("user_id").get_to(t.user_id);
  j.at("session_index").get_to(t.session_index);
  j.at("requests").get_to(t.requests);
}

/// Writes one compact JSON record per line.
template <class Record>
void write_jsonl(std::ostream& os, const std::vector<Record>& records) {
  for (const auto& r : records) os << json(r).dump() << '\n';
}

/// Reads records until end of stream; blank lines are skipped.
template <class Record>
std::vector<Record> read_jsonl(std::istream& is) {
  std::vector<Record> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(json::parse(line).get<Record>());
    } catch (const json::exception& e) {
      throw ValidationError("jsonl line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace rliv
