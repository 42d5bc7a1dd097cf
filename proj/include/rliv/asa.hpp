#pragma once

// Training-sample construction: label joining, adjacent state approximation
// (next state built from the current counters and the observed rewards,
// without waiting for the pair's next real interaction) and the replay buffer.

#include <algorithm>
#include <cstdint>
#include <mutex>
#include <span>
#include <tuple>
#include <vector>

#include "json.hpp"
#include "rliv/domain.hpp"
#include "rliv/domain_json.hpp"
#include "rliv/error.hpp"
#include "rliv/rng.hpp"

namespace rliv {

inline constexpr std::int64_t kDefaultFeedbackWindowSeconds = 60;
inline constexpr std::size_t kDefaultReplayCapacity = 100'000;
inline constexpr std::size_t kMaxAuthorItems = 32;

struct ExposureEvent {
  UAKey key;
  UAState state;
  ItemId action_item = 0;
  std::int64_t timestamp = 0;
};

enum class FeedbackKind { click, watch, follow, gift };

struct FeedbackEvent {
  UAKey key;
  ItemId item_id = 0;
  std::int64_t timestamp = 0;
  FeedbackKind kind = FeedbackKind::click;
  double value = 0.0;  // watch seconds or gift amount; ignored for click/follow
};

struct LabeledEvent {
  UAKey key;
  UAState state_at_exposure;
  ItemId action_item = 0;
  RewardVector reward;
  std::int64_t timestamp = 0;
};

struct JoinStats {
  std::int64_t joined = 0;
  std::int64_t dropped_early = 0;  // feedback stamped before its exposure (clock skew)
  std::int64_t outside_window = 0;
};

/// Merges all feedback for (key, action_item) that arrives within
/// [exposure, exposure + window_seconds] into one reward vector.
inline LabeledEvent join_labels(const ExposureEvent& exposure, std::span<const FeedbackEvent> feedback,
                                std::int64_t window_seconds = kDefaultFeedbackWindowSeconds,
                                const RewardScales& scales = {}, JoinStats* stats = nullptr) {
  if (window_seconds < 0) throw ValidationError("join_labels: negative window");
  std::vector<const FeedbackEvent*> matched;
  for (const auto& f : feedback) {
    if (f.key != exposure.key || f.item_id != exposure.action_item) continue;
    const std::int64_t dt = f.timestamp - exposure.timestamp;
    if (dt < 0) {
      if (stats) ++stats->dropped_early;
      continue;
    }
    if (dt > window_seconds) {
      if (stats) ++stats->outside_window;
      continue;
    }
    matched.push_back(&f);
  }
  // Canonical order makes the floating-point sums independent of arrival order.
  std::sort(matched.begin(), matched.end(), [](const FeedbackEvent* a, const FeedbackEvent* b) {
    return std::tuple(a->timestamp, static_cast<int>(a->kind), a->value) <
           std::tuple(b->timestamp, static_cast<int>(b->kind), b->value);
  });
  InteractionOutcome o;
  o.item_id = exposure.action_item;
  o.author_id = exposure.key.author_id;
  for (const auto* f : matched) {
    switch (f->kind) {
      case FeedbackKind::click: o.clicked = true; break;
      case FeedbackKind::watch: o.watch_seconds += f->value; break;
      case FeedbackKind::follow: o.followed = true; break;
      case FeedbackKind::gift: o.gift_amount += f->value; break;
    }
  }
  if (stats) stats->joined += static_cast<std::int64_t>(matched.size());
  return LabeledEvent{exposure.key, exposure.state, exposure.action_item, reward_from_feedback(o, scales),
                      exposure.timestamp};
}

/// Next state of the same pair: statics unchanged, each counter incremented
/// iff its own channel reward is positive (follow capped at 1), accumulators
/// advanced by the raw watch seconds and gift amount.
inline UAState approximate_next_state(const UAState& state, const RewardVector& reward) {
  UAState next = state;
  auto& d = next.dynamic;
  if (reward.click > 0) d.click_count += 1;
  if (reward.watch > 0) {
    d.watch_count += 1;
    d.cumulative_watch_seconds += reward.watch_seconds;
  }
  if (reward.follow > 0) d.follow_flag = 1;
  if (reward.gift > 0) {
    d.gift_count += 1;
    d.cumulative_gift_amount += reward.gift_amount;
  }
  return next;
}

inline TransitionSample build_sample(const LabeledEvent& event, std::vector<ItemRef> author_items, bool terminal) {
  if (author_items.empty() && !terminal)
    throw ValidationError("build_sample: author_items empty on a non-terminal sample");
  TransitionSample s;
  s.key = event.key;
  s.state = event.state_at_exposure;
  s.action_item = event.action_item;
  s.reward = event.reward;
  s.next_state = approximate_next_state(event.state_at_exposure, event.reward);
  s.author_items = std::move(author_items);
  s.terminal = terminal;
  return s;
}

/// Caps an author's item list at `cap` entries by seeded subsampling,
/// keeping the original relative order.
inline std::vector<ItemRef> cap_author_items(std::vector<ItemRef> items, Rng& rng,
                                             std::size_t cap = kMaxAuthorItems) {
  if (items.size() <= cap) return items;
  for (std::size_t i = 0; i < cap; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.below(items.size() - i));
    std::swap(items[i], items[j]);
  }
  items.resize(cap);
  std::sort(items.begin(), items.end(), [](const ItemRef& a, const ItemRef& b) { return a.item_id < b.item_id; });
  return items;
}

/// Bounded FIFO store of transition samples with uniform sampling with
/// replacement. Pushes and samples are serialized by a mutex, so a sampled
/// batch never sees a half-inserted record.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity = kDefaultReplayCapacity, std::uint64_t seed = 0)
      : capacity_(capacity), rng_(seed) {
    if (capacity == 0) throw ConfigError("ReplayBuffer: capacity must be positive");
    storage_.reserve(std::min<std::size_t>(capacity, 4096));
  }

  ReplayBuffer(const ReplayBuffer& o) : capacity_(o.capacity_), head_(o.head_), rng_(o.rng_), storage_(o.storage_) {}

  std::size_t size() const {
    std::lock_guard lock(mu_);
    return storage_.size();
  }
  std::size_t capacity() const { return capacity_; }

  void push(TransitionSample sample) {
    std::lock_guard lock(mu_);
    if (storage_.size() < capacity_) {
      storage_.push_back(std::move(sample));
    } else {
      storage_[head_] = std::move(sample);
      head_ = (head_ + 1) % capacity_;
    }
  }

  std::vector<TransitionSample> sample(std::size_t batch_size) {
    std::lock_guard lock(mu_);
    if (storage_.empty()) throw UnavailableError("ReplayBuffer::sample: buffer is empty");
    std::vector<TransitionSample> out;
    out.reserve(batch_size);
    for (std::size_t i = 0; i < batch_size; ++i) out.push_back(storage_[rng_.below(storage_.size())]);
    return out;
  }

  /// Samples in insertion order, oldest first.
  std::vector<TransitionSample> contents() const {
    std::lock_guard lock(mu_);
    std::vector<TransitionSample> out;
    out.reserve(storage_.size());
    for (std::size_t i = 0; i < storage_.size(); ++i) out.push_back(storage_[(head_ + i) % storage_.size()]);
    return out;
  }

  nlohmann::json to_json() const {
    std::lock_guard lock(mu_);
    return nlohmann::json{{"capacity", capacity_}, {"head", head_}, {"rng", rng_.serialize()}, {"samples", storage_}};
  }

  /// Raw ring layout (storage order, not insertion order).
  struct Snapshot {
    std::size_t capacity = 0;
    std::size_t head = 0;
    std::string rng;
    std::vector<TransitionSample> storage;
  };

  Snapshot snapshot() const {
    std::lock_guard lock(mu_);
    return Snapshot{capacity_, head_, rng_.serialize(), storage_};
  }

  static ReplayBuffer from_snapshot(Snapshot s) {
    ReplayBuffer b(s.capacity);
    if (s.storage.size() > s.capacity || (s.head != 0 && s.head >= s.storage.size()))
      throw IntegrityError("ReplayBuffer: inconsistent snapshot");
    b.head_ = s.head;
    b.rng_.deserialize(s.rng);
    b.storage_ = std::move(s.storage);
    return b;
  }

  ReplayBuffer& operator=(ReplayBuffer&& o) noexcept {
    capacity_ = o.capacity_;
    head_ = o.head_;
    rng_ = o.rng_;
    storage_ = std::move(o.storage_);
    return *this;
  }

  static ReplayBuffer from_json(const nlohmann::json& j) {
    ReplayBuffer b(j.at("capacity").get<std::size_t>());
    b.head_ = j.at("head").get<std::size_t>();
    b.rng_.deserialize(j.at("rng").get<std::string>());
    b.storage_ = j.at("samples").get<std::vector<TransitionSample>>();
    return b;
  }

 private:
  std::size_t capacity_;
  std::size_t head_ = 0;  // oldest element once full
  Rng rng_;
  std::vector<TransitionSample> storage_;
  mutable std::mutex mu_;
};

}  // namespace rliv
