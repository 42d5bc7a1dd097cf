#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <vector>

#include "rliv/asa.hpp"
#include "rliv/oracles.hpp"

using namespace rliv;

namespace {

ExposureEvent exposure_at(std::int64_t t) {
  ExposureEvent e;
  e.key = {1, 2};
  e.state.user = {1, 0, 0};
  e.state.author = {2, 20, 3};
  e.action_item = 20;
  e.timestamp = t;
  return e;
}

FeedbackEvent fb(FeedbackKind kind, std::int64_t t, double value = 0.0, ItemId item = 20) {
  return FeedbackEvent{{1, 2}, item, t, kind, value};
}

TransitionSample tagged(std::int64_t tag) {
  TransitionSample s;
  s.action_item = tag;
  s.terminal = true;
  return s;
}

}  // namespace

TEST(JoinLabels, EmptyFeedbackGivesZeroReward) {
  const auto ev = join_labels(exposure_at(100), {});
  EXPECT_EQ(ev.reward, RewardVector{});
  EXPECT_EQ(ev.timestamp, 100);
}

TEST(JoinLabels, MergesInsideWindow) {
  const std::vector<FeedbackEvent> f = {fb(FeedbackKind::click, 102), fb(FeedbackKind::follow, 130),
                                        fb(FeedbackKind::watch, 103, 30.0)};
  const auto ev = join_labels(exposure_at(100), f, 60);
  EXPECT_EQ(ev.reward.click, 1.0);
  EXPECT_EQ(ev.reward.follow, 1.0);
  EXPECT_DOUBLE_EQ(ev.reward.watch, 0.5);
}

TEST(JoinLabels, ExcludesLateEarlyAndForeignFeedback) {
  JoinStats st;
  const std::vector<FeedbackEvent> f = {fb(FeedbackKind::follow, 190), fb(FeedbackKind::click, 95),
                                        fb(FeedbackKind::gift, 110, 5.0, /*item=*/21), fb(FeedbackKind::click, 160)};
  const auto ev = join_labels(exposure_at(100), f, 60, {}, &st);
  EXPECT_EQ(ev.reward.follow, 0.0);
  EXPECT_EQ(ev.reward.gift, 0.0);
  EXPECT_EQ(ev.reward.click, 1.0);  // t+60 is inside the closed window
  EXPECT_EQ(st.outside_window, 1);
  EXPECT_EQ(st.dropped_early, 1);
  EXPECT_EQ(st.joined, 1);
  EXPECT_THROW(join_labels(exposure_at(0), f, -1), ValidationError);
}

TEST(JoinLabels, ArrivalOrderDoesNotChangeSums) {
  std::vector<FeedbackEvent> f = {fb(FeedbackKind::gift, 101, 0.1), fb(FeedbackKind::gift, 102, 0.2),
                                  fb(FeedbackKind::gift, 103, 0.3)};
  const auto a = join_labels(exposure_at(100), f);
  std::swap(f[0], f[2]);
  const auto b = join_labels(exposure_at(100), f);
  EXPECT_EQ(a.reward.gift_amount, b.reward.gift_amount);
}

TEST(ApproximateNextState, Examples) {
  UAState s;
  s.dynamic.click_count = 3;
  RewardVector r;
  r.click = 1;
  EXPECT_EQ(approximate_next_state(s, r).dynamic.click_count, 4);
  EXPECT_EQ(approximate_next_state(s, RewardVector{}), s);
  s.dynamic.follow_flag = 1;
  r.follow = 1;
  EXPECT_EQ(approximate_next_state(s, r).dynamic.follow_flag, 1);
}

TEST(ApproximateNextState, AccumulatesRawAmounts) {
  UAState s;
  s.dynamic.cumulative_watch_seconds = 10.0;
  InteractionOutcome o{1, 1, true, 12.5, false, 3.0};
  const auto n = approximate_next_state(s, reward_from_feedback(o));
  EXPECT_EQ(n.dynamic.watch_count, 1);
  EXPECT_EQ(n.dynamic.cumulative_watch_seconds, 22.5);
  EXPECT_EQ(n.dynamic.gift_count, 1);
  EXPECT_EQ(n.dynamic.cumulative_gift_amount, 3.0);
}

TEST(BuildSample, OnlyDynamicCountersChange) {
  LabeledEvent ev;
  ev.key = {1, 2};
  ev.state_at_exposure.user = {1, 1, 1};
  ev.state_at_exposure.author = {2, 7, 4};
  ev.reward.click = 1;
  const auto s = build_sample(ev, {{7, 4}, {8, 5}}, false);
  EXPECT_EQ(s.next_state.user, s.state.user);
  EXPECT_EQ(s.next_state.author, s.state.author);
  EXPECT_NE(s.next_state.dynamic, s.state.dynamic);
  EXPECT_FALSE(s.terminal);
}

TEST(BuildSample, TerminalAndEmptyItems) {
  LabeledEvent ev;
  EXPECT_TRUE(build_sample(ev, {}, true).terminal);
  EXPECT_THROW(build_sample(ev, {}, false), ValidationError);
}

TEST(CapAuthorItems, KeepsSmallListsAndSubsamplesLargeOnes) {
  Rng rng(1);
  std::vector<ItemRef> few = {{1, 0}, {2, 0}};
  EXPECT_EQ(cap_author_items(few, rng), few);
  std::vector<ItemRef> many;
  for (ItemId i = 0; i < 100; ++i) many.push_back({i, i % 4});
  const auto capped = cap_author_items(many, rng, 10);
  ASSERT_EQ(capped.size(), 10u);
  EXPECT_TRUE(std::is_sorted(capped.begin(), capped.end(),
                             [](const ItemRef& a, const ItemRef& b) { return a.item_id < b.item_id; }));
}

TEST(ReplayBuffer, PushAndEviction) {
  ReplayBuffer b(2);
  b.push(tagged(1));
  EXPECT_EQ(b.size(), 1u);
  b.push(tagged(2));
  b.push(tagged(3));
  const auto c = b.contents();
  ASSERT_EQ(c.size(), 2u);
  EXPECT_EQ(c[0].action_item, 2);
  EXPECT_EQ(c[1].action_item, 3);
  EXPECT_THROW(ReplayBuffer(0), ConfigError);
}

TEST(ReplayBuffer, SizeIsBoundedByCapacity) {
  ReplayBuffer b(1000);
  for (int i = 0; i < 100'000; ++i) b.push(tagged(i));
  EXPECT_EQ(b.size(), 1000u);
  EXPECT_EQ(b.contents().front().action_item, 99'000);
}

TEST(ReplayBuffer, SamplesWithReplacement) {
  ReplayBuffer b(4);
  EXPECT_THROW(b.sample(1), UnavailableError);
  b.push(tagged(7));
  const auto batch = b.sample(4);
  ASSERT_EQ(batch.size(), 4u);
  for (const auto& s : batch) EXPECT_EQ(s.action_item, 7);
}

TEST(ReplayBuffer, FixedSeedGivesIdenticalBatches) {
  ReplayBuffer a(100, 9), b(100, 9);
  for (int i = 0; i < 50; ++i) {
    a.push(tagged(i));
    b.push(tagged(i));
  }
  EXPECT_EQ(a.sample(32), b.sample(32));
}

TEST(ReplayBuffer, SamplingIsUniform) {
  constexpr int kSlots = 20;
  constexpr int kDraws = 1'000'000;
  ReplayBuffer b(kSlots, 3);
  for (int i = 0; i < kSlots; ++i) b.push(tagged(i));
  std::vector<int> counts(kSlots, 0);
  for (int k = 0; k < kDraws / 1000; ++k)
    for (const auto& s : b.sample(1000)) ++counts[static_cast<std::size_t>(s.action_item)];
  const double p = 1.0 / kSlots;
  const double expect = kDraws * p;
  const double sigma = std::sqrt(kDraws * p * (1 - p));
  double chi2 = 0.0;
  for (int c : counts) {
    EXPECT_LE(std::abs(c - expect), 3.0 * sigma);
    chi2 += (c - expect) * (c - expect) / expect;
  }
  // 19 degrees of freedom; 43.8 is the 0.999 quantile.
  EXPECT_LT(chi2, 43.8);
}

TEST(ReplayBuffer, SnapshotRestoresRingAndRng) {
  ReplayBuffer b(3, 5);
  for (int i = 0; i < 5; ++i) b.push(tagged(i));
  auto copy = ReplayBuffer::from_snapshot(b.snapshot());
  EXPECT_EQ(copy.contents(), b.contents());
  EXPECT_EQ(copy.sample(10), b.sample(10));
  auto bad = b.snapshot();
  bad.head = 7;
  EXPECT_THROW(ReplayBuffer::from_snapshot(bad), IntegrityError);
}

TEST(ReplayBuffer, JsonRoundTrip) {
  ReplayBuffer b(3, 5);
  for (int i = 0; i < 4; ++i) b.push(tagged(i));
  auto copy = ReplayBuffer::from_json(b.to_json());
  EXPECT_EQ(copy.contents(), b.contents());
}

TEST(AsaExactness, ReplayedSessionsMatchGroundTruth) {
  SimConfig cfg;
  cfg.n_users = 50;
  const auto r = oracle::asa_check(cfg, 1000, 1);
  EXPECT_GT(r.samples, 10'000);
  EXPECT_EQ(r.mismatches, 0);
}
