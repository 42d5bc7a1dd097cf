#include <gtest/gtest.h>

#include <algorithm>
#include <sstream>
#include <vector>

#include "rliv/domain.hpp"
#include "rliv/domain_json.hpp"

using namespace rliv;

TEST(UAKey, IdentityAndOrder) {
  EXPECT_EQ(make_ua_key(3, 7), make_ua_key(3, 7));
  EXPECT_NE(make_ua_key(3, 7), make_ua_key(7, 3));
  std::vector<UAKey> keys = {make_ua_key(2, 1), make_ua_key(1, 2), make_ua_key(1, 1)};
  std::sort(keys.begin(), keys.end());
  EXPECT_EQ(keys, (std::vector<UAKey>{{1, 1}, {1, 2}, {2, 1}}));
  EXPECT_THROW(make_ua_key(-1, 0), ValidationError);
}

TEST(RewardFromFeedback, NoClick) {
  InteractionOutcome o;
  const auto r = reward_from_feedback(o);
  EXPECT_EQ(r.click, 0.0);
  EXPECT_EQ(r.watch, 0.0);
  EXPECT_EQ(r.follow, 0.0);
  EXPECT_EQ(r.gift, 0.0);
}

TEST(RewardFromFeedback, WatchNormalization) {
  InteractionOutcome o;
  o.clicked = true;
  o.watch_seconds = 30.0;
  const auto r = reward_from_feedback(o);
  EXPECT_EQ(r.click, 1.0);
  EXPECT_DOUBLE_EQ(r.watch, 0.5);
  EXPECT_EQ(r.watch_seconds, 30.0);
}

TEST(RewardFromFeedback, FollowAndGift) {
  InteractionOutcome o;
  o.clicked = true;
  o.watch_seconds = 12.0;
  o.followed = true;
  o.gift_amount = 10.0;
  const auto r = reward_from_feedback(o);
  EXPECT_EQ(r.follow, 1.0);
  EXPECT_DOUBLE_EQ(r.gift, 0.1);
  EXPECT_DOUBLE_EQ(r.watch, 0.2);
  o.gift_amount = 250.0;
  EXPECT_EQ(reward_from_feedback(o).gift, 1.0);
}

TEST(RewardFromFeedback, RejectsNegativeValues) {
  InteractionOutcome o;
  o.watch_seconds = -1.0;
  EXPECT_THROW(reward_from_feedback(o), ValidationError);
  o.watch_seconds = 0.0;
  o.gift_amount = -2.0;
  EXPECT_THROW(reward_from_feedback(o), ValidationError);
}

TEST(Towers, NamesRoundTrip) {
  for (Tower t : kAllTowers) EXPECT_EQ(tower_from_name(tower_name(t)), t);
  EXPECT_THROW(tower_from_name("likes"), ValidationError);
  RewardVector r;
  r.gift = 0.25;
  EXPECT_EQ(r[Tower::gift], 0.25);
  LIVScores s;
  s[Tower::follow] = 2.0;
  EXPECT_EQ(s.q_follow, 2.0);
}

TEST(DomainJson, TraceRoundTripsThroughJsonLines) {
  SessionTrace t;
  t.user_id = 4;
  t.session_index = 2;
  RequestRecord req;
  ExposureRecord e;
  e.state.user = {4, 1, 2};
  e.state.author = {9, 45, 3};
  e.state.dynamic.click_count = 2;
  e.state.dynamic.cumulative_watch_seconds = 17.25;
  e.outcome = {45, 9, true, 8.5, false, 0.0};
  e.counters_after = e.state.dynamic;
  e.counters_after.click_count = 3;
  req.exposures.push_back(e);
  req.quit = true;
  t.requests.push_back(req);

  std::stringstream ss;
  write_jsonl(ss, std::vector<SessionTrace>{t, t});
  ss << "\n";
  const auto back = read_jsonl<SessionTrace>(ss);
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[0], t);

  std::stringstream bad("{\"user_id\": 1}\n");
  EXPECT_THROW(read_jsonl<SessionTrace>(bad), ValidationError);
}

TEST(DomainJson, SampleRoundTrip) {
  TransitionSample s;
  s.key = {1, 2};
  s.state.author = {2, 10, 1};
  s.reward.click = 1;
  s.reward.watch_seconds = 3.0;
  s.next_state = s.state;
  s.next_state.dynamic.click_count = 1;
  s.author_items = {{10, 1}, {11, 4}};
  EXPECT_EQ(json(s).get<TransitionSample>(), s);
}
