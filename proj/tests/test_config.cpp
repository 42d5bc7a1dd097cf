#include <gtest/gtest.h>

#include <string>

#include "json.hpp"
#include "rliv/config.hpp"

using namespace rliv;
using nlohmann::json;

namespace {

json minimal() {
  return json::parse(R"({"policies": [{"name": "r", "kind": "random"}], "epochs": 2, "seeds": [0, 1]})");
}

std::string error_of(const json& j) {
  try {
    parse_experiment_config(j);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST(Config, MinimalConfigUsesDefaults) {
  const auto c = parse_experiment_config(minimal());
  EXPECT_EQ(c.epochs, 2);
  EXPECT_EQ(c.seeds, (std::vector<std::uint64_t>{0, 1}));
  ASSERT_EQ(c.policies.size(), 1u);
  EXPECT_EQ(c.policies[0].kind, PolicyKind::random);
  EXPECT_EQ(c.sim.n_users, SimConfig{}.n_users);
  EXPECT_EQ(c.model.gamma, 0.9);
  EXPECT_EQ(c.model.tau, 0.005);
  EXPECT_EQ(c.model.batch_size, 1024);
}

TEST(Config, MissingRequiredFieldsAreNamed) {
  for (const char* key : {"policies", "epochs", "seeds"}) {
    auto j = minimal();
    j.erase(key);
    const auto msg = error_of(j);
    EXPECT_NE(msg.find(key), std::string::npos) << msg;
    EXPECT_NE(msg.find("missing"), std::string::npos) << msg;
  }
  auto j = minimal();
  j["policies"][0].erase("kind");
  EXPECT_NE(error_of(j).find("policies[0].kind"), std::string::npos);
}

TEST(Config, UnknownKeysAreRejected) {
  auto j = minimal();
  j["sim"] = {{"n_user", 10}};
  EXPECT_NE(error_of(j).find("sim.n_user: unknown key"), std::string::npos);
  j = minimal();
  j["epochz"] = 3;
  EXPECT_NE(error_of(j).find("epochz"), std::string::npos);
  j = minimal();
  j["policies"][0]["weights"] = {{"likes", 1}};
  EXPECT_NE(error_of(j).find("policies[0].weights.likes"), std::string::npos);
}

TEST(Config, TypeAndRangeErrors) {
  auto j = minimal();
  j["epochs"] = "ten";
  EXPECT_NE(error_of(j).find("epochs: expected an integer"), std::string::npos);
  j = minimal();
  j["epochs"] = 0;
  EXPECT_NE(error_of(j).find("epochs"), std::string::npos);
  j = minimal();
  j["seeds"] = {-1};
  EXPECT_NE(error_of(j).find("seeds[0]"), std::string::npos);
  j = minimal();
  j["model"] = {{"gamma", 1.5}};
  EXPECT_NE(error_of(j).find("gamma"), std::string::npos);
  j = minimal();
  j["sim"] = {{"exposure_k", 500}};
  EXPECT_FALSE(error_of(j).empty());
  j = minimal();
  j["policies"][0]["kind"] = "bandit";
  EXPECT_NE(error_of(j).find("unknown policy kind"), std::string::npos);
  j = minimal();
  j["policies"].push_back(j["policies"][0]);
  EXPECT_NE(error_of(j).find("duplicate"), std::string::npos);
  j = minimal();
  j["policies"][0]["weights"] = {{"watch", 0}};
  EXPECT_NE(error_of(j).find("positive"), std::string::npos);
  j = minimal();
  j["model"] = {{"primary_tower", "likes"}};
  EXPECT_NE(error_of(j).find("primary_tower"), std::string::npos);
}

TEST(Config, AblationVariants) {
  EXPECT_EQ(ablation_variant_flags("full"), AblationFlags{});
  EXPECT_EQ(ablation_variant_flags("no_mt"), (AblationFlags{true, false, false}));
  EXPECT_EQ(ablation_variant_flags("no_mt_sl"), (AblationFlags{true, true, false}));
  EXPECT_EQ(ablation_variant_flags("no_sl"), (AblationFlags{false, true, false}));
  EXPECT_EQ(ablation_variant_flags("no_al_sl"), (AblationFlags{false, true, true}));
  EXPECT_THROW(ablation_variant_flags("no_everything"), ConfigError);
  auto j = minimal();
  j["variants"] = {"full", "nope"};
  EXPECT_NE(error_of(j).find("variants[1]"), std::string::npos);
}

TEST(Config, ModelForAppliesGlobalAndPolicyFlags) {
  auto j = minimal();
  j["policies"] = json::parse(R"([{"name": "a", "kind": "rliv_ua", "disable_sl": true},
                                  {"name": "b", "kind": "rliv_ua"}])");
  j["ablation"] = {{"disable_mt", true}};
  const auto c = parse_experiment_config(j);
  const auto a = c.model_for(c.policies[0]);
  EXPECT_FALSE(a.multi_task);
  EXPECT_FALSE(a.supervised);
  EXPECT_TRUE(a.assistance);
  EXPECT_FALSE(a.assistance_active());
  const auto b = c.model_for(c.policies[1]);
  EXPECT_FALSE(b.multi_task);
  EXPECT_TRUE(b.supervised);
}

TEST(Config, JsonRoundTrip) {
  auto j = minimal();
  j["sim"] = {{"n_users", 77}, {"quality_mean", -3.5}};
  j["model"] = {{"hidden_dims", {32, 16}}, {"primary_tower", "click"}};
  j["policies"] = json::parse(R"([{"name": "x", "kind": "rliv_ua", "weights": {"watch": 2, "gift": 0.5},
                                   "ranking_mix": 0.3, "disable_assist": true}])");
  j["variants"] = {"full", "no_mt"};
  const auto c = parse_experiment_config(j);
  const auto back = parse_experiment_config(to_json(c));
  EXPECT_EQ(to_json(back), to_json(c));
  EXPECT_EQ(back.sim.n_users, 77);
  EXPECT_EQ(back.model.hidden_dims, (std::vector<int>{32, 16}));
  EXPECT_EQ(back.model.primary_tower, Tower::click);
  EXPECT_EQ(back.policies[0].weights, (std::array<double, 4>{0.0, 2.0, 0.0, 0.5}));
  EXPECT_TRUE(back.policies[0].ablation.disable_assist);
}

TEST(Config, LoadFromFile) {
  EXPECT_THROW(load_experiment_config("/nonexistent/config.json"), ConfigError);
  const auto c = load_experiment_config(RLIV_CONFIG_DIR "/smoke.json");
  EXPECT_EQ(c.policies.size(), 3u);
  for (const char* name : {"desk.json", "ablation.json", "paper_scale.json"})
    EXPECT_NO_THROW(load_experiment_config(std::string(RLIV_CONFIG_DIR "/") + name)) << name;
}
