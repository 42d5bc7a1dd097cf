// rliv_ua: train, evaluate and ablate lifelong-interaction-value rankers on
// the synthetic environment, and run the correctness oracles.
//
// Exit codes: 0 success, 1 runtime failure, 2 configuration failure.

#include <cstdio>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "rliv/config.hpp"
#include "rliv/experiment.hpp"
#include "rliv/oracles.hpp"

namespace fs = std::filesystem;
using namespace rliv;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitConfig = 2;

struct Args {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  bool dry_run = false;
  int parallel = 1;
  std::string resume;
  std::string checkpoint;
  std::string policy;
};

ExperimentConfig load_config(const Args& a) {
  if (a.config.empty()) throw ConfigError("--config is required");
  auto cfg = load_experiment_config(a.config);
  if (a.seed) cfg.seeds = {*a.seed};
  if (a.parallel < 1) throw ConfigError("--parallel-sessions must be >= 1");
  return cfg;
}

std::string output_dir(const Args& a, const ExperimentConfig& cfg) {
  if (!a.resume.empty()) return a.resume;
  return a.out.empty() ? cfg.output_dir : a.out;
}

void print_metrics_table(std::ostream& os, const nlohmann::json& report, const std::vector<std::string>& rows) {
  os << std::left << std::setw(14) << "policy";
  for (const char* k : EpochMetrics::kNames) os << std::right << std::setw(22) << k;
  os << "\n";
  for (const auto& name : rows) {
    const auto& p = report.at("policies").at(name);
    os << std::left << std::setw(14) << name;
    for (const char* k : EpochMetrics::kNames) {
      std::ostringstream cell;
      cell << std::fixed << std::setprecision(3) << p.at(k).at("mean").get<double>() << " +- "
           << p.at(k).at("std").get<double>();
      os << std::right << std::setw(22) << cell.str();
    }
    os << "\n";
  }
}

std::vector<std::string> policy_names(const ExperimentConfig& cfg) {
  std::vector<std::string> out;
  for (const auto& p : cfg.policies) out.push_back(p.name);
  return out;
}

int cmd_train(const Args& a) {
  const auto cfg = load_config(a);
  if (a.dry_run) {
    std::cout << to_json(cfg).dump(2) << "\n";
    return kExitOk;
  }
  RunOptions ro;
  ro.out_dir = output_dir(a, cfg);
  ro.parallel = a.parallel;
  ro.resume = !a.resume.empty();
  ro.log = &std::cerr;
  try {
    const auto res = run_experiment(cfg, ro);
    print_metrics_table(std::cout, res.report, policy_names(cfg));
    std::cout << "report: " << (fs::path(ro.out_dir) / "report.json").string() << "\n";
  } catch (const ConfigError&) {
    throw;
  } catch (const IntegrityError&) {
    throw;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n"
              << "completed epochs are checkpointed; rerun with --resume " << ro.out_dir << "\n";
    return kExitRuntime;
  }
  return kExitOk;
}

const PolicySpec& find_policy(const ExperimentConfig& cfg, const std::string& name) {
  for (const auto& p : cfg.policies)
    if (p.name == name) return p;
  throw ConfigError("policy '" + name + "' is not listed in the config");
}

int cmd_eval(const Args& a) {
  const auto cfg = load_config(a);
  std::optional<nn::Checkpoint> ck;
  std::string name = a.policy;
  std::uint64_t seed = cfg.seeds.front();
  if (!a.checkpoint.empty()) {
    try {
      ck = nn::Checkpoint::load(a.checkpoint);
    } catch (const IntegrityError& e) {
      throw IntegrityError(std::string("corrupted checkpoint: ") + e.what());
    }
    const std::string stored = ck->header.value("policy", "");
    if (!name.empty() && name != stored) throw ConfigError("checkpoint holds policy '" + stored + "', not '" + name + "'");
    name = stored;
    seed = ck->header.value("seed", seed);
  }
  if (name.empty()) {
    if (cfg.policies.size() != 1) throw ConfigError("--policy is required when the config lists several policies");
    name = cfg.policies.front().name;
  }
  const PolicySpec& spec = find_policy(cfg, name);
  if (!ck && spec.kind != PolicyKind::random)
    throw ConfigError("policy '" + name + "' is trained; pass --checkpoint");
  if (a.dry_run) {
    std::cout << nlohmann::json{{"policy", name}, {"seed", seed}, {"config", to_json(cfg)}}.dump(2) << "\n";
    return kExitOk;
  }
  PolicyRun run(cfg, spec, seed);
  if (ck) run.restore(*ck);
  const auto ev = run.evaluate_now(a.parallel);
  nlohmann::json report = {{"version", version_string()},
                           {"policy", name},
                           {"seed", seed},
                           {"epoch", run.epoch()},
                           {"sessions", ev.sessions.size()},
                           {"metrics", to_json(ev.summary)}};
  std::cout << report.dump(2) << "\n";
  if (!a.out.empty()) detail::write_file(fs::path(a.out) / "eval_report.json", report.dump(2) + "\n");
  return kExitOk;
}

int cmd_ablate(const Args& a) {
  auto cfg = load_config(a);
  if (cfg.variants.empty()) throw ConfigError("variants: ablate needs at least one ablation variant");
  PolicySpec base;
  for (const auto& p : cfg.policies)
    if (p.kind == PolicyKind::rliv_ua) {
      base = p;
      break;
    }
  base.kind = PolicyKind::rliv_ua;
  cfg.policies.clear();
  for (const auto& v : cfg.variants) {
    PolicySpec p = base;
    p.name = v;
    p.ablation = ablation_variant_flags(v);
    cfg.policies.push_back(p);
  }
  if (a.dry_run) {
    std::cout << to_json(cfg).dump(2) << "\n";
    return kExitOk;
  }
  RunOptions ro;
  ro.out_dir = output_dir(a, cfg);
  ro.parallel = a.parallel;
  ro.resume = !a.resume.empty();
  ro.log = &std::cerr;
  ExperimentResult res;
  try {
    res = run_experiment(cfg, ro);
  } catch (const ConfigError&) {
    throw;
  } catch (const IntegrityError&) {
    throw;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n"
              << "completed epochs are checkpointed; rerun with --resume " << ro.out_dir << "\n";
    return kExitRuntime;
  }
  print_metrics_table(std::cout, res.report, cfg.variants);

  // Expected direction: full >= no_mt >= no_mt_sl on session length.
  const auto& pol = res.report.at("policies");
  auto mean_len = [&](const std::string& v) { return pol.at(v).at("session_length").at("mean").get<double>(); };
  nlohmann::json checks = nlohmann::json::array();
  const std::vector<std::pair<std::string, std::string>> order = {{"full", "no_mt"}, {"no_mt", "no_mt_sl"}};
  std::cout << "\ndirectional check (session length)\n";
  for (const auto& [hi, lo] : order) {
    if (!pol.contains(hi) || !pol.contains(lo)) continue;
    const bool ok = mean_len(hi) >= mean_len(lo);
    std::cout << "  " << (ok ? "ok      " : "REVERSED") << "  " << hi << " (" << mean_len(hi) << ") >= " << lo << " ("
              << mean_len(lo) << ")\n";
    checks.push_back({{"higher", hi}, {"lower", lo}, {"holds", ok}});
  }
  nlohmann::json table = nlohmann::json::object();
  for (const auto& v : cfg.variants) table[v] = pol.at(v);
  detail::write_file(fs::path(ro.out_dir) / "ablation_report.json",
                     nlohmann::json{{"version", version_string()}, {"variants", cfg.variants}, {"table", table},
                                    {"directional", checks}}
                             .dump(2) +
                         "\n");
  return kExitOk;
}

int cmd_oracle_check(const Args& a) {
  oracle::SuiteOptions opt;
  if (!a.config.empty()) opt.sim = load_config(a).sim;
  if (a.seed) opt.seed = *a.seed;
  opt.gradient.seed = opt.seed;
  opt.tabular.seed = opt.seed;
  if (a.dry_run) {
    std::cout << "oracles: gradients, tabular value iteration, sample builder replay, simulator calibration\n";
    return kExitOk;
  }
  const auto checks = oracle::run_suite(opt);
  std::size_t failed = 0;
  for (const auto& c : checks) {
    std::printf("%-4s %-36s value=%-12.4g limit=%-10.4g %s\n", c.pass ? "ok" : "FAIL", c.name.c_str(), c.value,
                c.threshold, c.detail.c_str());
    failed += c.pass ? 0 : 1;
  }
  if (failed) {
    std::cout << failed << " oracle(s) failed:";
    for (const auto& c : checks)
      if (!c.pass) std::cout << " " << c.name;
    std::cout << "\n";
    return kExitRuntime;
  }
  std::cout << "all " << checks.size() << " oracles passed\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Lifelong interaction value ranking: training, evaluation and oracle checks", "rliv_ua"};
  app.set_version_flag("--version", version_string());
  app.require_subcommand(1);
  Args a;

  auto common = [&](CLI::App* sub, bool config_required) {
    auto* c = sub->add_option("--config", a.config, "experiment config (JSON)");
    if (config_required) c->required();
    sub->add_option("--seed", a.seed, "run this seed only (overrides the config seed list)");
    sub->add_flag("--dry-run", a.dry_run, "print the resolved config and exit");
  };
  auto* train = app.add_subcommand("train", "train and evaluate every configured policy");
  common(train, true);
  train->add_option("--out", a.out, "output directory (default: config output_dir)");
  train->add_option("--parallel-sessions", a.parallel, "evaluation worker threads");
  train->add_option("--resume", a.resume, "resume an interrupted run from its output directory");

  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint, or a random policy");
  common(eval, true);
  eval->add_option("--checkpoint", a.checkpoint, "checkpoint.bin written by train");
  eval->add_option("--policy", a.policy, "policy name from the config");
  eval->add_option("--out", a.out, "write eval_report.json here");
  eval->add_option("--parallel-sessions", a.parallel, "evaluation worker threads");

  auto* ablate = app.add_subcommand("ablate", "run the ablation variants side by side");
  common(ablate, true);
  ablate->add_option("--out", a.out, "output directory (default: config output_dir)");
  ablate->add_option("--parallel-sessions", a.parallel, "evaluation worker threads");
  ablate->add_option("--resume", a.resume, "resume an interrupted run from its output directory");

  auto* oracle = app.add_subcommand("oracle-check", "run the correctness oracles");
  common(oracle, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*train) return cmd_train(a);
    if (*eval) return cmd_eval(a);
    if (*ablate) return cmd_ablate(a);
    if (*oracle) return cmd_oracle_check(a);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const IntegrityError& e) {
    std::cerr << "integrity error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitRuntime;
}
