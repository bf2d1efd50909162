#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "gcnav/errors.hpp"
#include "gcnav/evaluation.hpp"
#include "gcnav/trainer.hpp"

namespace fs = std::filesystem;
using namespace gcnav;

namespace {

struct CommonOptions {
  std::string config_path;
  std::string preset = "full";
  std::vector<std::string> scenarios;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> gccp;
  std::optional<std::string> goal_conditioning;
};

void add_common(CLI::App* cmd, CommonOptions& o) {
  cmd->add_option("--config", o.config_path, "JSON run configuration");
  cmd->add_option("--preset", o.preset, "network sizes when no config is given")
      ->check(CLI::IsMember({"full", "desk"}));
  cmd->add_option("--scenario", o.scenarios, "turn_left | go_straight | turn_right (repeatable)");
  cmd->add_option("--seed", o.seed, "run seed");
  cmd->add_option("--gccp", o.gccp, "learned | cv | disabled");
  cmd->add_option("--goal-conditioning", o.goal_conditioning, "on | off");
}

RunConfig base_config(const CommonOptions& o) {
  RunConfig cfg;
  if (o.preset == "desk") {
    cfg.predictor_network = desk_network();
    cfg.policy_network = desk_network();
  }
  return cfg;
}

/// Config file, then flags on top.
RunConfig resolve(const CommonOptions& o, const std::string& checkpoint = {}) {
  RunConfig cfg = base_config(o);
  std::string path = o.config_path;
  if (path.empty() && !checkpoint.empty()) {
    // A checkpoint inside <run>/checkpoints/ picks up <run>/config.json.
    const fs::path snapshot = fs::path(checkpoint).parent_path().parent_path() / "config.json";
    if (fs::exists(snapshot)) path = snapshot.string();
  }
  if (!path.empty()) cfg = load_config(path, cfg);
  if (!o.scenarios.empty()) {
    cfg.scenarios.clear();
    for (const auto& s : o.scenarios) cfg.scenarios.push_back(scenario_from_string(s));
  }
  if (o.seed) cfg.seed = *o.seed;
  if (o.gccp) cfg.gccp = gccp_mode_from_string(*o.gccp);
  if (o.goal_conditioning) {
    if (*o.goal_conditioning != "on" && *o.goal_conditioning != "off") {
      throw ConfigError("--goal-conditioning must be on or off");
    }
    cfg.goal_conditioning = *o.goal_conditioning == "on";
  }
  return cfg;
}

/// Scales the planner-freeze and mask-start gates with the episode count.
void rescale_episodes(RunConfig& cfg, std::size_t episodes) {
  Schedule& s = cfg.schedule;
  const double ratio = static_cast<double>(episodes) / static_cast<double>(s.episodes);
  s.planner_freeze = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(s.planner_freeze * ratio)));
  s.mask_start = std::max<std::size_t>(s.planner_freeze + 1,
                                       static_cast<std::size_t>(std::lround(s.mask_start * ratio)));
  s.episodes = std::max<std::size_t>(s.mask_start + 1, episodes);
  if (s.episodes != episodes) {
    throw ConfigError("--episodes " + std::to_string(episodes) + " is too small for the gated schedule");
  }
}

int run(int argc, char** argv) {
  CLI::App app{"Hierarchical intersection navigation with goal-conditioned collision prediction"};
  app.require_subcommand(1);

  CommonOptions train_o, eval_o, trace_o;
  std::string train_out;
  std::optional<std::size_t> episodes;
  auto* train = app.add_subcommand("train", "train all networks");
  add_common(train, train_o);
  train->add_option("--episodes", episodes, "total episodes (gates scale proportionally)");
  train->add_option("--out", train_out, "output directory")->required();

  std::string eval_ckpt, eval_out;
  std::optional<std::size_t> flows;
  auto* eval = app.add_subcommand("eval", "greedy evaluation over seeded traffic flows");
  add_common(eval, eval_o);
  eval->add_option("--checkpoint", eval_ckpt, "checkpoint file")->required();
  eval->add_option("--flows", flows, "flows per scenario");
  eval->add_option("--out", eval_out, "directory for summary.txt and episodes.csv");

  std::string trace_ckpt, trace_out;
  auto* trace = app.add_subcommand("trace", "dump one greedy rollout window by window");
  add_common(trace, trace_o);
  trace->add_option("--checkpoint", trace_ckpt, "checkpoint file")->required();
  trace->add_option("--out", trace_out, "trace file (JSON lines)")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: usage: " << e.what() << '\n';
    return 2;
  }

  if (*train) {
    RunConfig cfg = resolve(train_o);
    if (episodes) rescale_episodes(cfg, *episodes);
    cfg.validate();
    Trainer trainer(cfg);
    trainer.train(train_out);
    const auto& m = trainer.metrics();
    std::size_t wins = 0;
    for (const auto& e : m) wins += e.success;
    std::cout << "trained " << m.size() << " episodes, success " << wins << "/" << m.size()
              << ", outputs in " << train_out << '\n';
  } else if (*eval) {
    RunConfig cfg = resolve(eval_o, eval_ckpt);
    if (flows) cfg.eval_flows = *flows;
    cfg.validate();
    Networks nets(cfg);
    nets.load(eval_ckpt);
    const EvalSummary summary = evaluate(nets, cfg);
    write_summary_table(std::cout, summary);
    if (!eval_out.empty()) {
      fs::create_directories(eval_out);
      std::ofstream table(fs::path(eval_out) / "summary.txt");
      std::ofstream episodes_csv(fs::path(eval_out) / "episodes.csv");
      if (!table || !episodes_csv) throw IoError("cannot write into " + eval_out);
      write_summary_table(table, summary);
      write_eval_episodes(episodes_csv, summary);
    }
  } else if (*trace) {
    RunConfig cfg = resolve(trace_o, trace_ckpt);
    if (cfg.scenarios.size() != 1) throw ConfigError("trace needs exactly one --scenario");
    cfg.validate();
    Networks nets(cfg);
    nets.load(trace_ckpt);
    std::ofstream os(trace_out);
    if (!os) throw IoError("cannot write " + trace_out);
    auto scenario =
        std::make_shared<const Scenario>(build_scenario(cfg.scenarios[0], cfg.intersection, cfg.traffic));
    const EvalEpisode ep =
        greedy_rollout(nets, cfg, scenario, eval_flow_seed(cfg.seed, cfg.scenarios[0], 0), &os);
    std::cout << "traced " << ep.windows << " windows, "
              << (ep.success ? "success" : ep.collision ? "collision" : ep.off_road ? "off-road" : "timeout")
              << '\n';
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  dc::retain_freed_buffers();
  try {
    return run(argc, argv);
  } catch (const gcnav::Error& e) {
    std::cerr << "error: " << e.code() << ": " << e.what() << '\n';
  } catch (const std::exception& e) {
    std::cerr << "error: internal: " << e.what() << '\n';
  }
  return 1;
}
