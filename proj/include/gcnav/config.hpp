#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "gcnav/agents.hpp"
#include "gcnav/gccp.hpp"
#include "gcnav/ppo.hpp"
#include "gcnav/predictor.hpp"
#include "gcnav/roadnet.hpp"
#include "gcnav/sim.hpp"

namespace gcnav {

/// Episode counts and update cadence of the training loop.
struct Schedule {
  std::size_t episodes = 2000;        // N_e
  std::size_t planner_freeze = 500;   // N_g
  std::size_t mask_start = 800;       // N_m
  std::size_t window = 10;            // T_m
  std::size_t planner_epochs = 5;     // K_m
  std::size_t decision_epochs = 5;    // K_d
  std::size_t predictor_steps = 5;    // K_p
  std::size_t predictor_batch = 64;   // N_b
  std::size_t replay_capacity = 50000;
  std::size_t probe_size = 256;
  std::size_t probe_refresh = 100;
  std::size_t probe_eval_every = 10;
  std::size_t checkpoint_every = 100;

  void validate() const;
};

struct RunConfig {
  std::vector<ScenarioId> scenarios{kAllScenarios.begin(), kAllScenarios.end()};
  std::uint64_t seed = 0;
  Schedule schedule;
  GccpMode gccp = GccpMode::kLearned;
  bool goal_conditioning = true;
  ActionTable actions;
  EncoderConfig predictor_network;
  EncoderConfig policy_network;
  PpoConfig ppo;
  LrSchedule decision_lr{5e-5, 1e-5, 2000};
  LrSchedule planner_lr{1e-4, 1e-5, 2000};
  TrafficFlowSpec traffic;
  IntersectionParams intersection;
  SimConfig sim;
  std::size_t eval_flows = 50;

  void validate() const;
};

/// Small networks sized for a single CPU core.
EncoderConfig desk_network();

nlohmann::ordered_json to_json(const RunConfig& cfg);

/// Overlays `j` on `base`. Throws ConfigError listing every unknown key.
RunConfig config_from_json(const nlohmann::json& j, RunConfig base = {});

RunConfig load_config(const std::filesystem::path& path, RunConfig base = {});
void save_config(const std::filesystem::path& path, const RunConfig& cfg);

}  // namespace gcnav
