#pragma once

#include <iosfwd>
#include <vector>

#include "gcnav/trainer.hpp"

namespace gcnav {

struct EvalEpisode {
  ScenarioId scenario = ScenarioId::kGoStraight;
  std::size_t flow = 0;
  std::uint64_t flow_seed = 0;
  bool success = false;
  bool collision = false;
  bool off_road = false;
  bool timeout = false;
  std::size_t steps = 0;
  std::size_t windows = 0;
  std::size_t masks_nonzero = 0;
};

struct ScenarioSummary {
  ScenarioId scenario = ScenarioId::kGoStraight;
  std::size_t episodes = 0;
  std::size_t successes = 0;
  std::size_t collisions = 0;

  double success_rate() const;
  double collision_rate() const;
};

struct EvalSummary {
  std::vector<ScenarioSummary> scenarios;
  ScenarioSummary overall;
  std::vector<EvalEpisode> episodes;
};

/// Seed of evaluation flow `flow` for a scenario; disjoint from training seeds.
std::uint64_t eval_flow_seed(std::uint64_t seed, ScenarioId scenario, std::size_t flow);

/// One greedy rollout (argmax at both levels) with the configured mask mode
/// always active. With `trace`, writes per window the 12 subgoal records and
/// one choice record as JSON lines.
EvalEpisode greedy_rollout(const Networks& nets, const RunConfig& cfg,
                           std::shared_ptr<const Scenario> scenario, std::uint64_t flow_seed,
                           std::ostream* trace = nullptr);

/// cfg.eval_flows seeded flows per configured scenario.
EvalSummary evaluate(const Networks& nets, const RunConfig& cfg);

void write_summary_table(std::ostream& os, const EvalSummary& summary);
void write_eval_episodes(std::ostream& os, const EvalSummary& summary);

struct ArrivalProbe {
  std::size_t attempts = 0;
  std::size_t arrivals = 0;
  double rate() const { return attempts ? static_cast<double>(arrivals) / attempts : 0.0; }
};

/// Empty-map subgoal arrival: from the spawn and from a pose near the
/// junction mouth, each distinct sampled subgoal is handed to the greedy
/// planner for up to `max_steps` steps.
ArrivalProbe subgoal_arrival_probe(const MotionPlanner& planner, const RunConfig& cfg,
                                   std::size_t max_steps = 60);

}  // namespace gcnav
