#include "gcnav/evaluation.hpp"

#include <cmath>
#include <cstdio>
#include <ostream>

#include <json.hpp>

#include "gcnav/errors.hpp"

namespace gcnav {

using dc::Tensor;
using nlohmann::ordered_json;

namespace {

ordered_json pose_json(const Pose& p) { return ordered_json::array({p.x, p.y, p.heading}); }

std::size_t greedy_action(const MotionPlanner& planner, const World& w, const Pose& sub_world,
                          std::shared_ptr<const VectorState> state) {
  Pose sub_ego = to_ego_frame(w.ego, sub_world);
  sub_ego.speed.reset();
  const PlannerInput pin{std::move(state), sub_ego};
  const auto probs = planner.probabilities(pin);
  return argmax(probs);
}

}  // namespace

double ScenarioSummary::success_rate() const {
  return episodes ? static_cast<double>(successes) / episodes : 0.0;
}

double ScenarioSummary::collision_rate() const {
  return episodes ? static_cast<double>(collisions) / episodes : 0.0;
}

std::uint64_t eval_flow_seed(std::uint64_t seed, ScenarioId scenario, std::size_t flow) {
  return mix_seed(mix_seed(seed ^ 0x5EEDE7A1ULL, static_cast<std::uint64_t>(scenario) + 1), flow);
}

EvalEpisode greedy_rollout(const Networks& nets, const RunConfig& cfg,
                           std::shared_ptr<const Scenario> scenario, std::uint64_t flow_seed,
                           std::ostream* trace) {
  EvalEpisode ep;
  ep.scenario = scenario->id;
  ep.flow_seed = flow_seed;
  World w = reset(scenario, flow_seed, cfg.sim);
  StepEvents last;
  while (!w.terminated) {
    Observation obs = observe(w);
    auto state = std::make_shared<const VectorState>(std::move(obs.state));
    Pose task = to_ego_frame(w.ego, scenario->task_goal);
    task.speed.reset();
    const DecisionInput din{state, task, obs.subgoals};
    const GccpResult gccp =
        compute_mask(*state, obs.subgoals, nets.predictor, cfg.gccp, cfg.sim.vehicle_dims);
    bool fell_back = false;
    const RiskMask mask = consumable_mask(gccp.mask, &fell_back);
    ep.masks_nonzero += mask.any_unsafe();
    const auto probs = nets.decision.probabilities(din, mask);
    const std::size_t choice = argmax(probs);
    Pose sub_world = from_ego_frame(w.ego, obs.subgoals.goals[choice]);
    sub_world.speed.reset();

    if (trace) {
      for (std::size_t k = 0; k < kNumSubgoals; ++k) {
        ordered_json j;
        j["type"] = "subgoal";
        j["window"] = ep.windows;
        j["step"] = w.step_count;
        const ordered_json record = gccp_debug_record(obs.subgoals, gccp, k);
        for (const auto& [key, value] : record.items()) j[key] = value;
        *trace << j.dump() << '\n';
      }
    }

    std::vector<std::size_t> actions;
    std::vector<Pose> executed;
    std::shared_ptr<const VectorState> s = state;
    for (std::size_t k = 0; k < cfg.schedule.window && !w.terminated; ++k) {
      if (k > 0) s = std::make_shared<const VectorState>(encode_state(w));
      const std::size_t a = greedy_action(nets.planner, w, sub_world, s);
      actions.push_back(a);
      last = step(w, cfg.actions.deltas[a]).events;
      executed.push_back(w.ego);
    }

    if (trace) {
      ordered_json j;
      j["type"] = "choice";
      j["window"] = ep.windows;
      j["step"] = w.step_count - executed.size();
      j["chosen"] = choice;
      j["mask_fallback"] = fell_back;
      ordered_json vehicles = ordered_json::array();
      for (std::size_t i = 0; i < kVehicleSlots; ++i) {
        const SlotEncoding& slot = state->slots[i];
        if (!slot.valid) continue;
        vehicles.push_back({{"slot", i}, {"id", slot.vehicle_id},
                            {"pose", pose_json(slot.history[kHistorySteps - 1])}});
      }
      j["state"] = {{"ego_world", pose_json(state->ego_world)}, {"vehicles", vehicles}};
      j["subgoal_world"] = pose_json(sub_world);
      ordered_json acts = ordered_json::array();
      for (std::size_t a : actions) acts.push_back(std::string(ActionTable::name(a)));
      j["actions"] = acts;
      ordered_json poses = ordered_json::array();
      for (const Pose& p : executed) poses.push_back(pose_json(p));
      j["executed"] = poses;
      *trace << j.dump() << '\n';
    }
    ++ep.windows;
  }
  ep.steps = w.step_count;
  ep.success = last.goal_reached;
  ep.collision = last.collision;
  ep.off_road = last.off_road;
  ep.timeout = last.timeout && !last.goal_reached && !last.collision && !last.off_road;
  return ep;
}

EvalSummary evaluate(const Networks& nets, const RunConfig& cfg) {
  EvalSummary summary;
  summary.overall.scenario = ScenarioId::kGoStraight;
  for (ScenarioId id : cfg.scenarios) {
    auto scenario = std::make_shared<const Scenario>(build_scenario(id, cfg.intersection, cfg.traffic));
    ScenarioSummary s;
    s.scenario = id;
    for (std::size_t f = 0; f < cfg.eval_flows; ++f) {
      EvalEpisode ep = greedy_rollout(nets, cfg, scenario, eval_flow_seed(cfg.seed, id, f));
      ep.flow = f;
      ++s.episodes;
      s.successes += ep.success;
      s.collisions += ep.collision;
      summary.episodes.push_back(ep);
    }
    summary.overall.episodes += s.episodes;
    summary.overall.successes += s.successes;
    summary.overall.collisions += s.collisions;
    summary.scenarios.push_back(s);
  }
  return summary;
}

void write_summary_table(std::ostream& os, const EvalSummary& summary) {
  char line[160];
  std::snprintf(line, sizeof line, "%-12s %10s %12s %9s\n", "scenario", "success%", "collision%",
                "episodes");
  os << line;
  auto row = [&](const char* name, const ScenarioSummary& s) {
    std::snprintf(line, sizeof line, "%-12s %10.1f %12.1f %9zu\n", name, 100.0 * s.success_rate(),
                  100.0 * s.collision_rate(), s.episodes);
    os << line;
  };
  for (const ScenarioSummary& s : summary.scenarios) row(std::string(to_string(s.scenario)).c_str(), s);
  row("overall", summary.overall);
}

void write_eval_episodes(std::ostream& os, const EvalSummary& summary) {
  os << "scenario,flow,flow_seed,success,collision,off_road,timeout,steps,windows,masks_nonzero\n";
  for (const EvalEpisode& e : summary.episodes) {
    os << to_string(e.scenario) << ',' << e.flow << ',' << e.flow_seed << ',' << int(e.success) << ','
       << int(e.collision) << ',' << int(e.off_road) << ',' << int(e.timeout) << ',' << e.steps << ','
       << e.windows << ',' << e.masks_nonzero << '\n';
  }
}

ArrivalProbe subgoal_arrival_probe(const MotionPlanner& planner, const RunConfig& cfg,
                                   std::size_t max_steps) {
  ArrivalProbe probe;
  TrafficFlowSpec empty = cfg.traffic;
  empty.max_vehicles = 0;
  empty.warmup_steps = 0;
  for (ScenarioId id : kAllScenarios) {
    auto scenario = std::make_shared<const Scenario>(build_scenario(id, cfg.intersection, empty));
    const World base = reset(scenario, 0, cfg.sim);
    const Pose spawn = base.ego;
    const double advance = cfg.intersection.spawn_distance - 4.0;
    Pose mouth = spawn;
    mouth.x += advance * std::cos(spawn.heading);
    mouth.y += advance * std::sin(spawn.heading);
    for (const Pose& start : {spawn, mouth}) {
      World w0 = base;
      w0.ego = start;
      w0.ego.speed = 0.0;
      for (Pose& h : w0.ego_history) h = w0.ego;
      const SubgoalSet set = sample_subgoals(w0);
      for (std::size_t k = 0; k < kNumSubgoals; ++k) {
        if (set.padded[k]) continue;
        bool duplicate = false;
        for (std::size_t j = 0; j < k; ++j) duplicate = duplicate || (!set.padded[j] && set.goals[j] == set.goals[k]);
        if (duplicate) continue;
        Pose sub_world = from_ego_frame(w0.ego, set.goals[k]);
        sub_world.speed.reset();
        World w = w0;
        bool arrived = false;
        for (std::size_t t = 0; t < max_steps && !w.terminated && !arrived; ++t) {
          const auto s = std::make_shared<const VectorState>(encode_state(w));
          step(w, cfg.actions.deltas[greedy_action(planner, w, sub_world, s)]);
          arrived = subgoal_reached(w.ego, sub_world);
        }
        ++probe.attempts;
        probe.arrivals += arrived;
      }
    }
  }
  return probe;
}

}  // namespace gcnav
