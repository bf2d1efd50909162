#include "gcnav/config.hpp"

#include <fstream>
#include <set>

#include "gcnav/errors.hpp"

namespace gcnav {

using nlohmann::json;
using nlohmann::ordered_json;

void Schedule::validate() const {
  if (!(planner_freeze < mask_start && mask_start < episodes)) {
    throw ConfigError("schedule requires planner_freeze < mask_start < episodes");
  }
  if (window != kFutureSteps) throw ConfigError("schedule.window must equal the prediction horizon (10)");
  if (predictor_batch == 0 || replay_capacity == 0) throw ConfigError("empty predictor batch or replay");
  if (probe_refresh == 0 || probe_eval_every == 0 || checkpoint_every == 0) {
    throw ConfigError("schedule periods must be positive");
  }
}

void RunConfig::validate() const {
  schedule.validate();
  if (scenarios.empty()) throw ConfigError("no scenarios selected");
  traffic.validate();
  if (!(ppo.gamma >= 0.0 && ppo.gamma <= 1.0 && ppo.lambda >= 0.0 && ppo.lambda <= 1.0)) {
    throw ConfigError("ppo gamma and lambda must lie in [0, 1]");
  }
  if (!(ppo.clip > 0.0)) throw ConfigError("ppo clip must be positive");
  if (eval_flows == 0) throw ConfigError("eval_flows must be positive");
}

EncoderConfig desk_network() {
  EncoderConfig e;
  e.embed = 32;
  e.heads = 4;
  e.conv1 = 4;
  e.conv2 = 8;
  e.conv3 = 8;
  e.hidden = 64;
  return e;
}

namespace {

/// Walks one JSON object, recording keys it was asked about.
class Reader {
 public:
  Reader(const json& j, std::string path, std::vector<std::string>& unknown)
      : j_(j), path_(std::move(path)), unknown_(unknown) {
    if (!j_.is_object()) throw ConfigError("config '" + display() + "' must be an object");
  }
  Reader(const Reader&) = delete;

  template <typename T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception& e) {
      throw ConfigError("config key '" + qualified(key) + "': " + e.what());
    }
  }

  bool has(const char* key) {
    seen_.insert(key);
    return j_.contains(key);
  }
  const json& at(const char* key) const { return j_.at(key); }
  Reader child(const char* key) {
    seen_.insert(key);
    return Reader(j_.at(key), qualified(key), unknown_);
  }
  std::string qualified(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  ~Reader() {
    for (const auto& [k, v] : j_.items()) {
      if (!seen_.count(k)) unknown_.push_back(qualified(k));
    }
  }

 private:
  std::string display() const { return path_.empty() ? "<root>" : path_; }
  const json& j_;
  std::string path_;
  std::vector<std::string>& unknown_;
  std::set<std::string> seen_;
};

void read_encoder(Reader& r, EncoderConfig& e) {
  r.get("embed", e.embed);
  r.get("heads", e.heads);
  r.get("conv1", e.conv1);
  r.get("conv2", e.conv2);
  r.get("conv3", e.conv3);
  r.get("hidden", e.hidden);
}

ordered_json encoder_json(const EncoderConfig& e) {
  return {{"embed", e.embed}, {"heads", e.heads}, {"conv1", e.conv1},
          {"conv2", e.conv2}, {"conv3", e.conv3}, {"hidden", e.hidden}};
}

void read_lr(Reader& r, LrSchedule& lr) {
  r.get("start", lr.start);
  r.get("end", lr.end);
  r.get("switch_step", lr.switch_step);
}

ordered_json lr_json(const LrSchedule& lr) {
  return {{"start", lr.start}, {"end", lr.end}, {"switch_step", lr.switch_step}};
}

void read_all(Reader& root, RunConfig& c) {
  if (root.has("scenarios")) {
    c.scenarios.clear();
    for (const auto& s : root.at("scenarios")) {
      if (!s.is_string()) throw ConfigError("config key 'scenarios' must list names");
      c.scenarios.push_back(scenario_from_string(s.get<std::string>()));
    }
  }
  root.get("seed", c.seed);
  if (root.has("gccp")) {
    if (!root.at("gccp").is_string()) throw ConfigError("config key 'gccp' must be a string");
    c.gccp = gccp_mode_from_string(root.at("gccp").get<std::string>());
  }
  root.get("goal_conditioning", c.goal_conditioning);
  root.get("eval_flows", c.eval_flows);
  if (root.has("schedule")) {
    Reader r = root.child("schedule");
    Schedule& s = c.schedule;
    r.get("episodes", s.episodes);
    r.get("planner_freeze", s.planner_freeze);
    r.get("mask_start", s.mask_start);
    r.get("window", s.window);
    r.get("planner_epochs", s.planner_epochs);
    r.get("decision_epochs", s.decision_epochs);
    r.get("predictor_steps", s.predictor_steps);
    r.get("predictor_batch", s.predictor_batch);
    r.get("replay_capacity", s.replay_capacity);
    r.get("probe_size", s.probe_size);
    r.get("probe_refresh", s.probe_refresh);
    r.get("probe_eval_every", s.probe_eval_every);
    r.get("checkpoint_every", s.checkpoint_every);
  }
  if (root.has("actions")) {
    Reader r = root.child("actions");
    for (std::size_t a = 0; a < kNumActions; ++a) {
      const std::string name(ActionTable::name(a));
      std::array<double, 3> d{c.actions.deltas[a].dx, c.actions.deltas[a].dy,
                              c.actions.deltas[a].dheading};
      r.get(name.c_str(), d);
      c.actions.deltas[a] = ActionDelta{d[0], d[1], d[2]};
    }
  }
  if (root.has("predictor_network")) {
    Reader r = root.child("predictor_network");
    read_encoder(r, c.predictor_network);
  }
  if (root.has("policy_network")) {
    Reader r = root.child("policy_network");
    read_encoder(r, c.policy_network);
  }
  if (root.has("ppo")) {
    Reader r = root.child("ppo");
    r.get("gamma", c.ppo.gamma);
    r.get("lambda", c.ppo.lambda);
    r.get("clip", c.ppo.clip);
    r.get("entropy_coef", c.ppo.entropy_coef);
    r.get("value_coef", c.ppo.value_coef);
  }
  if (root.has("decision_lr")) {
    Reader r = root.child("decision_lr");
    read_lr(r, c.decision_lr);
  }
  if (root.has("planner_lr")) {
    Reader r = root.child("planner_lr");
    read_lr(r, c.planner_lr);
  }
  if (root.has("traffic")) {
    Reader r = root.child("traffic");
    r.get("spawn_rate", c.traffic.spawn_rate);
    r.get("speed_min", c.traffic.speed_min);
    r.get("speed_max", c.traffic.speed_max);
    r.get("max_vehicles", c.traffic.max_vehicles);
    r.get("warmup_steps", c.traffic.warmup_steps);
  }
  if (root.has("intersection")) {
    Reader r = root.child("intersection");
    r.get("lane_width", c.intersection.lane_width);
    r.get("lanes_per_direction", c.intersection.lanes_per_direction);
    r.get("arm_length", c.intersection.arm_length);
    r.get("junction_half", c.intersection.junction_half);
    r.get("spawn_distance", c.intersection.spawn_distance);
    r.get("goal_distance", c.intersection.goal_distance);
  }
  if (root.has("sim")) {
    Reader r = root.child("sim");
    r.get("vehicle_length", c.sim.vehicle_dims.length);
    r.get("vehicle_width", c.sim.vehicle_dims.width);
    r.get("max_steps", c.sim.max_steps);
    r.get("goal_radius", c.sim.goal_radius);
    r.get("goal_heading_tolerance", c.sim.goal_heading_tolerance);
    r.get("stop_gap", c.sim.stop_gap);
    r.get("slow_range", c.sim.slow_range);
    r.get("entry_clearance", c.sim.entry_clearance);
  }
}

}  // namespace

ordered_json to_json(const RunConfig& c) {
  ordered_json j;
  ordered_json scen = ordered_json::array();
  for (ScenarioId s : c.scenarios) scen.push_back(std::string(to_string(s)));
  j["scenarios"] = scen;
  j["seed"] = c.seed;
  j["gccp"] = std::string(to_string(c.gccp));
  j["goal_conditioning"] = c.goal_conditioning;
  j["eval_flows"] = c.eval_flows;
  const Schedule& s = c.schedule;
  j["schedule"] = {{"episodes", s.episodes},
                   {"planner_freeze", s.planner_freeze},
                   {"mask_start", s.mask_start},
                   {"window", s.window},
                   {"planner_epochs", s.planner_epochs},
                   {"decision_epochs", s.decision_epochs},
                   {"predictor_steps", s.predictor_steps},
                   {"predictor_batch", s.predictor_batch},
                   {"replay_capacity", s.replay_capacity},
                   {"probe_size", s.probe_size},
                   {"probe_refresh", s.probe_refresh},
                   {"probe_eval_every", s.probe_eval_every},
                   {"checkpoint_every", s.checkpoint_every}};
  ordered_json actions;
  for (std::size_t a = 0; a < kNumActions; ++a) {
    const ActionDelta& d = c.actions.deltas[a];
    actions[std::string(ActionTable::name(a))] = {d.dx, d.dy, d.dheading};
  }
  j["actions"] = actions;
  j["predictor_network"] = encoder_json(c.predictor_network);
  j["policy_network"] = encoder_json(c.policy_network);
  j["ppo"] = {{"gamma", c.ppo.gamma},
              {"lambda", c.ppo.lambda},
              {"clip", c.ppo.clip},
              {"entropy_coef", c.ppo.entropy_coef},
              {"value_coef", c.ppo.value_coef}};
  j["decision_lr"] = lr_json(c.decision_lr);
  j["planner_lr"] = lr_json(c.planner_lr);
  j["traffic"] = {{"spawn_rate", c.traffic.spawn_rate},
                  {"speed_min", c.traffic.speed_min},
                  {"speed_max", c.traffic.speed_max},
                  {"max_vehicles", c.traffic.max_vehicles},
                  {"warmup_steps", c.traffic.warmup_steps}};
  const IntersectionParams& p = c.intersection;
  j["intersection"] = {{"lane_width", p.lane_width},
                       {"lanes_per_direction", p.lanes_per_direction},
                       {"arm_length", p.arm_length},
                       {"junction_half", p.junction_half},
                       {"spawn_distance", p.spawn_distance},
                       {"goal_distance", p.goal_distance}};
  j["sim"] = {{"vehicle_length", c.sim.vehicle_dims.length},
              {"vehicle_width", c.sim.vehicle_dims.width},
              {"max_steps", c.sim.max_steps},
              {"goal_radius", c.sim.goal_radius},
              {"goal_heading_tolerance", c.sim.goal_heading_tolerance},
              {"stop_gap", c.sim.stop_gap},
              {"slow_range", c.sim.slow_range},
              {"entry_clearance", c.sim.entry_clearance}};
  return j;
}

RunConfig config_from_json(const json& j, RunConfig base) {
  std::vector<std::string> unknown;
  {
    Reader root(j, "", unknown);
    read_all(root, base);
  }
  if (!unknown.empty()) {
    std::string msg = "unknown config keys:";
    for (const auto& k : unknown) msg += " " + k;
    throw ConfigError(msg);
  }
  base.validate();
  return base;
}

RunConfig load_config(const std::filesystem::path& path, RunConfig base) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open config " + path.string());
  json j;
  try {
    j = json::parse(is);
  } catch (const json::exception& e) {
    throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
  }
  return config_from_json(j, std::move(base));
}

void save_config(const std::filesystem::path& path, const RunConfig& cfg) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot write " + path.string());
  os << to_json(cfg).dump(2) << '\n';
}

}  // namespace gcnav
