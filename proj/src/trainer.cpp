#include "gcnav/trainer.hpp"


#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <ostream>

#include "gcnav/dc/checkpoint.hpp"
#include "gcnav/errors.hpp"

namespace gcnav {

using dc::Tensor;

namespace {

std::uint64_t planner_fingerprint(const MotionPlanner& p) {
  return mix_seed(p.policy_params().fingerprint(), p.value_params().fingerprint());
}

std::vector<std::pair<int, Pose>> positions_of(const World& w) {
  std::vector<std::pair<int, Pose>> out;
  out.emplace_back(0, w.ego);
  for (const TrafficVehicle& v : w.traffic) out.emplace_back(v.id, v.pose);
  return out;
}

template <std::size_t N>
std::array<double, N> exp_row(const Tensor& lp) {
  std::array<double, N> p{};
  for (std::size_t i = 0; i < N; ++i) p[i] = std::exp(lp.data()[i]);
  return p;
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

std::string fmt(const std::optional<double>& v) { return v ? fmt(*v) : std::string(); }

}  // namespace

Networks::Networks(const RunConfig& cfg) {
  PredictorConfig pc;
  pc.encoder = cfg.predictor_network;
  pc.goal_conditioning = cfg.goal_conditioning;
  predictor = Predictor(pc, mix_seed(cfg.seed, 101));
  decision = DecisionMaker(PolicyConfig{cfg.policy_network}, mix_seed(cfg.seed, 102));
  planner = MotionPlanner(PolicyConfig{cfg.policy_network}, mix_seed(cfg.seed, 103));
}

void Networks::save(const std::filesystem::path& path) const {
  dc::write_checkpoint(path, {{"predictor", &predictor.params()},
                              {"decision/policy", &decision.policy_params()},
                              {"decision/value", &decision.value_params()},
                              {"planner/policy", &planner.policy_params()},
                              {"planner/value", &planner.value_params()}});
}

void Networks::load(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw IoError("checkpoint " + path.string() + " does not exist");
  const dc::CheckpointData data = dc::read_checkpoint(path);
  dc::restore(predictor.params(), "predictor", data);
  dc::restore(decision.policy_params(), "decision/policy", data);
  dc::restore(decision.value_params(), "decision/value", data);
  dc::restore(planner.policy_params(), "planner/policy", data);
  dc::restore(planner.value_params(), "planner/value", data);
}

std::string metrics_header() {
  return "episode,scenario,flow_seed,success,collision,off_road,timeout,steps,planner_return,"
         "decision_return,windows,subgoals_reached,masks_nonzero,mask_fallbacks,predictor_steps,"
         "predictor_loss,probe_ade,probe_fde,replay_size";
}

std::string metrics_row(const EpisodeMetrics& m) {
  std::string s;
  s += std::to_string(m.episode) + ",";
  s += std::string(to_string(m.scenario)) + ",";
  s += std::to_string(m.flow_seed) + ",";
  s += std::to_string(int(m.success)) + "," + std::to_string(int(m.collision)) + "," +
       std::to_string(int(m.off_road)) + "," + std::to_string(int(m.timeout)) + ",";
  s += std::to_string(m.steps) + ",";
  s += fmt(m.planner_return) + "," + fmt(m.decision_return) + ",";
  s += std::to_string(m.windows) + "," + std::to_string(m.subgoals_reached) + ",";
  s += std::to_string(m.masks_nonzero) + "," + std::to_string(m.mask_fallbacks) + ",";
  s += std::to_string(m.predictor_steps) + ",";
  s += fmt(m.predictor_loss) + "," + fmt(m.probe_ade) + "," + fmt(m.probe_fde) + ",";
  s += std::to_string(m.replay_size);
  return s;
}

PredictionSample make_prediction_sample(std::shared_ptr<const VectorState> state,
                                        const Pose& subgoal_ego, std::size_t start,
                                        const std::vector<std::vector<std::pair<int, Pose>>>& positions) {
  PredictionSample s;
  s.subgoal = subgoal_ego;
  for (std::size_t i = 0; i < kVehicleSlots; ++i) {
    const SlotEncoding& slot = state->slots[i];
    if (!slot.valid) continue;
    bool ok = true;
    for (std::size_t t = 0; t < kFutureSteps && ok; ++t) {
      const std::size_t k = start + t + 1;
      if (k >= positions.size()) {
        ok = false;
        break;
      }
      ok = false;
      for (const auto& [id, pose] : positions[k]) {
        if (id != slot.vehicle_id) continue;
        Pose p = to_ego_frame(state->ego_world, pose);
        p.speed.reset();
        s.future[i][t] = p;
        ok = true;
        break;
      }
    }
    s.future_valid[i] = ok;
  }
  s.state = std::move(state);
  return s;
}

Trainer::Trainer(const RunConfig& cfg)
    : cfg_(cfg), nets_(cfg), sampler_(mix_seed(cfg.seed, 7)) {
  cfg_.validate();
  for (ScenarioId id : cfg_.scenarios) {
    scenarios_.push_back(
        std::make_shared<const Scenario>(build_scenario(id, cfg_.intersection, cfg_.traffic)));
  }
}

void Trainer::note(const std::string& msg) {
  if (log_) *log_ << "episode " << (episode_ + 1) << ": " << msg << '\n';
}

// The window end is terminal for the planner: its subgoal is replaced there, so
// nothing past the window is credited to it. Bootstrapping instead makes the
// per-step time penalty outweigh the off-road penalty.
void Trainer::update_planner(const std::vector<PlannerTransition>& buffer) {
  const std::size_t n = buffer.size();
  std::vector<double> rewards, values, next_values;
  std::vector<std::uint8_t> dones;
  std::vector<PlannerInput> inputs;
  PpoBatch batch;
  for (std::size_t k = 0; k < n; ++k) {
    rewards.push_back(buffer[k].reward);
    values.push_back(buffer[k].value);
    next_values.push_back(k + 1 < n ? buffer[k + 1].value : 0.0);
    dones.push_back(buffer[k].done || k + 1 == n);
    inputs.push_back(buffer[k].input);
    batch.actions.push_back(buffer[k].action);
    batch.old_log_probs.push_back(buffer[k].log_prob);
  }
  batch.advantages = gae_advantages(rewards, values, next_values, dones, cfg_.ppo.gamma, cfg_.ppo.lambda);
  for (std::size_t k = 0; k < n; ++k) batch.returns.push_back(batch.advantages[k] + values[k]);
  MotionPlanner& p = nets_.planner;
  ppo_update(
      p.policy_params(), p.value_params(), [&] { return p.log_probs(inputs); },
      [&] { return p.values(inputs); }, batch, cfg_.ppo, cfg_.schedule.planner_epochs,
      cfg_.planner_lr, cfg_.planner_lr);
}

void Trainer::update_decision() {
  const std::size_t n = decision_buffer_.size();
  std::vector<double> rewards, values, next_values;
  std::vector<std::uint8_t> dones;
  std::vector<DecisionInput> inputs;
  std::vector<RiskMask> masks;
  PpoBatch batch;
  for (std::size_t k = 0; k < n; ++k) {
    const DecisionTransition& d = decision_buffer_[k];
    rewards.push_back(d.reward);
    values.push_back(d.value);
    next_values.push_back(k + 1 < n ? decision_buffer_[k + 1].value : 0.0);
    dones.push_back(d.done);
    inputs.push_back(d.input);
    masks.push_back(d.mask);
    batch.actions.push_back(d.action);
    batch.old_log_probs.push_back(d.log_prob);
  }
  batch.advantages = gae_advantages(rewards, values, next_values, dones, cfg_.ppo.gamma, cfg_.ppo.lambda);
  for (std::size_t k = 0; k < n; ++k) batch.returns.push_back(batch.advantages[k] + values[k]);
  DecisionMaker& d = nets_.decision;
  ppo_update(
      d.policy_params(), d.value_params(), [&] { return d.log_probs(inputs, masks); },
      [&] { return d.values(inputs); }, batch, cfg_.ppo, cfg_.schedule.decision_epochs,
      cfg_.decision_lr, cfg_.decision_lr);
}

EpisodeMetrics Trainer::run_episode() {
  const std::size_t e = episode_ + 1;
  const Schedule& sch = cfg_.schedule;
  const auto& scenario = scenarios_[(e - 1) % scenarios_.size()];
  EpisodeMetrics m;
  m.episode = e;
  m.scenario = scenario->id;
  m.flow_seed = mix_seed(cfg_.seed, e);

  EpisodeAudit& au = current_audit_;
  au = EpisodeAudit{};
  au.episode = e;
  au.planner_fingerprint_before = planner_fingerprint(nets_.planner);

  episodic_.clear();
  au.episodic_buffer_at_start = episodic_.size();

  World w = reset(scenario, m.flow_seed, cfg_.sim);
  std::vector<std::vector<std::pair<int, Pose>>> positions{positions_of(w)};
  struct Pending {
    std::shared_ptr<const VectorState> state;
    Pose subgoal;
    std::size_t step;
  };
  std::vector<Pending> pending;
  const bool gccp_active = cfg_.gccp != GccpMode::kDisabled && e > sch.mask_start;
  std::vector<PlannerTransition> planner_buffer;  // D_m
  StepEvents last;

  while (!w.terminated) {
    if (!planner_buffer.empty()) au.planner_buffer_emptied_each_window = false;
    Observation obs = observe(w);
    auto state = std::make_shared<const VectorState>(std::move(obs.state));
    Pose task = to_ego_frame(w.ego, scenario->task_goal);
    task.speed.reset();
    const DecisionInput din{state, task, obs.subgoals};

    RiskMask raw;
    if (gccp_active) {
      raw = compute_mask(*state, obs.subgoals, nets_.predictor, cfg_.gccp, cfg_.sim.vehicle_dims).mask;
      ++au.gccp_calls;
    }
    bool fell_back = false;
    const RiskMask mask = consumable_mask(raw, &fell_back);
    if (fell_back) {
      ++m.mask_fallbacks;
      note("all subgoals flagged unsafe; mask replaced by zeros");
    }
    if (mask.any_unsafe()) {
      ++m.masks_nonzero;
      ++au.nonzero_masks_consumed;
    }
    const Tensor dlp = nets_.decision.log_probs({&din, 1}, {&mask, 1});
    const auto dprobs = exp_row<kNumSubgoals>(dlp);
    const std::size_t choice = sampler_.categorical(dprobs);
    const double dvalue = nets_.decision.values({&din, 1}).item();
    Pose sub_world = from_ego_frame(w.ego, obs.subgoals.goals[choice]);
    sub_world.speed.reset();
    const double d_select = distance(w.ego, sub_world);
    pending.push_back({state, obs.subgoals.goals[choice], w.step_count});

    bool arrived = false;
    bool goal = false;
    std::shared_ptr<const VectorState> s = state;
    for (std::size_t k = 0; k < sch.window && !w.terminated; ++k) {
      if (k > 0) s = std::make_shared<const VectorState>(encode_state(w));
      Pose sub_ego = to_ego_frame(w.ego, sub_world);
      sub_ego.speed.reset();
      const PlannerInput pin{s, sub_ego};
      const Tensor plp = nets_.planner.log_probs({&pin, 1});
      const auto pprobs = exp_row<kNumActions>(plp);
      const std::size_t action = sampler_.categorical(pprobs);
      const double pvalue = nets_.planner.values({&pin, 1}).item();
      const double d_prev = distance(w.ego, sub_world);
      const double h_prev = angle_distance(w.ego.heading, sub_world.heading);
      const StepOutcome out = step(w, cfg_.actions.deltas[action]);
      positions.push_back(positions_of(w));
      last = out.events;
      const double d_curr = distance(w.ego, sub_world);
      const double h_curr = angle_distance(w.ego.heading, sub_world.heading);
      const bool now = subgoal_reached(w.ego, sub_world);
      const double r = planner_reward(out.events, now && !arrived, d_prev, d_curr, h_prev, h_curr);
      arrived = arrived || now;
      goal = goal || out.events.goal_reached;
      planner_buffer.push_back({pin, action, plp.data()[action], pvalue, r, w.terminated});
      au.max_planner_buffer = std::max(au.max_planner_buffer, planner_buffer.size());
      m.planner_return += r;
    }
    if (e < sch.planner_freeze) {
      update_planner(planner_buffer);
      ++au.planner_updates;
    }
    planner_buffer.clear();

    const double rd = decision_reward(goal, arrived, d_select);
    decision_buffer_.push_back({din, mask, choice, dlp.data()[choice], dvalue, rd, w.terminated});
    m.decision_return += rd;
    ++m.windows;
    m.subgoals_reached += arrived;
  }

  m.steps = w.step_count;
  m.success = last.goal_reached;
  m.collision = last.collision;
  m.off_road = last.off_road;
  m.timeout = last.timeout && !last.goal_reached && !last.collision && !last.off_road;

  for (const Pending& p : pending) {
    PredictionSample sample = make_prediction_sample(p.state, p.subgoal, p.step, positions);
    if (std::any_of(sample.future_valid.begin(), sample.future_valid.end(), [](bool b) { return b; })) {
      episodic_.push_back(std::move(sample));
    }
  }
  return m;
}

void Trainer::end_of_episode_updates(EpisodeMetrics& m) {
  const std::size_t e = m.episode;
  const Schedule& sch = cfg_.schedule;
  EpisodeAudit& au = current_audit_;

  au.decision_buffer_before_update = decision_buffer_.size();
  if (!decision_buffer_.empty()) {
    update_decision();
    ++au.decision_updates;
  }
  decision_buffer_.clear();
  au.decision_buffer_after_update = decision_buffer_.size();

  au.replay_before = replay_.size();
  if (e > sch.planner_freeze) {
    if (e % sch.probe_refresh == 0 || (probe_.empty() && !probe_filling_)) {
      probe_.clear();
      probe_filling_ = true;
    }
    // While the probe set refills, every other window is held out.
    bool to_probe = true;
    for (PredictionSample& s : episodic_) {
      if (probe_filling_ && to_probe) {
        probe_.push_back(std::move(s));
        ++au.probe_windows;
        if (probe_.size() >= sch.probe_size) probe_filling_ = false;
      } else {
        replay_.push_back(std::move(s));
        if (replay_.size() > sch.replay_capacity) {
          replay_.pop_front();
          ++au.replay_evicted;
        }
      }
      to_probe = !to_probe;
      ++au.dumped_windows;
    }
    episodic_.clear();

    if (replay_.size() >= sch.predictor_batch) {
      double total = 0.0;
      std::vector<std::size_t> idx(replay_.size());
      std::vector<PredictionSample> batch;
      for (std::size_t step = 0; step < sch.predictor_steps; ++step) {
        std::iota(idx.begin(), idx.end(), std::size_t{0});
        batch.clear();
        for (std::size_t b = 0; b < sch.predictor_batch; ++b) {
          const std::size_t j = b + sampler_.index(idx.size() - b);
          std::swap(idx[b], idx[j]);
          batch.push_back(replay_[idx[b]]);
        }
        total += nets_.predictor.train_step(batch);
        ++m.predictor_steps;
      }
      m.predictor_loss = total / static_cast<double>(sch.predictor_steps);
    } else {
      note("replay holds " + std::to_string(replay_.size()) + " windows (< " +
           std::to_string(sch.predictor_batch) + "); predictor steps skipped");
    }
    if (!probe_.empty() && (e % sch.probe_eval_every == 0 || !probe_ade_)) {
      const DisplacementError err = evaluate_predictor(nets_.predictor, probe_);
      probe_ade_ = err.ade;
      probe_fde_ = err.fde;
    }
  }
  au.predictor_steps = m.predictor_steps;
  au.replay_after = replay_.size();
  au.planner_fingerprint_after = planner_fingerprint(nets_.planner);
  m.probe_ade = probe_ade_;
  m.probe_fde = probe_fde_;
  m.replay_size = replay_.size();
  if (audit_on_) audits_.push_back(au);
  ++episode_;
}

const EpisodeMetrics& Trainer::next_episode() {
  EpisodeMetrics m = run_episode();
  end_of_episode_updates(m);
  metrics_.push_back(m);
  return metrics_.back();
}

void Trainer::train(const std::filesystem::path& out_dir) {
  namespace fs = std::filesystem;
  fs::create_directories(out_dir / "checkpoints");
  save_config(out_dir / "config.json", cfg_);
  std::ofstream csv(out_dir / "metrics.csv");
  std::ofstream events(out_dir / "events.log");
  if (!csv || !events) throw IoError("cannot write into " + out_dir.string());
  std::ostream* previous = log_;
  log_ = &events;
  csv << metrics_header() << '\n';
  for (const EpisodeMetrics& m : metrics_) csv << metrics_row(m) << '\n';
  while (episode_ < cfg_.schedule.episodes) {
    const EpisodeMetrics& m = next_episode();
    csv << metrics_row(m) << '\n' << std::flush;
    if (m.episode % cfg_.schedule.checkpoint_every == 0) {
      char name[64];
      std::snprintf(name, sizeof name, "episode_%06zu.ckpt", m.episode);
      nets_.save(out_dir / "checkpoints" / name);
    }
  }
  nets_.save(out_dir / "checkpoints" / "final.ckpt");
  log_ = previous;
}

}  // namespace gcnav
