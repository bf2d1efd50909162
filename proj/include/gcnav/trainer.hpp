#pragma once

#include <deque>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <optional>
#include <vector>

#include "gcnav/config.hpp"

namespace gcnav {

/// The five trained networks.
struct Networks {
  Predictor predictor;
  DecisionMaker decision;
  MotionPlanner planner;

  Networks() = default;
  explicit Networks(const RunConfig& cfg);

  void save(const std::filesystem::path& path) const;
  /// Throws IoError when the file is missing or does not match the shapes.
  void load(const std::filesystem::path& path);
};

struct PlannerTransition {
  PlannerInput input;
  std::size_t action = 0;
  double log_prob = 0.0;
  double value = 0.0;
  double reward = 0.0;
  bool done = false;
};

struct DecisionTransition {
  DecisionInput input;
  RiskMask mask;  // as consumed
  std::size_t action = 0;
  double log_prob = 0.0;
  double value = 0.0;
  double reward = 0.0;
  bool done = false;
};

struct EpisodeMetrics {
  std::size_t episode = 0;
  ScenarioId scenario = ScenarioId::kGoStraight;
  std::uint64_t flow_seed = 0;
  bool success = false;
  bool collision = false;
  bool off_road = false;
  bool timeout = false;
  std::size_t steps = 0;
  double planner_return = 0.0;
  double decision_return = 0.0;
  std::size_t windows = 0;
  std::size_t subgoals_reached = 0;
  std::size_t masks_nonzero = 0;   // consumed masks with an unsafe entry
  std::size_t mask_fallbacks = 0;  // all-unsafe masks replaced by zeros
  std::size_t predictor_steps = 0;
  std::optional<double> predictor_loss;
  std::optional<double> probe_ade;
  std::optional<double> probe_fde;
  std::size_t replay_size = 0;
};

/// Per-episode record of buffer and gate behaviour, for conformance checks.
struct EpisodeAudit {
  std::size_t episode = 0;
  std::uint64_t planner_fingerprint_before = 0;
  std::uint64_t planner_fingerprint_after = 0;
  std::size_t planner_updates = 0;
  std::size_t nonzero_masks_consumed = 0;
  std::size_t gccp_calls = 0;
  std::size_t max_planner_buffer = 0;
  bool planner_buffer_emptied_each_window = true;
  std::size_t episodic_buffer_at_start = 0;
  std::size_t decision_buffer_before_update = 0;
  std::size_t decision_buffer_after_update = 0;
  std::size_t decision_updates = 0;
  std::size_t replay_before = 0;
  std::size_t replay_after = 0;
  std::size_t dumped_windows = 0;
  std::size_t probe_windows = 0;   // dumped windows held out for the probe set
  std::size_t replay_evicted = 0;  // oldest entries dropped at capacity
  std::size_t predictor_steps = 0;
};

std::string metrics_header();
std::string metrics_row(const EpisodeMetrics& m);

class Trainer {
 public:
  explicit Trainer(const RunConfig& cfg);

  /// Rolls out the next episode with per-window planner updates; buffers are kept for
  /// end_of_episode_updates.
  EpisodeMetrics run_episode();
  /// Decision update, replay dump, predictor steps, probe refresh.
  void end_of_episode_updates(EpisodeMetrics& m);
  /// Both halves; appends to metrics().
  const EpisodeMetrics& next_episode();

  /// Runs until `schedule.episodes`, writing metrics.csv, config.json and
  /// checkpoints into out_dir.
  void train(const std::filesystem::path& out_dir);

  std::size_t episodes_done() const { return episode_; }
  const std::vector<EpisodeMetrics>& metrics() const { return metrics_; }
  const std::vector<EpisodeAudit>& audits() const { return audits_; }
  void set_audit(bool on) { audit_on_ = on; }
  /// Switches the mask mode; used to branch runs that share a prefix.
  void set_gccp_mode(GccpMode mode) { cfg_.gccp = mode; }

  const RunConfig& config() const { return cfg_; }
  Networks& networks() { return nets_; }
  const Networks& networks() const { return nets_; }
  const std::deque<PredictionSample>& replay() const { return replay_; }
  const std::vector<PredictionSample>& probe_set() const { return probe_; }
  std::size_t decision_buffer_size() const { return decision_buffer_.size(); }
  std::size_t episodic_buffer_size() const { return episodic_.size(); }

  /// Optional sink for one-line notices (skipped predictor steps, fallbacks).
  void set_log(std::ostream* log) { log_ = log; }

 private:
  void update_planner(const std::vector<PlannerTransition>& buffer);
  void update_decision();
  void note(const std::string& msg);

  RunConfig cfg_;
  Networks nets_;
  std::vector<std::shared_ptr<const Scenario>> scenarios_;
  Rng sampler_;
  std::size_t episode_ = 0;
  std::vector<DecisionTransition> decision_buffer_;     // D_d
  std::vector<PredictionSample> episodic_;              // D_e
  std::deque<PredictionSample> replay_;                 // D
  std::vector<PredictionSample> probe_;
  bool probe_filling_ = false;
  std::optional<double> probe_ade_;
  std::optional<double> probe_fde_;
  std::vector<EpisodeMetrics> metrics_;
  std::vector<EpisodeAudit> audits_;
  EpisodeAudit current_audit_;
  bool audit_on_ = false;
  std::ostream* log_ = nullptr;
};

/// Futures of every slot vehicle over the T_f steps after `start`, in the
/// frame of `state`. positions[k] maps vehicle id -> world pose at step k.
PredictionSample make_prediction_sample(std::shared_ptr<const VectorState> state,
                                        const Pose& subgoal_ego, std::size_t start,
                                        const std::vector<std::vector<std::pair<int, Pose>>>& positions);

}  // namespace gcnav
