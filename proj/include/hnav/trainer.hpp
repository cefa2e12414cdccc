#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "hnav/mcts.hpp"
#include "hnav/model_graph.hpp"
#include "hnav/replay.hpp"

namespace hnav {

// Everything the pipeline reads, parsed from flat "key = value" text.
// Unknown keys are errors; every field here is a valid key.
struct TrainConfig {
  // agent kind: mmn | mah | dqn
  std::string agent = "mmn";
  std::uint64_t seed = 0;

  // model sizes
  int d = 32;
  int h_f = 64;
  int enc_hidden = 128;
  int trunk_hidden = 256;
  int embed = 128;
  int pred_hidden = 128;
  int nc = 13;

  // environment
  int map_size = 13;
  double cell_size = 100.0;
  int action_repeat = 10;
  double v_max = 5.0;
  double accel = 1.5;
  double friction = 0.9;
  double turn_rate = M_PI / 30.0;
  double agent_radius = 16.0;
  int timeout = 40;
  double gamma = 1.0;

  // search
  int num_simulations = 50;
  double c1 = 1.25;
  double c2 = 19652.0;
  double dirichlet_alpha = 0.3;
  double dirichlet_frac = 0.25;
  double temp_early = 1.0;  // first half of frames
  double temp_mid = 0.5;    // up to three quarters
  double temp_late = 0.25;  // remainder

  // trainer
  int unroll = 5;
  int nstep = 5;
  int batch = 32;
  double lambda_model = 1.0;
  double lr = 3e-4;
  long total_frames = 200000;
  int actors = 1;
  long snapshot_interval = 10000;
  double p_her = 0.5;
  long capacity = 2000;
  double clip_norm = 5.0;
  int learn_every = 4;   // env-steps per learner step
  int min_buffer = 10;   // trajectories before learning starts

  // task sampling
  std::string maps_dir;  // empty: generate train_maps maps from the seed
  int train_maps = 20;
  int d_min = 1;
  int d_max = 5;

  // q-learning baselines
  int q_hidden = 256;
  int q_layers = 3;
  double eps_start = 1.0;
  double eps_end = 0.05;
  int target_sync = 500;
  double priority_omega = 0.6;
  double is_beta = 0.4;
  int her_future = 4;
  long q_capacity = 50000;
  int q_min_transitions = 500;

  ModelConfig model_config() const;
  EnvConfig env_config() const;
  SearchConfig search_config() const;
  SampleConfig sample_config() const;
};

// ignore_unknown tolerates extra lines (checkpoint metadata carries counters
// next to the config); config files themselves reject unknown keys.
TrainConfig parse_config_text(const std::string& text,
                              bool ignore_unknown = false);
TrainConfig load_config(const std::string& path);
std::string config_to_text(const TrainConfig& cfg);

// Assembles sampled targets into the unrolled batch layout. Observation
// normalization and the frozen latent targets both run in T so the double
// shadow used by gradient checks follows the exact same path.
template <typename T>
LossBatch<T> make_loss_batch(const std::vector<TrainingTarget>& targets,
                             const ParamStoreT<T>& store,
                             const ModelConfig& cfg);

struct LossValues {
  double total = 0;
  double value = 0, policy = 0, reward = 0, model = 0;
  std::vector<double> value_k, policy_k, reward_k, model_k;
};

// Loss (and optionally gradient) of one assembled batch. grad_out empty
// skips backward. Values are exact sums of the logged components.
template <typename T>
LossValues loss_and_grad(const ParamStoreT<T>& store, const ModelConfig& cfg,
                         const LossBatch<T>& batch, T lambda_model,
                         std::span<T> grad_out);

struct LearnerMetrics {
  long step = 0;
  LossValues loss;
  double grad_norm = 0;  // pre-clip
  std::size_t buffer_size = 0;
  double recent_success = 0;
};

struct TrainResult {
  std::string checkpoint_path;
  long frames = 0;
  long episodes = 0;
  long learner_steps = 0;
  double recent_success = 0;
};

// Planner-model adapter: one episode's generated weights plus the shared
// prediction head, exposed through the abstract search interface.
class HypermodelPlan : public PlanModel {
 public:
  HypermodelPlan(const Hypermodel& model, std::vector<float> phi,
                 std::vector<float> embed)
      : model_(model), phi_(std::move(phi)), embed_(std::move(embed)) {}
  int latent_dim() const override { return model_.config().d; }
  void evaluate(std::span<const float> s, std::span<float> prior6,
                float& value) override;
  void step(std::span<const float> s, int action, std::span<float> s_next,
            float& reward) override;

 private:
  const Hypermodel& model_;
  std::vector<float> phi_;
  std::vector<float> embed_;
};

// In-process pipeline for the planning agent. Episodes and learner steps
// interleave on a fixed deterministic schedule (actors take turns at
// episode granularity), which keeps the whole run bit-reproducible; the
// buffer itself is thread-safe and the actor path is reused by the
// concurrent integration tests.
class MmnTrainer {
 public:
  explicit MmnTrainer(const TrainConfig& cfg);

  // Maps come from cfg.maps_dir, or are generated from the seed when empty.
  void load_maps();
  const std::vector<OccupancyMap>& maps() const { return maps_; }

  // One full episode acted by `actor` with the current parameters; appends
  // the trajectory. Returns env-steps taken. hyper_calls (if given) counts
  // weight-generation invocations (the per-episode contract is exactly 1).
  long run_episode(int actor, std::uint64_t episode_index,
                   int* hyper_calls = nullptr);
  LearnerMetrics learner_step();

  TrainResult train(const std::string& out_dir);

  void save_checkpoint_file(const std::string& path) const;
  void load_checkpoint_file(const std::string& path);

  Hypermodel& model() { return *model_; }
  ReplayBuffer& buffer() { return buffer_; }
  long frames() const { return frames_; }
  long episodes() const { return episodes_; }
  long learner_steps() const { return learner_steps_; }
  double recent_success() const;
  double temperature() const;

 private:
  TrainConfig cfg_;
  std::unique_ptr<Hypermodel> model_;
  ReplayBuffer buffer_;
  AdamState opt_;
  std::vector<OccupancyMap> maps_;
  long frames_ = 0;
  long episodes_ = 0;
  long learner_steps_ = 0;
  std::vector<char> recent_outcomes_;  // ring of last 50 episode outcomes
};

// Metrics CSV: one row per learner step.
void write_metrics_header(std::ostream& out);
void write_metrics_row(std::ostream& out, const LearnerMetrics& m);

}  // namespace hnav
