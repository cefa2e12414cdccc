#pragma once

#include <memory>
#include <string>
#include <vector>

#include "hnav/context.hpp"
#include "hnav/env.hpp"
#include "hnav/grid.hpp"
#include "hnav/nn.hpp"
#include "hnav/trainer.hpp"

namespace hnav {

// Plain MLP over a flat input row; the model-free action-value baselines.
struct QNetConfig {
  int input = 0;
  int hidden = 256;
  int layers = 3;  // hidden layers
};

template <typename T>
void register_qnet(ParamStoreT<T>& store, const QNetConfig& cfg) {
  int in = cfg.input;
  for (int l = 1; l <= cfg.layers; ++l) {
    store.add("q.w" + std::to_string(l), {in, cfg.hidden});
    store.add("q.b" + std::to_string(l), {cfg.hidden});
    in = cfg.hidden;
  }
  store.add("q.out_w", {in, kNumActions});
  store.add("q.out_b", {kNumActions});
}

void qnet_init(ParamStore& store, const QNetConfig& cfg, Rng& rng);
// Float fast path used for acting and target computation.
void qnet_forward(const ParamStore& store, const QNetConfig& cfg,
                  std::span<const float> input, std::span<float> q_out);

// One stored transition. Contexts are rematerialized from (map, start, goal)
// at sample time so hindsight copies stay cheap to insert.
struct QTransition {
  JointState obs;
  JointState next_obs;
  int map_index = 0;
  Cell start;
  Cell goal;
  int action = 0;
  float reward = 0;
  bool done = false;
};

// Complete binary tree over leaf priorities; sampling walks the prefix sums.
class SumTree {
 public:
  explicit SumTree(std::size_t capacity);
  void set(std::size_t i, double p);
  double get(std::size_t i) const;
  double total() const;
  std::size_t sample(double u) const;  // u in [0, total)
  std::size_t capacity() const { return cap_; }

 private:
  std::size_t cap_;
  std::size_t base_;  // first leaf slot
  std::vector<double> tree_;
};

struct PrioritySample {
  std::vector<std::size_t> indices;
  std::vector<double> is_weights;  // normalized to max 1
};

// Ring buffer with proportional prioritized sampling: stored priority is
// (|td| + floor)^omega, importance weights (N * P(i))^-beta.
class PrioritizedBuffer {
 public:
  PrioritizedBuffer(std::size_t capacity, double omega, double beta,
                    double floor = 1e-3);

  void insert(QTransition t);  // enters at the current max priority
  PrioritySample sample(int batch, Rng& rng);  // throws EmptyBuffer
  void update(std::span<const std::size_t> indices,
              std::span<const double> abs_td);
  const QTransition& at(std::size_t i) const { return data_[i]; }
  std::size_t size() const { return size_; }
  double priority(std::size_t i) const { return tree_.get(i); }

 private:
  std::size_t capacity_;
  double omega_, beta_, floor_;
  std::vector<QTransition> data_;
  SumTree tree_;
  std::size_t next_ = 0, size_ = 0;
  double max_priority_ = 1.0;
};

struct QMetrics {
  long step = 0;
  double loss = 0;
  double mean_abs_td = 0;
  double grad_norm = 0;
  std::size_t buffer_size = 0;
  double recent_success = 0;
  double epsilon = 0;
};

// Double-Q learner with prioritized replay and insertion-time hindsight
// relabels (final goal plus her_future future-goal copies per transition).
// use_context=true is the map-aware baseline; false is the goal-blind
// ablation, which keeps the relabel pipeline but cannot see the goal.
class QTrainer {
 public:
  QTrainer(const TrainConfig& cfg, bool use_context);

  void load_maps();
  const std::vector<OccupancyMap>& maps() const { return maps_; }

  long run_episode(std::uint64_t episode_index);
  QMetrics learner_step();
  TrainResult train(const std::string& out_dir);

  void save_checkpoint_file(const std::string& path) const;
  void load_checkpoint_file(const std::string& path);

  double epsilon() const;
  double recent_success() const;
  int input_size() const { return net_cfg_.input; }
  bool uses_context() const { return use_context_; }
  const QNetConfig& net_config() const { return net_cfg_; }
  ParamStore& online() { return online_; }
  const ParamStore& online() const { return online_; }
  PrioritizedBuffer& buffer() { return buffer_; }
  long frames() const { return frames_; }
  long learner_steps() const { return learner_steps_; }

  // Greedy action from the online net; ctx_flat ignored when context-blind.
  int greedy_action(const JointState& obs,
                    std::span<const float> ctx_flat) const;
  void build_input(const JointState& obs, std::span<const float> ctx_flat,
                   std::span<float> row) const;

 private:
  void insert_with_hindsight(const std::vector<QTransition>& episode,
                             const std::vector<JointState>& arrivals,
                             Rng& rng);

  TrainConfig cfg_;
  bool use_context_;
  QNetConfig net_cfg_;
  ParamStore online_, target_;
  AdamState opt_;
  PrioritizedBuffer buffer_;
  std::vector<OccupancyMap> maps_;
  long frames_ = 0;
  long episodes_ = 0;
  long learner_steps_ = 0;
  std::vector<char> recent_outcomes_;
};

}  // namespace hnav
