#pragma once

#include <array>
#include <cstdint>
#include <deque>
#include <memory>
#include <mutex>
#include <span>
#include <vector>

#include "hnav/context.hpp"
#include "hnav/env.hpp"
#include "hnav/grid.hpp"
#include "hnav/model.hpp"

namespace hnav {

struct TrajStep {
  JointState obs;                // o_t
  int action = 0;                // a_t
  float reward = 0;              // reward received after a_t
  bool done = false;
  std::array<float, 6> policy{}; // search visit distribution at t
  float value = 0;               // search root value at t
};

// One finished episode. steps[t].obs is o_t; final_obs is o_T, the state
// the last transition arrived in.
struct Trajectory {
  Task task;
  TaskContext context;
  std::vector<TrajStep> steps;
  JointState final_obs;
  bool success = false;
  std::uint64_t checksum = 0;

  int length() const { return int(steps.size()); }
  const JointState& obs_at(int pos) const {
    return pos < length() ? steps[std::size_t(pos)].obs : final_obs;
  }
};

std::uint64_t trajectory_checksum(const Trajectory& traj);

// FIFO trajectory store; appends are thread-safe, sampling works on a
// consistent snapshot of shared pointers.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity) : capacity_(capacity) {}

  void append(Trajectory traj);
  std::size_t size() const;
  std::uint64_t total_appended() const;
  std::vector<std::shared_ptr<const Trajectory>> snapshot() const;
  std::shared_ptr<const Trajectory> at(std::size_t i) const;

 private:
  mutable std::mutex mu_;
  std::deque<std::shared_ptr<const Trajectory>> items_;
  std::size_t capacity_;
  std::uint64_t total_ = 0;
};

// Abstract-map cell under a world position.
Cell cell_of(const JointState& obs, double cell_size = 100.0);

// Hindsight rewrite for the segment starting at position t: a future
// observation index t' in (t, T] picks the new goal cell; rewards, the done
// position, and masks follow from re-applying the reward rule. The map and
// start stay unchanged. Throws NoFutureStep when t >= T.
struct RelabelResult {
  Cell goal;
  TaskContext context;
  int done_position = 0;  // arrival position of the rewritten done
};
RelabelResult relabel(const Trajectory& traj, int t, Rng& rng);

// Bootstrapped n-step return. rewards has n entries (arrival order), masks
// has n+1: masks[j] gates rewards[j] for j < n, masks[n] gates the
// bootstrap term discount^n * v_bootstrap.
double nstep_return(std::span<const double> rewards,
                    std::span<const double> masks, double gamma,
                    double v_bootstrap);

// One unroll segment with every target the loss needs, plus enough
// provenance for the brute-force oracle tests.
struct TrainingTarget {
  int traj_index = 0;  // into the snapshot used by sample_batch
  int t = 0;           // start position
  int unroll = 0;      // K
  bool relabeled = false;
  bool success = false;      // goal (possibly relabeled) actually entered
  Cell goal;                 // effective goal
  int done_position = 0;     // arrival position ending the episode segment
  std::vector<float> ctx_flat;                  // context under `goal`
  std::vector<JointState> obs;                  // K+1, padded with o_T
  std::vector<int> actions;                     // K, padded with 0
  std::vector<double> value_target;             // K+1
  std::vector<std::array<float, 6>> policy_target;  // K+1
  std::vector<double> reward_target;            // K
  std::vector<double> position_mask;            // K+1
  std::vector<double> reward_mask;              // K
};

struct SampleConfig {
  int batch = 32;
  int unroll = 5;
  int nstep = 5;
  double p_her = 0.5;
  double gamma = 1.0;
};

// Uniform draw over all (trajectory, position) pairs; each target relabeled
// independently with probability p_her; bootstrap values and relabeled
// policy targets come from the current network, as the relabel contract
// requires. Throws EmptyBuffer.
std::vector<TrainingTarget> sample_batch(const ReplayBuffer& buffer,
                                         const SampleConfig& cfg,
                                         const Hypermodel& model, Rng& rng);

}  // namespace hnav
