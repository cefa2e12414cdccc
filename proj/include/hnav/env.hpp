#pragma once

#include <array>
#include <cstdint>

#include "hnav/grid.hpp"

namespace hnav {

enum class Action : int {
  Forward = 0,
  Backward = 1,
  StrafeLeft = 2,
  StrafeRight = 3,
  LookLeft = 4,
  LookRight = 5,
};
inline constexpr int kNumActions = 6;

// 12-scalar observation. The simulator is planar, so z, pitch, roll and
// their velocities stay zero; the slots are kept so o lives in R^12.
struct JointState {
  double x = 0, y = 0, z = 0;
  double yaw = 0, pitch = 0, roll = 0;
  double vx = 0, vy = 0, vz = 0;  // units per env-step
  double wyaw = 0, wpitch = 0, wroll = 0;  // radians per env-step

  std::array<double, 12> to_array() const {
    return {x, y, z, yaw, pitch, roll, vx, vy, vz, wyaw, wpitch, wroll};
  }
};

struct EnvConfig {
  double cell_size = 100.0;
  int action_repeat = 10;
  double v_max = 5.0;       // units per inner tick (50 per env-step)
  double accel = 1.5;       // units per tick^2
  double friction = 0.9;    // velocity multiplier per tick
  double turn_rate = M_PI / 30.0;  // radians per tick
  double agent_radius = 16.0;
  int timeout = 40;         // env-steps
  double gamma = 1.0;
};

struct StepInfo {
  bool reached_goal = false;
  bool timed_out = false;
};

struct StepResult {
  JointState next_obs;
  double reward = 0;
  bool done = false;
  StepInfo info;
};

bool in_goal(double x, double y, Cell goal, double cell_size = 100.0);

// Deterministic continuous maze environment. Per inner tick: acceleration
// or turn for the chosen action, friction, speed clamp, then axis-separated
// movement against the wall grid (sliding).
class MazeEnv {
 public:
  explicit MazeEnv(EnvConfig config = {}) : config_(config) {}

  JointState reset(const Task& task, std::uint64_t seed);
  StepResult step(Action action);  // throws SteppedAfterDone

  // Swaps the goal in place, keeping pose and velocity: the hierarchical
  // protocol feeds subgoals sequentially without teleporting. Resets the
  // per-leg step counter and the done flag; path_length keeps accumulating.
  JointState retarget(Cell goal);

  const JointState& state() const { return obs_; }
  const Task& task() const { return task_; }
  const EnvConfig& config() const { return config_; }
  bool done() const { return done_; }
  int steps_taken() const { return steps_; }
  // Sum of per-env-step planar displacements since reset.
  double path_length() const { return path_length_; }
  // True pose, for the hand-crafted controller (perfect-information baseline).
  double true_x() const { return x_; }
  double true_y() const { return y_; }
  double true_yaw() const { return yaw_; }

 private:
  bool square_collides(double cx, double cy) const;

  EnvConfig config_;
  Task task_;
  JointState obs_;
  double x_ = 0, y_ = 0, yaw_ = 0;
  double vx_ = 0, vy_ = 0;  // units per tick
  int steps_ = 0;
  bool done_ = true;
  double path_length_ = 0;
};

}  // namespace hnav
