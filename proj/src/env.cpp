#include "hnav/env.hpp"

#include <cmath>

#include "hnav/errors.hpp"
#include "hnav/rng.hpp"

namespace hnav {

bool in_goal(double x, double y, Cell goal, double cell_size) {
  return x >= goal.col * cell_size && x < (goal.col + 1) * cell_size &&
         y >= goal.row * cell_size && y < (goal.row + 1) * cell_size;
}

JointState MazeEnv::reset(const Task& task, std::uint64_t seed) {
  task_ = task;
  x_ = (task.start.col + 0.5) * config_.cell_size;
  y_ = (task.start.row + 0.5) * config_.cell_size;
  Rng rng = Rng::derive(seed, 0x726573, task.id);
  yaw_ = (M_PI / 2.0) * double(rng.uniform_int(0, 3));
  vx_ = vy_ = 0;
  steps_ = 0;
  done_ = false;
  path_length_ = 0;
  obs_ = JointState{};
  obs_.x = x_;
  obs_.y = y_;
  obs_.yaw = yaw_;
  return obs_;
}

JointState MazeEnv::retarget(Cell goal) {
  task_.goal = goal;
  steps_ = 0;
  done_ = false;
  return obs_;
}

bool MazeEnv::square_collides(double cx, double cy) const {
  const double r = config_.agent_radius;
  const double cs = config_.cell_size;
  double x0 = cx - r, x1 = cx + r;
  double y0 = cy - r, y1 = cy + r;
  int c0 = int(std::floor(x0 / cs));
  int c1 = int(std::floor(x1 / cs));
  int r0 = int(std::floor(y0 / cs));
  int r1 = int(std::floor(y1 / cs));
  for (int row = r0; row <= r1; ++row) {
    for (int col = c0; col <= c1; ++col) {
      bool wall = !task_.map.is_free(row, col);  // out of bounds counts
      if (!wall) continue;
      double wx0 = col * cs, wx1 = (col + 1) * cs;
      double wy0 = row * cs, wy1 = (row + 1) * cs;
      if (x0 < wx1 && x1 > wx0 && y0 < wy1 && y1 > wy0) return true;
    }
  }
  return false;
}

StepResult MazeEnv::step(Action action) {
  if (done_) throw SteppedAfterDone();
  const double px = x_, py = y_, pyaw = yaw_;

  for (int tick = 0; tick < config_.action_repeat; ++tick) {
    switch (action) {
      case Action::Forward:
        vx_ += config_.accel * std::cos(yaw_);
        vy_ += config_.accel * std::sin(yaw_);
        break;
      case Action::Backward:
        vx_ -= config_.accel * std::cos(yaw_);
        vy_ -= config_.accel * std::sin(yaw_);
        break;
      case Action::StrafeLeft:
        vx_ += config_.accel * std::cos(yaw_ + M_PI / 2.0);
        vy_ += config_.accel * std::sin(yaw_ + M_PI / 2.0);
        break;
      case Action::StrafeRight:
        vx_ += config_.accel * std::cos(yaw_ - M_PI / 2.0);
        vy_ += config_.accel * std::sin(yaw_ - M_PI / 2.0);
        break;
      case Action::LookLeft:
        yaw_ += config_.turn_rate;
        break;
      case Action::LookRight:
        yaw_ -= config_.turn_rate;
        break;
    }
    vx_ *= config_.friction;
    vy_ *= config_.friction;
    double speed = std::sqrt(vx_ * vx_ + vy_ * vy_);
    if (speed > config_.v_max) {
      double s = config_.v_max / speed;
      vx_ *= s;
      vy_ *= s;
    }
    // Axis-separated movement with sliding: a blocked axis cancels that
    // axis's motion and velocity, the other axis proceeds.
    double nx = x_ + vx_;
    if (square_collides(nx, y_))
      vx_ = 0;
    else
      x_ = nx;
    double ny = y_ + vy_;
    if (square_collides(x_, ny))
      vy_ = 0;
    else
      y_ = ny;
  }
  while (yaw_ >= 2.0 * M_PI) yaw_ -= 2.0 * M_PI;
  while (yaw_ < 0) yaw_ += 2.0 * M_PI;

  steps_ += 1;
  path_length_ += std::hypot(x_ - px, y_ - py);

  StepResult result;
  result.info.reached_goal = in_goal(x_, y_, task_.goal, config_.cell_size);
  result.info.timed_out = !result.info.reached_goal &&
                          steps_ >= config_.timeout;
  result.done = result.info.reached_goal || result.info.timed_out;
  result.reward = result.info.reached_goal ? 0.0 : -1.0;
  done_ = result.done;

  obs_.x = x_;
  obs_.y = y_;
  obs_.yaw = yaw_;
  obs_.vx = (x_ - px);  // displacement over one env-step == velocity in
  obs_.vy = (y_ - py);  // units per env-step
  double dyaw = yaw_ - pyaw;
  while (dyaw > M_PI) dyaw -= 2.0 * M_PI;
  while (dyaw < -M_PI) dyaw += 2.0 * M_PI;
  obs_.wyaw = dyaw;
  result.next_obs = obs_;
  return result;
}

}  // namespace hnav
