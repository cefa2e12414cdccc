#include "hnav/oracle.hpp"

#include <cmath>

#include "hnav/errors.hpp"

namespace hnav {

namespace {

double wrap_pi(double a) {
  while (a > M_PI) a -= 2.0 * M_PI;
  while (a <= -M_PI) a += 2.0 * M_PI;
  return a;
}

}  // namespace

WaypointController::WaypointController(double cell_size,
                                       double heading_tolerance)
    : cell_size_(cell_size), tol_(heading_tolerance) {}

void WaypointController::set_path(const std::vector<Cell>& path_cells) {
  cells_ = path_cells;
  waypoints_.clear();
  for (Cell c : cells_)
    waypoints_.emplace_back((c.col + 0.5) * cell_size_,
                            (c.row + 0.5) * cell_size_);
  index_ = 0;
}

Action WaypointController::act(double x, double y, double yaw) {
  if (waypoints_.empty()) throw NoWaypoints();

  // Advance past any of the next few waypoints whose cell we are already
  // in; the lookahead covers corner cuts where a cell is crossed without
  // the pose being sampled inside it.
  Cell cur{int(std::floor(y / cell_size_)), int(std::floor(x / cell_size_))};
  for (std::size_t j = index_;
       j < std::min(index_ + 3, waypoints_.size()); ++j) {
    if (cells_[j] == cur) {
      index_ = j + 1;
      break;
    }
  }
  // Past the last waypoint but still being asked to act (the believed pose
  // says arrived, the simulator disagrees): keep homing on the final one.
  if (index_ >= waypoints_.size()) index_ = waypoints_.size() - 1;

  auto [tx, ty] = waypoints_[index_];
  double desired = std::atan2(ty - y, tx - x);
  double err = wrap_pi(desired - yaw);
  if (std::abs(err) > tol_)
    return err > 0 ? Action::LookLeft : Action::LookRight;
  return Action::Forward;
}

OracleAgent::OracleAgent(const EnvConfig& env)
    : env_(env),
      controller_(env.cell_size, env.turn_rate * env.action_repeat) {}

void OracleAgent::begin_episode(const Task& task, const TaskContext& ctx,
                                std::uint64_t seed) {
  (void)ctx;
  (void)seed;
  std::vector<Cell> path;
  try {
    path = shortest_path(task.map, task.start, task.goal);
  } catch (const Unreachable&) {
    // Believed map disconnects the pair; home straight at the goal cell.
    path = {task.goal};
  }
  controller_.set_path(path);
}

Action OracleAgent::act(const JointState& obs) {
  return controller_.act(obs.x, obs.y, obs.yaw);
}

void RandomAgent::begin_episode(const Task& task, const TaskContext& ctx,
                                std::uint64_t seed) {
  (void)task;
  (void)ctx;
  rng_ = Rng::derive(seed, 0x726e64);
}

Action RandomAgent::act(const JointState& obs) {
  (void)obs;
  return Action(rng_.uniform_int(0, kNumActions - 1));
}

}  // namespace hnav
