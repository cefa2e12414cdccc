#pragma once

#include <vector>

#include "hnav/agent.hpp"

namespace hnav {

// Hand-crafted waypoint follower: plans a grid path on the map it is given,
// then walks the cell centers with a rotate-or-advance rule. It reads the
// pose directly from the observation (the perfect-information baseline);
// position noise, when injected, corrupts exactly that pose.
class WaypointController {
 public:
  WaypointController(double cell_size, double heading_tolerance);

  // Waypoints are every cell center of the grid path, in order.
  void set_path(const std::vector<Cell>& path_cells);
  bool has_waypoints() const { return !waypoints_.empty(); }
  std::size_t remaining() const { return waypoints_.size() - index_; }

  Action act(double x, double y, double yaw);  // throws NoWaypoints

 private:
  double cell_size_;
  double tol_;
  std::vector<Cell> cells_;
  std::vector<std::pair<double, double>> waypoints_;
  std::size_t index_ = 0;
};

class OracleAgent : public Agent {
 public:
  explicit OracleAgent(const EnvConfig& env = {});

  std::string name() const override { return "oracle"; }
  void begin_episode(const Task& task, const TaskContext& ctx,
                     std::uint64_t seed) override;
  Action act(const JointState& obs) override;

 private:
  EnvConfig env_;
  WaypointController controller_;
};

class RandomAgent : public Agent {
 public:
  RandomAgent() : rng_(0) {}
  std::string name() const override { return "random"; }
  void begin_episode(const Task& task, const TaskContext& ctx,
                     std::uint64_t seed) override;
  Action act(const JointState& obs) override;

 private:
  Rng rng_;
};

}  // namespace hnav
