#pragma once

#include <cstdint>
#include <string>

#include "hnav/context.hpp"
#include "hnav/env.hpp"
#include "hnav/grid.hpp"

namespace hnav {

// A policy under evaluation. begin_episode hands over the task description
// the agent is allowed to believe (map possibly perturbed, context built
// from that same map); act sees the observation stream (possibly
// noise-perturbed). The true simulator is never shown to the agent.
class Agent {
 public:
  virtual ~Agent() = default;
  virtual std::string name() const = 0;
  virtual void begin_episode(const Task& task, const TaskContext& ctx,
                             std::uint64_t seed) = 0;
  virtual Action act(const JointState& obs) = 0;
};

}  // namespace hnav
