#pragma once

#include <cstdint>
#include <vector>

#include "hnav/env.hpp"
#include "hnav/grid.hpp"
#include "hnav/rng.hpp"

namespace hnav {

// 4-channel task context: [0] downsampled global occupancy, [1] local
// occupancy crop centered on the start cell (wall-padded), [2] one-hot goal,
// [3] one-hot start. Computed once per episode and held fixed.
struct TaskContext {
  int nc = 0;
  std::vector<float> data;  // channel-major, 4 * nc * nc

  float at(int ch, int row, int col) const {
    return data[(std::size_t(ch) * nc + row) * nc + col];
  }
  float& at(int ch, int row, int col) {
    return data[(std::size_t(ch) * nc + row) * nc + col];
  }
  std::size_t flat_size() const { return data.size(); }
};

TaskContext encode_context(const Task& task, int nc);  // InvalidResolution

// Pooled coordinate of a map cell at context resolution nc.
Cell pooled_cell(Cell cell, int map_size, int nc);

// Each interior cell flips with probability rho; borders untouched;
// connectivity deliberately not repaired.
OccupancyMap perturb_map_flip(const OccupancyMap& map, double rho,
                              std::uint64_t seed);

// Nearest-neighbor resample by independent axis factors, re-cropped/padded
// (with walls) to the original size. Only the context sees this map.
OccupancyMap perturb_scale(const OccupancyMap& map, double sx, double sy);

// Offsets observed x and y by independent uniform noise in [-eta, +eta];
// the other 10 scalars pass through. True simulator state is unaffected.
JointState perturb_position(const JointState& obs, double eta, Rng& rng);
JointState perturb_position(const JointState& obs, double eta,
                            std::uint64_t seed);

}  // namespace hnav
