#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hnav/errors.hpp"
#include "hnav/rng.hpp"

namespace hnav {

struct Cell {
  int row = 0;
  int col = 0;
  bool operator==(const Cell&) const = default;
};

// N x N binary grid, row-major; 1 = wall, 0 = free. Invariants: N odd and
// >= 5, all border cells walls, free cells form one 4-connected component.
struct OccupancyMap {
  int size = 0;
  std::vector<std::uint8_t> cells;

  std::uint8_t at(int row, int col) const {
    return cells[std::size_t(row) * size + col];
  }
  void set(int row, int col, std::uint8_t v) {
    cells[std::size_t(row) * size + col] = v;
  }
  bool in_bounds(int row, int col) const {
    return row >= 0 && row < size && col >= 0 && col < size;
  }
  bool is_free(int row, int col) const {
    return in_bounds(row, col) && at(row, col) == 0;
  }
  bool operator==(const OccupancyMap&) const = default;
};

struct Task {
  OccupancyMap map;
  Cell start;
  Cell goal;
  std::uint64_t id = 0;
};

// Recursive-division generator with door placement, then a repair pass that
// knocks out walls until the free cells form a single component.
OccupancyMap generate_map(int size, std::uint64_t seed);

// Uniform draw over all ordered free-cell pairs whose BFS distance lies in
// [d_min, d_max]. Throws NoFeasiblePair when no such pair exists.
Task sample_task(const OccupancyMap& map, int d_min, int d_max,
                 std::uint64_t seed);

// BFS distances from `from` to every cell; -1 for walls/unreachable.
std::vector<int> bfs_distances(const OccupancyMap& map, Cell from);

// Minimal 4-connected free-cell path from a to b, inclusive. Expansion order
// up, right, down, left, so the result is deterministic.
std::vector<Cell> shortest_path(const OccupancyMap& map, Cell a, Cell b);

// Cells at indices spacing, 2*spacing, ... along shortest_path(start, goal),
// with goal always last and emitted once.
std::vector<Cell> landmarks(const OccupancyMap& map, Cell start, Cell goal,
                            int spacing);

int free_component_count(const OccupancyMap& map);

// Map file: line 1 "N N", then N lines of N chars, '#' wall / '.' free.
void write_map(const std::string& path, const OccupancyMap& map);
OccupancyMap read_map(const std::string& path);

// Task file: one "start R C goal R C" line per task.
struct TaskPair {
  Cell start;
  Cell goal;
};
void write_tasks(const std::string& path, const std::vector<TaskPair>& tasks);
std::vector<TaskPair> read_tasks(const std::string& path);

// Stable content hash of a map, used in task ids and determinism checks.
std::uint64_t map_fingerprint(const OccupancyMap& map);

}  // namespace hnav
