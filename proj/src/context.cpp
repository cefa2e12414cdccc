#include "hnav/context.hpp"

#include <algorithm>
#include <cmath>

#include "hnav/errors.hpp"

namespace hnav {

namespace {

// Fractional overlap of pooled bin i (of nc bins over n cells) with each
// source cell index; returns (first_cell, weights).
std::pair<int, std::vector<double>> bin_overlap(int i, int n, int nc) {
  double scale = double(n) / double(nc);
  double lo = i * scale;
  double hi = (i + 1) * scale;
  int first = int(std::floor(lo));
  int last = std::min(n - 1, int(std::ceil(hi)) - 1);
  std::vector<double> w;
  for (int cell = first; cell <= last; ++cell) {
    double overlap = std::min(hi, double(cell + 1)) - std::max(lo, double(cell));
    w.push_back(std::max(0.0, overlap));
  }
  return {first, w};
}

}  // namespace

Cell pooled_cell(Cell cell, int map_size, int nc) {
  return {int(std::int64_t(cell.row) * nc / map_size),
          int(std::int64_t(cell.col) * nc / map_size)};
}

TaskContext encode_context(const Task& task, int nc) {
  if (nc < 5)
    throw InvalidResolution("context resolution must be >= 5, got " +
                            std::to_string(nc));
  const int n = task.map.size;
  TaskContext ctx;
  ctx.nc = nc;
  ctx.data.assign(std::size_t(4) * nc * nc, 0.0f);

  // Channel 0: area-average pooling (fraction of each bin covered by walls).
  double inv_area = double(nc) * nc / (double(n) * n);
  for (int i = 0; i < nc; ++i) {
    auto [r0, wr] = bin_overlap(i, n, nc);
    for (int j = 0; j < nc; ++j) {
      auto [c0, wc] = bin_overlap(j, n, nc);
      double acc = 0.0;
      for (std::size_t a = 0; a < wr.size(); ++a)
        for (std::size_t b = 0; b < wc.size(); ++b)
          acc += wr[a] * wc[b] * task.map.at(r0 + int(a), c0 + int(b));
      ctx.at(0, i, j) = float(acc * inv_area);
    }
  }

  // Channel 1: raw crop centered on start, wall-padded outside the map.
  int half = nc / 2;
  for (int i = 0; i < nc; ++i) {
    for (int j = 0; j < nc; ++j) {
      int r = task.start.row - half + i;
      int c = task.start.col - half + j;
      ctx.at(1, i, j) =
          task.map.in_bounds(r, c) ? float(task.map.at(r, c)) : 1.0f;
    }
  }

  // Channels 2 and 3: one-hot goal and start at pooled coordinates.
  Cell g = pooled_cell(task.goal, n, nc);
  Cell s = pooled_cell(task.start, n, nc);
  ctx.at(2, g.row, g.col) = 1.0f;
  ctx.at(3, s.row, s.col) = 1.0f;
  return ctx;
}

OccupancyMap perturb_map_flip(const OccupancyMap& map, double rho,
                              std::uint64_t seed) {
  OccupancyMap out = map;
  Rng rng = Rng::derive(seed, 0x666c6970);  // map-flip stream
  for (int r = 1; r < map.size - 1; ++r)
    for (int c = 1; c < map.size - 1; ++c)
      if (rng.bernoulli(rho)) out.set(r, c, std::uint8_t(1 - out.at(r, c)));
  return out;
}

OccupancyMap perturb_scale(const OccupancyMap& map, double sx, double sy) {
  OccupancyMap out;
  out.size = map.size;
  out.cells.assign(map.cells.size(), 1);
  for (int r = 0; r < map.size; ++r) {
    int sr = int(std::floor(double(r) / sy));
    for (int c = 0; c < map.size; ++c) {
      int sc = int(std::floor(double(c) / sx));
      if (map.in_bounds(sr, sc)) out.set(r, c, map.at(sr, sc));
    }
  }
  return out;
}

JointState perturb_position(const JointState& obs, double eta, Rng& rng) {
  JointState out = obs;
  out.x += rng.uniform(-eta, eta);
  out.y += rng.uniform(-eta, eta);
  return out;
}

JointState perturb_position(const JointState& obs, double eta,
                            std::uint64_t seed) {
  Rng rng = Rng::derive(seed, 0x706f73);  // position-noise stream
  return perturb_position(obs, eta, rng);
}

}  // namespace hnav
