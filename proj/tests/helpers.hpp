#pragma once

#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <queue>
#include <sstream>
#include <string>
#include <vector>

#include "hnav/grid.hpp"
#include "hnav/tape.hpp"

namespace testutil {

// Fresh directory under the system temp root; unique per call.
inline std::string temp_dir(const std::string& tag) {
  static int counter = 0;
  auto base = std::filesystem::temp_directory_path() /
              ("hnav_" + tag + "_" + std::to_string(++counter));
  std::filesystem::remove_all(base);
  std::filesystem::create_directories(base);
  return base.string();
}

// Rewrites one "key = value" line of checkpoint metadata, matching the key
// exactly so patching "frames" never touches "total_frames".
inline std::string patch_metadata(const std::string& meta,
                                  const std::string& key,
                                  const std::string& value) {
  std::istringstream in(meta);
  std::ostringstream out;
  std::string line;
  while (std::getline(in, line)) {
    auto eq = line.find('=');
    std::string k = eq == std::string::npos ? "" : line.substr(0, eq);
    while (!k.empty() && k.back() == ' ') k.pop_back();
    if (k == key)
      out << key << " = " << value << "\n";
    else
      out << line << "\n";
  }
  return out.str();
}

// Square map with every interior cell free.
inline hnav::OccupancyMap open_map(int n) {
  hnav::OccupancyMap m;
  m.size = n;
  m.cells.assign(std::size_t(n) * n, 1);
  for (int r = 1; r < n - 1; ++r)
    for (int c = 1; c < n - 1; ++c) m.set(r, c, 0);
  return m;
}

// 5x5 fixture with a wall bar at (1,2),(2,2): two vertical arms joined at
// the bottom row, so (1,1) to (1,3) costs 6 edges.
inline hnav::OccupancyMap u_map() {
  hnav::OccupancyMap m = open_map(5);
  m.set(1, 2, 1);
  m.set(2, 2, 1);
  return m;
}

// Single free row at row 1, columns 1..n-2.
inline hnav::OccupancyMap corridor_map(int n) {
  hnav::OccupancyMap m;
  m.size = n;
  m.cells.assign(std::size_t(n) * n, 1);
  for (int c = 1; c < n - 1; ++c) m.set(1, c, 0);
  return m;
}

// Plain Dijkstra over unit edge weights, written independently of the BFS
// in the library so path lengths can be cross-checked.
inline std::vector<int> dijkstra_distances(const hnav::OccupancyMap& map,
                                           hnav::Cell from) {
  const int n = map.size;
  std::vector<int> dist(std::size_t(n) * n, -1);
  using Item = std::pair<int, int>;  // (distance, flat index)
  std::priority_queue<Item, std::vector<Item>, std::greater<>> pq;
  if (!map.is_free(from.row, from.col)) return dist;
  int s = from.row * n + from.col;
  dist[std::size_t(s)] = 0;
  pq.push({0, s});
  const int dr[4] = {-1, 1, 0, 0};
  const int dc[4] = {0, 0, -1, 1};
  while (!pq.empty()) {
    auto [d, idx] = pq.top();
    pq.pop();
    if (d > dist[std::size_t(idx)]) continue;
    int r = idx / n, c = idx % n;
    for (int k = 0; k < 4; ++k) {
      int rr = r + dr[k], cc = c + dc[k];
      if (!map.is_free(rr, cc)) continue;
      int nd = d + 1;
      int nidx = rr * n + cc;
      if (dist[std::size_t(nidx)] < 0 || nd < dist[std::size_t(nidx)]) {
        dist[std::size_t(nidx)] = nd;
        pq.push({nd, nidx});
      }
    }
  }
  return dist;
}

// Flood fill over free cells, independent of the library's component count.
inline int flood_components(const hnav::OccupancyMap& map) {
  const int n = map.size;
  std::vector<char> seen(std::size_t(n) * n, 0);
  int comps = 0;
  for (int r = 0; r < n; ++r) {
    for (int c = 0; c < n; ++c) {
      if (!map.is_free(r, c) || seen[std::size_t(r) * n + c]) continue;
      ++comps;
      std::vector<hnav::Cell> stack{{r, c}};
      seen[std::size_t(r) * n + c] = 1;
      while (!stack.empty()) {
        hnav::Cell cur = stack.back();
        stack.pop_back();
        const int dr[4] = {-1, 1, 0, 0};
        const int dc[4] = {0, 0, -1, 1};
        for (int k = 0; k < 4; ++k) {
          int rr = cur.row + dr[k], cc = cur.col + dc[k];
          if (map.is_free(rr, cc) && !seen[std::size_t(rr) * n + cc]) {
            seen[std::size_t(rr) * n + cc] = 1;
            stack.push_back({rr, cc});
          }
        }
      }
    }
  }
  return comps;
}

struct FdReport {
  double max_rel = 0;
  double worst_analytic = 0;
  double worst_numeric = 0;
  int worst_leaf = -1;
  int worst_index = -1;
};

// Central finite differences against reverse-mode gradients for a scalar
// loss built from double leaves. `build` receives the tape and one leaf id
// per entry of `data` and returns the loss id.
inline FdReport fd_check(
    std::vector<std::vector<double>>& data,
    const std::vector<std::pair<int, int>>& shapes,
    const std::function<hnav::Tape<double>::Id(
        hnav::Tape<double>&, const std::vector<hnav::Tape<double>::Id>&)>&
        build,
    double h = 1e-6) {
  auto eval = [&](std::vector<std::vector<double>>& d, bool want_grads,
                  std::vector<std::vector<double>>* grads) {
    hnav::Tape<double> tape;
    std::vector<hnav::Tape<double>::Id> ids;
    for (std::size_t i = 0; i < d.size(); ++i)
      ids.push_back(tape.leaf(shapes[i].first, shapes[i].second, d[i]));
    auto loss = build(tape, ids);
    double value = tape.value(loss)[0];
    if (want_grads) {
      tape.backward(loss);
      grads->clear();
      for (auto id : ids) {
        auto g = tape.gradient(id);
        grads->emplace_back(g.begin(), g.end());
      }
    }
    return value;
  };

  std::vector<std::vector<double>> grads;
  eval(data, true, &grads);

  FdReport rep;
  for (std::size_t li = 0; li < data.size(); ++li) {
    for (std::size_t j = 0; j < data[li].size(); ++j) {
      double keep = data[li][j];
      data[li][j] = keep + h;
      double lp = eval(data, false, nullptr);
      data[li][j] = keep - h;
      double lm = eval(data, false, nullptr);
      data[li][j] = keep;
      double fd = (lp - lm) / (2 * h);
      double an = grads[li][j];
      double rel = std::abs(an - fd) / std::max(1e-6, std::abs(an) + std::abs(fd));
      if (rel > rep.max_rel) {
        rep.max_rel = rel;
        rep.worst_analytic = an;
        rep.worst_numeric = fd;
        rep.worst_leaf = int(li);
        rep.worst_index = int(j);
      }
    }
  }
  return rep;
}

}  // namespace testutil
