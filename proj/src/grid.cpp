#include "hnav/grid.hpp"

#include <deque>
#include <fstream>
#include <sstream>

namespace hnav {

namespace {

// Expansion order: up, right, down, left.
constexpr int kDr[4] = {-1, 0, 1, 0};
constexpr int kDc[4] = {0, 1, 0, -1};

// Splits [r0..r1] x [c0..c1] (odd-aligned bounds) with a wall on an even
// line and one door on an odd position. Regions with both extents < 5 stay
// open, which leaves small rooms instead of unit corridors.
void divide(OccupancyMap& map, int r0, int c0, int r1, int c1, Rng& rng) {
  int h = r1 - r0 + 1;
  int w = c1 - c0 + 1;
  bool can_h = h >= 5;
  bool can_v = w >= 5;
  if (!can_h && !can_v) return;
  bool horizontal;
  if (can_h && can_v)
    horizontal = h > w || (h == w && rng.bernoulli(0.5));
  else
    horizontal = can_h;
  if (horizontal) {
    int wall_row = r0 + 1 + 2 * int(rng.uniform_int(0, (h - 3) / 2));
    int door_col = c0 + 2 * int(rng.uniform_int(0, (w - 1) / 2));
    for (int c = c0; c <= c1; ++c) map.set(wall_row, c, 1);
    map.set(wall_row, door_col, 0);
    divide(map, r0, c0, wall_row - 1, c1, rng);
    divide(map, wall_row + 1, c0, r1, c1, rng);
  } else {
    int wall_col = c0 + 1 + 2 * int(rng.uniform_int(0, (w - 3) / 2));
    int door_row = r0 + 2 * int(rng.uniform_int(0, (h - 1) / 2));
    for (int r = r0; r <= r1; ++r) map.set(r, wall_col, 1);
    map.set(door_row, wall_col, 0);
    divide(map, r0, c0, r1, wall_col - 1, rng);
    divide(map, r0, wall_col + 1, r1, c1, rng);
  }
}

// Flood-fill labels for free cells; returns component count.
int label_components(const OccupancyMap& map, std::vector<int>& label) {
  int n = map.size;
  label.assign(std::size_t(n) * n, -1);
  int count = 0;
  for (int r = 0; r < n; ++r) {
    for (int c = 0; c < n; ++c) {
      if (map.at(r, c) != 0 || label[std::size_t(r) * n + c] >= 0) continue;
      std::deque<Cell> queue{{r, c}};
      label[std::size_t(r) * n + c] = count;
      while (!queue.empty()) {
        Cell cur = queue.front();
        queue.pop_front();
        for (int k = 0; k < 4; ++k) {
          int nr = cur.row + kDr[k];
          int nc = cur.col + kDc[k];
          if (map.is_free(nr, nc) && label[std::size_t(nr) * n + nc] < 0) {
            label[std::size_t(nr) * n + nc] = count;
            queue.push_back({nr, nc});
          }
        }
      }
      ++count;
    }
  }
  return count;
}

}  // namespace

OccupancyMap generate_map(int size, std::uint64_t seed) {
  if (size < 5 || size % 2 == 0)
    throw InvalidSize("map size must be odd and >= 5, got " +
                      std::to_string(size));
  OccupancyMap map;
  map.size = size;
  map.cells.assign(std::size_t(size) * size, 0);
  for (int i = 0; i < size; ++i) {
    map.set(0, i, 1);
    map.set(size - 1, i, 1);
    map.set(i, 0, 1);
    map.set(i, size - 1, 1);
  }
  Rng rng = Rng::derive(seed, 0x6d617067);  // map generation stream
  divide(map, 1, 1, size - 2, size - 2, rng);

  // Repair pass: merge components by removing separating walls until one
  // remains. Recursive division already connects everything; this is a
  // guarantee, not a hope.
  std::vector<int> label;
  while (label_components(map, label) > 1) {
    bool removed = false;
    for (int r = 1; r < size - 1 && !removed; ++r) {
      for (int c = 1; c < size - 1 && !removed; ++c) {
        if (map.at(r, c) == 0) continue;
        int first = -1;
        for (int k = 0; k < 4 && !removed; ++k) {
          int nr = r + kDr[k];
          int nc = c + kDc[k];
          if (!map.is_free(nr, nc)) continue;
          int lab = label[std::size_t(nr) * size + nc];
          if (first < 0)
            first = lab;
          else if (lab != first) {
            map.set(r, c, 0);
            removed = true;
          }
        }
      }
    }
    if (!removed) break;  // isolated free region fully walled in: impossible
  }
  return map;
}

std::vector<int> bfs_distances(const OccupancyMap& map, Cell from) {
  int n = map.size;
  std::vector<int> dist(std::size_t(n) * n, -1);
  if (!map.is_free(from.row, from.col)) return dist;
  std::deque<Cell> queue{from};
  dist[std::size_t(from.row) * n + from.col] = 0;
  while (!queue.empty()) {
    Cell cur = queue.front();
    queue.pop_front();
    int d = dist[std::size_t(cur.row) * n + cur.col];
    for (int k = 0; k < 4; ++k) {
      int nr = cur.row + kDr[k];
      int nc = cur.col + kDc[k];
      if (map.is_free(nr, nc) && dist[std::size_t(nr) * n + nc] < 0) {
        dist[std::size_t(nr) * n + nc] = d + 1;
        queue.push_back({nr, nc});
      }
    }
  }
  return dist;
}

Task sample_task(const OccupancyMap& map, int d_min, int d_max,
                 std::uint64_t seed) {
  if (d_min < 1 || d_min > d_max)
    throw NoFeasiblePair("bad distance range [" + std::to_string(d_min) +
                         ", " + std::to_string(d_max) + "]");
  int n = map.size;
  std::vector<std::pair<Cell, Cell>> pairs;
  for (int r = 1; r < n - 1; ++r) {
    for (int c = 1; c < n - 1; ++c) {
      if (!map.is_free(r, c)) continue;
      auto dist = bfs_distances(map, {r, c});
      for (int gr = 1; gr < n - 1; ++gr)
        for (int gc = 1; gc < n - 1; ++gc) {
          int d = dist[std::size_t(gr) * n + gc];
          if (d >= d_min && d <= d_max) pairs.push_back({{r, c}, {gr, gc}});
        }
    }
  }
  if (pairs.empty())
    throw NoFeasiblePair("no free-cell pair with distance in [" +
                         std::to_string(d_min) + ", " +
                         std::to_string(d_max) + "]");
  Rng rng = Rng::derive(seed, 0x7461736b);  // task sampling stream
  auto& pick = pairs[rng.uniform_int(0, std::uint64_t(pairs.size()) - 1)];
  Task task;
  task.map = map;
  task.start = pick.first;
  task.goal = pick.second;
  task.id = seed;
  return task;
}

std::vector<Cell> shortest_path(const OccupancyMap& map, Cell a, Cell b) {
  int n = map.size;
  if (!map.is_free(a.row, a.col) || !map.is_free(b.row, b.col))
    throw Unreachable("endpoint is not a free cell");
  if (a == b) return {a};
  std::vector<int> parent(std::size_t(n) * n, -1);
  std::vector<char> seen(std::size_t(n) * n, 0);
  std::deque<Cell> queue{a};
  seen[std::size_t(a.row) * n + a.col] = 1;
  while (!queue.empty()) {
    Cell cur = queue.front();
    queue.pop_front();
    if (cur == b) break;
    for (int k = 0; k < 4; ++k) {
      int nr = cur.row + kDr[k];
      int nc = cur.col + kDc[k];
      if (map.is_free(nr, nc) && !seen[std::size_t(nr) * n + nc]) {
        seen[std::size_t(nr) * n + nc] = 1;
        parent[std::size_t(nr) * n + nc] = cur.row * n + cur.col;
        queue.push_back({nr, nc});
      }
    }
  }
  if (!seen[std::size_t(b.row) * n + b.col])
    throw Unreachable("goal not reachable from start");
  std::vector<Cell> path;
  Cell cur = b;
  while (!(cur == a)) {
    path.push_back(cur);
    int p = parent[std::size_t(cur.row) * n + cur.col];
    cur = {p / n, p % n};
  }
  path.push_back(a);
  std::vector<Cell> fwd(path.rbegin(), path.rend());
  return fwd;
}

std::vector<Cell> landmarks(const OccupancyMap& map, Cell start, Cell goal,
                            int spacing) {
  if (spacing < 1) throw InvalidSize("landmark spacing must be >= 1");
  auto path = shortest_path(map, start, goal);
  std::vector<Cell> out;
  for (std::size_t i = std::size_t(spacing); i < path.size();
       i += std::size_t(spacing))
    out.push_back(path[i]);
  if (out.empty() || !(out.back() == goal)) out.push_back(goal);
  return out;
}

int free_component_count(const OccupancyMap& map) {
  std::vector<int> label;
  return label_components(map, label);
}

void write_map(const std::string& path, const OccupancyMap& map) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw std::runtime_error("cannot open for writing: " + path);
  f << map.size << ' ' << map.size << '\n';
  for (int r = 0; r < map.size; ++r) {
    for (int c = 0; c < map.size; ++c) f << (map.at(r, c) ? '#' : '.');
    f << '\n';
  }
  if (!f) throw std::runtime_error("write failed: " + path);
}

OccupancyMap read_map(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open: " + path);
  std::string header;
  if (!std::getline(f, header)) throw ParseError("missing header", 1, 1);
  std::istringstream hs(header);
  int rows = 0, cols = 0;
  if (!(hs >> rows >> cols)) throw ParseError("malformed header", 1, 1);
  if (rows != cols || rows < 5 || rows % 2 == 0)
    throw ParseError("header must be \"N N\" with N odd and >= 5", 1, 1);
  std::string tail;
  if (hs >> tail) throw ParseError("trailing header content", 1, 1);

  OccupancyMap map;
  map.size = rows;
  map.cells.assign(std::size_t(rows) * rows, 0);
  for (int r = 0; r < rows; ++r) {
    std::string line;
    if (!std::getline(f, line))
      throw ParseError("missing map row", r + 2, 1);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (int(line.size()) != cols)
      throw ParseError("row has wrong length", r + 2, int(line.size()) + 1);
    for (int c = 0; c < cols; ++c) {
      if (line[std::size_t(c)] == '#')
        map.set(r, c, 1);
      else if (line[std::size_t(c)] == '.')
        map.set(r, c, 0);
      else
        throw ParseError("unexpected character", r + 2, c + 1);
    }
  }
  return map;
}

void write_tasks(const std::string& path, const std::vector<TaskPair>& tasks) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw std::runtime_error("cannot open for writing: " + path);
  for (auto& t : tasks)
    f << "start " << t.start.row << ' ' << t.start.col << " goal "
      << t.goal.row << ' ' << t.goal.col << '\n';
  if (!f) throw std::runtime_error("write failed: " + path);
}

std::vector<TaskPair> read_tasks(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open: " + path);
  std::vector<TaskPair> out;
  std::string line;
  int lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string kw1, kw2;
    TaskPair t;
    if (!(ls >> kw1 >> t.start.row >> t.start.col >> kw2 >> t.goal.row >>
          t.goal.col) ||
        kw1 != "start" || kw2 != "goal")
      throw ParseError("malformed task line", lineno, 1);
    out.push_back(t);
  }
  return out;
}

std::uint64_t map_fingerprint(const OccupancyMap& map) {
  // FNV-1a over size and cells.
  std::uint64_t h = 1469598103934665603ull;
  auto mix = [&h](std::uint8_t byte) {
    h ^= byte;
    h *= 1099511628211ull;
  };
  for (int i = 0; i < 4; ++i) mix(std::uint8_t(map.size >> (8 * i)));
  for (auto c : map.cells) mix(c);
  return h;
}

}  // namespace hnav
