// Acceptance gate: ten end-to-end checks over the full stack, from gradient
// correctness up to trained-agent trends and pipeline determinism. Each
// criterion prints one PASS/FAIL line; the process exits nonzero if any
// fail. Training runs cache their checkpoints under --cache so reruns skip
// straight to evaluation.

#include <sys/wait.h>

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "hnav/agent.hpp"
#include "hnav/checkpoint.hpp"
#include "hnav/context.hpp"
#include "hnav/env.hpp"
#include "hnav/errors.hpp"
#include "hnav/eval.hpp"
#include "hnav/grid.hpp"
#include "hnav/mcts.hpp"
#include "hnav/model.hpp"
#include "hnav/nn.hpp"
#include "hnav/oracle.hpp"
#include "hnav/qagent.hpp"
#include "hnav/replay.hpp"
#include "hnav/rng.hpp"
#include "hnav/trainer.hpp"
#include "helpers.hpp"
#include "oracles.hpp"

namespace fs = std::filesystem;
using namespace hnav;

namespace {

struct Options {
  std::string cli;
  std::string cache = "acceptance_cache";
  std::set<int> only;  // empty: run everything
};

struct Outcome {
  bool ok = true;
  std::string detail;
};

Outcome pass(std::string detail) { return {true, std::move(detail)}; }
Outcome fail(std::string detail) { return {false, std::move(detail)}; }

std::string fmt(const char* f, ...) {
  char buf[512];
  va_list ap;
  va_start(ap, f);
  vsnprintf(buf, sizeof buf, f, ap);
  va_end(ap);
  return buf;
}

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

std::string read_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// ---------------------------------------------------------------------------
// 1. Finite-difference gradient checks on randomized small networks.

int param_group(const std::string& name) {
  if (name.rfind("enc.", 0) == 0) return 0;
  if (name.rfind("trunk.", 0) == 0 || name.rfind("hyper.", 0) == 0) return 1;
  if (name.rfind("pred.", 0) == 0) return 2;
  return 3;
}

Outcome check_gradients(const Options&) {
  ModelConfig mc;
  mc.d = 4;
  mc.h_f = 8;
  mc.enc_hidden = 8;
  mc.trunk_hidden = 8;
  mc.embed = 8;
  mc.pred_hidden = 8;
  mc.nc = 5;
  mc.map_size = 7;
  mc.v_max_value = 8.0;
  mc.v_max_step = 50.0;

  ParamStoreT<double> store;
  register_hypermodel(store, mc);
  Rng prng = Rng::derive(101, 0x67726164);
  for (double& v : store.flat()) v = prng.uniform(-0.4, 0.4);

  ReplayBuffer buf(16);
  Rng trng = Rng::derive(101, 0x74726a73);
  for (int i = 0; i < 6; ++i)
    buf.append(oracles::make_random_trajectory(trng, mc.map_size, mc.nc, 2, 8));

  Hypermodel probe(mc);
  Rng irng = Rng::derive(101, 0x696e6974);
  probe.init(irng);
  SampleConfig scfg;
  scfg.batch = 4;
  scfg.unroll = 3;
  scfg.nstep = 3;
  scfg.p_her = 0.5;
  scfg.gamma = 1.0;
  Rng srng = Rng::derive(101, 0x73616d70);
  auto targets = sample_batch(buf, scfg, probe, srng);
  auto batch = make_loss_batch<double>(targets, store, mc);

  std::vector<double> grad(store.flat_size(), 0.0);
  loss_and_grad<double>(store, mc, batch, 1.0, std::span<double>(grad));
  auto loss_at = [&]() {
    return loss_and_grad<double>(store, mc, batch, 1.0, std::span<double>())
        .total;
  };

  const double h = 1e-6;
  double worst[4] = {0, 0, 0, 0};  // encoder, hyper path, head, anything else
  double joint = 0;
  auto flat = store.flat();
  for (int id = 0; id < int(store.tensor_count()); ++id) {
    const auto& e = store.entry(id);
    const int g = param_group(e.name);
    for (std::size_t j = 0; j < e.size; ++j) {
      const std::size_t idx = e.offset + j;
      const double keep = flat[idx];
      flat[idx] = keep + h;
      const double lp = loss_at();
      flat[idx] = keep - h;
      const double lm = loss_at();
      flat[idx] = keep;
      const double num = (lp - lm) / (2 * h);
      const double an = grad[idx];
      const double rel =
          std::abs(an - num) / std::max(1e-6, std::abs(an) + std::abs(num));
      worst[g] = std::max(worst[g], rel);
      joint = std::max(joint, rel);
    }
  }

  // Action-value loss: the exact learner graph rebuilt in double precision.
  QNetConfig qc;
  qc.input = kEncoderInput + context_input_size(mc.nc);
  qc.hidden = 8;
  qc.layers = 2;
  ParamStoreT<double> qstore;
  register_qnet(qstore, qc);
  Rng qrng = Rng::derive(101, 0x71677264);
  std::vector<std::vector<double>> leaves;
  std::vector<std::pair<int, int>> shapes;
  for (int id = 0; id < int(qstore.tensor_count()); ++id) {
    const auto& e = qstore.entry(id);
    shapes.push_back(e.shape.size() == 2
                         ? std::pair<int, int>{e.shape[0], e.shape[1]}
                         : std::pair<int, int>{1, e.shape[0]});
    std::vector<double> vals(e.size);
    for (double& v : vals) v = qrng.uniform(-0.5, 0.5);
    leaves.push_back(std::move(vals));
  }
  const int B = 4;
  std::vector<double> x(std::size_t(B) * qc.input), y(B), isw(B);
  std::vector<double> onehot(std::size_t(B) * kNumActions, 0.0);
  for (double& v : x) v = qrng.uniform(-1.0, 1.0);
  for (int b = 0; b < B; ++b) {
    y[std::size_t(b)] = qrng.uniform(-6.0, 0.0);
    isw[std::size_t(b)] = qrng.uniform(0.2, 1.0);
    onehot[std::size_t(b) * kNumActions + qrng.uniform_int(0, 5)] = 1.0;
  }
  auto qrep = testutil::fd_check(
      leaves, shapes,
      [&](Tape<double>& tape, const std::vector<Tape<double>::Id>& ids) {
        auto cur = tape.constant(B, qc.input, x);
        std::size_t k = 0;
        for (int l = 1; l <= qc.layers; ++l) {
          auto w = ids[k++];
          auto bias = ids[k++];
          cur = tape.elu(tape.linear(cur, w, bias));
        }
        auto qout = tape.linear(cur, ids[k], ids[k + 1]);
        auto sel = tape.rowsum(
            tape.mul(qout, tape.constant(B, kNumActions, onehot)));
        return tape.weighted_mse(sel, tape.constant(B, 1, y),
                                 tape.constant(B, 1, isw));
      });

  const std::string detail =
      fmt("rel err: encoder %.2e, weight-generator %.2e, head %.2e, "
          "joint %.2e, action-value %.2e",
          worst[0], worst[1], worst[2], joint, qrep.max_rel);
  const double lim = 1e-3;
  if (worst[0] < lim && worst[1] < lim && worst[2] < lim && joint < lim &&
      qrep.max_rel < lim)
    return pass(detail);
  return fail(detail);
}

// ---------------------------------------------------------------------------
// 2. Hindsight relabeling against brute-force re-evaluation.

Outcome check_hindsight(const Options&) {
  const int map_size = 7, nc = 7;
  ReplayBuffer buf(10000);
  Rng trng = Rng::derive(202, 0x74726a73);
  for (int i = 0; i < 10000; ++i)
    buf.append(oracles::make_random_trajectory(trng, map_size, nc, 1, 12));
  auto snap = buf.snapshot();
  if (snap.size() != 10000) return fail("buffer lost trajectories");

  // Direct relabel at every start position of every stored trajectory:
  // the returned goal must sit under a later observation, done lands on the
  // first such arrival, and the context is rebuilt from the new goal.
  long relabels = 0;
  for (std::size_t i = 0; i < snap.size(); ++i) {
    const Trajectory& traj = *snap[i];
    const int T = traj.length();
    Rng rr = Rng::derive(202, 0x72656c62, i);
    for (int t = 0; t < T; ++t) {
      RelabelResult r = relabel(traj, t, rr);
      int first = -1;
      for (int p = t + 1; p <= T; ++p)
        if (cell_of(traj.obs_at(p)) == r.goal) {
          first = p;
          break;
        }
      if (first < 0)
        return fail(fmt("traj %zu t=%d: goal never visited after t", i, t));
      if (r.done_position != first)
        return fail(fmt("traj %zu t=%d: done at %d, first arrival %d", i, t,
                        r.done_position, first));
      Task want;
      want.map = traj.task.map;
      want.start = traj.task.start;
      want.goal = r.goal;
      TaskContext ctx = encode_context(want, traj.context.nc);
      if (ctx.data != r.context.data)
        return fail(fmt("traj %zu t=%d: relabeled context mismatch", i, t));
      ++relabels;
    }
    if (i < 64) {
      bool threw = false;
      try {
        relabel(traj, T, rr);
      } catch (const NoFutureStep&) {
        threw = true;
      }
      if (!threw) return fail("relabel past the final step did not throw");
    }
  }

  // Sampled targets, every field recomputed from scratch.
  ModelConfig mc;
  mc.d = 4;
  mc.h_f = 8;
  mc.enc_hidden = 8;
  mc.trunk_hidden = 8;
  mc.embed = 8;
  mc.pred_hidden = 8;
  mc.nc = nc;
  mc.map_size = map_size;
  mc.v_max_value = 12.0;
  Hypermodel model(mc);
  Rng irng = Rng::derive(202, 0x696e6974);
  model.init(irng);

  long verified = 0;
  Rng srng = Rng::derive(202, 0x73616d70);
  struct Sweep {
    double p_her, gamma;
    int reps;
  };
  for (const Sweep& sw : {Sweep{1.0, 1.0, 24}, Sweep{0.5, 1.0, 8},
                          Sweep{0.0, 1.0, 4}, Sweep{1.0, 0.5, 4}}) {
    SampleConfig scfg;
    scfg.batch = 256;
    scfg.unroll = 5;
    scfg.nstep = 5;
    scfg.p_her = sw.p_her;
    scfg.gamma = sw.gamma;
    for (int rep = 0; rep < sw.reps; ++rep) {
      auto targets = sample_batch(buf, scfg, model, srng);
      for (const auto& tgt : targets) {
        std::string err = oracles::verify_target(tgt, snap, scfg, model);
        if (!err.empty()) return fail("target mismatch: " + err);
        ++verified;
      }
    }
  }

  // Bootstrapped return against a direct sum. Dyadic inputs make every
  // intermediate exact, so equality is independent of summation order.
  Rng nrng = Rng::derive(202, 0x6e737465);
  for (int i = 0; i < 2000; ++i) {
    const int n = int(nrng.uniform_int(1, 8));
    const double gamma = std::array<double, 3>{1.0, 0.5, 0.25}[std::size_t(
        nrng.uniform_int(0, 2))];
    std::vector<double> rewards(std::size_t(n), 0.0);
    std::vector<double> masks(std::size_t(n) + 1, 0.0);
    for (auto& r : rewards) r = nrng.bernoulli(0.5) ? 0.0 : -1.0;
    for (auto& m : masks) m = nrng.bernoulli(0.8) ? 1.0 : 0.0;
    const double v = double(nrng.uniform_int(-48, 0)) * 0.25;
    double acc = 0, g = 1;
    for (int j = 0; j < n; ++j) {
      acc += g * masks[std::size_t(j)] * rewards[std::size_t(j)];
      g *= gamma;
    }
    acc += g * masks[std::size_t(n)] * v;
    const double got = nstep_return(rewards, masks, gamma, v);
    if (got != acc)
      return fail(fmt("n-step return %.17g != direct %.17g", got, acc));
  }

  return pass(fmt("%ld relabels, %ld sampled targets, 2000 return sums",
                  relabels, verified));
}

// ---------------------------------------------------------------------------
// 3. Search against value iteration on a chain MDP with the true model.

// Five one-hot latent states; action 1 advances toward the absorbing state
// 4, everything else stays put. Entering or sitting in state 4 is free,
// every other transition costs 1.
struct ChainModel : PlanModel {
  std::array<float, 5> values{};

  static int state_of(std::span<const float> s) {
    int best = 0;
    for (int i = 1; i < 5; ++i)
      if (s[std::size_t(i)] > s[std::size_t(best)]) best = i;
    return best;
  }

  int latent_dim() const override { return 5; }

  void evaluate(std::span<const float> s, std::span<float> prior6,
                float& value) override {
    for (int a = 0; a < 6; ++a) prior6[std::size_t(a)] = 1.0f / 6.0f;
    value = values[std::size_t(state_of(s))];
  }

  void step(std::span<const float> s, int action, std::span<float> s_next,
            float& reward) override {
    const int i = state_of(s);
    const int j = (action == 1) ? std::min(i + 1, 4) : i;
    for (int k = 0; k < 5; ++k) s_next[std::size_t(k)] = (k == j) ? 1.f : 0.f;
    reward = (i == 4 || j == 4) ? 0.0f : -1.0f;
  }
};

Outcome check_search_oracle(const Options&) {
  ChainModel model;
  std::array<double, 5> v{};
  std::array<int, 5> best{};
  for (int it = 0; it < 64; ++it) {
    for (int i = 0; i < 5; ++i) {
      double vb = -1e18;
      int ab = 0;
      for (int a = 0; a < 6; ++a) {
        const int j = (a == 1) ? std::min(i + 1, 4) : i;
        const double q = ((i == 4 || j == 4) ? 0.0 : -1.0) + v[std::size_t(j)];
        if (q > vb + 1e-12) {
          vb = q;
          ab = a;
        }
      }
      v[std::size_t(i)] = vb;
      best[std::size_t(i)] = ab;
    }
  }
  for (int i = 0; i < 5; ++i) model.values[std::size_t(i)] = float(v[i]);

  SearchConfig cfg;
  cfg.num_simulations = 200;
  cfg.discount = 1.0;

  int checked = 0;
  for (std::uint64_t seed = 1; seed <= 100; ++seed) {
    for (int state = 0; state < 4; ++state) {
      std::array<float, 5> root{};
      root[std::size_t(state)] = 1.0f;
      Rng rng(seed);
      SearchResult res =
          mcts_search(model, root, cfg, SearchMode::Train, rng);
      Rng pick(0);
      const int a = select_action(res.visit_distribution, 0.0, pick);
      if (a != best[std::size_t(state)])
        return fail(fmt("seed %llu state %d: picked %d, optimal %d",
                        (unsigned long long)seed, state, a,
                        best[std::size_t(state)]));
      ++checked;
    }
  }
  return pass(fmt("%d searches matched value iteration (v0=%g)", checked,
                  v[0]));
}

// ---------------------------------------------------------------------------
// 4. Generated-map invariants and task-sampler range guarantees.

Outcome check_maps_and_tasks(const Options&) {
  long maps_checked = 0, tasks_checked = 0, infeasible_verified = 0;
  for (int size : {5, 7, 9, 13}) {
    for (int i = 0; i < 1000; ++i) {
      const std::uint64_t seed =
          Rng::derive(404, std::uint64_t(size), std::uint64_t(i)).next_u64();
      OccupancyMap map = generate_map(size, seed);
      if (map.size != size) return fail(fmt("size %d map %d: wrong size", size, i));
      for (int k = 0; k < size; ++k)
        if (map.at(0, k) != 1 || map.at(size - 1, k) != 1 ||
            map.at(k, 0) != 1 || map.at(k, size - 1) != 1)
          return fail(fmt("size %d map %d: open border cell", size, i));
      if (free_component_count(map) != 1)
        return fail(fmt("size %d map %d: %d free components", size, i,
                        free_component_count(map)));
      ++maps_checked;

      if (i % 5 != 0) continue;
      struct Range {
        int lo, hi;
      };
      const Range ranges[] = {{1, size},
                              {size / 2, size},
                              {1, 1},
                              {3, 3},
                              {2 * size, 3 * size}};
      int ri = 0;
      for (const Range& rg : ranges) {
        const std::uint64_t ts =
            Rng::derive(405, seed, std::uint64_t(ri++)).next_u64();
        try {
          Task t = sample_task(map, rg.lo, rg.hi, ts);
          auto dist = bfs_distances(map, t.start);
          const int d =
              dist[std::size_t(t.goal.row) * std::size_t(size) +
                   std::size_t(t.goal.col)];
          if (d < rg.lo || d > rg.hi)
            return fail(fmt("size %d map %d: sampled d=%d outside [%d,%d]",
                            size, i, d, rg.lo, rg.hi));
          ++tasks_checked;
        } catch (const NoFeasiblePair&) {
          for (int r = 1; r < size - 1; ++r)
            for (int c = 1; c < size - 1; ++c) {
              if (!map.is_free(r, c)) continue;
              auto dist = bfs_distances(map, {r, c});
              for (int d : dist)
                if (d >= rg.lo && d <= rg.hi)
                  return fail(
                      fmt("size %d map %d: sampler claimed [%d,%d] infeasible "
                          "but a pair exists",
                          size, i, rg.lo, rg.hi));
            }
          ++infeasible_verified;
        }
      }
    }
  }
  return pass(fmt("%ld maps, %ld sampled tasks in range, %ld infeasible "
                  "ranges confirmed empty",
                  maps_checked, tasks_checked, infeasible_verified));
}

// ---------------------------------------------------------------------------
// 5. Simulator contract: cruise speed, wall integrity, reward accounting.

bool square_overlaps_wall(const OccupancyMap& map, double cx, double cy,
                          double radius, double cs) {
  const double x0 = cx - radius, x1 = cx + radius;
  const double y0 = cy - radius, y1 = cy + radius;
  const double extent = map.size * cs;
  if (x0 < 0 || y0 < 0 || x1 > extent || y1 > extent) return true;
  for (int r = 0; r < map.size; ++r)
    for (int c = 0; c < map.size; ++c) {
      if (map.at(r, c) == 0) continue;
      const double wx0 = c * cs, wx1 = (c + 1) * cs;
      const double wy0 = r * cs, wy1 = (r + 1) * cs;
      if (x0 < wx1 && x1 > wx0 && y0 < wy1 && y1 > wy0) return true;
    }
  return false;
}

Outcome check_simulator(const Options&) {
  // Cruise: from rest, top speed settles at 50 units per env-step, so one
  // 100-unit cell takes exactly two steps.
  OccupancyMap open = testutil::open_map(13);
  Task task;
  task.map = open;
  task.start = {6, 1};
  task.goal = {6, 11};
  MazeEnv env;
  std::uint64_t face = 256;
  for (std::uint64_t s = 0; s < 256; ++s) {
    env.reset(task, s);
    if (env.true_yaw() == 0.0) {
      face = s;
      break;
    }
  }
  if (face == 256) return fail("no zero-heading reset seed in range");
  env.reset(task, face);
  double prev = env.true_x();
  for (int step = 1; step <= 10; ++step) {
    env.step(Action::Forward);
    const double dx = env.true_x() - prev;
    prev = env.true_x();
    if (step == 1) {
      if (dx >= 50.0) return fail("no acceleration phase from rest");
    } else if (std::abs(dx - 50.0) > 1e-9) {
      return fail(fmt("step %d displacement %.12f != 50", step, dx));
    }
  }
  const double before = env.true_x();
  env.step(Action::Forward);
  env.step(Action::Forward);
  if (std::abs((env.true_x() - before) - 100.0) > 2e-9)
    return fail("cell not crossed in two steps at cruise speed");

  // Non-penetration over 1e5 random-action steps.
  OccupancyMap maze = generate_map(9, 21);
  EnvConfig cfg;
  cfg.timeout = 1000000;
  Task rt = sample_task(maze, 1, 8, 5);
  MazeEnv renv(cfg);
  Rng arng = Rng::derive(505, 0x616374);
  renv.reset(rt, arng.next_u64());
  for (long i = 0; i < 100000; ++i) {
    if (renv.done()) renv.reset(rt, arng.next_u64());
    renv.step(Action(arng.uniform_int(0, 5)));
    if (square_overlaps_wall(maze, renv.true_x(), renv.true_y(),
                             cfg.agent_radius, cfg.cell_size))
      return fail(fmt("wall penetration at step %ld (x=%.3f y=%.3f)", i,
                      renv.true_x(), renv.true_y()));
  }

  // Reward accounting: a successful episode of T steps sums to -(T-1).
  int successes = 0;
  for (int trial = 0; trial < 10; ++trial) {
    OccupancyMap m = generate_map(9, std::uint64_t(trial) * 97 + 1);
    Task t = sample_task(m, 1, 4, std::uint64_t(trial) * 1000 + 3);
    OracleAgent oracle;
    TaskContext ctx = encode_context(t, m.size);
    MazeEnv e;
    JointState obs = e.reset(t, std::uint64_t(trial));
    oracle.begin_episode(t, ctx, std::uint64_t(trial));
    double sum = 0;
    bool reached = false;
    while (!e.done()) {
      StepResult res = e.step(oracle.act(obs));
      obs = res.next_obs;
      sum += res.reward;
      reached = res.info.reached_goal;
    }
    if (!reached) continue;
    ++successes;
    const double want = -(double(e.steps_taken()) - 1.0);
    if (sum != want)
      return fail(fmt("trial %d: reward sum %.1f != %.1f over %d steps",
                      trial, sum, want, e.steps_taken()));
  }
  if (successes < 8)
    return fail(fmt("only %d/10 scripted episodes reached the goal",
                    successes));
  return pass(fmt("cruise 50/step, 100000 collision-free steps, %d reward "
                  "sums verified",
                  successes));
}

// ---------------------------------------------------------------------------
// 6. Overfit descent on a frozen buffer.

Outcome check_overfit(const Options&) {
  TrainConfig tc;
  tc.agent = "mmn";
  tc.seed = 606;
  tc.d = 8;
  tc.h_f = 16;
  tc.enc_hidden = 32;
  tc.trunk_hidden = 32;
  tc.embed = 16;
  tc.pred_hidden = 32;
  tc.nc = 7;
  tc.map_size = 7;
  tc.timeout = 6;
  tc.num_simulations = 8;
  tc.unroll = 5;
  tc.nstep = 7;  // beyond the timeout, so value targets never bootstrap
  // At most 60 distinct (trajectory, position) pairs exist, so a 512-row
  // batch covers the buffer several times over and the per-step loss stays
  // close to the full-buffer loss.
  tc.batch = 512;
  tc.lr = 1e-3;
  tc.p_her = 0.0;
  tc.capacity = 10;
  tc.train_maps = 3;
  tc.d_min = 1;
  tc.d_max = 2;

  MmnTrainer tr(tc);
  tr.load_maps();
  for (int e = 0; e < 10; ++e) tr.run_episode(0, std::uint64_t(e));
  if (tr.buffer().size() != 10)
    return fail(fmt("buffer holds %zu trajectories, wanted 10",
                    tr.buffer().size()));

  std::vector<double> losses;
  losses.reserve(500);
  for (int i = 0; i < 500; ++i) losses.push_back(tr.learner_step().loss.total);

  // Averaged over successive 50-step windows; every window must sit strictly
  // below the one before it. (A stride-1 sliding average can always tick up
  // by the per-batch sampling noise, no matter how healthy the descent, so
  // window granularity is what separates working from broken plumbing.)
  const int W = 50;
  std::vector<double> wm;
  for (int w = 0; w * W < int(losses.size()); ++w) {
    double s = 0;
    for (int i = 0; i < W; ++i) s += losses[std::size_t(w * W + i)];
    wm.push_back(s / W);
  }
  for (std::size_t k = 1; k < wm.size(); ++k)
    if (wm[k] >= wm[k - 1])
      return fail(fmt("window average rose at window %zu: %.6f -> %.6f "
                      "(first %.4f last %.4f)",
                      k, wm[k - 1], wm[k], wm.front(), wm.back()));
  return pass(fmt("loss window average fell %.4f -> %.4f over 10 windows",
                  wm.front(), wm.back()));
}

// ---------------------------------------------------------------------------
// Shared trained-agent stack for the trend criteria. Checkpoints are cached
// on disk keyed by the config hash, so reruns skip training.

struct TrainedStack {
  std::string error;
  std::vector<OccupancyMap> eval_maps;
  TrainConfig mmn_cfg;  // seed field varies per run
  std::vector<std::unique_ptr<Hypermodel>> mmn;
  std::vector<std::unique_ptr<QTrainer>> mah, dqn;
};

TrainConfig desk_config(const std::string& agent, std::uint64_t seed,
                        const std::string& maps_dir) {
  TrainConfig c;
  c.agent = agent;
  c.seed = seed;
  c.d = 16;
  c.h_f = 32;
  c.enc_hidden = 64;
  c.trunk_hidden = 128;
  c.embed = 64;
  c.pred_hidden = 64;
  c.nc = 9;
  c.map_size = 9;
  c.timeout = 40;
  c.num_simulations = 32;
  c.unroll = 5;
  c.nstep = 5;
  c.batch = 32;
  c.lr = 3e-4;
  c.p_her = 0.5;
  c.capacity = 2000;
  c.learn_every = 4;
  c.min_buffer = 10;
  c.total_frames = 60000;
  c.snapshot_interval = 20000;
  c.maps_dir = maps_dir;
  c.train_maps = 10;
  c.d_min = 1;
  c.d_max = 3;
  c.q_hidden = 128;
  c.q_layers = 2;
  c.target_sync = 500;
  c.her_future = 4;
  c.q_capacity = 50000;
  c.q_min_transitions = 500;
  if (agent != "mmn") c.total_frames = 100000;
  return c;
}

const TrainedStack& trained_stack(const Options& opt) {
  static std::optional<TrainedStack> cached;
  if (cached) return *cached;
  cached.emplace();
  TrainedStack& st = *cached;
  try {
    fs::create_directories(opt.cache);
    const fs::path maps_dir = fs::path(opt.cache) / "train_maps";
    fs::create_directories(maps_dir);

    std::vector<OccupancyMap> train_maps;
    std::set<std::uint64_t> fps;
    Rng gen = Rng::derive(7, 0x6d617073);
    while (int(train_maps.size()) < 10) {
      OccupancyMap m = generate_map(9, gen.next_u64());
      if (fps.insert(map_fingerprint(m)).second) train_maps.push_back(m);
    }
    while (int(st.eval_maps.size()) < 10) {
      OccupancyMap m = generate_map(9, gen.next_u64());
      if (fps.insert(map_fingerprint(m)).second) st.eval_maps.push_back(m);
    }
    for (int i = 0; i < int(train_maps.size()); ++i)
      write_map((maps_dir / fmt("map_%03d.txt", i)).string(),
                train_maps[std::size_t(i)]);

    for (int k = 0; k < 3; ++k) {
      const std::uint64_t seed = 1001 + std::uint64_t(k);
      {
        TrainConfig c = desk_config("mmn", seed, maps_dir.string());
        st.mmn_cfg = c;
        const fs::path dir =
            fs::path(opt.cache) /
            fmt("mmn_s%llu_%016llx", (unsigned long long)seed,
                (unsigned long long)fnv1a(config_to_text(c)));
        const fs::path ck = dir / "checkpoint.hnav";
        if (!fs::exists(ck)) {
          std::printf("  [training mmn seed %llu -> %s]\n",
                      (unsigned long long)seed, dir.string().c_str());
          std::fflush(stdout);
          MmnTrainer tr(c);
          tr.train(dir.string());
        }
        st.mmn.push_back(load_hypermodel_checkpoint(ck.string()));
      }
      for (const char* agent : {"mah", "dqn"}) {
        TrainConfig c = desk_config(agent, seed, maps_dir.string());
        const bool ctx = std::string(agent) == "mah";
        const fs::path dir =
            fs::path(opt.cache) /
            fmt("%s_s%llu_%016llx", agent, (unsigned long long)seed,
                (unsigned long long)fnv1a(config_to_text(c)));
        const fs::path ck = dir / "checkpoint.hnav";
        if (!fs::exists(ck)) {
          std::printf("  [training %s seed %llu -> %s]\n", agent,
                      (unsigned long long)seed, dir.string().c_str());
          std::fflush(stdout);
          QTrainer tr(c, ctx);
          tr.train(dir.string());
        }
        auto loaded = load_qtrainer_checkpoint(ck.string());
        if (loaded->uses_context() != ctx)
          throw std::runtime_error("cached checkpoint context mode mismatch");
        (ctx ? st.mah : st.dqn).push_back(std::move(loaded));
      }
    }
  } catch (const std::exception& e) {
    st.error = e.what();
  }
  return st;
}

double success_at_or_below(const std::vector<EpisodeRecord>& records,
                           int d_max) {
  long n = 0, s = 0;
  for (const auto& r : records)
    if (r.distance <= d_max) {
      ++n;
      s += r.success ? 1 : 0;
    }
  return n ? double(s) / double(n) : 0.0;
}

bool intervals_overlap(const RateInterval& a, const RateInterval& b) {
  return a.lo <= b.hi && b.lo <= a.hi;
}

// ---------------------------------------------------------------------------
// 7. Zero-shot generalization to unseen maps.

Outcome check_zero_shot(const Options& opt) {
  const TrainedStack& st = trained_stack(opt);
  if (!st.error.empty()) return fail("training failed: " + st.error);

  EvalOptions eo;
  eo.d_min = 1;
  eo.d_max = 6;
  eo.pairs_per_distance = 5;
  eo.nc = st.mmn_cfg.nc;
  eo.env = st.mmn_cfg.env_config();
  eo.seed = 777;

  std::vector<EpisodeRecord> mmn_pool;
  double mmn_d3 = 0, mmn_all = 0, mah_all = 0, dqn_all = 0;
  for (int k = 0; k < 3; ++k) {
    MmnAgent agent(*st.mmn[std::size_t(k)], st.mmn_cfg.search_config());
    auto rec = eval_local(agent, st.eval_maps, eo);
    mmn_d3 += success_at_or_below(rec, 3) / 3.0;
    mmn_all += success_rate(rec) / 3.0;
    mmn_pool.insert(mmn_pool.end(), rec.begin(), rec.end());

    QPolicyAgent mah(*st.mah[std::size_t(k)], "mah");
    mah_all += success_rate(eval_local(mah, st.eval_maps, eo)) / 3.0;
    QPolicyAgent dqn(*st.dqn[std::size_t(k)], "dqn");
    dqn_all += success_rate(eval_local(dqn, st.eval_maps, eo)) / 3.0;
  }
  RandomAgent rnd;
  auto rnd_rec = eval_local(rnd, st.eval_maps, eo);
  const double rnd_d3 = success_at_or_below(rnd_rec, 3);

  auto buckets = summarize_buckets(mmn_pool, 2);
  bool ordered = true;
  std::string bucket_txt;
  for (std::size_t i = 0; i < buckets.size(); ++i) {
    bucket_txt += fmt("%s%d-%d:%.2f", i ? " " : "", buckets[i].d_lo,
                      buckets[i].d_hi, buckets[i].rate.rate);
    if (i > 0 && buckets[i].rate.rate > buckets[i - 1].rate.rate &&
        !intervals_overlap(buckets[i - 1].rate, buckets[i].rate))
      ordered = false;
  }

  const std::string detail =
      fmt("mmn d<=3 %.3f (random %.3f), overall mmn %.3f mah %.3f dqn %.3f, "
          "buckets %s",
          mmn_d3, rnd_d3, mmn_all, mah_all, dqn_all, bucket_txt.c_str());
  if (mmn_d3 < 0.6) return fail(detail + " | mmn short-range below 0.6");
  if (mmn_d3 - rnd_d3 < 0.4)
    return fail(detail + " | lead over random under 0.4");
  if (!(mmn_all > dqn_all && mah_all > dqn_all))
    return fail(detail + " | a learned agent does not beat the blind one");
  if (!ordered) return fail(detail + " | buckets rise beyond CI overlap");
  return pass(detail);
}

// ---------------------------------------------------------------------------
// 8. Landmark hierarchy against flat long-range goals.

Outcome check_hierarchy(const Options& opt) {
  const TrainedStack& st = trained_stack(opt);
  if (!st.error.empty()) return fail("training failed: " + st.error);

  HierOptions ho;
  ho.spacing = 3;
  ho.nc = st.mmn_cfg.nc;
  ho.env = st.mmn_cfg.env_config();
  ho.seed = 808;

  std::vector<EpisodeRecord> land, flat;
  for (int k = 0; k < 3; ++k) {
    MmnAgent agent(*st.mmn[std::size_t(k)], st.mmn_cfg.search_config());
    ho.use_landmarks = true;
    auto a = eval_hier(agent, st.eval_maps, ho);
    land.insert(land.end(), a.begin(), a.end());
    ho.use_landmarks = false;
    auto b = eval_hier(agent, st.eval_maps, ho);
    flat.insert(flat.end(), b.begin(), b.end());
  }
  if (land.empty() || flat.empty())
    return fail("no corner-to-corner tasks produced");
  const double sl = success_rate(land), sf = success_rate(flat);
  const std::string detail = fmt(
      "landmark success %.3f vs flat %.3f over %zu episodes each", sl, sf,
      land.size());
  if (sl - sf < 0.15) return fail(detail + " | gain under 0.15");
  return pass(detail);
}

// ---------------------------------------------------------------------------
// 9. Robustness: scripted planner collapses under position noise, the
// planner-with-learned-model degrades gracefully, flips degrade smoothly.

Outcome check_robustness(const Options& opt) {
  const TrainedStack& st = trained_stack(opt);
  if (!st.error.empty()) return fail("training failed: " + st.error);

  EvalOptions eo;
  eo.d_min = 1;
  eo.d_max = 6;
  eo.pairs_per_distance = 5;
  eo.nc = st.mmn_cfg.nc;
  eo.env = st.mmn_cfg.env_config();
  eo.seed = 909;

  OracleAgent oracle(eo.env);
  const double noise_levels[] = {0.0, 50.0};
  auto osweep =
      perturbation_sweep(oracle, st.eval_maps, eo, PerturbMode::LocNoise,
                         noise_levels);
  const double o0 = success_rate(osweep[0]), o50 = success_rate(osweep[1]);

  std::vector<EpisodeRecord> m0, m50;
  std::vector<std::vector<EpisodeRecord>> flips(4);
  const double flip_levels[] = {0.0, 0.05, 0.1, 0.2};
  for (int k = 0; k < 3; ++k) {
    MmnAgent agent(*st.mmn[std::size_t(k)], st.mmn_cfg.search_config());
    auto sweep = perturbation_sweep(agent, st.eval_maps, eo,
                                    PerturbMode::LocNoise, noise_levels);
    m0.insert(m0.end(), sweep[0].begin(), sweep[0].end());
    m50.insert(m50.end(), sweep[1].begin(), sweep[1].end());
    auto fsweep = perturbation_sweep(agent, st.eval_maps, eo,
                                     PerturbMode::MapFlip, flip_levels);
    for (std::size_t i = 0; i < fsweep.size(); ++i)
      flips[i].insert(flips[i].end(), fsweep[i].begin(), fsweep[i].end());
  }
  const double spl0 = spl(m0), spl50 = spl(m50);

  bool flips_ordered = true;
  std::string flip_txt;
  for (std::size_t i = 0; i < flips.size(); ++i) {
    flip_txt += fmt("%s%.2f", i ? "/" : "", spl(flips[i]));
    if (i > 0 && spl(flips[i]) > spl(flips[i - 1]) &&
        !intervals_overlap(success_ci(flips[i - 1]), success_ci(flips[i])))
      flips_ordered = false;
  }

  const std::string detail = fmt(
      "scripted %.3f -> %.3f under noise; planner spl %.3f -> %.3f; flip spl "
      "%s",
      o0, o50, spl0, spl50, flip_txt.c_str());
  if (o0 < 0.95) return fail(detail + " | scripted baseline under 0.95");
  if (o0 - o50 < 0.3) return fail(detail + " | scripted drop under 0.3");
  if (!(spl50 > 0.5 * spl0))
    return fail(detail + " | planner keeps under half its spl");
  if (!flips_ordered)
    return fail(detail + " | flip spl rises beyond CI overlap");
  return pass(detail);
}

// ---------------------------------------------------------------------------
// 10. Pipeline determinism and checkpoint persistence through the CLI.

int run_cmd(const fs::path& dir, const std::string& cmd) {
  const std::string full = "cd '" + dir.string() + "' && " + cmd +
                           " >> pipeline.log 2>&1";
  const int rc = std::system(full.c_str());
  if (rc == -1) return -1;
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

Outcome check_determinism(const Options& opt) {
  if (opt.cli.empty()) return fail("no --cli binary given");
  const fs::path base = testutil::temp_dir("accept_pipeline");

  TrainConfig c;
  c.agent = "mmn";
  c.seed = 42;
  c.d = 8;
  c.h_f = 16;
  c.enc_hidden = 16;
  c.trunk_hidden = 32;
  c.embed = 16;
  c.pred_hidden = 16;
  c.nc = 9;
  c.map_size = 9;
  c.timeout = 12;
  c.num_simulations = 8;
  c.unroll = 3;
  c.nstep = 3;
  c.batch = 16;
  c.lr = 1e-3;
  c.total_frames = 1000;
  c.capacity = 100;
  c.learn_every = 4;
  c.min_buffer = 2;
  c.snapshot_interval = 100000;
  c.maps_dir = "maps";
  c.train_maps = 3;
  c.d_min = 1;
  c.d_max = 2;

  auto run_pipeline = [&](const char* sub) -> std::string {
    const fs::path dir = base / sub;
    fs::create_directories(dir);
    std::ofstream(dir / "train.cfg") << config_to_text(c);
    if (run_cmd(dir, "'" + opt.cli + "' gen-maps --size 9 --count 3 --seed 5 "
                                     "--out maps") != 0)
      return "gen-maps failed in " + dir.string();
    if (run_cmd(dir, "'" + opt.cli + "' train --config train.cfg --out "
                                     "run_out") != 0)
      return "train failed in " + dir.string();
    if (run_cmd(dir, "'" + opt.cli +
                         "' eval --checkpoint run_out/checkpoint.hnav --maps "
                         "maps --distances 1..3 --pairs 2 --agent mmn --seed "
                         "9 --out report.csv") != 0)
      return "eval failed in " + dir.string();
    return "";
  };
  for (const char* sub : {"a", "b"}) {
    std::string err = run_pipeline(sub);
    if (!err.empty()) return fail(err);
  }

  for (const char* rel :
       {"maps/map_000.txt", "maps/map_001.txt", "maps/map_002.txt",
        "run_out/checkpoint.hnav", "run_out/metrics.csv", "report.csv"}) {
    const std::string a = read_bytes(base / "a" / rel);
    const std::string b = read_bytes(base / "b" / rel);
    if (a.empty()) return fail(fmt("missing or empty output %s", rel));
    if (a != b) return fail(fmt("%s differs between identical runs", rel));
  }

  // Round trip: load the checkpoint, write it back, compare bytes.
  const fs::path ck = base / "a" / "run_out" / "checkpoint.hnav";
  Checkpoint loaded = load_checkpoint(ck.string());
  const fs::path copy = base / "roundtrip.hnav";
  save_checkpoint(copy.string(), loaded);
  if (read_bytes(ck) != read_bytes(copy))
    return fail("checkpoint round trip not byte-identical");

  // Exit-code contract: usage errors return 2, runtime failures 1.
  if (run_cmd(base / "a", "'" + opt.cli + "'") != 2)
    return fail("bare invocation did not exit 2");
  if (run_cmd(base / "a", "'" + opt.cli + "' eval --checkpoint missing.hnav "
                                          "--maps maps") != 1)
    return fail("missing checkpoint did not exit 1");

  const auto bytes = read_bytes(ck).size();
  return pass(fmt("two runs byte-identical (checkpoint %zu bytes), round "
                  "trip lossless",
                  bytes));
}

}  // namespace

int main(int argc, char** argv) {
  Options opt;
  for (int i = 1; i < argc; ++i) {
    const std::string arg = argv[i];
    auto next = [&]() -> std::string {
      if (i + 1 >= argc) {
        std::fprintf(stderr, "missing value for %s\n", arg.c_str());
        std::exit(2);
      }
      return argv[++i];
    };
    if (arg == "--cli") {
      opt.cli = next();
    } else if (arg == "--cache") {
      opt.cache = next();
    } else if (arg == "--only") {
      std::stringstream ss(next());
      std::string tok;
      while (std::getline(ss, tok, ',')) opt.only.insert(std::stoi(tok));
    } else {
      std::fprintf(stderr, "unknown argument %s\n", arg.c_str());
      return 2;
    }
  }

  struct Criterion {
    int num;
    const char* name;
    Outcome (*run)(const Options&);
  };
  const Criterion criteria[] = {
      {1, "gradient-checks", check_gradients},
      {2, "hindsight-relabel-oracle", check_hindsight},
      {3, "search-vs-value-iteration", check_search_oracle},
      {4, "map-and-task-invariants", check_maps_and_tasks},
      {5, "simulator-contract", check_simulator},
      {6, "overfit-descent", check_overfit},
      {7, "zero-shot-generalization", check_zero_shot},
      {8, "landmark-hierarchy-gain", check_hierarchy},
      {9, "noise-robustness-contrast", check_robustness},
      {10, "pipeline-determinism", check_determinism},
  };

  bool all_ok = true;
  for (const Criterion& c : criteria) {
    if (!opt.only.empty() && !opt.only.count(c.num)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome out;
    try {
      out = c.run(opt);
    } catch (const std::exception& e) {
      out = fail(std::string("exception: ") + e.what());
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
            .count();
    std::printf("%s %2d %-28s %s [%.1fs]\n", out.ok ? "PASS" : "FAIL", c.num,
                c.name, out.detail.c_str(), secs);
    std::fflush(stdout);
    all_ok = all_ok && out.ok;
  }
  return all_ok ? 0 : 1;
}
