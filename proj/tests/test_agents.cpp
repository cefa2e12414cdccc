#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include "doctest.h"
#include "helpers.hpp"
#include "hnav/checkpoint.hpp"
#include "hnav/context.hpp"
#include "hnav/env.hpp"
#include "hnav/errors.hpp"
#include "hnav/grid.hpp"
#include "hnav/model.hpp"
#include "hnav/oracle.hpp"
#include "hnav/qagent.hpp"
#include "hnav/replay.hpp"

using namespace hnav;

namespace {

TrainConfig q_config() {
  TrainConfig c;
  c.agent = "mah";
  c.seed = 21;
  c.nc = 5;
  c.map_size = 5;
  c.timeout = 6;
  c.batch = 4;
  c.lr = 1e-3;
  c.total_frames = 100;
  c.train_maps = 2;
  c.d_min = 1;
  c.d_max = 2;
  c.q_hidden = 8;
  c.q_layers = 2;
  c.eps_start = 1.0;
  c.eps_end = 0.05;
  c.target_sync = 1000;
  c.her_future = 2;
  c.q_capacity = 512;
  c.q_min_transitions = 1;
  return c;
}

QTransition tagged(int action) {
  QTransition t;
  t.action = action;
  return t;
}

std::vector<char> read_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

const Checkpoint::Tensor& find_tensor(const Checkpoint& ck,
                                      const std::string& name) {
  for (const auto& t : ck.tensors)
    if (t.name == name) return t;
  FAIL("tensor not found: " << name);
  return ck.tensors.front();
}

JointState pose_at(double x, double y, double yaw) {
  JointState s;
  s.x = x;
  s.y = y;
  s.yaw = yaw;
  return s;
}

}  // namespace

TEST_CASE("sum tree sampling walks leaf prefix boundaries") {
  SumTree tree(5);
  CHECK(tree.capacity() == 5);
  for (std::size_t i = 0; i < 5; ++i) tree.set(i, double(i + 1));
  CHECK(tree.total() == 15.0);
  for (std::size_t i = 0; i < 5; ++i) CHECK(tree.get(i) == double(i + 1));

  // Cumulative sums are [1, 3, 6, 10, 15]; u lands in the owning leaf.
  const std::pair<double, std::size_t> table[] = {
      {0.0, 0},  {0.999, 0}, {1.0, 1},  {2.999, 1}, {3.0, 2},
      {5.999, 2}, {6.0, 3},  {9.999, 3}, {10.0, 4}, {14.999, 4},
  };
  for (auto [u, want] : table) {
    INFO("u = ", u);
    CHECK(tree.sample(u) == want);
  }

  tree.set(1, 0.0);
  CHECK(tree.total() == 13.0);
  CHECK(tree.sample(1.0) == 2);  // zero-mass leaf cannot be drawn

  SumTree zeros(5);
  CHECK(zeros.total() == 0.0);
  CHECK(zeros.sample(0.0) == 4);  // drained walk clamps to the last slot
}

TEST_CASE("prioritized buffer inserts at max priority and reweights on update") {
  PrioritizedBuffer buf(8, 0.6, 0.4);
  Rng rng(3);
  CHECK_THROWS_AS(buf.sample(2, rng), EmptyBuffer);

  for (int a = 0; a < 3; ++a) buf.insert(tagged(a));
  CHECK(buf.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) CHECK(buf.priority(i) == 1.0);

  PrioritySample ps = buf.sample(6, rng);
  REQUIRE(ps.indices.size() == 6);
  for (std::size_t b = 0; b < 6; ++b) {
    CHECK(ps.indices[b] < 3);
    CHECK(ps.is_weights[b] == 1.0);  // uniform priorities weigh evenly
  }

  std::size_t idx0[] = {0};
  double td_small[] = {0.5};
  buf.update(idx0, td_small);
  CHECK(buf.priority(0) == std::pow(0.5 + 1e-3, 0.6));
  CHECK(buf.priority(1) == 1.0);

  std::size_t idx1[] = {1};
  double td_big[] = {9.0};
  buf.update(idx1, td_big);
  CHECK(buf.priority(1) == std::pow(9.0 + 1e-3, 0.6));

  // The raised ceiling carries over to the next insert.
  buf.insert(tagged(7));
  CHECK(buf.priority(3) == std::pow(9.0 + 1e-3, 0.6));
  CHECK(buf.at(3).action == 7);
}

TEST_CASE("prioritized buffer ring overwrites the oldest slots") {
  PrioritizedBuffer buf(4, 0.6, 0.4);
  for (int a = 0; a < 6; ++a) buf.insert(tagged(a));
  CHECK(buf.size() == 4);
  CHECK(buf.at(0).action == 4);
  CHECK(buf.at(1).action == 5);
  CHECK(buf.at(2).action == 2);
  CHECK(buf.at(3).action == 3);
}

TEST_CASE("prioritized sampling matches a mirrored prefix walk") {
  PrioritizedBuffer buf(8, 0.6, 0.4);
  for (int a = 0; a < 6; ++a) buf.insert(tagged(a));
  const double tds[] = {0.1, 2.0, 0.01, 5.5, 1.0, 0.3};
  for (std::size_t i = 0; i < 6; ++i) {
    std::size_t idx[] = {i};
    double td[] = {tds[i]};
    buf.update(idx, td);
  }

  SumTree mirror(8);
  for (std::size_t i = 0; i < 6; ++i) mirror.set(i, buf.priority(i));
  CHECK(mirror.total() > 0.0);

  Rng r1(77), r2(77);
  PrioritySample ps = buf.sample(16, r1);
  std::vector<double> want_w(16);
  std::vector<std::size_t> want_i(16);
  double max_w = 0.0;
  for (int b = 0; b < 16; ++b) {
    double u = r2.uniform01() * mirror.total();
    std::size_t i = mirror.sample(u);
    if (i >= 6) i = 5;
    double p = mirror.get(i) / mirror.total();
    double w = std::pow(6.0 * std::max(p, 1e-300), -0.4);
    want_i[std::size_t(b)] = i;
    want_w[std::size_t(b)] = w;
    max_w = std::max(max_w, w);
  }
  std::set<std::size_t> seen;
  for (int b = 0; b < 16; ++b) {
    CHECK(ps.indices[std::size_t(b)] == want_i[std::size_t(b)]);
    CHECK(ps.is_weights[std::size_t(b)] == want_w[std::size_t(b)] / max_w);
    seen.insert(ps.indices[std::size_t(b)]);
  }
  CHECK(seen.size() > 1);  // the draw actually spreads over slots
}

TEST_CASE("q network registration lays out per-layer tensors") {
  QNetConfig qc;
  qc.input = 7;
  qc.hidden = 4;
  qc.layers = 2;
  ParamStore store;
  register_qnet(store, qc);
  CHECK(store.tensor_count() == 6);
  CHECK(store.entry(store.find("q.w1")).shape == std::vector<int>{7, 4});
  CHECK(store.entry(store.find("q.b1")).shape == std::vector<int>{4});
  CHECK(store.entry(store.find("q.w2")).shape == std::vector<int>{4, 4});
  CHECK(store.entry(store.find("q.b2")).shape == std::vector<int>{4});
  CHECK(store.entry(store.find("q.out_w")).shape == (std::vector<int>{4, 6}));
  CHECK(store.entry(store.find("q.out_b")).shape == std::vector<int>{6});
  CHECK(store.flat_size() == 7 * 4 + 4 + 4 * 4 + 4 + 4 * 6 + 6);

  Rng rng(11);
  ParamStore init;
  register_qnet(init, qc);
  qnet_init(init, qc, rng);
  auto within = [&](const std::string& name, double bound) {
    double mx = 0.0;
    for (float v : init.view(name)) {
      CHECK(std::abs(double(v)) <= bound);
      mx = std::max(mx, std::abs(double(v)));
    }
    CHECK(mx > 0.0);
  };
  within("q.w1", 1.0 / std::sqrt(7.0) + 1e-12);
  within("q.b1", 1.0 / std::sqrt(7.0) + 1e-12);  // bias bound follows fan-in
  within("q.w2", 0.5 + 1e-12);
  within("q.b2", 0.5 + 1e-12);
  within("q.out_w", 0.5 + 1e-12);
  within("q.out_b", 0.5 + 1e-12);
}

TEST_CASE("q network forward pass matches a double precision replay") {
  QNetConfig qc;
  qc.input = 4;
  qc.hidden = 3;
  qc.layers = 2;
  ParamStore store;
  register_qnet(store, qc);
  Rng rng(5);
  for (auto& x : store.flat()) x = float(rng.uniform(-0.8, 0.8));

  std::vector<float> in{0.3f, -0.7f, 0.2f, 0.9f};
  std::array<float, kNumActions> q{};
  qnet_forward(store, qc, in, q);

  auto dense = [&](const std::string& w, const std::string& b,
                   const std::vector<double>& x, int n, bool act) {
    auto W = store.view(w);
    auto B = store.view(b);
    std::vector<double> out(std::size_t(n), 0.0);
    for (int j = 0; j < n; ++j) {
      double acc = double(B[std::size_t(j)]);
      for (std::size_t i = 0; i < x.size(); ++i)
        acc += x[i] * double(W[i * std::size_t(n) + std::size_t(j)]);
      out[std::size_t(j)] = (act && acc <= 0.0) ? std::expm1(acc) : acc;
    }
    return out;
  };
  std::vector<double> x(in.begin(), in.end());
  x = dense("q.w1", "q.b1", x, 3, true);
  x = dense("q.w2", "q.b2", x, 3, true);
  x = dense("q.out_w", "q.out_b", x, kNumActions, false);
  for (int a = 0; a < kNumActions; ++a) {
    double rel = std::abs(double(q[std::size_t(a)]) - x[std::size_t(a)]) /
                 std::max(1.0, std::abs(x[std::size_t(a)]));
    CHECK(rel < 1e-4);
  }

  std::vector<float> bad(3, 0.0f);
  CHECK_THROWS_AS(qnet_forward(store, qc, bad, q), ShapeMismatch);
}

TEST_CASE("q trainer input row carries the normalized pose then the context") {
  TrainConfig cfg = q_config();
  QTrainer ctx_trainer(cfg, true);
  QTrainer blind(cfg, false);
  CHECK(ctx_trainer.uses_context());
  CHECK_FALSE(blind.uses_context());
  CHECK(ctx_trainer.input_size() == kEncoderInput + 4 * cfg.nc * cfg.nc);
  CHECK(blind.input_size() == kEncoderInput);

  JointState obs = pose_at(230.0, 140.0, 0.7);
  obs.vx = 3.0;
  obs.wyaw = 0.05;
  auto norm = normalize_obs(obs, cfg.map_size, cfg.v_max * cfg.action_repeat);

  std::vector<float> ctx(std::size_t(4 * cfg.nc * cfg.nc));
  for (std::size_t i = 0; i < ctx.size(); ++i) ctx[i] = float(i % 7) * 0.1f;
  std::vector<float> row(std::size_t(ctx_trainer.input_size()));
  ctx_trainer.build_input(obs, ctx, row);
  for (int i = 0; i < kEncoderInput; ++i)
    CHECK(row[std::size_t(i)] == norm[std::size_t(i)]);
  for (std::size_t i = 0; i < ctx.size(); ++i)
    CHECK(row[kEncoderInput + i] == ctx[i]);

  std::vector<float> short_ctx(10, 0.0f);
  CHECK_THROWS_AS(ctx_trainer.build_input(obs, short_ctx, row), ShapeMismatch);

  std::vector<float> blind_row(std::size_t(kEncoderInput), 0.0f);
  blind.build_input(obs, short_ctx, blind_row);  // context ignored entirely
  for (int i = 0; i < kEncoderInput; ++i)
    CHECK(blind_row[std::size_t(i)] == norm[std::size_t(i)]);
}

TEST_CASE("greedy action breaks ties toward the lowest index") {
  TrainConfig cfg = q_config();
  QTrainer trainer(cfg, false);
  auto flat = trainer.online().flat();
  std::fill(flat.begin(), flat.end(), 0.0f);

  JointState obs = pose_at(150.0, 150.0, 0.0);
  CHECK(trainer.greedy_action(obs, {}) == 0);

  trainer.online().view("q.out_b")[3] = 1.0f;
  CHECK(trainer.greedy_action(obs, {}) == 3);
}

TEST_CASE("exploration rate anneals over the first half of training") {
  TrainConfig cfg = q_config();
  QTrainer trainer(cfg, true);
  CHECK(trainer.epsilon() == 1.0);

  std::string dir = testutil::temp_dir("qeps");
  std::string path = dir + "/q.hnav";
  trainer.save_checkpoint_file(path);

  auto eps_at = [&](long frames) {
    Checkpoint ck = load_checkpoint(path);
    ck.metadata =
        testutil::patch_metadata(ck.metadata, "frames", std::to_string(frames));
    save_checkpoint(path, ck);
    QTrainer t(cfg, true);
    t.load_checkpoint_file(path);
    return t.epsilon();
  };
  CHECK(eps_at(0) == 1.0);
  CHECK(eps_at(25) == 0.525);
  CHECK(eps_at(50) == doctest::Approx(0.05).epsilon(1e-9));
  CHECK(eps_at(80) == eps_at(50));  // clamped past the halfway point

  TrainConfig flat_cfg = cfg;
  flat_cfg.total_frames = 0;
  QTrainer t0(flat_cfg, true);
  CHECK(t0.epsilon() == 0.05);
  std::filesystem::remove_all(dir);
}

TEST_CASE("episode insertion stores one original and hindsight copies per step") {
  TrainConfig cfg = q_config();
  QTrainer trainer(cfg, true);
  long steps = trainer.run_episode(0);
  REQUIRE(steps >= 1);
  CHECK(steps <= cfg.timeout);
  CHECK(trainer.frames() == steps);

  const std::size_t stride = std::size_t(2 + cfg.her_future);
  PrioritizedBuffer& buf = trainer.buffer();
  REQUIRE(buf.size() == std::size_t(steps) * stride);

  const std::size_t T = std::size_t(steps);
  const QTransition& first = buf.at(0);
  const Cell final_cell =
      cell_of(buf.at((T - 1) * stride).next_obs, cfg.cell_size);
  CHECK(buf.at((T - 1) * stride).done);

  for (std::size_t t = 0; t < T; ++t) {
    const QTransition& orig = buf.at(t * stride);
    CHECK((orig.goal == first.goal));
    CHECK((orig.start == first.start));
    CHECK(orig.map_index == first.map_index);
    if (t + 1 < T) CHECK(orig.reward == -1.0f);

    const QTransition& fin = buf.at(t * stride + 1);
    CHECK((fin.goal == final_cell));

    for (int k = 0; k < cfg.her_future; ++k) {
      const QTransition& fut = buf.at(t * stride + 2 + std::size_t(k));
      bool from_later_arrival = false;
      for (std::size_t t2 = t; t2 < T; ++t2)
        if (cell_of(buf.at(t2 * stride).next_obs, cfg.cell_size) == fut.goal)
          from_later_arrival = true;
      CHECK(from_later_arrival);
    }
  }

  for (std::size_t i = 0; i < buf.size(); ++i) {
    const QTransition& tr = buf.at(i);
    bool arrived = cell_of(tr.next_obs, cfg.cell_size) == tr.goal;
    CHECK((tr.reward == 0.0f) == arrived);
    if (arrived) CHECK(tr.done);
  }
}

TEST_CASE("q trainer runs deterministically and round trips checkpoints") {
  TrainConfig cfg = q_config();
  QTrainer t1(cfg, true), t2(cfg, true);
  for (std::uint64_t e = 0; e < 2; ++e) {
    CHECK(t1.run_episode(e) == t2.run_episode(e));
  }
  QMetrics m1 = t1.learner_step();
  QMetrics m2 = t2.learner_step();
  CHECK(m1.loss == m2.loss);
  CHECK(m1.grad_norm == m2.grad_norm);
  CHECK(m1.mean_abs_td == m2.mean_abs_td);
  CHECK(m1.epsilon == m2.epsilon);

  std::string dir = testutil::temp_dir("qdet");
  t1.save_checkpoint_file(dir + "/a.hnav");
  t2.save_checkpoint_file(dir + "/b.hnav");
  CHECK(read_bytes(dir + "/a.hnav") == read_bytes(dir + "/b.hnav"));

  QTrainer t3(cfg, true);
  t3.load_checkpoint_file(dir + "/a.hnav");
  CHECK(t3.frames() == t1.frames());
  CHECK(t3.learner_steps() == 1);
  t3.save_checkpoint_file(dir + "/c.hnav");
  CHECK(read_bytes(dir + "/c.hnav") == read_bytes(dir + "/a.hnav"));

  Checkpoint ck = load_checkpoint(dir + "/a.hnav");
  CHECK(metadata_value(ck.metadata, "use_context") == "1");

  QTrainer blind(cfg, false);
  blind.save_checkpoint_file(dir + "/d.hnav");
  Checkpoint bck = load_checkpoint(dir + "/d.hnav");
  CHECK(metadata_value(bck.metadata, "use_context") == "0");
  std::filesystem::remove_all(dir);
}

TEST_CASE("target network copies the online weights on the sync period") {
  std::string dir = testutil::temp_dir("qsync");
  auto online_equals_target = [&](int target_sync, const std::string& path) {
    TrainConfig cfg = q_config();
    cfg.target_sync = target_sync;
    QTrainer t(cfg, true);
    t.run_episode(0);
    t.learner_step();
    t.save_checkpoint_file(path);
    Checkpoint ck = load_checkpoint(path);
    bool all_equal = true;
    int online_tensors = 0;
    for (const auto& tensor : ck.tensors) {
      if (tensor.name.rfind("online.", 0) != 0) continue;
      online_tensors += 1;
      const Checkpoint::Tensor& tgt =
          find_tensor(ck, "target." + tensor.name.substr(7));
      if (tensor.data != tgt.data) all_equal = false;
    }
    CHECK(online_tensors == 6);
    return all_equal;
  };
  CHECK(online_equals_target(1, dir + "/sync.hnav"));
  CHECK_FALSE(online_equals_target(1000, dir + "/stale.hnav"));
  std::filesystem::remove_all(dir);
}

TEST_CASE("learner step without stored transitions reports an empty buffer") {
  QTrainer trainer(q_config(), true);
  CHECK_THROWS_AS(trainer.learner_step(), EmptyBuffer);
}

TEST_CASE("waypoint controller turns toward the target heading") {
  const double tol = std::acos(-1.0) / 3.0;
  WaypointController c(100.0, tol);
  CHECK_FALSE(c.has_waypoints());
  CHECK_THROWS_AS(c.act(150.0, 150.0, 0.0), NoWaypoints);
  c.set_path({});
  CHECK_THROWS_AS(c.act(150.0, 150.0, 0.0), NoWaypoints);

  c.set_path({{1, 1}, {1, 2}});
  CHECK(c.has_waypoints());
  CHECK(c.remaining() == 2);

  // Pose sits in the first cell, so the target advances to (1,2)'s center
  // at (250, 150): desired heading 0.
  CHECK(c.act(150.0, 150.0, 0.0) == Action::Forward);
  CHECK(c.remaining() == 1);
  CHECK(c.act(150.0, 150.0, 2.0) == Action::LookRight);
  CHECK(c.act(150.0, 150.0, -2.0) == Action::LookLeft);
  CHECK(c.act(150.0, 150.0, 1.0) == Action::Forward);  // just inside tol
  // A pi flip wraps to +pi, which lands on the left-turn side.
  CHECK(c.act(150.0, 150.0, std::acos(-1.0)) == Action::LookLeft);

  WaypointController tight(100.0, 0.1);
  tight.set_path({{1, 1}, {1, 2}});
  CHECK(tight.act(150.0, 150.0, 0.2) == Action::LookRight);
  CHECK(tight.act(150.0, 150.0, 0.05) == Action::Forward);
}

TEST_CASE("waypoint controller skips ahead within its lookahead window") {
  const double tol = std::acos(-1.0) / 3.0;
  WaypointController c(100.0, tol);
  c.set_path({{1, 1}, {1, 2}, {1, 3}, {1, 4}});

  // Standing in the third path cell jumps the index past it.
  CHECK(c.act(350.0, 150.0, 0.0) == Action::Forward);
  CHECK(c.remaining() == 1);

  // Entering the final cell keeps homing on it rather than running out.
  CHECK(c.act(450.0, 150.0, 0.0) == Action::Forward);
  CHECK(c.remaining() == 1);

  // A cell beyond the three-cell window is not matched; the stale target
  // sits behind the pose, so the controller turns around.
  WaypointController d(100.0, tol);
  d.set_path({{1, 1}, {1, 2}, {1, 3}, {1, 4}});
  CHECK(d.act(450.0, 150.0, 0.0) == Action::LookLeft);
  CHECK(d.remaining() == 4);
}

TEST_CASE("oracle agent reaches sampled goals on generated maps") {
  EnvConfig env_cfg;
  for (std::uint64_t trial = 0; trial < 5; ++trial) {
    OccupancyMap map = generate_map(9, trial * 97 + 1);
    Task task = sample_task(map, 1, 4, trial * 1000 + 3);
    MazeEnv env(env_cfg);
    OracleAgent agent(env_cfg);
    TaskContext ctx = encode_context(task, 9);
    agent.begin_episode(task, ctx, trial);

    JointState obs = env.reset(task, trial);
    bool reached = false;
    while (!env.done()) {
      StepResult res = env.step(agent.act(obs));
      obs = res.next_obs;
      reached = res.info.reached_goal;
    }
    INFO("trial ", trial);
    CHECK(reached);
  }
}

TEST_CASE("oracle agent homes on the goal when no grid path exists") {
  OccupancyMap map;
  map.size = 5;
  map.cells.assign(25, 1);
  map.set(1, 1, 0);
  map.set(3, 3, 0);
  Task task;
  task.map = map;
  task.start = {1, 1};
  task.goal = {3, 3};

  OracleAgent agent;
  TaskContext ctx = encode_context(task, 5);
  agent.begin_episode(task, ctx, 0);
  JointState obs = pose_at(150.0, 150.0, 0.0);
  Action a = agent.act(obs);  // must not throw despite the missing path
  CHECK((a == Action::Forward || a == Action::LookLeft ||
         a == Action::LookRight));
}

TEST_CASE("random agent draws a reproducible uniform action stream") {
  Task task;
  TaskContext ctx;
  JointState obs;

  RandomAgent a, b;
  a.begin_episode(task, ctx, 9);
  b.begin_episode(task, ctx, 9);
  Rng mirror = Rng::derive(9, 0x726e64);
  bool all_match = true;
  for (int i = 0; i < 50; ++i) {
    int av = int(a.act(obs));
    int bv = int(b.act(obs));
    if (av != bv) all_match = false;
    if (av != int(mirror.uniform_int(0, kNumActions - 1))) all_match = false;
  }
  CHECK(all_match);

  RandomAgent c;
  c.begin_episode(task, ctx, 10);
  a.begin_episode(task, ctx, 9);
  bool any_diff = false;
  for (int i = 0; i < 50; ++i)
    if (a.act(obs) != c.act(obs)) any_diff = true;
  CHECK(any_diff);

  c.begin_episode(task, ctx, 4242);
  std::array<int, kNumActions> counts{};
  for (int i = 0; i < 6000; ++i) counts[std::size_t(int(c.act(obs)))] += 1;
  double chi2 = 0.0;
  for (int k = 0; k < kNumActions; ++k) {
    double diff = double(counts[std::size_t(k)]) - 1000.0;
    chi2 += diff * diff / 1000.0;
  }
  CHECK(chi2 < 25.0);

  CHECK(a.name() == "random");
  CHECK(OracleAgent{}.name() == "oracle");
}
