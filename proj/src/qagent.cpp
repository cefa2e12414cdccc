#include "hnav/qagent.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "hnav/checkpoint.hpp"
#include "hnav/errors.hpp"
#include "hnav/graph.hpp"
#include "hnav/kernels.hpp"
#include "hnav/replay.hpp"
#include "hnav/tape.hpp"

namespace hnav {

void qnet_init(ParamStore& store, const QNetConfig& cfg, Rng& rng) {
  auto fill = [&](const std::string& name, int fan_in) {
    float bound = 1.0f / std::sqrt(float(fan_in));
    for (auto& x : store.view(name)) x = float(rng.uniform(-bound, bound));
  };
  int in = cfg.input;
  for (int l = 1; l <= cfg.layers; ++l) {
    fill("q.w" + std::to_string(l), in);
    fill("q.b" + std::to_string(l), in);
    in = cfg.hidden;
  }
  fill("q.out_w", in);
  fill("q.out_b", in);
}

namespace {

inline float elu(float x) { return x > 0 ? x : std::expm1(x); }

void dense(const ParamStore& store, const std::string& w,
           const std::string& b, std::span<const float> in,
           std::span<float> out, bool activate) {
  auto W = store.view(w);
  auto B = store.view(b);
  int n = int(out.size());
  int m = int(in.size());
  for (int j = 0; j < n; ++j) {
    float acc = B[std::size_t(j)];
    for (int i = 0; i < m; ++i)
      acc += in[std::size_t(i)] * W[std::size_t(i) * n + j];
    out[std::size_t(j)] = activate ? elu(acc) : acc;
  }
}

}  // namespace

void qnet_forward(const ParamStore& store, const QNetConfig& cfg,
                  std::span<const float> input, std::span<float> q_out) {
  if (int(input.size()) != cfg.input)
    throw ShapeMismatch("qnet_forward: input size");
  std::vector<float> h(std::size_t(cfg.hidden));
  std::vector<float> h2(std::size_t(cfg.hidden));
  std::span<const float> cur = input;
  for (int l = 1; l <= cfg.layers; ++l) {
    auto& dst = (l % 2 == 1) ? h : h2;
    dense(store, "q.w" + std::to_string(l), "q.b" + std::to_string(l), cur,
          dst, true);
    cur = dst;
  }
  dense(store, "q.out_w", "q.out_b", cur, q_out, false);
}

SumTree::SumTree(std::size_t capacity) : cap_(capacity) {
  base_ = 1;
  while (base_ < cap_) base_ <<= 1;
  tree_.assign(2 * base_, 0.0);
}

void SumTree::set(std::size_t i, double p) {
  std::size_t node = base_ + i;
  tree_[node] = p;
  for (node >>= 1; node >= 1; node >>= 1)
    tree_[node] = tree_[2 * node] + tree_[2 * node + 1];
}

double SumTree::get(std::size_t i) const { return tree_[base_ + i]; }

double SumTree::total() const { return tree_[1]; }

std::size_t SumTree::sample(double u) const {
  std::size_t node = 1;
  while (node < base_) {
    double left = tree_[2 * node];
    if (u < left) {
      node = 2 * node;
    } else {
      u -= left;
      node = 2 * node + 1;
    }
  }
  std::size_t i = node - base_;
  return i < cap_ ? i : cap_ - 1;
}

PrioritizedBuffer::PrioritizedBuffer(std::size_t capacity, double omega,
                                     double beta, double floor)
    : capacity_(capacity),
      omega_(omega),
      beta_(beta),
      floor_(floor),
      tree_(capacity) {
  data_.resize(capacity_);
}

void PrioritizedBuffer::insert(QTransition t) {
  data_[next_] = std::move(t);
  tree_.set(next_, max_priority_);
  next_ = (next_ + 1) % capacity_;
  size_ = std::min(size_ + 1, capacity_);
}

PrioritySample PrioritizedBuffer::sample(int batch, Rng& rng) {
  if (size_ == 0) throw EmptyBuffer("prioritized buffer is empty");
  PrioritySample out;
  double total = tree_.total();
  double max_w = 0.0;
  std::vector<double> probs(std::size_t(batch), 0.0);
  for (int b = 0; b < batch; ++b) {
    double u = rng.uniform01() * total;
    std::size_t i = tree_.sample(u);
    if (i >= size_) i = size_ - 1;  // zero-priority tail guard
    double p = tree_.get(i) / total;
    double w = std::pow(double(size_) * std::max(p, 1e-300), -beta_);
    out.indices.push_back(i);
    probs[std::size_t(b)] = w;
    max_w = std::max(max_w, w);
  }
  for (double w : probs) out.is_weights.push_back(w / max_w);
  return out;
}

void PrioritizedBuffer::update(std::span<const std::size_t> indices,
                               std::span<const double> abs_td) {
  for (std::size_t k = 0; k < indices.size(); ++k) {
    double p = std::pow(abs_td[k] + floor_, omega_);
    tree_.set(indices[k], p);
    max_priority_ = std::max(max_priority_, p);
  }
}

QTrainer::QTrainer(const TrainConfig& cfg, bool use_context)
    : cfg_(cfg),
      use_context_(use_context),
      buffer_(std::size_t(cfg.q_capacity), cfg.priority_omega, cfg.is_beta) {
  net_cfg_.hidden = cfg.q_hidden;
  net_cfg_.layers = cfg.q_layers;
  net_cfg_.input =
      kEncoderInput + (use_context ? context_input_size(cfg.nc) : 0);
  register_qnet(online_, net_cfg_);
  register_qnet(target_, net_cfg_);
  Rng rng = Rng::derive(cfg.seed, 0x71696e69);  // "qini"
  qnet_init(online_, net_cfg_, rng);
  std::copy(online_.flat().begin(), online_.flat().end(),
            target_.flat().begin());
  opt_.init(online_.flat_size());
}

void QTrainer::load_maps() {
  maps_.clear();
  if (cfg_.maps_dir.empty()) {
    for (int i = 0; i < cfg_.train_maps; ++i)
      maps_.push_back(generate_map(
          cfg_.map_size, Rng::derive(cfg_.seed, 0x6d617073, i).next_u64()));
    return;
  }
  std::vector<std::filesystem::path> files;
  for (auto& e : std::filesystem::directory_iterator(cfg_.maps_dir))
    if (e.is_regular_file() && e.path().extension() == ".txt")
      files.push_back(e.path());
  std::sort(files.begin(), files.end());
  for (auto& f : files) maps_.push_back(read_map(f.string()));
  if (maps_.empty())
    throw ConfigError("no .txt map files in " + cfg_.maps_dir);
}

double QTrainer::epsilon() const {
  double half = 0.5 * double(cfg_.total_frames);
  if (half <= 0) return cfg_.eps_end;
  double t = std::min(1.0, double(frames_) / half);
  return cfg_.eps_start + (cfg_.eps_end - cfg_.eps_start) * t;
}

double QTrainer::recent_success() const {
  if (recent_outcomes_.empty()) return 0;
  double s = 0;
  for (char c : recent_outcomes_) s += c ? 1 : 0;
  return s / double(recent_outcomes_.size());
}

void QTrainer::build_input(const JointState& obs,
                           std::span<const float> ctx_flat,
                           std::span<float> row) const {
  auto norm = normalize_obs(obs, cfg_.map_size, cfg_.v_max * cfg_.action_repeat);
  std::copy(norm.begin(), norm.end(), row.begin());
  if (use_context_) {
    if (int(ctx_flat.size()) != context_input_size(cfg_.nc))
      throw ShapeMismatch("build_input: context size");
    std::copy(ctx_flat.begin(), ctx_flat.end(),
              row.begin() + kEncoderInput);
  }
}

int QTrainer::greedy_action(const JointState& obs,
                            std::span<const float> ctx_flat) const {
  std::vector<float> row(std::size_t(net_cfg_.input));
  build_input(obs, ctx_flat, row);
  std::array<float, kNumActions> q;
  qnet_forward(online_, net_cfg_, row, q);
  int best = 0;
  for (int a = 1; a < kNumActions; ++a)
    if (q[std::size_t(a)] > q[std::size_t(best)]) best = a;
  return best;
}

void QTrainer::insert_with_hindsight(const std::vector<QTransition>& episode,
                                     const std::vector<JointState>& arrivals,
                                     Rng& rng) {
  const int T = int(episode.size());
  const Cell final_goal = cell_of(arrivals[std::size_t(T - 1)], cfg_.cell_size);
  for (int t = 0; t < T; ++t) {
    buffer_.insert(episode[std::size_t(t)]);

    auto relabeled = [&](Cell goal) {
      QTransition r = episode[std::size_t(t)];
      r.goal = goal;
      bool arrived =
          cell_of(r.next_obs, cfg_.cell_size) == goal;
      r.reward = arrived ? 0.0f : -1.0f;
      r.done = arrived;
      buffer_.insert(std::move(r));
    };

    relabeled(final_goal);
    for (int k = 0; k < cfg_.her_future; ++k) {
      int t2 = int(rng.uniform_int(t, T - 1));  // arrival index t2+1
      relabeled(cell_of(arrivals[std::size_t(t2)], cfg_.cell_size));
    }
  }
}

long QTrainer::run_episode(std::uint64_t episode_index) {
  if (maps_.empty()) load_maps();
  Rng rng = Rng::derive(cfg_.seed, 0x71657069, episode_index);  // "qepi"
  int map_index = int(rng.uniform_int(0, std::int64_t(maps_.size()) - 1));
  Task task = sample_task(maps_[std::size_t(map_index)], cfg_.d_min,
                          cfg_.d_max, rng.next_u64());

  MazeEnv env(cfg_.env_config());
  JointState obs = env.reset(task, rng.next_u64());
  std::vector<float> ctx_flat;
  if (use_context_) {
    TaskContext ctx = encode_context(task, cfg_.nc);
    ctx_flat.assign(ctx.data.begin(), ctx.data.end());
  }

  std::vector<QTransition> episode;
  std::vector<JointState> arrivals;
  const double eps = epsilon();
  bool reached = false;
  while (!env.done()) {
    int a = rng.bernoulli(eps) ? int(rng.uniform_int(0, kNumActions - 1))
                               : greedy_action(obs, ctx_flat);
    StepResult res = env.step(Action(a));
    QTransition tr;
    tr.obs = obs;
    tr.next_obs = res.next_obs;
    tr.map_index = map_index;
    tr.start = task.start;
    tr.goal = task.goal;
    tr.action = a;
    tr.reward = float(res.reward);
    tr.done = res.done;
    episode.push_back(tr);
    arrivals.push_back(res.next_obs);
    obs = res.next_obs;
    reached = res.info.reached_goal;
  }
  insert_with_hindsight(episode, arrivals, rng);

  long steps = long(episode.size());
  frames_ += steps;
  episodes_ += 1;
  recent_outcomes_.push_back(reached ? 1 : 0);
  if (recent_outcomes_.size() > 50)
    recent_outcomes_.erase(recent_outcomes_.begin());
  return steps;
}

QMetrics QTrainer::learner_step() {
  Rng rng = Rng::derive(cfg_.seed, 0x716c726e, std::uint64_t(learner_steps_));
  const int B = cfg_.batch;
  PrioritySample ps = buffer_.sample(B, rng);

  const int in = net_cfg_.input;
  const double v_max = double(cfg_.timeout);
  std::vector<float> x(std::size_t(B) * in);
  std::vector<float> y(std::size_t(B), 0.0f);
  std::vector<float> onehot(std::size_t(B) * kNumActions, 0.0f);
  std::vector<float> isw(std::size_t(B), 0.0f);
  std::vector<float> row(std::size_t(in), 0.0f);
  std::array<float, kNumActions> q_on, q_tg;

  for (int b = 0; b < B; ++b) {
    const QTransition& tr = buffer_.at(ps.indices[std::size_t(b)]);
    std::vector<float> ctx_flat;
    if (use_context_) {
      Task task;
      task.map = maps_[std::size_t(tr.map_index)];
      task.start = tr.start;
      task.goal = tr.goal;
      TaskContext ctx = encode_context(task, cfg_.nc);
      ctx_flat.assign(ctx.data.begin(), ctx.data.end());
    }
    build_input(tr.obs, ctx_flat, row);
    std::copy(row.begin(), row.end(), x.begin() + std::size_t(b) * in);

    double target = tr.reward;
    if (!tr.done) {
      build_input(tr.next_obs, ctx_flat, row);
      qnet_forward(online_, net_cfg_, row, q_on);
      int a_star = 0;
      for (int a = 1; a < kNumActions; ++a)
        if (q_on[std::size_t(a)] > q_on[std::size_t(a_star)]) a_star = a;
      qnet_forward(target_, net_cfg_, row, q_tg);
      target += cfg_.gamma * double(q_tg[std::size_t(a_star)]);
    }
    y[std::size_t(b)] = float(std::clamp(target, -v_max, 0.0));
    onehot[std::size_t(b) * kNumActions + tr.action] = 1.0f;
    isw[std::size_t(b)] = float(ps.is_weights[std::size_t(b)]);
  }

  Tape<float> tape;
  auto leaves = bind_leaves(tape, online_);
  auto P = [&](const std::string& n) { return leaf_of(leaves, online_, n); };
  auto cur = tape.constant(B, in, x);
  for (int l = 1; l <= net_cfg_.layers; ++l)
    cur = tape.elu(tape.linear(cur, P("q.w" + std::to_string(l)),
                               P("q.b" + std::to_string(l))));
  auto qout = tape.linear(cur, P("q.out_w"), P("q.out_b"));
  auto selected =
      tape.rowsum(tape.mul(qout, tape.constant(B, kNumActions, onehot)));
  auto loss = tape.weighted_mse(selected, tape.constant(B, 1, y),
                                tape.constant(B, 1, isw));

  QMetrics m;
  m.loss = double(tape.value(loss)[0]);
  std::vector<double> abs_td(std::size_t(B), 0.0);
  auto sel = tape.value(selected);
  double td_sum = 0;
  for (int b = 0; b < B; ++b) {
    abs_td[std::size_t(b)] =
        std::abs(double(sel[std::size_t(b)]) - double(y[std::size_t(b)]));
    td_sum += abs_td[std::size_t(b)];
  }
  m.mean_abs_td = td_sum / B;

  tape.backward(loss);
  std::vector<float> grad(online_.flat_size(), 0.0f);
  collect_gradients(tape, online_, leaves, std::span<float>(grad));
  m.grad_norm = clip_global_norm(std::span<float>(grad), cfg_.clip_norm);
  AdamHyper h;
  h.lr = cfg_.lr;
  adam_step(online_.flat(), std::span<const float>(grad.data(), grad.size()),
            opt_, h);

  buffer_.update(ps.indices, abs_td);
  learner_steps_ += 1;
  if (learner_steps_ % cfg_.target_sync == 0)
    std::copy(online_.flat().begin(), online_.flat().end(),
              target_.flat().begin());

  m.step = learner_steps_;
  m.buffer_size = buffer_.size();
  m.recent_success = recent_success();
  m.epsilon = epsilon();
  return m;
}

TrainResult QTrainer::train(const std::string& out_dir) {
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);
  if (maps_.empty()) load_maps();

  const std::string ckpt_path = out_dir + "/checkpoint.hnav";
  std::ofstream metrics(out_dir + "/metrics.csv",
                        frames_ > 0 ? std::ios::app : std::ios::trunc);
  if (frames_ == 0)
    metrics << "step,loss,mean_abs_td,grad_norm,buffer,recent_success,"
               "epsilon\n";

  long learn_start = -1;
  long next_snapshot = ((frames_ / cfg_.snapshot_interval) + 1) *
                       cfg_.snapshot_interval;
  while (frames_ < cfg_.total_frames) {
    run_episode(std::uint64_t(episodes_));
    if (long(buffer_.size()) >= cfg_.q_min_transitions) {
      if (learn_start < 0)
        learn_start = frames_ - learner_steps_ * cfg_.learn_every;
      long due = (frames_ - learn_start) / cfg_.learn_every;
      while (learner_steps_ < due) {
        QMetrics m = learner_step();
        metrics << m.step << ',' << m.loss << ',' << m.mean_abs_td << ','
                << m.grad_norm << ',' << m.buffer_size << ','
                << m.recent_success << ',' << m.epsilon << '\n';
      }
    }
    if (frames_ >= next_snapshot) {
      save_checkpoint_file(ckpt_path);
      next_snapshot += cfg_.snapshot_interval;
    }
  }
  save_checkpoint_file(ckpt_path);

  TrainResult r;
  r.checkpoint_path = ckpt_path;
  r.frames = frames_;
  r.episodes = episodes_;
  r.learner_steps = learner_steps_;
  r.recent_success = recent_success();
  return r;
}

void QTrainer::save_checkpoint_file(const std::string& path) const {
  Checkpoint ck;
  std::ostringstream meta;
  meta << config_to_text(cfg_);
  meta << "use_context = " << (use_context_ ? 1 : 0) << "\n";
  meta << "frames = " << frames_ << "\n";
  meta << "episodes = " << episodes_ << "\n";
  meta << "learner_steps = " << learner_steps_ << "\n";
  meta << "adam_t = " << opt_.t << "\n";
  ck.metadata = meta.str();
  append_params(ck, online_, "online.");
  append_params(ck, target_, "target.");
  Checkpoint::Tensor tm;
  tm.name = "opt.m";
  tm.shape = {int(opt_.m.size())};
  tm.data = opt_.m;
  ck.tensors.push_back(std::move(tm));
  Checkpoint::Tensor tv;
  tv.name = "opt.v";
  tv.shape = {int(opt_.v.size())};
  tv.data = opt_.v;
  ck.tensors.push_back(std::move(tv));
  save_checkpoint(path, ck);
}

void QTrainer::load_checkpoint_file(const std::string& path) {
  Checkpoint ck = load_checkpoint(path);
  extract_params(ck, online_, "online.");
  extract_params(ck, target_, "target.");
  for (const auto& t : ck.tensors) {
    if (t.name == "opt.m") {
      if (t.data.size() != opt_.m.size())
        throw CheckpointError(CheckpointErrorKind::VersionMismatch,
                              "optimizer moment size mismatch");
      opt_.m = t.data;
    } else if (t.name == "opt.v") {
      if (t.data.size() != opt_.v.size())
        throw CheckpointError(CheckpointErrorKind::VersionMismatch,
                              "optimizer moment size mismatch");
      opt_.v = t.data;
    }
  }
  frames_ = std::stol(metadata_value(ck.metadata, "frames"));
  episodes_ = std::stol(metadata_value(ck.metadata, "episodes"));
  learner_steps_ = std::stol(metadata_value(ck.metadata, "learner_steps"));
  opt_.t = std::stoll(metadata_value(ck.metadata, "adam_t"));
}

}  // namespace hnav
