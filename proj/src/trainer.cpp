#include "hnav/trainer.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "hnav/checkpoint.hpp"
#include "hnav/errors.hpp"

namespace hnav {

ModelConfig TrainConfig::model_config() const {
  ModelConfig m;
  m.d = d;
  m.h_f = h_f;
  m.enc_hidden = enc_hidden;
  m.trunk_hidden = trunk_hidden;
  m.embed = embed;
  m.pred_hidden = pred_hidden;
  m.nc = nc;
  m.map_size = map_size;
  m.v_max_value = double(timeout);
  m.v_max_step = v_max * action_repeat;
  return m;
}

EnvConfig TrainConfig::env_config() const {
  EnvConfig e;
  e.cell_size = cell_size;
  e.action_repeat = action_repeat;
  e.v_max = v_max;
  e.accel = accel;
  e.friction = friction;
  e.turn_rate = turn_rate;
  e.agent_radius = agent_radius;
  e.timeout = timeout;
  e.gamma = gamma;
  return e;
}

SearchConfig TrainConfig::search_config() const {
  SearchConfig s;
  s.num_simulations = num_simulations;
  s.c1 = c1;
  s.c2 = c2;
  s.dirichlet_alpha = dirichlet_alpha;
  s.dirichlet_frac = dirichlet_frac;
  s.discount = gamma;
  return s;
}

SampleConfig TrainConfig::sample_config() const {
  SampleConfig s;
  s.batch = batch;
  s.unroll = unroll;
  s.nstep = nstep;
  s.p_her = p_her;
  s.gamma = gamma;
  return s;
}

namespace {

std::string strip(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

long parse_long(const std::string& key, const std::string& v) {
  std::size_t pos = 0;
  long out;
  try {
    out = std::stol(v, &pos);
  } catch (const std::exception&) {
    throw ConfigError("bad integer for '" + key + "': " + v);
  }
  if (pos != v.size())
    throw ConfigError("bad integer for '" + key + "': " + v);
  return out;
}

double parse_double(const std::string& key, const std::string& v) {
  std::size_t pos = 0;
  double out;
  try {
    out = std::stod(v, &pos);
  } catch (const std::exception&) {
    throw ConfigError("bad number for '" + key + "': " + v);
  }
  if (pos != v.size()) throw ConfigError("bad number for '" + key + "': " + v);
  return out;
}

std::uint64_t parse_u64(const std::string& key, const std::string& v) {
  std::size_t pos = 0;
  unsigned long long out;
  try {
    out = std::stoull(v, &pos);
  } catch (const std::exception&) {
    throw ConfigError("bad integer for '" + key + "': " + v);
  }
  if (pos != v.size())
    throw ConfigError("bad integer for '" + key + "': " + v);
  return out;
}

bool apply_key(TrainConfig& c, const std::string& key, const std::string& v) {
  auto i = [&] { return int(parse_long(key, v)); };
  auto l = [&] { return parse_long(key, v); };
  auto d = [&] { return parse_double(key, v); };
  if (key == "agent") c.agent = v;
  else if (key == "seed") c.seed = parse_u64(key, v);
  else if (key == "d") c.d = i();
  else if (key == "h_f") c.h_f = i();
  else if (key == "enc_hidden") c.enc_hidden = i();
  else if (key == "trunk_hidden") c.trunk_hidden = i();
  else if (key == "embed") c.embed = i();
  else if (key == "pred_hidden") c.pred_hidden = i();
  else if (key == "nc") c.nc = i();
  else if (key == "map_size") c.map_size = i();
  else if (key == "cell_size") c.cell_size = d();
  else if (key == "action_repeat") c.action_repeat = i();
  else if (key == "v_max") c.v_max = d();
  else if (key == "accel") c.accel = d();
  else if (key == "friction") c.friction = d();
  else if (key == "turn_rate") c.turn_rate = d();
  else if (key == "agent_radius") c.agent_radius = d();
  else if (key == "timeout") c.timeout = i();
  else if (key == "gamma") c.gamma = d();
  else if (key == "num_simulations") c.num_simulations = i();
  else if (key == "c1") c.c1 = d();
  else if (key == "c2") c.c2 = d();
  else if (key == "dirichlet_alpha") c.dirichlet_alpha = d();
  else if (key == "dirichlet_frac") c.dirichlet_frac = d();
  else if (key == "temp_early") c.temp_early = d();
  else if (key == "temp_mid") c.temp_mid = d();
  else if (key == "temp_late") c.temp_late = d();
  else if (key == "unroll") c.unroll = i();
  else if (key == "nstep") c.nstep = i();
  else if (key == "batch") c.batch = i();
  else if (key == "lambda_model") c.lambda_model = d();
  else if (key == "lr") c.lr = d();
  else if (key == "total_frames") c.total_frames = l();
  else if (key == "actors") c.actors = i();
  else if (key == "snapshot_interval") c.snapshot_interval = l();
  else if (key == "p_her") c.p_her = d();
  else if (key == "capacity") c.capacity = l();
  else if (key == "clip_norm") c.clip_norm = d();
  else if (key == "learn_every") c.learn_every = i();
  else if (key == "min_buffer") c.min_buffer = i();
  else if (key == "maps_dir") c.maps_dir = v;
  else if (key == "train_maps") c.train_maps = i();
  else if (key == "d_min") c.d_min = i();
  else if (key == "d_max") c.d_max = i();
  else if (key == "q_hidden") c.q_hidden = i();
  else if (key == "q_layers") c.q_layers = i();
  else if (key == "eps_start") c.eps_start = d();
  else if (key == "eps_end") c.eps_end = d();
  else if (key == "target_sync") c.target_sync = i();
  else if (key == "priority_omega") c.priority_omega = d();
  else if (key == "is_beta") c.is_beta = d();
  else if (key == "her_future") c.her_future = i();
  else if (key == "q_capacity") c.q_capacity = l();
  else if (key == "q_min_transitions") c.q_min_transitions = i();
  else return false;
  return true;
}

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

TrainConfig parse_config_text(const std::string& text, bool ignore_unknown) {
  TrainConfig cfg;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string s = strip(line);
    if (s.empty() || s[0] == '#') continue;
    std::size_t eq = s.find('=');
    if (eq == std::string::npos) {
      if (ignore_unknown) continue;
      throw ConfigError("line " + std::to_string(lineno) +
                        ": expected 'key = value', got: " + s);
    }
    std::string key = strip(s.substr(0, eq));
    std::string value = strip(s.substr(eq + 1));
    if (key.empty())
      throw ConfigError("line " + std::to_string(lineno) + ": empty key");
    if (!apply_key(cfg, key, value) && !ignore_unknown)
      throw ConfigError("line " + std::to_string(lineno) +
                        ": unknown config key '" + key + "'");
  }
  return cfg;
}

TrainConfig load_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str());
}

std::string config_to_text(const TrainConfig& c) {
  std::ostringstream o;
  o << "agent = " << c.agent << "\n";
  o << "seed = " << c.seed << "\n";
  o << "d = " << c.d << "\n";
  o << "h_f = " << c.h_f << "\n";
  o << "enc_hidden = " << c.enc_hidden << "\n";
  o << "trunk_hidden = " << c.trunk_hidden << "\n";
  o << "embed = " << c.embed << "\n";
  o << "pred_hidden = " << c.pred_hidden << "\n";
  o << "nc = " << c.nc << "\n";
  o << "map_size = " << c.map_size << "\n";
  o << "cell_size = " << fmt_double(c.cell_size) << "\n";
  o << "action_repeat = " << c.action_repeat << "\n";
  o << "v_max = " << fmt_double(c.v_max) << "\n";
  o << "accel = " << fmt_double(c.accel) << "\n";
  o << "friction = " << fmt_double(c.friction) << "\n";
  o << "turn_rate = " << fmt_double(c.turn_rate) << "\n";
  o << "agent_radius = " << fmt_double(c.agent_radius) << "\n";
  o << "timeout = " << c.timeout << "\n";
  o << "gamma = " << fmt_double(c.gamma) << "\n";
  o << "num_simulations = " << c.num_simulations << "\n";
  o << "c1 = " << fmt_double(c.c1) << "\n";
  o << "c2 = " << fmt_double(c.c2) << "\n";
  o << "dirichlet_alpha = " << fmt_double(c.dirichlet_alpha) << "\n";
  o << "dirichlet_frac = " << fmt_double(c.dirichlet_frac) << "\n";
  o << "temp_early = " << fmt_double(c.temp_early) << "\n";
  o << "temp_mid = " << fmt_double(c.temp_mid) << "\n";
  o << "temp_late = " << fmt_double(c.temp_late) << "\n";
  o << "unroll = " << c.unroll << "\n";
  o << "nstep = " << c.nstep << "\n";
  o << "batch = " << c.batch << "\n";
  o << "lambda_model = " << fmt_double(c.lambda_model) << "\n";
  o << "lr = " << fmt_double(c.lr) << "\n";
  o << "total_frames = " << c.total_frames << "\n";
  o << "actors = " << c.actors << "\n";
  o << "snapshot_interval = " << c.snapshot_interval << "\n";
  o << "p_her = " << fmt_double(c.p_her) << "\n";
  o << "capacity = " << c.capacity << "\n";
  o << "clip_norm = " << fmt_double(c.clip_norm) << "\n";
  o << "learn_every = " << c.learn_every << "\n";
  o << "min_buffer = " << c.min_buffer << "\n";
  o << "maps_dir = " << c.maps_dir << "\n";
  o << "train_maps = " << c.train_maps << "\n";
  o << "d_min = " << c.d_min << "\n";
  o << "d_max = " << c.d_max << "\n";
  o << "q_hidden = " << c.q_hidden << "\n";
  o << "q_layers = " << c.q_layers << "\n";
  o << "eps_start = " << fmt_double(c.eps_start) << "\n";
  o << "eps_end = " << fmt_double(c.eps_end) << "\n";
  o << "target_sync = " << c.target_sync << "\n";
  o << "priority_omega = " << fmt_double(c.priority_omega) << "\n";
  o << "is_beta = " << fmt_double(c.is_beta) << "\n";
  o << "her_future = " << c.her_future << "\n";
  o << "q_capacity = " << c.q_capacity << "\n";
  o << "q_min_transitions = " << c.q_min_transitions << "\n";
  return o.str();
}

template <typename T>
LossBatch<T> make_loss_batch(const std::vector<TrainingTarget>& targets,
                             const ParamStoreT<T>& store,
                             const ModelConfig& cfg) {
  if (targets.empty()) throw EmptyBuffer("make_loss_batch: no targets");
  const int B = int(targets.size());
  const int K = targets[0].unroll;
  const int d = cfg.d;
  const std::size_t ctx_n = std::size_t(context_input_size(cfg.nc));

  LossBatch<T> b;
  b.batch = B;
  b.unroll = K;
  b.ctx.resize(std::size_t(B) * ctx_n);
  b.obs.resize(std::size_t(K + 1) * B * kEncoderInput);
  b.actions.resize(std::size_t(K) * B);
  b.value_target.resize(std::size_t(K + 1) * B);
  b.policy_target.resize(std::size_t(K + 1) * B * kNumActions);
  b.reward_target.resize(std::size_t(K) * B);
  b.position_mask.resize(std::size_t(K + 1) * B);
  b.reward_mask.resize(std::size_t(K) * B);
  b.model_mask.resize(std::size_t(K) * B);
  b.model_target.resize(std::size_t(K) * B * d);

  for (int i = 0; i < B; ++i) {
    const TrainingTarget& tg = targets[std::size_t(i)];
    if (tg.unroll != K)
      throw ShapeMismatch("make_loss_batch: mixed unroll lengths");
    for (std::size_t j = 0; j < ctx_n; ++j)
      b.ctx[std::size_t(i) * ctx_n + j] = T(tg.ctx_flat[j]);
    for (int k = 0; k <= K; ++k) {
      auto norm = normalize_obs(tg.obs[std::size_t(k)], cfg.map_size,
                                cfg.v_max_step);
      for (int j = 0; j < kEncoderInput; ++j)
        b.obs[(std::size_t(k) * B + i) * kEncoderInput + j] = T(norm[j]);
      b.value_target[std::size_t(k) * B + i] = T(tg.value_target[k]);
      for (int a = 0; a < kNumActions; ++a)
        b.policy_target[(std::size_t(k) * B + i) * kNumActions + a] =
            T(tg.policy_target[std::size_t(k)][std::size_t(a)]);
      b.position_mask[std::size_t(k) * B + i] = T(tg.position_mask[k]);
    }
    for (int k = 0; k < K; ++k) {
      b.actions[std::size_t(k) * B + i] = tg.actions[std::size_t(k)];
      b.reward_target[std::size_t(k) * B + i] = T(tg.reward_target[k]);
      b.reward_mask[std::size_t(k) * B + i] = T(tg.reward_mask[k]);
      b.model_mask[std::size_t(k) * B + i] = T(tg.reward_mask[k]);
    }
  }

  // Frozen latent targets: the encoder applied to the arrival observations,
  // evaluated at the sampling-time parameters (the stop-gradient side of the
  // auxiliary loss). Shares the graph's ops so semantics agree exactly.
  Tape<T> tape;
  auto enc_w1 = tape.constant(kEncoderInput, cfg.enc_hidden,
                              store.view("enc.w1"));
  auto enc_b1 = tape.constant(1, cfg.enc_hidden, store.view("enc.b1"));
  auto enc_w2 = tape.constant(cfg.enc_hidden, d, store.view("enc.w2"));
  auto enc_b2 = tape.constant(1, d, store.view("enc.b2"));
  std::vector<T> rows(std::size_t(K) * B * kEncoderInput);
  for (int k = 0; k < K; ++k)
    for (int i = 0; i < B; ++i)
      for (int j = 0; j < kEncoderInput; ++j)
        rows[(std::size_t(k) * B + i) * kEncoderInput + j] =
            b.obs[(std::size_t(k + 1) * B + i) * kEncoderInput + j];
  auto x = tape.constant(K * B, kEncoderInput, rows);
  auto h = tape.elu(tape.linear(x, enc_w1, enc_b1));
  auto s = tape.row_unit_maxabs(tape.linear(h, enc_w2, enc_b2));
  auto sv = tape.value(s);
  std::copy(sv.begin(), sv.end(), b.model_target.begin());
  return b;
}

template LossBatch<float> make_loss_batch<float>(
    const std::vector<TrainingTarget>&, const ParamStoreT<float>&,
    const ModelConfig&);
template LossBatch<double> make_loss_batch<double>(
    const std::vector<TrainingTarget>&, const ParamStoreT<double>&,
    const ModelConfig&);

template <typename T>
LossValues loss_and_grad(const ParamStoreT<T>& store, const ModelConfig& cfg,
                         const LossBatch<T>& batch, T lambda_model,
                         std::span<T> grad_out) {
  Tape<T> tape;
  auto g = build_loss_graph(tape, store, cfg, batch, lambda_model);
  LossValues lv;
  lv.total = double(tape.value(g.total)[0]);
  lv.value = double(tape.value(g.value)[0]);
  lv.policy = double(tape.value(g.policy)[0]);
  lv.reward = double(tape.value(g.reward)[0]);
  lv.model = double(tape.value(g.model)[0]);
  for (auto id : g.value_k) lv.value_k.push_back(double(tape.value(id)[0]));
  for (auto id : g.policy_k) lv.policy_k.push_back(double(tape.value(id)[0]));
  for (auto id : g.reward_k) lv.reward_k.push_back(double(tape.value(id)[0]));
  for (auto id : g.model_k) lv.model_k.push_back(double(tape.value(id)[0]));
  if (!grad_out.empty()) {
    if (grad_out.size() != store.flat_size())
      throw ShapeMismatch("loss_and_grad: grad size mismatch");
    std::fill(grad_out.begin(), grad_out.end(), T(0));
    tape.backward(g.total);
    collect_gradients(tape, store, g.leaves, grad_out);
  }
  return lv;
}

template LossValues loss_and_grad<float>(const ParamStoreT<float>&,
                                         const ModelConfig&,
                                         const LossBatch<float>&, float,
                                         std::span<float>);
template LossValues loss_and_grad<double>(const ParamStoreT<double>&,
                                          const ModelConfig&,
                                          const LossBatch<double>&, double,
                                          std::span<double>);

void HypermodelPlan::evaluate(std::span<const float> s,
                              std::span<float> prior6, float& value) {
  std::array<float, kNumActions> logits;
  model_.predict(s, embed_, logits, value);
  softmax(logits, prior6);
}

void HypermodelPlan::step(std::span<const float> s, int action,
                          std::span<float> s_next, float& reward) {
  model_.transition(phi_, s, action, s_next, reward);
}

MmnTrainer::MmnTrainer(const TrainConfig& cfg)
    : cfg_(cfg), buffer_(std::size_t(cfg.capacity)) {
  model_ = std::make_unique<Hypermodel>(cfg.model_config());
  Rng rng = Rng::derive(cfg.seed, 0x696e6974);  // "init"
  model_->init(rng);
  opt_.init(model_->params().flat_size());
}

void MmnTrainer::load_maps() {
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

double MmnTrainer::temperature() const {
  double progress =
      cfg_.total_frames > 0 ? double(frames_) / double(cfg_.total_frames) : 1;
  if (progress < 0.5) return cfg_.temp_early;
  if (progress < 0.75) return cfg_.temp_mid;
  return cfg_.temp_late;
}

double MmnTrainer::recent_success() const {
  if (recent_outcomes_.empty()) return 0;
  double s = 0;
  for (char c : recent_outcomes_) s += c ? 1 : 0;
  return s / double(recent_outcomes_.size());
}

long MmnTrainer::run_episode(int actor, std::uint64_t episode_index,
                             int* hyper_calls) {
  if (maps_.empty()) load_maps();
  Rng rng = Rng::derive(cfg_.seed, 0x616374 + std::uint64_t(actor),
                        episode_index);  // per-actor episode stream
  const auto& map =
      maps_[std::size_t(rng.uniform_int(0, std::int64_t(maps_.size()) - 1))];
  Task task = sample_task(map, cfg_.d_min, cfg_.d_max, rng.next_u64());

  MazeEnv env(cfg_.env_config());
  JointState obs = env.reset(task, rng.next_u64());
  TaskContext ctx = encode_context(task, cfg_.nc);

  const ModelConfig& mc = model_->config();
  std::vector<float> embed(std::size_t(mc.embed));
  model_->context_embed(ctx, embed);
  std::vector<float> phi(std::size_t(model_->num_phi()));
  model_->hyper(embed, phi);  // once per episode by construction
  if (hyper_calls) *hyper_calls += 1;
  HypermodelPlan plan(*model_, phi, embed);

  Trajectory traj;
  traj.task = task;
  traj.context = ctx;
  const double temp = temperature();
  std::vector<float> s(std::size_t(mc.d));
  bool reached = false;
  while (!env.done()) {
    auto norm = normalize_obs(obs, mc.map_size, mc.v_max_step);
    model_->encode(norm, s);
    SearchResult sr =
        mcts_search(plan, s, cfg_.search_config(), SearchMode::Train, rng);
    int a = select_action(sr.visit_distribution, temp, rng);
    StepResult res = env.step(Action(a));
    TrajStep st;
    st.obs = obs;
    st.action = a;
    st.reward = float(res.reward);
    st.done = res.done;
    st.policy = sr.visit_distribution;
    st.value = sr.root_value;
    traj.steps.push_back(st);
    obs = res.next_obs;
    reached = res.info.reached_goal;
  }
  traj.final_obs = obs;
  traj.success = reached;
  long steps = traj.length();
  buffer_.append(std::move(traj));

  frames_ += steps;
  episodes_ += 1;
  recent_outcomes_.push_back(reached ? 1 : 0);
  if (recent_outcomes_.size() > 50)
    recent_outcomes_.erase(recent_outcomes_.begin());
  return steps;
}

LearnerMetrics MmnTrainer::learner_step() {
  Rng rng = Rng::derive(cfg_.seed, 0x6c65726e, std::uint64_t(learner_steps_));
  auto targets = sample_batch(buffer_, cfg_.sample_config(), *model_, rng);
  auto batch =
      make_loss_batch<float>(targets, model_->params(), model_->config());

  std::vector<float> grad(model_->params().flat_size(), 0.0f);
  LearnerMetrics m;
  m.loss = loss_and_grad<float>(model_->params(), model_->config(), batch,
                                float(cfg_.lambda_model), grad);
  m.grad_norm = clip_global_norm(std::span<float>(grad), cfg_.clip_norm);
  AdamHyper h;
  h.lr = cfg_.lr;
  adam_step(model_->params().flat(),
            std::span<const float>(grad.data(), grad.size()), opt_, h);

  learner_steps_ += 1;
  m.step = learner_steps_;
  m.buffer_size = buffer_.size();
  m.recent_success = recent_success();
  return m;
}

TrainResult MmnTrainer::train(const std::string& out_dir) {
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);
  if (maps_.empty()) load_maps();

  const std::string ckpt_path = out_dir + "/checkpoint.hnav";
  std::ofstream metrics(out_dir + "/metrics.csv",
                        frames_ > 0 ? std::ios::app : std::ios::trunc);
  if (frames_ == 0) write_metrics_header(metrics);

  long learn_start = -1;
  long next_snapshot = ((frames_ / cfg_.snapshot_interval) + 1) *
                       cfg_.snapshot_interval;
  while (frames_ < cfg_.total_frames) {
    int actor = int(episodes_ % std::max(1, cfg_.actors));
    run_episode(actor, std::uint64_t(episodes_));
    if (long(buffer_.size()) >= cfg_.min_buffer) {
      // Anchor so one learner step is due per learn_every frames from the
      // point learning began; on resume the anchor backdates by the steps
      // already taken, so the cadence continues without a catch-up burst.
      if (learn_start < 0)
        learn_start = frames_ - learner_steps_ * cfg_.learn_every;
      long due = (frames_ - learn_start) / cfg_.learn_every;
      while (learner_steps_ < due) {
        LearnerMetrics m = learner_step();
        write_metrics_row(metrics, m);
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

void MmnTrainer::save_checkpoint_file(const std::string& path) const {
  Checkpoint ck;
  std::ostringstream meta;
  meta << config_to_text(cfg_);
  meta << "frames = " << frames_ << "\n";
  meta << "episodes = " << episodes_ << "\n";
  meta << "learner_steps = " << learner_steps_ << "\n";
  meta << "adam_t = " << opt_.t << "\n";
  meta << "phi_layout = " << model_->phi_layout() << "\n";
  ck.metadata = meta.str();
  append_params(ck, model_->params(), "model.");
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

void MmnTrainer::load_checkpoint_file(const std::string& path) {
  Checkpoint ck = load_checkpoint(path);
  extract_params(ck, model_->params(), "model.");
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

void write_metrics_header(std::ostream& out) {
  out << "step,total,value,policy,reward,model,grad_norm,buffer,"
         "recent_success\n";
}

void write_metrics_row(std::ostream& out, const LearnerMetrics& m) {
  out << m.step << ',' << m.loss.total << ',' << m.loss.value << ','
      << m.loss.policy << ',' << m.loss.reward << ',' << m.loss.model << ','
      << m.grad_norm << ',' << m.buffer_size << ',' << m.recent_success
      << '\n';
}

}  // namespace hnav
