#include "hnav/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "hnav/checkpoint.hpp"
#include "hnav/errors.hpp"

namespace hnav {

double spl(const std::vector<EpisodeRecord>& records) {
  if (records.empty()) throw EmptyRecords();
  double acc = 0;
  for (const auto& r : records)
    if (r.success) acc += r.l / std::max(r.p, r.l);
  return acc / double(records.size());
}

double success_rate(const std::vector<EpisodeRecord>& records) {
  if (records.empty()) throw EmptyRecords();
  double s = 0;
  for (const auto& r : records) s += r.success ? 1 : 0;
  return s / double(records.size());
}

RateInterval success_ci(int successes, int n) {
  RateInterval out;
  out.n = n;
  if (n == 0) return out;
  double p = double(successes) / double(n);
  double half = 1.96 * std::sqrt(p * (1.0 - p) / double(n));
  out.rate = p;
  out.lo = std::max(0.0, p - half);
  out.hi = std::min(1.0, p + half);
  return out;
}

RateInterval success_ci(const std::vector<EpisodeRecord>& records) {
  int s = 0;
  for (const auto& r : records) s += r.success ? 1 : 0;
  return success_ci(s, int(records.size()));
}

std::string perturb_mode_name(PerturbMode mode) {
  switch (mode) {
    case PerturbMode::None: return "none";
    case PerturbMode::MapFlip: return "map_flip";
    case PerturbMode::Scale: return "scale";
    case PerturbMode::LocNoise: return "loc_noise";
  }
  return "none";
}

namespace {

OccupancyMap believed_map(const OccupancyMap& true_map,
                          const PerturbSpec& perturb, Rng& rng) {
  switch (perturb.mode) {
    case PerturbMode::MapFlip:
      return perturb_map_flip(true_map, perturb.level, rng.next_u64());
    case PerturbMode::Scale: {
      double sx = rng.uniform(1.0 - perturb.level, 1.0 + perturb.level);
      double sy = rng.uniform(1.0 - perturb.level, 1.0 + perturb.level);
      return perturb_scale(true_map, sx, sy);
    }
    case PerturbMode::None:
    case PerturbMode::LocNoise:
      break;
  }
  return true_map;
}

struct EpisodeOutcome {
  bool success = false;
  int steps = 0;
  double path = 0;
};

// Runs one task to completion. The env holds the true map; the agent is
// briefed with the believed map and its context; location noise corrupts
// only what the agent sees.
EpisodeOutcome run_episode(Agent& agent, const EnvConfig& env_cfg,
                           const Task& true_task,
                           const OccupancyMap& believed,
                           const PerturbSpec& perturb, int nc,
                           std::uint64_t seed) {
  MazeEnv env(env_cfg);
  JointState obs = env.reset(true_task, seed);
  Task btask = true_task;
  btask.map = believed;
  agent.begin_episode(btask, encode_context(btask, nc), seed);
  Rng noise = Rng::derive(seed, 0x6e6f6973);  // "nois"
  bool reached = false;
  while (!env.done()) {
    JointState shown = obs;
    if (perturb.mode == PerturbMode::LocNoise)
      shown = perturb_position(obs, perturb.level, noise);
    StepResult res = env.step(agent.act(shown));
    obs = res.next_obs;
    reached = res.info.reached_goal;
  }
  EpisodeOutcome out;
  out.success = reached;
  out.steps = env.steps_taken();
  out.path = env.path_length();
  return out;
}

Cell nearest_free(const OccupancyMap& map, Cell want) {
  if (map.is_free(want.row, want.col)) return want;
  for (int r = 1; r < map.size; ++r)
    for (int dr = -r; dr <= r; ++dr)
      for (int dc = -r; dc <= r; ++dc) {
        if (std::max(std::abs(dr), std::abs(dc)) != r) continue;
        if (map.is_free(want.row + dr, want.col + dc))
          return {want.row + dr, want.col + dc};
      }
  throw Unreachable("no free cell near corner");
}

std::string fmt_g(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

std::vector<EpisodeRecord> eval_local(Agent& agent,
                                      const std::vector<OccupancyMap>& maps,
                                      const EvalOptions& opts) {
  std::vector<EpisodeRecord> records;
  for (std::size_t mi = 0; mi < maps.size(); ++mi) {
    const OccupancyMap& map = maps[mi];
    std::uint64_t mid = map_fingerprint(map);
    for (int d = opts.d_min; d <= opts.d_max; ++d) {
      for (int k = 0; k < opts.pairs_per_distance; ++k) {
        Rng draw = Rng::derive(opts.seed, 0x7461736b, mi, std::uint64_t(d) << 16 | std::uint64_t(k));
        Task task;
        try {
          task = sample_task(map, d, d, draw.next_u64());
        } catch (const NoFeasiblePair&) {
          break;  // no pair at this distance on this map
        }
        std::uint64_t seed = draw.next_u64();
        Rng prng = Rng::derive(seed, 0x70657274);  // "pert"
        OccupancyMap believed = believed_map(map, opts.perturb, prng);
        EpisodeOutcome out = run_episode(agent, opts.env, task, believed,
                                         opts.perturb, opts.nc, seed);
        EpisodeRecord r;
        r.agent = agent.name();
        r.map_id = mid;
        r.distance = d;
        r.success = out.success;
        r.steps = out.steps;
        r.p = out.path;
        r.l = double(d) * opts.env.cell_size;
        r.spl = out.success ? r.l / std::max(r.p, r.l) : 0.0;
        r.perturb_mode = perturb_mode_name(opts.perturb.mode);
        r.perturb_level = opts.perturb.level;
        r.seed = seed;
        records.push_back(std::move(r));
      }
    }
  }
  return records;
}

std::vector<EpisodeRecord> eval_hier(Agent& agent,
                                     const std::vector<OccupancyMap>& maps,
                                     const HierOptions& opts) {
  std::vector<EpisodeRecord> records;
  for (std::size_t mi = 0; mi < maps.size(); ++mi) {
    const OccupancyMap& map = maps[mi];
    Cell start = nearest_free(map, {0, map.size - 1});   // top-right
    Cell goal = nearest_free(map, {map.size - 1, 0});    // bottom-left
    if (start == goal) continue;
    auto dist = bfs_distances(map, start);
    int d = dist[std::size_t(goal.row) * map.size + goal.col];
    if (d < 0) continue;

    std::uint64_t seed = Rng::derive(opts.seed, 0x68696572, mi).next_u64();
    Rng prng = Rng::derive(seed, 0x70657274);
    OccupancyMap believed = believed_map(map, opts.perturb, prng);

    // Subgoals come from the believed map, so a map-level perturbation also
    // corrupts the landmark sequence.
    std::vector<Cell> legs;
    if (opts.use_landmarks) {
      try {
        legs = landmarks(believed, start, goal, opts.spacing);
      } catch (const Unreachable&) {
        legs = {goal};
      }
    } else {
      legs = {goal};
    }

    MazeEnv env(opts.env);
    Task true_task;
    true_task.map = map;
    true_task.start = start;
    true_task.goal = legs[0];
    true_task.id = seed;
    JointState obs = env.reset(true_task, seed);
    Rng noise = Rng::derive(seed, 0x6e6f6973);

    int total_steps = 0;
    bool final_reached = false;
    for (std::size_t leg = 0; leg < legs.size(); ++leg) {
      if (leg > 0) obs = env.retarget(legs[leg]);
      Task btask;
      btask.map = believed;
      btask.start = cell_of(obs, opts.env.cell_size);
      btask.goal = legs[leg];
      btask.id = seed + leg;
      agent.begin_episode(btask, encode_context(btask, opts.nc),
                          Rng::derive(seed, 0x6c6567, leg).next_u64());
      bool reached = false;
      while (!env.done()) {
        JointState shown = obs;
        if (opts.perturb.mode == PerturbMode::LocNoise)
          shown = perturb_position(obs, opts.perturb.level, noise);
        StepResult res = env.step(agent.act(shown));
        obs = res.next_obs;
        reached = res.info.reached_goal;
      }
      total_steps += env.steps_taken();
      if (leg + 1 == legs.size()) final_reached = reached;
    }

    EpisodeRecord r;
    r.agent = agent.name();
    r.map_id = map_fingerprint(map);
    r.distance = d;
    r.success = final_reached;
    r.steps = total_steps;
    r.p = env.path_length();
    r.l = double(d) * opts.env.cell_size;
    r.spl = r.success ? r.l / std::max(r.p, r.l) : 0.0;
    r.perturb_mode = perturb_mode_name(opts.perturb.mode);
    r.perturb_level = opts.perturb.level;
    r.seed = seed;
    records.push_back(std::move(r));
  }
  return records;
}

std::vector<std::vector<EpisodeRecord>> perturbation_sweep(
    Agent& agent, const std::vector<OccupancyMap>& maps,
    const EvalOptions& base, PerturbMode mode,
    std::span<const double> levels) {
  std::vector<std::vector<EpisodeRecord>> out;
  for (double level : levels) {
    EvalOptions opts = base;
    opts.perturb.mode = level == 0.0 ? PerturbMode::None : mode;
    opts.perturb.level = level;
    // Record the swept mode even at level 0 so the rows group together.
    auto records = eval_local(agent, maps, opts);
    for (auto& r : records) r.perturb_mode = perturb_mode_name(mode);
    out.push_back(std::move(records));
  }
  return out;
}

void write_report_csv(const std::string& path,
                      const std::vector<EpisodeRecord>& records) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ParseError("cannot open for writing: " + path, 0, 0);
  out << "agent,map_id,distance,success,steps,p,l,spl,perturb_mode,"
         "perturb_level,seed\n";
  for (const auto& r : records) {
    out << r.agent << ',' << r.map_id << ',' << r.distance << ','
        << (r.success ? 1 : 0) << ',' << r.steps << ',' << fmt_g(r.p) << ','
        << fmt_g(r.l) << ',' << fmt_g(r.spl) << ',' << r.perturb_mode << ','
        << fmt_g(r.perturb_level) << ',' << r.seed << '\n';
  }
}

std::vector<EpisodeRecord> read_report_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open: " + path, 0, 0);
  std::string line;
  if (!std::getline(in, line))
    throw ParseError("empty report file", 1, 1);
  std::vector<EpisodeRecord> records;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string tok;
    while (std::getline(ss, tok, ',')) f.push_back(tok);
    if (f.size() != 11)
      throw ParseError("expected 11 fields", lineno, 1);
    EpisodeRecord r;
    try {
      r.agent = f[0];
      r.map_id = std::stoull(f[1]);
      r.distance = std::stoi(f[2]);
      r.success = std::stoi(f[3]) != 0;
      r.steps = std::stoi(f[4]);
      r.p = std::stod(f[5]);
      r.l = std::stod(f[6]);
      r.spl = std::stod(f[7]);
      r.perturb_mode = f[8];
      r.perturb_level = std::stod(f[9]);
      r.seed = std::stoull(f[10]);
    } catch (const std::exception&) {
      throw ParseError("bad field value", lineno, 1);
    }
    records.push_back(std::move(r));
  }
  return records;
}

std::vector<BucketSummary> summarize_buckets(
    const std::vector<EpisodeRecord>& records, int width) {
  if (records.empty()) return {};
  int d_max = 0;
  for (const auto& r : records) d_max = std::max(d_max, r.distance);
  std::vector<BucketSummary> out;
  for (int lo = 1; lo <= d_max; lo += width) {
    BucketSummary b;
    b.d_lo = lo;
    b.d_hi = lo + width - 1;
    std::vector<EpisodeRecord> in_bucket;
    for (const auto& r : records)
      if (r.distance >= b.d_lo && r.distance <= b.d_hi)
        in_bucket.push_back(r);
    if (in_bucket.empty()) continue;
    b.n = int(in_bucket.size());
    for (const auto& r : in_bucket) b.successes += r.success ? 1 : 0;
    b.rate = success_ci(b.successes, b.n);
    b.spl = spl(in_bucket);
    out.push_back(b);
  }
  return out;
}

std::string render_summary(const std::vector<EpisodeRecord>& records) {
  std::ostringstream out;
  std::vector<std::tuple<std::string, std::string, double>> keys;
  for (const auto& r : records) {
    std::tuple<std::string, std::string, double> k{r.agent, r.perturb_mode,
                                                   r.perturb_level};
    if (std::find(keys.begin(), keys.end(), k) == keys.end())
      keys.push_back(k);
  }
  for (const auto& [agent, mode, level] : keys) {
    std::vector<EpisodeRecord> group;
    for (const auto& r : records)
      if (r.agent == agent && r.perturb_mode == mode &&
          r.perturb_level == level)
        group.push_back(r);
    RateInterval ci = success_ci(group);
    char head[160];
    std::snprintf(head, sizeof head,
                  "agent=%s perturb=%s level=%g: n=%d success=%.3f "
                  "[%.3f,%.3f] spl=%.3f\n",
                  agent.c_str(), mode.c_str(), level, ci.n, ci.rate, ci.lo,
                  ci.hi, spl(group));
    out << head;
    for (const auto& b : summarize_buckets(group)) {
      char row[160];
      std::snprintf(row, sizeof row,
                    "  d %d-%d: n=%d success=%.3f [%.3f,%.3f] spl=%.3f\n",
                    b.d_lo, b.d_hi, b.n, b.rate.rate, b.rate.lo, b.rate.hi,
                    b.spl);
      out << row;
    }
  }
  return out.str();
}

MmnAgent::MmnAgent(const Hypermodel& model, const SearchConfig& search,
                   double temperature)
    : model_(model), search_(search), temp_(temperature) {}

void MmnAgent::begin_episode(const Task& task, const TaskContext& ctx,
                             std::uint64_t seed) {
  (void)task;
  const ModelConfig& mc = model_.config();
  std::vector<float> embed(std::size_t(mc.embed));
  model_.context_embed(ctx, embed);
  std::vector<float> phi(std::size_t(model_.num_phi()));
  model_.hyper(embed, phi);
  hyper_calls_ += 1;
  plan_.emplace(model_, std::move(phi), std::move(embed));
  rng_ = Rng::derive(seed, 0x6d6d6e);
}

Action MmnAgent::act(const JointState& obs) {
  const ModelConfig& mc = model_.config();
  auto norm = normalize_obs(obs, mc.map_size, mc.v_max_step);
  std::vector<float> s(std::size_t(mc.d));
  model_.encode(norm, s);
  SearchResult sr = mcts_search(*plan_, s, search_, SearchMode::Eval, rng_);
  return Action(select_action(sr.visit_distribution, temp_, rng_));
}

void QPolicyAgent::begin_episode(const Task& task, const TaskContext& ctx,
                                 std::uint64_t seed) {
  (void)task;
  (void)seed;
  if (trainer_.uses_context())
    ctx_flat_.assign(ctx.data.begin(), ctx.data.end());
  else
    ctx_flat_.clear();
}

Action QPolicyAgent::act(const JointState& obs) {
  return Action(trainer_.greedy_action(obs, ctx_flat_));
}

TrainConfig config_from_metadata(const std::string& metadata) {
  return parse_config_text(metadata, /*ignore_unknown=*/true);
}

std::unique_ptr<Hypermodel> load_hypermodel_checkpoint(const std::string& path,
                                                       TrainConfig* cfg_out) {
  Checkpoint ck = load_checkpoint(path);
  TrainConfig cfg = config_from_metadata(ck.metadata);
  auto model = std::make_unique<Hypermodel>(cfg.model_config());
  extract_params(ck, model->params(), "model.");
  if (cfg_out) *cfg_out = cfg;
  return model;
}

std::unique_ptr<QTrainer> load_qtrainer_checkpoint(const std::string& path,
                                                   TrainConfig* cfg_out) {
  Checkpoint ck = load_checkpoint(path);
  TrainConfig cfg = config_from_metadata(ck.metadata);
  bool use_ctx = metadata_value(ck.metadata, "use_context") == "1";
  auto trainer = std::make_unique<QTrainer>(cfg, use_ctx);
  trainer->load_checkpoint_file(path);
  if (cfg_out) *cfg_out = cfg;
  return trainer;
}

}  // namespace hnav
