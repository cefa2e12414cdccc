#pragma once

#include <optional>
#include <string>
#include <vector>

#include "hnav/agent.hpp"
#include "hnav/qagent.hpp"
#include "hnav/trainer.hpp"

namespace hnav {

struct EpisodeRecord {
  std::string agent;
  std::uint64_t map_id = 0;
  int distance = 0;
  bool success = false;
  int steps = 0;
  double p = 0;  // traveled path length, world units
  double l = 0;  // shortest-path length, world units
  double spl = 0;
  std::string perturb_mode = "none";
  double perturb_level = 0;
  std::uint64_t seed = 0;
};

// Success-weighted path-length ratio over a record set: the mean of
// S * l / max(p, l). Throws EmptyRecords.
double spl(const std::vector<EpisodeRecord>& records);
double success_rate(const std::vector<EpisodeRecord>& records);

// Normal-approximation interval for a binomial rate.
struct RateInterval {
  double rate = 0, lo = 0, hi = 0;
  int n = 0;
};
RateInterval success_ci(int successes, int n);
RateInterval success_ci(const std::vector<EpisodeRecord>& records);

enum class PerturbMode { None, MapFlip, Scale, LocNoise };
std::string perturb_mode_name(PerturbMode mode);

// level means: MapFlip = flip probability per interior cell; Scale = half
// range of the per-axis factors (drawn in [1-level, 1+level]); LocNoise =
// uniform position offset bound in world units.
struct PerturbSpec {
  PerturbMode mode = PerturbMode::None;
  double level = 0;
};

struct EvalOptions {
  int d_min = 1;
  int d_max = 6;
  int pairs_per_distance = 5;
  int nc = 13;
  EnvConfig env;
  PerturbSpec perturb;
  std::uint64_t seed = 0;
};

// Zero-shot protocol: for every map and every exact distance, a fixed
// number of sampled start/goal pairs, one episode each. The simulator
// always runs on the true map; perturbations only corrupt what the agent
// is shown. Distances with no feasible pair on a map are skipped.
std::vector<EpisodeRecord> eval_local(Agent& agent,
                                      const std::vector<OccupancyMap>& maps,
                                      const EvalOptions& opts);

struct HierOptions {
  int spacing = 3;
  bool use_landmarks = true;  // false: single corner-to-corner goal
  int nc = 13;
  EnvConfig env;
  PerturbSpec perturb;
  std::uint64_t seed = 0;
};

// Corner-to-corner tasks: start at the free cell nearest the top-right
// corner, goal nearest the bottom-left. With landmarks enabled, path cells
// at the given spacing are fed as successive goals, advancing on arrival or
// per-leg timeout; the episode succeeds only if the final goal is reached.
// Path length and steps accumulate across legs.
std::vector<EpisodeRecord> eval_hier(Agent& agent,
                                     const std::vector<OccupancyMap>& maps,
                                     const HierOptions& opts);

// One eval_local sweep per level, same protocol otherwise.
std::vector<std::vector<EpisodeRecord>> perturbation_sweep(
    Agent& agent, const std::vector<OccupancyMap>& maps,
    const EvalOptions& base, PerturbMode mode, std::span<const double> levels);

void write_report_csv(const std::string& path,
                      const std::vector<EpisodeRecord>& records);
std::vector<EpisodeRecord> read_report_csv(const std::string& path);

struct BucketSummary {
  int d_lo = 0, d_hi = 0;
  int n = 0;
  int successes = 0;
  RateInterval rate;
  double spl = 0;
};
// Consecutive distance buckets of the given width, e.g. [1,2], [3,4], [5,6].
std::vector<BucketSummary> summarize_buckets(
    const std::vector<EpisodeRecord>& records, int width = 2);

// Per (agent, perturb mode, level) table plus distance buckets, plain text.
std::string render_summary(const std::vector<EpisodeRecord>& records);

// Planning agent at evaluation settings: no exploration noise, greedy
// action selection unless a sampling temperature is requested.
class MmnAgent : public Agent {
 public:
  MmnAgent(const Hypermodel& model, const SearchConfig& search,
           double temperature = 0.0);
  std::string name() const override { return "mmn"; }
  void begin_episode(const Task& task, const TaskContext& ctx,
                     std::uint64_t seed) override;
  Action act(const JointState& obs) override;
  int hyper_calls() const { return hyper_calls_; }

 private:
  const Hypermodel& model_;
  SearchConfig search_;
  double temp_;
  std::optional<HypermodelPlan> plan_;
  Rng rng_{0};
  int hyper_calls_ = 0;
};

class QPolicyAgent : public Agent {
 public:
  QPolicyAgent(const QTrainer& trainer, std::string name)
      : trainer_(trainer), name_(std::move(name)) {}
  std::string name() const override { return name_; }
  void begin_episode(const Task& task, const TaskContext& ctx,
                     std::uint64_t seed) override;
  Action act(const JointState& obs) override;

 private:
  const QTrainer& trainer_;
  std::string name_;
  std::vector<float> ctx_flat_;
};

// Checkpoint loaders for the command-line tools. The stored metadata keeps
// the full config; unknown metadata lines (counters etc.) are skipped.
TrainConfig config_from_metadata(const std::string& metadata);
std::unique_ptr<Hypermodel> load_hypermodel_checkpoint(
    const std::string& path, TrainConfig* cfg_out = nullptr);
std::unique_ptr<QTrainer> load_qtrainer_checkpoint(const std::string& path,
                                                   TrainConfig* cfg_out =
                                                       nullptr);

}  // namespace hnav
