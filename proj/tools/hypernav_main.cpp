#include <cstdio>
#include <filesystem>
#include <iostream>
#include <memory>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "hnav/eval.hpp"
#include "hnav/oracle.hpp"

namespace fs = std::filesystem;
using namespace hnav;

namespace {

// Thrown for contract violations that argument parsing alone cannot catch;
// mapped to exit code 2 like any other usage error.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::vector<OccupancyMap> load_map_dir(const std::string& dir) {
  std::vector<fs::path> files;
  for (auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".txt" &&
        e.path().filename().string().rfind("map_", 0) == 0)
      files.push_back(e.path());
  std::sort(files.begin(), files.end());
  std::vector<OccupancyMap> maps;
  for (auto& f : files) maps.push_back(read_map(f.string()));
  if (maps.empty()) throw UsageError("no map_*.txt files in " + dir);
  return maps;
}

void parse_distances(const std::string& text, int& lo, int& hi) {
  auto dots = text.find("..");
  try {
    if (dots == std::string::npos) {
      lo = hi = std::stoi(text);
    } else {
      lo = std::stoi(text.substr(0, dots));
      hi = std::stoi(text.substr(dots + 2));
    }
  } catch (const std::exception&) {
    throw UsageError("--distances expects A..B or a single integer, got: " +
                     text);
  }
  if (lo < 1 || hi < lo)
    throw UsageError("--distances range must satisfy 1 <= A <= B");
}

std::vector<double> parse_levels(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    try {
      out.push_back(std::stod(tok));
    } catch (const std::exception&) {
      throw UsageError("--levels expects comma-separated numbers, got: " +
                       text);
    }
  }
  if (out.empty()) throw UsageError("--levels is empty");
  return out;
}

bool is_learned(const std::string& agent) {
  return agent == "mmn" || agent == "mah" || agent == "dqn";
}

// Builds the requested agent. Learned agents come from their checkpoint;
// cfg_out receives the checkpoint config (or defaults sized to the maps).
struct BuiltAgent {
  std::unique_ptr<Agent> agent;
  std::unique_ptr<Hypermodel> model;    // keeps mmn weights alive
  std::unique_ptr<QTrainer> qtrainer;   // keeps q weights alive
  TrainConfig cfg;
};

BuiltAgent build_agent(const std::string& name, const std::string& checkpoint,
                       int map_size) {
  BuiltAgent out;
  if (is_learned(name) && checkpoint.empty())
    throw UsageError("agent '" + name + "' requires --checkpoint");
  if (name == "mmn") {
    out.model = load_hypermodel_checkpoint(checkpoint, &out.cfg);
    out.agent = std::make_unique<MmnAgent>(*out.model,
                                           out.cfg.search_config(), 0.0);
  } else if (name == "mah" || name == "dqn") {
    out.qtrainer = load_qtrainer_checkpoint(checkpoint, &out.cfg);
    bool want_ctx = name == "mah";
    if (out.qtrainer->uses_context() != want_ctx)
      throw std::runtime_error("checkpoint context mode does not match agent '" +
                               name + "'");
    out.agent = std::make_unique<QPolicyAgent>(*out.qtrainer, name);
  } else if (name == "random") {
    out.cfg.map_size = map_size;
    out.agent = std::make_unique<RandomAgent>();
  } else if (name == "oracle") {
    out.cfg.map_size = map_size;
    out.agent = std::make_unique<OracleAgent>(out.cfg.env_config());
  } else {
    throw UsageError("unknown agent '" + name +
                     "' (expected mmn, mah, dqn, random, oracle)");
  }
  return out;
}

PerturbMode parse_mode(const std::string& name) {
  if (name == "map_flip") return PerturbMode::MapFlip;
  if (name == "scale") return PerturbMode::Scale;
  if (name == "loc_noise") return PerturbMode::LocNoise;
  if (name == "none") return PerturbMode::None;
  throw UsageError("unknown perturbation mode '" + name +
                   "' (expected map_flip, scale, loc_noise)");
}

void print_and_write(const std::vector<EpisodeRecord>& records,
                     const std::string& out_csv) {
  write_report_csv(out_csv, records);
  std::cout << render_summary(records);
  std::cout << "wrote " << records.size() << " records to " << out_csv
            << "\n";
}

int run(int argc, char** argv) {
  CLI::App app{"Maze navigation suite: map generation, training, evaluation"};
  app.require_subcommand(1);

  // gen-maps
  auto* gm = app.add_subcommand("gen-maps", "Generate maze occupancy maps");
  int gm_size = 13, gm_count = 20;
  std::uint64_t gm_seed = 0;
  std::string gm_out = "maps";
  gm->add_option("--size", gm_size, "Odd map size >= 5");
  gm->add_option("--count", gm_count, "Number of maps");
  gm->add_option("--seed", gm_seed, "Base seed");
  gm->add_option("--out", gm_out, "Output directory");

  // gen-tasks
  auto* gt = app.add_subcommand("gen-tasks", "Sample start/goal pairs");
  std::string gt_maps = "maps", gt_out = "tasks";
  int gt_dmin = 1, gt_dmax = 5, gt_count = 10;
  std::uint64_t gt_seed = 0;
  gt->add_option("--maps", gt_maps, "Directory of map_*.txt files");
  gt->add_option("--d-min", gt_dmin, "Minimum BFS distance");
  gt->add_option("--d-max", gt_dmax, "Maximum BFS distance");
  gt->add_option("--count", gt_count, "Pairs per map");
  gt->add_option("--seed", gt_seed, "Base seed");
  gt->add_option("--out", gt_out, "Output directory");

  // train
  auto* tr = app.add_subcommand("train", "Train an agent per config file");
  std::string tr_config, tr_out = "run", tr_resume;
  tr->add_option("--config", tr_config, "key = value config file")
      ->required();
  tr->add_option("--out", tr_out, "Output directory");
  tr->add_option("--resume", tr_resume, "Checkpoint to resume from");

  // eval
  auto* ev = app.add_subcommand("eval", "Zero-shot local evaluation");
  std::string ev_ckpt, ev_maps = "maps", ev_agent = "mmn",
              ev_out = "report.csv", ev_distances = "1..6";
  int ev_pairs = 5, ev_nc = 0;
  std::uint64_t ev_seed = 0;
  ev->add_option("--checkpoint", ev_ckpt, "Agent checkpoint");
  ev->add_option("--maps", ev_maps, "Directory of evaluation maps");
  ev->add_option("--distances", ev_distances, "Range A..B");
  ev->add_option("--pairs", ev_pairs, "Pairs per distance");
  ev->add_option("--agent", ev_agent, "mmn, mah, dqn, random, oracle");
  ev->add_option("--seed", ev_seed, "Evaluation seed");
  ev->add_option("--out", ev_out, "Report CSV path");
  ev->add_option("--nc", ev_nc, "Context resolution override (0 = auto)");

  // eval-hier
  auto* eh = app.add_subcommand("eval-hier", "Hierarchical corner-to-corner");
  std::string eh_ckpt, eh_maps = "maps", eh_agent = "mmn",
              eh_out = "report_hier.csv";
  int eh_spacing = 3, eh_nc = 0;
  bool eh_flat = false;
  std::uint64_t eh_seed = 0;
  eh->add_option("--checkpoint", eh_ckpt, "Agent checkpoint");
  eh->add_option("--maps", eh_maps, "Directory of evaluation maps");
  eh->add_option("--spacing", eh_spacing, "Landmark spacing");
  eh->add_flag("--flat", eh_flat, "Single corner-to-corner goal, no landmarks");
  eh->add_option("--agent", eh_agent, "mmn, mah, dqn, random, oracle");
  eh->add_option("--seed", eh_seed, "Evaluation seed");
  eh->add_option("--out", eh_out, "Report CSV path");
  eh->add_option("--nc", eh_nc, "Context resolution override (0 = auto)");

  // perturb
  auto* pb = app.add_subcommand("perturb", "Perturbation sweep");
  std::string pb_ckpt, pb_maps = "maps", pb_agent = "mmn",
              pb_out = "report_perturb.csv", pb_mode = "map_flip",
              pb_levels = "0,0.05,0.1,0.2", pb_distances = "1..6";
  int pb_pairs = 5, pb_nc = 0;
  std::uint64_t pb_seed = 0;
  pb->add_option("--checkpoint", pb_ckpt, "Agent checkpoint");
  pb->add_option("--maps", pb_maps, "Directory of evaluation maps");
  pb->add_option("--mode", pb_mode, "map_flip, scale, loc_noise");
  pb->add_option("--levels", pb_levels, "Comma-separated levels");
  pb->add_option("--distances", pb_distances, "Range A..B");
  pb->add_option("--pairs", pb_pairs, "Pairs per distance");
  pb->add_option("--agent", pb_agent, "mmn, mah, dqn, random, oracle");
  pb->add_option("--seed", pb_seed, "Evaluation seed");
  pb->add_option("--out", pb_out, "Report CSV path");
  pb->add_option("--nc", pb_nc, "Context resolution override (0 = auto)");

  // report
  auto* rp = app.add_subcommand("report", "Summarize a report CSV");
  std::string rp_in;
  rp->add_option("--in", rp_in, "Report CSV path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  if (gm->parsed()) {
    fs::create_directories(gm_out);
    for (int i = 0; i < gm_count; ++i) {
      OccupancyMap map =
          generate_map(gm_size, Rng::derive(gm_seed, 0x6d617073, i).next_u64());
      char name[32];
      std::snprintf(name, sizeof name, "map_%03d.txt", i);
      write_map((fs::path(gm_out) / name).string(), map);
    }
    std::cout << "wrote " << gm_count << " maps to " << gm_out << "\n";
    return 0;
  }

  if (gt->parsed()) {
    auto maps = load_map_dir(gt_maps);
    fs::create_directories(gt_out);
    for (std::size_t i = 0; i < maps.size(); ++i) {
      std::vector<TaskPair> pairs;
      for (int k = 0; k < gt_count; ++k) {
        Task t = sample_task(maps[i], gt_dmin, gt_dmax,
                             Rng::derive(gt_seed, i, k).next_u64());
        pairs.push_back({t.start, t.goal});
      }
      char name[32];
      std::snprintf(name, sizeof name, "tasks_%03zu.txt", i);
      write_tasks((fs::path(gt_out) / name).string(), pairs);
    }
    std::cout << "wrote tasks for " << maps.size() << " maps to " << gt_out
              << "\n";
    return 0;
  }

  if (tr->parsed()) {
    TrainConfig cfg = load_config(tr_config);
    TrainResult res;
    if (cfg.agent == "mmn") {
      MmnTrainer trainer(cfg);
      if (!tr_resume.empty()) trainer.load_checkpoint_file(tr_resume);
      res = trainer.train(tr_out);
    } else if (cfg.agent == "mah" || cfg.agent == "dqn") {
      QTrainer trainer(cfg, cfg.agent == "mah");
      if (!tr_resume.empty()) trainer.load_checkpoint_file(tr_resume);
      res = trainer.train(tr_out);
    } else {
      throw UsageError("config agent must be mmn, mah, or dqn, got: " +
                       cfg.agent);
    }
    std::cout << "trained " << cfg.agent << ": frames=" << res.frames
              << " episodes=" << res.episodes << " learner_steps="
              << res.learner_steps << " recent_success="
              << res.recent_success << "\ncheckpoint: "
              << res.checkpoint_path << "\n";
    return 0;
  }

  if (ev->parsed()) {
    auto maps = load_map_dir(ev_maps);
    BuiltAgent built = build_agent(ev_agent, ev_ckpt, maps[0].size);
    EvalOptions opts;
    parse_distances(ev_distances, opts.d_min, opts.d_max);
    opts.pairs_per_distance = ev_pairs;
    opts.nc = ev_nc > 0 ? ev_nc
              : is_learned(ev_agent) ? built.cfg.nc
                                     : maps[0].size;
    opts.env = built.cfg.env_config();
    opts.seed = ev_seed;
    auto records = eval_local(*built.agent, maps, opts);
    print_and_write(records, ev_out);
    return 0;
  }

  if (eh->parsed()) {
    auto maps = load_map_dir(eh_maps);
    BuiltAgent built = build_agent(eh_agent, eh_ckpt, maps[0].size);
    HierOptions opts;
    opts.spacing = eh_spacing;
    opts.use_landmarks = !eh_flat;
    opts.nc = eh_nc > 0 ? eh_nc
              : is_learned(eh_agent) ? built.cfg.nc
                                     : maps[0].size;
    opts.env = built.cfg.env_config();
    opts.seed = eh_seed;
    auto records = eval_hier(*built.agent, maps, opts);
    print_and_write(records, eh_out);
    return 0;
  }

  if (pb->parsed()) {
    auto maps = load_map_dir(pb_maps);
    BuiltAgent built = build_agent(pb_agent, pb_ckpt, maps[0].size);
    EvalOptions base;
    parse_distances(pb_distances, base.d_min, base.d_max);
    base.pairs_per_distance = pb_pairs;
    base.nc = pb_nc > 0 ? pb_nc
              : is_learned(pb_agent) ? built.cfg.nc
                                     : maps[0].size;
    base.env = built.cfg.env_config();
    base.seed = pb_seed;
    auto levels = parse_levels(pb_levels);
    auto sweeps = perturbation_sweep(*built.agent, maps, base,
                                     parse_mode(pb_mode), levels);
    std::vector<EpisodeRecord> all;
    for (auto& s : sweeps) all.insert(all.end(), s.begin(), s.end());
    print_and_write(all, pb_out);
    return 0;
  }

  if (rp->parsed()) {
    auto records = read_report_csv(rp_in);
    std::cout << render_summary(records);
    return 0;
  }

  return 2;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n"
              << "run with --help for the full contract\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
