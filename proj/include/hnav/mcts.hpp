#pragma once

#include <array>
#include <span>
#include <vector>

#include "hnav/rng.hpp"

namespace hnav {

// Abstract planning model: latent evaluation and latent dynamics. The
// learned hypermodel implements this; tests inject hand-coded MDPs so the
// search itself can be checked against value iteration.
class PlanModel {
 public:
  virtual ~PlanModel() = default;
  virtual int latent_dim() const = 0;
  virtual void evaluate(std::span<const float> s, std::span<float> prior6,
                        float& value) = 0;
  virtual void step(std::span<const float> s, int action,
                    std::span<float> s_next, float& reward) = 0;
};

struct SearchConfig {
  int num_simulations = 50;
  double c1 = 1.25;
  double c2 = 19652.0;
  double dirichlet_alpha = 0.3;
  double dirichlet_frac = 0.25;
  double discount = 1.0;
};

enum class SearchMode { Train, Eval };

struct SearchResult {
  std::array<float, 6> visit_distribution{};
  float root_value = 0;
};

// Prior-weighted upper-confidence score for one edge. q_normalized is the
// min-max normalized value estimate; parent_total counts the parent node's
// own visits (1 at expansion plus one per simulation through it).
double puct_score(double q_normalized, double prior, int edge_visits,
                  int parent_total, double c1, double c2);

// Tracks the value range seen during backup; normalizes to [0,1] once the
// range is nondegenerate, else passes values through.
struct MinMaxStats {
  double lo = 1e30, hi = -1e30;
  void update(double v) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  double normalize(double v) const {
    return hi > lo ? (v - lo) / (hi - lo) : v;
  }
};

// One search tree. Exposed (rather than a single function) so tests can
// step simulations and inspect visit totals.
class MctsTree {
 public:
  MctsTree(PlanModel& model, std::span<const float> root_latent,
           const SearchConfig& config, SearchMode mode, Rng& rng);

  void run_simulation();
  SearchResult result() const;

  int root_total() const { return nodes_[0].total; }
  int node_count() const { return int(nodes_.size()); }
  int node_total(int idx) const { return nodes_[std::size_t(idx)].total; }

 private:
  struct Node {
    std::vector<float> latent;
    float reward_to_node = 0;
    float pred_value = 0;
    std::array<float, 6> prior{};
    std::array<int, 6> child;
    std::array<int, 6> visit{};
    std::array<float, 6> value_sum{};
    int total = 1;  // own expansion visit plus one per simulation through
    double value() const;
  };

  int expand(std::span<const float> latent, float reward);
  int select(const Node& node) const;

  PlanModel& model_;
  SearchConfig config_;
  std::vector<Node> nodes_;
  MinMaxStats stats_;
};

// Runs config.num_simulations simulations and returns root statistics.
// Train mode mixes Dirichlet noise into the root prior.
SearchResult mcts_search(PlanModel& model, std::span<const float> root_latent,
                         const SearchConfig& config, SearchMode mode,
                         Rng& rng);

// Temperature 0 picks the most-visited action (lowest index on ties);
// otherwise samples proportional to visits^(1/temperature).
int select_action(const std::array<float, 6>& visit_distribution,
                  double temperature, Rng& rng);

}  // namespace hnav
