#include "hnav/mcts.hpp"

#include <cmath>

#include "hnav/errors.hpp"

namespace hnav {

double puct_score(double q_normalized, double prior, int edge_visits,
                  int parent_total, double c1, double c2) {
  double explore = prior * std::sqrt(double(parent_total)) /
                   (1.0 + double(edge_visits)) *
                   (c1 + std::log((double(parent_total) + c2 + 1.0) / c2));
  return q_normalized + explore;
}

double MctsTree::Node::value() const {
  int n = 0;
  float w = 0;
  for (int a = 0; a < 6; ++a) {
    n += visit[std::size_t(a)];
    w += value_sum[std::size_t(a)];
  }
  return n > 0 ? double(w) / double(n) : double(pred_value);
}

MctsTree::MctsTree(PlanModel& model, std::span<const float> root_latent,
                   const SearchConfig& config, SearchMode mode, Rng& rng)
    : model_(model), config_(config) {
  expand(root_latent, 0.0f);
  if (mode == SearchMode::Train) {
    auto noise = rng.dirichlet(config_.dirichlet_alpha, 6);
    auto& prior = nodes_[0].prior;
    for (int a = 0; a < 6; ++a)
      prior[std::size_t(a)] =
          float((1.0 - config_.dirichlet_frac) * prior[std::size_t(a)] +
                config_.dirichlet_frac * noise[std::size_t(a)]);
  }
}

int MctsTree::expand(std::span<const float> latent, float reward) {
  Node node;
  node.latent.assign(latent.begin(), latent.end());
  node.reward_to_node = reward;
  node.child.fill(-1);
  std::array<float, 6> prior;
  model_.evaluate(latent, prior, node.pred_value);
  node.prior = prior;
  nodes_.push_back(std::move(node));
  return int(nodes_.size()) - 1;
}

int MctsTree::select(const Node& node) const {
  double parent_norm = stats_.normalize(node.value());
  int best = 0;
  double best_score = -1e300;
  for (int a = 0; a < 6; ++a) {
    double q = node.visit[std::size_t(a)] > 0
                   ? stats_.normalize(double(node.value_sum[std::size_t(a)]) /
                                      double(node.visit[std::size_t(a)]))
                   : parent_norm;
    double score = puct_score(q, double(node.prior[std::size_t(a)]),
                              node.visit[std::size_t(a)], node.total,
                              config_.c1, config_.c2);
    if (score > best_score) {
      best_score = score;
      best = a;
    }
  }
  return best;
}

void MctsTree::run_simulation() {
  std::vector<std::pair<int, int>> path;  // (node index, action)
  int cur = 0;
  for (;;) {
    int a = select(nodes_[std::size_t(cur)]);
    path.push_back({cur, a});
    int child = nodes_[std::size_t(cur)].child[std::size_t(a)];
    if (child < 0) break;
    cur = child;
  }
  auto [leaf_parent, leaf_action] = path.back();
  std::vector<float> s_next(std::size_t(model_.latent_dim()));
  float reward = 0;
  model_.step(nodes_[std::size_t(leaf_parent)].latent, leaf_action, s_next,
              reward);
  int leaf = expand(s_next, reward);
  nodes_[std::size_t(leaf_parent)].child[std::size_t(leaf_action)] = leaf;

  // Backed-up return along the path: G_i = r_{i+1} + discount * G_{i+1},
  // seeded with the new leaf's predicted value.
  double g = nodes_[std::size_t(leaf)].pred_value;
  for (auto it = path.rbegin(); it != path.rend(); ++it) {
    auto [node_idx, action] = *it;
    Node& node = nodes_[std::size_t(node_idx)];
    int child = node.child[std::size_t(action)];
    g = double(nodes_[std::size_t(child)].reward_to_node) +
        config_.discount * g;
    node.value_sum[std::size_t(action)] += float(g);
    node.visit[std::size_t(action)] += 1;
    node.total += 1;
    stats_.update(double(node.value_sum[std::size_t(action)]) /
                  double(node.visit[std::size_t(action)]));
  }
}

SearchResult MctsTree::result() const {
  const Node& root = nodes_[0];
  SearchResult r;
  int total = 0;
  for (int a = 0; a < 6; ++a) total += root.visit[std::size_t(a)];
  for (int a = 0; a < 6; ++a)
    r.visit_distribution[std::size_t(a)] =
        total > 0 ? float(root.visit[std::size_t(a)]) / float(total) : 0.0f;
  r.root_value = float(root.value());
  return r;
}

SearchResult mcts_search(PlanModel& model, std::span<const float> root_latent,
                         const SearchConfig& config, SearchMode mode,
                         Rng& rng) {
  if (config.num_simulations < 1)
    throw ShapeMismatch("num_simulations must be >= 1");
  MctsTree tree(model, root_latent, config, mode, rng);
  for (int i = 0; i < config.num_simulations; ++i) tree.run_simulation();
  return tree.result();
}

int select_action(const std::array<float, 6>& visit_distribution,
                  double temperature, Rng& rng) {
  if (temperature <= 0.0) {
    int best = 0;
    for (int a = 1; a < 6; ++a)
      if (visit_distribution[std::size_t(a)] >
          visit_distribution[std::size_t(best)])
        best = a;
    return best;
  }
  std::array<double, 6> weight;
  double total = 0;
  for (int a = 0; a < 6; ++a) {
    weight[std::size_t(a)] =
        std::pow(double(visit_distribution[std::size_t(a)]),
                 1.0 / temperature);
    total += weight[std::size_t(a)];
  }
  double u = rng.uniform01() * total;
  double acc = 0;
  for (int a = 0; a < 6; ++a) {
    acc += weight[std::size_t(a)];
    if (u < acc) return a;
  }
  return 5;
}

}  // namespace hnav
