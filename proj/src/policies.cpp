#include "lkh/policies.hpp"

#include <functional>
#include <stdexcept>
#include <unordered_map>
#include <vector>

namespace lkh {

std::string_view to_string(Policy policy) {
  switch (policy) {
    case Policy::alg1: return "alg1";
    case Policy::alg2: return "alg2";
    case Policy::alg3: return "alg3";
    case Policy::alg4: return "alg4";
  }
  return "?";
}

std::optional<Policy> policy_from_string(std::string_view name) {
  if (name == "alg1") return Policy::alg1;
  if (name == "alg2") return Policy::alg2;
  if (name == "alg3") return Policy::alg3;
  if (name == "alg4") return Policy::alg4;
  return std::nullopt;
}

CostIncrease cost_increase(const KeyTree& tree, NodeId x, double p_new) {
  const double w = tree.weight(x);  // validates the handle
  const double d = static_cast<double>(tree.depth(x));
  return {x, (d + 1.0) * p_new + w};
}

namespace {

void require_non_empty(const KeyTree& tree) {
  if (tree.empty()) throw std::invalid_argument("selection on empty tree");
}

void require_probability(double p_new) {
  if (!(p_new > 0.0) || p_new > 1.0)
    throw std::invalid_argument("p_new out of range (0, 1]");
}

// Shared descent for alg1/alg3. Walks from the root, stopping at the first
// node that is a leaf or whose children both weigh no more than
// stop_weight; otherwise steps into the lighter child, right on ties.
NodeId descend_select(const KeyTree& tree, double stop_weight,
                      SelectionStats* stats) {
  NodeId x = tree.root();
  std::size_t visited = 0;
  for (;;) {
    ++visited;
    if (tree.is_leaf(x)) break;
    const double wl = tree.weight(tree.left(x));
    const double wr = tree.weight(tree.right(x));
    if (stop_weight >= wl && stop_weight >= wr) break;
    x = wl >= wr ? tree.right(x) : tree.left(x);
  }
  if (stats) stats->nodes_visited = visited;
  return x;
}

// Shared scan for alg2/alg4: preorder DFS minimizing
// (depth+1)*effective_p + weight. Taking a candidate only on a strict
// (cost, depth) improvement makes the leftmost preorder node win ties.
NodeId argmin_cost_scan(const KeyTree& tree, double effective_p,
                        SelectionStats* stats) {
  struct Item {
    NodeId node;
    std::size_t depth;
  };
  NodeId best = kNoNode;
  double best_cost = 0.0;
  std::size_t best_depth = 0;
  std::size_t visited = 0;
  std::vector<Item> stack;
  stack.reserve(64);
  stack.push_back({tree.root(), 0});
  while (!stack.empty()) {
    const auto [node, depth] = stack.back();
    stack.pop_back();
    ++visited;
    const double cost =
        static_cast<double>(depth + 1) * effective_p + tree.weight(node);
    if (best == kNoNode || cost < best_cost ||
        (cost == best_cost && depth < best_depth)) {
      best = node;
      best_cost = cost;
      best_depth = depth;
    }
    if (!tree.is_leaf(node)) {
      stack.push_back({tree.right(node), depth + 1});
      stack.push_back({tree.left(node), depth + 1});
    }
  }
  if (stats) stats->nodes_visited = visited;
  return best;
}

}  // namespace

NodeId select_alg1(const KeyTree& tree, double p_new, SelectionStats* stats) {
  require_non_empty(tree);
  require_probability(p_new);
  return descend_select(tree, p_new, stats);
}

NodeId select_alg3(const KeyTree& tree, double p_new, SelectionStats* stats) {
  require_non_empty(tree);
  require_probability(p_new);
  return descend_select(tree, p_new + 1.0, stats);
}

NodeId select_alg2(const KeyTree& tree, double p_new, SelectionStats* stats) {
  require_non_empty(tree);
  return argmin_cost_scan(tree, p_new, stats);
}

NodeId select_alg4(const KeyTree& tree, double p_new, SelectionStats* stats) {
  require_non_empty(tree);
  return argmin_cost_scan(tree, p_new + 1.0, stats);
}

NodeId select_insertion(const KeyTree& tree, Policy policy, double p_new,
                        SelectionStats* stats) {
  switch (policy) {
    case Policy::alg1: return select_alg1(tree, p_new, stats);
    case Policy::alg2: return select_alg2(tree, p_new, stats);
    case Policy::alg3: return select_alg3(tree, p_new, stats);
    case Policy::alg4: return select_alg4(tree, p_new, stats);
  }
  throw std::invalid_argument("unknown policy");
}

NodeId brute_force_best(const KeyTree& tree, double p_new, bool starred) {
  require_non_empty(tree);
  const double effective_p = starred ? p_new + 1.0 : p_new;

  // Subtree weight by direct recursion over descendant leaves.
  const std::function<double(NodeId)> leaf_sum = [&](NodeId id) -> double {
    if (tree.is_leaf(id)) return tree.member_at(id).p;
    return leaf_sum(tree.left(id)) + leaf_sum(tree.right(id));
  };
  // Preorder ranks for the final tie level.
  std::unordered_map<NodeId, std::size_t> preorder;
  preorder.reserve(tree.node_count());
  {
    std::vector<NodeId> stack{tree.root()};
    std::size_t rank = 0;
    while (!stack.empty()) {
      const NodeId id = stack.back();
      stack.pop_back();
      preorder.emplace(id, rank++);
      if (!tree.is_leaf(id)) {
        stack.push_back(tree.right(id));
        stack.push_back(tree.left(id));
      }
    }
  }

  NodeId best = kNoNode;
  double best_cost = 0.0;
  std::size_t best_depth = 0, best_rank = 0;
  for (NodeId id = 0; id < tree.id_upper_bound(); ++id) {
    if (!tree.contains(id)) continue;
    const std::size_t d = tree.depth(id);
    const double cost =
        static_cast<double>(d + 1) * effective_p + leaf_sum(id);
    const std::size_t rank = preorder.at(id);
    const bool better =
        best == kNoNode || cost < best_cost ||
        (cost == best_cost &&
         (d < best_depth || (d == best_depth && rank < best_rank)));
    if (better) {
      best = id;
      best_cost = cost;
      best_depth = d;
      best_rank = rank;
    }
  }
  return best;
}

}  // namespace lkh
