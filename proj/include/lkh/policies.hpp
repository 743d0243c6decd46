#pragma once

#include <optional>
#include <string_view>

#include "lkh/key_tree.hpp"

namespace lkh {

// Insertion-point policies.
//   alg1: greedy descent toward lighter subtrees, stopping where the new
//         member's probability dominates both children.
//   alg2: global minimum of the steady-state cost increase
//         (depth+1)*p + weight over every node.
//   alg3: alg1's descent with the stop test shifted by the one-time join
//         cost (p + 1 in place of p).
//   alg4: alg2's scan on the join-aware cost (depth+1)*(p+1) + weight.
enum class Policy { alg1, alg2, alg3, alg4 };

std::string_view to_string(Policy policy);
std::optional<Policy> policy_from_string(std::string_view name);

struct SelectionStats {
  std::size_t nodes_visited = 0;
};

// Expected steady-state rekey cost increase of inserting a member with
// probability p_new at node x: (depth(x) + 1) * p_new + weight(x).
struct CostIncrease {
  NodeId node = kNoNode;
  double value = 0.0;
};
CostIncrease cost_increase(const KeyTree& tree, NodeId x, double p_new);

// All selectors require a non-empty tree; alg1/alg3 additionally require
// p_new in (0, 1]. Ties in alg2/alg4 resolve to the smallest cost, then the
// smallest depth, then the leftmost node in preorder. alg1/alg3 break equal
// child weights toward the right child.
NodeId select_alg1(const KeyTree& tree, double p_new,
                   SelectionStats* stats = nullptr);
NodeId select_alg2(const KeyTree& tree, double p_new,
                   SelectionStats* stats = nullptr);
NodeId select_alg3(const KeyTree& tree, double p_new,
                   SelectionStats* stats = nullptr);
NodeId select_alg4(const KeyTree& tree, double p_new,
                   SelectionStats* stats = nullptr);
NodeId select_insertion(const KeyTree& tree, Policy policy, double p_new,
                        SelectionStats* stats = nullptr);

// Reference argmin for the scans, kept deliberately separate from
// select_alg2/select_alg4: flat enumeration over every live node with
// depths, weights and preorder ranks recomputed from scratch. starred
// selects the join-aware cost (depth+1)*(p_new+1) + weight.
NodeId brute_force_best(const KeyTree& tree, double p_new, bool starred);

}  // namespace lkh
