#pragma once

// Shared test fixtures: small member sets and randomized tree generators.

#include <string>
#include <vector>

#include "lkh/key_tree.hpp"
#include "lkh/policies.hpp"
#include "lkh/rng.hpp"

namespace testsup {

inline std::vector<lkh::Member> members(
    std::initializer_list<std::pair<const char*, double>> init) {
  std::vector<lkh::Member> out;
  for (const auto& [id, p] : init) out.push_back({id, p});
  return out;
}

inline std::vector<lkh::Member> random_members(lkh::Rng& rng, std::size_t n,
                                               double lo, double hi,
                                               const std::string& prefix = "m") {
  std::vector<lkh::Member> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i)
    out.push_back({prefix + std::to_string(i), rng.uniform(lo, hi)});
  return out;
}

// Shape-diverse random tree: start from one leaf and grow by inserting at
// uniformly random live nodes (internal nodes included), which produces
// skewed and balanced regions alike.
inline lkh::KeyTree random_tree(lkh::Rng& rng, std::size_t n, double lo,
                                double hi) {
  lkh::KeyTree tree = lkh::KeyTree::build_from_members(
      {{"m0", rng.uniform(lo, hi)}}, lkh::TreeShape::balanced);
  for (std::size_t i = 1; i < n; ++i) {
    std::vector<lkh::NodeId> live;
    live.reserve(tree.node_count());
    for (lkh::NodeId id = 0; id < tree.id_upper_bound(); ++id)
      if (tree.contains(id)) live.push_back(id);
    const lkh::NodeId x = live[rng.below(live.size())];
    tree.insert_at({"m" + std::to_string(i), rng.uniform(lo, hi)}, x);
  }
  return tree;
}

}  // namespace testsup
