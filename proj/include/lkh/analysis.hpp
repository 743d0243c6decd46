#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "lkh/key_tree.hpp"

namespace lkh {
namespace analysis {

// Constants of the closed-form cost bounds. alpha is the golden ratio; the
// k1/k2 pair forms the entropy-only cost ceiling k1*H + k2, the rest come
// from the depth/cost bounds for the greedy policies:
//   k1  multiplies -log2(p) in the alg1 depth bound,
//   k2  additive constant of the entropy-only ceiling,
//   t_m subtree-weight threshold minimizing the alg1 depth bound,
//   k3  additive constant of the alg1 depth and cost bounds,
//   k4  additive constant of the alg3 cost bound.
struct BoundConstants {
  double alpha;
  double log2_alpha;
  double k1;
  double k2;
  double t_m;
  double k3;
  double k4;

  // Weight thresholds of the two anchor ancestors in the alg3 analysis,
  // as functions of the extreme member probabilities. Close to linear:
  // outer ~ t_m * p_max + 7.676, inner ~ 1.040 * p_min + 1 (p_min <= 1).
  double outer_anchor_weight(double p_max) const;
  double inner_anchor_weight(double p_min) const;

  static const BoundConstants& values();
};

// Steady-state cost summary of one tree.
//   total_cost      L = sum of p * depth over leaves
//   normalized_cost l = L / P_G
//   entropy         H of the normalized member distribution (base 2)
struct CostReport {
  std::size_t n = 0;
  double p_g = 0.0;
  double p_max = 0.0;
  double p_min = 0.0;
  double total_cost = 0.0;
  double normalized_cost = 0.0;
  double entropy = 0.0;

  // JSON object with keys {n, P_G, P_max, P_min, L, l, entropy}; the CSV
  // row uses the same column order.
  std::string to_json() const;
  static CostReport from_json(std::string_view text);
  static std::string csv_header();
  std::string to_csv_row() const;
};

// Exact cost scan of a tree (empty tree yields an all-zero report).
CostReport withdrawal_costs(const KeyTree& tree);

// Entropy sandwich for n members with probabilities in [p_min, p_max]:
// (k * log2 n, (1/k) * log2 n) with k = p_min / p_max. The lower member is
// only meaningful once the largest normalized probability is below 1/e;
// tests apply it for n >= 100.
std::pair<double, double> entropy_bounds(std::size_t n, double p_max,
                                         double p_min);

// Optimal (minimum normalized cost) strictly binary tree via Huffman
// merging. Equal-weight ties merge the earliest-created subtrees first,
// which yields the perfectly balanced tree for 2^k equal weights.
KeyTree build_huffman(std::vector<Member> members);

// Entropy-only cost ceiling k1 * H + k2. Unlike the bounds below it needs
// no tree-shape hypotheses, so it is never inapplicable.
double scaled_entropy_l_bound(const CostReport& report);

// Closed-form bounds for greedily built trees. Each returns nullopt when
// its hypotheses fail (a log argument would be nonpositive, i.e. the tree
// is too small for the bound to apply).
//
// Leaf-depth bound for alg1-built trees:
//   d < log2 p_g - k1*log2 p_m + (k1-1)*log2 p_max
//       + log2(1 - p_max/p_g) + k3          (requires p_g > p_max)
std::optional<double> alg1_depth_bound(double p_m, double p_g, double p_max);

// Normalized-cost bound for alg1-built trees:
//   l < H + (k1-1)*log2(p_max/p_min) + log2(1 - p_max/p_g) + k3
std::optional<double> alg1_l_bound(const CostReport& report);

// Normalized-cost bound for alg3-built trees (requires p_g > p_max + 2):
//   l < H + log2 p_max + (k1-1)*log2(3*p_max + 5) - k1*log2 p_min
//       + (p_max + 4)/p_min + log2(1 - (p_max+2)/p_g) + k4
std::optional<double> alg3_l_bound(const CostReport& report);

// -log2 P_G <= log2(1/P_min) - H, the inequality linking group weight to
// entropy (1e-9 slack).
bool pg_entropy_inequality(const CostReport& report);

}  // namespace analysis
}  // namespace lkh
