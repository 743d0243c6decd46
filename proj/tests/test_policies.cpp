#include "doctest.h"

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "lkh/key_tree.hpp"
#include "lkh/policies.hpp"
#include "lkh/rng.hpp"
#include "support/builders.hpp"

using namespace lkh;
using testsup::members;

namespace {

KeyTree two_leaf() {
  return KeyTree::build_from_members(members({{"A", 0.5}, {"B", 0.4}}),
                                     TreeShape::balanced);
}

// Perfect tree over 2^k identical leaves (dyadic p makes costs exact).
KeyTree perfect(std::size_t k, double p) {
  std::vector<Member> ms;
  for (std::size_t i = 0; i < (std::size_t{1} << k); ++i)
    ms.push_back({"m" + std::to_string(i), p});
  return KeyTree::build_from_members(ms, TreeShape::balanced);
}

// Two uniform-weight sides of the given leaf counts (p = 1 throughout), so
// subtree weights equal leaf counts exactly.
KeyTree lopsided(std::size_t left_leaves, std::size_t right_leaves) {
  TreeBuilder b;
  std::size_t next = 0;
  const auto side = [&](std::size_t count) {
    std::vector<NodeId> row;
    for (std::size_t i = 0; i < count; ++i)
      row.push_back(b.add_leaf({"m" + std::to_string(next++), 1.0}));
    while (row.size() > 1) {
      std::vector<NodeId> up;
      for (std::size_t i = 0; i + 1 < row.size(); i += 2)
        up.push_back(b.join(row[i], row[i + 1]));
      if (row.size() % 2 == 1) up.push_back(row.back());
      row = up;
    }
    return row[0];
  };
  const NodeId l = side(left_leaves);
  const NodeId r = side(right_leaves);
  return b.finish(b.join(l, r));
}

}  // namespace

TEST_CASE("policy names round trip") {
  for (const Policy p :
       {Policy::alg1, Policy::alg2, Policy::alg3, Policy::alg4})
    CHECK(policy_from_string(to_string(p)) == p);
  CHECK(!policy_from_string("alg5").has_value());
  CHECK(!policy_from_string("").has_value());
}

TEST_CASE("cost_increase is (depth+1)*p plus subtree weight") {
  const KeyTree pair = KeyTree::build_from_members(
      members({{"A", 1.0}, {"B", 1.0}}), TreeShape::balanced);
  CHECK(cost_increase(pair, pair.root(), 0.5).value == 2.5);
  CHECK(cost_increase(pair, pair.left(pair.root()), 0.5).value == 2.0);

  const KeyTree p16 = perfect(4, 0.1);
  const NodeId depth3 =
      p16.left(p16.left(p16.left(p16.root())));  // two leaves below
  CHECK(p16.depth(depth3) == 3);
  CHECK(cost_increase(p16, depth3, 0.1).value ==
        doctest::Approx(0.6).epsilon(1e-12));

  CHECK_THROWS_AS(cost_increase(pair, 999, 0.5), std::out_of_range);
}

TEST_CASE("alg1 stops at the root when the newcomer dominates both children") {
  const KeyTree t = two_leaf();
  SelectionStats stats;
  CHECK(select_alg1(t, 0.6, &stats) == t.root());
  CHECK(stats.nodes_visited == 1);
  CHECK(select_alg1(t, 0.5, nullptr) == t.root());  // >= is enough
}

TEST_CASE("alg1 descends into the lighter child, right on ties") {
  const KeyTree t = two_leaf();
  SelectionStats stats;
  const NodeId picked = select_alg1(t, 0.3, &stats);
  CHECK(picked == t.find_member("B").value());  // B weighs 0.4 < A's 0.5
  CHECK(stats.nodes_visited == 2);

  const KeyTree even = KeyTree::build_from_members(
      members({{"A", 0.5}, {"B", 0.5}}), TreeShape::balanced);
  CHECK(select_alg1(even, 0.25, nullptr) == even.find_member("B").value());
}

TEST_CASE("alg3 is alg1 with the stop weight shifted by one") {
  // Children weigh 4 and 2: p + 1 = 1.5 dominates neither, so the descent
  // continues into the lighter side and stops where 1.5 covers both children.
  const KeyTree t = lopsided(4, 2);
  const NodeId right = t.right(t.root());
  CHECK(t.weight(right) == 2.0);
  CHECK(select_alg3(t, 0.5, nullptr) == right);

  // Children weigh 1.2 and 0.9: p + 1 = 1.3 already dominates both.
  TreeBuilder b;
  const NodeId l = b.join(b.add_leaf({"a", 0.7}), b.add_leaf({"b", 0.5}));
  const NodeId r = b.join(b.add_leaf({"c", 0.4}), b.add_leaf({"d", 0.5}));
  const KeyTree shallow = b.finish(b.join(l, r));
  CHECK(select_alg3(shallow, 0.3, nullptr) == shallow.root());
  CHECK(select_alg1(shallow, 0.3, nullptr) != shallow.root());
}

TEST_CASE("alg2 scans every node for the cheapest insertion point") {
  const KeyTree t = two_leaf();
  SelectionStats stats;
  // Costs: root 0.95, leaf A 0.6, leaf B 0.5.
  CHECK(select_alg2(t, 0.05, &stats) == t.find_member("B").value());
  CHECK(stats.nodes_visited == t.node_count());
}

TEST_CASE("alg2 ties resolve to smallest depth, then leftmost preorder") {
  const KeyTree t = perfect(2, 0.5);
  // p_new = 0.5: internal nodes at depth 1 and every leaf all cost 2.0
  // exactly; the root costs 2.5. Expect the left depth-1 internal node.
  const NodeId expected = t.left(t.root());
  CHECK(select_alg2(t, 0.5, nullptr) == expected);
  CHECK(brute_force_best(t, 0.5, false) == expected);
}

TEST_CASE("alg4 equals alg2 run on p plus one") {
  Rng rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    const KeyTree t = testsup::random_tree(rng, 2 + rng.below(40), 0.05, 0.95);
    const double p = rng.uniform(0.05, 0.95);
    CHECK(select_alg4(t, p, nullptr) == select_alg2(t, p + 1.0, nullptr));
  }
}

TEST_CASE("alg2 never costs more than alg1's choice") {
  Rng rng(12);
  for (int trial = 0; trial < 200; ++trial) {
    const KeyTree t = testsup::random_tree(rng, 2 + rng.below(60), 0.05, 0.95);
    const double p = rng.uniform(0.05, 0.95);
    const double greedy = cost_increase(t, select_alg1(t, p), p).value;
    const double scanned = cost_increase(t, select_alg2(t, p), p).value;
    CHECK(scanned <= greedy);
  }
}

TEST_CASE("scan selectors agree with the brute-force reference") {
  Rng rng(13);
  for (int trial = 0; trial < 300; ++trial) {
    const KeyTree t = testsup::random_tree(rng, 2 + rng.below(60), 0.05, 0.95);
    const double p = rng.uniform(0.05, 0.95);
    CHECK(select_alg2(t, p, nullptr) == brute_force_best(t, p, false));
    CHECK(select_alg4(t, p, nullptr) == brute_force_best(t, p, true));
  }
}

TEST_CASE("descent selectors touch one root-to-node path only") {
  Rng rng(14);
  for (int trial = 0; trial < 100; ++trial) {
    const KeyTree t = testsup::random_tree(rng, 2 + rng.below(80), 0.05, 0.95);
    const double p = rng.uniform(0.05, 0.95);
    SelectionStats s1, s3;
    const NodeId x1 = select_alg1(t, p, &s1);
    const NodeId x3 = select_alg3(t, p, &s3);
    CHECK(s1.nodes_visited == t.depth(x1) + 1);
    CHECK(s3.nodes_visited == t.depth(x3) + 1);
    CHECK(s1.nodes_visited <= t.height() + 1);
    // The join-aware stop test can only trigger earlier or equally deep.
    CHECK(t.depth(x3) <= t.depth(x1));
  }
}

TEST_CASE("selector input validation") {
  KeyTree t = two_leaf();
  CHECK_THROWS_AS(select_alg1(t, 0.0, nullptr), std::invalid_argument);
  CHECK_THROWS_AS(select_alg1(t, 1.0001, nullptr), std::invalid_argument);
  CHECK_THROWS_AS(select_alg3(t, -0.5, nullptr), std::invalid_argument);
  const double nan = std::nan("");
  CHECK_THROWS_AS(select_alg1(t, nan, nullptr), std::invalid_argument);
  CHECK_THROWS_AS(select_alg3(t, nan, nullptr), std::invalid_argument);

  t.withdraw("A");
  t.withdraw("B");
  for (const Policy p :
       {Policy::alg1, Policy::alg2, Policy::alg3, Policy::alg4})
    CHECK_THROWS_AS(select_insertion(t, p, 0.5, nullptr),
                    std::invalid_argument);
}

TEST_CASE("single-leaf tree always selects the root") {
  const KeyTree t =
      KeyTree::build_from_members(members({{"A", 0.8}}), TreeShape::balanced);
  for (const Policy p :
       {Policy::alg1, Policy::alg2, Policy::alg3, Policy::alg4})
    CHECK(select_insertion(t, p, 0.3, nullptr) == t.root());
}

TEST_CASE("sibling weights in descent-built trees stay within one step") {
  // Growing a tree purely through a descent policy keeps sibling subtree
  // weights within p_max of each other (p_max + 2 for the join-aware rule).
  Rng rng(15);
  for (int trial = 0; trial < 10; ++trial) {
    const double p_max = 0.9;
    for (const Policy policy : {Policy::alg1, Policy::alg3}) {
      KeyTree t = KeyTree::build_from_members(
          members({{"seed", rng.uniform(0.1, p_max)}}), TreeShape::balanced);
      for (int i = 0; i < 400; ++i) {
        const double p = rng.uniform(0.1, p_max);
        t.insert_at({"m" + std::to_string(i), p},
                    select_insertion(t, policy, p, nullptr));
      }
      const double slack = policy == Policy::alg1 ? p_max : p_max + 2.0;
      const double root_w = t.weight(t.root());
      for (NodeId id = 0; id < t.id_upper_bound(); ++id) {
        if (!t.contains(id) || t.is_leaf(id)) continue;
        const double wl = t.weight(t.left(id));
        const double wr = t.weight(t.right(id));
        CHECK(std::fabs(wl - wr) <= slack + 1e-12);
        if (policy == Policy::alg1) {
          // Parent weight bounds every child: w_parent >= 2*w_child - p_max.
          CHECK(t.weight(id) >= 2.0 * wl - p_max - 1e-12);
          CHECK(t.weight(id) >= 2.0 * wr - p_max - 1e-12);
        }
      }
      if (policy == Policy::alg1) {
        // Telescoped to the root: every node at depth d satisfies
        // root_w >= 2^d (w - p_max) + p_max.
        for (NodeId id = 0; id < t.id_upper_bound(); ++id) {
          if (!t.contains(id)) continue;
          const double d = static_cast<double>(t.depth(id));
          CHECK(root_w >= std::ldexp(t.weight(id) - p_max, static_cast<int>(d)) +
                              p_max - 1e-9);
        }
      }
    }
  }
}
