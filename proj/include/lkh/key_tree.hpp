#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace lkh {

// Group member: opaque id plus withdrawal probability in (0, 1].
struct Member {
  std::string id;
  double p = 0.0;

  bool operator==(const Member&) const = default;
};

using NodeId = std::uint32_t;
inline constexpr NodeId kNoNode = std::numeric_limits<NodeId>::max();

enum class TreeShape { balanced, huffman };
enum class MutationKind { join, withdraw };

// A key whose version was bumped by a mutation, with the post-bump version.
struct RefreshedKey {
  NodeId node = kNoNode;
  std::uint64_t version = 0;

  bool operator==(const RefreshedKey&) const = default;
};

// Record of a single join or withdrawal, sufficient to replay key-state
// changes without the tree.
//
// join:       anchor = the insertion point, created = {new internal node,
//             new leaf} (in that order), removed empty, refreshed = path
//             root..new internal node (depth + 1 entries), depth = the
//             insertion point's depth before the surgery.
// withdrawal: anchor = kNoNode, created empty, removed = {leaf, leaf's
//             parent} ({leaf} when the leaf was the root), refreshed = the
//             depth strict ancestors of the leaf, root first (the removed
//             parent is the last entry: its key is refreshed and then
//             destroyed), depth = leaf depth before the surgery.
//
// Created nodes always start at key version 0; a join's new internal node
// immediately appears in refreshed with version 1. Replaying anchors and
// member ids against a snapshot of the starting tree reproduces every
// structural detail, which is what lets audits recompute the ground truth
// independently of the recorded refresh sets.
struct TreeMutation {
  MutationKind kind = MutationKind::join;
  Member member;
  NodeId anchor = kNoNode;
  std::vector<NodeId> created;
  std::vector<NodeId> removed;
  std::vector<RefreshedKey> refreshed;
  std::size_t depth = 0;

  bool operator==(const TreeMutation&) const = default;
};

// One invariant violation found by KeyTree::validate(). Tree-level problems
// use node = kNoNode.
struct Violation {
  NodeId node = kNoNode;
  std::string message;
};

// Strictly binary key tree: every leaf is a member's private key, every
// internal node a subgroup key, the root the group key. Node weight is the
// sum of member probabilities underneath; the root's weight plays the role
// of the total group weight. Node ids are never reused, so a destroyed
// key's id stays dead for the lifetime of the tree.
class KeyTree {
 public:
  KeyTree() = default;

  // shape == balanced: halve the member list recursively (left gets the
  // ceiling). shape == huffman: delegate to analysis build_huffman, which
  // minimizes the probability-weighted mean leaf depth.
  static KeyTree build_from_members(std::vector<Member> members,
                                    TreeShape shape);

  bool empty() const { return root_ == kNoNode; }
  std::size_t member_count() const { return member_leaf_.size(); }
  std::size_t node_count() const { return live_nodes_; }
  NodeId root() const { return root_; }

  // Live-handle check; all accessors below require contains(id).
  bool contains(NodeId id) const {
    return id < nodes_.size() && nodes_[id].alive;
  }
  // One past the largest id ever allocated; ids below this are either live
  // or permanently retired.
  NodeId id_upper_bound() const { return static_cast<NodeId>(nodes_.size()); }

  bool is_leaf(NodeId id) const { return at(id).member >= 0; }
  NodeId parent(NodeId id) const { return at(id).parent; }
  NodeId left(NodeId id) const { return at(id).left; }
  NodeId right(NodeId id) const { return at(id).right; }
  double weight(NodeId id) const { return at(id).weight; }
  std::uint64_t key_version(NodeId id) const { return at(id).key_version; }
  const Member& member_at(NodeId id) const;

  std::optional<NodeId> find_member(std::string_view member_id) const;

  // Edge distance from the root; the root itself is at depth 0.
  std::size_t depth(NodeId id) const;
  // Maximum leaf depth (0 for a single-leaf tree). Errors when empty.
  std::size_t height() const;

  double max_member_prob() const;
  double min_member_prob() const;

  // Leaf ids in preorder.
  std::vector<NodeId> leaves() const;

  // Visit every leaf in preorder as f(id, depth). Deterministic order, so
  // it is safe to accumulate floating-point sums in the callback.
  template <typename F>
  void for_each_leaf(F&& f) const {
    if (root_ == kNoNode) return;
    std::vector<std::pair<NodeId, std::size_t>> stack;
    stack.emplace_back(root_, 0);
    while (!stack.empty()) {
      const auto [id, d] = stack.back();
      stack.pop_back();
      const Node& nd = nodes_[id];
      if (nd.member >= 0) {
        f(id, d);
      } else {
        stack.emplace_back(nd.right, d + 1);
        stack.emplace_back(nd.left, d + 1);
      }
    }
  }

  // Splice a new member in at node x: a fresh internal node takes x's
  // place, adopting x as left child and the new member's leaf as right
  // child. Refreshes every key on the path from the root to the fresh node
  // (depth(x) + 1 keys).
  TreeMutation insert_at(const Member& m, NodeId x);

  // Remove a member's leaf; its sibling is promoted into the parent's
  // position. Refreshes the depth(leaf) keys that were strict ancestors of
  // the leaf, the removed parent included. Withdrawing the last member
  // leaves the tree empty.
  TreeMutation withdraw(std::string_view member_id);

  // Full integrity scan: strict binarity, pointer coherence, leaf/member
  // bijection, probability ranges, cached weights against a bottom-up
  // recomputation (1e-9 absolute tolerance).
  std::vector<Violation> validate() const;

  // Test hook: corrupt a cached weight so validate() fixtures have
  // something to find.
  void debug_set_weight(NodeId id, double w);

  // {"nodes": [...]} with nodes in preorder; each entry carries id and
  // key_version, leaves additionally member_id and p. Weights are not
  // persisted: from_json recomputes them from leaf probabilities.
  std::string to_json() const;
  static KeyTree from_json(std::string_view text);

 private:
  friend class TreeBuilder;

  struct Node {
    NodeId parent = kNoNode;
    NodeId left = kNoNode;
    NodeId right = kNoNode;
    double weight = 0.0;
    std::uint64_t key_version = 0;
    std::int32_t member = -1;  // index into members_, leaves only
    bool alive = false;
  };

  struct StringHash {
    using is_transparent = void;
    std::size_t operator()(std::string_view s) const {
      return std::hash<std::string_view>{}(s);
    }
  };

  const Node& at(NodeId id) const;
  Node& at(NodeId id);
  NodeId allocate_node();
  void retire_node(NodeId id);

  std::vector<Node> nodes_;     // id == index; slots are never reused
  std::vector<Member> members_; // leaf payloads, kept for mutation records
  std::unordered_map<std::string, NodeId, StringHash, std::equal_to<>>
      member_leaf_;
  NodeId root_ = kNoNode;
  std::size_t live_nodes_ = 0;
};

// Bottom-up construction of arbitrary strictly binary shapes (optimal-tree
// builders, the JSON loader). Weights are computed as children are joined,
// so a finished tree always satisfies the weight invariant.
class TreeBuilder {
 public:
  TreeBuilder() = default;

  NodeId add_leaf(const Member& m);
  NodeId add_leaf(const Member& m, NodeId id, std::uint64_t version);
  NodeId join(NodeId left, NodeId right);
  NodeId join(NodeId left, NodeId right, NodeId id, std::uint64_t version);

  // Consumes the builder. root must be the single remaining unparented
  // node.
  KeyTree finish(NodeId root);

 private:
  NodeId claim_slot(NodeId id);

  KeyTree tree_;
  std::size_t roots_ = 0;
  bool finished_ = false;
};

namespace detail {
// Throws std::invalid_argument unless 0 < p <= 1 (NaN rejected).
void require_valid_probability(double p);
// Non-empty, unique ids, valid probabilities.
void validate_member_set(const std::vector<Member>& members);
}  // namespace detail

}  // namespace lkh
