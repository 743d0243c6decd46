#include "lkh/key_tree.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <stdexcept>
#include <unordered_set>

#include "json.hpp"
#include "lkh/analysis.hpp"
#include "lkh/errors.hpp"

namespace lkh {

namespace detail {

void require_valid_probability(double p) {
  if (!(p > 0.0) || p > 1.0)
    throw std::invalid_argument("member probability out of range (0, 1]");
}

void validate_member_set(const std::vector<Member>& members) {
  if (members.empty())
    throw std::invalid_argument("member set must not be empty");
  std::unordered_set<std::string_view> seen;
  for (const Member& m : members) {
    require_valid_probability(m.p);
    if (!seen.insert(m.id).second)
      throw std::invalid_argument("duplicate member id: " + m.id);
  }
}

}  // namespace detail

const KeyTree::Node& KeyTree::at(NodeId id) const {
  if (!contains(id)) throw std::out_of_range("invalid node handle");
  return nodes_[id];
}

KeyTree::Node& KeyTree::at(NodeId id) {
  if (!contains(id)) throw std::out_of_range("invalid node handle");
  return nodes_[id];
}

NodeId KeyTree::allocate_node() {
  if (nodes_.size() >= kNoNode)
    throw std::length_error("node id space exhausted");
  nodes_.emplace_back();
  nodes_.back().alive = true;
  ++live_nodes_;
  return static_cast<NodeId>(nodes_.size() - 1);
}

void KeyTree::retire_node(NodeId id) {
  nodes_[id].alive = false;
  --live_nodes_;
}

const Member& KeyTree::member_at(NodeId id) const {
  const Node& nd = at(id);
  if (nd.member < 0) throw std::invalid_argument("node is not a leaf");
  return members_[static_cast<std::size_t>(nd.member)];
}

std::optional<NodeId> KeyTree::find_member(std::string_view member_id) const {
  const auto it = member_leaf_.find(member_id);
  if (it == member_leaf_.end()) return std::nullopt;
  return it->second;
}

std::size_t KeyTree::depth(NodeId id) const {
  const Node* nd = &at(id);
  std::size_t d = 0;
  while (nd->parent != kNoNode) {
    nd = &nodes_[nd->parent];
    ++d;
  }
  return d;
}

std::size_t KeyTree::height() const {
  if (empty()) throw std::invalid_argument("height of empty tree");
  std::size_t h = 0;
  for_each_leaf([&](NodeId, std::size_t d) { h = std::max(h, d); });
  return h;
}

double KeyTree::max_member_prob() const {
  if (empty()) throw std::invalid_argument("max_member_prob of empty tree");
  double best = 0.0;
  for_each_leaf([&](NodeId id, std::size_t) {
    best = std::max(best, nodes_[id].weight);
  });
  return best;
}

double KeyTree::min_member_prob() const {
  if (empty()) throw std::invalid_argument("min_member_prob of empty tree");
  double best = 2.0;
  for_each_leaf([&](NodeId id, std::size_t) {
    best = std::min(best, nodes_[id].weight);
  });
  return best;
}

std::vector<NodeId> KeyTree::leaves() const {
  std::vector<NodeId> out;
  out.reserve(member_count());
  for_each_leaf([&](NodeId id, std::size_t) { out.push_back(id); });
  return out;
}

TreeMutation KeyTree::insert_at(const Member& m, NodeId x) {
  if (!contains(x)) throw std::out_of_range("invalid node handle");
  detail::require_valid_probability(m.p);
  if (member_leaf_.find(std::string_view(m.id)) != member_leaf_.end())
    throw std::invalid_argument("duplicate member id: " + m.id);

  const std::size_t d_x = depth(x);
  const NodeId y = nodes_[x].parent;

  const NodeId leaf = allocate_node();
  const NodeId mid = allocate_node();
  members_.push_back(m);
  nodes_[leaf].member = static_cast<std::int32_t>(members_.size() - 1);
  nodes_[leaf].weight = m.p;
  nodes_[leaf].parent = mid;
  nodes_[mid].left = x;
  nodes_[mid].right = leaf;
  nodes_[mid].parent = y;
  nodes_[x].parent = mid;
  if (y == kNoNode) {
    root_ = mid;
  } else {
    (nodes_[y].left == x ? nodes_[y].left : nodes_[y].right) = mid;
  }
  member_leaf_.emplace(m.id, leaf);

  TreeMutation mu;
  mu.kind = MutationKind::join;
  mu.member = m;
  mu.anchor = x;
  mu.created = {mid, leaf};
  mu.depth = d_x;

  // Refresh the path root..mid: versions bump, weights recomputed as child
  // sums bottom-up so cached weights stay bit-identical to a recomputation.
  std::vector<NodeId> path;  // mid -> root
  for (NodeId cur = mid; cur != kNoNode; cur = nodes_[cur].parent)
    path.push_back(cur);
  for (const NodeId cur : path) {
    Node& nd = nodes_[cur];
    nd.weight = nodes_[nd.left].weight + nodes_[nd.right].weight;
    ++nd.key_version;
  }
  mu.refreshed.reserve(path.size());
  for (auto it = path.rbegin(); it != path.rend(); ++it)
    mu.refreshed.push_back({*it, nodes_[*it].key_version});
  return mu;
}

TreeMutation KeyTree::withdraw(std::string_view member_id) {
  const auto it = member_leaf_.find(member_id);
  if (it == member_leaf_.end())
    throw std::out_of_range("unknown member id: " + std::string(member_id));
  const NodeId leaf = it->second;

  TreeMutation mu;
  mu.kind = MutationKind::withdraw;
  mu.member = members_[static_cast<std::size_t>(nodes_[leaf].member)];
  mu.depth = depth(leaf);
  member_leaf_.erase(it);

  if (leaf == root_) {
    retire_node(leaf);
    root_ = kNoNode;
    mu.removed = {leaf};
    return mu;
  }

  const NodeId par = nodes_[leaf].parent;
  const NodeId grand = nodes_[par].parent;
  const NodeId sibling =
      nodes_[par].left == leaf ? nodes_[par].right : nodes_[par].left;

  // Every strict ancestor of the leaf held a key the withdrawn member knew;
  // bump them all, the soon-to-be-removed parent included.
  std::vector<NodeId> path;  // par -> root
  for (NodeId cur = par; cur != kNoNode; cur = nodes_[cur].parent)
    path.push_back(cur);
  for (const NodeId cur : path) ++nodes_[cur].key_version;
  mu.refreshed.reserve(path.size());
  for (auto rit = path.rbegin(); rit != path.rend(); ++rit)
    mu.refreshed.push_back({*rit, nodes_[*rit].key_version});

  nodes_[sibling].parent = grand;
  if (grand == kNoNode) {
    root_ = sibling;
  } else {
    (nodes_[grand].left == par ? nodes_[grand].left : nodes_[grand].right) =
        sibling;
  }
  retire_node(leaf);
  retire_node(par);
  mu.removed = {leaf, par};

  for (NodeId cur = grand; cur != kNoNode; cur = nodes_[cur].parent) {
    Node& nd = nodes_[cur];
    nd.weight = nodes_[nd.left].weight + nodes_[nd.right].weight;
  }
  return mu;
}

void KeyTree::debug_set_weight(NodeId id, double w) { at(id).weight = w; }

std::vector<Violation> KeyTree::validate() const {
  std::vector<Violation> out;
  const auto flag = [&](NodeId id, std::string msg) {
    out.push_back({id, std::move(msg)});
  };

  if (root_ == kNoNode) {
    if (live_nodes_ != 0)
      flag(kNoNode, "empty tree with live node count " +
                        std::to_string(live_nodes_));
    if (!member_leaf_.empty())
      flag(kNoNode, "empty tree with registered members");
    return out;
  }
  if (!contains(root_)) {
    flag(root_, "root handle is not a live node");
    return out;
  }
  if (nodes_[root_].parent != kNoNode)
    flag(root_, "root has a parent");

  std::size_t reached = 0;
  std::size_t leaf_count = 0;
  std::unordered_set<std::string_view> leaf_ids;
  std::vector<NodeId> order;  // preorder over the reachable, live portion
  std::vector<NodeId> stack{root_};
  std::vector<char> seen(nodes_.size(), 0);
  while (!stack.empty()) {
    const NodeId id = stack.back();
    stack.pop_back();
    if (id >= nodes_.size() || !nodes_[id].alive) {
      flag(id, "child pointer to dead or out-of-range node");
      continue;
    }
    if (seen[id]) {
      flag(id, "node reached twice (cycle or shared child)");
      continue;
    }
    seen[id] = 1;
    order.push_back(id);
    ++reached;
    const Node& nd = nodes_[id];
    const bool has_left = nd.left != kNoNode;
    const bool has_right = nd.right != kNoNode;
    if (has_left != has_right) {
      flag(id, "node has exactly one child (tree must be strictly binary)");
    }
    if (has_left && has_right) {
      if (nd.member >= 0) flag(id, "internal node carries a member");
      if (nd.left == nd.right) flag(id, "children are the same node");
      for (const NodeId c : {nd.left, nd.right}) {
        if (c < nodes_.size() && nodes_[c].alive &&
            nodes_[c].parent != id)
          flag(c, "child's parent pointer does not match");
        stack.push_back(c);
      }
    } else if (!has_left && !has_right) {
      ++leaf_count;
      if (nd.member < 0) {
        flag(id, "leaf without a member");
      } else {
        const Member& m = members_[static_cast<std::size_t>(nd.member)];
        if (!(m.p > 0.0) || m.p > 1.0)
          flag(id, "member probability out of range (0, 1]");
        if (!leaf_ids.insert(m.id).second)
          flag(id, "duplicate member id: " + m.id);
        const auto it = member_leaf_.find(std::string_view(m.id));
        if (it == member_leaf_.end() || it->second != id)
          flag(id, "member lookup table does not map '" + m.id +
                       "' to this leaf");
      }
    }
  }
  if (reached != live_nodes_)
    flag(kNoNode, "live node count " + std::to_string(live_nodes_) +
                      " but " + std::to_string(reached) +
                      " nodes reachable from root");
  if (leaf_count != member_leaf_.size())
    flag(kNoNode, "leaf count " + std::to_string(leaf_count) +
                      " but member table holds " +
                      std::to_string(member_leaf_.size()));

  // Weight audit: walking the preorder backwards reaches children before
  // parents, so recompute bottom-up and compare against the caches.
  constexpr double kTol = 1e-9;
  std::vector<double> recomputed(nodes_.size(), 0.0);
  for (auto rit = order.rbegin(); rit != order.rend(); ++rit) {
    const Node& nd = nodes_[*rit];
    const bool internal = nd.left != kNoNode && nd.right != kNoNode &&
                          nd.left < nodes_.size() && nd.right < nodes_.size();
    recomputed[*rit] =
        nd.member >= 0
            ? members_[static_cast<std::size_t>(nd.member)].p
            : (internal ? recomputed[nd.left] + recomputed[nd.right] : 0.0);
    if (std::abs(recomputed[*rit] - nd.weight) > kTol)
      flag(*rit, "cached weight " + std::to_string(nd.weight) +
                     " differs from recomputed " +
                     std::to_string(recomputed[*rit]));
  }
  return out;
}

KeyTree KeyTree::build_from_members(std::vector<Member> members,
                                    TreeShape shape) {
  detail::validate_member_set(members);
  if (shape == TreeShape::huffman) return analysis::build_huffman(members);

  TreeBuilder builder;
  // Recursive halving, left half takes the ceiling.
  const std::function<NodeId(std::size_t, std::size_t)> build =
      [&](std::size_t lo, std::size_t hi) -> NodeId {
    if (hi - lo == 1) return builder.add_leaf(members[lo]);
    const std::size_t mid = lo + (hi - lo + 1) / 2;
    const NodeId l = build(lo, mid);
    const NodeId r = build(mid, hi);
    return builder.join(l, r);
  };
  return builder.finish(build(0, members.size()));
}

NodeId TreeBuilder::claim_slot(NodeId id) {
  if (finished_) throw std::invalid_argument("builder already finished");
  if (id == kNoNode) throw std::invalid_argument("invalid node id");
  if (id >= tree_.nodes_.size()) tree_.nodes_.resize(id + 1);
  if (tree_.nodes_[id].alive)
    throw std::invalid_argument("duplicate node id: " + std::to_string(id));
  tree_.nodes_[id].alive = true;
  ++tree_.live_nodes_;
  ++roots_;
  return id;
}

NodeId TreeBuilder::add_leaf(const Member& m) {
  return add_leaf(m, static_cast<NodeId>(tree_.nodes_.size()), 0);
}

NodeId TreeBuilder::add_leaf(const Member& m, NodeId id,
                             std::uint64_t version) {
  detail::require_valid_probability(m.p);
  if (tree_.member_leaf_.find(std::string_view(m.id)) !=
      tree_.member_leaf_.end())
    throw std::invalid_argument("duplicate member id: " + m.id);
  const NodeId slot = claim_slot(id);
  KeyTree::Node& nd = tree_.nodes_[slot];
  tree_.members_.push_back(m);
  nd.member = static_cast<std::int32_t>(tree_.members_.size() - 1);
  nd.weight = m.p;
  nd.key_version = version;
  tree_.member_leaf_.emplace(m.id, slot);
  return slot;
}

NodeId TreeBuilder::join(NodeId left, NodeId right) {
  return join(left, right, static_cast<NodeId>(tree_.nodes_.size()), 0);
}

NodeId TreeBuilder::join(NodeId left, NodeId right, NodeId id,
                         std::uint64_t version) {
  for (const NodeId c : {left, right}) {
    if (!tree_.contains(c))
      throw std::invalid_argument("join of unknown node");
    if (tree_.nodes_[c].parent != kNoNode)
      throw std::invalid_argument("node already has a parent");
  }
  if (left == right) throw std::invalid_argument("join of a node with itself");
  const NodeId slot = claim_slot(id);
  KeyTree::Node& nd = tree_.nodes_[slot];
  nd.left = left;
  nd.right = right;
  nd.weight = tree_.nodes_[left].weight + tree_.nodes_[right].weight;
  nd.key_version = version;
  tree_.nodes_[left].parent = slot;
  tree_.nodes_[right].parent = slot;
  roots_ -= 2;
  return slot;
}

KeyTree TreeBuilder::finish(NodeId root) {
  if (finished_) throw std::invalid_argument("builder already finished");
  if (!tree_.contains(root) || tree_.nodes_[root].parent != kNoNode)
    throw std::invalid_argument("finish: not an unparented node");
  if (roots_ != 1)
    throw std::invalid_argument(
        "finish: forest not fully joined (" + std::to_string(roots_) +
        " roots outstanding)");
  finished_ = true;
  tree_.root_ = root;
  return std::move(tree_);
}

namespace {

using nlohmann::ordered_json;

ordered_json node_to_json(const KeyTree& t, NodeId id) {
  ordered_json e;
  e["id"] = id;
  if (t.is_leaf(id)) {
    const Member& m = t.member_at(id);
    e["member_id"] = m.id;
    e["p"] = m.p;
  }
  e["key_version"] = t.key_version(id);
  return e;
}

}  // namespace

std::string KeyTree::to_json() const {
  ordered_json doc;
  doc["nodes"] = ordered_json::array();
  if (root_ != kNoNode) {
    std::vector<NodeId> stack{root_};
    while (!stack.empty()) {
      const NodeId id = stack.back();
      stack.pop_back();
      doc["nodes"].push_back(node_to_json(*this, id));
      if (!is_leaf(id)) {
        stack.push_back(right(id));
        stack.push_back(left(id));
      }
    }
  }
  return doc.dump(2);
}

KeyTree KeyTree::from_json(std::string_view text) {
  ordered_json doc;
  try {
    doc = ordered_json::parse(text);
  } catch (const ordered_json::exception& e) {
    throw FormatError(std::string("tree JSON parse error: ") + e.what());
  }
  if (!doc.is_object() || !doc.contains("nodes") || !doc["nodes"].is_array())
    throw FormatError("tree JSON must be an object with a 'nodes' array");
  const auto& nodes = doc["nodes"];
  if (nodes.empty()) return KeyTree{};

  struct Entry {
    NodeId id;
    std::uint64_t version;
    bool leaf;
    Member member;
  };
  std::vector<Entry> entries;
  entries.reserve(nodes.size());
  NodeId max_id = 0;
  for (const auto& e : nodes) {
    if (!e.is_object() || !e.contains("id") ||
        !e["id"].is_number_unsigned() || !e.contains("key_version") ||
        !e["key_version"].is_number_unsigned())
      throw FormatError("tree node needs unsigned 'id' and 'key_version'");
    Entry entry;
    const std::uint64_t raw_id = e["id"].get<std::uint64_t>();
    if (raw_id >= kNoNode) throw FormatError("node id out of range");
    entry.id = static_cast<NodeId>(raw_id);
    entry.version = e["key_version"].get<std::uint64_t>();
    entry.leaf = e.contains("member_id");
    if (entry.leaf) {
      if (!e["member_id"].is_string() || !e.contains("p") ||
          !e["p"].is_number())
        throw FormatError("leaf node needs string 'member_id' and numeric 'p'");
      entry.member.id = e["member_id"].get<std::string>();
      entry.member.p = e["p"].get<double>();
      if (!(entry.member.p > 0.0) || entry.member.p > 1.0)
        throw FormatError("member probability out of range (0, 1]");
    }
    max_id = std::max(max_id, entry.id);
    entries.push_back(std::move(entry));
  }
  // Ids may have gaps (mutation history), but wildly sparse ids would blow
  // up the slot table; reject them.
  if (static_cast<std::size_t>(max_id) >= 8 * entries.size() + 64)
    throw FormatError("node ids too sparse for node count");

  // Preorder fold: an internal entry waits for two finished subtrees.
  TreeBuilder builder;
  struct Frame {
    Entry entry;
    NodeId child[2];
    int filled = 0;
  };
  std::vector<Frame> frames;
  std::optional<NodeId> done;
  try {
    for (Entry& entry : entries) {
      if (done.has_value())
        throw FormatError("extra nodes after the root's subtree completed");
      std::optional<NodeId> finished_subtree;
      if (entry.leaf) {
        finished_subtree =
            builder.add_leaf(entry.member, entry.id, entry.version);
      } else {
        frames.push_back(Frame{std::move(entry), {kNoNode, kNoNode}, 0});
      }
      while (finished_subtree.has_value()) {
        if (frames.empty()) {
          done = finished_subtree;
          break;
        }
        Frame& top = frames.back();
        top.child[top.filled++] = *finished_subtree;
        finished_subtree.reset();
        if (top.filled == 2) {
          finished_subtree = builder.join(top.child[0], top.child[1],
                                          top.entry.id, top.entry.version);
          frames.pop_back();
        }
      }
    }
    if (!done.has_value())
      throw FormatError("truncated tree: internal nodes missing subtrees");
    return builder.finish(*done);
  } catch (const std::invalid_argument& e) {
    throw FormatError(std::string("invalid tree JSON: ") + e.what());
  }
}

}  // namespace lkh
