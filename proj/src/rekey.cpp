#include "lkh/rekey.hpp"

#include <algorithm>
#include <istream>
#include <optional>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "json.hpp"
#include "lkh/errors.hpp"

namespace lkh {

namespace {

std::vector<std::pair<NodeId, std::uint64_t>> live_pairs(const KeyTree& tree) {
  std::vector<std::pair<NodeId, std::uint64_t>> out;
  if (tree.empty()) return out;
  std::vector<NodeId> stack{tree.root()};
  while (!stack.empty()) {
    const NodeId id = stack.back();
    stack.pop_back();
    out.emplace_back(id, tree.key_version(id));
    if (!tree.is_leaf(id)) {
      stack.push_back(tree.right(id));
      stack.push_back(tree.left(id));
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

// Re-performs a step's surgery on the replayed tree, yielding the ground
// truth this step should have recorded. Anchors and member ids pin the
// structure completely, so the result is independent of the step's claimed
// refresh/create/remove sets.
TreeMutation replay_surgery(KeyTree& shadow, const TreeMutation& claimed) {
  if (claimed.kind == MutationKind::join)
    return shadow.insert_at(claimed.member, claimed.anchor);
  return shadow.withdraw(claimed.member.id);
}

// What replay_surgery would record, computed without touching the tree, so
// record() can reject a divergent mutation before committing anything.
TreeMutation predict_surgery(const KeyTree& tree, const TreeMutation& claimed) {
  TreeMutation mu;
  mu.kind = claimed.kind;
  if (claimed.kind == MutationKind::join) {
    const NodeId x = claimed.anchor;
    if (!tree.contains(x)) throw std::out_of_range("invalid node handle");
    detail::require_valid_probability(claimed.member.p);
    if (tree.find_member(claimed.member.id))
      throw std::invalid_argument("duplicate member id: " + claimed.member.id);
    mu.member = claimed.member;
    mu.anchor = x;
    const NodeId leaf = tree.id_upper_bound();
    const NodeId mid = leaf + 1;
    mu.created = {mid, leaf};
    mu.depth = tree.depth(x);
    std::vector<NodeId> up;  // x's parent chain, deepest first
    for (NodeId cur = tree.parent(x); cur != kNoNode; cur = tree.parent(cur))
      up.push_back(cur);
    for (auto it = up.rbegin(); it != up.rend(); ++it)
      mu.refreshed.push_back({*it, tree.key_version(*it) + 1});
    mu.refreshed.push_back({mid, 1});
    return mu;
  }
  const auto leaf = tree.find_member(claimed.member.id);
  if (!leaf)
    throw std::out_of_range("unknown member id: " + claimed.member.id);
  mu.member = tree.member_at(*leaf);
  mu.depth = tree.depth(*leaf);
  if (*leaf == tree.root()) {
    mu.removed = {*leaf};
    return mu;
  }
  mu.removed = {*leaf, tree.parent(*leaf)};
  std::vector<NodeId> up;  // strict ancestors, deepest first
  for (NodeId cur = tree.parent(*leaf); cur != kNoNode; cur = tree.parent(cur))
    up.push_back(cur);
  for (auto it = up.rbegin(); it != up.rend(); ++it)
    mu.refreshed.push_back({*it, tree.key_version(*it) + 1});
  return mu;
}

// The member's leaf plus every ancestor up to the root: exactly the keys
// the member holds while in the group.
std::vector<NodeId> path_keys(const KeyTree& tree, std::string_view member_id) {
  const auto leaf = tree.find_member(member_id);
  if (!leaf) throw std::logic_error("replayed tree lost a member");
  std::vector<NodeId> path;
  for (NodeId cur = *leaf; cur != kNoNode; cur = tree.parent(cur))
    path.push_back(cur);
  return path;
}

using HeldKeys = std::vector<std::pair<NodeId, std::uint64_t>>;

// Walks the history forward, keeping the true structure (shadow) and the
// claimed version state side by side.
class Cursor {
 public:
  explicit Cursor(const KeyTree& initial,
                  const std::vector<TreeMutation>& steps)
      : shadow_(initial), steps_(steps) {
    for (const auto& [id, v] : live_pairs(initial)) claimed_.emplace(id, v);
  }

  const KeyTree& shadow() const { return shadow_; }

  std::optional<std::uint64_t> claimed_version(NodeId id) const {
    const auto it = claimed_.find(id);
    if (it == claimed_.end()) return std::nullopt;
    return it->second;
  }

  bool claimed_holds(NodeId id, std::uint64_t version) const {
    const auto it = claimed_.find(id);
    return it != claimed_.end() && it->second == version;
  }

  bool any_claimed_held(const HeldKeys& held) const {
    for (const auto& [id, v] : held)
      if (claimed_holds(id, v)) return true;
    return false;
  }

  // Applies the next step to both states; returns the replayed ground
  // truth for comparison against the claims.
  TreeMutation advance() {
    const TreeMutation& m = steps_[next_++];
    TreeMutation truth = replay_surgery(shadow_, m);
    for (const NodeId id : m.created) claimed_[id] = 0;
    for (const RefreshedKey& r : m.refreshed) claimed_[r.node] = r.version;
    for (const NodeId id : m.removed) claimed_.erase(id);
    return truth;
  }

  bool done() const { return next_ == steps_.size(); }
  const TreeMutation& current() const { return steps_[next_]; }

 private:
  KeyTree shadow_;
  std::unordered_map<NodeId, std::uint64_t> claimed_;
  const std::vector<TreeMutation>& steps_;
  std::size_t next_ = 0;
};

}  // namespace

KeyEpoch::KeyEpoch(const KeyTree& initial)
    : initial_(initial), shadow_(initial) {
  for (const auto& [id, v] : live_pairs(initial_)) {
    claimed_live_.emplace(id, v);
    ever_seen_.insert(id);
  }
}

void KeyEpoch::apply_claimed(const TreeMutation& m) {
  for (const NodeId id : m.created) claimed_live_[id] = 0;
  for (const RefreshedKey& r : m.refreshed) claimed_live_[r.node] = r.version;
  for (const NodeId id : m.removed) claimed_live_.erase(id);
}

void KeyEpoch::bump_counters(const TreeMutation& m) {
  if (m.kind == MutationKind::join) {
    ++join_events_;
    // Keys delivered on the joiner's path: the refreshed chain plus the
    // member's own fresh leaf key.
    join_keys_ += m.refreshed.size() + 1;
  } else {
    ++withdraw_events_;
    // Keys reissued to survivors: the refreshed chain minus the dissolved
    // parent, whose key dies with the leaving member (last-member
    // withdrawals refresh nothing).
    if (!m.refreshed.empty()) withdraw_keys_ += m.refreshed.size() - 1;
  }
}

void KeyEpoch::record(const KeyTree& tree, const TreeMutation& m) {
  const auto fail = [](const std::string& what) {
    throw std::invalid_argument("inconsistent mutation record: " + what);
  };

  TreeMutation predicted;
  try {
    predicted = predict_surgery(shadow_, m);
  } catch (const std::exception& e) {
    fail(std::string("surgery does not replay: ") + e.what());
  }
  if (!(predicted == m)) fail("recorded sets diverge from the replayed surgery");

  // The caller claims the mutation came from this tree; spot-check it.
  for (const NodeId id : m.created)
    if (!tree.contains(id))
      fail("created node " + std::to_string(id) + " is not live in the tree");
  for (const NodeId id : m.removed)
    if (tree.contains(id))
      fail("removed node " + std::to_string(id) + " is still in the tree");
  for (const RefreshedKey& r : m.refreshed) {
    const bool removed_now =
        std::find(m.removed.begin(), m.removed.end(), r.node) !=
        m.removed.end();
    if (removed_now) continue;
    if (!tree.contains(r.node))
      fail("refreshed node " + std::to_string(r.node) +
           " missing from the tree");
    if (tree.key_version(r.node) != r.version)
      fail("tree version of node " + std::to_string(r.node) +
           " does not match the record");
  }

  // All claims check out; commit.
  const TreeMutation truth = replay_surgery(shadow_, m);
  if (!(truth == m))
    throw std::logic_error("surgery replay diverged from its prediction");
  for (const NodeId id : m.created) ever_seen_.insert(id);
  apply_claimed(m);
  bump_counters(m);
  steps_.push_back(m);
}

std::vector<std::pair<NodeId, std::uint64_t>> KeyEpoch::baseline() const {
  return live_pairs(initial_);
}

double KeyEpoch::average_join_cost() const {
  return join_events_ == 0
             ? 0.0
             : static_cast<double>(join_keys_) /
                   static_cast<double>(join_events_);
}

double KeyEpoch::average_withdraw_cost() const {
  return withdraw_events_ == 0
             ? 0.0
             : static_cast<double>(withdraw_keys_) /
                   static_cast<double>(withdraw_events_);
}

bool KeyEpoch::check_forward_security(std::string_view member_id) const {
  bool saw_withdrawal = false;
  bool secure = true;
  Cursor cursor(initial_, steps_);
  // At each of the member's withdrawals, snapshot the keys it holds: its
  // true path (from the replayed structure, so a skipped refresh cannot
  // hide the node) at the claimed pre-withdrawal versions. Every later
  // state, the post-withdrawal one included, must contain none of them.
  std::vector<HeldKeys> tracked;
  for (std::size_t i = 0; i < steps_.size(); ++i) {
    const TreeMutation& m = cursor.current();
    if (m.kind == MutationKind::withdraw && m.member.id == member_id) {
      saw_withdrawal = true;
      HeldKeys held;
      for (const NodeId id : path_keys(cursor.shadow(), member_id)) {
        const auto v = cursor.claimed_version(id);
        if (!v) {
          secure = false;  // a held key the claimed history lost track of
          continue;
        }
        held.emplace_back(id, *v);
      }
      tracked.push_back(std::move(held));
    }
    cursor.advance();
    for (const HeldKeys& held : tracked)
      if (cursor.any_claimed_held(held)) secure = false;
  }
  if (!saw_withdrawal)
    throw std::invalid_argument("member never withdrew: " +
                                std::string(member_id));
  return secure;
}

bool KeyEpoch::check_backward_security(std::string_view member_id) const {
  bool saw_join = false;
  bool secure = true;
  Cursor cursor(initial_, steps_);
  // Every (node, version) pair live in any state before the join; versions
  // only grow, so an honest join hands out pairs disjoint from this set.
  std::unordered_map<NodeId, std::unordered_set<std::uint64_t>> seen;
  for (const auto& [id, v] : live_pairs(initial_)) seen[id].insert(v);
  for (std::size_t i = 0; i < steps_.size(); ++i) {
    const TreeMutation& m = cursor.current();
    cursor.advance();
    if (m.kind == MutationKind::join && m.member.id == member_id) {
      saw_join = true;
      // The keys handed over: the member's true path in the post-join
      // structure, at the claimed post-join versions. A refresh skipped at
      // this join leaves a handed-over pair that some earlier state held.
      for (const NodeId id : path_keys(cursor.shadow(), member_id)) {
        const auto v = cursor.claimed_version(id);
        if (!v) {
          secure = false;
          continue;
        }
        const auto it = seen.find(id);
        if (it != seen.end() && it->second.count(*v)) secure = false;
      }
    }
    // Only now does this step's state count as "earlier".
    for (const NodeId id : m.created) seen[id].insert(0);
    for (const RefreshedKey& r : m.refreshed) seen[r.node].insert(r.version);
  }
  if (!saw_join)
    throw std::invalid_argument("member never joined: " +
                                std::string(member_id));
  return secure;
}

std::vector<std::string> KeyEpoch::audit_all() const {
  std::vector<std::string> violations;

  // Layer 1: the recorded sets against the replayed ground truth, plus
  // version continuity of the claims themselves.
  {
    Cursor cursor(initial_, steps_);
    for (std::size_t i = 0; i < steps_.size(); ++i) {
      const TreeMutation& m = cursor.current();
      for (const RefreshedKey& r : m.refreshed) {
        const bool created_now =
            std::find(m.created.begin(), m.created.end(), r.node) !=
            m.created.end();
        const std::uint64_t prev =
            created_now ? 0 : cursor.claimed_version(r.node).value_or(~0ull);
        if (r.version != prev + 1)
          violations.push_back("step " + std::to_string(i) + ": node " +
                               std::to_string(r.node) + " jumps to version " +
                               std::to_string(r.version) + " from " +
                               std::to_string(prev));
      }
      const TreeMutation truth = cursor.advance();
      if (!(truth == m))
        violations.push_back(
            "step " + std::to_string(i) +
            ": recorded rekey sets diverge from the replayed surgery");
    }
  }

  // Layer 2: the security predicates for every member with the matching
  // event, in first-appearance order.
  std::vector<std::string> joined, withdrew;
  std::unordered_set<std::string> seen_join, seen_withdraw;
  for (const TreeMutation& m : steps_) {
    auto& seen = m.kind == MutationKind::join ? seen_join : seen_withdraw;
    auto& list = m.kind == MutationKind::join ? joined : withdrew;
    if (seen.insert(m.member.id).second) list.push_back(m.member.id);
  }
  for (const std::string& id : withdrew)
    if (!check_forward_security(id))
      violations.push_back("forward security violated for member '" + id +
                           "'");
  for (const std::string& id : joined)
    if (!check_backward_security(id))
      violations.push_back("backward security violated for member '" + id +
                           "'");
  return violations;
}

bool KeyEpoch::matches_tree(const KeyTree& tree) const {
  std::size_t live_count = 0;
  if (!tree.empty()) {
    std::vector<NodeId> stack{tree.root()};
    while (!stack.empty()) {
      const NodeId id = stack.back();
      stack.pop_back();
      ++live_count;
      const auto it = claimed_live_.find(id);
      if (it == claimed_live_.end() || it->second != tree.key_version(id))
        return false;
      if (!tree.is_leaf(id)) {
        stack.push_back(tree.right(id));
        stack.push_back(tree.left(id));
      }
    }
  }
  return live_count == claimed_live_.size();
}

namespace {

using nlohmann::ordered_json;

}  // namespace

void KeyEpoch::write_jsonl(std::ostream& out) const {
  {
    ordered_json line;
    line["type"] = "baseline";
    line["tree"] = ordered_json::parse(initial_.to_json());
    out << line.dump() << '\n';
  }
  for (const TreeMutation& m : steps_) {
    ordered_json line;
    line["type"] = m.kind == MutationKind::join ? "join" : "withdraw";
    line["member_id"] = m.member.id;
    line["p"] = m.member.p;
    line[m.kind == MutationKind::join ? "join_depth" : "withdraw_depth"] =
        m.depth;
    if (m.kind == MutationKind::join) line["anchor"] = m.anchor;
    line["created"] = m.created;
    line["removed"] = m.removed;
    ordered_json refreshed = ordered_json::array();
    for (const RefreshedKey& r : m.refreshed)
      refreshed.push_back({r.node, r.version});
    line["refreshed"] = refreshed;
    out << line.dump() << '\n';
  }
}

KeyEpoch KeyEpoch::read_jsonl(std::istream& in) {
  KeyTree initial;
  std::vector<TreeMutation> steps;
  std::string text;
  std::size_t line_no = 0;
  bool saw_baseline = false;
  const auto fail = [&](const std::string& what) {
    throw FormatError("epoch line " + std::to_string(line_no) + ": " + what);
  };
  const auto parse_node_id = [&](const ordered_json& j) -> NodeId {
    if (!j.is_number_unsigned() || j.get<std::uint64_t>() >= kNoNode)
      fail("invalid node id");
    return static_cast<NodeId>(j.get<std::uint64_t>());
  };
  while (std::getline(in, text)) {
    ++line_no;
    if (text.empty()) continue;
    ordered_json line;
    try {
      line = ordered_json::parse(text);
    } catch (const ordered_json::exception& e) {
      fail(std::string("parse error: ") + e.what());
    }
    if (!line.is_object() || !line.contains("type") ||
        !line["type"].is_string())
      fail("missing 'type'");
    const std::string type = line["type"].get<std::string>();
    if (type == "baseline") {
      if (saw_baseline || !steps.empty())
        fail("baseline must be the first line");
      saw_baseline = true;
      if (!line.contains("tree") || !line["tree"].is_object())
        fail("baseline needs a 'tree' object");
      try {
        initial = KeyTree::from_json(line["tree"].dump());
      } catch (const FormatError& e) {
        fail(std::string("baseline tree: ") + e.what());
      }
      continue;
    }
    if (type != "join" && type != "withdraw") fail("unknown step type");
    if (!saw_baseline) fail("step before baseline");
    TreeMutation m;
    m.kind = type == "join" ? MutationKind::join : MutationKind::withdraw;
    const char* depth_key = m.kind == MutationKind::join ? "join_depth"
                                                         : "withdraw_depth";
    if (!line.contains("member_id") || !line["member_id"].is_string() ||
        !line.contains("p") || !line["p"].is_number() ||
        !line.contains(depth_key) ||
        !line[depth_key].is_number_unsigned() ||
        !line.contains("created") || !line["created"].is_array() ||
        !line.contains("removed") || !line["removed"].is_array() ||
        !line.contains("refreshed") || !line["refreshed"].is_array())
      fail("step is missing required fields");
    if (m.kind == MutationKind::join) {
      if (!line.contains("anchor")) fail("join step is missing 'anchor'");
      m.anchor = parse_node_id(line["anchor"]);
    }
    m.member.id = line["member_id"].get<std::string>();
    m.member.p = line["p"].get<double>();
    m.depth = line[depth_key].get<std::size_t>();
    for (const auto& id : line["created"])
      m.created.push_back(parse_node_id(id));
    for (const auto& id : line["removed"])
      m.removed.push_back(parse_node_id(id));
    for (const auto& pair : line["refreshed"]) {
      if (!pair.is_array() || pair.size() != 2 ||
          !pair[1].is_number_unsigned())
        fail("refreshed entries are [id, version] pairs");
      m.refreshed.push_back(
          {parse_node_id(pair[0]), pair[1].get<std::uint64_t>()});
    }
    steps.push_back(std::move(m));
  }
  if (!saw_baseline) throw FormatError("epoch file has no baseline line");
  return from_parts(std::move(initial), std::move(steps));
}

KeyEpoch KeyEpoch::from_parts(KeyTree initial,
                              std::vector<TreeMutation> steps) {
  if (!initial.validate().empty())
    throw FormatError("baseline tree violates tree invariants");
  KeyEpoch epoch(initial);
  for (std::size_t i = 0; i < steps.size(); ++i) {
    TreeMutation& m = steps[i];
    const auto fail = [&](const std::string& what) {
      throw FormatError("step " + std::to_string(i) + ": " + what);
    };
    if (m.member.id.empty()) fail("empty member id");
    try {
      detail::require_valid_probability(m.member.p);
    } catch (const std::invalid_argument& e) {
      fail(e.what());
    }
    if (m.kind == MutationKind::join) {
      if (m.anchor == kNoNode) fail("join without an anchor");
      if (m.created.size() != 2 || m.created[0] == m.created[1])
        fail("a join creates exactly one internal node and one leaf");
      if (!m.removed.empty()) fail("a join removes nothing");
    } else {
      if (m.anchor != kNoNode) fail("a withdrawal has no anchor");
      if (!m.created.empty()) fail("a withdrawal creates nothing");
      if (m.removed.empty() || m.removed.size() > 2)
        fail("a withdrawal removes one leaf and at most its parent");
    }
    for (const NodeId id : m.created)
      if (!epoch.ever_seen_.insert(id).second)
        fail("created node id " + std::to_string(id) + " reused");
    const auto live_or_created_now = [&](NodeId id) {
      return epoch.claimed_live_.count(id) != 0 ||
             std::find(m.created.begin(), m.created.end(), id) !=
                 m.created.end();
    };
    std::unordered_set<NodeId> touched;
    for (const RefreshedKey& r : m.refreshed) {
      if (!live_or_created_now(r.node))
        fail("refreshed node " + std::to_string(r.node) + " is not live");
      if (!touched.insert(r.node).second)
        fail("node " + std::to_string(r.node) + " refreshed twice");
      const auto it = epoch.claimed_live_.find(r.node);
      // Nodes created in this step enter at version 0.
      const std::uint64_t prev =
          it == epoch.claimed_live_.end() ? 0 : it->second;
      if (r.version <= prev)
        fail("node " + std::to_string(r.node) + " version does not grow");
    }
    for (const NodeId id : m.removed)
      if (!live_or_created_now(id))
        fail("removed node " + std::to_string(id) + " is not live");
    try {
      replay_surgery(epoch.shadow_, m);
    } catch (const std::exception& e) {
      fail(std::string("surgery does not replay: ") + e.what());
    }
    epoch.apply_claimed(m);
    epoch.bump_counters(m);
  }
  epoch.steps_ = std::move(steps);
  return epoch;
}

}  // namespace lkh
