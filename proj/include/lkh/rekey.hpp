#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "lkh/key_tree.hpp"

namespace lkh {

// Append-only history of key-state changes over one tree's lifetime: a
// snapshot of the starting tree plus one TreeMutation per join/withdrawal.
//
// The design keeps two views of the history apart:
//   - the recorded refresh/create/remove sets are the server's *claims*;
//   - replaying the anchors and member ids against the snapshot rebuilds
//     the true tree structure, independent of those claims.
// The security checks take member paths from the replayed structure and key
// versions from the claims, so a server that silently skips a refresh is
// caught rather than believed. Data is modeled as decryptable by whoever
// holds the current version of a key, so every check reduces to
// disjointness of (node, version) sets.
class KeyEpoch {
 public:
  KeyEpoch() = default;
  explicit KeyEpoch(const KeyTree& initial);

  // Appends a mutation just performed on tree. The mutation is replayed on
  // the epoch's own copy of the tree and must reproduce exactly; a few
  // direct checks against the live tree guard the caller's side. Throws
  // std::invalid_argument on any inconsistency.
  void record(const KeyTree& tree, const TreeMutation& mutation);

  std::size_t step_count() const { return steps_.size(); }
  const TreeMutation& step(std::size_t i) const { return steps_.at(i); }
  const KeyTree& initial() const { return initial_; }
  // Live (node, version) pairs of the starting tree, sorted by id.
  std::vector<std::pair<NodeId, std::uint64_t>> baseline() const;

  std::uint64_t join_events() const { return join_events_; }
  std::uint64_t withdraw_events() const { return withdraw_events_; }
  // Total keys delivered on joins: each join counts its refreshed chain
  // plus the joiner's fresh leaf key.
  std::uint64_t join_keys_delivered() const { return join_keys_; }
  // Total keys reissued to survivors on withdrawals: each withdrawal
  // counts its refreshed chain minus the dissolved parent, whose key dies
  // with the leaving member.
  std::uint64_t withdraw_keys_reissued() const { return withdraw_keys_; }
  // Mean keys per event of the corresponding total, straight from the
  // recorded version diffs. Zero events yield zero.
  double average_join_cost() const;
  double average_withdraw_cost() const;

  // Forward security: after each of the member's withdrawals, no key the
  // member held (its leaf and every ancestor on its true path, at their
  // pre-withdrawal claimed versions) is live in the post-withdrawal state
  // or any later one. Throws if the member never withdrew.
  bool check_forward_security(std::string_view member_id) const;

  // Backward security: the keys handed to the member at each join (its
  // fresh leaf and its true path, at post-join claimed versions) were never
  // live in any earlier state, the baseline included. Throws if the member
  // never joined.
  bool check_backward_security(std::string_view member_id) const;

  // Every check on the whole history: recorded rekey sets against the
  // replayed ground truth, version continuity, and both security predicates
  // for every member with the matching event. Returns human-readable
  // violation descriptions (empty means secure).
  std::vector<std::string> audit_all() const;

  // True when the claimed end state equals the tree's live (node, version)
  // set exactly.
  bool matches_tree(const KeyTree& tree) const;

  // One JSON object per line: a baseline line carrying the starting tree,
  // then one line per step.
  void write_jsonl(std::ostream& out) const;
  // Throws FormatError on malformed input. Validation is structural only
  // (parsable tree, replayable anchors, fresh ids, nondecreasing versions):
  // a well-formed but insecure history loads fine so the checks can
  // condemn it.
  static KeyEpoch read_jsonl(std::istream& in);

  // Assemble from raw parts (the loader's path; also lets tests build
  // tampered histories). Same structural validation as read_jsonl.
  static KeyEpoch from_parts(KeyTree initial, std::vector<TreeMutation> steps);

 private:
  void apply_claimed(const TreeMutation& m);
  void bump_counters(const TreeMutation& m);

  KeyTree initial_;  // snapshot at epoch start
  KeyTree shadow_;   // initial_ advanced by replaying every step's surgery
  std::vector<TreeMutation> steps_;
  std::unordered_map<NodeId, std::uint64_t> claimed_live_;  // per the claims
  std::unordered_set<NodeId> ever_seen_;                    // id-reuse guard
  std::uint64_t join_events_ = 0;
  std::uint64_t withdraw_events_ = 0;
  std::uint64_t join_keys_ = 0;
  std::uint64_t withdraw_keys_ = 0;
};

}  // namespace lkh
