#include "lkh/simulator.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <stdexcept>
#include <thread>

#include "json.hpp"
#include "lkh/rng.hpp"

namespace lkh {
namespace sim {

std::string_view to_string(WithdrawRule rule) {
  return rule == WithdrawRule::weighted ? "weighted" : "uniform";
}

std::optional<WithdrawRule> withdraw_rule_from_string(std::string_view name) {
  if (name == "weighted") return WithdrawRule::weighted;
  if (name == "uniform") return WithdrawRule::uniform;
  return std::nullopt;
}

void SimulationConfig::validate() const {
  if (n < 2) throw std::invalid_argument("config: n must be >= 2");
  if (m == 0) throw std::invalid_argument("config: m must be >= 1");
  if (!(dist_lo > 0.0) || !(dist_lo <= dist_hi) || dist_hi > 1.0)
    throw std::invalid_argument(
        "config: need 0 < dist_lo <= dist_hi <= 1");
  if (replications == 0)
    throw std::invalid_argument("config: replications must be >= 1");
}

namespace {

// Weighted member draw: descend from the root consuming a uniform draw in
// [0, root weight). Cached weights are exact child sums, so the residual u
// stays in range up to rounding; any leftover lands on the right child.
NodeId weighted_member(const KeyTree& tree, Rng& rng) {
  NodeId x = tree.root();
  double u = rng.uniform(0.0, tree.weight(x));
  while (!tree.is_leaf(x)) {
    const double wl = tree.weight(tree.left(x));
    if (u < wl) {
      x = tree.left(x);
    } else {
      u -= wl;
      x = tree.right(x);
    }
  }
  return x;
}

std::size_t worker_count(std::size_t replications) {
  std::size_t workers = std::thread::hardware_concurrency();
  if (const char* env = std::getenv("LKH_SIM_THREADS")) {
    char* end = nullptr;
    const unsigned long parsed = std::strtoul(env, &end, 10);
    if (end != env && *end == '\0' && parsed > 0) workers = parsed;
  }
  if (workers == 0) workers = 1;
  return std::min(workers, replications);
}

ReplicationResult run_replication(const SimulationConfig& config,
                                  std::size_t index, KeyEpoch* epoch_out) {
  Rng rng(derive_seed(config.seed, index));

  std::vector<Member> members;
  members.reserve(config.n);
  for (std::size_t i = 0; i < config.n; ++i)
    members.push_back(
        {"m" + std::to_string(i), rng.uniform(config.dist_lo, config.dist_hi)});
  KeyTree tree = analysis::build_huffman(members);
  KeyEpoch epoch(tree);

  // Uniform withdrawals need an indexable member list; swap-remove keeps
  // the draw O(1) and deterministic.
  std::vector<std::string> roster;
  if (config.withdraw_rule == WithdrawRule::uniform) {
    roster.reserve(config.n);
    for (const Member& m : members) roster.push_back(m.id);
  }

  std::uint64_t join_keys = 0, withdraw_keys = 0;
  std::size_t next_member = config.n;
  SelectionStats stats;
  for (std::size_t round = 0; round < config.m; ++round) {
    // Withdrawal first, then a join: n is constant between rounds.
    std::string leaver;
    if (config.withdraw_rule == WithdrawRule::weighted) {
      leaver = tree.member_at(weighted_member(tree, rng)).id;
    } else {
      const std::size_t i = static_cast<std::size_t>(rng.below(roster.size()));
      leaver = roster[i];
      roster[i] = roster.back();
      roster.pop_back();
    }
    const TreeMutation wd = tree.withdraw(leaver);
    epoch.record(tree, wd);
    // Survivors re-receive the refreshed chain minus the dissolved parent,
    // whose key leaves with the member. n >= 2 keeps the chain non-empty.
    withdraw_keys += wd.refreshed.size() - 1;

    Member joiner{"m" + std::to_string(next_member++),
                  rng.uniform(config.dist_lo, config.dist_hi)};
    const NodeId x = select_insertion(tree, config.policy, joiner.p, &stats);
    if ((config.policy == Policy::alg2 || config.policy == Policy::alg4) &&
        stats.nodes_visited != tree.node_count())
      throw std::logic_error("cost scan did not visit every node");
    const TreeMutation join = tree.insert_at(joiner, x);
    epoch.record(tree, join);
    // The joiner receives the refreshed chain plus its own fresh leaf key.
    join_keys += join.refreshed.size() + 1;
    if (config.withdraw_rule == WithdrawRule::uniform)
      roster.push_back(join.member.id);
  }

  ReplicationResult r;
  r.index = index;
  r.seed = derive_seed(config.seed, index);
  r.join_keys = join_keys;
  r.withdraw_keys = withdraw_keys;
  r.avg_join_cost =
      static_cast<double>(join_keys) / static_cast<double>(config.m);
  r.avg_withdraw_cost =
      static_cast<double>(withdraw_keys) / static_cast<double>(config.m);
  // The epoch re-derives both averages from recorded version diffs; they
  // must agree exactly with the streaming totals.
  if (epoch.average_join_cost() != r.avg_join_cost ||
      epoch.average_withdraw_cost() != r.avg_withdraw_cost)
    throw std::logic_error("epoch accounting diverged from streaming totals");
  if (!epoch.matches_tree(tree))
    throw std::logic_error("epoch end state diverged from the tree");
  r.final_tree = analysis::withdrawal_costs(tree);
  if (epoch_out && index == 0) *epoch_out = std::move(epoch);
  return r;
}

double sample_stddev(const std::vector<double>& xs, double mean) {
  if (xs.size() < 2) return 0.0;
  double acc = 0.0;
  for (const double x : xs) acc += (x - mean) * (x - mean);
  return std::sqrt(acc / static_cast<double>(xs.size() - 1));
}

}  // namespace

SimulationReport run(const SimulationConfig& config, KeyEpoch* epoch_out) {
  config.validate();

  std::vector<ReplicationResult> results(config.replications);
  std::vector<std::exception_ptr> errors(config.replications);
  std::atomic<std::size_t> next{0};
  const auto work = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= config.replications) return;
      try {
        results[i] = run_replication(config, i, epoch_out);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const std::size_t workers = worker_count(config.replications);
  if (workers <= 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (std::size_t i = 0; i < workers; ++i) pool.emplace_back(work);
    for (std::thread& t : pool) t.join();
  }
  for (const std::exception_ptr& e : errors)
    if (e) std::rethrow_exception(e);

  SimulationReport report;
  report.config = config;
  report.replications = std::move(results);
  std::vector<double> joins, withdraws;
  joins.reserve(config.replications);
  withdraws.reserve(config.replications);
  for (const ReplicationResult& r : report.replications) {
    joins.push_back(r.avg_join_cost);
    withdraws.push_back(r.avg_withdraw_cost);
  }
  for (const double j : joins) report.avg_join_cost += j;
  for (const double w : withdraws) report.avg_withdraw_cost += w;
  report.avg_join_cost /= static_cast<double>(joins.size());
  report.avg_withdraw_cost /= static_cast<double>(withdraws.size());
  report.join_cost_stddev = sample_stddev(joins, report.avg_join_cost);
  report.withdraw_cost_stddev =
      sample_stddev(withdraws, report.avg_withdraw_cost);
  return report;
}

std::vector<SimulationReport> sweep(
    const std::vector<SimulationConfig>& configs) {
  std::vector<SimulationReport> out;
  out.reserve(configs.size());
  for (const SimulationConfig& c : configs) out.push_back(run(c));
  return out;
}

std::vector<SimulationConfig> reference_grid(std::uint64_t base_seed,
                                             std::size_t replications,
                                             WithdrawRule rule,
                                             double dist_lo, double dist_hi) {
  static constexpr std::size_t kN[] = {100, 100, 10000, 10000};
  static constexpr std::size_t kM[] = {100, 10000, 100, 10000};
  std::vector<SimulationConfig> grid;
  grid.reserve(16);
  for (const Policy policy :
       {Policy::alg1, Policy::alg2, Policy::alg3, Policy::alg4}) {
    for (std::size_t col = 0; col < 4; ++col) {
      SimulationConfig c;
      c.n = kN[col];
      c.m = kM[col];
      c.policy = policy;
      c.dist_lo = dist_lo;
      c.dist_hi = dist_hi;
      c.withdraw_rule = rule;
      c.replications = replications;
      c.seed = derive_seed(base_seed, grid.size());
      grid.push_back(c);
    }
  }
  return grid;
}

std::string render_cost_table(const std::vector<SimulationReport>& grid,
                              CostTable which) {
  if (grid.size() != 16)
    throw std::invalid_argument("cost table needs the 16-cell grid");
  std::string out = "policy,n100_m100,n100_m10000,n10000_m100,n10000_m10000\n";
  char buf[32];
  for (std::size_t row = 0; row < 4; ++row) {
    out += to_string(grid[row * 4].config.policy);
    for (std::size_t col = 0; col < 4; ++col) {
      const SimulationReport& cell = grid[row * 4 + col];
      const double v = which == CostTable::join ? cell.avg_join_cost
                                                : cell.avg_withdraw_cost;
      std::snprintf(buf, sizeof buf, ",%.2f", v);
      out += buf;
    }
    out += '\n';
  }
  return out;
}

namespace {

using nlohmann::ordered_json;

ordered_json report_json(const analysis::CostReport& r) {
  return ordered_json::parse(r.to_json());
}

}  // namespace

std::string SimulationReport::to_json() const {
  ordered_json doc;
  doc["config"] = {
      {"n", config.n},
      {"m", config.m},
      {"policy", to_string(config.policy)},
      {"dist", {{"lo", config.dist_lo}, {"hi", config.dist_hi}}},
      {"withdraw_rule", to_string(config.withdraw_rule)},
      {"seed", config.seed},
      {"replications", config.replications},
  };
  doc["rng"] = {
      {"generator", "mt19937_64"},
      {"stream_split",
       "replication r is seeded with splitmix64(seed + (r + 1) * "
       "0x9e3779b97f4a7c15)"},
  };
  doc["avg_join_cost"] = avg_join_cost;
  doc["avg_withdraw_cost"] = avg_withdraw_cost;
  doc["join_cost_stddev"] = join_cost_stddev;
  doc["withdraw_cost_stddev"] = withdraw_cost_stddev;
  ordered_json reps = ordered_json::array();
  for (const ReplicationResult& r : replications) {
    ordered_json rep;
    rep["index"] = r.index;
    rep["seed"] = r.seed;
    rep["avg_join_cost"] = r.avg_join_cost;
    rep["avg_withdraw_cost"] = r.avg_withdraw_cost;
    rep["join_keys"] = r.join_keys;
    rep["withdraw_keys"] = r.withdraw_keys;
    rep["final_tree"] = report_json(r.final_tree);
    reps.push_back(std::move(rep));
  }
  doc["replications"] = std::move(reps);
  if (!replications.empty())
    doc["final_tree"] = report_json(replications.front().final_tree);
  return doc.dump(2);
}

std::string SimulationReport::to_csv() const {
  std::string out = "replication,seed,avg_join_cost,avg_withdraw_cost\n";
  char buf[96];
  for (const ReplicationResult& r : replications) {
    std::snprintf(buf, sizeof buf, "%zu,%llu,%.17g,%.17g\n", r.index,
                  static_cast<unsigned long long>(r.seed), r.avg_join_cost,
                  r.avg_withdraw_cost);
    out += buf;
  }
  std::snprintf(buf, sizeof buf, "mean,,%.17g,%.17g\n", avg_join_cost,
                avg_withdraw_cost);
  out += buf;
  std::snprintf(buf, sizeof buf, "stddev,,%.17g,%.17g\n", join_cost_stddev,
                withdraw_cost_stddev);
  out += buf;
  return out;
}

}  // namespace sim
}  // namespace lkh
