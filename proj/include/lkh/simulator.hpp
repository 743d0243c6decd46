#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "lkh/analysis.hpp"
#include "lkh/policies.hpp"
#include "lkh/rekey.hpp"

namespace lkh {
namespace sim {

// How the withdrawing member is picked each round: weighted draws members
// in proportion to their probability (heavier members leave more often),
// uniform ignores the probabilities.
enum class WithdrawRule { weighted, uniform };

std::string_view to_string(WithdrawRule rule);
std::optional<WithdrawRule> withdraw_rule_from_string(std::string_view name);

struct SimulationConfig {
  std::size_t n = 100;          // members, held constant
  std::size_t m = 1000;         // withdraw+join rounds
  Policy policy = Policy::alg1;
  double dist_lo = 0.1;         // member probabilities ~ uniform [lo, hi)
  double dist_hi = 0.9;
  WithdrawRule withdraw_rule = WithdrawRule::weighted;
  std::uint64_t seed = 0;
  std::size_t replications = 20;

  void validate() const;  // throws std::invalid_argument
};

struct ReplicationResult {
  std::size_t index = 0;
  std::uint64_t seed = 0;
  double avg_join_cost = 0.0;
  double avg_withdraw_cost = 0.0;
  std::uint64_t join_keys = 0;      // total keys delivered on joins
  std::uint64_t withdraw_keys = 0;  // total keys reissued on withdrawals
  analysis::CostReport final_tree;
};

struct SimulationReport {
  SimulationConfig config;
  double avg_join_cost = 0.0;       // mean of replication means
  double avg_withdraw_cost = 0.0;
  double join_cost_stddev = 0.0;    // sample stddev across replications
  double withdraw_cost_stddev = 0.0;
  std::vector<ReplicationResult> replications;

  std::string to_json() const;
  std::string to_csv() const;
};

// One experiment: build a huffman tree over n members with probabilities
// drawn uniform [dist_lo, dist_hi), then run m rounds of one withdrawal
// followed by one join placed by the policy. Join cost counts the keys
// delivered to the joiner: the refreshed chain above it plus its fresh
// leaf key (insertion depth + 2). Withdrawal cost counts the keys
// reissued to survivors: the refreshed chain minus the dissolved parent,
// whose key leaves with the member (leaf depth - 1). A rekey epoch
// recorded alongside the run re-derives both averages and must agree
// exactly.
//
// Replication r uses the seed derive_seed(config.seed, r); replications run
// in parallel (LKH_SIM_THREADS caps the workers) and aggregate in index
// order, so results are byte-identical regardless of thread count. When
// epoch_out is non-null it receives replication 0's epoch.
SimulationReport run(const SimulationConfig& config,
                     KeyEpoch* epoch_out = nullptr);

// Runs each config in sequence.
std::vector<SimulationReport> sweep(
    const std::vector<SimulationConfig>& configs);

// The 16-cell reference grid: policies alg1..alg4 crossed with
// (n, m) in {100, 10000} x {100, 10000}. Cell index = policy * 4 + column,
// columns ordered (100,100), (100,10000), (10000,100), (10000,10000); cell
// i runs with seed derive_seed(base_seed, i).
std::vector<SimulationConfig> reference_grid(std::uint64_t base_seed,
                                             std::size_t replications,
                                             WithdrawRule rule,
                                             double dist_lo, double dist_hi);

// Renders 16 grid reports as a policy-by-cell cost table, two decimals.
// which selects the join or withdrawal averages.
enum class CostTable { join, withdraw };
std::string render_cost_table(const std::vector<SimulationReport>& grid,
                              CostTable which);

}  // namespace sim
}  // namespace lkh
