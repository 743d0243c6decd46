// lkhsim: logical key hierarchy churn simulator and analysis toolbox.
//
// Exit codes: 0 success, 1 runtime failure or invariant/security violation,
// 2 usage or malformed input.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"
#include "lkh/analysis.hpp"
#include "lkh/errors.hpp"
#include "lkh/policies.hpp"
#include "lkh/rekey.hpp"
#include "lkh/rng.hpp"
#include "lkh/simulator.hpp"

namespace {

constexpr int kOk = 0;
constexpr int kFailure = 1;
constexpr int kUsage = 2;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out << content;
  if (!out) throw std::runtime_error("failed writing " + path);
}

lkh::Policy parse_policy(const std::string& name) {
  const auto p = lkh::policy_from_string(name);
  if (!p) throw UsageError("unknown policy: " + name);
  return *p;
}

lkh::sim::WithdrawRule parse_rule(const std::string& name) {
  const auto r = lkh::sim::withdraw_rule_from_string(name);
  if (!r) throw UsageError("unknown withdraw rule: " + name);
  return *r;
}

std::pair<double, double> parse_dist(const std::string& spec) {
  const auto colon = spec.find(':');
  if (colon == std::string::npos)
    throw UsageError("--dist expects lo:hi, e.g. 0.1:0.9");
  try {
    const double lo = std::stod(spec.substr(0, colon));
    const double hi = std::stod(spec.substr(colon + 1));
    return {lo, hi};
  } catch (const std::exception&) {
    throw UsageError("--dist expects numeric lo:hi");
  }
}

// ---- simulate ----

struct SimulateArgs {
  lkh::sim::SimulationConfig config;
  std::string policy = "alg1";
  std::string rule = "weighted";
  std::string dist = "0.1:0.9";
  std::string out;
  std::string epoch_out;
  std::string format = "json";
};

int run_simulate(const SimulateArgs& args) {
  lkh::sim::SimulationConfig config = args.config;
  config.policy = parse_policy(args.policy);
  config.withdraw_rule = parse_rule(args.rule);
  std::tie(config.dist_lo, config.dist_hi) = parse_dist(args.dist);
  if (args.format != "json" && args.format != "csv")
    throw UsageError("--format must be json or csv");
  try {
    config.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }

  lkh::KeyEpoch epoch;
  lkh::sim::SimulationReport report =
      lkh::sim::run(config, args.epoch_out.empty() ? nullptr : &epoch);
  const std::string rendered =
      args.format == "json" ? report.to_json() + "\n" : report.to_csv();
  if (args.out.empty())
    std::cout << rendered;
  else
    write_file(args.out, rendered);
  if (!args.epoch_out.empty()) {
    std::ofstream out(args.epoch_out, std::ios::binary);
    if (!out)
      throw std::runtime_error("cannot open " + args.epoch_out +
                               " for writing");
    epoch.write_jsonl(out);
  }
  return kOk;
}

// ---- sweep ----

struct SweepArgs {
  std::uint64_t seed = 0;
  std::size_t replications = 20;
  std::string rule = "weighted";
  std::string dist = "0.1:0.9";
  std::string out_dir;
};

int run_sweep(const SweepArgs& args) {
  const auto [lo, hi] = parse_dist(args.dist);
  if (args.replications == 0) throw UsageError("--reps must be >= 1");
  const auto grid = lkh::sim::reference_grid(args.seed, args.replications,
                                             parse_rule(args.rule), lo, hi);
  const auto reports = lkh::sim::sweep(grid);
  const std::string join_table =
      lkh::sim::render_cost_table(reports, lkh::sim::CostTable::join);
  const std::string withdraw_table =
      lkh::sim::render_cost_table(reports, lkh::sim::CostTable::withdraw);

  std::cout << "average join cost\n" << join_table;
  std::cout << "\naverage withdrawal cost\n" << withdraw_table;

  if (!args.out_dir.empty()) {
    std::filesystem::create_directories(args.out_dir);
    const std::filesystem::path dir(args.out_dir);
    write_file((dir / "join_costs.csv").string(), join_table);
    write_file((dir / "withdraw_costs.csv").string(), withdraw_table);
    std::string all = "[\n";
    for (std::size_t i = 0; i < reports.size(); ++i) {
      all += reports[i].to_json();
      if (i + 1 < reports.size()) all += ",";
      all += "\n";
    }
    all += "]\n";
    write_file((dir / "reports.json").string(), all);
  }
  return kOk;
}

// ---- huffman ----

struct HuffmanArgs {
  std::size_t n = 0;
  std::uint64_t seed = 0;
  std::string dist = "0.1:0.9";
  std::string members_path;
  std::string out;
};

int run_huffman(const HuffmanArgs& args) {
  std::vector<lkh::Member> members;
  if (!args.members_path.empty()) {
    if (args.n != 0)
      throw UsageError("--members and --n are mutually exclusive");
    nlohmann::json doc;
    try {
      doc = nlohmann::json::parse(read_file(args.members_path));
    } catch (const nlohmann::json::exception& e) {
      throw lkh::FormatError(std::string("member list parse error: ") +
                             e.what());
    }
    if (!doc.is_array())
      throw lkh::FormatError("member list must be a JSON array");
    for (const auto& e : doc) {
      if (!e.is_object() || !e.contains("id") || !e["id"].is_string() ||
          !e.contains("p") || !e["p"].is_number())
        throw lkh::FormatError(
            "member entries need a string 'id' and numeric 'p'");
      members.push_back({e["id"].get<std::string>(), e["p"].get<double>()});
    }
  } else {
    if (args.n == 0) throw UsageError("pass --n or --members");
    lkh::Rng rng(args.seed);
    const auto [lo, hi] = parse_dist(args.dist);
    if (!(lo > 0.0) || !(lo <= hi) || hi > 1.0)
      throw UsageError("--dist needs 0 < lo <= hi <= 1");
    for (std::size_t i = 0; i < args.n; ++i)
      members.push_back({"m" + std::to_string(i), rng.uniform(lo, hi)});
  }
  lkh::KeyTree tree;
  try {
    tree = lkh::analysis::build_huffman(std::move(members));
  } catch (const std::invalid_argument& e) {
    if (!args.members_path.empty())
      throw lkh::FormatError(e.what());  // bad member file content
    throw;
  }
  const std::string rendered = tree.to_json() + "\n";
  if (args.out.empty())
    std::cout << rendered;
  else
    write_file(args.out, rendered);
  return kOk;
}

// ---- bounds ----

struct BoundsArgs {
  std::string report_path;
  std::size_t n = 0;
  double p_max = 0.0;
  double p_min = 0.0;
  double entropy = -1.0;
  double p_g = -1.0;
  double l = -1.0;
  bool have_n = false, have_pmax = false, have_pmin = false;
};

void print_bound(const char* name, const std::optional<double>& v,
                 const char* requirement) {
  if (v)
    std::printf("%s = %.12g\n", name, *v);
  else
    std::printf("%s = inapplicable (requires %s)\n", name, requirement);
}

int run_bounds(const BoundsArgs& args) {
  lkh::analysis::CostReport report;
  bool have_entropy = false;
  bool have_pg = false;
  bool have_l = false;
  if (!args.report_path.empty()) {
    report = lkh::analysis::CostReport::from_json(read_file(args.report_path));
    have_entropy = have_pg = have_l = true;
  } else {
    if (!args.have_n || !args.have_pmax || !args.have_pmin)
      throw UsageError("pass --report, or --n with --pmax and --pmin");
    report.n = args.n;
    report.p_max = args.p_max;
    report.p_min = args.p_min;
    if (args.entropy >= 0.0) {
      report.entropy = args.entropy;
      have_entropy = true;
    }
    if (args.p_g >= 0.0) {
      report.p_g = args.p_g;
      have_pg = true;
    }
    if (args.l >= 0.0) {
      report.normalized_cost = args.l;
      have_l = true;
    }
  }
  if (report.n == 0) throw UsageError("n must be >= 1");
  if (!(report.p_min > 0.0) || report.p_min > report.p_max ||
      report.p_max > 1.0)
    throw UsageError("need 0 < P_min <= P_max <= 1");
  if (have_pg) {
    const double n = static_cast<double>(report.n);
    if (report.p_g < n * report.p_min - 1e-9 ||
        report.p_g > n * report.p_max + 1e-9)
      throw UsageError("P_G must lie within [n*P_min, n*P_max]");
  }

  const auto [h_lo, h_hi] =
      lkh::analysis::entropy_bounds(report.n, report.p_max, report.p_min);
  std::printf("entropy_lower_bound = %.12g\n", h_lo);
  std::printf("entropy_upper_bound = %.12g\n", h_hi);
  if (have_entropy) {
    std::printf("scaled_entropy_l_bound = %.12g\n",
                lkh::analysis::scaled_entropy_l_bound(report));
    if (have_pg) {
      print_bound("alg1_l_bound", lkh::analysis::alg1_l_bound(report),
                  "P_G > P_max");
      print_bound("alg3_l_bound", lkh::analysis::alg3_l_bound(report),
                  "P_G > P_max + 2");
      std::printf("pg_entropy_inequality = %s\n",
                  lkh::analysis::pg_entropy_inequality(report) ? "holds"
                                                               : "violated");
    }
  }
  if (have_l) std::printf("l = %.12g\n", report.normalized_cost);
  return kOk;
}

// ---- audit ----

int run_audit(const std::string& epoch_path) {
  std::ifstream in(epoch_path, std::ios::binary);
  if (!in) throw lkh::FormatError("cannot open " + epoch_path);
  const lkh::KeyEpoch epoch = lkh::KeyEpoch::read_jsonl(in);
  const std::vector<std::string> violations = epoch.audit_all();
  for (const std::string& v : violations) std::cout << v << "\n";
  if (!violations.empty()) return kFailure;
  std::cout << "epoch secure: " << epoch.step_count() << " steps, "
            << epoch.join_events() << " joins, " << epoch.withdraw_events()
            << " withdrawals\n";
  return kOk;
}

// ---- validate ----

int run_validate(const std::string& tree_path) {
  const lkh::KeyTree tree = lkh::KeyTree::from_json(read_file(tree_path));
  const std::vector<lkh::Violation> violations = tree.validate();
  for (const lkh::Violation& v : violations) {
    if (v.node == lkh::kNoNode)
      std::cout << "tree: " << v.message << "\n";
    else
      std::cout << "node " << v.node << ": " << v.message << "\n";
  }
  if (!violations.empty()) return kFailure;
  std::cout << "tree valid: " << tree.member_count() << " members, "
            << tree.node_count() << " nodes\n";
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"logical key hierarchy churn simulator"};
  app.require_subcommand(1);

  SimulateArgs sim_args;
  CLI::App* sim = app.add_subcommand(
      "simulate", "run a churn experiment and report average rekey costs");
  sim->add_option("--n", sim_args.config.n, "group size (constant)")
      ->required();
  sim->add_option("--m", sim_args.config.m, "withdraw+join rounds")
      ->required();
  sim->add_option("--policy", sim_args.policy,
                  "insertion policy: alg1|alg2|alg3|alg4")
      ->required();
  sim->add_option("--seed", sim_args.config.seed, "base seed (default 0)");
  sim->add_option("--reps", sim_args.config.replications,
                  "replications (default 20)");
  sim->add_option("--dist", sim_args.dist,
                  "member probability range lo:hi (default 0.1:0.9)");
  sim->add_option("--withdraw-rule", sim_args.rule,
                  "weighted|uniform (default weighted)");
  sim->add_option("--out", sim_args.out, "write the report here");
  sim->add_option("--epoch-out", sim_args.epoch_out,
                  "write replication 0's rekey epoch (JSON lines)");
  sim->add_option("--format", sim_args.format, "json|csv (default json)");

  SweepArgs sweep_args;
  CLI::App* sweep = app.add_subcommand(
      "sweep", "run the 16-cell reference grid and render cost tables");
  sweep->add_option("--seed", sweep_args.seed, "base seed (default 0)");
  sweep->add_option("--reps", sweep_args.replications,
                    "replications per cell (default 20)");
  sweep->add_option("--withdraw-rule", sweep_args.rule,
                    "weighted|uniform (default weighted)");
  sweep->add_option("--dist", sweep_args.dist,
                    "member probability range lo:hi (default 0.1:0.9)");
  sweep->add_option("--out-dir", sweep_args.out_dir,
                    "write join_costs.csv, withdraw_costs.csv, reports.json");

  HuffmanArgs huff_args;
  CLI::App* huff = app.add_subcommand(
      "huffman", "build a minimum-cost key tree and emit it as JSON");
  huff->add_option("--n", huff_args.n, "generate n random members");
  huff->add_option("--seed", huff_args.seed, "seed for --n (default 0)");
  huff->add_option("--dist", huff_args.dist,
                   "probability range for --n (default 0.1:0.9)");
  huff->add_option("--members", huff_args.members_path,
                   "JSON array of {id, p} members");
  huff->add_option("--out", huff_args.out, "write the tree here");

  BoundsArgs bounds_args;
  CLI::App* bounds = app.add_subcommand(
      "bounds", "evaluate entropy and cost bounds for a tree report");
  bounds->add_option("--report", bounds_args.report_path,
                     "cost report JSON (as produced by simulate)");
  bounds->add_option("--n", bounds_args.n, "member count");
  bounds->add_option("--pmax", bounds_args.p_max, "largest member probability");
  bounds->add_option("--pmin", bounds_args.p_min,
                     "smallest member probability");
  bounds->add_option("--entropy", bounds_args.entropy,
                     "entropy of the member distribution");
  bounds->add_option("--pg", bounds_args.p_g, "total group weight");
  bounds->add_option("--l", bounds_args.l, "measured normalized cost");

  std::string audit_path;
  CLI::App* audit = app.add_subcommand(
      "audit", "check forward/backward security of a rekey epoch");
  audit->add_option("--epoch", audit_path, "epoch JSONL file")->required();

  std::string validate_path;
  CLI::App* validate = app.add_subcommand(
      "validate", "check a key tree file against the structural invariants");
  validate->add_option("--tree", validate_path, "tree JSON file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n";
    return kUsage;
  }

  bounds_args.have_n = bounds->count("--n") > 0;
  bounds_args.have_pmax = bounds->count("--pmax") > 0;
  bounds_args.have_pmin = bounds->count("--pmin") > 0;

  try {
    if (sim->parsed()) return run_simulate(sim_args);
    if (sweep->parsed()) return run_sweep(sweep_args);
    if (huff->parsed()) return run_huffman(huff_args);
    if (bounds->parsed()) return run_bounds(bounds_args);
    if (audit->parsed()) return run_audit(audit_path);
    if (validate->parsed()) return run_validate(validate_path);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const lkh::FormatError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kFailure;
  }
  return kUsage;
}
