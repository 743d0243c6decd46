#include <sys/wait.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "json.hpp"

namespace {

struct CliResult {
  int exit_code = -1;
  std::string output;  // stdout and stderr interleaved
};

CliResult run_cli(const std::vector<std::string>& args) {
  const char* bin = std::getenv("LKHSIM_BIN");
  REQUIRE_MESSAGE(bin != nullptr, "LKHSIM_BIN must point at the cli binary");
  std::string cmd(bin);
  for (const std::string& a : args) cmd += " '" + a + "'";
  cmd += " 2>&1";

  FILE* pipe = ::popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  std::string out;
  char buf[4096];
  std::size_t n = 0;
  while ((n = std::fread(buf, 1, sizeof buf, pipe)) > 0) out.append(buf, n);
  const int status = ::pclose(pipe);
  REQUIRE(status != -1);
  REQUIRE(WIFEXITED(status));
  return {WEXITSTATUS(status), out};
}

class TempDir {
 public:
  TempDir() {
    std::string tmpl =
        (std::filesystem::temp_directory_path() / "lkhsim_cli_XXXXXX")
            .string();
    REQUIRE(::mkdtemp(tmpl.data()) != nullptr);
    path_ = tmpl;
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  std::string file(const std::string& name) const {
    return (path_ / name).string();
  }

 private:
  std::filesystem::path path_;
};

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void spit(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  REQUIRE(out.good());
  out << content;
}

}  // namespace

TEST_CASE("usage errors exit 2") {
  CHECK(run_cli({}).exit_code == 2);
  CHECK(run_cli({"frobnicate"}).exit_code == 2);
  CHECK(run_cli({"simulate", "--bogus-flag", "1"}).exit_code == 2);
  CHECK(run_cli({"simulate", "--m", "10", "--policy", "alg1"}).exit_code == 2);

  const CliResult too_small = run_cli(
      {"simulate", "--n", "1", "--m", "10", "--policy", "alg1"});
  CHECK(too_small.exit_code == 2);
  CHECK(too_small.output.find("n must be >= 2") != std::string::npos);

  CHECK(run_cli({"simulate", "--n", "10", "--m", "10", "--policy", "alg9"})
            .exit_code == 2);
  CHECK(run_cli({"simulate", "--n", "10", "--m", "10", "--policy", "alg1",
                 "--dist", "0.9:0.1"})
            .exit_code == 2);
  CHECK(run_cli({"simulate", "--n", "10", "--m", "10", "--policy", "alg1",
                 "--dist", "nonsense"})
            .exit_code == 2);
  CHECK(run_cli({"simulate", "--n", "10", "--m", "10", "--policy", "alg1",
                 "--format", "xml"})
            .exit_code == 2);
  CHECK(run_cli({"simulate", "--n", "10", "--m", "10", "--policy", "alg1",
                 "--withdraw-rule", "round_robin"})
            .exit_code == 2);
}

TEST_CASE("huffman output validates cleanly") {
  TempDir dir;
  const std::string tree = dir.file("tree.json");

  const CliResult built =
      run_cli({"huffman", "--n", "12", "--seed", "3", "--out", tree});
  REQUIRE(built.exit_code == 0);

  const CliResult checked = run_cli({"validate", "--tree", tree});
  CHECK(checked.exit_code == 0);
  CHECK(checked.output.find("tree valid: 12 members, 23 nodes") !=
        std::string::npos);

  // Without --out the tree lands on stdout and parses as the same shape.
  const CliResult printed = run_cli({"huffman", "--n", "12", "--seed", "3"});
  REQUIRE(printed.exit_code == 0);
  CHECK(printed.output == slurp(tree));
}

TEST_CASE("huffman accepts an explicit member file") {
  TempDir dir;
  const std::string members = dir.file("members.json");
  const std::string tree = dir.file("tree.json");
  spit(members,
       R"([{"id":"A","p":0.5},{"id":"B","p":0.4},{"id":"C","p":0.1}])");

  REQUIRE(run_cli({"huffman", "--members", members, "--out", tree})
              .exit_code == 0);
  const CliResult checked = run_cli({"validate", "--tree", tree});
  CHECK(checked.exit_code == 0);
  CHECK(checked.output.find("3 members, 5 nodes") != std::string::npos);
}

TEST_CASE("huffman rejects malformed member input with exit 2") {
  TempDir dir;
  const std::string members = dir.file("members.json");

  spit(members, R"({"id":"A","p":0.5})");  // not an array
  CHECK(run_cli({"huffman", "--members", members}).exit_code == 2);

  spit(members, R"([{"id":"A"}])");  // missing p
  CHECK(run_cli({"huffman", "--members", members}).exit_code == 2);

  spit(members, R"([{"id":"A","p":0.0}])");  // p out of range
  CHECK(run_cli({"huffman", "--members", members}).exit_code == 2);

  spit(members, "not json at all");
  CHECK(run_cli({"huffman", "--members", members}).exit_code == 2);

  spit(members, R"([{"id":"A","p":0.5}])");
  CHECK(run_cli({"huffman", "--members", members, "--n", "5"}).exit_code == 2);
  CHECK(run_cli({"huffman"}).exit_code == 2);  // neither --members nor --n
  CHECK(run_cli({"huffman", "--n", "5", "--dist", "0:0.5"}).exit_code == 2);
}

TEST_CASE("validate rejects corrupted tree files") {
  TempDir dir;
  const std::string tree = dir.file("tree.json");
  REQUIRE(run_cli({"huffman", "--n", "6", "--seed", "1", "--out", tree})
              .exit_code == 0);
  const std::string good = slurp(tree);

  // The format stores leaf probabilities and derives internal weights on
  // load, so every structural corruption is a format error (exit 2).
  auto doc = nlohmann::json::parse(good);
  doc["nodes"].back()["p"] = 0.0;
  spit(tree, doc.dump());
  const CliResult bad_p = run_cli({"validate", "--tree", tree});
  CHECK(bad_p.exit_code == 2);
  CHECK(bad_p.output.find("error") != std::string::npos);

  doc = nlohmann::json::parse(good);
  doc["nodes"].erase(doc["nodes"].size() - 1);  // truncated preorder
  spit(tree, doc.dump());
  CHECK(run_cli({"validate", "--tree", tree}).exit_code == 2);

  spit(tree, "[[[");
  CHECK(run_cli({"validate", "--tree", tree}).exit_code == 2);
  CHECK(run_cli({"validate", "--tree", dir.file("missing.json")}).exit_code ==
        1);
}

TEST_CASE("simulate, audit, and rerun determinism") {
  TempDir dir;
  const std::string report = dir.file("report.json");
  const std::string epoch = dir.file("epoch.jsonl");
  const std::vector<std::string> cmd = {
      "simulate", "--n",    "40",   "--m",     "60",        "--policy",
      "alg2",     "--seed", "5",    "--reps",  "2",         "--out",
      report,     "--epoch-out",    epoch};

  REQUIRE(run_cli(cmd).exit_code == 0);
  const auto doc = nlohmann::json::parse(slurp(report));
  CHECK(doc.at("avg_join_cost").is_number());
  CHECK(doc.at("replications").size() == 2);

  const CliResult audited = run_cli({"audit", "--epoch", epoch});
  CHECK(audited.exit_code == 0);
  CHECK(audited.output.find("epoch secure: 120 steps") != std::string::npos);

  // Same flags, same seed: byte-identical artifacts.
  const std::string report_bytes = slurp(report);
  const std::string epoch_bytes = slurp(epoch);
  REQUIRE(run_cli(cmd).exit_code == 0);
  CHECK(slurp(report) == report_bytes);
  CHECK(slurp(epoch) == epoch_bytes);
}

TEST_CASE("audit flags a tampered epoch with exit 1") {
  TempDir dir;
  const std::string epoch = dir.file("epoch.jsonl");
  REQUIRE(run_cli({"simulate", "--n", "20", "--m", "30", "--policy", "alg1",
                   "--seed", "9", "--reps", "1", "--out", dir.file("r.json"),
                   "--epoch-out", epoch})
              .exit_code == 0);

  // Drop one refreshed ancestor from the first step that has two or more:
  // still loadable, but the replay audit must notice.
  std::istringstream lines(slurp(epoch));
  std::vector<std::string> out;
  std::string line;
  bool tampered = false;
  while (std::getline(lines, line)) {
    if (!tampered) {
      auto step = nlohmann::json::parse(line);
      if (step.value("type", "") != "baseline" &&
          step.contains("refreshed") && step["refreshed"].size() >= 2) {
        step["refreshed"].erase(0);
        line = step.dump();
        tampered = true;
      }
    }
    out.push_back(line);
  }
  REQUIRE(tampered);
  std::string joined;
  for (const std::string& l : out) joined += l + "\n";
  spit(epoch, joined);

  const CliResult audited = run_cli({"audit", "--epoch", epoch});
  CHECK(audited.exit_code == 1);
  CHECK(audited.output.find("diverge") != std::string::npos);

  spit(epoch, "garbage\n");
  CHECK(run_cli({"audit", "--epoch", epoch}).exit_code == 2);
  CHECK(run_cli({"audit", "--epoch", dir.file("nope.jsonl")}).exit_code == 2);
}

TEST_CASE("simulate renders csv when asked") {
  const CliResult csv =
      run_cli({"simulate", "--n", "10", "--m", "10", "--policy", "alg1",
               "--seed", "2", "--reps", "2", "--format", "csv"});
  REQUIRE(csv.exit_code == 0);
  CHECK(csv.output.rfind("replication,seed,avg_join_cost,avg_withdraw_cost",
                         0) == 0);
  CHECK(csv.output.find("\nmean,,") != std::string::npos);
}

TEST_CASE("bounds evaluates closed forms from flags") {
  const CliResult flat =
      run_cli({"bounds", "--n", "8", "--pmax", "0.9", "--pmin", "0.9"});
  REQUIRE(flat.exit_code == 0);
  CHECK(flat.output.find("entropy_lower_bound = 3\n") != std::string::npos);
  CHECK(flat.output.find("entropy_upper_bound = 3\n") != std::string::npos);

  const CliResult full =
      run_cli({"bounds", "--n", "100", "--pmax", "0.9", "--pmin", "0.1",
               "--entropy", "5.5", "--pg", "50"});
  REQUIRE(full.exit_code == 0);
  CHECK(full.output.find("scaled_entropy_l_bound = ") != std::string::npos);
  CHECK(full.output.find("alg1_l_bound = ") != std::string::npos);
  CHECK(full.output.find("alg3_l_bound = ") != std::string::npos);
  CHECK(full.output.find("pg_entropy_inequality = holds") !=
        std::string::npos);

  // A group weight inside [n*pmin, n*pmax] but at most pmax + 2 makes the
  // deeper-stop bound inapplicable rather than an error.
  const CliResult shallow =
      run_cli({"bounds", "--n", "100", "--pmax", "0.9", "--pmin", "0.01",
               "--entropy", "2.0", "--pg", "2.0"});
  REQUIRE(shallow.exit_code == 0);
  CHECK(shallow.output.find("alg3_l_bound = inapplicable") !=
        std::string::npos);

  CHECK(run_cli({"bounds", "--n", "8", "--pmax", "0.9"}).exit_code == 2);
  CHECK(run_cli({"bounds", "--n", "100", "--pmax", "0.9", "--pmin", "0.1",
                 "--entropy", "5.5", "--pg", "95"})
            .exit_code == 2);  // outside [n*pmin, n*pmax]
  CHECK(run_cli({"bounds", "--n", "0", "--pmax", "0.9", "--pmin", "0.1"})
            .exit_code == 2);
}

TEST_CASE("bounds reads a cost report produced by simulate") {
  TempDir dir;
  const std::string report = dir.file("report.json");
  REQUIRE(run_cli({"simulate", "--n", "60", "--m", "40", "--policy", "alg3",
                   "--seed", "4", "--reps", "1", "--out", report})
              .exit_code == 0);

  const auto doc = nlohmann::json::parse(slurp(report));
  const std::string tree_report = dir.file("tree_report.json");
  spit(tree_report, doc.at("final_tree").dump());

  const CliResult bounds = run_cli({"bounds", "--report", tree_report});
  REQUIRE(bounds.exit_code == 0);
  CHECK(bounds.output.find("entropy_lower_bound = ") != std::string::npos);
  CHECK(bounds.output.find("scaled_entropy_l_bound = ") != std::string::npos);
  CHECK(bounds.output.find("pg_entropy_inequality = holds") !=
        std::string::npos);

  spit(tree_report, "{}");
  CHECK(run_cli({"bounds", "--report", tree_report}).exit_code == 2);
}

TEST_CASE("sweep writes the grid tables") {
  TempDir dir;
  const CliResult swept = run_cli(
      {"sweep", "--reps", "1", "--seed", "3", "--out-dir", dir.file("grid")});
  REQUIRE(swept.exit_code == 0);
  CHECK(swept.output.find("average join cost") != std::string::npos);
  CHECK(swept.output.find("average withdrawal cost") != std::string::npos);

  const std::string join_csv = slurp(dir.file("grid/join_costs.csv"));
  CHECK(join_csv.rfind("policy,n100_m100,n100_m10000,n10000_m100,"
                       "n10000_m10000\n",
                       0) == 0);
  CHECK(slurp(dir.file("grid/withdraw_costs.csv")).find("alg4,") !=
        std::string::npos);
  const auto reports =
      nlohmann::json::parse(slurp(dir.file("grid/reports.json")));
  REQUIRE(reports.is_array());
  CHECK(reports.size() == 16);
  CHECK(reports[0].at("config").at("policy") == "alg1");
  CHECK(reports[15].at("config").at("policy") == "alg4");
}
