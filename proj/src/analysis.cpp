#include "lkh/analysis.hpp"

#include <cmath>
#include <cstdio>
#include <queue>
#include <stdexcept>
#include <tuple>

#include "json.hpp"
#include "lkh/errors.hpp"

namespace lkh {
namespace analysis {

double BoundConstants::outer_anchor_weight(double p_max) const {
  return ((2.0 + log2_alpha) * p_max + 4.0 + log2_alpha) /
         (2.0 * (1.0 - log2_alpha));
}

double BoundConstants::inner_anchor_weight(double p_min) const {
  return std::log2(std::exp(1.0)) / (2.0 * log2_alpha) * p_min + 1.0;
}

const BoundConstants& BoundConstants::values() {
  static const BoundConstants c = [] {
    BoundConstants v{};
    v.alpha = (1.0 + std::sqrt(5.0)) / 2.0;
    v.log2_alpha = std::log2(v.alpha);
    const double la = v.log2_alpha;
    v.k1 = 1.0 / la;
    v.k2 = v.k1 * std::log2(std::sqrt(5.0) / v.alpha);
    v.t_m = (2.0 + la) / (2.0 * (1.0 - la));
    v.k3 = -std::log2(3.0 * la / (2.0 * (1.0 - la))) +
           v.k1 * (std::log2(3.0 / (1.0 - la)) +
                   std::log2(std::sqrt(5.0) / v.alpha));
    const double log2e = std::log2(std::exp(1.0));
    v.k4 = -(v.k1 - 1.0) * std::log2(v.k1 - 1.0) +
           v.k1 * std::log2(2.0 * std::sqrt(5.0) * std::exp(1.0) /
                            (v.alpha * log2e));
    return v;
  }();
  return c;
}

CostReport withdrawal_costs(const KeyTree& tree) {
  CostReport r;
  if (tree.empty()) return r;
  r.n = tree.member_count();
  r.p_max = 0.0;
  r.p_min = 2.0;
  tree.for_each_leaf([&](NodeId id, std::size_t d) {
    const double p = tree.member_at(id).p;
    r.p_g += p;
    r.total_cost += p * static_cast<double>(d);
    r.p_max = std::max(r.p_max, p);
    r.p_min = std::min(r.p_min, p);
  });
  r.normalized_cost = r.total_cost / r.p_g;
  double h = 0.0;
  tree.for_each_leaf([&](NodeId id, std::size_t) {
    const double q = tree.member_at(id).p / r.p_g;
    if (q > 0.0) h -= q * std::log2(q);
  });
  r.entropy = h;
  return r;
}

std::pair<double, double> entropy_bounds(std::size_t n, double p_max,
                                         double p_min) {
  if (n == 0) throw std::invalid_argument("entropy_bounds: n must be >= 1");
  if (!(p_min > 0.0) || p_min > p_max || p_max > 1.0)
    throw std::invalid_argument(
        "entropy_bounds: need 0 < p_min <= p_max <= 1");
  const double k = p_min / p_max;
  const double log2n = std::log2(static_cast<double>(n));
  return {k * log2n, log2n / k};
}

KeyTree build_huffman(std::vector<Member> members) {
  detail::validate_member_set(members);
  TreeBuilder builder;
  // Min-heap on (weight, creation order): equal weights merge the
  // earliest-created subtrees first.
  using Item = std::tuple<double, std::uint64_t, NodeId>;
  std::priority_queue<Item, std::vector<Item>, std::greater<>> heap;
  std::uint64_t seq = 0;
  const auto push = [&](NodeId handle, double w) {
    heap.emplace(w, seq++, handle);
  };
  for (const Member& m : members) push(builder.add_leaf(m), m.p);
  while (heap.size() > 1) {
    const auto [wa, sa, a] = heap.top();
    heap.pop();
    const auto [wb, sb, b] = heap.top();
    heap.pop();
    push(builder.join(a, b), wa + wb);
  }
  return builder.finish(std::get<2>(heap.top()));
}

double scaled_entropy_l_bound(const CostReport& report) {
  const BoundConstants& c = BoundConstants::values();
  return c.k1 * report.entropy + c.k2;
}

namespace {

// log2 that reports an out-of-domain argument as "bound inapplicable".
std::optional<double> checked_log2(double x) {
  if (!(x > 0.0)) return std::nullopt;
  return std::log2(x);
}

}  // namespace

std::optional<double> alg1_depth_bound(double p_m, double p_g, double p_max) {
  const BoundConstants& c = BoundConstants::values();
  const auto lg_pg = checked_log2(p_g);
  const auto lg_pm = checked_log2(p_m);
  const auto lg_pmax = checked_log2(p_max);
  const auto lg_slack = p_g > 0.0 ? checked_log2(1.0 - p_max / p_g)
                                  : std::nullopt;
  if (!lg_pg || !lg_pm || !lg_pmax || !lg_slack) return std::nullopt;
  return *lg_pg - c.k1 * *lg_pm + (c.k1 - 1.0) * *lg_pmax + *lg_slack + c.k3;
}

std::optional<double> alg1_l_bound(const CostReport& report) {
  const BoundConstants& c = BoundConstants::values();
  if (!(report.p_min > 0.0)) return std::nullopt;
  const auto lg_ratio = checked_log2(report.p_max / report.p_min);
  const auto lg_slack =
      report.p_g > 0.0 ? checked_log2(1.0 - report.p_max / report.p_g)
                       : std::nullopt;
  if (!lg_ratio || !lg_slack) return std::nullopt;
  return report.entropy + (c.k1 - 1.0) * *lg_ratio + *lg_slack + c.k3;
}

std::optional<double> alg3_l_bound(const CostReport& report) {
  const BoundConstants& c = BoundConstants::values();
  if (!(report.p_min > 0.0)) return std::nullopt;
  const auto lg_pmax = checked_log2(report.p_max);
  const auto lg_span = checked_log2(3.0 * report.p_max + 5.0);
  const auto lg_pmin = checked_log2(report.p_min);
  const auto lg_slack =
      report.p_g > 0.0
          ? checked_log2(1.0 - (report.p_max + 2.0) / report.p_g)
          : std::nullopt;
  if (!lg_pmax || !lg_span || !lg_pmin || !lg_slack) return std::nullopt;
  return report.entropy + *lg_pmax + (c.k1 - 1.0) * *lg_span -
         c.k1 * *lg_pmin + (report.p_max + 4.0) / report.p_min + *lg_slack +
         c.k4;
}

bool pg_entropy_inequality(const CostReport& report) {
  if (!(report.p_g > 0.0) || !(report.p_min > 0.0))
    throw std::invalid_argument("pg_entropy_inequality: empty report");
  return -std::log2(report.p_g) <=
         std::log2(1.0 / report.p_min) - report.entropy + 1e-9;
}

namespace {

using nlohmann::ordered_json;

// Full round-trip precision for report fields.
std::string fmt_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

std::string CostReport::to_json() const {
  ordered_json doc;
  doc["n"] = n;
  doc["P_G"] = p_g;
  doc["P_max"] = p_max;
  doc["P_min"] = p_min;
  doc["L"] = total_cost;
  doc["l"] = normalized_cost;
  doc["entropy"] = entropy;
  return doc.dump(2);
}

CostReport CostReport::from_json(std::string_view text) {
  ordered_json doc;
  try {
    doc = ordered_json::parse(text);
  } catch (const ordered_json::exception& e) {
    throw FormatError(std::string("cost report parse error: ") + e.what());
  }
  CostReport r;
  try {
    r.n = doc.at("n").get<std::size_t>();
    r.p_g = doc.at("P_G").get<double>();
    r.p_max = doc.at("P_max").get<double>();
    r.p_min = doc.at("P_min").get<double>();
    r.total_cost = doc.at("L").get<double>();
    r.normalized_cost = doc.at("l").get<double>();
    r.entropy = doc.at("entropy").get<double>();
  } catch (const ordered_json::exception& e) {
    throw FormatError(std::string("cost report missing field: ") + e.what());
  }
  return r;
}

std::string CostReport::csv_header() {
  return "n,P_G,P_max,P_min,L,l,entropy";
}

std::string CostReport::to_csv_row() const {
  std::string row = std::to_string(n);
  for (const double v :
       {p_g, p_max, p_min, total_cost, normalized_cost, entropy}) {
    row += ',';
    row += fmt_double(v);
  }
  return row;
}

}  // namespace analysis
}  // namespace lkh
