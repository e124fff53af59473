#include <algorithm>
#include <filesystem>

#include <spdlog/spdlog.h>

#include "cyclic/experiments/csv.hpp"
#include "cyclic/experiments/experiments.hpp"

namespace cyclic {

using nlohmann::json;

namespace {

QTables random_q(const FiniteCyclicMdp& mdp, double scale, Rng& rng) {
  std::uniform_real_distribution<double> u(-scale, scale);
  QTables q = zero_q_tables(mdp);
  for (auto& t : q)
    for (Eigen::Index i = 0; i < t.size(); ++i) t.data()[i] = u(rng);
  return q;
}

PolicyTables random_policy(const FiniteCyclicMdp& mdp, Rng& rng) {
  std::uniform_real_distribution<double> u(0.05, 1.0);
  PolicyTables p = uniform_policy_tables(mdp);
  for (auto& t : p)
    for (Eigen::Index s = 0; s < t.rows(); ++s) {
      for (Eigen::Index a = 0; a < t.cols(); ++a) t(s, a) = u(rng);
      t.row(s) /= t.row(s).sum();
    }
  return p;
}

QTables iterate(const FiniteCyclicMdp& mdp, QTables q, int steps, const UpdateSet& U, const PolicyTables& fixed,
                const BellmanOptions& options) {
  for (int i = 0; i < steps; ++i) q = apply_bellman_operator_tabular(mdp, q, U, fixed, options);
  return q;
}

struct Tally {
  ContractionCheck check;

  Tally(std::string name, std::string update_set, double factor) {
    check.name = std::move(name);
    check.update_set = std::move(update_set);
    check.factor = factor;
    check.passed = true;
  }

  // Records ||out|| <= factor * ||in|| + tol.
  void observe(double out, double in, double tol) {
    ++check.pairs;
    const double excess = out - check.factor * in;
    check.worst_excess = std::max(check.worst_excess, excess);
    if (in > 0.0) check.worst_ratio = std::max(check.worst_ratio, out / in);
    if (excess > tol) check.passed = false;
  }
};

}  // namespace

bool ContractionReport::all_passed() const {
  return !checks.empty() && std::all_of(checks.begin(), checks.end(), [](const auto& c) { return c.passed; });
}

const ContractionCheck& ContractionReport::check(const std::string& name, const std::string& update_set) const {
  for (const auto& c : checks)
    if (c.name == name && c.update_set == update_set) return c;
  throw Error("contraction report has no check '" + name + "' for update set " + update_set);
}

FiniteCyclicMdp contraction_test_mdp(std::uint64_t seed, std::vector<double> discounts) {
  FiniteMdpShape shape;
  shape.horizons = {2, 1, 3};
  shape.actions = {2, 3, 2};
  shape.discounts = std::move(discounts);
  shape.width = 3;
  Rng rng = make_rng({seed, 0xC0417AC7});
  return random_finite_mdp(shape, rng);
}

ContractionReport run_contraction_suite(const ExperimentConfig& config) {
  config.validate();
  const auto& cc = config.contraction;
  const BellmanOptions options{cc.apply_stage_discount};
  const std::vector<std::pair<std::string, std::vector<int>>> sets{{"all", {0, 1, 2}}, {"1,3", {0, 2}}};

  ContractionReport report;
  for (const auto& [label, members] : sets) {
    Tally fixed_point("fixed-point", label, 0.0);
    Tally nonexpansive("non-expansive", label, 1.0);
    Tally h_step("h-step-contraction", label, 0.0);
    Tally reset("cycle-reset", label, 0.0);
    for (int p = 0; p < cc.pairs; ++p) {
      const std::uint64_t mdp_seed = cc.seed * 1000003ULL + static_cast<std::uint64_t>(p);
      const auto mdp = contraction_test_mdp(mdp_seed);
      const auto U = UpdateSet::of(mdp.num_stages(), members);
      Rng rng = make_rng({cc.seed, static_cast<std::uint64_t>(p), 0x9A12});
      const auto fixed = random_policy(mdp, rng);
      // Alternate between large and nearly equal pairs.
      const double scale = p % 2 == 0 ? 10.0 : 1e-3;
      const auto q1 = random_q(mdp, 10.0, rng);
      QTables q2 = q1;
      const auto noise = random_q(mdp, scale, rng);
      for (std::size_t k = 0; k < q2.size(); ++k) q2[k] += noise[k];
      const double d_in = sup_distance(q1, q2);

      const auto star = solve_fixed_point_tabular(mdp, U, fixed);
      fixed_point.observe(sup_distance(apply_bellman_operator_tabular(mdp, star, U, fixed, options), star), 0.0,
                          cc.tolerance);

      nonexpansive.observe(sup_distance(apply_bellman_operator_tabular(mdp, q1, U, fixed, options),
                                        apply_bellman_operator_tabular(mdp, q2, U, fixed, options)),
                           d_in, cc.tolerance);

      const int H = mdp.total_horizon();
      h_step.check.factor = mdp.cycle_discount();
      h_step.observe(sup_distance(iterate(mdp, q1, H, U, fixed, options), iterate(mdp, q2, H, U, fixed, options)),
                     d_in, cc.tolerance);

      const auto cut = contraction_test_mdp(mdp_seed, {0.9, 0.0, 0.95});
      reset.observe(sup_distance(iterate(cut, q1, H, U, fixed, options), iterate(cut, q2, H, U, fixed, options)), d_in,
                    cc.tolerance);
    }
    for (auto* t : {&fixed_point, &nonexpansive, &h_step, &reset}) {
      report.checks.push_back(t->check);
      spdlog::info("contraction {} U={}: {} (worst ratio {:.6g}, factor {:.6g})", t->check.name, label,
                   t->check.passed ? "pass" : "FAIL", t->check.worst_ratio, t->check.factor);
    }
  }
  return report;
}

std::vector<std::string> write_contraction_report(const ContractionReport& report, const ExperimentConfig& config) {
  const json header{{"config", experiment_config_to_json(config)}};
  CsvTable table({"check", "update_set", "passed", "factor", "worst_ratio", "worst_excess", "pairs"});
  for (const auto& c : report.checks)
    table.row().add(c.name).add(c.update_set).add(c.passed).add(c.factor).add(c.worst_ratio).add(c.worst_excess).add(c.pairs);
  const auto path = (std::filesystem::path(config.output_dir) / "contraction.csv").string();
  table.write(path, header);
  return {path};
}

}  // namespace cyclic
