#include <cmath>
#include <filesystem>

#include <spdlog/spdlog.h>

#include "cyclic/core/rollout.hpp"
#include "cyclic/experiments/csv.hpp"
#include "cyclic/experiments/experiments.hpp"
#include "cyclic/experiments/trials.hpp"
#include "cyclic/fqi/cyclefqi.hpp"
#include "cyclic/fqi/flattened.hpp"

namespace cyclic {

using nlohmann::json;

namespace {

std::string out_path(const ExperimentConfig& config, const std::string& file) {
  return (std::filesystem::path(config.output_dir) / file).string();
}

// Table rows of one benchmark cell across update sets, computed on one shared dataset.
struct CellResult {
  std::vector<BenchmarkTrial> per_update_set;
};

BenchmarkRow summarize(const std::vector<double>& values, int failures) {
  BenchmarkRow row;
  row.trials = static_cast<int>(values.size());
  row.failures = failures;
  if (values.empty()) {
    row.mean = std::nan("");
    row.std_error = std::nan("");
    return row;
  }
  double sum = 0.0;
  for (double v : values) sum += v;
  row.mean = sum / static_cast<double>(values.size());
  if (values.size() < 2) {
    row.std_error = std::nan("");
    row.std_error_available = false;
    return row;
  }
  double ss = 0.0;
  for (double v : values) ss += (v - row.mean) * (v - row.mean);
  row.std_error = std::sqrt(ss / static_cast<double>(values.size() - 1) / static_cast<double>(values.size()));
  row.std_error_available = true;
  return row;
}

}  // namespace

double evaluate_total_reward(const CyclicMdpSpec& spec, const PolicyVector& policy, int days, int episodes,
                             std::uint64_t seed) {
  require(days >= 1 && episodes >= 1, "evaluation needs at least one day and one episode");
  double total = 0.0;
  for (int e = 0; e < episodes; ++e) {
    Rng start_rng = make_rng({seed, static_cast<std::uint64_t>(e)});
    const Vector s0 = spec.sample_initial(0, start_rng);
    Rng rng = make_rng({seed, static_cast<std::uint64_t>(e), 1});
    total += simulate(spec, policy, 0, s0, days, rng).total_reward;
  }
  return total / episodes;
}

const BenchmarkRow& BenchmarkReport::row(int n_per_stage, const std::string& update_set, const std::string& method) const {
  for (const auto& r : rows)
    if (r.n_per_stage == n_per_stage && r.update_set == update_set && r.method == method) return r;
  throw Error("benchmark report has no row for n=" + std::to_string(n_per_stage) + ", " + update_set + ", " + method);
}

BenchmarkReport run_policy_benchmark(const ExperimentConfig& config) {
  config.validate();
  const auto env = make_environment(config.environment, config.environment_params);
  const auto& spec = env.spec;
  const auto uniform = PolicyVector::uniform(spec);
  std::vector<UpdateSet> update_sets;
  for (const auto& u : config.update_sets) update_sets.push_back(parse_update_set(u, spec));

  BenchmarkReport report;
  for (int n : config.n_per_stage) {
    const auto outcomes = run_trials<CellResult>(config.trials, config.threads, [&](int t) {
      const std::uint64_t seed = config.seed + static_cast<std::uint64_t>(t);
      const std::uint64_t eval_seed = config.eval_seed + static_cast<std::uint64_t>(t);
      Rng data_rng = make_rng({seed, static_cast<std::uint64_t>(n)});
      const auto data = sample_offline_dataset(spec, uniform, n, env.sampling, data_rng);
      const double random = evaluate_total_reward(spec, uniform, config.eval_days, config.eval_episodes, eval_seed);
      CellResult cell;
      for (std::size_t u = 0; u < update_sets.size(); ++u) {
        TrainConfig tc = config.train;
        tc.seed = seed;
        BenchmarkTrial tr;
        tr.n_per_stage = n;
        tr.update_set = config.update_sets[u];
        tr.trial = t;
        tr.seed = seed;
        tr.random = random;
        try {
          const auto cyc = train_cyclefqi(data, spec, update_sets[u], uniform, tc);
          tr.cyclefqi = evaluate_total_reward(spec, cyc.policy, config.eval_days, config.eval_episodes, eval_seed);
        } catch (const Error& e) {
          throw Error("CycleFQI (update set " + tr.update_set + "): " + e.what());
        }
        try {
          const auto flat = train_flattened_fqi(data, spec, update_sets[u], uniform, tc);
          tr.flattened = evaluate_total_reward(spec, flat.policy, config.eval_days, config.eval_episodes, eval_seed);
        } catch (const Error& e) {
          throw Error("flattened FQI (update set " + tr.update_set + "): " + e.what());
        }
        cell.per_update_set.push_back(tr);
      }
      return cell;
    });

    for (std::size_t u = 0; u < update_sets.size(); ++u) {
      std::vector<double> cyc, flat, rnd;
      int failures = 0;
      for (const auto& o : outcomes) {
        if (!o.ok()) {
          ++failures;
          if (u == 0) {
            spdlog::warn("benchmark n={} trial {} failed: {}", n, o.index, o.error);
            for (const auto& name : config.update_sets) {
              BenchmarkTrial failed;
              failed.n_per_stage = n;
              failed.update_set = name;
              failed.trial = o.index;
              failed.seed = config.seed + static_cast<std::uint64_t>(o.index);
              failed.cyclefqi = failed.flattened = failed.random = std::nan("");
              failed.error = o.error;
              report.trials.push_back(failed);
            }
          }
          continue;
        }
        const auto& tr = o.value->per_update_set[u];
        cyc.push_back(tr.cyclefqi);
        flat.push_back(tr.flattened);
        rnd.push_back(tr.random);
        report.trials.push_back(tr);
      }
      const std::pair<const char*, const std::vector<double>*> methods[] = {
          {"cyclefqi", &cyc}, {"flattened-fqi", &flat}, {"random", &rnd}};
      for (const auto& [name, values] : methods) {
        BenchmarkRow row = summarize(*values, failures);
        row.n_per_stage = n;
        row.update_set = config.update_sets[u];
        row.method = name;
        report.rows.push_back(row);
        spdlog::info("benchmark n={} U={} {}: {:.2f} (se {:.2f}, {} trials)", n, row.update_set, name, row.mean,
                     row.std_error, row.trials);
      }
    }
  }
  // Trial records in (n, trial, update set) order, independent of scheduling.
  std::stable_sort(report.trials.begin(), report.trials.end(), [&](const BenchmarkTrial& a, const BenchmarkTrial& b) {
    auto rank = [&](const BenchmarkTrial& x) {
      std::size_t n_rank = 0;
      for (std::size_t i = 0; i < config.n_per_stage.size(); ++i)
        if (config.n_per_stage[i] == x.n_per_stage) n_rank = i;
      std::size_t u_rank = 0;
      for (std::size_t i = 0; i < config.update_sets.size(); ++i)
        if (config.update_sets[i] == x.update_set) u_rank = i;
      return std::make_tuple(n_rank, x.trial, u_rank);
    };
    return rank(a) < rank(b);
  });
  return report;
}

std::vector<std::string> write_benchmark_report(const BenchmarkReport& report, const ExperimentConfig& config) {
  const auto env = make_environment(config.environment, config.environment_params);
  const json header{{"config", experiment_config_to_json(config)}, {"environment", env.description}};
  CsvTable summary({"n_per_stage", "update_set", "method", "mean", "std_error", "std_error_flag", "trials", "failures"});
  for (const auto& r : report.rows)
    summary.row()
        .add(r.n_per_stage)
        .add(r.update_set)
        .add(r.method)
        .add(r.mean)
        .add(r.std_error)
        .add(r.std_error_available ? "" : "absent: fewer than 2 trials")
        .add(r.trials)
        .add(r.failures);
  CsvTable trials({"n_per_stage", "update_set", "trial", "seed", "cyclefqi", "flattened_fqi", "random", "error"});
  for (const auto& t : report.trials)
    trials.row()
        .add(t.n_per_stage)
        .add(t.update_set)
        .add(t.trial)
        .add(static_cast<unsigned long long>(t.seed))
        .add(t.cyclefqi)
        .add(t.flattened)
        .add(t.random)
        .add(t.error);
  const auto a = out_path(config, "benchmark_summary.csv");
  const auto b = out_path(config, "benchmark_trials.csv");
  summary.write(a, header);
  trials.write(b, header);
  return {a, b};
}

int select_tree_count(const std::vector<std::pair<int, double>>& scores) {
  require(!scores.empty(), "tree-count selection needs at least one score");
  int best = scores.front().first;
  double best_score = scores.front().second;
  for (const auto& [trees, score] : scores) {
    if (score > best_score || (score == best_score && trees < best)) {
      best = trees;
      best_score = score;
    }
  }
  return best;
}

TuneReport run_tune_forest(const ExperimentConfig& config) {
  config.validate();
  const auto env = make_environment(config.environment, config.environment_params);
  const auto& spec = env.spec;
  const auto uniform = PolicyVector::uniform(spec);
  const auto& grid = config.tune.tree_grid;
  Rng data_rng = make_rng({config.tune.train_seed});
  const auto data = sample_offline_dataset(spec, uniform, config.tune.n_per_stage, env.sampling, data_rng);
  const auto U = UpdateSet::all(spec.num_stages());

  // Jobs: (method, grid point), CycleFQI first.
  const int G = static_cast<int>(grid.size());
  const auto outcomes = run_trials<TuneRow>(2 * G, config.threads, [&](int job) {
    TuneRow row;
    row.method = job < G ? "cyclefqi" : "flattened-fqi";
    row.num_trees = grid[static_cast<std::size_t>(job % G)];
    TrainConfig tc = config.train;
    tc.iterations = config.tune.iterations;
    tc.seed = config.tune.train_seed;
    auto forest = std::get<RandomForestSpec>(tc.regressor);
    forest.num_trees = row.num_trees;
    tc.regressor = forest;
    const PolicyVector policy = job < G ? train_cyclefqi(data, spec, U, uniform, tc).policy
                                        : train_flattened_fqi(data, spec, U, uniform, tc).policy;
    std::vector<double> rewards;
    for (int i = 0; i < config.tune.eval_trajectories; ++i)
      rewards.push_back(evaluate_total_reward(spec, policy, config.tune.eval_days, 1,
                                              config.tune.eval_seed + static_cast<std::uint64_t>(i)));
    double sum = 0.0;
    for (double r : rewards) sum += r;
    row.mean = sum / static_cast<double>(rewards.size());
    double ss = 0.0;
    for (double r : rewards) ss += (r - row.mean) * (r - row.mean);
    row.std_dev = rewards.size() > 1 ? std::sqrt(ss / static_cast<double>(rewards.size() - 1)) : 0.0;
    return row;
  });

  TuneReport report;
  std::vector<std::pair<int, double>> cyc, flat;
  for (const auto& o : outcomes) {
    TuneRow row;
    if (o.ok()) {
      row = *o.value;
      (o.index < G ? cyc : flat).emplace_back(row.num_trees, row.mean);
    } else {
      row.method = o.index < G ? "cyclefqi" : "flattened-fqi";
      row.num_trees = grid[static_cast<std::size_t>(o.index % G)];
      row.mean = row.std_dev = std::nan("");
      row.error = o.error;
      spdlog::warn("tune-forest {} trees={} failed: {}", row.method, row.num_trees, o.error);
    }
    report.rows.push_back(row);
  }
  if (cyc.empty() || flat.empty()) throw Error("tune-forest: every grid point failed for at least one method");
  report.selected_cyclefqi = select_tree_count(cyc);
  report.selected_flattened = select_tree_count(flat);
  return report;
}

std::vector<std::string> write_tune_report(const TuneReport& report, const ExperimentConfig& config) {
  const json header{{"config", experiment_config_to_json(config)},
                    {"selected", {{"cyclefqi", report.selected_cyclefqi}, {"flattened-fqi", report.selected_flattened}}}};
  CsvTable table({"method", "num_trees", "mean_reward", "std_dev", "selected", "error"});
  for (const auto& r : report.rows) {
    const int chosen = r.method == "cyclefqi" ? report.selected_cyclefqi : report.selected_flattened;
    table.row().add(r.method).add(r.num_trees).add(r.mean).add(r.std_dev).add(r.error.empty() && r.num_trees == chosen).add(r.error);
  }
  const auto a = out_path(config, "tune_forest.csv");
  table.write(a, header);
  return {a};
}

}  // namespace cyclic
