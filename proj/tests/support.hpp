#pragma once

#include <algorithm>
#include <cmath>
#include <random>
#include <span>
#include <vector>

#include "cyclic/core/tabular.hpp"
#include "cyclic/fqi/cyclefqi.hpp"

namespace testing_support {

using cyclic::Matrix;
using cyclic::Vector;

// Straight loop implementation of one constrained backup, written against the raw
// tables so it shares no code with the library operator.
inline std::vector<Matrix> oracle_backup(const cyclic::FiniteCyclicMdp& mdp, const std::vector<Matrix>& q,
                                         const std::vector<bool>& optimize, const std::vector<Matrix>& fixed) {
  const int K = static_cast<int>(mdp.stages.size());
  std::vector<std::vector<double>> value(K);
  for (int k = 0; k < K; ++k) {
    const auto& st = mdp.stages[k];
    value[k].resize(st.num_states);
    for (int s = 0; s < st.num_states; ++s) {
      double v = 0.0;
      if (optimize[k]) {
        v = q[k](s, 0);
        for (int a = 1; a < st.num_actions; ++a) v = std::max(v, q[k](s, a));
      } else {
        for (int a = 0; a < st.num_actions; ++a) v += fixed[k](s, a) * q[k](s, a);
      }
      value[k][s] = v;
    }
  }
  std::vector<Matrix> out(K);
  for (int k = 0; k < K; ++k) {
    const auto& st = mdp.stages[k];
    const int nk = (k + 1) % K;
    out[k] = Matrix::Zero(st.num_states, st.num_actions);
    for (int s = 0; s < st.num_states; ++s)
      for (int a = 0; a < st.num_actions; ++a) {
        double cont = 0.0;
        for (int t = 0; t < st.num_states; ++t) {
          const double p = st.transition[a](s, t);
          if (p == 0.0) continue;
          cont += p * (st.terminal(s, a) != 0.0 ? st.discount * value[nk][st.stage_map[t]] : value[k][t]);
        }
        out[k](s, a) = st.reward(s, a) + cont;
      }
  }
  return out;
}

inline double oracle_sup(const std::vector<Matrix>& a, const std::vector<Matrix>& b) {
  double d = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) d = std::max(d, (a[k] - b[k]).cwiseAbs().maxCoeff());
  return d;
}

// Value iteration to machine precision.
inline std::vector<Matrix> oracle_fixed_point(const cyclic::FiniteCyclicMdp& mdp, const std::vector<bool>& optimize,
                                              const std::vector<Matrix>& fixed) {
  std::vector<Matrix> q;
  for (const auto& st : mdp.stages) q.push_back(Matrix::Zero(st.num_states, st.num_actions));
  for (int it = 0; it < 200000; ++it) {
    auto next = oracle_backup(mdp, q, optimize, fixed);
    const double d = oracle_sup(next, q);
    q = std::move(next);
    if (d == 0.0 || (it > 50 && d < 1e-15)) break;
  }
  return q;
}

// Two-stage deterministic chain. Stage 0 has 4 states and 2 actions with horizon 2,
// stage 1 has 3 states and 3 actions with horizon 1.
inline cyclic::FiniteCyclicMdp small_deterministic_mdp(double g0 = 0.9, double g1 = 0.8) {
  cyclic::FiniteCyclicMdp mdp;
  cyclic::FiniteStage a;
  a.num_states = 4;
  a.num_actions = 2;
  a.horizon = 2;
  a.discount = g0;
  a.transition.assign(2, Matrix::Zero(4, 4));
  // layer 0 = {0, 1}, layer 1 = {2, 3}; exit states are reused as landing points.
  a.transition[0](0, 2) = 1;
  a.transition[1](0, 3) = 1;
  a.transition[0](1, 3) = 1;
  a.transition[1](1, 2) = 1;
  a.transition[0](2, 0) = 1;
  a.transition[1](2, 1) = 1;
  a.transition[0](3, 1) = 1;
  a.transition[1](3, 0) = 1;
  a.reward = Matrix(4, 2);
  a.reward << 1.0, 0.0, 0.5, 2.0, -1.0, 3.0, 0.25, -0.5;
  a.terminal = Matrix(4, 2);
  a.terminal << 0, 1, 0, 0, 1, 1, 1, 1;
  a.stage_map = {0, 1, 2, 0};
  a.initial = Vector::Constant(4, 0.25);

  cyclic::FiniteStage b;
  b.num_states = 3;
  b.num_actions = 3;
  b.horizon = 1;
  b.discount = g1;
  b.transition.assign(3, Matrix::Zero(3, 3));
  for (int s = 0; s < 3; ++s)
    for (int act = 0; act < 3; ++act) b.transition[act](s, (s + act) % 3) = 1;
  b.reward = Matrix(3, 3);
  b.reward << 0.0, 1.0, -2.0, 4.0, 0.5, 0.0, -1.0, 2.0, 1.5;
  b.terminal = Matrix::Ones(3, 3);
  b.stage_map = {1, 2, 3};
  b.initial = Vector::Constant(3, 1.0 / 3.0);

  mdp.stages = {a, b};
  return mdp;
}

inline std::vector<Matrix> uniform_tables(const cyclic::FiniteCyclicMdp& mdp) {
  std::vector<Matrix> p;
  for (const auto& st : mdp.stages) p.push_back(Matrix::Constant(st.num_states, st.num_actions, 1.0 / st.num_actions));
  return p;
}

// Single stage, H = 1, gamma = 0.9: an ordinary discounted MDP.
inline cyclic::CyclicMdpSpec one_stage_mdp() {
  cyclic::CyclicMdpSpec spec;
  cyclic::StageSpec s;
  s.name = "single";
  s.action_count = 2;
  s.discount = 0.9;
  s.reward_max = 2.0;
  spec.stages = {s};
  spec.is_terminal = [](int, const Vector&, int) { return true; };
  spec.stage_transition = [](int, const Vector& x) { return x; };
  spec.step = [](int, const Vector& x, int a, cyclic::Rng& rng) {
    std::normal_distribution<double> z(0.0, 0.1);
    cyclic::StepResult r;
    r.reward = (a == 0 ? x[0] : -x[0]) + 0.2 * a + z(rng);
    r.next_state = Vector::Constant(1, std::clamp(0.5 * x[0] + 0.6 * a - 0.3 + z(rng), -1.0, 1.0));
    return r;
  };
  spec.sample_initial = [](int, cyclic::Rng& rng) {
    return Vector::Constant(1, std::uniform_real_distribution<double>(-1, 1)(rng));
  };
  return spec;
}

// Textbook FQI on a one-stage dataset: y = r + gamma max_a Q(s', a), one regressor
// per action fitted on that action's rows. Returns the targets of every iteration.
inline std::vector<std::vector<double>> reference_fqi_targets(const cyclic::StageDataset& data, int actions,
                                                              double gamma, const cyclic::TrainConfig& tc) {
  const auto& trs = data.transitions;
  std::vector<cyclic::FittedModel> q(static_cast<std::size_t>(actions), cyclic::FittedModel::constant(0.0, 1));
  std::vector<std::vector<double>> out;
  for (int m = 1; m <= tc.iterations; ++m) {
    std::vector<double> y;
    for (const auto& tr : trs) {
      double best = q[0].predict(tr.next_state);
      for (int a = 1; a < actions; ++a) best = std::max(best, q[a].predict(tr.next_state));
      y.push_back(tr.reward + gamma * best);
    }
    std::vector<cyclic::FittedModel> next;
    for (int a = 0; a < actions; ++a) {
      std::vector<std::size_t> rows;
      for (std::size_t i = 0; i < trs.size(); ++i)
        if (trs[i].action == a) rows.push_back(i);
      Matrix x(static_cast<Eigen::Index>(rows.size()), trs.front().state.size());
      Vector t(static_cast<Eigen::Index>(rows.size()));
      for (std::size_t r = 0; r < rows.size(); ++r) {
        x.row(static_cast<Eigen::Index>(r)) = trs[rows[r]].state.transpose();
        t[static_cast<Eigen::Index>(r)] = y[rows[r]];
      }
      cyclic::Rng rng = cyclic::make_rng({tc.seed, static_cast<std::uint64_t>(m), 0, static_cast<std::uint64_t>(a)});
      next.push_back(rows.empty() ? cyclic::FittedModel::constant(0.0, 1) : cyclic::fit(tc.regressor, x, t, rng));
    }
    q = std::move(next);
    out.push_back(std::move(y));
  }
  return out;
}

inline std::vector<std::vector<double>> cyclefqi_targets(const cyclic::Dataset& data, const cyclic::CyclicMdpSpec& spec,
                                                         const cyclic::TrainConfig& tc) {
  std::vector<std::vector<double>> out;
  cyclic::train_cyclefqi(data, spec, cyclic::UpdateSet::all(spec.num_stages()), cyclic::PolicyVector::uniform(spec), tc,
                         [&](int, int, std::span<const double> y, const cyclic::ActionValueFunction&) {
                           out.emplace_back(y.begin(), y.end());
                         });
  return out;
}

}  // namespace testing_support
