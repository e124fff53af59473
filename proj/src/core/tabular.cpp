#include "cyclic/core/tabular.hpp"

#include <algorithm>
#include <cmath>

namespace cyclic {
namespace {

int state_index(const Vector& state, int num_states) {
  require(state.size() == 1, "finite MDP states are 1-vectors holding the state index");
  const double x = state[0];
  const auto s = static_cast<int>(std::lround(x));
  require(s >= 0 && s < num_states && std::abs(x - s) == 0.0, "finite MDP state index out of range");
  return s;
}

Vector index_state(int s) { return Vector::Constant(1, static_cast<double>(s)); }

}  // namespace

double FiniteCyclicMdp::cycle_discount() const {
  std::vector<double> g;
  for (const auto& s : stages) g.push_back(s.discount);
  return cyclic::cycle_discount(g);
}

int FiniteCyclicMdp::total_horizon() const {
  int h = 0;
  for (const auto& s : stages) h += s.horizon;
  return h;
}

bool FiniteCyclicMdp::deterministic() const {
  for (const auto& st : stages)
    for (const auto& p : st.transition)
      for (Eigen::Index s = 0; s < p.rows(); ++s)
        if (p.row(s).maxCoeff() != 1.0) return false;
  return true;
}

void FiniteCyclicMdp::validate() const {
  require(!stages.empty(), "finite MDP has no stages");
  for (int k = 0; k < num_stages(); ++k) {
    const auto& st = stages[static_cast<std::size_t>(k)];
    const auto& nx = stages[static_cast<std::size_t>(next_stage(k))];
    const std::string where = "finite MDP stage " + std::to_string(k) + ": ";
    require(st.num_states >= 1 && st.num_actions >= 1 && st.horizon >= 1, where + "empty state/action space");
    require(st.discount >= 0.0 && st.discount <= 1.0, where + "discount outside [0, 1]");
    require(static_cast<int>(st.transition.size()) == st.num_actions, where + "one transition matrix per action");
    for (const auto& p : st.transition) {
      require(p.rows() == st.num_states && p.cols() == st.num_states, where + "transition matrix shape");
      require((p.array() >= 0.0).all(), where + "negative transition probability");
      for (Eigen::Index s = 0; s < p.rows(); ++s)
        require(std::abs(p.row(s).sum() - 1.0) <= 1e-10, where + "transition row " + std::to_string(s) +
                                                             " does not sum to one");
    }
    require(st.reward.rows() == st.num_states && st.reward.cols() == st.num_actions, where + "reward table shape");
    require(st.terminal.rows() == st.num_states && st.terminal.cols() == st.num_actions,
            where + "terminal table shape");
    require(static_cast<int>(st.stage_map.size()) == st.num_states, where + "stage map must cover every state");
    for (int target : st.stage_map)
      require(target >= 0 && target < nx.num_states, where + "stage map points outside the next stage");
    require(st.initial.size() == st.num_states && std::abs(st.initial.sum() - 1.0) <= 1e-10,
            where + "initial distribution");
  }
  cycle_discount();
}

std::vector<Vector> constrained_state_values(const QTables& q, const UpdateSet& update_set,
                                             const PolicyTables& fixed_policies) {
  std::vector<Vector> v(q.size());
  for (std::size_t k = 0; k < q.size(); ++k) {
    if (update_set.contains(static_cast<int>(k))) {
      v[k] = q[k].rowwise().maxCoeff();
    } else {
      require(k < fixed_policies.size() && fixed_policies[k].rows() == q[k].rows() &&
                  fixed_policies[k].cols() == q[k].cols(),
              "missing fixed policy table for stage " + std::to_string(k));
      v[k] = (q[k].array() * fixed_policies[k].array()).rowwise().sum();
    }
  }
  return v;
}

QTables apply_bellman_operator_tabular(const FiniteCyclicMdp& mdp, const QTables& q, const UpdateSet& update_set,
                                       const PolicyTables& fixed_policies, const BellmanOptions& options) {
  require(static_cast<int>(q.size()) == mdp.num_stages(), "Q tables do not match the MDP");
  const auto v = constrained_state_values(q, update_set, fixed_policies);
  QTables out(q.size());
  for (int k = 0; k < mdp.num_stages(); ++k) {
    const auto& st = mdp.stages[static_cast<std::size_t>(k)];
    const int next = mdp.next_stage(k);
    const double gamma = options.apply_stage_discount ? st.discount : 1.0;
    // Continuation value of landing in s' when the pair was terminal.
    Vector exit_value(st.num_states);
    for (int s = 0; s < st.num_states; ++s)
      exit_value[s] = gamma * v[static_cast<std::size_t>(next)][st.stage_map[static_cast<std::size_t>(s)]];
    const Vector& stay_value = v[static_cast<std::size_t>(k)];
    Matrix& qk = out[static_cast<std::size_t>(k)];
    qk.resize(st.num_states, st.num_actions);
    for (int a = 0; a < st.num_actions; ++a) {
      const Matrix& p = st.transition[static_cast<std::size_t>(a)];
      const Vector stay = p * stay_value;
      const Vector leave = p * exit_value;
      for (int s = 0; s < st.num_states; ++s) {
        const bool term = st.terminal(s, a) != 0.0;
        qk(s, a) = st.reward(s, a) + (term ? leave[s] : stay[s]);
      }
    }
  }
  return out;
}

QTables zero_q_tables(const FiniteCyclicMdp& mdp) {
  QTables q;
  for (const auto& st : mdp.stages) q.push_back(Matrix::Zero(st.num_states, st.num_actions));
  return q;
}

double sup_distance(const QTables& a, const QTables& b) {
  require(a.size() == b.size(), "sup_distance: stage count mismatch");
  double d = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    require(a[k].rows() == b[k].rows() && a[k].cols() == b[k].cols(), "sup_distance: table shape mismatch");
    if (a[k].size() > 0) d = std::max(d, (a[k] - b[k]).cwiseAbs().maxCoeff());
  }
  return d;
}

QTables solve_fixed_point_tabular(const FiniteCyclicMdp& mdp, const UpdateSet& update_set,
                                  const PolicyTables& fixed_policies, double tol, int max_iterations) {
  mdp.validate();
  QTables q = zero_q_tables(mdp);
  const int horizon = mdp.total_horizon();
  for (int j = 0; j < max_iterations; ++j) {
    QTables next = apply_bellman_operator_tabular(mdp, q, update_set, fixed_policies);
    const double change = sup_distance(next, q);
    q = std::move(next);
    if (j >= horizon && change <= tol) return q;
  }
  throw Error("tabular fixed-point iteration did not converge");
}

QTables evaluate_policy_tabular(const FiniteCyclicMdp& mdp, const PolicyTables& policy, double tol) {
  return solve_fixed_point_tabular(mdp, UpdateSet::none(mdp.num_stages()), policy, tol);
}

PolicyTables greedy_policy_tables(const QTables& q, const UpdateSet& update_set, const PolicyTables& fixed_policies) {
  PolicyTables out(q.size());
  for (std::size_t k = 0; k < q.size(); ++k) {
    if (!update_set.contains(static_cast<int>(k))) {
      out[k] = fixed_policies.at(k);
      continue;
    }
    out[k] = Matrix::Zero(q[k].rows(), q[k].cols());
    for (Eigen::Index s = 0; s < q[k].rows(); ++s) out[k](s, argmax_lowest(q[k].row(s).transpose())) = 1.0;
  }
  return out;
}

PolicyTables uniform_policy_tables(const FiniteCyclicMdp& mdp) {
  PolicyTables out;
  for (const auto& st : mdp.stages)
    out.push_back(Matrix::Constant(st.num_states, st.num_actions, 1.0 / st.num_actions));
  return out;
}

Vector expected_initial_values(const FiniteCyclicMdp& mdp, const QTables& q, const PolicyTables& policy) {
  const auto v = constrained_state_values(q, UpdateSet::none(mdp.num_stages()), policy);
  Vector out(mdp.num_stages());
  for (int k = 0; k < mdp.num_stages(); ++k)
    out[k] = mdp.stages[static_cast<std::size_t>(k)].initial.dot(v[static_cast<std::size_t>(k)]);
  return out;
}

CyclicMdpSpec to_cyclic_spec(std::shared_ptr<const FiniteCyclicMdp> mdp) {
  mdp->validate();
  CyclicMdpSpec spec;
  for (int k = 0; k < mdp->num_stages(); ++k) {
    const auto& st = mdp->stages[static_cast<std::size_t>(k)];
    StageSpec s;
    s.name = "finite-" + std::to_string(k);
    s.state_dim = 1;
    s.action_count = st.num_actions;
    s.horizon = st.horizon;
    s.discount = st.discount;
    s.reward_max = std::max(0.0, st.reward.maxCoeff());
    spec.stages.push_back(s);
  }
  spec.is_terminal = [mdp](int k, const Vector& state, int a) {
    const auto& st = mdp->stages[static_cast<std::size_t>(k)];
    return st.terminal(state_index(state, st.num_states), a) != 0.0;
  };
  spec.stage_transition = [mdp](int k, const Vector& state) {
    const auto& st = mdp->stages[static_cast<std::size_t>(k)];
    return index_state(st.stage_map[static_cast<std::size_t>(state_index(state, st.num_states))]);
  };
  spec.step = [mdp](int k, const Vector& state, int a, Rng& rng) {
    const auto& st = mdp->stages[static_cast<std::size_t>(k)];
    const int s = state_index(state, st.num_states);
    const auto& row = st.transition[static_cast<std::size_t>(a)].row(s);
    const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    double c = 0.0;
    int next = 0;
    for (int j = 0; j < st.num_states; ++j) {
      if (row[j] <= 0.0) continue;
      next = j;
      c += row[j];
      if (u < c) break;
    }
    return StepResult{st.reward(s, a), index_state(next)};
  };
  spec.sample_initial = [mdp](int k, Rng& rng) {
    const auto& init = mdp->stages[static_cast<std::size_t>(k)].initial;
    const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    double c = 0.0;
    int pick = 0;
    for (Eigen::Index j = 0; j < init.size(); ++j) {
      if (init[j] <= 0.0) continue;
      pick = static_cast<int>(j);
      c += init[j];
      if (u < c) break;
    }
    return index_state(pick);
  };
  return spec;
}

PolicyVector to_policy_vector(const PolicyTables& tables, PolicyKind kind) {
  PolicyVector p(static_cast<int>(tables.size()));
  for (std::size_t k = 0; k < tables.size(); ++k) {
    const Matrix table = tables[k];
    const auto rows = static_cast<int>(table.rows());
    p.set(static_cast<int>(k), kind, static_cast<int>(table.cols()), [table, rows](const Vector& state) {
      return Vector(table.row(state_index(state, rows)).transpose());
    });
  }
  return p;
}

Dataset exhaustive_dataset(const FiniteCyclicMdp& mdp) {
  require(mdp.deterministic(), "exhaustive_dataset requires a deterministic finite MDP");
  Dataset data(static_cast<std::size_t>(mdp.num_stages()));
  for (int k = 0; k < mdp.num_stages(); ++k) {
    const auto& st = mdp.stages[static_cast<std::size_t>(k)];
    auto& d = data[static_cast<std::size_t>(k)];
    d.stage = k;
    for (int s = 0; s < st.num_states; ++s) {
      for (int a = 0; a < st.num_actions; ++a) {
        Eigen::Index next = 0;
        st.transition[static_cast<std::size_t>(a)].row(s).maxCoeff(&next);
        d.transitions.push_back(
            Transition{k, index_state(s), a, st.reward(s, a), index_state(static_cast<int>(next)), st.terminal(s, a) != 0.0});
      }
    }
  }
  return data;
}

FiniteCyclicMdp random_finite_mdp(const FiniteMdpShape& shape, Rng& rng) {
  const auto K = shape.horizons.size();
  require(K >= 1 && shape.actions.size() == K && shape.discounts.size() == K, "finite MDP shape: inconsistent K");
  require(shape.width >= 1, "finite MDP shape: width must be >= 1");
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_int_distribution<int> pick(0, shape.width - 1);

  FiniteCyclicMdp mdp;
  for (std::size_t k = 0; k < K; ++k) {
    FiniteStage st;
    st.horizon = shape.horizons[k];
    st.num_actions = shape.actions[k];
    st.discount = shape.discounts[k];
    // Layers 0..H-1 are decision layers; layer H collects exits.
    st.num_states = (st.horizon + 1) * shape.width;
    st.reward = Matrix::Zero(st.num_states, st.num_actions);
    st.terminal = Matrix::Zero(st.num_states, st.num_actions);
    st.transition.assign(static_cast<std::size_t>(st.num_actions), Matrix::Zero(st.num_states, st.num_states));
    for (int s = 0; s < st.num_states; ++s) {
      const int layer = s / shape.width;
      for (int a = 0; a < st.num_actions; ++a) {
        st.reward(s, a) = shape.reward_scale * unit(rng);
        bool term = layer >= st.horizon - 1 || unit(rng) < shape.early_termination;
        st.terminal(s, a) = term ? 1.0 : 0.0;
        const int target_layer = term ? st.horizon : layer + 1;
        auto& p = st.transition[static_cast<std::size_t>(a)];
        if (shape.deterministic) {
          p(s, target_layer * shape.width + pick(rng)) = 1.0;
        } else {
          double total = 0.0;
          for (int j = 0; j < shape.width; ++j) {
            const double w = unit(rng) + 0.05;
            p(s, target_layer * shape.width + j) = w;
            total += w;
          }
          p.row(s) /= total;
        }
      }
    }
    st.initial = Vector::Zero(st.num_states);
    st.initial.head(shape.width).setConstant(1.0 / shape.width);
    mdp.stages.push_back(std::move(st));
  }
  for (std::size_t k = 0; k < K; ++k) {
    auto& st = mdp.stages[k];
    st.stage_map.resize(static_cast<std::size_t>(st.num_states));
    for (auto& target : st.stage_map) target = pick(rng);
  }
  mdp.validate();
  return mdp;
}

}  // namespace cyclic
