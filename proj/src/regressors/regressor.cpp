#include "cyclic/regressors/regressor.hpp"

#include <cmath>

#include <nlohmann/json.hpp>

namespace cyclic {

using nlohmann::json;

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

json basis_to_json(const BasisSpec& b) {
  return json{{"kind", to_string(b.kind)}, {"input_dim", b.input_dim}, {"degree", b.degree}, {"num_cells", b.num_cells}};
}

BasisSpec basis_from_json(const json& j) {
  BasisSpec b;
  b.kind = basis_kind_from_string(j.at("kind").get<std::string>());
  b.input_dim = j.at("input_dim").get<int>();
  b.degree = j.value("degree", 2);
  b.num_cells = j.value("num_cells", 0);
  b.validate();
  return b;
}

}  // namespace

std::string regressor_kind(const RegressorSpec& spec) {
  return std::visit(overloaded{[](const LinearSieveSpec&) { return std::string("linear-sieve"); },
                               [](const RandomForestSpec&) { return std::string("random-forest"); },
                               [](const TabularSpec&) { return std::string("tabular"); }},
                    spec);
}

void validate(const RegressorSpec& spec) {
  std::visit(overloaded{[](const LinearSieveSpec& s) {
                          s.basis.validate();
                          require(!s.ridge || *s.ridge >= 0.0, "ridge must be nonnegative");
                        },
                        [](const RandomForestSpec& s) { s.validate(); }, [](const TabularSpec&) {}},
             spec);
}

FittedModel::FittedModel(Parameters params, std::size_t n_samples) : params_(std::move(params)), n_samples_(n_samples) {}

FittedModel FittedModel::constant(double value, int input_dim) { return FittedModel(ConstantModel{value, input_dim}, 0); }

int FittedModel::input_dim() const {
  return std::visit(overloaded{[](const ConstantModel& m) { return m.input_dim; },
                               [](const LinearSieveModel& m) { return m.basis.input_dim; },
                               [](const RandomForestModel& m) { return m.input_dim(); },
                               [](const TabularModel& m) { return m.input_dim; }},
                    params_);
}

std::string FittedModel::kind() const {
  return std::visit(overloaded{[](const ConstantModel&) { return std::string("constant"); },
                               [](const LinearSieveModel&) { return std::string("linear-sieve"); },
                               [](const RandomForestModel&) { return std::string("random-forest"); },
                               [](const TabularModel&) { return std::string("tabular"); }},
                    params_);
}

double FittedModel::predict(const Vector& input) const {
  return std::visit(
      overloaded{[&](const ConstantModel& m) {
                   require(m.input_dim == 0 || input.size() == m.input_dim, "constant model: input dimension mismatch");
                   return m.value;
                 },
                 [&](const LinearSieveModel& m) { return build_basis(input, m.basis).dot(m.coefficients); },
                 [&](const RandomForestModel& m) { return m.predict(input); },
                 [&](const TabularModel& m) {
                   require(input.size() == m.input_dim, "tabular model: input dimension mismatch");
                   const auto it = m.cell_means.find(to_std(input));
                   return it == m.cell_means.end() ? m.default_value : it->second;
                 }},
      params_);
}

double predict(const FittedModel& model, const Vector& input) { return model.predict(input); }

Vector solve_ridge_normal_equations(const Matrix& features, const Vector& targets, double ridge) {
  require(ridge >= 0.0, "ridge must be nonnegative");
  const Eigen::Index L = features.cols();
  Matrix gram = features.transpose() * features;
  gram.diagonal().array() += ridge;
  const Vector rhs = features.transpose() * targets;
  Eigen::ColPivHouseholderQR<Matrix> qr(gram);
  if (qr.rank() < L) {
    if (ridge == 0.0)
      throw Error("linear sieve: normal equations are singular (rank " + std::to_string(qr.rank()) + " of " +
                  std::to_string(L) + "); use a positive ridge");
    throw Error("linear sieve: regularized normal equations are numerically singular; increase the ridge");
  }
  return qr.solve(rhs);
}

FittedModel fit(const RegressorSpec& spec, const Matrix& inputs, const Vector& targets, Rng& rng) {
  require(inputs.rows() >= 1, "fit: empty training set");
  require(inputs.rows() == targets.size(), "fit: inputs and targets disagree in length");
  require(inputs.allFinite() && targets.allFinite(), "fit: non-finite training values");
  validate(spec);
  const auto n = static_cast<std::size_t>(inputs.rows());
  const int d = static_cast<int>(inputs.cols());

  return std::visit(
      overloaded{
          [&](const LinearSieveSpec& s) {
            require(s.basis.input_dim == d, "linear sieve: basis input_dim " + std::to_string(s.basis.input_dim) +
                                                " does not match data dimension " + std::to_string(d));
            Matrix features(inputs.rows(), s.basis.feature_dim());
            for (Eigen::Index i = 0; i < inputs.rows(); ++i) {
              Vector row = inputs.row(i).transpose();
              Vector phi = build_basis(row, s.basis);
              features.row(i) = phi.transpose();
            }
            const double ridge = s.ridge.value_or(1e-8 * static_cast<double>(n));
            Vector beta = solve_ridge_normal_equations(features, targets, ridge);
            return FittedModel(LinearSieveModel{s.basis, std::move(beta), ridge}, n);
          },
          [&](const RandomForestSpec& s) { return FittedModel(fit_forest(inputs, targets, s, rng), n); },
          [&](const TabularSpec& s) {
            std::map<std::vector<double>, std::pair<double, int>> acc;
            for (Eigen::Index i = 0; i < inputs.rows(); ++i) {
              auto& cell = acc[to_std(inputs.row(i).transpose())];
              cell.first += targets[i];
              cell.second += 1;
            }
            TabularModel m;
            m.default_value = s.default_value;
            m.input_dim = d;
            for (const auto& [key, sc] : acc) m.cell_means.emplace(key, sc.first / sc.second);
            return FittedModel(std::move(m), n);
          }},
      spec);
}

json FittedModel::to_json() const {
  json j;
  j["format_version"] = format_version;
  j["kind"] = kind();
  j["n_samples"] = n_samples_;
  j["input_dim"] = input_dim();
  std::visit(overloaded{[&](const ConstantModel& m) { j["value"] = m.value; },
                        [&](const LinearSieveModel& m) {
                          j["basis"] = basis_to_json(m.basis);
                          j["ridge"] = m.ridge;
                          j["coefficients"] = to_std(m.coefficients);
                        },
                        [&](const RandomForestModel& m) {
                          json trees = json::array();
                          for (const auto& t : m.trees()) {
                            json feature = json::array(), threshold = json::array(), left = json::array(),
                                 right = json::array(), value = json::array();
                            for (const auto& n : t.nodes()) {
                              feature.push_back(n.feature);
                              threshold.push_back(n.threshold);
                              left.push_back(n.left);
                              right.push_back(n.right);
                              value.push_back(n.value);
                            }
                            trees.push_back(json{{"feature", feature},
                                                 {"threshold", threshold},
                                                 {"left", left},
                                                 {"right", right},
                                                 {"value", value}});
                          }
                          j["trees"] = trees;
                        },
                        [&](const TabularModel& m) {
                          j["default_value"] = m.default_value;
                          json cells = json::array();
                          for (const auto& [key, mean] : m.cell_means) cells.push_back(json{{"key", key}, {"mean", mean}});
                          j["cells"] = cells;
                        }},
             params_);
  return j;
}

FittedModel FittedModel::from_json(const json& j) {
  require(j.at("format_version").get<int>() == format_version,
          "unsupported model format_version " + j.at("format_version").dump());
  const auto kind = j.at("kind").get<std::string>();
  const auto n = j.at("n_samples").get<std::size_t>();
  const int d = j.at("input_dim").get<int>();
  if (kind == "constant") return FittedModel(ConstantModel{j.at("value").get<double>(), d}, n);
  if (kind == "linear-sieve") {
    LinearSieveModel m{basis_from_json(j.at("basis")), from_std(j.at("coefficients").get<std::vector<double>>()),
                       j.at("ridge").get<double>()};
    require(m.coefficients.size() == m.basis.feature_dim(), "linear sieve: coefficient length mismatch");
    return FittedModel(std::move(m), n);
  }
  if (kind == "random-forest") {
    std::vector<RegressionTree> trees;
    for (const auto& t : j.at("trees")) {
      const auto feature = t.at("feature").get<std::vector<int>>();
      const auto threshold = t.at("threshold").get<std::vector<double>>();
      const auto left = t.at("left").get<std::vector<int>>();
      const auto right = t.at("right").get<std::vector<int>>();
      const auto value = t.at("value").get<std::vector<double>>();
      std::vector<RegressionTree::Node> nodes(feature.size());
      for (std::size_t i = 0; i < nodes.size(); ++i) nodes[i] = {feature[i], threshold[i], left[i], right[i], value[i]};
      trees.emplace_back(std::move(nodes));
    }
    return FittedModel(RandomForestModel(std::move(trees), d), n);
  }
  if (kind == "tabular") {
    TabularModel m;
    m.default_value = j.at("default_value").get<double>();
    m.input_dim = d;
    for (const auto& c : j.at("cells")) m.cell_means.emplace(c.at("key").get<std::vector<double>>(), c.at("mean").get<double>());
    return FittedModel(std::move(m), n);
  }
  throw Error("unknown model kind '" + kind + "'");
}

json regressor_spec_to_json(const RegressorSpec& spec) {
  return std::visit(overloaded{[](const LinearSieveSpec& s) {
                                 json j{{"kind", "linear-sieve"}, {"basis", basis_to_json(s.basis)}};
                                 j["ridge"] = s.ridge ? json(*s.ridge) : json(nullptr);
                                 return j;
                               },
                               [](const RandomForestSpec& s) {
                                 return json{{"kind", "random-forest"},
                                             {"num_trees", s.num_trees},
                                             {"max_depth", s.max_depth},
                                             {"min_leaf", s.min_leaf},
                                             {"feature_subsample", s.feature_subsample}};
                               },
                               [](const TabularSpec& s) {
                                 return json{{"kind", "tabular"}, {"default_value", s.default_value}};
                               }},
                    spec);
}

RegressorSpec regressor_spec_from_json(const json& j) {
  const auto kind = j.at("kind").get<std::string>();
  if (kind == "linear-sieve") {
    LinearSieveSpec s;
    s.basis = basis_from_json(j.at("basis"));
    if (j.contains("ridge") && !j.at("ridge").is_null()) s.ridge = j.at("ridge").get<double>();
    return s;
  }
  if (kind == "random-forest") {
    RandomForestSpec s;
    s.num_trees = j.value("num_trees", s.num_trees);
    s.max_depth = j.value("max_depth", s.max_depth);
    s.min_leaf = j.value("min_leaf", s.min_leaf);
    s.feature_subsample = j.value("feature_subsample", s.feature_subsample);
    s.validate();
    return s;
  }
  if (kind == "tabular") return TabularSpec{j.value("default_value", 0.0)};
  throw Error("unknown regressor kind '" + kind + "'");
}

}  // namespace cyclic
