#pragma once

#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "cyclic/regressors/basis.hpp"
#include "cyclic/regressors/forest.hpp"

namespace cyclic {

/// Least squares on Phi(x) with penalty ridge * |beta|^2. An unset ridge
/// resolves to 1e-8 * n at fit time.
struct LinearSieveSpec {
  BasisSpec basis;
  std::optional<double> ridge;
};

/// Exact per-cell sample means; unseen cells predict default_value.
struct TabularSpec {
  double default_value = 0.0;
};

using RegressorSpec = std::variant<LinearSieveSpec, RandomForestSpec, TabularSpec>;

std::string regressor_kind(const RegressorSpec& spec);
void validate(const RegressorSpec& spec);

struct ConstantModel {
  double value = 0.0;
  int input_dim = 0;
};

struct LinearSieveModel {
  BasisSpec basis;
  Vector coefficients;
  double ridge = 0.0;
};

struct TabularModel {
  std::map<std::vector<double>, double> cell_means;
  double default_value = 0.0;
  int input_dim = 0;
};

/// An immutable fitted regression function plus its training metadata.
class FittedModel {
 public:
  using Parameters = std::variant<ConstantModel, LinearSieveModel, RandomForestModel, TabularModel>;

  FittedModel() : FittedModel(ConstantModel{}, 0) {}
  FittedModel(Parameters params, std::size_t n_samples);

  static FittedModel constant(double value, int input_dim);

  double predict(const Vector& input) const;
  int input_dim() const;
  std::size_t n_samples() const { return n_samples_; }
  std::string kind() const;
  const Parameters& parameters() const { return params_; }

  nlohmann::json to_json() const;
  static FittedModel from_json(const nlohmann::json& j);

  static constexpr int format_version = 1;

 private:
  Parameters params_;
  std::size_t n_samples_ = 0;
};

/// Rows of `inputs` are samples.
FittedModel fit(const RegressorSpec& spec, const Matrix& inputs, const Vector& targets, Rng& rng);

double predict(const FittedModel& model, const Vector& input);

/// Solves (F^T F + ridge I) beta = F^T y with a rank-revealing factorization.
/// Throws when ridge == 0 and the normal equations are singular.
Vector solve_ridge_normal_equations(const Matrix& features, const Vector& targets, double ridge);

nlohmann::json regressor_spec_to_json(const RegressorSpec& spec);
RegressorSpec regressor_spec_from_json(const nlohmann::json& j);

}  // namespace cyclic
