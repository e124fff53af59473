#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "cyclic/core/types.hpp"

namespace cyclic {

enum class BasisKind { quadratic, quadratic_unique, polynomial, tabular_indicator };

/// Sieve basis Phi(s).
///  - quadratic:          [1, s^T, vec(s s^T)^T], full row-major d^2 block (length 1 + d + d^2)
///  - quadratic_unique:   [1, s^T, s_i s_j for i <= j], length 1 + d + d(d+1)/2; same span as
///                        quadratic without the repeated cross terms
///  - polynomial(p):      [1, s, vec(s (x) s), ..., p-fold tensor power], length sum_{j<=p} d^j;
///                        degree 2 coincides with quadratic
///  - tabular_indicator:  one-hot of the integer state index s_0 in [0, num_cells)
struct BasisSpec {
  BasisKind kind = BasisKind::quadratic;
  int input_dim = 1;
  int degree = 2;
  int num_cells = 0;

  static BasisSpec quadratic(int input_dim);
  static BasisSpec quadratic_unique(int input_dim);
  static BasisSpec polynomial(int input_dim, int degree);
  static BasisSpec tabular(int num_cells);

  int feature_dim() const;
  void validate() const;
};

std::string to_string(BasisKind kind);
BasisKind basis_kind_from_string(const std::string& name);

Vector build_basis(const Vector& state, const BasisSpec& spec);

/// Exponent vector of every feature, in feature order. Empty for tabular bases.
std::vector<std::vector<int>> basis_monomials(const BasisSpec& spec);

/// E[Phi(s)] from a monomial-moment oracle; nullopt for tabular bases.
std::optional<Vector> basis_expectation(const BasisSpec& spec,
                                        const std::function<double(const std::vector<int>&)>& moment);

/// Writes Phi(state) into `out` (length feature_dim()) without allocating.
void build_basis_into(const Vector& state, const BasisSpec& spec, Eigen::Ref<Vector> out);

}  // namespace cyclic
