#include "cyclic/regressors/basis.hpp"

#include <cmath>

namespace cyclic {

BasisSpec BasisSpec::quadratic(int input_dim) { return BasisSpec{BasisKind::quadratic, input_dim, 2, 0}; }

BasisSpec BasisSpec::quadratic_unique(int input_dim) {
  return BasisSpec{BasisKind::quadratic_unique, input_dim, 2, 0};
}

BasisSpec BasisSpec::polynomial(int input_dim, int degree) {
  return BasisSpec{BasisKind::polynomial, input_dim, degree, 0};
}

BasisSpec BasisSpec::tabular(int num_cells) { return BasisSpec{BasisKind::tabular_indicator, 1, 0, num_cells}; }

int BasisSpec::feature_dim() const {
  switch (kind) {
    case BasisKind::quadratic: return 1 + input_dim + input_dim * input_dim;
    case BasisKind::quadratic_unique: return 1 + input_dim + input_dim * (input_dim + 1) / 2;
    case BasisKind::polynomial: {
      int total = 0;
      int power = 1;
      for (int j = 0; j <= degree; ++j) {
        total += power;
        power *= input_dim;
      }
      return total;
    }
    case BasisKind::tabular_indicator: return num_cells;
  }
  return 0;
}

void BasisSpec::validate() const {
  require(input_dim >= 1, "basis input_dim must be >= 1");
  if (kind == BasisKind::polynomial) require(degree >= 0, "polynomial basis degree must be >= 0");
  if (kind == BasisKind::tabular_indicator) {
    require(input_dim == 1, "tabular basis expects index-valued 1-vectors");
    require(num_cells >= 1, "tabular basis needs num_cells >= 1");
  }
}

std::string to_string(BasisKind kind) {
  switch (kind) {
    case BasisKind::quadratic: return "quadratic";
    case BasisKind::quadratic_unique: return "quadratic-unique";
    case BasisKind::polynomial: return "polynomial";
    case BasisKind::tabular_indicator: return "tabular-indicator";
  }
  return "unknown";
}

BasisKind basis_kind_from_string(const std::string& name) {
  if (name == "quadratic") return BasisKind::quadratic;
  if (name == "quadratic-unique") return BasisKind::quadratic_unique;
  if (name == "polynomial") return BasisKind::polynomial;
  if (name == "tabular-indicator") return BasisKind::tabular_indicator;
  throw Error("unknown basis kind '" + name + "'");
}

void build_basis_into(const Vector& state, const BasisSpec& spec, Eigen::Ref<Vector> out) {
  require(state.size() == spec.input_dim, "basis expects input dimension " + std::to_string(spec.input_dim) +
                                              ", got " + std::to_string(state.size()));
  require(out.size() == spec.feature_dim(), "basis output buffer has the wrong length");
  const Eigen::Index d = state.size();
  switch (spec.kind) {
    case BasisKind::quadratic: {
      out[0] = 1.0;
      out.segment(1, d) = state;
      Eigen::Index pos = 1 + d;
      for (Eigen::Index i = 0; i < d; ++i)
        for (Eigen::Index j = 0; j < d; ++j) out[pos++] = state[i] * state[j];
      return;
    }
    case BasisKind::quadratic_unique: {
      out[0] = 1.0;
      out.segment(1, d) = state;
      Eigen::Index pos = 1 + d;
      for (Eigen::Index i = 0; i < d; ++i)
        for (Eigen::Index j = i; j < d; ++j) out[pos++] = state[i] * state[j];
      return;
    }
    case BasisKind::polynomial: {
      // Each tensor-power block is the previous block times every coordinate, row-major.
      out[0] = 1.0;
      Eigen::Index prev_begin = 0;
      Eigen::Index prev_len = 1;
      Eigen::Index pos = 1;
      for (int j = 1; j <= spec.degree; ++j) {
        const Eigen::Index begin = pos;
        for (Eigen::Index p = 0; p < prev_len; ++p)
          for (Eigen::Index i = 0; i < d; ++i) out[pos++] = out[prev_begin + p] * state[i];
        prev_begin = begin;
        prev_len = pos - begin;
      }
      return;
    }
    case BasisKind::tabular_indicator: {
      out.setZero();
      const auto cell = static_cast<Eigen::Index>(std::lround(state[0]));
      require(cell >= 0 && cell < spec.num_cells, "tabular basis: state index out of range");
      out[cell] = 1.0;
      return;
    }
  }
}

std::vector<std::vector<int>> basis_monomials(const BasisSpec& spec) {
  spec.validate();
  const auto d = static_cast<std::size_t>(spec.input_dim);
  std::vector<std::vector<int>> out;
  if (spec.kind == BasisKind::tabular_indicator) return out;
  out.emplace_back(d, 0);
  if (spec.kind == BasisKind::polynomial && spec.degree == 0) return out;
  for (std::size_t i = 0; i < d; ++i) {
    out.emplace_back(d, 0);
    out.back()[i] = 1;
  }
  if (spec.kind == BasisKind::quadratic || spec.kind == BasisKind::quadratic_unique) {
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t j = spec.kind == BasisKind::quadratic ? 0 : i; j < d; ++j) {
        std::vector<int> e(d, 0);
        ++e[i];
        ++e[j];
        out.push_back(std::move(e));
      }
    return out;
  }
  // polynomial: each block multiplies the previous block by every coordinate
  std::size_t prev_begin = 1;
  std::size_t prev_len = d;
  for (int j = 2; j <= spec.degree; ++j) {
    const std::size_t begin = out.size();
    for (std::size_t p = 0; p < prev_len; ++p)
      for (std::size_t i = 0; i < d; ++i) {
        std::vector<int> e = out[prev_begin + p];
        ++e[i];
        out.push_back(std::move(e));
      }
    prev_begin = begin;
    prev_len = out.size() - begin;
  }
  return out;
}

std::optional<Vector> basis_expectation(const BasisSpec& spec,
                                        const std::function<double(const std::vector<int>&)>& moment) {
  if (spec.kind == BasisKind::tabular_indicator || !moment) return std::nullopt;
  const auto monomials = basis_monomials(spec);
  Vector mean(static_cast<Eigen::Index>(monomials.size()));
  for (std::size_t i = 0; i < monomials.size(); ++i) mean[static_cast<Eigen::Index>(i)] = moment(monomials[i]);
  return mean;
}

Vector build_basis(const Vector& state, const BasisSpec& spec) {
  Vector out(spec.feature_dim());
  build_basis_into(state, spec, out);
  return out;
}

}  // namespace cyclic
