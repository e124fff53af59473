#pragma once

#include <vector>

#include "cyclic/core/types.hpp"

namespace cyclic {

struct RandomForestSpec {
  int num_trees = 100;
  /// 0 means unbounded.
  int max_depth = 0;
  int min_leaf = 5;
  /// Fraction of features examined per split (at least one).
  double feature_subsample = 1.0 / 3.0;

  void validate() const;
  int features_per_split(int input_dim) const;
};

/// CART regression tree stored as a flat node array. Node 0 is the root.
class RegressionTree {
 public:
  struct Node {
    int feature = -1;  // -1 marks a leaf
    double threshold = 0.0;
    int left = -1;
    int right = -1;
    double value = 0.0;
  };

  RegressionTree() = default;
  explicit RegressionTree(std::vector<Node> nodes) : nodes_(std::move(nodes)) {}

  double predict(const double* x) const {
    int i = 0;
    while (nodes_[static_cast<std::size_t>(i)].feature >= 0) {
      const auto& n = nodes_[static_cast<std::size_t>(i)];
      i = x[n.feature] <= n.threshold ? n.left : n.right;
    }
    return nodes_[static_cast<std::size_t>(i)].value;
  }

  const std::vector<Node>& nodes() const { return nodes_; }
  int depth() const;

  /// Grows a tree on a multiset of rows (indices may repeat). Splits maximize
  /// the reduction in squared error; candidate features are drawn from `rng`.
  static RegressionTree grow(const Matrix& inputs, const Vector& targets, std::vector<int> rows,
                             const RandomForestSpec& spec, Rng& rng);

 private:
  std::vector<Node> nodes_;
};

class RandomForestModel {
 public:
  RandomForestModel() = default;
  RandomForestModel(std::vector<RegressionTree> trees, int input_dim)
      : trees_(std::move(trees)), input_dim_(input_dim) {}

  double predict(const Vector& x) const;
  const std::vector<RegressionTree>& trees() const { return trees_; }
  int input_dim() const { return input_dim_; }

 private:
  std::vector<RegressionTree> trees_;
  int input_dim_ = 0;
};

/// Bootstrap multiplicities, one vector of length n per tree. Indices are drawn
/// from the stream in sample-index order: for tree t, draw i = 0..n-1 picks
/// uniformly from [0, n) and increments that sample's count.
std::vector<std::vector<int>> draw_bootstrap_counts(int num_samples, int num_trees, Rng& rng);

/// Grows one tree per count vector; the stream only drives feature sampling.
RandomForestModel fit_forest_with_counts(const Matrix& inputs, const Vector& targets,
                                         const std::vector<std::vector<int>>& counts, const RandomForestSpec& spec,
                                         Rng& rng);

RandomForestModel fit_forest(const Matrix& inputs, const Vector& targets, const RandomForestSpec& spec, Rng& rng);

}  // namespace cyclic
