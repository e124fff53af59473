#include "cyclic/regressors/forest.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace cyclic {

void RandomForestSpec::validate() const {
  require(num_trees >= 1, "random forest: num_trees must be >= 1");
  require(max_depth >= 0, "random forest: max_depth must be >= 0 (0 = unbounded)");
  require(min_leaf >= 1, "random forest: min_leaf must be >= 1");
  require(feature_subsample > 0.0 && feature_subsample <= 1.0, "random forest: feature_subsample must lie in (0, 1]");
}

int RandomForestSpec::features_per_split(int input_dim) const {
  return std::clamp(static_cast<int>(std::lround(feature_subsample * input_dim)), 1, input_dim);
}

int RegressionTree::depth() const {
  if (nodes_.empty()) return 0;
  std::vector<std::pair<int, int>> stack{{0, 0}};
  int best = 0;
  while (!stack.empty()) {
    auto [i, d] = stack.back();
    stack.pop_back();
    best = std::max(best, d);
    const auto& n = nodes_[static_cast<std::size_t>(i)];
    if (n.feature >= 0) {
      stack.emplace_back(n.left, d + 1);
      stack.emplace_back(n.right, d + 1);
    }
  }
  return best;
}

namespace {

struct Split {
  int feature = -1;
  double threshold = 0.0;
  double score = -std::numeric_limits<double>::infinity();
  std::size_t left_count = 0;
};

}  // namespace

namespace {

// Sample indices sorted by each feature; ties keep index order.
std::vector<std::vector<int>> sorted_by_feature(const Matrix& inputs) {
  std::vector<std::vector<int>> sorted(static_cast<std::size_t>(inputs.cols()),
                                       std::vector<int>(static_cast<std::size_t>(inputs.rows())));
  for (Eigen::Index f = 0; f < inputs.cols(); ++f) {
    auto& o = sorted[static_cast<std::size_t>(f)];
    std::iota(o.begin(), o.end(), 0);
    std::stable_sort(o.begin(), o.end(), [&](int a, int b) { return inputs(a, f) < inputs(b, f); });
  }
  return sorted;
}

RegressionTree grow_presorted(const Matrix& inputs, const Vector& targets, const std::vector<int>& rows,
                              std::vector<std::vector<int>> order, const RandomForestSpec& spec, Rng& rng);

}  // namespace

RegressionTree RegressionTree::grow(const Matrix& inputs, const Vector& targets, std::vector<int> rows,
                                    const RandomForestSpec& spec, Rng& rng) {
  const int d = static_cast<int>(inputs.cols());
  std::vector<std::vector<int>> order(static_cast<std::size_t>(d), std::vector<int>(rows.size()));
  for (int f = 0; f < d; ++f) {
    auto& o = order[static_cast<std::size_t>(f)];
    std::iota(o.begin(), o.end(), 0);
    std::stable_sort(o.begin(), o.end(), [&](int a, int b) {
      return inputs(rows[static_cast<std::size_t>(a)], f) < inputs(rows[static_cast<std::size_t>(b)], f);
    });
  }
  return grow_presorted(inputs, targets, rows, std::move(order), spec, rng);
}

namespace {

// order[f] lists positions into `rows` sorted by feature f. Every node owns the
// same [begin, end) range in each list; splits stable-partition the ranges.
RegressionTree grow_presorted(const Matrix& inputs, const Vector& targets, const std::vector<int>& rows,
                              std::vector<std::vector<int>> order, const RandomForestSpec& spec, Rng& rng) {
  using Node = RegressionTree::Node;
  const int d = static_cast<int>(inputs.cols());
  const int mtry = spec.features_per_split(d);
  const auto min_leaf = static_cast<std::size_t>(spec.min_leaf);
  const std::size_t total = rows.size();
  auto x_at = [&](int f, int pos) { return inputs(rows[static_cast<std::size_t>(pos)], f); };
  auto y_at = [&](int pos) { return targets[rows[static_cast<std::size_t>(pos)]]; };

  std::vector<Node> nodes;
  struct Pending {
    int node;
    std::size_t begin;
    std::size_t end;
    int depth;
  };
  nodes.emplace_back();
  std::vector<Pending> stack;
  stack.push_back({0, 0, total, 0});

  std::vector<int> feature_order(static_cast<std::size_t>(d));
  std::vector<char> goes_left(total, 0);
  std::vector<int> buffer(total);

  while (!stack.empty()) {
    const Pending job = stack.back();
    stack.pop_back();
    const std::size_t n = job.end - job.begin;
    const auto& any = order.front();

    double sum = 0.0;
    const double first_y = y_at(any[job.begin]);
    bool constant_target = true;
    for (std::size_t i = job.begin; i < job.end; ++i) {
      const double y = y_at(any[i]);
      sum += y;
      constant_target = constant_target && y == first_y;
    }
    Node& node = nodes[static_cast<std::size_t>(job.node)];
    node.value = constant_target ? first_y : sum / static_cast<double>(n);
    const bool depth_exhausted = spec.max_depth > 0 && job.depth >= spec.max_depth;
    if (constant_target || depth_exhausted || n < 2 * min_leaf) continue;

    // Visit features in random order until mtry non-constant ones have been scored.
    std::iota(feature_order.begin(), feature_order.end(), 0);
    Split best;
    int scored = 0;
    for (int pos = 0; pos < d && scored < mtry; ++pos) {
      std::uniform_int_distribution<int> pick(pos, d - 1);
      std::swap(feature_order[static_cast<std::size_t>(pos)],
                feature_order[static_cast<std::size_t>(pick(rng))]);
      const int f = feature_order[static_cast<std::size_t>(pos)];
      const int* o = order[static_cast<std::size_t>(f)].data() + job.begin;
      if (x_at(f, o[0]) == x_at(f, o[n - 1])) continue;
      ++scored;

      double left_sum = 0.0;
      double prev_x = x_at(f, o[0]);
      for (std::size_t i = 1; i < n; ++i) {
        left_sum += y_at(o[i - 1]);
        const double x = x_at(f, o[i]);
        const double lo = prev_x;
        prev_x = x;
        if (i < min_leaf || n - i < min_leaf) continue;
        if (lo == x) continue;
        const double right_sum = sum - left_sum;
        const double score = left_sum * left_sum / static_cast<double>(i) +
                             right_sum * right_sum / static_cast<double>(n - i);
        if (score > best.score) {
          best.score = score;
          best.feature = f;
          best.threshold = 0.5 * (lo + x);
          // Guard against the midpoint rounding onto the right-hand value.
          if (!(best.threshold < x)) best.threshold = lo;
          best.left_count = i;
        }
      }
    }
    if (best.feature < 0) continue;

    const int* ob = order[static_cast<std::size_t>(best.feature)].data() + job.begin;
    for (std::size_t i = 0; i < n; ++i) goes_left[static_cast<std::size_t>(ob[i])] = i < best.left_count ? 1 : 0;
    for (auto& o : order) {
      std::size_t l = job.begin;
      std::size_t r = 0;
      for (std::size_t i = job.begin; i < job.end; ++i) {
        const int p = o[i];
        if (goes_left[static_cast<std::size_t>(p)])
          o[l++] = p;
        else
          buffer[r++] = p;
      }
      std::copy(buffer.begin(), buffer.begin() + static_cast<std::ptrdiff_t>(r), o.begin() + static_cast<std::ptrdiff_t>(l));
    }

    const int left = static_cast<int>(nodes.size());
    nodes.emplace_back();
    const int right = static_cast<int>(nodes.size());
    nodes.emplace_back();
    Node& parent = nodes[static_cast<std::size_t>(job.node)];
    parent.feature = best.feature;
    parent.threshold = best.threshold;
    parent.left = left;
    parent.right = right;
    const std::size_t mid = job.begin + best.left_count;
    // Right is pushed first so the left subtree is grown first.
    stack.push_back({right, mid, job.end, job.depth + 1});
    stack.push_back({left, job.begin, mid, job.depth + 1});
  }
  return RegressionTree(std::move(nodes));
}

}  // namespace

double RandomForestModel::predict(const Vector& x) const {
  require(x.size() == input_dim_, "random forest expects input dimension " + std::to_string(input_dim_) + ", got " +
                                      std::to_string(x.size()));
  double sum = 0.0;
  for (const auto& t : trees_) sum += t.predict(x.data());
  return sum / static_cast<double>(trees_.size());
}

std::vector<std::vector<int>> draw_bootstrap_counts(int num_samples, int num_trees, Rng& rng) {
  require(num_samples >= 1, "bootstrap of an empty sample");
  std::uniform_int_distribution<int> pick(0, num_samples - 1);
  std::vector<std::vector<int>> counts(static_cast<std::size_t>(num_trees),
                                       std::vector<int>(static_cast<std::size_t>(num_samples), 0));
  for (auto& c : counts)
    for (int i = 0; i < num_samples; ++i) ++c[static_cast<std::size_t>(pick(rng))];
  return counts;
}

RandomForestModel fit_forest_with_counts(const Matrix& inputs, const Vector& targets,
                                         const std::vector<std::vector<int>>& counts, const RandomForestSpec& spec,
                                         Rng& rng) {
  spec.validate();
  require(inputs.rows() == targets.size() && inputs.rows() >= 1, "random forest: empty or mismatched training data");
  const auto sorted = sorted_by_feature(inputs);
  std::vector<RegressionTree> trees;
  trees.reserve(counts.size());
  std::vector<int> first(static_cast<std::size_t>(inputs.rows()));
  for (const auto& c : counts) {
    require(static_cast<Eigen::Index>(c.size()) == inputs.rows(), "bootstrap counts do not match the sample");
    std::vector<int> rows;
    rows.reserve(static_cast<std::size_t>(inputs.rows()));
    for (std::size_t i = 0; i < c.size(); ++i) {
      first[i] = static_cast<int>(rows.size());
      for (int j = 0; j < c[i]; ++j) rows.push_back(static_cast<int>(i));
    }
    // Copies of sample i sit at positions first[i] .. first[i] + c[i] - 1, so
    // expanding the global sort gives the same order as sorting the positions.
    std::vector<std::vector<int>> order(sorted.size());
    for (std::size_t f = 0; f < sorted.size(); ++f) {
      auto& o = order[f];
      o.reserve(rows.size());
      for (int i : sorted[f])
        for (int j = 0; j < c[static_cast<std::size_t>(i)]; ++j) o.push_back(first[static_cast<std::size_t>(i)] + j);
    }
    trees.push_back(grow_presorted(inputs, targets, rows, std::move(order), spec, rng));
  }
  return RandomForestModel(std::move(trees), static_cast<int>(inputs.cols()));
}

RandomForestModel fit_forest(const Matrix& inputs, const Vector& targets, const RandomForestSpec& spec, Rng& rng) {
  spec.validate();
  const auto counts = draw_bootstrap_counts(static_cast<int>(inputs.rows()), spec.num_trees, rng);
  return fit_forest_with_counts(inputs, targets, counts, spec, rng);
}

}  // namespace cyclic
