#pragma once

#include <cstdint>
#include <utility>
#include <vector>

namespace peakforge {

struct TrainingSet {
  std::vector<std::vector<double>> inputs;  // rows in [0,1]^d
  std::vector<double> targets;
};

struct ForestParams {
  std::size_t n_trees = 50;
  std::size_t max_depth = 12;
  std::size_t min_leaf = 3;
  bool bootstrap = true;  // disabled only by exact-fit tests
};

/// Bagged regression trees with greedy variance-reduction splits over a
/// random half of the dimensions per node. Immutable once fitted; predict is
/// safe to call concurrently.
class RegressionForest {
 public:
  /// Deterministic given (data, params, seed). Throws ConfigError for fewer
  /// than 2 rows or ragged inputs.
  static RegressionForest fit(const TrainingSet& data, const ForestParams& params,
                              std::uint64_t seed);

  /// Returns (mean over trees, sample std across trees; 0 for one tree).
  std::pair<double, double> predict(const std::vector<double>& x) const;

  std::size_t dimension() const { return dim_; }
  std::size_t tree_count() const { return tree_roots_.size(); }

 private:
  struct Node {
    std::int32_t split_dim = -1;  // -1 marks a leaf
    double threshold = 0.0;
    std::uint32_t left = 0, right = 0;
    double value = 0.0;  // leaf mean
  };

  double predict_tree(std::size_t tree, const std::vector<double>& x) const;

  std::size_t dim_ = 0;
  std::vector<Node> nodes_;
  std::vector<std::uint32_t> tree_roots_;
};

}  // namespace peakforge
