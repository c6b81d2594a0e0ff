#include "peakforge/surrogate.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "peakforge/error.hpp"
#include "peakforge/rng.hpp"

namespace peakforge {
namespace {

double mean_of(const std::vector<double>& targets, const std::vector<std::size_t>& rows) {
  double s = 0.0;
  for (std::size_t r : rows) s += targets[r];
  return s / double(rows.size());
}

}  // namespace

RegressionForest RegressionForest::fit(const TrainingSet& data,
                                       const ForestParams& params,
                                       std::uint64_t seed) {
  const std::size_t n = data.inputs.size();
  if (n < 2) throw ConfigError("forest fit requires at least 2 rows");
  if (data.targets.size() != n)
    throw ConfigError("forest fit: inputs/targets length mismatch");
  const std::size_t d = data.inputs.front().size();
  if (d == 0) throw ConfigError("forest fit: zero-dimensional inputs");
  for (const auto& row : data.inputs)
    if (row.size() != d) throw ConfigError("forest fit: ragged input rows");
  if (params.n_trees == 0 || params.max_depth == 0 || params.min_leaf == 0)
    throw ConfigError("forest fit: n_trees, max_depth, min_leaf must be positive");

  RegressionForest forest;
  forest.dim_ = d;

  const std::size_t n_candidates = (d + 1) / 2;  // ceil(d/2)

  for (std::size_t t = 0; t < params.n_trees; ++t) {
    Rng rng(mix_seed(seed, t));

    std::vector<std::size_t> rows(n);
    if (params.bootstrap) {
      for (auto& r : rows) r = rng.index(n);
    } else {
      std::iota(rows.begin(), rows.end(), std::size_t{0});
    }

    // Iterative build with an explicit stack; parent links patched after
    // children are allocated.
    struct Frame {
      std::vector<std::size_t> rows;
      std::size_t depth;
      std::uint32_t node;
    };

    const auto new_node = [&]() {
      forest.nodes_.push_back(Node{});
      return static_cast<std::uint32_t>(forest.nodes_.size() - 1);
    };

    const std::uint32_t root = new_node();
    forest.tree_roots_.push_back(root);
    std::vector<Frame> stack;
    stack.push_back({std::move(rows), 0, root});

    std::vector<std::size_t> dims(d);
    std::vector<std::size_t> order;

    while (!stack.empty()) {
      Frame f = std::move(stack.back());
      stack.pop_back();
      Node& node = forest.nodes_[f.node];
      node.value = mean_of(data.targets, f.rows);

      if (f.depth >= params.max_depth || f.rows.size() < 2 * params.min_leaf) continue;

      bool constant = true;
      for (std::size_t r : f.rows)
        constant = constant && data.targets[r] == data.targets[f.rows.front()];
      if (constant) continue;

      // Random ceil(d/2) candidate dimensions via partial Fisher-Yates.
      std::iota(dims.begin(), dims.end(), std::size_t{0});
      for (std::size_t i = 0; i < n_candidates; ++i) {
        const std::size_t j = i + rng.index(d - i);
        std::swap(dims[i], dims[j]);
      }

      double best_gain = 0.0;
      std::int32_t best_dim = -1;
      double best_thr = 0.0;

      double sum = 0.0, sumsq = 0.0;
      for (std::size_t r : f.rows) {
        sum += data.targets[r];
        sumsq += data.targets[r] * data.targets[r];
      }
      const double sse_parent = sumsq - sum * sum / double(f.rows.size());

      for (std::size_t ci = 0; ci < n_candidates; ++ci) {
        const std::size_t dim = dims[ci];
        order = f.rows;
        std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
          const double xa = data.inputs[a][dim], xb = data.inputs[b][dim];
          return xa != xb ? xa < xb : a < b;
        });
        double lsum = 0.0, lsq = 0.0;
        const std::size_t m = order.size();
        for (std::size_t i = 0; i + 1 < m; ++i) {
          const std::size_t r = order[i];
          lsum += data.targets[r];
          lsq += data.targets[r] * data.targets[r];
          const double x0 = data.inputs[r][dim];
          const double x1 = data.inputs[order[i + 1]][dim];
          if (x0 == x1) continue;  // no threshold strictly between equal values
          const std::size_t nl = i + 1, nr = m - nl;
          if (nl < params.min_leaf || nr < params.min_leaf) continue;
          const double rsum = sum - lsum, rsq = sumsq - lsq;
          const double sse = (lsq - lsum * lsum / double(nl)) +
                             (rsq - rsum * rsum / double(nr));
          const double gain = sse_parent - sse;
          if (gain > best_gain) {
            best_gain = gain;
            best_dim = static_cast<std::int32_t>(dim);
            best_thr = 0.5 * (x0 + x1);
          }
        }
      }

      if (best_dim < 0) continue;

      std::vector<std::size_t> left, right;
      for (std::size_t r : f.rows) {
        if (data.inputs[r][static_cast<std::size_t>(best_dim)] <= best_thr)
          left.push_back(r);
        else
          right.push_back(r);
      }
      if (left.empty() || right.empty()) continue;  // degenerate midpoint rounding

      const std::uint32_t li = new_node();
      const std::uint32_t ri = new_node();
      Node& parent = forest.nodes_[f.node];  // re-fetch: new_node may reallocate
      parent.split_dim = best_dim;
      parent.threshold = best_thr;
      parent.left = li;
      parent.right = ri;
      stack.push_back({std::move(right), f.depth + 1, ri});
      stack.push_back({std::move(left), f.depth + 1, li});
    }
  }
  return forest;
}

double RegressionForest::predict_tree(std::size_t tree, const std::vector<double>& x) const {
  std::uint32_t idx = tree_roots_[tree];
  while (nodes_[idx].split_dim >= 0) {
    const Node& nd = nodes_[idx];
    idx = x[static_cast<std::size_t>(nd.split_dim)] <= nd.threshold ? nd.left : nd.right;
  }
  return nodes_[idx].value;
}

std::pair<double, double> RegressionForest::predict(const std::vector<double>& x) const {
  if (x.size() != dim_)
    throw ConfigError("forest predict: expected " + std::to_string(dim_) +
                      " coordinates, got " + std::to_string(x.size()));
  const std::size_t nt = tree_roots_.size();
  double sum = 0.0, sumsq = 0.0;
  for (std::size_t t = 0; t < nt; ++t) {
    const double p = predict_tree(t, x);
    sum += p;
    sumsq += p * p;
  }
  const double mean = sum / double(nt);
  if (nt == 1) return {mean, 0.0};
  const double var = std::max(0.0, (sumsq - sum * sum / double(nt)) / double(nt - 1));
  return {mean, std::sqrt(var)};
}

}  // namespace peakforge
