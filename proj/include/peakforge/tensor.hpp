#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace peakforge::nn {

/// Dense row-major f64 tensor. Training nets here are tiny, so clarity wins
/// over views/strides: reshape copies metadata only, everything else owns its
/// data.
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<double> data;

  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> s);

  static Tensor zeros(std::vector<std::size_t> s) { return Tensor(std::move(s)); }

  std::size_t numel() const { return data.size(); }
  bool empty() const { return data.empty(); }

  double* ptr() { return data.data(); }
  const double* ptr() const { return data.data(); }

  /// Same data, new shape; product must match.
  Tensor reshaped(std::vector<std::size_t> s) const;

  std::string shape_str() const;
};

std::size_t shape_numel(const std::vector<std::size_t>& s);
std::string shape_str(const std::vector<std::size_t>& s);

}  // namespace peakforge::nn
