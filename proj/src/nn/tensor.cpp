#include "peakforge/tensor.hpp"

#include "peakforge/error.hpp"

namespace peakforge::nn {

std::size_t shape_numel(const std::vector<std::size_t>& s) {
  std::size_t n = 1;
  for (std::size_t d : s) n *= d;
  return s.empty() ? 0 : n;
}

std::string shape_str(const std::vector<std::size_t>& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += ", ";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

Tensor::Tensor(std::vector<std::size_t> s) : shape(std::move(s)) {
  for (std::size_t d : shape)
    if (d == 0)
      throw ConfigError("zero-sized tensor dimension in " + nn::shape_str(shape));
  data.assign(shape_numel(shape), 0.0);
}

Tensor Tensor::reshaped(std::vector<std::size_t> s) const {
  if (shape_numel(s) != numel())
    throw ConfigError("reshape " + nn::shape_str(shape) + " -> " + nn::shape_str(s) +
                      " changes element count");
  Tensor t;
  t.shape = std::move(s);
  t.data = data;
  return t;
}

std::string Tensor::shape_str() const { return nn::shape_str(shape); }

}  // namespace peakforge::nn
