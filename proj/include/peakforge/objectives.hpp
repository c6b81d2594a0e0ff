#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "peakforge/rng.hpp"

namespace peakforge {

enum class Direction { minimize, maximize };

/// Ordered list of named objectives with optimization directions. Objective
/// vectors throughout the codebase are plain std::vector<double> aligned
/// with this order.
struct ObjectiveSpec {
  std::vector<std::string> names;
  std::vector<Direction> directions;

  ObjectiveSpec() = default;
  /// Throws ConfigError unless names are unique, non-empty, and counts match.
  ObjectiveSpec(std::vector<std::string> n, std::vector<Direction> d);

  std::size_t size() const { return names.size(); }
  std::size_t index_of(const std::string& name) const;

  nlohmann::json to_json() const;
  static ObjectiveSpec from_json(const nlohmann::json& j);
  /// Parses CLI tokens of the form "name:min" / "name:max".
  static ObjectiveSpec parse(const std::vector<std::string>& tokens);

  bool operator==(const ObjectiveSpec&) const = default;
};

/// Negates maximize coordinates so that downstream code can assume uniform
/// minimization.
std::vector<double> direction_adjusted(const ObjectiveSpec& spec,
                                       const std::vector<double>& v);

/// Running per-objective min/max over completed trials, kept in
/// direction-adjusted (minimization) terms. Failed trials are never observed
/// here, so penalty values cannot distort the range.
class NormalizationState {
 public:
  NormalizationState() = default;
  explicit NormalizationState(std::size_t d);

  void observe(const ObjectiveSpec& spec, const std::vector<double>& raw);
  bool has_observations() const { return count_ > 0; }
  std::size_t count() const { return count_; }

  /// Maps raw objectives to [0,1]^d: (adjusted - min)/(max - min), clamped,
  /// with 0 for degenerate (min == max) coordinates.
  std::vector<double> normalize(const ObjectiveSpec& spec,
                                const std::vector<double>& raw) const;

  const std::vector<double>& mins() const { return min_; }
  const std::vector<double>& maxs() const { return max_; }

 private:
  std::vector<double> min_, max_;
  std::size_t count_ = 0;
};

/// Point on the probability simplex used to scalarize objectives.
struct WeightVector {
  std::vector<double> w;

  WeightVector() = default;
  /// Throws ConfigError unless entries are >= 0 and sum to 1 within 1e-12.
  explicit WeightVector(std::vector<double> weights);

  std::size_t size() const { return w.size(); }
};

/// Uniform sample on the (d-1)-simplex via exponential normalization.
WeightVector sample_weights(std::size_t d, Rng& rng);

/// Augmented Chebyshev scalarization with the ideal point at the origin:
/// max_i(w_i * y_i) + rho * sum_i(w_i * y_i).
double chebyshev(const std::vector<double>& normalized, const WeightVector& w,
                 double rho);

const char* direction_name(Direction d);

}  // namespace peakforge
