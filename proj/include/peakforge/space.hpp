#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "peakforge/rng.hpp"

namespace peakforge {

enum class Kind { continuous, discrete_int, categorical };
enum class Scale { linear, log10 };

struct Dimension {
  std::string name;
  Kind kind = Kind::continuous;
  double lower = 0.0;                // continuous / discrete-int
  double upper = 0.0;
  Scale scale = Scale::linear;       // continuous only
  std::vector<std::string> choices;  // categorical only

  bool operator==(const Dimension&) const = default;
};

/// One hyperparameter assignment. Integer dimensions hold exact integers,
/// categorical dimensions hold one of the choice strings.
using Value = std::variant<double, std::int64_t, std::string>;

struct Configuration {
  std::string space_name;
  std::map<std::string, Value> values;

  bool operator==(const Configuration&) const = default;
};

/// Flat hyperparameter search space. Immutable after construction and safe
/// to share across threads; all randomness comes from caller-owned Rng state.
class SearchSpace {
 public:
  /// Validates all dimension and space invariants; throws ConfigError with
  /// the offending field path on violation.
  SearchSpace(std::string name, std::vector<Dimension> dims,
              std::vector<std::string> architecture_dims);

  const std::string& name() const { return name_; }
  const std::vector<Dimension>& dimensions() const { return dims_; }
  const std::vector<std::string>& architecture_dims() const { return arch_; }
  std::vector<std::string> training_dims() const;
  std::size_t size() const { return dims_.size(); }

  Configuration sample(Rng& rng) const;

  /// Maps a configuration to [0,1]^d: affine for linear dims, log-ratio for
  /// log10 dims, (v-lo)/(hi-lo) for integers, index/(k-1) for categoricals.
  std::vector<double> encode(const Configuration& c) const;
  /// Inverse of encode. Coordinates are clamped to [0,1]; integer and
  /// categorical coordinates round to nearest with ties toward lower.
  Configuration decode(const std::vector<double>& x) const;

  /// Throws ConfigError if the configuration does not match this space.
  void validate(const Configuration& c) const;

  nlohmann::json to_json() const;

  bool operator==(const SearchSpace&) const = default;

 private:
  std::string name_;
  std::vector<Dimension> dims_;
  std::vector<std::string> arch_;
};

/// Table-driven presets: mlpBragg, cnnBragg, mlpPtycho, cnnPtycho.
SearchSpace builtin_space(const std::string& name);

SearchSpace load_space(const nlohmann::json& doc);
SearchSpace load_space_file(const std::string& path);

/// Resolves a --space argument: preset name first, then file path.
SearchSpace resolve_space(const std::string& name_or_path);

const char* kind_name(Kind k);
const char* scale_name(Scale s);

nlohmann::json value_to_json(const Value& v);
nlohmann::json config_to_json(const Configuration& c);
Configuration config_from_json(const nlohmann::json& j, const SearchSpace& space);

}  // namespace peakforge
