#include "peakforge/objectives.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "peakforge/error.hpp"

namespace peakforge {

const char* direction_name(Direction d) {
  return d == Direction::minimize ? "minimize" : "maximize";
}

ObjectiveSpec::ObjectiveSpec(std::vector<std::string> n, std::vector<Direction> d)
    : names(std::move(n)), directions(std::move(d)) {
  if (names.empty()) throw ConfigError("objective list must be non-empty");
  if (names.size() != directions.size())
    throw ConfigError("objective names and directions differ in length");
  std::set<std::string> seen;
  for (const std::string& name : names) {
    if (name.empty()) throw ConfigError("empty objective name");
    if (!seen.insert(name).second)
      throw ConfigError("duplicate objective name '" + name + "'");
  }
}

std::size_t ObjectiveSpec::index_of(const std::string& name) const {
  const auto it = std::find(names.begin(), names.end(), name);
  if (it == names.end()) throw ConfigError("unknown objective '" + name + "'");
  return static_cast<std::size_t>(it - names.begin());
}

nlohmann::json ObjectiveSpec::to_json() const {
  nlohmann::json arr = nlohmann::json::array();
  for (std::size_t i = 0; i < names.size(); ++i)
    arr.push_back({{"name", names[i]}, {"direction", direction_name(directions[i])}});
  return arr;
}

ObjectiveSpec ObjectiveSpec::from_json(const nlohmann::json& j) {
  if (!j.is_array()) throw ConfigError("objective spec must be a JSON array");
  std::vector<std::string> names;
  std::vector<Direction> dirs;
  for (const auto& e : j) {
    if (!e.is_object() || !e.contains("name") || !e.contains("direction"))
      throw ConfigError("objective entry needs 'name' and 'direction'");
    names.push_back(e["name"].get<std::string>());
    const std::string d = e["direction"].get<std::string>();
    if (d == "minimize")
      dirs.push_back(Direction::minimize);
    else if (d == "maximize")
      dirs.push_back(Direction::maximize);
    else
      throw ConfigError("unknown objective direction '" + d + "'");
  }
  return ObjectiveSpec(std::move(names), std::move(dirs));
}

ObjectiveSpec ObjectiveSpec::parse(const std::vector<std::string>& tokens) {
  std::vector<std::string> names;
  std::vector<Direction> dirs;
  for (const std::string& tok : tokens) {
    const auto colon = tok.rfind(':');
    if (colon == std::string::npos || colon == 0)
      throw ConfigError("objective '" + tok + "' must look like name:min or name:max");
    const std::string dir = tok.substr(colon + 1);
    names.push_back(tok.substr(0, colon));
    if (dir == "min")
      dirs.push_back(Direction::minimize);
    else if (dir == "max")
      dirs.push_back(Direction::maximize);
    else
      throw ConfigError("objective '" + tok + "' has unknown direction '" + dir +
                        "' (expected min or max)");
  }
  return ObjectiveSpec(std::move(names), std::move(dirs));
}

std::vector<double> direction_adjusted(const ObjectiveSpec& spec,
                                       const std::vector<double>& v) {
  if (v.size() != spec.size())
    throw ConfigError("objective vector length " + std::to_string(v.size()) +
                      " does not match spec size " + std::to_string(spec.size()));
  std::vector<double> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i)
    out[i] = spec.directions[i] == Direction::maximize ? -v[i] : v[i];
  return out;
}

NormalizationState::NormalizationState(std::size_t d)
    : min_(d, 0.0), max_(d, 0.0) {}

void NormalizationState::observe(const ObjectiveSpec& spec,
                                 const std::vector<double>& raw) {
  const std::vector<double> adj = direction_adjusted(spec, raw);
  for (double x : adj)
    if (!std::isfinite(x)) throw ConfigError("non-finite objective value observed");
  if (min_.empty()) {
    min_.assign(adj.size(), 0.0);
    max_.assign(adj.size(), 0.0);
  }
  if (adj.size() != min_.size())
    throw ConfigError("objective dimensionality changed mid-run");
  if (count_ == 0) {
    min_ = adj;
    max_ = adj;
  } else {
    for (std::size_t i = 0; i < adj.size(); ++i) {
      min_[i] = std::min(min_[i], adj[i]);
      max_[i] = std::max(max_[i], adj[i]);
    }
  }
  ++count_;
}

std::vector<double> NormalizationState::normalize(const ObjectiveSpec& spec,
                                                  const std::vector<double>& raw) const {
  if (count_ == 0) throw ConfigError("normalize called before any observation");
  const std::vector<double> adj = direction_adjusted(spec, raw);
  std::vector<double> out(adj.size());
  for (std::size_t i = 0; i < adj.size(); ++i) {
    const double range = max_[i] - min_[i];
    if (range <= 0.0) {
      out[i] = 0.0;
    } else {
      const double t = (adj[i] - min_[i]) / range;
      out[i] = t < 0.0 ? 0.0 : (t > 1.0 ? 1.0 : t);
    }
  }
  return out;
}

WeightVector::WeightVector(std::vector<double> weights) : w(std::move(weights)) {
  if (w.empty()) throw ConfigError("weight vector must be non-empty");
  double sum = 0.0;
  for (double x : w) {
    if (!(x >= 0.0)) throw ConfigError("weight vector entries must be >= 0");
    sum += x;
  }
  if (std::abs(sum - 1.0) > 1e-12)
    throw ConfigError("weight vector must sum to 1 (got " + std::to_string(sum) + ")");
}

WeightVector sample_weights(std::size_t d, Rng& rng) {
  if (d == 0) throw ConfigError("weight dimension must be >= 1");
  std::vector<double> e(d);
  double sum = 0.0;
  for (auto& x : e) {
    x = -std::log(1.0 - rng.uniform01());
    sum += x;
  }
  // All-zero draws are impossible barring log(1) for every coordinate; guard
  // anyway to keep the simplex invariant unconditional.
  if (sum <= 0.0) return WeightVector(std::vector<double>(d, 1.0 / double(d)));
  for (auto& x : e) x /= sum;
  return WeightVector(std::move(e));
}

double chebyshev(const std::vector<double>& normalized, const WeightVector& w,
                 double rho) {
  if (normalized.size() != w.size())
    throw ConfigError("chebyshev: weight/objective dimension mismatch");
  double mx = 0.0, sum = 0.0;
  for (std::size_t i = 0; i < normalized.size(); ++i) {
    const double t = w.w[i] * normalized[i];
    mx = std::max(mx, t);
    sum += t;
  }
  return mx + rho * sum;
}

}  // namespace peakforge
