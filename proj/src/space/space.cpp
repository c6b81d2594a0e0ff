#include "peakforge/space.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "peakforge/error.hpp"

namespace peakforge {
namespace {

std::string dim_path(std::size_t i) { return "dimensions[" + std::to_string(i) + "]"; }

double clamp01(double x) { return x < 0.0 ? 0.0 : (x > 1.0 ? 1.0 : x); }

/// Nearest integer in [lo, hi] with ties toward lower, e.g. 2.5 -> 2.
std::int64_t round_half_down(double v, std::int64_t lo, std::int64_t hi) {
  auto r = static_cast<std::int64_t>(std::ceil(v - 0.5));
  return r < lo ? lo : (r > hi ? hi : r);
}

}  // namespace

const char* kind_name(Kind k) {
  switch (k) {
    case Kind::continuous: return "continuous";
    case Kind::discrete_int: return "discrete-int";
    case Kind::categorical: return "categorical";
  }
  return "?";
}

const char* scale_name(Scale s) { return s == Scale::linear ? "linear" : "log10"; }

SearchSpace::SearchSpace(std::string name, std::vector<Dimension> dims,
                         std::vector<std::string> architecture_dims)
    : name_(std::move(name)), dims_(std::move(dims)), arch_(std::move(architecture_dims)) {
  if (dims_.empty()) throw ConfigError("space '" + name_ + "' has no dimensions");
  std::set<std::string> seen;
  for (std::size_t i = 0; i < dims_.size(); ++i) {
    const Dimension& d = dims_[i];
    if (d.name.empty()) throw ConfigError("empty dimension name at " + dim_path(i));
    if (!seen.insert(d.name).second)
      throw ConfigError("duplicate dimension name '" + d.name + "' at " + dim_path(i));
    switch (d.kind) {
      case Kind::continuous:
      case Kind::discrete_int:
        if (!(d.lower < d.upper))
          throw ConfigError("inverted bounds at " + dim_path(i));
        if (d.kind == Kind::continuous && d.scale == Scale::log10 && !(d.lower > 0.0))
          throw ConfigError("log10 scale requires lower > 0 at " + dim_path(i));
        if (d.kind == Kind::discrete_int &&
            (d.lower != std::floor(d.lower) || d.upper != std::floor(d.upper)))
          throw ConfigError("non-integer bounds at " + dim_path(i));
        if (!d.choices.empty())
          throw ConfigError("choices not allowed for " + std::string(kind_name(d.kind)) +
                            " at " + dim_path(i));
        break;
      case Kind::categorical: {
        std::set<std::string> uniq(d.choices.begin(), d.choices.end());
        if (d.choices.size() < 2 || uniq.size() != d.choices.size())
          throw ConfigError("categorical requires at least 2 distinct choices at " +
                            dim_path(i));
        break;
      }
    }
  }
  std::set<std::string> arch_seen;
  for (const std::string& a : arch_) {
    if (!seen.count(a))
      throw ConfigError("architecture_dims entry '" + a + "' is not a dimension of space '" +
                        name_ + "'");
    if (!arch_seen.insert(a).second)
      throw ConfigError("architecture_dims entry '" + a + "' listed twice");
  }
}

std::vector<std::string> SearchSpace::training_dims() const {
  std::vector<std::string> out;
  for (const Dimension& d : dims_)
    if (std::find(arch_.begin(), arch_.end(), d.name) == arch_.end()) out.push_back(d.name);
  return out;
}

Configuration SearchSpace::sample(Rng& rng) const {
  Configuration c;
  c.space_name = name_;
  for (const Dimension& d : dims_) {
    switch (d.kind) {
      case Kind::continuous:
        if (d.scale == Scale::log10)
          c.values[d.name] =
              std::pow(10.0, rng.uniform(std::log10(d.lower), std::log10(d.upper)));
        else
          c.values[d.name] = rng.uniform(d.lower, d.upper);
        break;
      case Kind::discrete_int:
        c.values[d.name] = rng.uniform_int(static_cast<std::int64_t>(d.lower),
                                           static_cast<std::int64_t>(d.upper));
        break;
      case Kind::categorical:
        c.values[d.name] = d.choices[rng.index(d.choices.size())];
        break;
    }
  }
  return c;
}

std::vector<double> SearchSpace::encode(const Configuration& c) const {
  validate(c);
  std::vector<double> x;
  x.reserve(dims_.size());
  for (const Dimension& d : dims_) {
    const Value& v = c.values.at(d.name);
    switch (d.kind) {
      case Kind::continuous: {
        const double val = std::get<double>(v);
        if (d.scale == Scale::log10)
          x.push_back((std::log10(val) - std::log10(d.lower)) /
                      (std::log10(d.upper) - std::log10(d.lower)));
        else
          x.push_back((val - d.lower) / (d.upper - d.lower));
        break;
      }
      case Kind::discrete_int: {
        const double val = static_cast<double>(std::get<std::int64_t>(v));
        x.push_back((val - d.lower) / (d.upper - d.lower));
        break;
      }
      case Kind::categorical: {
        const std::string& val = std::get<std::string>(v);
        const auto it = std::find(d.choices.begin(), d.choices.end(), val);
        const auto idx = static_cast<double>(it - d.choices.begin());
        x.push_back(idx / static_cast<double>(d.choices.size() - 1));
        break;
      }
    }
  }
  return x;
}

Configuration SearchSpace::decode(const std::vector<double>& x) const {
  if (x.size() != dims_.size())
    throw ConfigError("decode: expected " + std::to_string(dims_.size()) +
                      " coordinates, got " + std::to_string(x.size()));
  Configuration c;
  c.space_name = name_;
  for (std::size_t i = 0; i < dims_.size(); ++i) {
    const Dimension& d = dims_[i];
    const double t = clamp01(x[i]);
    switch (d.kind) {
      case Kind::continuous: {
        double v;
        if (d.scale == Scale::log10)
          v = std::pow(10.0, std::log10(d.lower) +
                                 t * (std::log10(d.upper) - std::log10(d.lower)));
        else
          v = d.lower + t * (d.upper - d.lower);
        c.values[d.name] = std::min(std::max(v, d.lower), d.upper);
        break;
      }
      case Kind::discrete_int: {
        const auto lo = static_cast<std::int64_t>(d.lower);
        const auto hi = static_cast<std::int64_t>(d.upper);
        c.values[d.name] = round_half_down(d.lower + t * (d.upper - d.lower), lo, hi);
        break;
      }
      case Kind::categorical: {
        const auto k = static_cast<std::int64_t>(d.choices.size());
        const auto idx = round_half_down(t * static_cast<double>(k - 1), 0, k - 1);
        c.values[d.name] = d.choices[static_cast<std::size_t>(idx)];
        break;
      }
    }
  }
  return c;
}

void SearchSpace::validate(const Configuration& c) const {
  if (!c.space_name.empty() && c.space_name != name_)
    throw ConfigError("configuration for space '" + c.space_name +
                      "' used with space '" + name_ + "'");
  if (c.values.size() != dims_.size()) {
    for (const auto& [k, v] : c.values) {
      bool known = false;
      for (const Dimension& d : dims_) known = known || d.name == k;
      if (!known) throw ConfigError("configuration has unknown dimension '" + k + "'");
    }
  }
  for (const Dimension& d : dims_) {
    const auto it = c.values.find(d.name);
    if (it == c.values.end())
      throw ConfigError("configuration missing dimension '" + d.name + "'");
    const Value& v = it->second;
    switch (d.kind) {
      case Kind::continuous: {
        if (!std::holds_alternative<double>(v))
          throw ConfigError("dimension '" + d.name + "' expects a real value");
        const double val = std::get<double>(v);
        if (!std::isfinite(val) || val < d.lower || val > d.upper)
          throw ConfigError("dimension '" + d.name + "' value out of bounds");
        break;
      }
      case Kind::discrete_int: {
        if (!std::holds_alternative<std::int64_t>(v))
          throw ConfigError("dimension '" + d.name + "' expects an integer value");
        const auto val = std::get<std::int64_t>(v);
        if (val < static_cast<std::int64_t>(d.lower) ||
            val > static_cast<std::int64_t>(d.upper))
          throw ConfigError("dimension '" + d.name + "' value out of bounds");
        break;
      }
      case Kind::categorical: {
        if (!std::holds_alternative<std::string>(v))
          throw ConfigError("dimension '" + d.name + "' expects a choice string");
        const std::string& val = std::get<std::string>(v);
        if (std::find(d.choices.begin(), d.choices.end(), val) == d.choices.end())
          throw ConfigError("dimension '" + d.name + "' has unknown choice '" + val + "'");
        break;
      }
    }
  }
}

nlohmann::json SearchSpace::to_json() const {
  nlohmann::json dims = nlohmann::json::array();
  for (const Dimension& d : dims_) {
    nlohmann::json jd{{"name", d.name}, {"kind", kind_name(d.kind)}};
    if (d.kind == Kind::categorical) {
      jd["choices"] = d.choices;
    } else {
      jd["lower"] = d.lower;
      jd["upper"] = d.upper;
      if (d.kind == Kind::continuous) jd["scale"] = scale_name(d.scale);
    }
    dims.push_back(std::move(jd));
  }
  return nlohmann::json{{"name", name_}, {"dimensions", std::move(dims)},
                        {"architecture_dims", arch_}};
}

namespace {

Dimension parse_dimension(const nlohmann::json& jd, std::size_t i) {
  if (!jd.is_object()) throw ConfigError("expected object at " + dim_path(i));
  static const std::set<std::string> known{"name", "kind", "lower", "upper",
                                           "scale", "choices"};
  for (const auto& [k, v] : jd.items())
    if (!known.count(k)) throw ConfigError("unknown key '" + k + "' at " + dim_path(i));

  Dimension d;
  if (!jd.contains("name") || !jd["name"].is_string())
    throw ConfigError("missing or non-string 'name' at " + dim_path(i));
  d.name = jd["name"].get<std::string>();
  if (!jd.contains("kind") || !jd["kind"].is_string())
    throw ConfigError("missing or non-string 'kind' at " + dim_path(i));
  const std::string kind = jd["kind"].get<std::string>();
  if (kind == "continuous")
    d.kind = Kind::continuous;
  else if (kind == "discrete-int")
    d.kind = Kind::discrete_int;
  else if (kind == "categorical")
    d.kind = Kind::categorical;
  else
    throw ConfigError("unknown kind '" + kind + "' at " + dim_path(i));

  if (d.kind == Kind::categorical) {
    for (const char* f : {"lower", "upper", "scale"})
      if (jd.contains(f))
        throw ConfigError(std::string("key '") + f + "' not allowed for categorical at " +
                          dim_path(i));
    if (!jd.contains("choices") || !jd["choices"].is_array())
      throw ConfigError("missing or non-array 'choices' at " + dim_path(i));
    for (const auto& c : jd["choices"]) {
      if (!c.is_string())
        throw ConfigError("non-string choice at " + dim_path(i));
      d.choices.push_back(c.get<std::string>());
    }
  } else {
    if (jd.contains("choices"))
      throw ConfigError("key 'choices' not allowed for " + kind + " at " + dim_path(i));
    for (const char* f : {"lower", "upper"})
      if (!jd.contains(f) || !jd[f].is_number())
        throw ConfigError(std::string("missing or non-numeric '") + f + "' at " +
                          dim_path(i));
    d.lower = jd["lower"].get<double>();
    d.upper = jd["upper"].get<double>();
    if (d.kind == Kind::continuous) {
      const std::string scale =
          jd.contains("scale") ? jd["scale"].get<std::string>() : "linear";
      if (scale == "linear")
        d.scale = Scale::linear;
      else if (scale == "log10")
        d.scale = Scale::log10;
      else
        throw ConfigError("unknown scale '" + scale + "' at " + dim_path(i));
    } else if (jd.contains("scale")) {
      throw ConfigError("key 'scale' not allowed for discrete-int at " + dim_path(i));
    }
  }
  return d;
}

}  // namespace

SearchSpace load_space(const nlohmann::json& doc) {
  if (!doc.is_object()) throw ConfigError("space document must be a JSON object");
  static const std::set<std::string> known{"name", "dimensions", "architecture_dims"};
  for (const auto& [k, v] : doc.items())
    if (!known.count(k)) throw ConfigError("unknown key '" + k + "' in space document");
  if (!doc.contains("name") || !doc["name"].is_string())
    throw ConfigError("space document missing string 'name'");
  if (!doc.contains("dimensions") || !doc["dimensions"].is_array())
    throw ConfigError("space document missing array 'dimensions'");

  std::vector<Dimension> dims;
  for (std::size_t i = 0; i < doc["dimensions"].size(); ++i)
    dims.push_back(parse_dimension(doc["dimensions"][i], i));

  std::vector<std::string> arch;
  if (doc.contains("architecture_dims")) {
    if (!doc["architecture_dims"].is_array())
      throw ConfigError("'architecture_dims' must be an array of dimension names");
    for (const auto& a : doc["architecture_dims"]) {
      if (!a.is_string())
        throw ConfigError("'architecture_dims' must contain only strings");
      arch.push_back(a.get<std::string>());
    }
  }
  return SearchSpace(doc["name"].get<std::string>(), std::move(dims), std::move(arch));
}

SearchSpace load_space_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open space file: " + path);
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("space file " + path + ": " + e.what());
  }
  return load_space(doc);
}

SearchSpace builtin_space(const std::string& name) {
  const Dimension nepochs{"nepochs", Kind::discrete_int, 1, 1000, Scale::linear, {}};
  const Dimension batch{"batch", Kind::categorical, 0, 0, Scale::linear,
                        {"8", "16", "32", "64"}};
  const Dimension lr{"lr", Kind::continuous, 0.001, 1.0, Scale::log10, {}};
  const Dimension nfilters{"nfilters", Kind::discrete_int, 1, 256, Scale::linear, {}};

  if (name == "mlpBragg" || name == "mlpPtycho") {
    return SearchSpace(
        name,
        {nepochs,
         {"nunits", Kind::discrete_int, 1, 1000, Scale::linear, {}},
         {"nhidden", Kind::discrete_int, 1, 10, Scale::linear, {}},
         batch, lr},
        {"nunits", "nhidden"});
  }
  if (name == "cnnBragg") {
    return SearchSpace(
        name,
        {nepochs, batch, lr, nfilters,
         {"nconv", Kind::discrete_int, 1, 128, Scale::linear, {}}},
        {"nfilters", "nconv"});
  }
  if (name == "cnnPtycho") {
    return SearchSpace(
        name,
        {nepochs, batch, lr, nfilters,
         {"enconv", Kind::discrete_int, 1, 128, Scale::linear, {}},
         {"deconv1", Kind::discrete_int, 1, 128, Scale::linear, {}},
         {"deconv2", Kind::discrete_int, 1, 128, Scale::linear, {}}},
        {"nfilters", "enconv", "deconv1", "deconv2"});
  }
  throw ConfigError("unknown preset '" + name +
                    "' (expected mlpBragg, cnnBragg, mlpPtycho, cnnPtycho)");
}

SearchSpace resolve_space(const std::string& name_or_path) {
  try {
    return builtin_space(name_or_path);
  } catch (const ConfigError&) {
    return load_space_file(name_or_path);
  }
}

nlohmann::json value_to_json(const Value& v) {
  if (std::holds_alternative<double>(v)) return std::get<double>(v);
  if (std::holds_alternative<std::int64_t>(v)) return std::get<std::int64_t>(v);
  return std::get<std::string>(v);
}

nlohmann::json config_to_json(const Configuration& c) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [k, v] : c.values) j[k] = value_to_json(v);
  return j;
}

Configuration config_from_json(const nlohmann::json& j, const SearchSpace& space) {
  if (!j.is_object()) throw ConfigError("configuration must be a JSON object");
  Configuration c;
  c.space_name = space.name();
  for (const Dimension& d : space.dimensions()) {
    if (!j.contains(d.name))
      throw ConfigError("configuration missing dimension '" + d.name + "'");
    const nlohmann::json& v = j[d.name];
    switch (d.kind) {
      case Kind::continuous:
        if (!v.is_number())
          throw ConfigError("dimension '" + d.name + "' expects a number");
        c.values[d.name] = v.get<double>();
        break;
      case Kind::discrete_int:
        if (!v.is_number_integer())
          throw ConfigError("dimension '" + d.name + "' expects an integer");
        c.values[d.name] = v.get<std::int64_t>();
        break;
      case Kind::categorical:
        if (v.is_string())
          c.values[d.name] = v.get<std::string>();
        else if (v.is_number_integer())
          // Allow numeric literals for numeric-looking choices like batch sizes.
          c.values[d.name] = std::to_string(v.get<std::int64_t>());
        else
          throw ConfigError("dimension '" + d.name + "' expects a choice string");
        break;
    }
  }
  for (const auto& [k, v] : j.items()) {
    const auto& ds = space.dimensions();
    const bool known = std::find_if(ds.begin(), ds.end(), [&](const Dimension& d) {
                         return d.name == k;
                       }) != ds.end();
    if (!known) throw ConfigError("configuration has unknown dimension '" + k + "'");
  }
  space.validate(c);
  return c;
}

}  // namespace peakforge
