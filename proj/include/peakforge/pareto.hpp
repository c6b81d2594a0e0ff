#pragma once

#include <cstdint>
#include <vector>

#include "peakforge/objectives.hpp"

namespace peakforge {

/// True iff a is no worse than b on every objective and strictly better on at
/// least one, after flipping maximize objectives to minimization.
bool dominates(const std::vector<double>& a, const std::vector<double>& b,
               const ObjectiveSpec& spec);

struct ArchiveEntry {
  std::uint64_t trial_id = 0;
  std::vector<double> values;  // raw (unflipped) objective values
};

struct InsertReport {
  bool accepted = false;
  std::vector<std::uint64_t> evicted;
};

/// Incrementally maintained set of mutually non-dominated trials. An exact
/// duplicate of a stored objective vector is rejected so the earliest trial
/// stays the representative.
class ParetoArchive {
 public:
  explicit ParetoArchive(ObjectiveSpec spec) : spec_(std::move(spec)) {}

  InsertReport insert(std::uint64_t trial_id, const std::vector<double>& v);

  const std::vector<ArchiveEntry>& entries() const { return entries_; }
  const ObjectiveSpec& spec() const { return spec_; }
  std::size_t size() const { return entries_.size(); }

 private:
  ObjectiveSpec spec_;
  std::vector<ArchiveEntry> entries_;
};

/// Dominated volume between the archive and `reference`, both in
/// direction-adjusted (minimization) coordinates. Exact sweep for d=2; exact
/// inclusion-exclusion for d=3 up to 22 points, then an exact z-slab sweep.
/// Throws ConfigError when d is not 2 or 3 or an entry exceeds the reference.
double hypervolume(const ParetoArchive& archive, const std::vector<double>& reference);

/// Same computation on bare direction-adjusted points.
double hypervolume_points(std::vector<std::vector<double>> points,
                          const std::vector<double>& reference);

/// Reference point from per-coordinate maxima of direction-adjusted values:
/// max + 0.1*max(|max|, 1e-9), i.e. 1.1x for positive maxima while still
/// exceeding non-positive ones.
std::vector<double> hypervolume_reference(const std::vector<std::vector<double>>& adjusted);

struct HypervolumeSeries {
  std::vector<std::pair<std::uint64_t, double>> points;  // (evaluation_index, hv)
};

}  // namespace peakforge
