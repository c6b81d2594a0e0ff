#include "peakforge/pareto.hpp"

#include <algorithm>
#include <cmath>

#include "peakforge/error.hpp"

namespace peakforge {

bool dominates(const std::vector<double>& a, const std::vector<double>& b,
               const ObjectiveSpec& spec) {
  const std::vector<double> aa = direction_adjusted(spec, a);
  const std::vector<double> ab = direction_adjusted(spec, b);
  bool strict = false;
  for (std::size_t i = 0; i < aa.size(); ++i) {
    if (aa[i] > ab[i]) return false;
    if (aa[i] < ab[i]) strict = true;
  }
  return strict;
}

InsertReport ParetoArchive::insert(std::uint64_t trial_id,
                                   const std::vector<double>& v) {
  if (v.size() != spec_.size())
    throw ConfigError("archive insert: objective vector length mismatch");
  for (double x : v)
    if (!std::isfinite(x))
      throw ConfigError("archive insert: non-finite objective value");

  InsertReport report;
  for (const ArchiveEntry& e : entries_) {
    if (e.values == v) return report;  // duplicate: keep earliest
    if (dominates(e.values, v, spec_)) return report;
  }
  report.accepted = true;
  std::vector<ArchiveEntry> kept;
  kept.reserve(entries_.size() + 1);
  for (ArchiveEntry& e : entries_) {
    if (dominates(v, e.values, spec_))
      report.evicted.push_back(e.trial_id);
    else
      kept.push_back(std::move(e));
  }
  kept.push_back(ArchiveEntry{trial_id, v});
  entries_ = std::move(kept);
  return report;
}

namespace {

double hv2(std::vector<std::vector<double>> pts, const std::vector<double>& ref) {
  // Non-dominated 2-D points sorted by x ascending have strictly descending
  // y; sweep right-to-left accumulating disjoint rectangles.
  std::sort(pts.begin(), pts.end());
  double hv = 0.0;
  double ybound = ref[1];
  for (const auto& p : pts) {
    if (p[1] < ybound) {
      hv += (ref[0] - p[0]) * (ybound - p[1]);
      ybound = p[1];
    }
  }
  return hv;
}

double hv3_inclusion_exclusion(const std::vector<std::vector<double>>& pts,
                               const std::vector<double>& ref) {
  const std::size_t n = pts.size();
  double hv = 0.0;
  for (std::uint32_t mask = 1; mask < (1u << n); ++mask) {
    double lo[3] = {-1e308, -1e308, -1e308};
    int bits = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (mask & (1u << i)) {
        ++bits;
        for (int k = 0; k < 3; ++k) lo[k] = std::max(lo[k], pts[i][k]);
      }
    }
    double vol = 1.0;
    for (int k = 0; k < 3; ++k) vol *= std::max(0.0, ref[k] - lo[k]);
    hv += (bits % 2 == 1 ? 1.0 : -1.0) * vol;
  }
  return hv;
}

double hv3_slabs(const std::vector<std::vector<double>>& pts,
                 const std::vector<double>& ref) {
  std::vector<double> zs;
  for (const auto& p : pts) zs.push_back(p[2]);
  zs.push_back(ref[2]);
  std::sort(zs.begin(), zs.end());
  zs.erase(std::unique(zs.begin(), zs.end()), zs.end());
  double hv = 0.0;
  for (std::size_t s = 0; s + 1 < zs.size(); ++s) {
    const double z0 = zs[s], z1 = zs[s + 1];
    std::vector<std::vector<double>> slice;
    for (const auto& p : pts)
      if (p[2] <= z0) slice.push_back({p[0], p[1]});
    if (!slice.empty()) hv += hv2(std::move(slice), {ref[0], ref[1]}) * (z1 - z0);
  }
  return hv;
}

}  // namespace

std::vector<double> hypervolume_reference(
    const std::vector<std::vector<double>>& adjusted) {
  if (adjusted.empty()) throw ConfigError("hypervolume reference needs >= 1 point");
  std::vector<double> ref = adjusted.front();
  for (const auto& p : adjusted)
    for (std::size_t i = 0; i < ref.size(); ++i) ref[i] = std::max(ref[i], p[i]);
  for (double& r : ref) r += 0.1 * std::max(std::abs(r), 1e-9);
  return ref;
}

double hypervolume_points(std::vector<std::vector<double>> points,
                          const std::vector<double>& reference) {
  const std::size_t d = reference.size();
  if (d != 2 && d != 3)
    throw ConfigError("hypervolume requires 2 or 3 objectives, got " +
                      std::to_string(d));
  if (points.empty()) return 0.0;
  for (const auto& p : points) {
    if (p.size() != d) throw ConfigError("hypervolume: point dimension mismatch");
    for (std::size_t i = 0; i < d; ++i)
      if (p[i] > reference[i])
        throw ConfigError("hypervolume: point exceeds reference on coordinate " +
                          std::to_string(i));
  }
  if (d == 2) return hv2(std::move(points), reference);
  if (points.size() <= 22) return hv3_inclusion_exclusion(points, reference);
  return hv3_slabs(points, reference);
}

double hypervolume(const ParetoArchive& archive, const std::vector<double>& reference) {
  std::vector<std::vector<double>> pts;
  pts.reserve(archive.size());
  for (const ArchiveEntry& e : archive.entries())
    pts.push_back(direction_adjusted(archive.spec(), e.values));
  return hypervolume_points(std::move(pts), reference);
}

}  // namespace peakforge
