#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "peakforge/objectives.hpp"
#include "peakforge/search.hpp"
#include "peakforge/space.hpp"

namespace peakforge {

/// Everything a run directory needs to be resumed exactly: the space, the
/// objective spec, and every knob that shapes the proposal sequence. Written
/// once at run start and never modified.
struct RunManifest {
  std::string run_id;
  nlohmann::json space_doc;  // SearchSpace::to_json of the run's space
  ObjectiveSpec objectives;
  std::uint64_t max_evaluations = 0;
  std::uint64_t initial_random = 0;  // resolved, never the 0 placeholder
  std::uint64_t workers = 1;
  std::optional<double> wall_clock_limit_s;
  std::string mode;  // "ambs" | "random"
  std::uint64_t master_seed = 0;
  /// Evaluator identity: "builtin:<task>" or "cmd:<argv joined by spaces>".
  std::string task;
  std::optional<std::uint64_t> epoch_cap;
  double eval_timeout_s = 600.0;
  double kappa = 1.96;
  std::uint64_t candidate_pool = 512;
  double rho = kChebyshevRho;
  std::string tool_version;
  std::string created_at;  // RFC 3339 UTC, milliseconds

  SearchBudget budget() const;
  nlohmann::json to_json() const;
  static RunManifest from_json(const nlohmann::json& j);
};

/// Names of the manifest fields that must match for a resume to be exact.
/// Empty result means the manifests are compatible. max_evaluations, workers,
/// and timeouts are deliberately not compared: they may change across resumes
/// without changing any trial's outcome.
std::vector<std::string> manifest_diff(const RunManifest& expected,
                                       const RunManifest& found);

nlohmann::json trial_record_to_json(const TrialRecord& rec,
                                    const ObjectiveSpec& spec);
TrialRecord trial_record_from_json(const nlohmann::json& j,
                                   const SearchSpace& space,
                                   const ObjectiveSpec& spec);

/// One run directory: manifest.json + trials.jsonl + exports/. Appends are
/// flushed and fsynced before returning, so a crash can lose at most the
/// line being written, which load_trials() detects and drops.
class RunStore {
 public:
  /// Initializes a fresh run directory. Throws ConfigError if it already
  /// holds a run, IoError on filesystem failure.
  static RunStore create(const std::string& dir, const RunManifest& manifest);
  /// Opens an existing run directory.
  static RunStore open(const std::string& dir);

  const RunManifest& manifest() const { return manifest_; }
  const std::string& dir() const { return dir_; }
  const SearchSpace& space() const { return space_; }

  void append_trial(const TrialRecord& rec);

  struct LoadReport {
    std::vector<TrialRecord> records;
    bool dropped_partial_line = false;
    std::string note;
  };
  LoadReport load_trials() const;

  /// Byte-deterministic exports under <dir>/exports; each returns the path
  /// it wrote. All three throw ConfigError on an empty trial log.
  std::string export_pareto_csv() const;
  std::string export_convergence_csv() const;
  std::string export_best_json() const;

 private:
  RunStore(std::string dir, RunManifest manifest);

  std::string dir_;
  RunManifest manifest_;
  SearchSpace space_;
};

}  // namespace peakforge
