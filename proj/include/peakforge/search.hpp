#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "peakforge/objectives.hpp"
#include "peakforge/pareto.hpp"
#include "peakforge/rng.hpp"
#include "peakforge/space.hpp"
#include "peakforge/surrogate.hpp"
#include "peakforge/tasks.hpp"

namespace peakforge {

enum class SearchMode { ambs, random_search };
enum class TrialStatus { pending, running, ok, failed };
enum class Proposer { random, surrogate };

struct SearchBudget {
  std::uint64_t max_evaluations = 0;
  /// 0 means the default max(10, 2 * dimension count), clamped to the budget.
  std::uint64_t initial_random = 0;
  std::uint64_t workers = 1;
  std::optional<double> wall_clock_limit_s;
};

struct AcquisitionParams {
  double kappa = 1.96;
  std::size_t candidate_pool = 512;
};

struct Trial {
  std::uint64_t trial_id = 0;
  Configuration config;
  /// Raw objective values in ObjectiveSpec order; present iff status == ok.
  std::optional<std::vector<double>> objectives;
  std::optional<double> scalarized;
  TrialStatus status = TrialStatus::pending;
  std::uint64_t seed = 0;
  double duration_s = 0.0;
  Proposer proposer = Proposer::random;
  std::string detail;  // failure reason, empty for ok trials
};

/// Trial plus the bookkeeping the run log stores alongside it.
struct TrialRecord {
  Trial trial;
  std::string started_at;  // RFC 3339 UTC, milliseconds
  std::string ended_at;
  std::uint64_t worker = 0;
};

/// Uniform evaluation interface over built-in tasks and external evaluator
/// processes. Implementations must tolerate concurrent calls.
class TrialEvaluator {
 public:
  struct Result {
    bool ok = false;
    std::map<std::string, double> metrics;
    std::string detail;
  };

  virtual ~TrialEvaluator() = default;
  virtual Result evaluate(std::uint64_t trial_id, const Configuration& config,
                          const std::vector<std::string>& objective_names,
                          std::uint64_t seed) = 0;
};

/// Adapter running a built-in task in-process.
class BuiltinEvaluator : public TrialEvaluator {
 public:
  explicit BuiltinEvaluator(tasks::BuiltinTask task) : task_(std::move(task)) {}
  Result evaluate(std::uint64_t trial_id, const Configuration& config,
                  const std::vector<std::string>& objective_names,
                  std::uint64_t seed) override;

 private:
  tasks::BuiltinTask task_;
};

struct SearchCallbacks {
  /// Invoked in completion order, once per terminal trial, before the next
  /// proposal is made (the store hook for crash-consistent logging).
  std::function<void(const TrialRecord&)> on_trial;
  /// Polled between proposals; returning true requests a graceful stop.
  std::function<bool()> stop_requested;
};

struct SearchResult {
  std::vector<TrialRecord> trials;  // completion order, matching the log
  ParetoArchive archive;
  HypervolumeSeries hv_series;  // filled for 2- and 3-objective runs
  bool stopped_early = false;
  std::string stop_reason;
};

/// Scores `candidate_pool` random configurations with LCB = mean - kappa*std
/// and returns the argmin (ties to the lowest candidate index).
Configuration propose(const RegressionForest& forest, const SearchSpace& space,
                      const AcquisitionParams& acq, Rng& rng);

/// normalize -> augmented Chebyshev; single-objective specs pass the
/// direction-adjusted raw value through untouched.
double scalarize_trial(const std::vector<double>& v,
                       const NormalizationState& norm,
                       const ObjectiveSpec& spec, const WeightVector& w,
                       double rho);

inline constexpr double kChebyshevRho = 0.05;

/// The AMBS orchestrator: random warm-up, then surrogate-guided proposals
/// with a fresh Chebyshev weight per proposal (random mode never leaves the
/// warm-up policy). All per-trial randomness is keyed by (master_seed,
/// trial_id), so a run resumed from `completed` continues exactly where an
/// uninterrupted run would have gone. Exactly budget.max_evaluations trials
/// reach ok or failed unless a stop is requested, in which case in-flight
/// evaluations still finish and are logged.
SearchResult run_search(const SearchSpace& space, TrialEvaluator& evaluator,
                        const ObjectiveSpec& spec, const SearchBudget& budget,
                        const AcquisitionParams& acq, SearchMode mode,
                        std::uint64_t master_seed, double rho = kChebyshevRho,
                        const std::vector<TrialRecord>& completed = {},
                        const SearchCallbacks& callbacks = {});

/// Hypervolume of the running archive after each terminal trial, using a
/// reference computed from the full log (empty unless d is 2 or 3).
HypervolumeSeries hypervolume_series(const std::vector<TrialRecord>& records,
                                     const ObjectiveSpec& spec);

std::uint64_t default_initial_random(const SearchSpace& space);
std::uint64_t trial_seed(std::uint64_t master_seed, std::uint64_t trial_id);

const char* status_name(TrialStatus s);
const char* proposer_name(Proposer p);
const char* mode_name(SearchMode m);
TrialStatus status_from_name(const std::string& s);
Proposer proposer_from_name(const std::string& s);
SearchMode mode_from_name(const std::string& s);

}  // namespace peakforge
