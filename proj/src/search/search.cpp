#include "peakforge/search.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <condition_variable>
#include <deque>
#include <mutex>
#include <thread>

#include "common/timefmt.hpp"
#include "peakforge/error.hpp"

namespace peakforge {

namespace {

constexpr std::uint64_t kTrialSeedPurpose = 0x7472692d73656564;  // "tri-seed"
constexpr std::uint64_t kProposePurpose = 0x70726f706f736521;    // "propose!"
constexpr std::uint64_t kWeightPurpose = 0x7765696768747321;     // "weights!"
constexpr std::uint64_t kForestPurpose = 0x666f726573742121;     // "forest!!"

/// Failed trials keep a penalty row in the surrogate's training set for this
/// many subsequent proposals.
constexpr std::uint64_t kShadowWindow = 10;

/// The proposal loop runs more trees than the forest default: the acquisition
/// ranks candidates by mean - kappa*std, and with few trees the tree-to-tree
/// sampling noise in std swamps the mean differences between good candidates.
constexpr std::size_t kSearchForestTrees = 100;

struct Job {
  std::uint64_t id = 0;
  Configuration config;
  std::uint64_t seed = 0;
  Proposer proposer = Proposer::random;
};

struct Completion {
  std::uint64_t id = 0;
  Proposer proposer = Proposer::random;
  std::uint64_t seed = 0;
  TrialEvaluator::Result result;
  double duration_s = 0.0;
  std::string started_at, ended_at;
  std::uint64_t worker = 0;
};

template <typename T>
class Channel {
 public:
  void push(T item) {
    {
      std::lock_guard<std::mutex> lk(mu_);
      items_.push_back(std::move(item));
    }
    cv_.notify_one();
  }

  /// Blocks until an item arrives or the channel is closed and drained.
  std::optional<T> pop() {
    std::unique_lock<std::mutex> lk(mu_);
    cv_.wait(lk, [&] { return !items_.empty() || closed_; });
    if (items_.empty()) return std::nullopt;
    T item = std::move(items_.front());
    items_.pop_front();
    return item;
  }

  void close() {
    {
      std::lock_guard<std::mutex> lk(mu_);
      closed_ = true;
    }
    cv_.notify_all();
  }

 private:
  std::mutex mu_;
  std::condition_variable cv_;
  std::deque<T> items_;
  bool closed_ = false;
};

}  // namespace

std::uint64_t trial_seed(std::uint64_t master_seed, std::uint64_t trial_id) {
  return keyed_seed(master_seed, kTrialSeedPurpose, trial_id);
}

std::uint64_t default_initial_random(const SearchSpace& space) {
  return std::max<std::uint64_t>(10, 2 * space.size());
}

const char* status_name(TrialStatus s) {
  switch (s) {
    case TrialStatus::pending: return "pending";
    case TrialStatus::running: return "running";
    case TrialStatus::ok: return "ok";
    case TrialStatus::failed: return "failed";
  }
  return "unknown";
}

const char* proposer_name(Proposer p) {
  return p == Proposer::random ? "random" : "surrogate";
}

const char* mode_name(SearchMode m) {
  return m == SearchMode::ambs ? "ambs" : "random";
}

TrialStatus status_from_name(const std::string& s) {
  if (s == "pending") return TrialStatus::pending;
  if (s == "running") return TrialStatus::running;
  if (s == "ok") return TrialStatus::ok;
  if (s == "failed") return TrialStatus::failed;
  throw ConfigError("unknown trial status '" + s + "'");
}

Proposer proposer_from_name(const std::string& s) {
  if (s == "random") return Proposer::random;
  if (s == "surrogate") return Proposer::surrogate;
  throw ConfigError("unknown proposer '" + s + "'");
}

SearchMode mode_from_name(const std::string& s) {
  if (s == "ambs") return SearchMode::ambs;
  if (s == "random") return SearchMode::random_search;
  throw ConfigError("unknown search mode '" + s + "' (expected ambs or random)");
}

TrialEvaluator::Result BuiltinEvaluator::evaluate(
    std::uint64_t, const Configuration& config,
    const std::vector<std::string>& objective_names, std::uint64_t seed) {
  Result r;
  try {
    tasks::TaskResult task = task_.evaluate(config, seed);
    if (!task.feasible) {
      r.detail = task.detail.empty() ? "infeasible configuration" : task.detail;
      return r;
    }
    for (const std::string& name : objective_names) {
      auto it = task.metrics.find(name);
      if (it == task.metrics.end()) {
        r.metrics.clear();
        r.detail = "task does not report objective '" + name + "'";
        return r;
      }
      r.metrics[name] = it->second;
    }
    r.ok = true;
  } catch (const std::exception& e) {
    r.ok = false;
    r.metrics.clear();
    r.detail = e.what();
  }
  return r;
}

Configuration propose(const RegressionForest& forest, const SearchSpace& space,
                      const AcquisitionParams& acq, Rng& rng) {
  const std::size_t pool = std::max<std::size_t>(1, acq.candidate_pool);
  Configuration best;
  double best_score = 0.0;
  for (std::size_t i = 0; i < pool; ++i) {
    Configuration c = space.sample(rng);
    const auto [mean, std] = forest.predict(space.encode(c));
    const double score = mean - acq.kappa * std;
    if (i == 0 || score < best_score) {
      best = std::move(c);
      best_score = score;
    }
  }
  return best;
}

double scalarize_trial(const std::vector<double>& v,
                       const NormalizationState& norm,
                       const ObjectiveSpec& spec, const WeightVector& w,
                       double rho) {
  if (spec.size() == 1) return direction_adjusted(spec, v)[0];
  return chebyshev(norm.normalize(spec, v), w, rho);
}

HypervolumeSeries hypervolume_series(const std::vector<TrialRecord>& records,
                                     const ObjectiveSpec& spec) {
  HypervolumeSeries series;
  if (spec.size() != 2 && spec.size() != 3) return series;
  std::vector<std::vector<double>> adjusted;
  for (const TrialRecord& r : records)
    if (r.trial.status == TrialStatus::ok && r.trial.objectives)
      adjusted.push_back(direction_adjusted(spec, *r.trial.objectives));
  if (adjusted.empty()) return series;
  const std::vector<double> ref = hypervolume_reference(adjusted);

  ParetoArchive archive(spec);
  std::uint64_t index = 0;
  for (const TrialRecord& r : records) {
    ++index;
    if (r.trial.status == TrialStatus::ok && r.trial.objectives)
      archive.insert(r.trial.trial_id, *r.trial.objectives);
    const double hv = archive.size() ? hypervolume(archive, ref) : 0.0;
    series.points.emplace_back(index, hv);
  }
  return series;
}

SearchResult run_search(const SearchSpace& space, TrialEvaluator& evaluator,
                        const ObjectiveSpec& spec, const SearchBudget& budget,
                        const AcquisitionParams& acq, SearchMode mode,
                        std::uint64_t master_seed, double rho,
                        const std::vector<TrialRecord>& completed,
                        const SearchCallbacks& callbacks) {
  if (budget.max_evaluations == 0)
    throw ConfigError("budget.max_evaluations must be positive");
  if (budget.workers == 0) throw ConfigError("budget.workers must be >= 1");
  if (budget.initial_random > budget.max_evaluations)
    throw ConfigError("budget.initial_random exceeds max_evaluations");
  if (!(rho >= 0.0))
    throw ConfigError("rho must be a non-negative real");
  const std::uint64_t warmup =
      budget.initial_random > 0
          ? budget.initial_random
          : std::min(default_initial_random(space), budget.max_evaluations);
  const std::size_t d = spec.size();

  SearchResult res{{}, ParetoArchive(spec), {}, false, {}};
  NormalizationState norm(d);
  // Encoded configs and raw objectives of ok trials; targets are recomputed
  // under each proposal's fresh weight vector.
  std::vector<std::vector<double>> ok_x;
  std::vector<std::vector<double>> ok_raw;
  std::vector<std::pair<std::uint64_t, std::vector<double>>> failed_x;

  std::uint64_t next_id = 1;
  std::uint64_t terminal = 0;
  for (const TrialRecord& rec : completed) {
    const Trial& t = rec.trial;
    if (t.status != TrialStatus::ok && t.status != TrialStatus::failed)
      throw ConfigError("resume log contains a non-terminal trial");
    if (t.status == TrialStatus::ok) {
      if (!t.objectives || t.objectives->size() != d)
        throw ConfigError("resume log trial " + std::to_string(t.trial_id) +
                          " lacks a full objective vector");
      norm.observe(spec, *t.objectives);
      res.archive.insert(t.trial_id, *t.objectives);
      ok_x.push_back(space.encode(t.config));
      ok_raw.push_back(*t.objectives);
    } else {
      failed_x.emplace_back(t.trial_id, space.encode(t.config));
    }
    next_id = std::max(next_id, t.trial_id + 1);
    ++terminal;
    res.trials.push_back(rec);
  }
  if (terminal > budget.max_evaluations)
    throw ConfigError("resume log already exceeds the evaluation budget");

  Channel<Job> jobs;
  Channel<Completion> completions;
  std::vector<std::thread> pool;
  for (std::uint64_t wi = 0; wi < budget.workers; ++wi)
    pool.emplace_back([&, wi] {
      while (auto job = jobs.pop()) {
        Completion c;
        c.id = job->id;
        c.proposer = job->proposer;
        c.seed = job->seed;
        c.worker = wi;
        c.started_at = rfc3339_utc_now_ms();
        const auto t0 = std::chrono::steady_clock::now();
        auto attempt = [&] {
          try {
            c.result = evaluator.evaluate(job->id, job->config, spec.names,
                                          job->seed);
          } catch (const std::exception& e) {
            c.result.ok = false;
            c.result.detail = e.what();
          }
        };
        attempt();
        if (!c.result.ok) attempt();  // one retry, then the failure sticks
        c.duration_s = std::chrono::duration<double>(
                           std::chrono::steady_clock::now() - t0)
                           .count();
        c.ended_at = rfc3339_utc_now_ms();
        completions.push(std::move(c));
      }
    });

  std::map<std::uint64_t, Configuration> in_flight;
  const auto run_start = std::chrono::steady_clock::now();

  auto make_proposal = [&](std::uint64_t id) -> std::pair<Configuration, Proposer> {
    Rng rng = keyed_rng(master_seed, kProposePurpose, id);
    const bool random_phase = mode == SearchMode::random_search ||
                              id <= warmup || ok_x.size() < 2;
    if (random_phase) return {space.sample(rng), Proposer::random};

    WeightVector w;
    if (d > 1) {
      Rng wrng = keyed_rng(master_seed, kWeightPurpose, id);
      w = sample_weights(d, wrng);
    }
    TrainingSet data;
    data.inputs = ok_x;
    data.targets.reserve(ok_x.size());
    double target_sum = 0.0, target_max = 0.0;
    for (const auto& raw : ok_raw) {
      const double y = scalarize_trial(raw, norm, spec, w, rho);
      data.targets.push_back(y);
      target_sum += y;
      target_max = std::max(target_max, y);
    }
    const double liar = target_sum / static_cast<double>(data.targets.size());
    const double shadow = std::max(2.0, target_max);
    for (const auto& [fid, fx] : failed_x) {
      if (id - fid <= kShadowWindow) {
        data.inputs.push_back(fx);
        data.targets.push_back(shadow);
      }
    }
    for (const auto& [iid, cfg] : in_flight) {
      (void)iid;
      data.inputs.push_back(space.encode(cfg));
      data.targets.push_back(liar);
    }
    ForestParams params;
    params.n_trees = kSearchForestTrees;
    const RegressionForest forest = RegressionForest::fit(
        data, params, keyed_seed(master_seed, kForestPurpose, id));
    return {propose(forest, space, acq, rng), Proposer::surrogate};
  };

  auto process = [&](Completion&& c) {
    Trial t;
    t.trial_id = c.id;
    t.config = std::move(in_flight.at(c.id));
    in_flight.erase(c.id);
    t.seed = c.seed;
    t.duration_s = c.duration_s;
    t.proposer = c.proposer;

    std::vector<double> obj;
    std::string problem = c.result.detail;
    bool ok = c.result.ok;
    if (ok) {
      obj.reserve(d);
      for (const std::string& name : spec.names) {
        auto it = c.result.metrics.find(name);
        if (it == c.result.metrics.end()) {
          ok = false;
          problem = "evaluation omitted objective '" + name + "'";
          break;
        }
        if (!std::isfinite(it->second)) {
          ok = false;
          problem = "evaluation produced a non-finite '" + name + "'";
          break;
        }
        obj.push_back(it->second);
      }
    }
    if (ok) {
      t.status = TrialStatus::ok;
      t.objectives = obj;
      norm.observe(spec, obj);
      res.archive.insert(t.trial_id, obj);
      WeightVector w;
      if (d > 1) {
        Rng wrng = keyed_rng(master_seed, kWeightPurpose, t.trial_id);
        w = sample_weights(d, wrng);
      }
      t.scalarized = scalarize_trial(obj, norm, spec, w, rho);
      ok_x.push_back(space.encode(t.config));
      ok_raw.push_back(obj);
    } else {
      t.status = TrialStatus::failed;
      t.detail = problem.empty() ? "evaluation failed" : problem;
      failed_x.emplace_back(t.trial_id, space.encode(t.config));
    }

    TrialRecord rec;
    rec.trial = std::move(t);
    rec.started_at = std::move(c.started_at);
    rec.ended_at = std::move(c.ended_at);
    rec.worker = c.worker;
    res.trials.push_back(rec);
    ++terminal;
    if (callbacks.on_trial) callbacks.on_trial(res.trials.back());
  };

  while (terminal < budget.max_evaluations) {
    if (callbacks.stop_requested && callbacks.stop_requested()) {
      res.stopped_early = true;
      res.stop_reason = "stop requested";
      break;
    }
    if (budget.wall_clock_limit_s) {
      const double elapsed = std::chrono::duration<double>(
                                 std::chrono::steady_clock::now() - run_start)
                                 .count();
      if (elapsed >= *budget.wall_clock_limit_s) {
        res.stopped_early = true;
        res.stop_reason = "wall-clock limit reached";
        break;
      }
    }
    while (in_flight.size() < budget.workers &&
           terminal + in_flight.size() < budget.max_evaluations) {
      const std::uint64_t id = next_id++;
      auto [config, proposer] = make_proposal(id);
      in_flight.emplace(id, config);
      jobs.push(Job{id, std::move(config), trial_seed(master_seed, id),
                    proposer});
    }
    auto c = completions.pop();
    if (!c) break;
    process(std::move(*c));
  }

  // A requested stop lets in-flight evaluations finish and be logged.
  while (!in_flight.empty()) {
    auto c = completions.pop();
    if (!c) break;
    process(std::move(*c));
  }

  jobs.close();
  for (auto& th : pool) th.join();

  res.hv_series = hypervolume_series(res.trials, spec);
  return res;
}

}  // namespace peakforge
