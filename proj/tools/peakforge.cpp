#include <csignal>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "common/timefmt.hpp"
#include "peakforge/error.hpp"
#include "peakforge/evalproto.hpp"
#include "peakforge/search.hpp"
#include "peakforge/space.hpp"
#include "peakforge/store.hpp"
#include "peakforge/tasks.hpp"
#include "peakforge/version.hpp"

using namespace peakforge;

namespace {

volatile std::sig_atomic_t g_stop = 0;

void on_sigint(int) {
  g_stop = 1;
  std::signal(SIGINT, SIG_DFL);  // a second Ctrl-C kills immediately
}

std::string fmt6(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

std::vector<std::string> split_command(const std::string& line) {
  std::vector<std::string> argv;
  std::istringstream ss(line);
  std::string word;
  while (ss >> word) argv.push_back(word);
  if (argv.empty()) throw ConfigError("--task-cmd must name a program to run");
  return argv;
}

/// --space accepts a preset name, an analytic task space, or a JSON file.
SearchSpace cli_space(const std::string& arg) {
  if (std::filesystem::exists(arg)) return load_space_file(arg);
  try {
    return builtin_space(arg);
  } catch (const ConfigError&) {
  }
  try {
    return tasks::analytic_space(arg);
  } catch (const ConfigError&) {
  }
  throw ConfigError("unknown space '" + arg +
                    "'; presets: mlpBragg, cnnBragg, mlpPtycho, cnnPtycho, "
                    "sphere3, zdt1 (or pass a JSON space file path)");
}

std::string default_out_dir(const std::string& task, const std::string& mode,
                            std::uint64_t seed) {
  const char* root = std::getenv("PEAKFORGE_RUNS");
  std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  char stamp[32];
  std::strftime(stamp, sizeof stamp, "%Y%m%d-%H%M%S", &tm);
  std::string name = task;
  for (char& ch : name)
    if (ch == '/' || ch == ' ' || ch == ':') ch = '_';
  return std::string(root ? root : "runs") + "/" + name + "-" + mode + "-s" +
         std::to_string(seed) + "-" + stamp;
}

/// Bridges the search loop onto an external evaluator process.
class SubprocessEvaluator : public TrialEvaluator {
 public:
  SubprocessEvaluator(std::vector<std::string> argv, Evaluator::Options opt)
      : inner_(std::move(argv), opt) {}

  Result evaluate(std::uint64_t trial_id, const Configuration& config,
                  const std::vector<std::string>& names,
                  std::uint64_t seed) override {
    EvalRequest req;
    req.id = trial_id;
    req.config = config;
    req.objective_names = names;
    req.seed = seed;
    Result r;
    try {
      const EvalResponse resp = inner_.evaluate(req);
      r.ok = resp.ok;
      r.detail = resp.detail;
      if (resp.ok) r.metrics = resp.objectives;
    } catch (const Error& e) {
      r.ok = false;
      r.detail = e.what();
    }
    return r;
  }

 private:
  Evaluator inner_;
};

struct DriveStats {
  std::uint64_t ok = 0;
  std::uint64_t failed = 0;
  bool have_best = false;
  double best = 0.0;
};

void note_stats(DriveStats& st, const TrialRecord& rec) {
  if (rec.trial.status == TrialStatus::ok) {
    ++st.ok;
    if (rec.trial.scalarized &&
        (!st.have_best || *rec.trial.scalarized < st.best)) {
      st.best = *rec.trial.scalarized;
      st.have_best = true;
    }
  } else {
    ++st.failed;
  }
}

/// Runs the search against an existing store, streaming one line per trial
/// and writing the exports afterwards. Shared by `run` and `resume`.
int drive_search(RunStore& store, const SearchSpace& space,
                 TrialEvaluator& evaluator, const ObjectiveSpec& spec,
                 const SearchBudget& budget, const AcquisitionParams& acq,
                 SearchMode mode, std::uint64_t master_seed, double rho,
                 std::vector<TrialRecord> completed) {
  g_stop = 0;
  std::signal(SIGINT, on_sigint);

  DriveStats st;
  for (const TrialRecord& rec : completed) note_stats(st, rec);
  std::uint64_t done = completed.size();

  SearchCallbacks cb;
  cb.on_trial = [&](const TrialRecord& rec) {
    store.append_trial(rec);
    note_stats(st, rec);
    ++done;
    std::ostringstream line;
    line << "trial " << rec.trial.trial_id << "/" << budget.max_evaluations
         << " " << status_name(rec.trial.status);
    if (rec.trial.status == TrialStatus::ok && rec.trial.objectives) {
      for (std::size_t i = 0; i < spec.size(); ++i)
        line << " " << spec.names[i] << "="
             << fmt6((*rec.trial.objectives)[i]);
      if (st.have_best) line << " best=" << fmt6(st.best);
    } else {
      line << ": " << rec.trial.detail;
    }
    line << " [" << proposer_name(rec.trial.proposer) << " "
         << fmt6(rec.trial.duration_s) << "s]";
    std::cout << line.str() << std::endl;
  };
  cb.stop_requested = [] { return g_stop != 0; };

  const SearchResult res =
      run_search(space, evaluator, spec, budget, acq, mode, master_seed, rho,
                 completed, cb);
  std::signal(SIGINT, SIG_DFL);

  if (!res.trials.empty()) {
    std::cout << "wrote " << store.export_pareto_csv() << "\n";
    std::cout << "wrote " << store.export_convergence_csv() << "\n";
    std::cout << "wrote " << store.export_best_json() << "\n";
  }

  if (res.stopped_early) {
    std::cout << "stopped early (" << res.stop_reason << "): " << done << "/"
              << budget.max_evaluations
              << " trials logged; resume with: peakforge resume --run "
              << store.dir() << "\n";
  } else {
    std::cout << "run complete: " << done << " trials (" << st.ok << " ok, "
              << st.failed << " failed), archive size " << res.archive.size();
    if (st.have_best) std::cout << ", best scalarized " << fmt6(st.best);
    std::cout << "\n";
  }
  return 0;
}

struct RunArgs {
  std::string space;
  std::string task;
  std::string task_cmd;
  std::vector<std::string> objectives;
  std::string mode = "ambs";
  std::uint64_t budget = 0;
  std::uint64_t init_random = 0;
  std::uint64_t workers = 1;
  std::uint64_t seed = 0;
  double rho = kChebyshevRho;
  double kappa = 1.96;
  std::uint64_t pool = 512;
  std::optional<std::uint64_t> epoch_cap;
  double timeout = 600.0;
  std::optional<double> wall_clock;
  std::string out;
};

int cmd_run(const RunArgs& a) {
  const SearchSpace space = cli_space(a.space);
  const ObjectiveSpec spec = ObjectiveSpec::parse(a.objectives);
  const SearchMode mode = mode_from_name(a.mode);

  if (a.task.empty() == a.task_cmd.empty())
    throw ConfigError("exactly one of --task or --task-cmd is required");

  std::unique_ptr<TrialEvaluator> evaluator;
  std::string task_identity;
  if (!a.task.empty()) {
    tasks::BuiltinTask task = tasks::make_builtin_task(a.task);
    if (a.epoch_cap) task.set_epoch_cap(*a.epoch_cap);
    if (!task.accepts_space(space.name()))
      throw ConfigError("task '" + a.task + "' does not run on space '" +
                        space.name() + "'");
    const auto valid = task.metric_names();
    for (const std::string& name : spec.names) {
      if (std::find(valid.begin(), valid.end(), name) == valid.end()) {
        std::string list;
        for (const auto& v : valid) list += (list.empty() ? "" : ", ") + v;
        throw ConfigError("task '" + a.task + "' has no objective '" + name +
                          "'; valid names: " + list);
      }
    }
    task_identity = "builtin:" + a.task;
    evaluator = std::make_unique<BuiltinEvaluator>(std::move(task));
  } else {
    Evaluator::Options opt;
    opt.eval_timeout_s = a.timeout;
    try {
      evaluator = std::make_unique<SubprocessEvaluator>(
          split_command(a.task_cmd), opt);
    } catch (const Error& e) {
      std::cerr << "error: " << e.what() << "\n";
      return 3;
    }
    task_identity = "cmd:" + a.task_cmd;
  }

  SearchBudget budget;
  budget.max_evaluations = a.budget;
  budget.initial_random =
      a.init_random > 0
          ? a.init_random
          : std::min(default_initial_random(space), a.budget);
  budget.workers = a.workers;
  budget.wall_clock_limit_s = a.wall_clock;
  if (budget.initial_random > budget.max_evaluations)
    throw ConfigError("--init-random exceeds --budget");

  AcquisitionParams acq;
  acq.kappa = a.kappa;
  acq.candidate_pool = a.pool;

  const std::string out =
      a.out.empty() ? default_out_dir(a.task.empty() ? a.task_cmd : a.task,
                                      a.mode, a.seed)
                    : a.out;

  RunManifest m;
  m.run_id = std::filesystem::path(out).filename().string();
  m.space_doc = space.to_json();
  m.objectives = spec;
  m.max_evaluations = budget.max_evaluations;
  m.initial_random = budget.initial_random;
  m.workers = budget.workers;
  m.wall_clock_limit_s = budget.wall_clock_limit_s;
  m.mode = a.mode;
  m.master_seed = a.seed;
  m.task = task_identity;
  m.epoch_cap = a.epoch_cap;
  m.eval_timeout_s = a.timeout;
  m.kappa = a.kappa;
  m.candidate_pool = a.pool;
  m.rho = a.rho;
  m.tool_version = kVersion;
  m.created_at = rfc3339_utc_now_ms();

  RunStore store = RunStore::create(out, m);
  std::cout << "run " << m.run_id << ": space " << space.name() << ", "
            << spec.size() << " objective(s), mode " << a.mode << ", budget "
            << a.budget << ", seed " << a.seed << "\n";
  std::cout << "run directory: " << store.dir() << "\n";

  return drive_search(store, space, *evaluator, spec, budget, acq, mode,
                      a.seed, a.rho, {});
}

struct ResumeArgs {
  std::string run_dir;
  std::optional<std::uint64_t> budget;
  std::optional<std::uint64_t> workers;
  std::optional<double> timeout;
  std::optional<double> wall_clock;
};

int cmd_resume(const ResumeArgs& a) {
  RunStore store = RunStore::open(a.run_dir);
  const RunManifest& m = store.manifest();
  auto load = store.load_trials();
  if (load.dropped_partial_line)
    std::cout << "note: " << load.note << "\n";

  SearchBudget budget = m.budget();
  if (a.budget) budget.max_evaluations = *a.budget;
  if (a.workers) budget.workers = *a.workers;
  if (a.wall_clock) budget.wall_clock_limit_s = *a.wall_clock;

  if (load.records.size() >= budget.max_evaluations) {
    std::cout << "run already complete (" << load.records.size() << "/"
              << budget.max_evaluations << " trials); nothing to resume\n";
    return 0;
  }

  std::unique_ptr<TrialEvaluator> evaluator;
  if (m.task.rfind("builtin:", 0) == 0) {
    tasks::BuiltinTask task = tasks::make_builtin_task(m.task.substr(8));
    if (m.epoch_cap) task.set_epoch_cap(*m.epoch_cap);
    evaluator = std::make_unique<BuiltinEvaluator>(std::move(task));
  } else if (m.task.rfind("cmd:", 0) == 0) {
    Evaluator::Options opt;
    opt.eval_timeout_s = a.timeout ? *a.timeout : m.eval_timeout_s;
    try {
      evaluator = std::make_unique<SubprocessEvaluator>(
          split_command(m.task.substr(4)), opt);
    } catch (const Error& e) {
      std::cerr << "error: " << e.what() << "\n";
      return 3;
    }
  } else {
    throw ConfigError("manifest task '" + m.task + "' is not resumable");
  }

  AcquisitionParams acq;
  acq.kappa = m.kappa;
  acq.candidate_pool = m.candidate_pool;

  std::cout << "resuming " << m.run_id << " at trial "
            << load.records.size() + 1 << "/" << budget.max_evaluations
            << "\n";
  return drive_search(store, store.space(), *evaluator, m.objectives, budget,
                      acq, mode_from_name(m.mode), m.master_seed, m.rho,
                      std::move(load.records));
}

int cmd_export(const std::string& run_dir, bool pareto) {
  RunStore store = RunStore::open(run_dir);
  const std::string path =
      pareto ? store.export_pareto_csv() : store.export_convergence_csv();
  if (pareto) store.export_best_json();
  std::cout << "wrote " << path << "\n";
  return 0;
}

struct GenDataArgs {
  std::string kind;
  std::uint64_t n = 100;
  std::uint64_t seed = 0;
  double noise = 0.02;
  std::string out;
};

int cmd_gen_data(const GenDataArgs& a) {
  if (a.kind == "bragg") {
    const std::string out = a.out.empty() ? "bragg.csv" : a.out;
    tasks::write_bragg_csv(
        tasks::generate_bragg_dataset(a.n, a.noise, a.seed), out);
    std::cout << "wrote " << out << " (" << a.n << " patches, noise "
              << fmt6(a.noise) << ", seed " << a.seed << ")\n";
  } else if (a.kind == "ptycho") {
    const std::string out = a.out.empty() ? "ptycho.pfnn" : a.out;
    tasks::write_ptycho_tensors(tasks::generate_ptycho_dataset(a.n, a.seed),
                                out);
    std::cout << "wrote " << out << " (" << a.n << " samples, seed " << a.seed
              << ")\n";
  } else {
    throw ConfigError("unknown dataset kind '" + a.kind +
                      "' (expected bragg or ptycho)");
  }
  return 0;
}

int cmd_spaces_list() {
  for (const char* name : {"mlpBragg", "cnnBragg", "mlpPtycho", "cnnPtycho"}) {
    const SearchSpace s = builtin_space(name);
    std::cout << name << " (" << s.size() << " dims, preset)\n";
  }
  for (const char* name : {"sphere3", "zdt1"}) {
    const SearchSpace s = tasks::analytic_space(name);
    std::cout << name << " (" << s.size() << " dims, analytic)\n";
  }
  return 0;
}

int cmd_spaces_show(const std::string& name) {
  std::cout << cli_space(name).to_json().dump(2) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"peakforge: multi-objective hyperparameter and architecture "
               "search over synthetic diffraction tasks"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);

  RunArgs run_args;
  CLI::App* run = app.add_subcommand("run", "start a new search run");
  run->add_option("--space", run_args.space,
                  "space preset name or JSON file path")
      ->required();
  run->add_option("--task", run_args.task,
                  "built-in task: bragg, ptycho, sphere3, zdt1");
  run->add_option("--task-cmd", run_args.task_cmd,
                  "external evaluator command (newline-JSON protocol)");
  run->add_option("--objectives", run_args.objectives,
                  "objectives as name:min or name:max tokens")
      ->required()
      ->delimiter(',');
  run->add_option("--mode", run_args.mode, "ambs or random")
      ->check(CLI::IsMember({"ambs", "random"}));
  run->add_option("--budget", run_args.budget, "total number of trials")
      ->required()
      ->check(CLI::PositiveNumber);
  run->add_option("--init-random", run_args.init_random,
                  "random warm-up trials (0 = max(10, 2*dims))");
  run->add_option("--workers", run_args.workers, "parallel evaluations")
      ->check(CLI::PositiveNumber);
  run->add_option("--seed", run_args.seed, "master seed");
  run->add_option("--rho", run_args.rho,
                  "augmented Chebyshev rho (multi-objective only)");
  run->add_option("--kappa", run_args.kappa, "LCB exploration weight");
  run->add_option("--pool", run_args.pool, "acquisition candidate pool size")
      ->check(CLI::PositiveNumber);
  run->add_option("--epoch-cap", run_args.epoch_cap,
                  "cap training epochs of built-in tasks");
  run->add_option("--timeout", run_args.timeout,
                  "per-evaluation timeout in seconds (external evaluators)");
  run->add_option("--wall-clock-limit", run_args.wall_clock,
                  "stop proposing after this many seconds");
  run->add_option("--out", run_args.out,
                  "run directory (default $PEAKFORGE_RUNS or ./runs)");

  ResumeArgs resume_args;
  CLI::App* resume =
      app.add_subcommand("resume", "continue an interrupted run");
  resume->add_option("--run", resume_args.run_dir, "run directory")
      ->required();
  resume->add_option("--budget", resume_args.budget,
                     "raise the total trial budget");
  resume->add_option("--workers", resume_args.workers,
                     "override worker count");
  resume->add_option("--timeout", resume_args.timeout,
                     "override per-evaluation timeout");
  resume->add_option("--wall-clock-limit", resume_args.wall_clock,
                     "override the wall-clock limit");

  std::string pareto_dir;
  CLI::App* pareto =
      app.add_subcommand("pareto", "export the Pareto front as CSV");
  pareto->add_option("--run", pareto_dir, "run directory")->required();

  std::string conv_dir;
  CLI::App* convergence = app.add_subcommand(
      "convergence", "export the per-evaluation convergence series as CSV");
  convergence->add_option("--run", conv_dir, "run directory")->required();

  GenDataArgs gen_args;
  CLI::App* gen =
      app.add_subcommand("gen-data", "write a synthetic dataset to disk");
  gen->add_option("kind", gen_args.kind, "bragg or ptycho")->required();
  gen->add_option("--n", gen_args.n, "number of samples")
      ->check(CLI::PositiveNumber);
  gen->add_option("--seed", gen_args.seed, "generator seed");
  gen->add_option("--noise", gen_args.noise,
                  "relative noise sigma (bragg only)");
  gen->add_option("--out", gen_args.out, "output file path");

  CLI::App* spaces =
      app.add_subcommand("spaces", "list or show search space presets");
  spaces->require_subcommand(1);
  CLI::App* spaces_list =
      spaces->add_subcommand("list", "list available presets");
  std::string show_name;
  CLI::App* spaces_show = spaces->add_subcommand(
      "show", "print a space definition as JSON (matches the file schema)");
  spaces_show->add_option("name", show_name, "preset name or file path")
      ->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help / --version
    app.exit(e);
    return 2;
  }

  try {
    if (run->parsed()) return cmd_run(run_args);
    if (resume->parsed()) return cmd_resume(resume_args);
    if (pareto->parsed()) return cmd_export(pareto_dir, true);
    if (convergence->parsed()) return cmd_export(conv_dir, false);
    if (gen->parsed()) return cmd_gen_data(gen_args);
    if (spaces->parsed()) {
      if (spaces_list->parsed()) return cmd_spaces_list();
      if (spaces_show->parsed()) return cmd_spaces_show(show_name);
    }
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const ProtocolError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
