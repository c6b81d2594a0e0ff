// End-to-end acceptance gate: twelve numbered checks covering optimizer
// quality, oracle equivalence, kernel correctness, task-level accuracy, crash
// recovery, and protocol conformance. Each check prints exactly one PASS/FAIL
// line; the process exits nonzero if any check fails. Several checks train
// real models, so a full run takes tens of minutes on one core.

#include <signal.h>
#include <sys/types.h>
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "peakforge/error.hpp"
#include "peakforge/evalproto.hpp"
#include "peakforge/nn.hpp"
#include "peakforge/objectives.hpp"
#include "peakforge/pareto.hpp"
#include "peakforge/rng.hpp"
#include "peakforge/search.hpp"
#include "peakforge/store.hpp"
#include "peakforge/tasks.hpp"
#include "support/oracles.hpp"

using namespace peakforge;
using Clock = std::chrono::steady_clock;

namespace {

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, ...) {
  char buf[512];
  va_list ap;
  va_start(ap, f);
  std::vsnprintf(buf, sizeof buf, f, ap);
  va_end(ap);
  return buf;
}

/// A failing check throws this; the message lands on the FAIL line.
struct CheckFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void require(bool ok, const std::string& msg) {
  if (!ok) throw CheckFailure(msg);
}

// ---- 1: paired-seed optimizer superiority ------------------------------

std::string check_optimizer_superiority() {
  const auto t0 = Clock::now();

  int sphere_wins = 0;
  {
    const SearchSpace space = tasks::analytic_space("sphere3");
    const ObjectiveSpec spec({"value"}, {Direction::minimize});
    SearchBudget budget;
    budget.max_evaluations = 100;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      BuiltinEvaluator ea(tasks::make_builtin_task("sphere3"));
      BuiltinEvaluator er(tasks::make_builtin_task("sphere3"));
      const auto ra = run_search(space, ea, spec, budget, {}, SearchMode::ambs, seed);
      const auto rr =
          run_search(space, er, spec, budget, {}, SearchMode::random_search, seed);
      auto best = [](const SearchResult& r) {
        double v = 1e300;
        for (const auto& rec : r.trials)
          if (rec.trial.objectives) v = std::min(v, (*rec.trial.objectives)[0]);
        return v;
      };
      if (best(ra) <= best(rr)) ++sphere_wins;
    }
  }

  int zdt_wins = 0;
  {
    const SearchSpace space = tasks::analytic_space("zdt1");
    const ObjectiveSpec spec({"f1", "f2"},
                             {Direction::minimize, Direction::minimize});
    SearchBudget budget;
    budget.max_evaluations = 200;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      BuiltinEvaluator ea(tasks::make_builtin_task("zdt1"));
      BuiltinEvaluator er(tasks::make_builtin_task("zdt1"));
      const auto ra = run_search(space, ea, spec, budget, {}, SearchMode::ambs, seed);
      const auto rr =
          run_search(space, er, spec, budget, {}, SearchMode::random_search, seed);
      std::vector<std::vector<double>> all;
      for (const auto* r : {&ra, &rr})
        for (const auto& rec : r->trials)
          if (rec.trial.status == TrialStatus::ok)
            all.push_back(direction_adjusted(spec, *rec.trial.objectives));
      const auto ref = hypervolume_reference(all);
      auto hv_of = [&](const SearchResult& r) {
        std::vector<std::vector<double>> pts;
        for (const auto& e : r.archive.entries())
          pts.push_back(direction_adjusted(spec, e.values));
        return hypervolume_points(pts, ref);
      };
      if (hv_of(ra) >= hv_of(rr)) ++zdt_wins;
    }
  }

  const double dt = seconds_since(t0);
  require(sphere_wins >= 4, fmt("sphere3 paired wins %d/5 (need >= 4)",
                                sphere_wins));
  require(zdt_wins >= 4, fmt("zdt1 paired wins %d/5 (need >= 4)", zdt_wins));
  require(dt < 60.0, fmt("runtime %.1fs (need < 60s)", dt));
  return fmt("sphere3 %d/5, zdt1 %d/5, %.1fs", sphere_wins, zdt_wins, dt);
}

// ---- 2: incremental archive vs brute-force dominance filter ------------

std::string check_pareto_oracle() {
  Rng rng(0xa2c3);
  for (int stream = 0; stream < 100; ++stream) {
    const std::size_t d = 2 + stream % 3;
    std::vector<std::string> names;
    std::vector<Direction> dirs;
    for (std::size_t i = 0; i < d; ++i) {
      names.push_back("m" + std::to_string(i));
      dirs.push_back(rng.uniform01() < 0.5 ? Direction::minimize
                                           : Direction::maximize);
    }
    const ObjectiveSpec spec(names, dirs);

    std::vector<std::vector<double>> raw(200, std::vector<double>(d));
    for (auto& v : raw)
      for (double& x : v) x = rng.uniform(-5.0, 5.0);
    // a couple of exact duplicates per stream to exercise the tie rule
    raw[150] = raw[20];
    raw[180] = raw[75];

    ParetoArchive archive(spec);
    for (std::size_t i = 0; i < raw.size(); ++i)
      archive.insert(i + 1, raw[i]);

    std::set<std::uint64_t> got;
    for (const auto& e : archive.entries()) got.insert(e.trial_id);
    std::set<std::uint64_t> want;
    for (std::size_t idx : oracle::nondominated_filter(raw, spec))
      want.insert(idx + 1);
    require(got == want,
            fmt("stream %d (d=%zu): archive size %zu vs oracle %zu", stream, d,
                got.size(), want.size()));
  }
  return "100 streams, n=200, d in {2,3,4}, exact set equality";
}

// ---- 3: hypervolume vs inclusion-exclusion and Monte Carlo -------------

std::string check_hypervolume() {
  Rng rng(0x8f1);
  double worst2 = 0.0;
  for (int front = 0; front < 100; ++front) {
    const std::size_t n = 1 + rng.next() % 20;
    std::vector<std::vector<double>> pts(n, std::vector<double>(2));
    for (auto& p : pts)
      for (double& x : p) x = rng.uniform01();
    const std::vector<double> ref{1.2, 1.2};
    const double got = hypervolume_points(pts, ref);
    const double want = oracle::ie_hypervolume(pts, ref);
    worst2 = std::max(worst2, std::abs(got - want));
    require(std::abs(got - want) <= 1e-12,
            fmt("2-D front %d: |%.17g - %.17g| > 1e-12", front, got, want));
  }

  double worst_sigma = 0.0;
  for (int front = 0; front < 20; ++front) {
    const std::size_t n = 3 + rng.next() % 15;
    std::vector<std::vector<double>> pts(n, std::vector<double>(3));
    for (auto& p : pts)
      for (double& x : p) x = rng.uniform01();
    const std::vector<double> ref{1.1, 1.1, 1.1};
    const double got = hypervolume_points(pts, ref);
    const auto [est, se] =
        oracle::mc_hypervolume(pts, ref, 1000000, 0xbeef + front);
    const double sigmas = std::abs(got - est) / se;
    worst_sigma = std::max(worst_sigma, sigmas);
    require(sigmas <= 3.0,
            fmt("3-D front %d: %.6f vs MC %.6f +- %.6f (%.2f sigma)", front,
                got, est, se, sigmas));
  }
  return fmt("2-D worst err %.2e (100 fronts), 3-D worst %.2f sigma (20 fronts)",
             worst2, worst_sigma);
}

// ---- 4: Chebyshev scalarization properties -----------------------------

std::string check_scalarization() {
  Rng rng(0x51ca);
  const double rho = 0.05;
  for (int draw = 0; draw < 100000; ++draw) {
    const std::size_t d = 2 + draw % 4;
    std::vector<double> y(d);
    for (double& v : y) v = rng.uniform01();
    const WeightVector w = sample_weights(d, rng);

    const double f = chebyshev(y, w, rho);
    double wmax = 0.0, wsum = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
      wmax = std::max(wmax, w.w[i] * y[i]);
      wsum += w.w[i] * y[i];
    }
    require(f >= wmax - 1e-15 && f <= wmax + rho * wsum + 1e-15,
            fmt("draw %d: %.17g outside [max, max + rho*sum]", draw, f));

    // raising one coordinate never lowers the scalar
    std::vector<double> y2 = y;
    const std::size_t k = rng.next() % d;
    y2[k] += rng.uniform(0.0, 0.5);
    require(chebyshev(y2, w, rho) >= f - 1e-15,
            fmt("draw %d: monotonicity violated at coord %zu", draw, k));
  }

  // single-objective collapse is bit-exact passthrough
  const ObjectiveSpec mini({"v"}, {Direction::minimize});
  const ObjectiveSpec maxi({"v"}, {Direction::maximize});
  NormalizationState norm(1);
  for (int i = 0; i < 1000; ++i) {
    const double v = rng.uniform(-100.0, 100.0);
    require(scalarize_trial({v}, norm, mini, WeightVector({1.0}), rho) == v,
            "minimize collapse not exact");
    require(scalarize_trial({v}, norm, maxi, WeightVector({1.0}), rho) == -v,
            "maximize collapse not exact");
  }
  return "bracketing + monotonicity on 1e5 draws, exact 1-D collapse";
}

// ---- 5: gradient checks, all layer kinds x all losses ------------------

nn::Tensor random_tensor(std::vector<std::size_t> shape, Rng& rng) {
  nn::Tensor t(std::move(shape));
  for (double& v : t.data) v = rng.uniform(-1.0, 1.0);
  return t;
}

// Targets pushed away from the prediction so kinked losses (mae, quantile)
// never change sign under the finite-difference step.
nn::Tensor offset_targets(const nn::Tensor& pred, Rng& rng) {
  nn::Tensor t = pred;
  for (double& v : t.data)
    v += (rng.uniform01() < 0.5 ? 1.0 : -1.0) * (0.3 + rng.uniform(0.0, 0.7));
  return t;
}

double max_grad_error(nn::Network& net, const nn::Tensor& x,
                      const nn::Tensor& target, nn::LossKind loss, double q) {
  const double h = 1e-5;
  const nn::Tensor pred = net.forward_train(x);
  net.zero_grad();
  net.backward(nn::loss_grad(loss, q, pred, target));

  double worst = 0.0;
  auto params = net.parameter_views();
  auto grads = net.gradient_views();
  auto sizes = net.parameter_sizes();
  for (std::size_t v = 0; v < params.size(); ++v) {
    for (std::size_t j = 0; j < sizes[v]; ++j) {
      const double old = params[v][j];
      params[v][j] = old + h;
      const double lp = nn::loss_value(loss, q, net.forward(x), target);
      params[v][j] = old - h;
      const double lm = nn::loss_value(loss, q, net.forward(x), target);
      params[v][j] = old;
      const double fd = (lp - lm) / (2.0 * h);
      const double an = grads[v][j];
      const double scale = std::max(std::abs(fd), std::abs(an));
      if (scale > 1e-7) worst = std::max(worst, std::abs(fd - an) / scale);
    }
  }
  return worst;
}

std::string check_gradients() {
  using nn::LayerSpec;
  using nn::Padding;
  const auto t0 = Clock::now();

  struct Fixture {
    const char* name;
    nn::NetworkSpec spec;
  };
  std::vector<Fixture> fixtures;
  {
    nn::NetworkSpec s;  // dense + relu
    s.input_shape = {6};
    s.layers = {LayerSpec::dense(6, 5), LayerSpec::relu(),
                LayerSpec::dense(5, 3)};
    fixtures.push_back({"dense+relu", s});
  }
  {
    nn::NetworkSpec s;  // conv2d same + flatten
    s.input_shape = {2, 5, 5};
    s.layers = {LayerSpec::conv2d(2, 3, 3, Padding::same),
                LayerSpec::flatten(), LayerSpec::dense(75, 4)};
    fixtures.push_back({"conv-same+flatten", s});
  }
  {
    nn::NetworkSpec s;  // conv2d valid
    s.input_shape = {1, 6, 6};
    s.layers = {LayerSpec::conv2d(1, 2, 3, Padding::valid),
                LayerSpec::flatten()};
    fixtures.push_back({"conv-valid", s});
  }
  {
    nn::NetworkSpec s;  // maxpool2d
    s.input_shape = {2, 4, 4};
    s.layers = {LayerSpec::conv2d(2, 2, 3, Padding::same),
                LayerSpec::maxpool2d(), LayerSpec::flatten()};
    fixtures.push_back({"maxpool", s});
  }
  {
    nn::NetworkSpec s;  // upsample2d_nearest
    s.input_shape = {1, 3, 3};
    s.layers = {LayerSpec::upsample2d_nearest(),
                LayerSpec::conv2d(1, 2, 3, Padding::same),
                LayerSpec::flatten()};
    fixtures.push_back({"upsample", s});
  }
  {
    nn::NetworkSpec s;  // sigmoid head
    s.input_shape = {5};
    s.layers = {LayerSpec::dense(5, 4), LayerSpec::sigmoid()};
    fixtures.push_back({"sigmoid", s});
  }
  {
    nn::NetworkSpec s;  // tanh head
    s.input_shape = {5};
    s.layers = {LayerSpec::dense(5, 4), LayerSpec::tanh()};
    fixtures.push_back({"tanh", s});
  }

  const nn::LossKind losses[] = {nn::LossKind::mse, nn::LossKind::mae,
                                 nn::LossKind::quantile};
  double worst = 0.0;
  std::size_t runs = 0;
  for (const auto& fx : fixtures) {
    for (nn::LossKind loss : losses) {
      for (std::uint64_t seed = 0; seed < 20; ++seed) {
        nn::NetworkSpec spec = fx.spec;
        spec.init_seed = 1000 * seed + 17;
        nn::Network net(spec);
        Rng rng(77 * seed + 5);
        std::vector<std::size_t> xshape = spec.input_shape;
        xshape.insert(xshape.begin(), 2);  // batch of 2
        const nn::Tensor x = random_tensor(xshape, rng);
        const nn::Tensor target = offset_targets(net.forward(x), rng);
        const double err = max_grad_error(net, x, target, loss, 0.75);
        worst = std::max(worst, err);
        ++runs;
        require(err < 1e-4, fmt("%s/%d seed %llu: rel err %.3e", fx.name,
                                int(loss), (unsigned long long)seed, err));
      }
    }
  }
  const double dt = seconds_since(t0);
  require(dt < 30.0, fmt("runtime %.1fs (need < 30s)", dt));
  return fmt("%zu nets (7 topologies x 3 losses x 20 seeds), worst rel err "
             "%.2e, %.1fs",
             runs, worst, dt);
}

// ---- 6: loss formulas --------------------------------------------------

std::string check_losses() {
  using nn::LossKind;
  nn::Tensor p({1});
  nn::Tensor t({1});

  // quantile(0.75) pinball asymmetry on u = target - pred
  p.data = {0.0};
  t.data = {1.0};  // u = +1
  require(std::abs(nn::loss_value(LossKind::quantile, 0.75, p, t) - 0.75) <
              1e-15,
          "quantile(0.75) at u=+1 is not 0.75");
  p.data = {1.0};
  t.data = {0.0};  // u = -1
  require(std::abs(nn::loss_value(LossKind::quantile, 0.75, p, t) - 0.25) <
              1e-15,
          "quantile(0.75) at u=-1 is not 0.25");

  nn::Tensor p2({2});
  nn::Tensor t2({2});
  p2.data = {1.0, -2.0};
  t2.data = {4.0, 2.0};  // diffs -3, -4
  require(std::abs(nn::loss_value(LossKind::mse, 0.5, p2, t2) - 12.5) < 1e-15,
          "mse((1,-2),(4,2)) != (9+16)/2");
  require(std::abs(nn::loss_value(LossKind::mae, 0.5, p2, t2) - 3.5) < 1e-15,
          "mae((1,-2),(4,2)) != (3+4)/2");

  for (LossKind k : {LossKind::mse, LossKind::mae, LossKind::quantile})
    require(nn::loss_value(k, 0.75, p2, p2) == 0.0,
            "loss at perfect fit is not exactly zero");
  return "mse/mae exact, quantile(0.75) 0.75/0.25 asymmetry, zero at fit";
}

// ---- 7: desk-scale Bragg accuracy --------------------------------------

std::string check_bragg_accuracy() {
  const auto t0 = Clock::now();
  const SearchSpace space = builtin_space("mlpBragg");
  const ObjectiveSpec spec({"val_mse"}, {Direction::minimize});
  tasks::BuiltinTask task = tasks::make_builtin_task("bragg");
  // stated operating point: epoch_cap 100, noise_sigma 0.02, seed 0
  BuiltinEvaluator evaluator(task);
  SearchBudget budget;
  budget.max_evaluations = 50;

  const auto res =
      run_search(space, evaluator, spec, budget, {}, SearchMode::ambs, 0);

  const TrialRecord* best = nullptr;
  for (const auto& rec : res.trials)
    if (rec.trial.status == TrialStatus::ok &&
        (!best || (*rec.trial.objectives)[0] < (*best->trial.objectives)[0]))
      best = &rec;
  require(best != nullptr, "no successful trials");

  const auto hold = tasks::bragg_holdout_metrics(best->trial.config,
                                                 task.bragg, best->trial.seed);
  const double dt = seconds_since(t0);
  require(!hold.diverged, "holdout retrain diverged");
  require(hold.median_px < 0.5,
          fmt("holdout median %.3f px (need < 0.5)", hold.median_px));
  require(hold.p95_px < 1.0,
          fmt("holdout p95 %.3f px (need < 1.0)", hold.p95_px));
  return fmt("best val_mse %.5f, holdout median %.3f px, p95 %.3f px, "
             "%.1f min (runtime bound stated for laptop hardware)",
             (*best->trial.objectives)[0], hold.median_px, hold.p95_px,
             dt / 60.0);
}

// ---- 8: accuracy / model-size trade-off --------------------------------

std::string check_tradeoff() {
  const SearchSpace space = builtin_space("mlpBragg");
  const ObjectiveSpec spec({"val_mse", "model_size"},
                           {Direction::minimize, Direction::minimize});
  tasks::BuiltinTask task = tasks::make_builtin_task("bragg");
  task.set_epoch_cap(30);  // desk-scale budget; trade-off shape is cap-stable
  BuiltinEvaluator evaluator(task);
  SearchBudget budget;
  budget.max_evaluations = 75;

  const auto res =
      run_search(space, evaluator, spec, budget, {}, SearchMode::ambs, 0);

  std::vector<std::vector<double>> ok_raw;
  for (const auto& rec : res.trials)
    if (rec.trial.status == TrialStatus::ok)
      ok_raw.push_back(*rec.trial.objectives);

  // archive non-domination against the brute-force oracle
  std::set<std::uint64_t> got;
  for (const auto& e : res.archive.entries()) got.insert(e.trial_id);
  ParetoArchive replay(spec);
  std::set<std::uint64_t> want;
  {
    std::vector<std::size_t> ids;
    std::vector<std::vector<double>> raw;
    for (const auto& rec : res.trials)
      if (rec.trial.status == TrialStatus::ok) {
        ids.push_back(rec.trial.trial_id);
        raw.push_back(*rec.trial.objectives);
      }
    for (std::size_t idx : oracle::nondominated_filter(raw, spec))
      want.insert(ids[idx]);
  }
  require(got == want, "archive disagrees with the dominance oracle");

  const auto& entries = res.archive.entries();
  require(entries.size() >= 2,
          fmt("archive has %zu points (need >= 2)", entries.size()));

  const auto* acc = &entries[0];
  for (const auto& e : entries)
    if (e.values[0] < acc->values[0]) acc = &e;
  bool found = false;
  double found_frac = 0.0, found_ratio = 0.0;
  for (const auto& e : entries) {
    const double frac = e.values[1] / acc->values[1];
    const double ratio = e.values[0] / acc->values[0];
    if (frac <= 0.25 && ratio <= 2.0) {
      found = true;
      found_frac = frac;
      found_ratio = ratio;
      break;
    }
  }
  require(found, fmt("no archive point with <= 25%% of best-accuracy params "
                     "at <= 2x val_mse (archive %zu points, best %a params)",
                     entries.size(), acc->values[1]));
  return fmt("archive %zu points; compact point: %.1f%% of params at %.2fx "
             "val_mse of the most accurate",
             entries.size(), 100.0 * found_frac, found_ratio);
}

// ---- 9: feasibility totality -------------------------------------------

std::string check_totality() {
  tasks::BraggOptions bragg_opt;
  bragg_opt.n_train = 64;  // tiny data: this check is about totality,
  bragg_opt.n_val = 16;    // not accuracy
  bragg_opt.epoch_cap = 2;
  tasks::PtychoOptions ptycho_opt;
  ptycho_opt.n_train = 8;
  ptycho_opt.n_val = 4;
  ptycho_opt.epoch_cap = 2;

  std::size_t feasible = 0, infeasible = 0;
  for (const char* preset :
       {"mlpBragg", "cnnBragg", "mlpPtycho", "cnnPtycho"}) {
    const SearchSpace space = builtin_space(preset);
    const bool is_bragg = std::string(preset).find("Bragg") != std::string::npos;
    Rng rng(0x70aa ^ std::hash<std::string>{}(preset));
    for (int i = 0; i < 500; ++i) {
      const Configuration c = space.sample(rng);
      tasks::TaskResult r;
      try {
        r = is_bragg ? tasks::eval_bragg(c, bragg_opt, i)
                     : tasks::eval_ptycho(c, ptycho_opt, i);
      } catch (const std::exception& e) {
        throw CheckFailure(fmt("%s config %d raised: %s", preset, i, e.what()));
      }
      (r.feasible ? feasible : infeasible) += 1;
      if (!r.feasible)
        require(!r.detail.empty(), fmt("%s config %d: infeasible without a "
                                       "reason", preset, i));
    }
  }

  // a maximally deep conv stack must be reported infeasible, not crash
  const SearchSpace cnn = builtin_space("cnnBragg");
  Configuration deep = cnn.decode({0.5, 0.5, 0.5, 0.5, 1.0});  // nconv = 128
  deep.values["nconv"] = std::int64_t{128};
  const auto r = tasks::eval_bragg(deep, bragg_opt, 0);
  require(!r.feasible, "nconv=128 was not reported infeasible");

  return fmt("2000 configs total: %zu feasible, %zu infeasible, 0 crashes; "
             "nconv=128 infeasible",
             feasible, infeasible);
}

// ---- 10: kill -9 at trial 50, resume, line-for-line equality -----------

std::size_t count_lines(const std::string& path) {
  std::ifstream in(path);
  std::size_t n = 0;
  std::string line;
  while (std::getline(in, line)) ++n;
  return n;
}

int run_cli(const std::vector<std::string>& args) {
  std::string cmd = PEAKFORGE_CLI_PATH;
  for (const auto& a : args) cmd += " " + a;
  cmd += " > /dev/null 2>&1";
  return std::system(cmd.c_str());
}

std::vector<std::string> masked_log(const std::string& path) {
  std::vector<std::string> out;
  std::ifstream in(path);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto j = nlohmann::json::parse(line);
    j.erase("started_at");
    j.erase("ended_at");
    j.erase("duration_s");
    out.push_back(j.dump());
  }
  return out;
}

std::string check_resume_exactness() {
  const auto t0 = Clock::now();
  const std::string base =
      (std::filesystem::temp_directory_path() /
       ("peakforge_accept_resume_" + std::to_string(::getpid())))
          .string();
  std::filesystem::remove_all(base);
  std::filesystem::create_directories(base);
  const std::string dir_a = base + "/uninterrupted";
  const std::string dir_b = base + "/killed";

  const std::vector<std::string> common = {
      "run",          "--space",      "mlpBragg",      "--task",
      "bragg",        "--epoch-cap",  "1",             "--objectives",
      "val_mse:min",  "--mode",       "ambs",          "--budget",
      "100",          "--seed",       "0"};

  auto args_a = common;
  args_a.push_back("--out");
  args_a.push_back(dir_a);
  require(run_cli(args_a) == 0, "uninterrupted reference run failed");

  // second run, SIGKILLed once 50 trials are on disk
  const pid_t pid = ::fork();
  require(pid >= 0, "fork failed");
  if (pid == 0) {
    auto args_b = common;
    args_b.push_back("--out");
    args_b.push_back(dir_b);
    std::vector<char*> argv;
    argv.push_back(const_cast<char*>(PEAKFORGE_CLI_PATH));
    for (auto& a : args_b) argv.push_back(a.data());
    argv.push_back(nullptr);
    ::execv(PEAKFORGE_CLI_PATH, argv.data());
    _exit(127);
  }
  const std::string log_b = dir_b + "/trials.jsonl";
  while (count_lines(log_b) < 50) {
    int status = 0;
    require(::waitpid(pid, &status, WNOHANG) == 0,
            "search process exited before trial 50");
    std::this_thread::sleep_for(std::chrono::milliseconds(100));
  }
  ::kill(pid, SIGKILL);
  int status = 0;
  ::waitpid(pid, &status, 0);
  const std::size_t at_kill = count_lines(log_b);

  require(run_cli({"resume", "--run", dir_b}) == 0, "resume run failed");

  const auto a = masked_log(dir_a + "/trials.jsonl");
  const auto b = masked_log(log_b);
  require(a.size() == 100, fmt("reference log has %zu lines", a.size()));
  require(b.size() == 100, fmt("resumed log has %zu lines", b.size()));
  for (std::size_t i = 0; i < a.size(); ++i)
    require(a[i] == b[i], fmt("logs differ at line %zu", i + 1));

  std::filesystem::remove_all(base);
  return fmt("killed at %zu trials, resumed; 100 lines identical "
             "(timestamps masked), %.1f min",
             at_kill, seconds_since(t0) / 60.0);
}

// ---- 11: evaluator protocol conformance --------------------------------

EvalRequest proto_request(std::uint64_t id, std::uint64_t seed = 7) {
  EvalRequest req;
  req.id = id;
  req.seed = seed;
  req.config.space_name = "demo";
  req.config.values["x"] = 1.5;
  req.objective_names = {"obj_0"};
  return req;
}

double stub_value(const EvalRequest& req, std::size_t k) {
  double sum = 0.0;
  for (const auto& [key, v] : req.config.values) {
    (void)key;
    if (std::holds_alternative<double>(v))
      sum += std::get<double>(v);
    else if (std::holds_alternative<std::int64_t>(v))
      sum += double(std::get<std::int64_t>(v));
    else
      for (char ch : std::get<std::string>(v)) sum += double(ch);
  }
  return sum + double(k) + double(req.seed % 97) / 1000.0;
}

std::string check_protocol() {
  // out-of-order replies match by id
  {
    Evaluator ev({EVAL_STUB_PATH, "--swap-pairs"});
    EvalResponse r1, r2;
    std::thread t1([&] { r1 = ev.evaluate(proto_request(1)); });
    std::thread t2([&] {
      std::this_thread::sleep_for(std::chrono::milliseconds(50));
      r2 = ev.evaluate(proto_request(2));
    });
    t1.join();
    t2.join();
    require(r1.ok && r2.ok, "out-of-order: responses not ok");
    require(r1.objectives.at("obj_0") == stub_value(proto_request(1), 0) &&
                r2.objectives.at("obj_0") == stub_value(proto_request(2), 0),
            "out-of-order: values landed on the wrong request");
  }

  // timeout kills the child; the handle respawns for the next request
  {
    Evaluator::Options opt;
    opt.eval_timeout_s = 0.4;
    Evaluator ev({EVAL_STUB_PATH, "--sleep-on-id", "2"}, opt);
    require(ev.evaluate(proto_request(1)).ok, "timeout: first request failed");
    const auto t0 = Clock::now();
    const auto r = ev.evaluate(proto_request(2));
    require(!r.ok && r.detail.find("no response within") != std::string::npos,
            "timeout: missing timeout failure");
    require(seconds_since(t0) < 5.0, "timeout: did not give up promptly");
    require(ev.evaluate(proto_request(3)).ok, "timeout: no recovery");
    require(ev.respawn_count() == 1, "timeout: expected exactly one respawn");
  }

  // a crash fails only the in-flight requests; later ones succeed
  {
    Evaluator ev({EVAL_STUB_PATH, "--sleep-ms", "300", "--crash-on-id", "5"});
    EvalResponse r4, r5;
    std::thread t4([&] { r4 = ev.evaluate(proto_request(4)); });
    std::this_thread::sleep_for(std::chrono::milliseconds(60));
    std::thread t5([&] { r5 = ev.evaluate(proto_request(5)); });
    t4.join();
    t5.join();
    require(r4.ok, "crash: pre-crash request lost");
    require(!r5.ok && r5.detail.find("exited") != std::string::npos,
            "crash: crashing request not failed with exit info");
    require(ev.evaluate(proto_request(6)).ok, "crash: no recovery");
    require(ev.respawn_count() == 1, "crash: expected exactly one respawn");
  }

  // exactly-once: 48 pipelined requests, each answered once with its value
  {
    Evaluator ev({EVAL_STUB_PATH});
    std::vector<std::thread> threads;
    std::vector<EvalResponse> rs(48);
    for (std::size_t i = 0; i < rs.size(); ++i)
      threads.emplace_back([&, i] {
        rs[i] = ev.evaluate(proto_request(100 + i, 11 + i));
      });
    for (auto& t : threads) t.join();
    for (std::size_t i = 0; i < rs.size(); ++i) {
      require(rs[i].ok, fmt("exactly-once: request %zu failed", i));
      require(rs[i].objectives.at("obj_0") ==
                  stub_value(proto_request(100 + i, 11 + i), 0),
              fmt("exactly-once: request %zu got a foreign value", i));
    }
    require(ev.in_flight() == 0, "exactly-once: stale in-flight entries");
    require(ev.respawn_count() == 0, "exactly-once: unexpected respawn");
  }
  return "out-of-order ids, timeout+respawn, crash containment, exactly-once";
}

// ---- 12: parameter and MAC counts vs closed forms ----------------------

std::string check_cost_proxies() {
  using nn::LayerSpec;
  using nn::Padding;
  struct Fixture {
    const char* name;
    nn::NetworkSpec spec;
    std::size_t params;
    std::size_t macs;
  };
  std::vector<Fixture> fx;

  nn::NetworkSpec s;
  s.input_shape = {121};
  s.layers = {LayerSpec::dense(121, 10), LayerSpec::relu(),
              LayerSpec::dense(10, 2)};
  fx.push_back({"mlp 121-10-2", s, 1242, 1230});

  s = {};
  s.input_shape = {1, 11, 11};
  s.layers = {LayerSpec::conv2d(1, 8, 3, Padding::same)};
  fx.push_back({"conv 1-8 k3 same 11x11", s, 80, 8712});

  s = {};
  s.input_shape = {1, 11, 11};
  s.layers = {LayerSpec::conv2d(1, 8, 3, Padding::valid)};
  fx.push_back({"conv 1-8 k3 valid 11x11", s, 80, 5832});

  s = {};
  s.input_shape = {4, 4, 4};
  s.layers = {LayerSpec::relu(), LayerSpec::maxpool2d(), LayerSpec::flatten()};
  fx.push_back({"activations only", s, 0, 0});

  s = {};
  s.input_shape = {121};
  s.layers = {LayerSpec::dense(121, 10)};
  fx.push_back({"dense 121-10", s, 1220, 1210});

  s = {};
  s.input_shape = {2, 8, 8};
  s.layers = {LayerSpec::conv2d(2, 4, 5, Padding::same)};
  fx.push_back({"conv 2-4 k5 same 8x8", s, 204, 12800});

  s = {};
  s.input_shape = {3, 7, 7};
  s.layers = {LayerSpec::conv2d(3, 6, 1, Padding::same)};
  fx.push_back({"conv 3-6 k1", s, 24, 882});

  s = {};
  s.input_shape = {5};
  s.layers = {LayerSpec::dense(5, 7), LayerSpec::sigmoid(),
              LayerSpec::dense(7, 3)};
  fx.push_back({"mlp 5-7-3", s, 66, 56});

  s = {};
  s.input_shape = {1, 8, 8};
  s.layers = {LayerSpec::conv2d(1, 4, 3, Padding::same), LayerSpec::relu(),
              LayerSpec::maxpool2d(), LayerSpec::flatten(),
              LayerSpec::dense(64, 10)};
  fx.push_back({"conv-pool-dense", s, 690, 2944});

  s = {};
  s.input_shape = {1, 4, 4};
  s.layers = {LayerSpec::conv2d(1, 2, 3, Padding::same),
              LayerSpec::upsample2d_nearest(),
              LayerSpec::conv2d(2, 1, 3, Padding::same)};
  fx.push_back({"conv-upsample-conv", s, 39, 1440});

  for (const auto& f : fx) {
    const std::size_t p = nn::param_count(f.spec);
    const std::size_t m = nn::mac_count(f.spec);
    require(p == f.params, fmt("%s: param_count %zu != %zu", f.name, p,
                               f.params));
    require(m == f.macs, fmt("%s: mac_count %zu != %zu", f.name, m, f.macs));
  }
  return "10 fixtures exact, including the 1242-parameter MLP and "
         "8712-MAC conv";
}

}  // namespace

int main(int argc, char** argv) {
  struct Check {
    int id;
    const char* name;
    std::function<std::string()> run;
  };
  const std::vector<Check> checks = {
      {1, "optimizer beats random on paired seeds", check_optimizer_superiority},
      {2, "archive matches brute-force dominance filter", check_pareto_oracle},
      {3, "hypervolume matches IE and Monte Carlo oracles", check_hypervolume},
      {4, "Chebyshev scalarization properties", check_scalarization},
      {5, "gradients match finite differences", check_gradients},
      {6, "loss formulas", check_losses},
      {7, "Bragg holdout accuracy at desk scale", check_bragg_accuracy},
      {8, "accuracy/size trade-off archive", check_tradeoff},
      {9, "task evaluation totality", check_totality},
      {10, "kill -9 + resume reproduces the log", check_resume_exactness},
      {11, "evaluator protocol conformance", check_protocol},
      {12, "param/MAC counts match closed forms", check_cost_proxies},
  };

  // optional filter: run only the listed check numbers
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));

  int failed = 0;
  for (const auto& c : checks) {
    if (!only.empty() && !only.count(c.id)) continue;
    std::string detail;
    bool ok = true;
    try {
      detail = c.run();
    } catch (const CheckFailure& e) {
      ok = false;
      detail = e.what();
    } catch (const std::exception& e) {
      ok = false;
      detail = std::string("unexpected exception: ") + e.what();
    }
    std::printf("%s  %2d  %s: %s\n", ok ? "PASS" : "FAIL", c.id, c.name,
                detail.c_str());
    std::fflush(stdout);
    if (!ok) ++failed;
  }
  if (failed) std::printf("%d of 12 checks failed\n", failed);
  return failed ? 1 : 0;
}
