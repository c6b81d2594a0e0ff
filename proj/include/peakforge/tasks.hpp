#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "peakforge/nn.hpp"
#include "peakforge/space.hpp"

namespace peakforge::tasks {

// ---- synthetic Bragg peaks ---------------------------------------------

struct PseudoVoigtParams {
  double amplitude = 1.0;
  double x0 = 5.0, y0 = 5.0;
  double sigma = 1.0;       // gaussian width, pixels
  double gamma = 1.0;       // lorentzian width, pixels
  double eta = 0.5;         // lorentzian fraction in [0, 1]
  double background = 0.0;
  double noise_sigma = 0.0; // relative to amplitude
};

/// b + A * (eta * L(r) + (1 - eta) * G(r)) with G = exp(-r^2 / 2 sigma^2)
/// and L = 1 / (1 + r^2 / gamma^2).
double pseudo_voigt(const PseudoVoigtParams& p, double x, double y);

inline constexpr std::size_t kPatchSize = 11;

struct PeakPatch {
  std::array<double, kPatchSize * kPatchSize> pixels{};  // pixels[y * 11 + x]
  double center_x = 0.0, center_y = 0.0;                 // true center
};

/// Random pseudo-Voigt patches; each patch is a pure function of (seed, index)
/// so prefix/suffix splits stay stable as n grows.
std::vector<PeakPatch> generate_bragg_dataset(std::size_t n, double noise_sigma,
                                              std::uint64_t seed);

struct Point {
  double x = 0.0, y = 0.0;
};

/// Intensity-weighted mean position over the 7x7 neighborhood of the
/// brightest pixel, after subtracting the neighborhood minimum. Throws
/// ConfigError when nothing remains above the subtracted floor.
Point centroid_fit(const PeakPatch& patch);

// ---- synthetic ptychography --------------------------------------------

inline constexpr std::size_t kPtychoSize = 16;
using PtychoGrid = std::array<double, kPtychoSize * kPtychoSize>;

struct PtychoSample {
  PtychoGrid input{};      // |centered DFT|, log1p-compressed, max-normalized
  PtychoGrid amplitude{};  // target, in [0, 1]
  PtychoGrid phase{};      // target, radians in [-pi, pi]
};

/// Magnitude of the centered 2-D DFT of amplitude * exp(i * phase), before
/// any compression. Direct O(n^2) evaluation; the grids are tiny.
PtychoGrid ptycho_magnitude(const PtychoGrid& amplitude, const PtychoGrid& phase);

std::vector<PtychoSample> generate_ptycho_dataset(std::size_t n, std::uint64_t seed);

// ---- evaluation --------------------------------------------------------

struct TaskResult {
  bool feasible = false;
  std::map<std::string, double> metrics;  // empty when infeasible
  std::string detail;
};

/// Orders the named metrics for a scalarizer/archive. Throws ConfigError on
/// unknown names or infeasible results.
std::vector<double> select_metrics(const TaskResult& r,
                                   const std::vector<std::string>& names);

struct BraggOptions {
  std::size_t n_train = 2000, n_val = 500;
  double noise_sigma = 0.02;
  std::size_t epoch_cap = 100;
};

struct PtychoOptions {
  std::size_t n_train = 1000, n_val = 200;
  std::size_t epoch_cap = 100;
};

/// Network for an mlpBragg/cnnBragg configuration. Throws ConfigError when
/// the topology cannot exist (e.g. valid convolutions exhaust the patch).
nn::NetworkSpec build_bragg_net(const Configuration& c, std::uint64_t init_seed);

/// Encoder plus two decoder heads for mlpPtycho/cnnPtycho. The phase head
/// ends in tanh for the cnn family; the task scales it by pi outside the net.
struct PtychoParts {
  nn::NetworkSpec encoder, amp_head, phase_head;
  bool scale_phase_pi = false;
};
PtychoParts build_ptycho_parts(const Configuration& c, std::uint64_t init_seed);

/// Metrics: val_mse (px^2, per coordinate), val_quantile (75th percentile of
/// absolute coordinate error, px), model_size, macs.
TaskResult eval_bragg(const Configuration& c, const BraggOptions& opt,
                      std::uint64_t seed);

/// Metrics: val_mae (mean of amplitude and phase MAE, phase in radians),
/// model_size, macs.
TaskResult eval_ptycho(const Configuration& c, const PtychoOptions& opt,
                       std::uint64_t seed);

/// Retrains a configuration and reports held-out center-error quantiles in
/// pixels (Euclidean distance per validation patch).
struct BraggHoldout {
  bool diverged = false;
  double median_px = 0.0, p95_px = 0.0;
};
BraggHoldout bragg_holdout_metrics(const Configuration& c, const BraggOptions& opt,
                                   std::uint64_t seed);

// ---- analytic test functions -------------------------------------------

/// sphere3: x1..x3 in [-1,1], metric "value". zdt1: x1..x5 in [0,1], metrics
/// "f1"/"f2".
SearchSpace analytic_space(const std::string& name);
TaskResult analytic_task(const std::string& name, const Configuration& c);

// ---- registry ----------------------------------------------------------

/// In-process evaluator behind both the CLI and the search loop. Tasks
/// "bragg" and "ptycho" dispatch on the configuration's space name.
struct BuiltinTask {
  std::string name;  // bragg | ptycho | sphere3 | zdt1
  BraggOptions bragg;
  PtychoOptions ptycho;

  TaskResult evaluate(const Configuration& c, std::uint64_t seed) const;
  std::vector<std::string> metric_names() const;
  bool accepts_space(const std::string& space_name) const;
  void set_epoch_cap(std::size_t cap);
};

BuiltinTask make_builtin_task(const std::string& name);
std::vector<std::string> builtin_task_names();

// ---- dataset dumps -----------------------------------------------------

/// One row per patch: 121 pixels then center_x, center_y.
void write_bragg_csv(const std::vector<PeakPatch>& patches, const std::string& path);
/// PFNN container with three tensors: input, amplitude, phase ([n, 16, 16]).
void write_ptycho_tensors(const std::vector<PtychoSample>& samples,
                          const std::string& path);

}  // namespace peakforge::tasks
