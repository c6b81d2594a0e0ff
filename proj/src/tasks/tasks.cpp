#include "peakforge/tasks.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <numeric>
#include <optional>

#include "common/binio.hpp"
#include "peakforge/error.hpp"
#include "peakforge/rng.hpp"

namespace peakforge::tasks {

namespace {

constexpr std::uint64_t kDataPurpose = 0x7461736b2d646174ULL;   // "task-dat"
constexpr std::uint64_t kInitPurpose = 0x7461736b2d696e69ULL;   // "task-ini"
constexpr std::uint64_t kShufflePurpose = 0x7461736b2d736866ULL;
constexpr std::uint64_t kPatchPurpose = 0x627261676721ULL;
constexpr std::uint64_t kSamplePurpose = 0x70747963686f21ULL;
constexpr std::uint64_t kPartPurpose = 0x70617274ULL;

constexpr double kPi = std::numbers::pi;

std::int64_t get_int(const Configuration& c, const std::string& name) {
  const auto it = c.values.find(name);
  if (it == c.values.end())
    throw ConfigError("configuration is missing dimension '" + name + "'");
  if (const auto* p = std::get_if<std::int64_t>(&it->second)) return *p;
  throw ConfigError("dimension '" + name + "' is not an integer");
}

double get_real(const Configuration& c, const std::string& name) {
  const auto it = c.values.find(name);
  if (it == c.values.end())
    throw ConfigError("configuration is missing dimension '" + name + "'");
  if (const auto* p = std::get_if<double>(&it->second)) return *p;
  if (const auto* p = std::get_if<std::int64_t>(&it->second))
    return static_cast<double>(*p);
  throw ConfigError("dimension '" + name + "' is not numeric");
}

std::size_t get_batch(const Configuration& c) {
  const auto it = c.values.find("batch");
  if (it == c.values.end())
    throw ConfigError("configuration is missing dimension 'batch'");
  if (const auto* p = std::get_if<std::int64_t>(&it->second))
    return static_cast<std::size_t>(*p);
  if (const auto* p = std::get_if<std::string>(&it->second)) {
    try {
      return static_cast<std::size_t>(std::stoll(*p));
    } catch (const std::exception&) {
      throw ConfigError("batch choice '" + *p + "' is not an integer");
    }
  }
  throw ConfigError("dimension 'batch' has an unsupported value type");
}

struct TrainKnobs {
  std::size_t nepochs = 1;
  std::size_t batch = 1;
  double lr = 0.01;
};

TrainKnobs read_train_knobs(const Configuration& c) {
  TrainKnobs k;
  const auto ep = get_int(c, "nepochs");
  if (ep < 1) throw ConfigError("nepochs must be positive");
  k.nepochs = static_cast<std::size_t>(ep);
  k.batch = get_batch(c);
  if (k.batch == 0) throw ConfigError("batch must be positive");
  k.lr = get_real(c, "lr");
  if (!std::isfinite(k.lr) || k.lr < 0.0)
    throw ConfigError("lr must be finite and non-negative");
  return k;
}

nn::TrainConfig make_train_config(const TrainKnobs& k, std::size_t n_train,
                                  std::size_t epoch_cap, std::uint64_t seed) {
  if (epoch_cap == 0) throw ConfigError("epoch_cap must be positive");
  nn::TrainConfig cfg;
  cfg.epochs = std::min(k.nepochs, epoch_cap);
  cfg.batch_size = std::min(k.batch, n_train);
  cfg.learning_rate = k.lr;
  cfg.optimizer = nn::Optimizer::adam;
  cfg.loss = nn::LossKind::mse;
  cfg.shuffle_seed = keyed_seed(seed, kShufflePurpose, 0);
  return cfg;
}

}  // namespace

// ---- generators --------------------------------------------------------

double pseudo_voigt(const PseudoVoigtParams& p, double x, double y) {
  const double dx = x - p.x0, dy = y - p.y0;
  const double r2 = dx * dx + dy * dy;
  const double g = std::exp(-r2 / (2.0 * p.sigma * p.sigma));
  const double l = 1.0 / (1.0 + r2 / (p.gamma * p.gamma));
  return p.background + p.amplitude * (p.eta * l + (1.0 - p.eta) * g);
}

std::vector<PeakPatch> generate_bragg_dataset(std::size_t n, double noise_sigma,
                                              std::uint64_t seed) {
  if (n == 0) throw ConfigError("dataset size must be positive");
  if (noise_sigma < 0.0) throw ConfigError("noise_sigma must be non-negative");
  std::vector<PeakPatch> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    Rng rng = keyed_rng(seed, kPatchPurpose, i);
    PseudoVoigtParams p;
    p.amplitude = rng.uniform(0.5, 2.0);
    p.sigma = rng.uniform(0.8, 2.0);
    p.gamma = rng.uniform(0.8, 2.0);
    p.eta = rng.uniform(0.0, 1.0);
    p.background = rng.uniform(0.0, 0.05);
    p.x0 = rng.uniform(3.5, 6.5);
    p.y0 = rng.uniform(3.5, 6.5);
    p.noise_sigma = noise_sigma;

    PeakPatch& patch = out[i];
    patch.center_x = p.x0;
    patch.center_y = p.y0;
    const double noise_std = noise_sigma * p.amplitude;
    for (std::size_t y = 0; y < kPatchSize; ++y) {
      for (std::size_t x = 0; x < kPatchSize; ++x) {
        const double v = pseudo_voigt(p, double(x), double(y)) + rng.normal() * noise_std;
        patch.pixels[y * kPatchSize + x] = std::max(0.0, v);
      }
    }
  }
  return out;
}

Point centroid_fit(const PeakPatch& patch) {
  std::size_t am = 0;
  for (std::size_t i = 1; i < patch.pixels.size(); ++i)
    if (patch.pixels[i] > patch.pixels[am]) am = i;
  // Restricting to the brightest pixel's neighborhood keeps heavy Lorentzian
  // tails from dragging the estimate toward the window center.
  constexpr int w = 3;
  const int ax = int(am % kPatchSize), ay = int(am / kPatchSize);
  const int x0 = std::max(0, ax - w), x1 = std::min(int(kPatchSize) - 1, ax + w);
  const int y0 = std::max(0, ay - w), y1 = std::min(int(kPatchSize) - 1, ay + w);
  double floor = patch.pixels[am];
  for (int y = y0; y <= y1; ++y)
    for (int x = x0; x <= x1; ++x)
      floor = std::min(floor, patch.pixels[std::size_t(y) * kPatchSize + std::size_t(x)]);
  double sum = 0.0, sx = 0.0, sy = 0.0;
  for (int y = y0; y <= y1; ++y) {
    for (int x = x0; x <= x1; ++x) {
      const double v = patch.pixels[std::size_t(y) * kPatchSize + std::size_t(x)] - floor;
      sum += v;
      sx += v * double(x);
      sy += v * double(y);
    }
  }
  if (!(sum > 0.0))
    throw ConfigError("patch has no intensity above the subtracted background");
  return {sx / sum, sy / sum};
}

PtychoGrid ptycho_magnitude(const PtychoGrid& amplitude, const PtychoGrid& phase) {
  constexpr std::size_t n = kPtychoSize;
  // Per-pixel field and the 16 possible twiddle angles -2*pi*t/16.
  std::array<double, n * n> fre{}, fim{};
  for (std::size_t i = 0; i < n * n; ++i) {
    fre[i] = amplitude[i] * std::cos(phase[i]);
    fim[i] = amplitude[i] * std::sin(phase[i]);
  }
  std::array<double, n> tc{}, ts{};
  for (std::size_t t = 0; t < n; ++t) {
    const double a = -2.0 * kPi * double(t) / double(n);
    tc[t] = std::cos(a);
    ts[t] = std::sin(a);
  }

  PtychoGrid out{};
  for (int ky = -int(n) / 2; ky < int(n) / 2; ++ky) {
    for (int kx = -int(n) / 2; kx < int(n) / 2; ++kx) {
      double re = 0.0, im = 0.0;
      for (int y = 0; y < int(n); ++y) {
        for (int x = 0; x < int(n); ++x) {
          const int t = ((kx * x + ky * y) % int(n) + int(n)) % int(n);
          const double a = fre[y * n + x], b = fim[y * n + x];
          re += a * tc[t] - b * ts[t];
          im += a * ts[t] + b * tc[t];
        }
      }
      const std::size_t iy = std::size_t(ky + int(n) / 2);
      const std::size_t ix = std::size_t(kx + int(n) / 2);
      out[iy * n + ix] = std::hypot(re, im);
    }
  }
  return out;
}

std::vector<PtychoSample> generate_ptycho_dataset(std::size_t n, std::uint64_t seed) {
  if (n == 0) throw ConfigError("dataset size must be positive");
  constexpr std::size_t sz = kPtychoSize;
  std::vector<PtychoSample> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    Rng rng = keyed_rng(seed, kSamplePurpose, i);
    PtychoSample& s = out[i];

    // Amplitude: one primary blob anchored near the grid center plus a couple
    // of satellites, max-normalized into [0, 1]. Anchoring matters: the input
    // below is a pure DFT magnitude, which is blind to translations, so a
    // fully free layout would leave the reconstruction under-determined.
    const std::size_t blobs = 2 + rng.index(2);
    std::vector<std::array<double, 4>> blob(blobs);  // cx, cy, width, height
    blob[0] = {rng.uniform(6.5, 8.5), rng.uniform(6.5, 8.5), rng.uniform(1.5, 3.5),
               1.0};
    for (std::size_t b = 1; b < blobs; ++b)
      blob[b] = {rng.uniform(3.0, 12.0), rng.uniform(3.0, 12.0),
                 rng.uniform(1.0, 2.5), rng.uniform(0.3, 0.8)};
    double amax = 0.0;
    for (std::size_t y = 0; y < sz; ++y) {
      for (std::size_t x = 0; x < sz; ++x) {
        double v = 0.0;
        for (const auto& b : blob) {
          const double dx = double(x) - b[0], dy = double(y) - b[1];
          v += b[3] * std::exp(-(dx * dx + dy * dy) / (2.0 * b[2] * b[2]));
        }
        s.amplitude[y * sz + x] = v;
        amax = std::max(amax, v);
      }
    }
    for (double& v : s.amplitude) v /= amax;

    // Phase: two cosine modes from a small frequency set, mean-centered then
    // peak-scaled to [-pi, pi]. The modes are chosen so their diffraction
    // satellites stay separated after the encoder's pooling, and their
    // offsets are fixed at zero: satellite heights then determine the field,
    // so a magnitude-only input suffices to reconstruct it.
    struct Mode {
      int kx, ky;
      double a;
    };
    constexpr std::array<std::array<int, 2>, 4> kFreqs{
        {{4, 0}, {0, 4}, {4, 4}, {4, -4}}};
    std::array<Mode, 2> modes{};
    for (auto& m : modes) {
      const auto& k = kFreqs[rng.index(kFreqs.size())];
      m = {k[0], k[1], rng.uniform(0.5, 1.0)};
    }
    double psum = 0.0;
    for (std::size_t y = 0; y < sz; ++y) {
      for (std::size_t x = 0; x < sz; ++x) {
        double v = 0.0;
        for (const auto& m : modes)
          v += m.a * std::cos(2.0 * kPi * (m.kx * double(x) + m.ky * double(y)) /
                              double(sz));
        s.phase[y * sz + x] = v;
        psum += v;
      }
    }
    double pmax = 0.0;
    for (double& v : s.phase) {
      v -= psum / double(sz * sz);
      pmax = std::max(pmax, std::abs(v));
    }
    if (pmax > 0.0)
      for (double& v : s.phase) v *= kPi / pmax;

    // Input: compressed diffraction magnitude.
    const PtychoGrid mag = ptycho_magnitude(s.amplitude, s.phase);
    double imax = 0.0;
    for (std::size_t j = 0; j < sz * sz; ++j) {
      s.input[j] = std::log1p(mag[j]);
      imax = std::max(imax, s.input[j]);
    }
    for (double& v : s.input) v /= imax;
  }
  return out;
}

// ---- metric plumbing ---------------------------------------------------

std::vector<double> select_metrics(const TaskResult& r,
                                   const std::vector<std::string>& names) {
  if (!r.feasible) throw ConfigError("cannot select metrics from an infeasible result");
  std::vector<double> out;
  out.reserve(names.size());
  for (const std::string& n : names) {
    const auto it = r.metrics.find(n);
    if (it == r.metrics.end()) {
      std::string known;
      for (const auto& [k, v] : r.metrics) known += (known.empty() ? "" : ", ") + k;
      throw ConfigError("unknown metric '" + n + "' (task produced: " + known + ")");
    }
    out.push_back(it->second);
  }
  return out;
}

// ---- network builders --------------------------------------------------

namespace {

nn::NetworkSpec bragg_mlp_spec(std::int64_t nhidden, std::int64_t nunits,
                               std::uint64_t init_seed) {
  if (nhidden < 1 || nunits < 1)
    throw ConfigError("mlpBragg needs nhidden >= 1 and nunits >= 1");
  nn::NetworkSpec s;
  s.init_seed = init_seed;
  s.input_shape = {1, kPatchSize, kPatchSize};
  s.layers.push_back(nn::LayerSpec::flatten());
  std::size_t in = kPatchSize * kPatchSize;
  for (std::int64_t i = 0; i < nhidden; ++i) {
    s.layers.push_back(nn::LayerSpec::dense(in, std::size_t(nunits)));
    s.layers.push_back(nn::LayerSpec::relu());
    in = std::size_t(nunits);
  }
  s.layers.push_back(nn::LayerSpec::dense(in, 2));
  return s;
}

nn::NetworkSpec bragg_cnn_spec(std::int64_t nconv, std::int64_t nfilters,
                               std::uint64_t init_seed) {
  if (nconv < 1 || nfilters < 1)
    throw ConfigError("cnnBragg needs nconv >= 1 and nfilters >= 1");
  nn::NetworkSpec s;
  s.init_seed = init_seed;
  s.input_shape = {1, kPatchSize, kPatchSize};
  std::size_t ch = 1;
  std::int64_t spatial = kPatchSize;
  for (std::int64_t i = 1; i <= nconv; ++i) {
    if (spatial < 3)
      throw ConfigError("cnnBragg: the 11x11 patch is exhausted after " +
                        std::to_string(i - 1) + " valid 3x3 convolutions (nconv=" +
                        std::to_string(nconv) + ")");
    s.layers.push_back(nn::LayerSpec::conv2d(ch, std::size_t(nfilters), 3,
                                             nn::Padding::valid));
    s.layers.push_back(nn::LayerSpec::relu());
    ch = std::size_t(nfilters);
    spatial -= 2;
    if (i % 2 == 0 && spatial >= 4) {
      s.layers.push_back(nn::LayerSpec::maxpool2d());
      spatial /= 2;
    }
  }
  s.layers.push_back(nn::LayerSpec::flatten());
  s.layers.push_back(nn::LayerSpec::dense(ch * std::size_t(spatial) * std::size_t(spatial), 64));
  s.layers.push_back(nn::LayerSpec::relu());
  s.layers.push_back(nn::LayerSpec::dense(64, 2));
  return s;
}

}  // namespace

nn::NetworkSpec build_bragg_net(const Configuration& c, std::uint64_t init_seed) {
  if (c.space_name == "mlpBragg")
    return bragg_mlp_spec(get_int(c, "nhidden"), get_int(c, "nunits"), init_seed);
  if (c.space_name == "cnnBragg")
    return bragg_cnn_spec(get_int(c, "nconv"), get_int(c, "nfilters"), init_seed);
  throw ConfigError("task bragg cannot evaluate space '" + c.space_name +
                    "' (expected mlpBragg or cnnBragg)");
}

PtychoParts build_ptycho_parts(const Configuration& c, std::uint64_t init_seed) {
  PtychoParts parts;
  const std::uint64_t enc_seed = keyed_seed(init_seed, kPartPurpose, 0);
  const std::uint64_t amp_seed = keyed_seed(init_seed, kPartPurpose, 1);
  const std::uint64_t phase_seed = keyed_seed(init_seed, kPartPurpose, 2);
  constexpr std::size_t out_px = kPtychoSize * kPtychoSize;

  if (c.space_name == "mlpPtycho") {
    const auto nhidden = get_int(c, "nhidden");
    const auto nunits = get_int(c, "nunits");
    if (nhidden < 1 || nunits < 1)
      throw ConfigError("mlpPtycho needs nhidden >= 1 and nunits >= 1");
    nn::NetworkSpec& e = parts.encoder;
    e.init_seed = enc_seed;
    e.input_shape = {1, kPtychoSize, kPtychoSize};
    e.layers.push_back(nn::LayerSpec::flatten());
    std::size_t in = out_px;
    for (std::int64_t i = 0; i < nhidden; ++i) {
      e.layers.push_back(nn::LayerSpec::dense(in, std::size_t(nunits)));
      e.layers.push_back(nn::LayerSpec::relu());
      in = std::size_t(nunits);
    }
    for (auto* head : {&parts.amp_head, &parts.phase_head}) {
      head->input_shape = {in};
      head->layers = {nn::LayerSpec::dense(in, out_px)};
    }
    parts.amp_head.init_seed = amp_seed;
    parts.phase_head.init_seed = phase_seed;
    parts.scale_phase_pi = false;
    return parts;
  }

  if (c.space_name == "cnnPtycho") {
    const auto enconv = get_int(c, "enconv");
    const auto nfilters = get_int(c, "nfilters");
    const auto deconv1 = get_int(c, "deconv1");
    const auto deconv2 = get_int(c, "deconv2");
    if (enconv < 1 || nfilters < 1 || deconv1 < 1 || deconv2 < 1)
      throw ConfigError("cnnPtycho dimensions must be >= 1");

    nn::NetworkSpec& e = parts.encoder;
    e.init_seed = enc_seed;
    e.input_shape = {1, kPtychoSize, kPtychoSize};
    std::size_t ch = 1, spatial = kPtychoSize;
    for (std::int64_t i = 1; i <= enconv; ++i) {
      e.layers.push_back(nn::LayerSpec::conv2d(ch, std::size_t(nfilters), 3,
                                               nn::Padding::same));
      e.layers.push_back(nn::LayerSpec::relu());
      ch = std::size_t(nfilters);
      if (spatial >= 4) {
        e.layers.push_back(nn::LayerSpec::maxpool2d());
        spatial /= 2;
      }
    }

    // Each decoder must double its way back to exactly 16x16.
    std::int64_t need = 0;
    for (std::size_t s = spatial; s < kPtychoSize; s *= 2) ++need;
    auto make_decoder = [&](std::int64_t deconv, std::uint64_t seed,
                            nn::LayerSpec head_act) {
      if (deconv != need)
        throw ConfigError("cnnPtycho: " + std::to_string(deconv) +
                          " upsample blocks cannot restore 16x16 from " +
                          std::to_string(spatial) + "x" + std::to_string(spatial) +
                          " (needs " + std::to_string(need) + ")");
      nn::NetworkSpec d;
      d.init_seed = seed;
      d.input_shape = {ch, spatial, spatial};
      std::size_t dch = ch;
      for (std::int64_t j = 0; j < deconv; ++j) {
        d.layers.push_back(nn::LayerSpec::upsample2d_nearest());
        d.layers.push_back(nn::LayerSpec::conv2d(dch, std::size_t(nfilters), 3,
                                                 nn::Padding::same));
        d.layers.push_back(nn::LayerSpec::relu());
        dch = std::size_t(nfilters);
      }
      d.layers.push_back(nn::LayerSpec::conv2d(dch, 1, 3, nn::Padding::same));
      d.layers.push_back(head_act);
      return d;
    };
    parts.amp_head = make_decoder(deconv1, amp_seed, nn::LayerSpec::sigmoid());
    parts.phase_head = make_decoder(deconv2, phase_seed, nn::LayerSpec::tanh());
    parts.scale_phase_pi = true;
    return parts;
  }

  throw ConfigError("task ptycho cannot evaluate space '" + c.space_name +
                    "' (expected mlpPtycho or cnnPtycho)");
}

// ---- evaluation helpers ------------------------------------------------

namespace {

nn::Tensor predict_chunked(nn::Network& net, const nn::Tensor& inputs,
                           std::size_t chunk) {
  const std::size_t n = inputs.shape[0];
  const std::size_t per = inputs.numel() / n;
  std::vector<std::size_t> out_shape{n};
  const auto& os = net.output_shape();
  out_shape.insert(out_shape.end(), os.begin(), os.end());
  nn::Tensor out(out_shape);
  const std::size_t out_per = out.numel() / n;
  for (std::size_t start = 0; start < n; start += chunk) {
    const std::size_t bsz = std::min(chunk, n - start);
    std::vector<std::size_t> xs = inputs.shape;
    xs[0] = bsz;
    nn::Tensor xb(xs);
    std::copy_n(inputs.ptr() + start * per, bsz * per, xb.ptr());
    const nn::Tensor yb = net.forward(xb);
    std::copy_n(yb.ptr(), bsz * out_per, out.ptr() + start * out_per);
  }
  return out;
}

double interp_quantile(std::vector<double> v, double q) {
  std::sort(v.begin(), v.end());
  if (v.size() == 1) return v[0];
  const double pos = q * double(v.size() - 1);
  const std::size_t lo = std::size_t(pos);
  if (lo + 1 >= v.size()) return v.back();
  const double frac = pos - double(lo);
  return v[lo] + (v[lo + 1] - v[lo]) * frac;
}

struct BraggTrained {
  bool feasible = false, diverged = false;
  std::string detail;
  nn::NetworkSpec spec;
  std::optional<nn::Network> net;
  nn::Dataset val;  // inputs + normalized targets
};

// Coordinates train in [0,1] (pixels / 10) and report in pixels.
constexpr double kCoordScale = 10.0;

BraggTrained train_bragg(const Configuration& c, const BraggOptions& opt,
                         std::uint64_t seed) {
  if (c.space_name != "mlpBragg" && c.space_name != "cnnBragg")
    throw ConfigError("task bragg cannot evaluate space '" + c.space_name +
                      "' (expected mlpBragg or cnnBragg)");
  if (opt.n_train == 0 || opt.n_val == 0)
    throw ConfigError("bragg task needs n_train >= 1 and n_val >= 1");
  const TrainKnobs knobs = read_train_knobs(c);

  BraggTrained out;
  try {
    out.spec = build_bragg_net(c, keyed_seed(seed, kInitPurpose, 0));
    nn::infer_shapes(out.spec);
  } catch (const ConfigError& e) {
    out.detail = e.what();
    return out;
  }

  const auto patches = generate_bragg_dataset(opt.n_train + opt.n_val,
                                              opt.noise_sigma,
                                              keyed_seed(seed, kDataPurpose, 0));
  constexpr std::size_t px = kPatchSize * kPatchSize;
  auto fill = [&](std::size_t start, std::size_t count) {
    nn::Dataset d;
    d.inputs = nn::Tensor({count, 1, kPatchSize, kPatchSize});
    d.targets = nn::Tensor({count, 2});
    for (std::size_t i = 0; i < count; ++i) {
      const PeakPatch& p = patches[start + i];
      std::copy(p.pixels.begin(), p.pixels.end(), d.inputs.ptr() + i * px);
      d.targets.data[2 * i] = p.center_x / kCoordScale;
      d.targets.data[2 * i + 1] = p.center_y / kCoordScale;
    }
    return d;
  };
  const nn::Dataset train_set = fill(0, opt.n_train);
  out.val = fill(opt.n_train, opt.n_val);

  const nn::TrainConfig cfg = make_train_config(knobs, opt.n_train, opt.epoch_cap, seed);
  out.net.emplace(out.spec);
  const nn::TrainResult res = nn::train(*out.net, train_set, out.val, cfg);
  if (res.diverged) {
    out.diverged = true;
    out.detail = "training diverged (non-finite loss)";
    out.net.reset();
    return out;
  }
  out.feasible = true;
  out.detail = "trained " + std::to_string(cfg.epochs) + " epochs";
  return out;
}

}  // namespace

TaskResult eval_bragg(const Configuration& c, const BraggOptions& opt,
                      std::uint64_t seed) {
  BraggTrained run = train_bragg(c, opt, seed);
  TaskResult r;
  r.detail = run.detail;
  if (!run.feasible) return r;

  const nn::Tensor pred = predict_chunked(*run.net, run.val.inputs, 64);
  const double mse_norm =
      nn::loss_value(nn::LossKind::mse, 0.5, pred, run.val.targets);
  std::vector<double> abs_dev(pred.numel());
  for (std::size_t i = 0; i < pred.numel(); ++i)
    abs_dev[i] = std::abs(pred.data[i] - run.val.targets.data[i]) * kCoordScale;

  r.feasible = true;
  r.metrics["val_mse"] = mse_norm * kCoordScale * kCoordScale;
  r.metrics["val_quantile"] = interp_quantile(std::move(abs_dev), 0.75);
  r.metrics["model_size"] = double(nn::param_count(run.spec));
  r.metrics["macs"] = double(nn::mac_count(run.spec));
  return r;
}

BraggHoldout bragg_holdout_metrics(const Configuration& c, const BraggOptions& opt,
                                   std::uint64_t seed) {
  BraggTrained run = train_bragg(c, opt, seed);
  if (!run.feasible) {
    if (!run.diverged)
      throw ConfigError("holdout evaluation on an infeasible configuration: " +
                        run.detail);
    return {true, 0.0, 0.0};
  }
  const nn::Tensor pred = predict_chunked(*run.net, run.val.inputs, 64);
  std::vector<double> err(opt.n_val);
  for (std::size_t i = 0; i < opt.n_val; ++i) {
    const double dx = (pred.data[2 * i] - run.val.targets.data[2 * i]) * kCoordScale;
    const double dy =
        (pred.data[2 * i + 1] - run.val.targets.data[2 * i + 1]) * kCoordScale;
    err[i] = std::hypot(dx, dy);
  }
  BraggHoldout h;
  h.median_px = interp_quantile(err, 0.5);
  h.p95_px = interp_quantile(err, 0.95);
  return h;
}

// ---- ptycho evaluation -------------------------------------------------

namespace {

struct PtychoTensors {
  nn::Tensor inputs, amp, phase;  // targets shaped to the head outputs
};

PtychoTensors ptycho_tensors(const std::vector<PtychoSample>& samples,
                             std::size_t start, std::size_t count,
                             const std::vector<std::size_t>& head_shape) {
  constexpr std::size_t px = kPtychoSize * kPtychoSize;
  PtychoTensors t;
  t.inputs = nn::Tensor({count, 1, kPtychoSize, kPtychoSize});
  std::vector<std::size_t> tshape{count};
  tshape.insert(tshape.end(), head_shape.begin(), head_shape.end());
  t.amp = nn::Tensor(tshape);
  t.phase = nn::Tensor(tshape);
  for (std::size_t i = 0; i < count; ++i) {
    const PtychoSample& s = samples[start + i];
    std::copy(s.input.begin(), s.input.end(), t.inputs.ptr() + i * px);
    std::copy(s.amplitude.begin(), s.amplitude.end(), t.amp.ptr() + i * px);
    std::copy(s.phase.begin(), s.phase.end(), t.phase.ptr() + i * px);
  }
  return t;
}

struct MultiHeadEval {
  bool diverged = false;
  double amp_mae = 0.0, phase_mae = 0.0;
};

MultiHeadEval eval_multihead(nn::Network& enc, nn::Network& amp, nn::Network& phase,
                             bool scale_pi, const PtychoTensors& data,
                             std::size_t chunk) {
  const std::size_t n = data.inputs.shape[0];
  const std::size_t per = data.inputs.numel() / n;
  const std::size_t tper = data.amp.numel() / n;
  double amp_abs = 0.0, phase_abs = 0.0;
  for (std::size_t start = 0; start < n; start += chunk) {
    const std::size_t bsz = std::min(chunk, n - start);
    std::vector<std::size_t> xs = data.inputs.shape;
    xs[0] = bsz;
    nn::Tensor xb(xs);
    std::copy_n(data.inputs.ptr() + start * per, bsz * per, xb.ptr());
    const nn::Tensor z = enc.forward(xb);
    const nn::Tensor a = amp.forward(z);
    nn::Tensor p = phase.forward(z);
    if (scale_pi)
      for (double& v : p.data) v *= kPi;
    for (std::size_t j = 0; j < bsz * tper; ++j) {
      amp_abs += std::abs(a.data[j] - data.amp.data[start * tper + j]);
      phase_abs += std::abs(p.data[j] - data.phase.data[start * tper + j]);
    }
  }
  MultiHeadEval e;
  e.amp_mae = amp_abs / double(data.amp.numel());
  e.phase_mae = phase_abs / double(data.phase.numel());
  if (!std::isfinite(e.amp_mae) || !std::isfinite(e.phase_mae)) e.diverged = true;
  return e;
}

// Minibatch loop mirroring nn::train, with the loss split across two heads:
// L = (mae_amp + mae_phase) / 2, gradients stitched at the encoder output.
bool train_multihead(nn::Network& enc, nn::Network& amp, nn::Network& phase,
                     bool scale_pi, const PtychoTensors& data,
                     const nn::TrainConfig& cfg) {
  const std::size_t n = data.inputs.shape[0];
  const std::size_t per = data.inputs.numel() / n;
  const std::size_t tper = data.amp.numel() / n;
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    Rng shuffle(mix_seed(cfg.shuffle_seed, epoch));
    for (std::size_t i = n - 1; i > 0; --i)
      std::swap(order[i], order[shuffle.index(i + 1)]);

    for (std::size_t start = 0; start < n; start += cfg.batch_size) {
      const std::size_t bsz = std::min(cfg.batch_size, n - start);
      std::vector<std::size_t> xs = data.inputs.shape;
      xs[0] = bsz;
      std::vector<std::size_t> ts = data.amp.shape;
      ts[0] = bsz;
      nn::Tensor xb(xs), ta(ts), tp(ts);
      for (std::size_t i = 0; i < bsz; ++i) {
        const std::size_t src = order[start + i];
        std::copy_n(data.inputs.ptr() + src * per, per, xb.ptr() + i * per);
        std::copy_n(data.amp.ptr() + src * tper, tper, ta.ptr() + i * tper);
        std::copy_n(data.phase.ptr() + src * tper, tper, tp.ptr() + i * tper);
      }

      const nn::Tensor z = enc.forward_train(xb);
      const nn::Tensor a = amp.forward_train(z);
      const nn::Tensor t = phase.forward_train(z);
      nn::Tensor pp = t;
      if (scale_pi)
        for (double& v : pp.data) v *= kPi;

      const double la = nn::loss_value(nn::LossKind::mae, 0.5, a, ta);
      const double lp = nn::loss_value(nn::LossKind::mae, 0.5, pp, tp);
      if (!std::isfinite(0.5 * (la + lp))) return true;  // diverged

      nn::Tensor ga = nn::loss_grad(nn::LossKind::mae, 0.5, a, ta);
      for (double& v : ga.data) v *= 0.5;
      nn::Tensor gp = nn::loss_grad(nn::LossKind::mae, 0.5, pp, tp);
      const double pscale = 0.5 * (scale_pi ? kPi : 1.0);
      for (double& v : gp.data) v *= pscale;

      enc.zero_grad();
      amp.zero_grad();
      phase.zero_grad();
      nn::Tensor gz = amp.backward(ga);
      const nn::Tensor gz2 = phase.backward(gp);
      for (std::size_t j = 0; j < gz.numel(); ++j) gz.data[j] += gz2.data[j];
      enc.backward(gz);
      enc.optimizer_step(cfg);
      amp.optimizer_step(cfg);
      phase.optimizer_step(cfg);
    }
  }
  return false;
}

}  // namespace

TaskResult eval_ptycho(const Configuration& c, const PtychoOptions& opt,
                       std::uint64_t seed) {
  if (c.space_name != "mlpPtycho" && c.space_name != "cnnPtycho")
    throw ConfigError("task ptycho cannot evaluate space '" + c.space_name +
                      "' (expected mlpPtycho or cnnPtycho)");
  if (opt.n_train == 0 || opt.n_val == 0)
    throw ConfigError("ptycho task needs n_train >= 1 and n_val >= 1");
  const TrainKnobs knobs = read_train_knobs(c);

  TaskResult r;
  PtychoParts parts;
  try {
    parts = build_ptycho_parts(c, keyed_seed(seed, kInitPurpose, 0));
    nn::infer_shapes(parts.encoder);
    nn::infer_shapes(parts.amp_head);
    nn::infer_shapes(parts.phase_head);
  } catch (const ConfigError& e) {
    r.detail = e.what();
    return r;
  }

  const auto samples =
      generate_ptycho_dataset(opt.n_train + opt.n_val, keyed_seed(seed, kDataPurpose, 0));
  const auto head_shape = nn::infer_shapes(parts.amp_head).back();
  const PtychoTensors train_set = ptycho_tensors(samples, 0, opt.n_train, head_shape);
  const PtychoTensors val_set =
      ptycho_tensors(samples, opt.n_train, opt.n_val, head_shape);

  const nn::TrainConfig cfg = make_train_config(knobs, opt.n_train, opt.epoch_cap, seed);
  nn::Network enc(parts.encoder), amp(parts.amp_head), phase(parts.phase_head);
  const bool diverged =
      train_multihead(enc, amp, phase, parts.scale_phase_pi, train_set, cfg);
  if (diverged) {
    r.detail = "training diverged (non-finite loss)";
    return r;
  }
  const MultiHeadEval ev =
      eval_multihead(enc, amp, phase, parts.scale_phase_pi, val_set, 64);
  if (ev.diverged) {
    r.detail = "validation produced non-finite predictions";
    return r;
  }

  r.feasible = true;
  {
    char d[96];
    std::snprintf(d, sizeof d, "trained %zu epochs, amp_mae=%.4g phase_mae=%.4g",
                  cfg.epochs, ev.amp_mae, ev.phase_mae);
    r.detail = d;
  }
  r.metrics["val_mae"] = 0.5 * (ev.amp_mae + ev.phase_mae);
  r.metrics["model_size"] = double(nn::param_count(parts.encoder) +
                                   nn::param_count(parts.amp_head) +
                                   nn::param_count(parts.phase_head));
  r.metrics["macs"] = double(nn::mac_count(parts.encoder) +
                             nn::mac_count(parts.amp_head) +
                             nn::mac_count(parts.phase_head));
  return r;
}

// ---- analytic tasks ----------------------------------------------------

SearchSpace analytic_space(const std::string& name) {
  if (name == "sphere3") {
    std::vector<Dimension> dims;
    for (int i = 1; i <= 3; ++i)
      dims.push_back({"x" + std::to_string(i), Kind::continuous, -1.0, 1.0,
                      Scale::linear, {}});
    return SearchSpace("sphere3", std::move(dims), {});
  }
  if (name == "zdt1") {
    std::vector<Dimension> dims;
    for (int i = 1; i <= 5; ++i)
      dims.push_back({"x" + std::to_string(i), Kind::continuous, 0.0, 1.0,
                      Scale::linear, {}});
    return SearchSpace("zdt1", std::move(dims), {});
  }
  throw ConfigError("unknown analytic task '" + name +
                    "' (expected sphere3 or zdt1)");
}

TaskResult analytic_task(const std::string& name, const Configuration& c) {
  if (c.space_name != name)
    throw ConfigError("task " + name + " cannot evaluate space '" + c.space_name + "'");
  TaskResult r;
  r.feasible = true;
  if (name == "sphere3") {
    double sum = 0.0;
    for (int i = 1; i <= 3; ++i) {
      const double x = get_real(c, "x" + std::to_string(i));
      sum += x * x;
    }
    r.metrics["value"] = sum;
    return r;
  }
  if (name == "zdt1") {
    const double f1 = get_real(c, "x1");
    double tail = 0.0;
    for (int i = 2; i <= 5; ++i) tail += get_real(c, "x" + std::to_string(i));
    const double g = 1.0 + 9.0 * tail / 4.0;
    r.metrics["f1"] = f1;
    r.metrics["f2"] = g * (1.0 - std::sqrt(f1 / g));
    return r;
  }
  throw ConfigError("unknown analytic task '" + name + "'");
}

// ---- registry ----------------------------------------------------------

TaskResult BuiltinTask::evaluate(const Configuration& c, std::uint64_t seed) const {
  if (!accepts_space(c.space_name))
    throw ConfigError("task " + name + " cannot evaluate space '" + c.space_name + "'");
  if (name == "bragg") return eval_bragg(c, bragg, seed);
  if (name == "ptycho") return eval_ptycho(c, ptycho, seed);
  return analytic_task(name, c);
}

std::vector<std::string> BuiltinTask::metric_names() const {
  if (name == "bragg") return {"val_mse", "val_quantile", "model_size", "macs"};
  if (name == "ptycho") return {"val_mae", "model_size", "macs"};
  if (name == "sphere3") return {"value"};
  return {"f1", "f2"};
}

bool BuiltinTask::accepts_space(const std::string& space_name) const {
  if (name == "bragg") return space_name == "mlpBragg" || space_name == "cnnBragg";
  if (name == "ptycho") return space_name == "mlpPtycho" || space_name == "cnnPtycho";
  return space_name == name;
}

void BuiltinTask::set_epoch_cap(std::size_t cap) {
  bragg.epoch_cap = cap;
  ptycho.epoch_cap = cap;
}

BuiltinTask make_builtin_task(const std::string& name) {
  for (const std::string& known : builtin_task_names())
    if (name == known) {
      BuiltinTask t;
      t.name = name;
      return t;
    }
  throw ConfigError("unknown task '" + name +
                    "' (expected bragg, ptycho, sphere3, or zdt1)");
}

std::vector<std::string> builtin_task_names() {
  return {"bragg", "ptycho", "sphere3", "zdt1"};
}

// ---- dataset dumps -----------------------------------------------------

void write_bragg_csv(const std::vector<PeakPatch>& patches, const std::string& path) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw IoError("cannot open " + path + " for writing");
  for (std::size_t i = 0; i < kPatchSize * kPatchSize; ++i) f << "p" << i << ",";
  f << "center_x,center_y\n";
  char buf[32];
  for (const PeakPatch& p : patches) {
    for (double v : p.pixels) {
      std::snprintf(buf, sizeof buf, "%.17g", v);
      f << buf << ",";
    }
    std::snprintf(buf, sizeof buf, "%.17g", p.center_x);
    f << buf << ",";
    std::snprintf(buf, sizeof buf, "%.17g", p.center_y);
    f << buf << "\n";
  }
  if (!f.good()) throw IoError("failed writing " + path);
}

void write_ptycho_tensors(const std::vector<PtychoSample>& samples,
                          const std::string& path) {
  const std::size_t n = samples.size();
  constexpr std::size_t px = kPtychoSize * kPtychoSize;
  nn::Tensor input({n, kPtychoSize, kPtychoSize});
  nn::Tensor amp({n, kPtychoSize, kPtychoSize});
  nn::Tensor phase({n, kPtychoSize, kPtychoSize});
  for (std::size_t i = 0; i < n; ++i) {
    std::copy(samples[i].input.begin(), samples[i].input.end(), input.ptr() + i * px);
    std::copy(samples[i].amplitude.begin(), samples[i].amplitude.end(),
              amp.ptr() + i * px);
    std::copy(samples[i].phase.begin(), samples[i].phase.end(), phase.ptr() + i * px);
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open " + path + " for writing");
  f.write(binio::kMagic, 4);
  binio::put_u32(f, 1);  // version
  binio::put_u32(f, 3);  // tensor count
  binio::put_tensor(f, input);
  binio::put_tensor(f, amp);
  binio::put_tensor(f, phase);
  f.flush();
  if (!f.good()) throw IoError("failed writing " + path);
}

}  // namespace peakforge::tasks
