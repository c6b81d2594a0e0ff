#include "peakforge/nn.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <numeric>

#include "peakforge/error.hpp"
#include "peakforge/kernels.hpp"
#include "peakforge/rng.hpp"

#include "common/binio.hpp"

namespace peakforge::nn {

namespace {

constexpr std::uint64_t kInitPurpose = 0x6e6e2d696e6974ULL;  // "nn-init"

[[noreturn]] void layer_error(std::size_t idx, LayerKind k, const std::string& msg) {
  throw ConfigError("layer " + std::to_string(idx) + " (" + layer_kind_name(k) +
                    "): " + msg);
}

}  // namespace

LayerSpec LayerSpec::dense(std::size_t in, std::size_t out) {
  if (in == 0 || out == 0) throw ConfigError("dense layer needs positive in/out features");
  LayerSpec s;
  s.kind = LayerKind::dense;
  s.in_features = in;
  s.out_features = out;
  return s;
}

LayerSpec LayerSpec::relu() { return LayerSpec{}; }

LayerSpec LayerSpec::conv2d(std::size_t in_ch, std::size_t out_ch, std::size_t k,
                            Padding pad) {
  if (in_ch == 0 || out_ch == 0) throw ConfigError("conv2d needs positive channel counts");
  if (k == 0) throw ConfigError("conv2d needs a positive kernel size");
  LayerSpec s;
  s.kind = LayerKind::conv2d;
  s.in_channels = in_ch;
  s.out_channels = out_ch;
  s.kernel = k;
  s.padding = pad;
  return s;
}

LayerSpec LayerSpec::maxpool2d() {
  LayerSpec s;
  s.kind = LayerKind::maxpool2d;
  return s;
}

LayerSpec LayerSpec::upsample2d_nearest() {
  LayerSpec s;
  s.kind = LayerKind::upsample2d_nearest;
  return s;
}

LayerSpec LayerSpec::flatten() {
  LayerSpec s;
  s.kind = LayerKind::flatten;
  return s;
}

LayerSpec LayerSpec::sigmoid() {
  LayerSpec s;
  s.kind = LayerKind::sigmoid;
  return s;
}

LayerSpec LayerSpec::tanh() {
  LayerSpec s;
  s.kind = LayerKind::tanh;
  return s;
}

const char* layer_kind_name(LayerKind k) {
  switch (k) {
    case LayerKind::dense: return "dense";
    case LayerKind::relu: return "relu";
    case LayerKind::conv2d: return "conv2d";
    case LayerKind::maxpool2d: return "maxpool2d";
    case LayerKind::upsample2d_nearest: return "upsample2d_nearest";
    case LayerKind::flatten: return "flatten";
    case LayerKind::sigmoid: return "sigmoid";
    case LayerKind::tanh: return "tanh";
  }
  return "?";
}

std::vector<std::vector<std::size_t>> infer_shapes(const NetworkSpec& spec) {
  if (spec.input_shape.empty()) throw ConfigError("network input_shape is empty");
  for (std::size_t d : spec.input_shape)
    if (d == 0) throw ConfigError("network input_shape has a zero dimension");

  std::vector<std::vector<std::size_t>> shapes;
  shapes.reserve(spec.layers.size());
  std::vector<std::size_t> cur = spec.input_shape;
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const LayerSpec& l = spec.layers[i];
    switch (l.kind) {
      case LayerKind::dense:
        if (cur.size() != 1 || cur[0] != l.in_features)
          layer_error(i, l.kind, "expects input [" + std::to_string(l.in_features) +
                                     "], got " + shape_str(cur));
        cur = {l.out_features};
        break;
      case LayerKind::relu:
      case LayerKind::sigmoid:
      case LayerKind::tanh:
        break;  // any shape, unchanged
      case LayerKind::flatten:
        cur = {shape_numel(cur)};
        break;
      case LayerKind::conv2d: {
        if (cur.size() != 3)
          layer_error(i, l.kind, "expects 3-D input (channels, height, width), got " +
                                     shape_str(cur));
        if (cur[0] != l.in_channels)
          layer_error(i, l.kind, "expects " + std::to_string(l.in_channels) +
                                     " input channels, got " + shape_str(cur));
        const std::size_t h = cur[1], w = cur[2], k = l.kernel;
        if (l.padding == Padding::same) {
          if (k % 2 == 0)
            layer_error(i, l.kind,
                        "same padding requires an odd kernel, got k=" + std::to_string(k));
          cur = {l.out_channels, h, w};
        } else {
          if (h < k || w < k)
            layer_error(i, l.kind, "k=" + std::to_string(k) +
                                       " valid convolution needs spatial dims >= k, got " +
                                       shape_str(cur));
          cur = {l.out_channels, h - k + 1, w - k + 1};
        }
        break;
      }
      case LayerKind::maxpool2d:
        if (cur.size() != 3)
          layer_error(i, l.kind, "expects 3-D input (channels, height, width), got " +
                                     shape_str(cur));
        if (cur[1] < 2 || cur[2] < 2)
          layer_error(i, l.kind, "2x2 window needs spatial dims >= 2, got " + shape_str(cur));
        cur = {cur[0], cur[1] / 2, cur[2] / 2};
        break;
      case LayerKind::upsample2d_nearest:
        if (cur.size() != 3)
          layer_error(i, l.kind, "expects 3-D input (channels, height, width), got " +
                                     shape_str(cur));
        cur = {cur[0], cur[1] * 2, cur[2] * 2};
        break;
    }
    shapes.push_back(cur);
  }
  return shapes;
}

std::size_t param_count(const NetworkSpec& spec) {
  std::size_t n = 0;
  for (const LayerSpec& l : spec.layers) {
    if (l.kind == LayerKind::dense)
      n += l.in_features * l.out_features + l.out_features;
    else if (l.kind == LayerKind::conv2d)
      n += l.in_channels * l.out_channels * l.kernel * l.kernel + l.out_channels;
  }
  return n;
}

std::size_t mac_count(const NetworkSpec& spec) {
  const auto shapes = infer_shapes(spec);
  std::size_t n = 0;
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const LayerSpec& l = spec.layers[i];
    if (l.kind == LayerKind::dense) {
      n += l.in_features * l.out_features;
    } else if (l.kind == LayerKind::conv2d) {
      const auto& out = shapes[i];
      n += out[1] * out[2] * l.out_channels * l.in_channels * l.kernel * l.kernel;
    }
  }
  return n;
}

// ---- losses ------------------------------------------------------------

namespace {

void check_loss_args(LossKind kind, double q, const Tensor& pred, const Tensor& target) {
  if (pred.shape != target.shape)
    throw ConfigError("loss: prediction shape " + pred.shape_str() +
                      " != target shape " + target.shape_str());
  if (pred.numel() == 0) throw ConfigError("loss on empty tensors");
  if (kind == LossKind::quantile && !(q > 0.0 && q < 1.0))
    throw ConfigError("quantile q must be in (0, 1), got " + std::to_string(q));
}

}  // namespace

double loss_value(LossKind kind, double q, const Tensor& pred, const Tensor& target) {
  check_loss_args(kind, q, pred, target);
  const std::size_t n = pred.numel();
  switch (kind) {
    case LossKind::mse: return kern::sum_sq_diff(pred.ptr(), target.ptr(), n) / double(n);
    case LossKind::mae: return kern::sum_abs_diff(pred.ptr(), target.ptr(), n) / double(n);
    case LossKind::quantile:
      return kern::sum_pinball(pred.ptr(), target.ptr(), q, n) / double(n);
  }
  return 0.0;
}

Tensor loss_grad(LossKind kind, double q, const Tensor& pred, const Tensor& target) {
  check_loss_args(kind, q, pred, target);
  const std::size_t n = pred.numel();
  const double inv = 1.0 / double(n);
  Tensor g(pred.shape);
  switch (kind) {
    case LossKind::mse:
      for (std::size_t i = 0; i < n; ++i)
        g.data[i] = 2.0 * (pred.data[i] - target.data[i]) * inv;
      break;
    case LossKind::mae:
      for (std::size_t i = 0; i < n; ++i) {
        const double d = pred.data[i] - target.data[i];
        g.data[i] = (d > 0.0 ? inv : (d < 0.0 ? -inv : 0.0));
      }
      break;
    case LossKind::quantile:
      for (std::size_t i = 0; i < n; ++i) {
        const double u = target.data[i] - pred.data[i];
        g.data[i] = (u >= 0.0 ? -q : 1.0 - q) * inv;
      }
      break;
  }
  return g;
}

// ---- network -----------------------------------------------------------

Network::Network(NetworkSpec spec) : spec_(std::move(spec)) {
  const auto shapes = infer_shapes(spec_);
  out_shape_ = shapes.empty() ? spec_.input_shape : shapes.back();
  layers_.resize(spec_.layers.size());
  std::vector<std::size_t> cur = spec_.input_shape;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    Layer& l = layers_[i];
    l.spec = spec_.layers[i];
    l.in_shape = cur;
    l.out_shape = shapes[i];
    std::size_t fan_in = 0;
    if (l.spec.kind == LayerKind::dense) {
      l.w = Tensor({l.spec.out_features, l.spec.in_features});
      l.b = Tensor({l.spec.out_features});
      fan_in = l.spec.in_features;
    } else if (l.spec.kind == LayerKind::conv2d) {
      l.w = Tensor({l.spec.out_channels, l.spec.in_channels, l.spec.kernel, l.spec.kernel});
      l.b = Tensor({l.spec.out_channels});
      fan_in = l.spec.in_channels * l.spec.kernel * l.spec.kernel;
    }
    if (fan_in != 0) {
      Rng rng = keyed_rng(spec_.init_seed, kInitPurpose, i);
      const double bound = std::sqrt(6.0 / double(fan_in));
      for (double& v : l.w.data) v = rng.uniform(-bound, bound);
      l.gw = Tensor(l.w.shape);
      l.gb = Tensor(l.b.shape);
    }
    cur = shapes[i];
  }
}

namespace {

bool has_params(const LayerSpec& s) {
  return s.kind == LayerKind::dense || s.kind == LayerKind::conv2d;
}

// Unpads one input sample into patch rows: col[(yo*Wo+xo), (c*k+ky)*k+kx].
void im2col(const double* x, double* col, std::size_t c_ch, std::size_t h,
            std::size_t w, std::size_t k, std::size_t pad, std::size_t ho,
            std::size_t wo) {
  const std::size_t patch = c_ch * k * k;
  for (std::size_t yo = 0; yo < ho; ++yo) {
    for (std::size_t xo = 0; xo < wo; ++xo) {
      double* row = col + (yo * wo + xo) * patch;
      for (std::size_t c = 0; c < c_ch; ++c) {
        const double* plane = x + c * h * w;
        for (std::size_t ky = 0; ky < k; ++ky) {
          const std::size_t yi = yo + ky;  // padded coordinate
          double* dst = row + (c * k + ky) * k;
          if (yi < pad || yi >= h + pad) {
            std::fill(dst, dst + k, 0.0);
            continue;
          }
          const double* src = plane + (yi - pad) * w;
          for (std::size_t kx = 0; kx < k; ++kx) {
            const std::size_t xi = xo + kx;
            dst[kx] = (xi < pad || xi >= w + pad) ? 0.0 : src[xi - pad];
          }
        }
      }
    }
  }
}

}  // namespace

Tensor Network::run_forward(const Tensor& batch, bool train) {
  bool ok = batch.shape.size() == spec_.input_shape.size() + 1;
  for (std::size_t i = 0; ok && i < spec_.input_shape.size(); ++i)
    ok = batch.shape[i + 1] == spec_.input_shape[i];
  if (!ok)
    throw ConfigError("forward: batch shape " + batch.shape_str() +
                      " does not match input " + shape_str(spec_.input_shape) +
                      " with a leading batch dimension");
  const std::size_t bsz = batch.shape[0];

  Tensor cur = batch;
  for (Layer& l : layers_) {
    Tensor next;
    switch (l.spec.kind) {
      case LayerKind::dense: {
        const std::size_t in = l.spec.in_features, out = l.spec.out_features;
        next = Tensor({bsz, out});
        kern::gemm_nt(cur.ptr(), l.w.ptr(), next.ptr(), bsz, out, in, false);
        for (std::size_t b = 0; b < bsz; ++b) {
          double* row = next.ptr() + b * out;
          for (std::size_t o = 0; o < out; ++o) row[o] += l.b.data[o];
        }
        break;
      }
      case LayerKind::relu:
        next = Tensor(cur.shape);
        kern::relu(cur.ptr(), next.ptr(), cur.numel());
        break;
      case LayerKind::sigmoid:
        next = Tensor(cur.shape);
        for (std::size_t i = 0; i < cur.numel(); ++i)
          next.data[i] = 1.0 / (1.0 + std::exp(-cur.data[i]));
        break;
      case LayerKind::tanh:
        next = Tensor(cur.shape);
        for (std::size_t i = 0; i < cur.numel(); ++i)
          next.data[i] = std::tanh(cur.data[i]);
        break;
      case LayerKind::flatten:
        next = cur.reshaped({bsz, shape_numel(l.in_shape)});
        break;
      case LayerKind::conv2d: {
        const std::size_t c = l.in_shape[0], h = l.in_shape[1], w = l.in_shape[2];
        const std::size_t o = l.spec.out_channels, k = l.spec.kernel;
        const std::size_t ho = l.out_shape[1], wo = l.out_shape[2];
        const std::size_t pad = l.spec.padding == Padding::same ? (k - 1) / 2 : 0;
        const std::size_t patch = c * k * k, cells = ho * wo;
        if (l.col.numel() != cells * patch) l.col = Tensor({cells, patch});
        next = Tensor({bsz, o, ho, wo});
        for (std::size_t b = 0; b < bsz; ++b) {
          im2col(cur.ptr() + b * c * h * w, l.col.ptr(), c, h, w, k, pad, ho, wo);
          double* yb = next.ptr() + b * o * cells;
          kern::gemm_nt(l.w.ptr(), l.col.ptr(), yb, o, cells, patch, false);
          for (std::size_t oc = 0; oc < o; ++oc) {
            double* row = yb + oc * cells;
            for (std::size_t i = 0; i < cells; ++i) row[i] += l.b.data[oc];
          }
        }
        break;
      }
      case LayerKind::maxpool2d: {
        const std::size_t c = l.in_shape[0], h = l.in_shape[1], w = l.in_shape[2];
        const std::size_t ho = l.out_shape[1], wo = l.out_shape[2];
        next = Tensor({bsz, c, ho, wo});
        if (train) l.pool_idx.assign(bsz * c * ho * wo, 0);
        for (std::size_t bc = 0; bc < bsz * c; ++bc) {
          const double* xp = cur.ptr() + bc * h * w;
          double* yp = next.ptr() + bc * ho * wo;
          for (std::size_t yo = 0; yo < ho; ++yo) {
            for (std::size_t xo = 0; xo < wo; ++xo) {
              const std::size_t base = 2 * yo * w + 2 * xo;
              // First strict maximum wins on ties.
              std::size_t best = base;
              if (xp[base + 1] > xp[best]) best = base + 1;
              if (xp[base + w] > xp[best]) best = base + w;
              if (xp[base + w + 1] > xp[best]) best = base + w + 1;
              yp[yo * wo + xo] = xp[best];
              if (train)
                l.pool_idx[bc * ho * wo + yo * wo + xo] =
                    static_cast<std::uint32_t>(best);
            }
          }
        }
        break;
      }
      case LayerKind::upsample2d_nearest: {
        const std::size_t c = l.in_shape[0], h = l.in_shape[1], w = l.in_shape[2];
        next = Tensor({bsz, c, 2 * h, 2 * w});
        for (std::size_t bc = 0; bc < bsz * c; ++bc) {
          const double* xp = cur.ptr() + bc * h * w;
          double* yp = next.ptr() + bc * 4 * h * w;
          for (std::size_t y = 0; y < h; ++y) {
            for (std::size_t x = 0; x < w; ++x) {
              const double v = xp[y * w + x];
              double* base = yp + 2 * y * 2 * w + 2 * x;
              base[0] = base[1] = base[2 * w] = base[2 * w + 1] = v;
            }
          }
        }
        break;
      }
    }
    if (train) {
      l.x_in = std::move(cur);
      if (l.spec.kind == LayerKind::sigmoid || l.spec.kind == LayerKind::tanh)
        l.y_out = next;
    }
    cur = std::move(next);
  }
  return cur;
}

Tensor Network::backward(const Tensor& grad_out) {
  if (!layers_.empty() && layers_.front().x_in.empty())
    throw ConfigError("backward called without a preceding forward_train");
  bool ok = grad_out.shape.size() == out_shape_.size() + 1;
  for (std::size_t i = 0; ok && i < out_shape_.size(); ++i)
    ok = grad_out.shape[i + 1] == out_shape_[i];
  if (!ok)
    throw ConfigError("backward: gradient shape " + grad_out.shape_str() +
                      " does not match output " + shape_str(out_shape_) +
                      " with a leading batch dimension");
  const std::size_t bsz = grad_out.shape[0];

  Tensor g = grad_out;
  for (std::size_t li = layers_.size(); li-- > 0;) {
    Layer& l = layers_[li];
    Tensor gx;
    switch (l.spec.kind) {
      case LayerKind::dense: {
        const std::size_t in = l.spec.in_features, out = l.spec.out_features;
        kern::gemm_tn_acc(g.ptr(), l.x_in.ptr(), l.gw.ptr(), out, in, bsz);
        for (std::size_t b = 0; b < bsz; ++b) {
          const double* row = g.ptr() + b * out;
          for (std::size_t o = 0; o < out; ++o) l.gb.data[o] += row[o];
        }
        gx = Tensor({bsz, in});
        kern::gemm_nn_acc(g.ptr(), l.w.ptr(), gx.ptr(), bsz, in, out);
        break;
      }
      case LayerKind::relu:
        gx = Tensor(l.x_in.shape);
        kern::relu_backward(l.x_in.ptr(), g.ptr(), gx.ptr(), gx.numel());
        break;
      case LayerKind::sigmoid:
        gx = Tensor(l.x_in.shape);
        for (std::size_t i = 0; i < gx.numel(); ++i) {
          const double y = l.y_out.data[i];
          gx.data[i] = g.data[i] * y * (1.0 - y);
        }
        break;
      case LayerKind::tanh:
        gx = Tensor(l.x_in.shape);
        for (std::size_t i = 0; i < gx.numel(); ++i) {
          const double y = l.y_out.data[i];
          gx.data[i] = g.data[i] * (1.0 - y * y);
        }
        break;
      case LayerKind::flatten: {
        std::vector<std::size_t> full{bsz};
        full.insert(full.end(), l.in_shape.begin(), l.in_shape.end());
        gx = g.reshaped(std::move(full));
        break;
      }
      case LayerKind::conv2d: {
        const std::size_t c = l.in_shape[0], h = l.in_shape[1], w = l.in_shape[2];
        const std::size_t o = l.spec.out_channels, k = l.spec.kernel;
        const std::size_t ho = l.out_shape[1], wo = l.out_shape[2];
        const std::size_t pad = l.spec.padding == Padding::same ? (k - 1) / 2 : 0;
        const std::size_t patch = c * k * k, cells = ho * wo;
        if (l.col.numel() != cells * patch) l.col = Tensor({cells, patch});
        if (l.dcol.numel() != cells * patch) l.dcol = Tensor({cells, patch});
        gx = Tensor({bsz, c, h, w});
        for (std::size_t b = 0; b < bsz; ++b) {
          const double* xb = l.x_in.ptr() + b * c * h * w;
          const double* gyb = g.ptr() + b * o * cells;
          im2col(xb, l.col.ptr(), c, h, w, k, pad, ho, wo);
          kern::gemm_nn_acc(gyb, l.col.ptr(), l.gw.ptr(), o, patch, cells);
          for (std::size_t oc = 0; oc < o; ++oc) {
            const double* row = gyb + oc * cells;
            for (std::size_t i = 0; i < cells; ++i) l.gb.data[oc] += row[i];
          }
          std::fill(l.dcol.data.begin(), l.dcol.data.end(), 0.0);
          kern::gemm_tn_acc(gyb, l.w.ptr(), l.dcol.ptr(), cells, patch, o);
          double* gxb = gx.ptr() + b * c * h * w;
          for (std::size_t yo = 0; yo < ho; ++yo) {
            for (std::size_t xo = 0; xo < wo; ++xo) {
              const double* row = l.dcol.ptr() + (yo * wo + xo) * patch;
              for (std::size_t cc = 0; cc < c; ++cc) {
                for (std::size_t ky = 0; ky < k; ++ky) {
                  const std::size_t yi = yo + ky;
                  if (yi < pad || yi >= h + pad) continue;
                  double* dst = gxb + cc * h * w + (yi - pad) * w;
                  const double* src = row + (cc * k + ky) * k;
                  for (std::size_t kx = 0; kx < k; ++kx) {
                    const std::size_t xi = xo + kx;
                    if (xi < pad || xi >= w + pad) continue;
                    dst[xi - pad] += src[kx];
                  }
                }
              }
            }
          }
        }
        break;
      }
      case LayerKind::maxpool2d: {
        const std::size_t c = l.in_shape[0], h = l.in_shape[1], w = l.in_shape[2];
        const std::size_t ho = l.out_shape[1], wo = l.out_shape[2];
        gx = Tensor({bsz, c, h, w});
        for (std::size_t bc = 0; bc < bsz * c; ++bc) {
          double* gxp = gx.ptr() + bc * h * w;
          const double* gyp = g.ptr() + bc * ho * wo;
          const std::uint32_t* idx = l.pool_idx.data() + bc * ho * wo;
          for (std::size_t i = 0; i < ho * wo; ++i) gxp[idx[i]] += gyp[i];
        }
        break;
      }
      case LayerKind::upsample2d_nearest: {
        const std::size_t c = l.in_shape[0], h = l.in_shape[1], w = l.in_shape[2];
        gx = Tensor({bsz, c, h, w});
        for (std::size_t bc = 0; bc < bsz * c; ++bc) {
          double* gxp = gx.ptr() + bc * h * w;
          const double* gyp = g.ptr() + bc * 4 * h * w;
          for (std::size_t y = 0; y < h; ++y) {
            for (std::size_t x = 0; x < w; ++x) {
              const double* base = gyp + 2 * y * 2 * w + 2 * x;
              gxp[y * w + x] = base[0] + base[1] + base[2 * w] + base[2 * w + 1];
            }
          }
        }
        break;
      }
    }
    g = std::move(gx);
  }
  return g;
}

void Network::zero_grad() {
  for (Layer& l : layers_) {
    std::fill(l.gw.data.begin(), l.gw.data.end(), 0.0);
    std::fill(l.gb.data.begin(), l.gb.data.end(), 0.0);
  }
}

void Network::ensure_adam_state() {
  for (Layer& l : layers_) {
    if (!has_params(l.spec) || !l.mw.empty()) continue;
    l.mw = Tensor(l.w.shape);
    l.vw = Tensor(l.w.shape);
    l.mb = Tensor(l.b.shape);
    l.vb = Tensor(l.b.shape);
  }
}

void Network::optimizer_step(const TrainConfig& cfg) {
  if (cfg.optimizer == Optimizer::adam) {
    ensure_adam_state();
    ++adam_step_;
    const double b1 = 0.9, b2 = 0.999, eps = 1e-8;
    const double bc1 = 1.0 / (1.0 - std::pow(b1, double(adam_step_)));
    const double bc2 = 1.0 / (1.0 - std::pow(b2, double(adam_step_)));
    for (Layer& l : layers_) {
      if (!has_params(l.spec)) continue;
      kern::adam_step(l.w.ptr(), l.mw.ptr(), l.vw.ptr(), l.gw.ptr(), l.w.numel(),
                      cfg.learning_rate, b1, b2, eps, bc1, bc2);
      kern::adam_step(l.b.ptr(), l.mb.ptr(), l.vb.ptr(), l.gb.ptr(), l.b.numel(),
                      cfg.learning_rate, b1, b2, eps, bc1, bc2);
    }
  } else {
    for (Layer& l : layers_) {
      if (!has_params(l.spec)) continue;
      kern::sgd_step(l.w.ptr(), l.gw.ptr(), l.w.numel(), cfg.learning_rate);
      kern::sgd_step(l.b.ptr(), l.gb.ptr(), l.b.numel(), cfg.learning_rate);
    }
  }
}

std::vector<double*> Network::parameter_views() {
  std::vector<double*> v;
  for (Layer& l : layers_) {
    if (!has_params(l.spec)) continue;
    v.push_back(l.w.ptr());
    v.push_back(l.b.ptr());
  }
  return v;
}

std::vector<double*> Network::gradient_views() {
  std::vector<double*> v;
  for (Layer& l : layers_) {
    if (!has_params(l.spec)) continue;
    v.push_back(l.gw.ptr());
    v.push_back(l.gb.ptr());
  }
  return v;
}

std::vector<std::size_t> Network::parameter_sizes() const {
  std::vector<std::size_t> v;
  for (const Layer& l : layers_) {
    if (!has_params(l.spec)) continue;
    v.push_back(l.w.numel());
    v.push_back(l.b.numel());
  }
  return v;
}

// ---- checkpoint --------------------------------------------------------

namespace {

constexpr std::uint32_t kCheckpointVersion = 1;

void get_tensor_into(std::istream& f, Tensor& t, const std::string& what) {
  Tensor read = binio::read_tensor(f, what);
  if (read.shape != t.shape)
    throw IoError("checkpoint tensor shape " + read.shape_str() +
                  " does not match network shape " + t.shape_str() + ": " + what);
  t = std::move(read);
}

}  // namespace

void Network::save_checkpoint(const std::string& path) const {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open " + path + " for writing");
  f.write(binio::kMagic, 4);
  binio::put_u32(f, kCheckpointVersion);
  binio::put_u32(f, static_cast<std::uint32_t>(layers_.size()));
  for (const Layer& l : layers_) {
    binio::put_u32(f, static_cast<std::uint32_t>(l.spec.kind));
    if (has_params(l.spec)) {
      binio::put_u32(f, 1);
      binio::put_tensor(f, l.w);
      binio::put_tensor(f, l.b);
    } else {
      binio::put_u32(f, 0);
    }
  }
  f.flush();
  if (!f) throw IoError("failed writing checkpoint " + path);
}

void Network::load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path + " for reading");
  char magic[4];
  if (!f.read(magic, 4) || std::memcmp(magic, binio::kMagic, 4) != 0)
    throw IoError("not a PFNN checkpoint: " + path);
  const std::string what = "checkpoint: " + path;
  const std::uint32_t version = binio::get_u32(f, what);
  if (version != kCheckpointVersion)
    throw IoError("unsupported checkpoint version " + std::to_string(version) + ": " + path);
  const std::uint32_t nlayers = binio::get_u32(f, what);
  if (nlayers != layers_.size())
    throw IoError("checkpoint has " + std::to_string(nlayers) + " layers, network has " +
                  std::to_string(layers_.size()) + ": " + path);
  for (Layer& l : layers_) {
    const std::uint32_t kind = binio::get_u32(f, what);
    if (kind != static_cast<std::uint32_t>(l.spec.kind))
      throw IoError("checkpoint layer kind mismatch: " + path);
    const std::uint32_t flag = binio::get_u32(f, what);
    if (flag != (has_params(l.spec) ? 1u : 0u))
      throw IoError("checkpoint layer parameter mismatch: " + path);
    if (flag) {
      get_tensor_into(f, l.w, what);
      get_tensor_into(f, l.b, what);
    }
  }
}

// ---- training loop -----------------------------------------------------

namespace {

// Mean loss over a dataset, evaluated in chunks to bound activation memory.
double eval_split(Network& net, const Dataset& data, const TrainConfig& cfg) {
  const std::size_t n = data.size();
  const std::size_t in_per = data.inputs.numel() / n;
  const std::size_t tgt_per = data.targets.numel() / n;
  const std::size_t chunk = std::min<std::size_t>(std::max<std::size_t>(cfg.batch_size, 1), n);
  double weighted = 0.0;
  std::size_t total = 0;
  for (std::size_t start = 0; start < n; start += chunk) {
    const std::size_t bsz = std::min(chunk, n - start);
    std::vector<std::size_t> xshape = data.inputs.shape;
    xshape[0] = bsz;
    std::vector<std::size_t> tshape = data.targets.shape;
    tshape[0] = bsz;
    Tensor xb(xshape), tb(tshape);
    std::copy_n(data.inputs.ptr() + start * in_per, bsz * in_per, xb.ptr());
    std::copy_n(data.targets.ptr() + start * tgt_per, bsz * tgt_per, tb.ptr());
    const Tensor pred = net.forward(xb);
    const double loss = loss_value(cfg.loss, cfg.quantile_q, pred, tb);
    weighted += loss * double(pred.numel());
    total += pred.numel();
  }
  return weighted / double(total);
}

}  // namespace

double TrainResult::final_val_loss() const {
  return val_loss.empty() ? std::numeric_limits<double>::quiet_NaN() : val_loss.back();
}

TrainResult train(Network& net, const Dataset& train_data, const Dataset& val_data,
                  const TrainConfig& cfg) {
  const std::size_t n = train_data.size();
  if (n == 0) throw ConfigError("empty training dataset");
  if (train_data.targets.shape.empty() || train_data.targets.shape[0] != n)
    throw ConfigError("training inputs and targets disagree on sample count");
  if (val_data.size() > 0 &&
      (val_data.targets.shape.empty() || val_data.targets.shape[0] != val_data.size()))
    throw ConfigError("validation inputs and targets disagree on sample count");
  if (cfg.epochs == 0) throw ConfigError("epochs must be positive");
  if (cfg.batch_size == 0) throw ConfigError("batch_size must be positive");
  if (cfg.batch_size > n)
    throw ConfigError("batch_size " + std::to_string(cfg.batch_size) +
                      " exceeds dataset size " + std::to_string(n));
  if (!(cfg.learning_rate >= 0.0) || !std::isfinite(cfg.learning_rate))
    throw ConfigError("learning_rate must be finite and non-negative");
  if (cfg.loss == LossKind::quantile && !(cfg.quantile_q > 0.0 && cfg.quantile_q < 1.0))
    throw ConfigError("quantile q must be in (0, 1), got " + std::to_string(cfg.quantile_q));
  if (net.parameter_count() == 0) throw ConfigError("network has no trainable parameters");

  const std::size_t in_per = train_data.inputs.numel() / n;
  const std::size_t tgt_per = train_data.targets.numel() / n;

  TrainResult res;
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    Rng shuffle(mix_seed(cfg.shuffle_seed, epoch));
    for (std::size_t i = n - 1; i > 0; --i)
      std::swap(order[i], order[shuffle.index(i + 1)]);

    double weighted = 0.0;
    std::size_t total = 0;
    for (std::size_t start = 0; start < n; start += cfg.batch_size) {
      const std::size_t bsz = std::min(cfg.batch_size, n - start);
      std::vector<std::size_t> xshape = train_data.inputs.shape;
      xshape[0] = bsz;
      std::vector<std::size_t> tshape = train_data.targets.shape;
      tshape[0] = bsz;
      Tensor xb(xshape), tb(tshape);
      for (std::size_t i = 0; i < bsz; ++i) {
        const std::size_t src = order[start + i];
        std::copy_n(train_data.inputs.ptr() + src * in_per, in_per, xb.ptr() + i * in_per);
        std::copy_n(train_data.targets.ptr() + src * tgt_per, tgt_per, tb.ptr() + i * tgt_per);
      }
      const Tensor pred = net.forward_train(xb);
      const double loss = loss_value(cfg.loss, cfg.quantile_q, pred, tb);
      if (!std::isfinite(loss)) {
        res.diverged = true;
        return res;
      }
      weighted += loss * double(pred.numel());
      total += pred.numel();
      const Tensor g = loss_grad(cfg.loss, cfg.quantile_q, pred, tb);
      net.zero_grad();
      net.backward(g);
      net.optimizer_step(cfg);
    }
    res.train_loss.push_back(weighted / double(total));

    if (val_data.size() > 0) {
      const double vl = eval_split(net, val_data, cfg);
      if (!std::isfinite(vl)) {
        res.diverged = true;
        return res;
      }
      res.val_loss.push_back(vl);
    }
  }
  return res;
}

}  // namespace peakforge::nn
