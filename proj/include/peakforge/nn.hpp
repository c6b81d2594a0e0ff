#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "peakforge/tensor.hpp"

namespace peakforge::nn {

enum class LayerKind {
  dense,
  relu,
  conv2d,
  maxpool2d,
  upsample2d_nearest,
  flatten,
  sigmoid,
  tanh
};

enum class Padding { same, valid };

struct LayerSpec {
  LayerKind kind = LayerKind::relu;
  // dense
  std::size_t in_features = 0, out_features = 0;
  // conv2d (stride fixed at 1; maxpool fixed 2x2/2; upsample fixed x2)
  std::size_t in_channels = 0, out_channels = 0, kernel = 0;
  Padding padding = Padding::same;

  static LayerSpec dense(std::size_t in, std::size_t out);
  static LayerSpec relu();
  static LayerSpec conv2d(std::size_t in_ch, std::size_t out_ch, std::size_t k,
                          Padding pad);
  static LayerSpec maxpool2d();
  static LayerSpec upsample2d_nearest();
  static LayerSpec flatten();
  static LayerSpec sigmoid();
  static LayerSpec tanh();
};

struct NetworkSpec {
  std::vector<LayerSpec> layers;
  std::vector<std::size_t> input_shape;  // per-sample, e.g. {1, 11, 11}
  std::uint64_t init_seed = 0;
};

const char* layer_kind_name(LayerKind k);

/// Per-layer output shapes (per-sample). Throws ConfigError naming the layer
/// index and kind when adjacent shapes are incompatible.
std::vector<std::vector<std::size_t>> infer_shapes(const NetworkSpec& spec);

/// Trainable parameters: dense in*out+out, conv2d in_ch*out_ch*k^2+out_ch.
std::size_t param_count(const NetworkSpec& spec);
/// Per-sample multiply-accumulates: dense in*out, conv2d H'*W'*out*in*k^2.
std::size_t mac_count(const NetworkSpec& spec);

enum class Optimizer { sgd, adam };
enum class LossKind { mse, mae, quantile };

struct TrainConfig {
  std::size_t epochs = 1;
  std::size_t batch_size = 32;
  double learning_rate = 0.01;
  Optimizer optimizer = Optimizer::adam;
  LossKind loss = LossKind::mse;
  double quantile_q = 0.5;  // used only for LossKind::quantile
  std::uint64_t shuffle_seed = 0;
};

struct Dataset {
  Tensor inputs;   // [N, sample shape...]
  Tensor targets;  // [N, target shape...]
  std::size_t size() const { return inputs.shape.empty() ? 0 : inputs.shape[0]; }
};

struct TrainResult {
  bool diverged = false;
  std::vector<double> train_loss;  // per epoch, mean over samples
  std::vector<double> val_loss;
  double final_val_loss() const;   // NaN if diverged before the first epoch end
};

double loss_value(LossKind kind, double q, const Tensor& pred, const Tensor& target);
/// d(loss)/d(pred), same shape as pred. Exposed so multi-head models can mix
/// per-head gradients before calling backward().
Tensor loss_grad(LossKind kind, double q, const Tensor& pred, const Tensor& target);

/// Feed-forward network with hand-derived backward passes. One instance is
/// single-threaded; train distinct instances on distinct workers.
class Network {
 public:
  explicit Network(NetworkSpec spec);

  const NetworkSpec& spec() const { return spec_; }
  const std::vector<std::size_t>& output_shape() const { return out_shape_; }

  /// Inference pass; does not retain activations.
  Tensor forward(const Tensor& batch) { return run_forward(batch, false); }

  // Training-loop primitives, exposed for multi-head tasks that stitch
  // networks together. Ordinary users call train().
  Tensor forward_train(const Tensor& batch) { return run_forward(batch, true); }
  Tensor backward(const Tensor& grad_out);
  void zero_grad();
  void optimizer_step(const TrainConfig& cfg);  // advances the adam counter

  std::size_t parameter_count() const { return param_count(spec_); }

  void save_checkpoint(const std::string& path) const;
  void load_checkpoint(const std::string& path);

  // Flat parameter access for gradient checks.
  std::vector<double*> parameter_views();
  std::vector<double*> gradient_views();
  std::vector<std::size_t> parameter_sizes() const;

 private:
  struct Layer {
    LayerSpec spec;
    std::vector<std::size_t> in_shape, out_shape;  // per-sample
    Tensor w, b, gw, gb;          // parameters and gradients
    Tensor mw, vw, mb, vb;        // adam state
    Tensor x_in, y_out;           // cached activations (train mode)
    std::vector<std::uint32_t> pool_idx;  // maxpool argmax per output cell
    Tensor col, dcol;             // conv im2col scratch
  };

  Tensor run_forward(const Tensor& batch, bool train);
  void ensure_adam_state();

  NetworkSpec spec_;
  std::vector<Layer> layers_;
  std::vector<std::size_t> out_shape_;
  std::uint64_t adam_step_ = 0;
};

/// Minibatch training with deterministic shuffling per (shuffle_seed, epoch).
/// Any non-finite loss aborts immediately with diverged=true.
TrainResult train(Network& net, const Dataset& train_data, const Dataset& val_data,
                  const TrainConfig& cfg);

}  // namespace peakforge::nn
