#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "headmotion/volume.hpp"

namespace headmotion::nn {

using Real = double;

enum class Norm { None, Batch };
/// Softbin heads end in `output_bins` logits and a softmax; scalar heads regress one value.
enum class Head { Softbin, Scalar };

std::string_view to_string(Norm n);
Norm parse_norm(std::string_view text);
std::string_view to_string(Head h);
Head parse_head(std::string_view text);

struct NetConfig {
  std::vector<int> block_channels{8, 16, 32, 64};
  int head_channels = 64;
  int output_bins = 40;
  double dropout_rate = 0.5;
  Norm norm = Norm::None;
  Head head = Head::Softbin;
  std::uint64_t seed = 0;

  /// Channel widths of the full-size architecture.
  static NetConfig full_scale();

  void validate() const;
  int outputs() const { return head == Head::Softbin ? output_bins : 1; }
  /// Smallest multiple of 2^blocks that holds `n`.
  int padded_extent(int n) const;
};

/// Dense C x D x H x W tensor.
struct Tensor {
  int c = 0, d = 0, h = 0, w = 0;
  std::vector<Real> v;

  Tensor() = default;
  Tensor(int channels, int depth, int height, int width)
      : c(channels), d(depth), h(height), w(width),
        v(static_cast<std::size_t>(channels) * depth * height * width, Real(0)) {}

  std::size_t spatial() const { return static_cast<std::size_t>(d) * h * w; }
  Real* channel(int ch) { return v.data() + static_cast<std::size_t>(ch) * spatial(); }
  const Real* channel(int ch) const { return v.data() + static_cast<std::size_t>(ch) * spatial(); }
  bool same_shape(const Tensor& o) const { return c == o.c && d == o.d && h == o.h && w == o.w; }
};

/// Single-channel network input: intensities divided by `scale`, zero-padded at the high end
/// of every axis up to a multiple of 2^blocks.
Tensor to_input(const Volume& volume, double scale, const NetConfig& config);

struct ParamTensor {
  std::string name;
  std::vector<int> shape;
  std::vector<Real> values;
  bool trainable = true;  // batch-norm running statistics are buffers
};

/// Named parameter tensors in a fixed layer order. Grads mirror Params tensor-for-tensor.
using Params = std::vector<ParamTensor>;
using Grads = std::vector<ParamTensor>;

Params init_params(const NetConfig& config);
Grads zero_grads(const Params& params);

struct BlockCache {
  Tensor input;      // block input
  Tensor conv;       // conv output before normalization
  Tensor normed;     // xhat (batch norm only)
  Tensor pre_pool;   // after normalization
  Tensor pooled;     // max-pool output before ReLU
  std::vector<std::uint32_t> argmax;  // source index per pooled voxel
  Tensor output;     // after ReLU
};

struct ItemCache {
  std::vector<BlockCache> blocks;
  Tensor head_pre;            // 1x1x1 conv output before ReLU
  Tensor head_act;            // after ReLU
  std::vector<Real> pooled;   // global average
  std::vector<Real> dropped;  // after dropout
  std::vector<Real> mask;     // dropout multipliers (0 or 1/(1-rate))
  std::vector<Real> logits;
};

struct ForwardCache {
  std::vector<ItemCache> items;
  // Per block, per channel batch statistics (batch norm, training only).
  std::vector<std::vector<Real>> batch_mean;
  std::vector<std::vector<Real>> batch_inv_std;
  std::vector<std::vector<Real>> batch_var;
};

struct ForwardResult {
  /// Softbin: probabilities per item. Scalar: one regressed value per item.
  std::vector<std::vector<Real>> outputs;
  std::optional<ForwardCache> cache;  // present when training
};

/// Runs the network. In training mode dropout is active (mask drawn from `dropout_seed`),
/// batch norm uses batch statistics, and activations are cached for backward.
ForwardResult forward(std::span<const Tensor> batch, const Params& params, const NetConfig& config,
                      bool training, std::uint64_t dropout_seed = 0);

/// Per-item targets: soft labels for Softbin heads, scalar values for Scalar heads.
struct Targets {
  std::vector<std::vector<Real>> soft;
  std::vector<Real> values;
};

struct BackwardResult {
  Real loss = 0.0;  // mean over the batch
  Grads grads;
};

/// Exact gradients of the mean batch loss with respect to every trainable parameter.
BackwardResult backward(const ForwardResult& result, const Targets& targets, const Params& params,
                        const NetConfig& config);

/// Mean loss of already computed outputs (KL for Softbin, squared error for Scalar).
Real batch_loss(const std::vector<std::vector<Real>>& outputs, const Targets& targets,
                const NetConfig& config);

/// Folds the batch statistics of a training forward into the running averages.
void update_running_stats(Params& params, const ForwardCache& cache, const NetConfig& config,
                          double momentum = 0.1);

std::size_t trainable_count(const Params& params);

}  // namespace headmotion::nn
