#include "headmotion/network.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "headmotion/error.hpp"
#include "headmotion/softbin.hpp"

namespace headmotion::nn {

std::string_view to_string(Norm n) { return n == Norm::Batch ? "batch" : "none"; }

Norm parse_norm(std::string_view text) {
  if (text == "none") return Norm::None;
  if (text == "batch") return Norm::Batch;
  throw Error(ErrorKind::Config, "unknown norm '" + std::string(text) + "'");
}

std::string_view to_string(Head h) { return h == Head::Scalar ? "scalar" : "softbin"; }

Head parse_head(std::string_view text) {
  if (text == "softbin") return Head::Softbin;
  if (text == "scalar") return Head::Scalar;
  throw Error(ErrorKind::Config, "unknown head '" + std::string(text) + "'");
}

NetConfig NetConfig::full_scale() {
  NetConfig c;
  c.block_channels = {32, 64, 128, 256, 256, 64};
  c.head_channels = 64;
  c.norm = Norm::Batch;
  return c;
}

void NetConfig::validate() const {
  if (block_channels.empty()) throw Error(ErrorKind::Config, "network needs at least one block");
  if (block_channels.size() > 10) throw Error(ErrorKind::Config, "at most 10 pooling blocks");
  for (int c : block_channels) {
    if (c < 1) throw Error(ErrorKind::Config, "block channel counts must be positive");
  }
  if (head_channels < 1) throw Error(ErrorKind::Config, "head channels must be positive");
  if (head == Head::Softbin && output_bins < 2) throw Error(ErrorKind::Config, "need at least 2 output bins");
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) {
    throw Error(ErrorKind::Config, "dropout rate must lie in [0, 1)");
  }
}

int NetConfig::padded_extent(int n) const {
  const int m = 1 << block_channels.size();
  return ((n + m - 1) / m) * m;
}

Tensor to_input(const Volume& volume, double scale, const NetConfig& config) {
  const auto [nx, ny, nz] = volume.dims();
  Tensor t(1, config.padded_extent(nz), config.padded_extent(ny), config.padded_extent(nx));
  const Real inv = Real(1) / static_cast<Real>(scale);
  for (int z = 0; z < nz; ++z) {
    for (int y = 0; y < ny; ++y) {
      Real* row = t.v.data() + (static_cast<std::size_t>(z) * t.h + y) * t.w;
      for (int x = 0; x < nx; ++x) row[x] = static_cast<Real>(volume.at(x, y, z)) * inv;
    }
  }
  return t;
}

namespace {

constexpr Real kBnEps = 1e-5;

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
  std::uint64_t x = seed ^ (salt * 0x9E3779B97F4A7C15ULL);
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

struct Layout {
  std::size_t per_block;
  std::size_t blocks;
  std::size_t conv_w(std::size_t b) const { return b * per_block; }
  std::size_t conv_b(std::size_t b) const { return b * per_block + 1; }
  std::size_t gamma(std::size_t b) const { return b * per_block + 2; }
  std::size_t beta(std::size_t b) const { return b * per_block + 3; }
  std::size_t run_mean(std::size_t b) const { return b * per_block + 4; }
  std::size_t run_var(std::size_t b) const { return b * per_block + 5; }
  std::size_t head_w() const { return blocks * per_block; }
  std::size_t head_b() const { return head_w() + 1; }
  std::size_t out_w() const { return head_w() + 2; }
  std::size_t out_b() const { return head_w() + 3; }
  std::size_t total() const { return head_w() + 4; }
};

Layout layout(const NetConfig& c) {
  return {c.norm == Norm::Batch ? std::size_t{6} : std::size_t{2}, c.block_channels.size()};
}

struct ParamSpec {
  std::string name;
  std::vector<int> shape;
  int fan_in;      // > 0: He-normal draw
  Real fill;       // constant value otherwise
  bool trainable;
};

std::vector<ParamSpec> param_specs(const NetConfig& config) {
  std::vector<ParamSpec> specs;
  int in_c = 1;
  for (std::size_t b = 0; b < config.block_channels.size(); ++b) {
    const int out_c = config.block_channels[b];
    const std::string prefix = "block" + std::to_string(b);
    specs.push_back({prefix + ".conv.weight", {out_c, in_c, 3, 3, 3}, in_c * 27, 0, true});
    specs.push_back({prefix + ".conv.bias", {out_c}, 0, 0, true});
    if (config.norm == Norm::Batch) {
      specs.push_back({prefix + ".bn.gamma", {out_c}, 0, 1, true});
      specs.push_back({prefix + ".bn.beta", {out_c}, 0, 0, true});
      specs.push_back({prefix + ".bn.running_mean", {out_c}, 0, 0, false});
      specs.push_back({prefix + ".bn.running_var", {out_c}, 0, 1, false});
    }
    in_c = out_c;
  }
  specs.push_back({"head.weight", {config.head_channels, in_c}, in_c, 0, true});
  specs.push_back({"head.bias", {config.head_channels}, 0, 0, true});
  specs.push_back({"out.weight", {config.outputs(), config.head_channels}, config.head_channels, 0, true});
  specs.push_back({"out.bias", {config.outputs()}, 0, 0, true});
  return specs;
}

void check_params(const Params& params, const NetConfig& config) {
  const auto specs = param_specs(config);
  if (params.size() != specs.size()) {
    throw Error(ErrorKind::ShapeMismatch, "parameter set does not match the network configuration");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    std::size_t n = 1;
    for (int s : specs[i].shape) n *= static_cast<std::size_t>(s);
    if (params[i].shape != specs[i].shape || params[i].values.size() != n) {
      throw Error(ErrorKind::ShapeMismatch, "parameter " + params[i].name + " has the wrong shape");
    }
  }
}

void check_finite(const std::vector<Real>& v, const std::string& layer) {
  for (Real x : v) {
    if (!std::isfinite(x)) throw Error(ErrorKind::NonFinite, "non-finite activation in " + layer);
  }
}

// 3x3x3 convolution, zero padding 1.
Tensor conv3_forward(const Tensor& in, const Real* weight, const Real* bias, int out_c) {
  Tensor out(out_c, in.d, in.h, in.w);
  const int D = in.d, H = in.h, W = in.w;
#pragma omp parallel for schedule(static)
  for (int o = 0; o < out_c; ++o) {
    Real* op = out.channel(o);
    std::fill(op, op + out.spatial(), bias[o]);
    for (int i = 0; i < in.c; ++i) {
      const Real* ip = in.channel(i);
      const Real* wk = weight + (static_cast<std::size_t>(o) * in.c + i) * 27;
      for (int z = 0; z < D; ++z) {
        for (int kz = 0; kz < 3; ++kz) {
          const int zz = z + kz - 1;
          if (zz < 0 || zz >= D) continue;
          for (int y = 0; y < H; ++y) {
            Real* orow = op + (static_cast<std::size_t>(z) * H + y) * W;
            for (int ky = 0; ky < 3; ++ky) {
              const int yy = y + ky - 1;
              if (yy < 0 || yy >= H) continue;
              const Real* irow = ip + (static_cast<std::size_t>(zz) * H + yy) * W;
              const Real w0 = wk[kz * 9 + ky * 3], w1 = wk[kz * 9 + ky * 3 + 1], w2 = wk[kz * 9 + ky * 3 + 2];
              if (W == 1) {
                orow[0] += w1 * irow[0];
                continue;
              }
              orow[0] += w1 * irow[0] + w2 * irow[1];
              for (int x = 1; x < W - 1; ++x) orow[x] += w0 * irow[x - 1] + w1 * irow[x] + w2 * irow[x + 1];
              orow[W - 1] += w0 * irow[W - 2] + w1 * irow[W - 1];
            }
          }
        }
      }
    }
  }
  return out;
}

// Accumulates weight/bias gradients; writes the input gradient when `din` is non-null.
void conv3_backward(const Tensor& in, const Tensor& dout, const Real* weight, Real* dweight,
                    Real* dbias, Tensor* din) {
  const int D = in.d, H = in.h, W = in.w;
  const int in_c = in.c, out_c = dout.c;
#pragma omp parallel for schedule(static)
  for (int o = 0; o < out_c; ++o) {
    const Real* dp = dout.channel(o);
    Real bsum = 0;
    for (std::size_t s = 0; s < dout.spatial(); ++s) bsum += dp[s];
    dbias[o] += bsum;
    for (int i = 0; i < in_c; ++i) {
      const Real* ip = in.channel(i);
      Real acc[27] = {};
      for (int z = 0; z < D; ++z) {
        for (int kz = 0; kz < 3; ++kz) {
          const int zz = z + kz - 1;
          if (zz < 0 || zz >= D) continue;
          for (int y = 0; y < H; ++y) {
            const Real* drow = dp + (static_cast<std::size_t>(z) * H + y) * W;
            for (int ky = 0; ky < 3; ++ky) {
              const int yy = y + ky - 1;
              if (yy < 0 || yy >= H) continue;
              const Real* irow = ip + (static_cast<std::size_t>(zz) * H + yy) * W;
              Real a0 = 0, a1 = 0, a2 = 0;
              for (int x = 1; x < W; ++x) a0 += drow[x] * irow[x - 1];
              for (int x = 0; x < W; ++x) a1 += drow[x] * irow[x];
              for (int x = 0; x < W - 1; ++x) a2 += drow[x] * irow[x + 1];
              acc[kz * 9 + ky * 3] += a0;
              acc[kz * 9 + ky * 3 + 1] += a1;
              acc[kz * 9 + ky * 3 + 2] += a2;
            }
          }
        }
      }
      Real* dw = dweight + (static_cast<std::size_t>(o) * in_c + i) * 27;
      for (int k = 0; k < 27; ++k) dw[k] += acc[k];
    }
  }
  if (din == nullptr) return;
  *din = Tensor(in_c, D, H, W);
#pragma omp parallel for schedule(static)
  for (int i = 0; i < in_c; ++i) {
    Real* gp = din->channel(i);
    for (int o = 0; o < out_c; ++o) {
      const Real* dp = dout.channel(o);
      const Real* wk = weight + (static_cast<std::size_t>(o) * in_c + i) * 27;
      for (int z = 0; z < D; ++z) {
        for (int kz = 0; kz < 3; ++kz) {
          const int zz = z + kz - 1;
          if (zz < 0 || zz >= D) continue;
          for (int y = 0; y < H; ++y) {
            const Real* drow = dp + (static_cast<std::size_t>(z) * H + y) * W;
            for (int ky = 0; ky < 3; ++ky) {
              const int yy = y + ky - 1;
              if (yy < 0 || yy >= H) continue;
              Real* grow = gp + (static_cast<std::size_t>(zz) * H + yy) * W;
              const Real w0 = wk[kz * 9 + ky * 3], w1 = wk[kz * 9 + ky * 3 + 1], w2 = wk[kz * 9 + ky * 3 + 2];
              // input x' receives w0 from output x'+1, w1 from x', w2 from x'-1
              if (W == 1) {
                grow[0] += w1 * drow[0];
                continue;
              }
              grow[0] += w0 * drow[1] + w1 * drow[0];
              for (int x = 1; x < W - 1; ++x) grow[x] += w0 * drow[x + 1] + w1 * drow[x] + w2 * drow[x - 1];
              grow[W - 1] += w1 * drow[W - 1] + w2 * drow[W - 2];
            }
          }
        }
      }
    }
  }
}

void maxpool2(const Tensor& in, Tensor& out, std::vector<std::uint32_t>& argmax) {
  out = Tensor(in.c, in.d / 2, in.h / 2, in.w / 2);
  argmax.assign(out.v.size(), 0);
  for (int c = 0; c < in.c; ++c) {
    const Real* ip = in.channel(c);
    Real* op = out.channel(c);
    std::uint32_t* ap = argmax.data() + static_cast<std::size_t>(c) * out.spatial();
    for (int z = 0; z < out.d; ++z) {
      for (int y = 0; y < out.h; ++y) {
        for (int x = 0; x < out.w; ++x) {
          std::uint32_t best_idx = 0;
          Real best = -std::numeric_limits<Real>::infinity();
          for (int dz = 0; dz < 2; ++dz) {
            for (int dy = 0; dy < 2; ++dy) {
              for (int dx = 0; dx < 2; ++dx) {
                const auto idx = static_cast<std::uint32_t>(
                    ((2 * z + dz) * in.h + (2 * y + dy)) * in.w + (2 * x + dx));
                if (ip[idx] > best) {
                  best = ip[idx];
                  best_idx = idx;
                }
              }
            }
          }
          const std::size_t o = (static_cast<std::size_t>(z) * out.h + y) * out.w + x;
          op[o] = best;
          ap[o] = best_idx;
        }
      }
    }
  }
}


}  // namespace

Params init_params(const NetConfig& config) {
  config.validate();
  std::mt19937_64 rng(mix_seed(config.seed, 1));
  Params params;
  for (auto& spec : param_specs(config)) {
    std::size_t n = 1;
    for (int s : spec.shape) n *= static_cast<std::size_t>(s);
    ParamTensor p{std::move(spec.name), std::move(spec.shape), std::vector<Real>(n, spec.fill),
                  spec.trainable};
    if (spec.fan_in > 0) {
      std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / spec.fan_in));
      for (auto& v : p.values) v = static_cast<Real>(dist(rng));
    }
    params.push_back(std::move(p));
  }
  return params;
}

Grads zero_grads(const Params& params) {
  Grads g = params;
  for (auto& t : g) std::fill(t.values.begin(), t.values.end(), Real(0));
  return g;
}

std::size_t trainable_count(const Params& params) {
  std::size_t n = 0;
  for (const auto& p : params) {
    if (p.trainable) n += p.values.size();
  }
  return n;
}

ForwardResult forward(std::span<const Tensor> batch, const Params& params, const NetConfig& config,
                      bool training, std::uint64_t dropout_seed) {
  config.validate();
  check_params(params, config);
  if (batch.empty()) throw Error(ErrorKind::ShapeMismatch, "empty batch");
  const int m = 1 << config.block_channels.size();
  for (const auto& t : batch) {
    if (t.c != 1 || !t.same_shape(batch.front()) || t.d % m || t.h % m || t.w % m || t.d == 0) {
      throw Error(ErrorKind::ShapeMismatch, "batch items must be single-channel, equally shaped and "
                                            "divisible by " + std::to_string(m) + " per axis");
    }
  }
  const auto lay = layout(config);
  const std::size_t B = batch.size();
  const std::size_t nblocks = config.block_channels.size();

  ForwardCache cache;
  cache.items.resize(B);
  cache.batch_mean.resize(nblocks);
  cache.batch_inv_std.resize(nblocks);
  cache.batch_var.resize(nblocks);

  std::vector<Tensor> current(batch.begin(), batch.end());
  for (std::size_t b = 0; b < nblocks; ++b) {
    const int out_c = config.block_channels[b];
    const std::string name = "block" + std::to_string(b);
    std::vector<Tensor> conv(B);
    for (std::size_t n = 0; n < B; ++n) {
      conv[n] = conv3_forward(current[n], params[lay.conv_w(b)].values.data(),
                              params[lay.conv_b(b)].values.data(), out_c);
      check_finite(conv[n].v, name + ".conv");
    }
    std::vector<Tensor> normed(B), pre_pool(B);
    if (config.norm == Norm::Batch) {
      std::vector<Real> mean(out_c, 0), var(out_c, 0), inv_std(out_c, 0);
      const auto& gamma = params[lay.gamma(b)].values;
      const auto& beta = params[lay.beta(b)].values;
      if (training) {
        const Real count = static_cast<Real>(B * conv[0].spatial());
        for (int c = 0; c < out_c; ++c) {
          Real s = 0;
          for (std::size_t n = 0; n < B; ++n) {
            const Real* p = conv[n].channel(c);
            for (std::size_t i = 0; i < conv[n].spatial(); ++i) s += p[i];
          }
          mean[c] = s / count;
          Real q = 0;
          for (std::size_t n = 0; n < B; ++n) {
            const Real* p = conv[n].channel(c);
            for (std::size_t i = 0; i < conv[n].spatial(); ++i) q += (p[i] - mean[c]) * (p[i] - mean[c]);
          }
          var[c] = q / count;
        }
      } else {
        mean = params[lay.run_mean(b)].values;
        var = params[lay.run_var(b)].values;
      }
      for (int c = 0; c < out_c; ++c) inv_std[c] = Real(1) / std::sqrt(var[c] + kBnEps);
      for (std::size_t n = 0; n < B; ++n) {
        normed[n] = conv[n];
        pre_pool[n] = conv[n];
        for (int c = 0; c < out_c; ++c) {
          Real* xh = normed[n].channel(c);
          Real* y = pre_pool[n].channel(c);
          for (std::size_t i = 0; i < conv[n].spatial(); ++i) {
            xh[i] = (xh[i] - mean[c]) * inv_std[c];
            y[i] = gamma[c] * xh[i] + beta[c];
          }
        }
      }
      cache.batch_mean[b] = std::move(mean);
      cache.batch_var[b] = std::move(var);
      cache.batch_inv_std[b] = std::move(inv_std);
    } else {
      pre_pool = conv;
    }
    for (std::size_t n = 0; n < B; ++n) {
      BlockCache bc;
      maxpool2(pre_pool[n], bc.pooled, bc.argmax);
      bc.output = bc.pooled;
      for (auto& x : bc.output.v) x = x > 0 ? x : Real(0);
      check_finite(bc.output.v, name + ".output");
      if (training) {
        bc.input = std::move(current[n]);
        bc.conv = std::move(conv[n]);
        bc.normed = std::move(normed[n]);
        bc.pre_pool = std::move(pre_pool[n]);
      }
      current[n] = bc.output;
      cache.items[n].blocks.push_back(std::move(bc));
    }
  }

  const int last_c = config.block_channels.back();
  const int head_c = config.head_channels;
  const int outs = config.outputs();
  const auto& hw = params[lay.head_w()].values;
  const auto& hb = params[lay.head_b()].values;
  const auto& ow = params[lay.out_w()].values;
  const auto& ob = params[lay.out_b()].values;

  ForwardResult result;
  for (std::size_t n = 0; n < B; ++n) {
    ItemCache& ic = cache.items[n];
    const Tensor& a = current[n];
    const std::size_t S = a.spatial();
    Tensor hpre(head_c, a.d, a.h, a.w);
    for (int k = 0; k < head_c; ++k) {
      Real* hp = hpre.channel(k);
      std::fill(hp, hp + S, hb[k]);
      for (int c = 0; c < last_c; ++c) {
        const Real w = hw[static_cast<std::size_t>(k) * last_c + c];
        const Real* ap = a.channel(c);
        for (std::size_t i = 0; i < S; ++i) hp[i] += w * ap[i];
      }
    }
    check_finite(hpre.v, "head.conv");
    Tensor hact = hpre;
    for (auto& x : hact.v) x = x > 0 ? x : Real(0);
    std::vector<Real> pooled(head_c, 0);
    for (int k = 0; k < head_c; ++k) {
      const Real* hp = hact.channel(k);
      Real s = 0;
      for (std::size_t i = 0; i < S; ++i) s += hp[i];
      pooled[k] = s / static_cast<Real>(S);
    }
    std::vector<Real> mask(head_c, 1);
    if (training && config.dropout_rate > 0.0) {
      std::mt19937_64 rng(mix_seed(dropout_seed, n + 17));
      std::uniform_real_distribution<double> unit(0.0, 1.0);
      const Real keep = Real(1) / static_cast<Real>(1.0 - config.dropout_rate);
      for (auto& mk : mask) mk = unit(rng) < config.dropout_rate ? Real(0) : keep;
    }
    std::vector<Real> dropped(head_c);
    for (int k = 0; k < head_c; ++k) dropped[k] = pooled[k] * mask[k];
    std::vector<Real> logits(outs);
    for (int j = 0; j < outs; ++j) {
      Real s = ob[j];
      for (int k = 0; k < head_c; ++k) s += ow[static_cast<std::size_t>(j) * head_c + k] * dropped[k];
      logits[j] = s;
    }
    check_finite(logits, "out.conv");
    if (config.head == Head::Softbin) {
      result.outputs.push_back(softbin::softmax(logits));
    } else {
      result.outputs.push_back(logits);
    }
    if (training) {
      ic.head_pre = std::move(hpre);
      ic.head_act = std::move(hact);
      ic.pooled = std::move(pooled);
      ic.dropped = std::move(dropped);
      ic.mask = std::move(mask);
      ic.logits = std::move(logits);
    }
  }
  if (training) result.cache = std::move(cache);
  return result;
}

Real batch_loss(const std::vector<std::vector<Real>>& outputs, const Targets& targets,
                const NetConfig& config) {
  Real total = 0;
  for (std::size_t n = 0; n < outputs.size(); ++n) {
    if (config.head == Head::Softbin) {
      total += softbin::kl_loss(targets.soft.at(n), outputs[n]).loss;
    } else {
      total += softbin::mse_head_loss(targets.values.at(n), outputs[n][0]).loss;
    }
  }
  return total / static_cast<Real>(outputs.size());
}

BackwardResult backward(const ForwardResult& result, const Targets& targets, const Params& params,
                        const NetConfig& config) {
  if (!result.cache) throw Error(ErrorKind::MissingCache, "backward needs a training-mode forward pass");
  check_params(params, config);
  const ForwardCache& cache = *result.cache;
  const std::size_t B = cache.items.size();
  if (config.head == Head::Softbin ? targets.soft.size() != B : targets.values.size() != B) {
    throw Error(ErrorKind::ShapeMismatch, "target count differs from batch size");
  }
  const auto lay = layout(config);
  BackwardResult out;
  out.grads = zero_grads(params);
  Grads& g = out.grads;
  const Real inv_b = Real(1) / static_cast<Real>(B);

  const int last_c = config.block_channels.back();
  const int head_c = config.head_channels;
  const int outs = config.outputs();
  const auto& hw = params[lay.head_w()].values;
  const auto& ow = params[lay.out_w()].values;

  std::vector<Tensor> dact(B);  // gradient w.r.t. current block output
  for (std::size_t n = 0; n < B; ++n) {
    const ItemCache& ic = cache.items[n];
    std::vector<Real> dlogits(outs);
    if (config.head == Head::Softbin) {
      const auto lg = softbin::kl_loss(targets.soft[n], result.outputs[n]);
      out.loss += lg.loss * inv_b;
      for (int j = 0; j < outs; ++j) dlogits[j] = lg.grad[j] * inv_b;
    } else {
      const auto lg = softbin::mse_head_loss(targets.values[n], result.outputs[n][0]);
      out.loss += lg.loss * inv_b;
      dlogits[0] = lg.grad * inv_b;
    }
    std::vector<Real> ddropped(head_c, 0);
    for (int j = 0; j < outs; ++j) {
      g[lay.out_b()].values[j] += dlogits[j];
      for (int k = 0; k < head_c; ++k) {
        g[lay.out_w()].values[static_cast<std::size_t>(j) * head_c + k] += dlogits[j] * ic.dropped[k];
        ddropped[k] += ow[static_cast<std::size_t>(j) * head_c + k] * dlogits[j];
      }
    }
    const Tensor& a = ic.blocks.back().output;
    const std::size_t S = a.spatial();
    Tensor dhead(head_c, a.d, a.h, a.w);
    for (int k = 0; k < head_c; ++k) {
      const Real dpool = ddropped[k] * ic.mask[k] / static_cast<Real>(S);
      const Real* hp = ic.head_pre.channel(k);
      Real* dh = dhead.channel(k);
      for (std::size_t i = 0; i < S; ++i) dh[i] = hp[i] > 0 ? dpool : Real(0);
    }
    Tensor da(last_c, a.d, a.h, a.w);
    for (int k = 0; k < head_c; ++k) {
      const Real* dh = dhead.channel(k);
      Real bsum = 0;
      for (std::size_t i = 0; i < S; ++i) bsum += dh[i];
      g[lay.head_b()].values[k] += bsum;
      for (int c = 0; c < last_c; ++c) {
        const Real* ap = a.channel(c);
        Real s = 0;
        for (std::size_t i = 0; i < S; ++i) s += dh[i] * ap[i];
        g[lay.head_w()].values[static_cast<std::size_t>(k) * last_c + c] += s;
        const Real w = hw[static_cast<std::size_t>(k) * last_c + c];
        Real* dp = da.channel(c);
        for (std::size_t i = 0; i < S; ++i) dp[i] += w * dh[i];
      }
    }
    dact[n] = std::move(da);
  }

  for (std::size_t bi = config.block_channels.size(); bi-- > 0;) {
    const int out_c = config.block_channels[bi];
    std::vector<Tensor> dpre(B);
    for (std::size_t n = 0; n < B; ++n) {
      const BlockCache& bc = cache.items[n].blocks[bi];
      Tensor d(out_c, bc.pre_pool.d, bc.pre_pool.h, bc.pre_pool.w);
      for (int c = 0; c < out_c; ++c) {
        const Real* pooled = bc.pooled.channel(c);
        const Real* up = dact[n].channel(c);
        const std::uint32_t* am = bc.argmax.data() + static_cast<std::size_t>(c) * bc.pooled.spatial();
        Real* dp = d.channel(c);
        for (std::size_t i = 0; i < bc.pooled.spatial(); ++i) {
          if (pooled[i] > 0) dp[am[i]] += up[i];
        }
      }
      dpre[n] = std::move(d);
    }
    std::vector<Tensor> dconv(B);
    if (config.norm == Norm::Batch) {
      const auto& gamma = params[lay.gamma(bi)].values;
      const auto& inv_std = cache.batch_inv_std[bi];
      const std::size_t S = dpre[0].spatial();
      const Real count = static_cast<Real>(B * S);
      for (std::size_t n = 0; n < B; ++n) dconv[n] = Tensor(out_c, dpre[n].d, dpre[n].h, dpre[n].w);
      for (int c = 0; c < out_c; ++c) {
        Real sum_dy = 0, sum_dy_xhat = 0;
        for (std::size_t n = 0; n < B; ++n) {
          const Real* dy = dpre[n].channel(c);
          const Real* xh = cache.items[n].blocks[bi].normed.channel(c);
          for (std::size_t i = 0; i < S; ++i) {
            sum_dy += dy[i];
            sum_dy_xhat += dy[i] * xh[i];
          }
        }
        g[lay.beta(bi)].values[c] += sum_dy;
        g[lay.gamma(bi)].values[c] += sum_dy_xhat;
        const Real scale = gamma[c] * inv_std[c] / count;
        for (std::size_t n = 0; n < B; ++n) {
          const Real* dy = dpre[n].channel(c);
          const Real* xh = cache.items[n].blocks[bi].normed.channel(c);
          Real* dx = dconv[n].channel(c);
          for (std::size_t i = 0; i < S; ++i) {
            dx[i] = scale * (count * dy[i] - sum_dy - xh[i] * sum_dy_xhat);
          }
        }
      }
    } else {
      dconv = std::move(dpre);
    }
    for (std::size_t n = 0; n < B; ++n) {
      const BlockCache& bc = cache.items[n].blocks[bi];
      Tensor din;
      conv3_backward(bc.input, dconv[n], params[lay.conv_w(bi)].values.data(),
                     g[lay.conv_w(bi)].values.data(), g[lay.conv_b(bi)].values.data(),
                     bi > 0 ? &din : nullptr);
      dact[n] = std::move(din);
    }
  }
  return out;
}

void update_running_stats(Params& params, const ForwardCache& cache, const NetConfig& config,
                          double momentum) {
  if (config.norm != Norm::Batch) return;
  const auto lay = layout(config);
  for (std::size_t b = 0; b < config.block_channels.size(); ++b) {
    if (cache.batch_mean[b].empty()) continue;
    const Real count = static_cast<Real>(cache.items.size() * cache.items[0].blocks[b].conv.spatial());
    const Real unbias = count > 1 ? count / (count - 1) : Real(1);
    auto& rm = params[lay.run_mean(b)].values;
    auto& rv = params[lay.run_var(b)].values;
    for (std::size_t c = 0; c < rm.size(); ++c) {
      rm[c] = (1 - momentum) * rm[c] + momentum * cache.batch_mean[b][c];
      rv[c] = (1 - momentum) * rv[c] + momentum * cache.batch_var[b][c] * unbias;
    }
  }
}

}  // namespace headmotion::nn
