#include "headmotion/train.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>

#include "headmotion/detail/text.hpp"
#include "headmotion/error.hpp"
#include "headmotion/metrics.hpp"
#include "headmotion/volume_io.hpp"

namespace headmotion::nn {

std::string_view to_string(LossKind k) { return k == LossKind::Mse ? "mse" : "softbin_kl"; }

LossKind parse_loss(std::string_view text) {
  if (text == "softbin_kl") return LossKind::SoftbinKl;
  if (text == "mse") return LossKind::Mse;
  throw Error(ErrorKind::Config, "unknown loss '" + std::string(text) + "'");
}

void TrainConfig::validate() const {
  if (epochs < 1) throw Error(ErrorKind::Config, "epochs must be positive");
  if (batch_size < 1) throw Error(ErrorKind::Config, "batch size must be positive");
  if (!(learning_rate > 0.0)) throw Error(ErrorKind::Config, "learning rate must be positive");
  if (!grid) {
    throw Error(ErrorKind::Config, std::string("loss ") + std::string(to_string(loss)) +
                                       " needs a bin grid for label range handling");
  }
  grid->validate();
  if (sigma < 0.0) throw Error(ErrorKind::Config, "sigma must be positive");
  if (max_steps && *max_steps < 1) throw Error(ErrorKind::Config, "max steps must be positive");
}

void adam_step(Params& params, const Grads& grads, AdamState& state, const TrainConfig& cfg) {
  if (grads.size() != params.size()) throw Error(ErrorKind::ShapeMismatch, "grads do not mirror params");
  if (state.m.empty()) {
    for (const auto& p : params) {
      state.m.emplace_back(p.values.size(), Real(0));
      state.v.emplace_back(p.values.size(), Real(0));
    }
  }
  if (state.m.size() != params.size()) throw Error(ErrorKind::ShapeMismatch, "optimizer state mismatch");
  ++state.step;
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  for (std::size_t t = 0; t < params.size(); ++t) {
    auto& p = params[t];
    if (!p.trainable) continue;
    const auto& g = grads[t].values;
    if (g.size() != p.values.size() || state.m[t].size() != p.values.size()) {
      throw Error(ErrorKind::ShapeMismatch, "shape mismatch in " + p.name);
    }
    auto& m = state.m[t];
    auto& v = state.v[t];
    for (std::size_t i = 0; i < g.size(); ++i) {
      m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
      v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
      const double mhat = m[i] / c1;
      const double vhat = v[i] / c2;
      p.values[i] -= cfg.learning_rate * mhat / (std::sqrt(vhat) + cfg.epsilon);
    }
  }
}

std::filesystem::path head_mask_path(const std::filesystem::path& volume_path) {
  auto name = volume_path.filename().string();
  std::string ext;
  for (const char* e : {".nii.gz", ".nii"}) {
    const std::string s(e);
    if (name.size() > s.size() && name.compare(name.size() - s.size(), s.size(), s) == 0) {
      ext = s;
      break;
    }
  }
  name = name.substr(0, name.size() - ext.size()) + "_mask" + ext;
  return volume_path.parent_path() / name;
}

Volume load_preprocessed(const std::filesystem::path& path, prep::Preprocess preprocess) {
  const Volume v = io::read_nifti(path);
  if (preprocess == prep::Preprocess::Background) {
    const Volume mask = io::read_nifti(head_mask_path(path));
    return prep::apply_preprocess(v, preprocess, &mask);
  }
  return prep::apply_preprocess(v, preprocess);
}

namespace {

struct Sample {
  Volume volume;  // preprocessed
  double label = 0.0;
};

std::vector<Sample> load_split(const io::DatasetManifest& manifest, io::Split split,
                               const TrainConfig& cfg, prep::Preprocess preprocess) {
  std::vector<Sample> out;
  for (const auto* e : manifest.split(split)) {
    Sample s;
    s.label = io::resolve_label(manifest, *e, cfg.target);
    s.volume = load_preprocessed(manifest.resolve(e->volume), preprocess);
    if (!out.empty() && out.front().volume.dims() != s.volume.dims()) {
      throw Error(ErrorKind::ShapeMismatch, e->volume + " has different dims from the rest of its split");
    }
    out.push_back(std::move(s));
  }
  if (out.empty()) {
    throw Error(ErrorKind::EmptySplit, std::string("manifest has no ") +
                                           std::string(io::to_string(split)) + " entries");
  }
  return out;
}

Targets make_targets(std::span<const double> labels, const NetConfig& net, const TrainConfig& cfg) {
  Targets t;
  for (double y : labels) {
    if (net.head == Head::Softbin) {
      t.soft.push_back(softbin::encode(y, *cfg.grid, cfg.resolved_sigma()));
    } else {
      t.values.push_back(std::clamp(y, cfg.grid->min, cfg.grid->max));
    }
  }
  return t;
}

double decode_output(const std::vector<Real>& out, const ModelInfo& info) {
  return info.net.head == Head::Softbin ? softbin::decode(out, info.grid) : out[0];
}

std::uint64_t step_seed(std::uint64_t seed, std::int64_t step) {
  std::uint64_t x = seed + 0x9E3779B97F4A7C15ULL * static_cast<std::uint64_t>(step + 1);
  x = (x ^ (x >> 31)) * 0xD6E8FEB86659FD93ULL;
  return x ^ (x >> 32);
}

}  // namespace

std::vector<double> predict_preprocessed(const Checkpoint& model, std::span<const Volume> volumes,
                                         std::size_t batch_size) {
  const double scale = prep::input_scale(model.info.preprocess);
  std::vector<double> out;
  out.reserve(volumes.size());
  batch_size = std::max<std::size_t>(batch_size, 1);
  for (std::size_t start = 0; start < volumes.size(); start += batch_size) {
    std::vector<Tensor> batch;
    for (std::size_t i = start; i < std::min(volumes.size(), start + batch_size); ++i) {
      batch.push_back(to_input(volumes[i], scale, model.info.net));
    }
    const auto res = forward(batch, model.params, model.info.net, false);
    for (const auto& o : res.outputs) out.push_back(decode_output(o, model.info));
  }
  return out;
}

double predict(const Checkpoint& model, const Volume& volume, const Volume* head_mask) {
  const Volume pre = prep::apply_preprocess(volume, model.info.preprocess, head_mask);
  return predict_preprocessed(model, std::span<const Volume>(&pre, 1)).front();
}

FitResult fit(const io::DatasetManifest& manifest, NetConfig net, const TrainConfig& train,
              prep::Preprocess preprocess, const prep::AugmentConfig& augment) {
  train.validate();
  augment.validate();
  net.head = train.loss == LossKind::Mse ? Head::Scalar : Head::Softbin;
  if (net.head == Head::Softbin && net.output_bins != train.grid->count) {
    throw Error(ErrorKind::Config, "output bins differ from the bin grid count");
  }
  net.validate();

  const auto train_set = load_split(manifest, io::Split::Train, train, preprocess);
  const auto val_set = load_split(manifest, io::Split::Validation, train, preprocess);

  Checkpoint model;
  model.info.net = net;
  model.info.grid = *train.grid;
  model.info.sigma = train.resolved_sigma();
  model.info.preprocess = preprocess;
  model.info.target = train.target;
  model.params = init_params(net);

  std::vector<Volume> val_volumes;
  std::vector<double> val_labels;
  for (const auto& s : val_set) {
    val_volumes.push_back(s.volume);
    val_labels.push_back(s.label);
  }
  const Targets val_targets = make_targets(val_labels, net, train);

  const double scale = prep::input_scale(preprocess);
  std::mt19937_64 shuffle_rng(step_seed(train.seed, -1));
  AdamState adam;
  FitResult result;
  double best_rho = -std::numeric_limits<double>::infinity();
  std::uint64_t draw = 0;
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 1; epoch <= train.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double loss_sum = 0.0;
    std::size_t seen = 0;
    bool stop = false;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(train.batch_size)) {
      std::vector<Tensor> batch;
      std::vector<double> labels;
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(train.batch_size));
      for (std::size_t i = start; i < end; ++i) {
        const Sample& s = train_set[order[i]];
        const Volume v = train.augment ? prep::augment(s.volume, augment, draw++) : s.volume;
        batch.push_back(to_input(v, scale, net));
        labels.push_back(s.label);
      }
      const Targets targets = make_targets(labels, net, train);
      const auto fwd = forward(batch, model.params, net, true, step_seed(train.seed, result.steps));
      const auto bwd = backward(fwd, targets, model.params, net);
      update_running_stats(model.params, *fwd.cache, net);
      adam_step(model.params, bwd.grads, adam, train);
      ++result.steps;
      loss_sum += bwd.loss * static_cast<double>(batch.size());
      seen += batch.size();
      if (train.max_steps && result.steps >= *train.max_steps) {
        stop = true;
        break;
      }
    }

    EpochLog entry;
    entry.epoch = epoch;
    entry.train_loss = loss_sum / static_cast<double>(seen);
    std::vector<std::vector<Real>> outputs;
    std::vector<double> preds;
    for (const auto& v : val_volumes) {
      const Tensor t = to_input(v, scale, net);
      auto res = forward(std::span<const Tensor>(&t, 1), model.params, net, false);
      preds.push_back(decode_output(res.outputs[0], model.info));
      outputs.push_back(std::move(res.outputs[0]));
    }
    entry.val_loss = batch_loss(outputs, val_targets, net);
    entry.val_spearman = std::numeric_limits<double>::quiet_NaN();
    if (preds.size() >= 3) {
      try {
        entry.val_spearman = metrics::spearman(val_labels, preds).rho;
      } catch (const Error&) {
      }
    }
    result.log.push_back(entry);
    if (train.on_epoch) train.on_epoch(entry);
    if (std::isfinite(entry.val_spearman) && entry.val_spearman > best_rho) {
      best_rho = entry.val_spearman;
      result.best_epoch = epoch;
      result.model.params = model.params;
    }
    if (stop) break;
  }
  if (result.best_epoch == 0) {
    result.best_epoch = result.log.back().epoch;
    result.model.params = model.params;
  }
  result.model.info = model.info;
  return result;
}

void write_loss_log(const std::vector<EpochLog>& log, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
  out << "epoch,train_loss,val_loss,val_spearman\n";
  for (const auto& e : log) {
    out << e.epoch << ',' << detail::format_double(e.train_loss) << ','
        << detail::format_double(e.val_loss) << ','
        << (std::isfinite(e.val_spearman) ? detail::format_double(e.val_spearman) : "nan") << '\n';
  }
  if (!out) throw Error(ErrorKind::Io, "failed writing " + path.string());
}

}  // namespace headmotion::nn
