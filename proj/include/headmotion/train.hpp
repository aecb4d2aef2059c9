#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string_view>
#include <vector>

#include "headmotion/checkpoint.hpp"
#include "headmotion/manifest.hpp"
#include "headmotion/network.hpp"
#include "headmotion/preprocess.hpp"
#include "headmotion/softbin.hpp"

namespace headmotion::nn {

enum class LossKind { SoftbinKl, Mse };

std::string_view to_string(LossKind k);
LossKind parse_loss(std::string_view text);

struct EpochLog {
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double val_spearman = 0.0;  // NaN when undefined (constant predictions)
};

struct TrainConfig {
  int epochs = 500;
  int batch_size = 2;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  LossKind loss = LossKind::SoftbinKl;
  std::optional<softbin::BinGrid> grid = softbin::BinGrid{};
  double sigma = 0.0;  // 0 selects one bin width
  io::Target target = io::Target::MotionScore;
  std::uint64_t seed = 0;
  bool augment = true;
  /// Stops after this many optimizer steps when set (the current epoch is still logged).
  std::optional<std::int64_t> max_steps;
  std::function<void(const EpochLog&)> on_epoch;

  void validate() const;
  double resolved_sigma() const { return sigma > 0.0 ? sigma : grid->width(); }
};

struct AdamState {
  std::vector<std::vector<Real>> m;
  std::vector<std::vector<Real>> v;
  std::int64_t step = 0;
};

/// Bias-corrected Adam update of every trainable tensor.
void adam_step(Params& params, const Grads& grads, AdamState& state, const TrainConfig& cfg);

struct FitResult {
  Checkpoint model;  // parameters of the best validation epoch
  std::vector<EpochLog> log;
  int best_epoch = 0;
  std::int64_t steps = 0;
};

/// Loads, preprocesses (then augments per draw) and trains on the manifest's train split,
/// evaluating the validation split after every epoch. The head follows the loss kind.
FitResult fit(const io::DatasetManifest& manifest, NetConfig net, const TrainConfig& train,
              prep::Preprocess preprocess, const prep::AugmentConfig& augment);

/// Path of the head mask belonging to a volume: `<stem>_mask<ext>` next to it.
std::filesystem::path head_mask_path(const std::filesystem::path& volume_path);

/// Reads a volume and applies the model's preprocessing (loading its mask when needed).
Volume load_preprocessed(const std::filesystem::path& path, prep::Preprocess preprocess);

/// Decoded predictions (mm/s) for already preprocessed volumes.
std::vector<double> predict_preprocessed(const Checkpoint& model, std::span<const Volume> volumes,
                                         std::size_t batch_size = 1);

/// Inference-mode prediction of one volume in mm/s.
double predict(const Checkpoint& model, const Volume& volume, const Volume* head_mask = nullptr);

/// `epoch,train_loss,val_loss,val_spearman` CSV.
void write_loss_log(const std::vector<EpochLog>& log, const std::filesystem::path& path);

}  // namespace headmotion::nn
