#pragma once

#include <array>
#include <cstdint>
#include <string_view>

#include "headmotion/volume.hpp"

namespace headmotion::prep {

enum class Preprocess { None, Lsb8, Robust, Background };

std::string_view to_string(Preprocess p);
Preprocess parse_preprocess(std::string_view text);

/// Keeps the 8 least significant bits of every intensity.
Volume lsb8(const Volume& v);

/// Maps [0, p80] to [0, 255] (p80 = nearest-rank 80th percentile of nonzero voxels),
/// clamping above and rounding to the nearest integer.
Volume robust_scale(const Volume& v);

/// Zeroes the voxels flagged by `head_mask` (nonzero = head), leaving the background.
Volume mask_background(const Volume& v, const Volume& head_mask);

/// Reverses the voxel order along `axis` (0 = x, 1 = y, 2 = z).
Volume flip(const Volume& v, int axis);

struct AugmentConfig {
  double intensity_low = 0.9;
  double intensity_high = 1.1;
  double flip_probability = 0.30;
  std::uint64_t seed = 0;

  void validate() const;
};

/// The random choices behind one augmentation draw.
struct AugmentDraw {
  double scale = 1.0;
  std::array<bool, 3> flips{false, false, false};
};

AugmentDraw draw_augmentation(const AugmentConfig& cfg, std::uint64_t draw_index);

/// Scale by a factor and reverse selected axes; no resampling anywhere.
Volume apply_augmentation(const Volume& v, const AugmentDraw& draw);

/// Deterministic in (cfg.seed, draw_index).
Volume augment(const Volume& v, const AugmentConfig& cfg, std::uint64_t draw_index);

/// Applies one preprocessing variant. `head_mask` is required for Background.
Volume apply_preprocess(const Volume& v, Preprocess p, const Volume* head_mask = nullptr);

/// Scale used to map the preprocessed integers to network reals.
double input_scale(Preprocess p);

}  // namespace headmotion::prep
