#include "headmotion/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "headmotion/error.hpp"

namespace headmotion::prep {

std::string_view to_string(Preprocess p) {
  switch (p) {
    case Preprocess::None: return "none";
    case Preprocess::Lsb8: return "lsb8";
    case Preprocess::Robust: return "robust";
    case Preprocess::Background: return "background";
  }
  return "none";
}

Preprocess parse_preprocess(std::string_view text) {
  if (text == "none") return Preprocess::None;
  if (text == "lsb8") return Preprocess::Lsb8;
  if (text == "robust") return Preprocess::Robust;
  if (text == "background") return Preprocess::Background;
  throw Error(ErrorKind::Config, "unknown preprocessing '" + std::string(text) + "'");
}

Volume lsb8(const Volume& v) {
  Volume out = v;
  for (auto& x : out.data()) x = static_cast<std::uint16_t>(x & 0xFFu);
  return out;
}

Volume robust_scale(const Volume& v) {
  std::vector<std::uint16_t> nonzero;
  nonzero.reserve(v.size());
  for (auto x : v.data()) {
    if (x != 0) nonzero.push_back(x);
  }
  if (nonzero.empty()) throw Error(ErrorKind::DegenerateInput, "robust scaling of an all-zero volume");
  // Nearest rank: ceil(0.8 n), 1-based.
  const std::size_t rank = (8 * nonzero.size() + 9) / 10;
  std::nth_element(nonzero.begin(), nonzero.begin() + static_cast<std::ptrdiff_t>(rank - 1), nonzero.end());
  const double robust_max = nonzero[rank - 1];
  Volume out = v;
  for (auto& x : out.data()) {
    const double mapped = std::min(255.0, std::round(255.0 * x / robust_max));
    x = static_cast<std::uint16_t>(mapped);
  }
  return out;
}

Volume mask_background(const Volume& v, const Volume& head_mask) {
  if (v.dims() != head_mask.dims()) {
    throw Error(ErrorKind::ShapeMismatch, "head mask dims differ from volume dims");
  }
  Volume out = v;
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (head_mask.data()[i] != 0) out.data()[i] = 0;
  }
  return out;
}

Volume flip(const Volume& v, int axis) {
  if (axis < 0 || axis > 2) throw Error(ErrorKind::Config, "flip axis must be 0, 1 or 2");
  Volume out = v;
  const auto [nx, ny, nz] = v.dims();
  for (int z = 0; z < nz; ++z) {
    for (int y = 0; y < ny; ++y) {
      for (int x = 0; x < nx; ++x) {
        const int sx = axis == 0 ? nx - 1 - x : x;
        const int sy = axis == 1 ? ny - 1 - y : y;
        const int sz = axis == 2 ? nz - 1 - z : z;
        out.at(x, y, z) = v.at(sx, sy, sz);
      }
    }
  }
  return out;
}

void AugmentConfig::validate() const {
  if (!(intensity_low > 0.0 && intensity_low <= intensity_high)) {
    throw Error(ErrorKind::Config, "intensity range must satisfy 0 < low <= high");
  }
  if (!(flip_probability >= 0.0 && flip_probability <= 1.0)) {
    throw Error(ErrorKind::Config, "flip probability must lie in [0, 1]");
  }
}

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

}  // namespace

AugmentDraw draw_augmentation(const AugmentConfig& cfg, std::uint64_t draw_index) {
  cfg.validate();
  std::mt19937_64 rng(splitmix64(cfg.seed) ^ splitmix64(draw_index + 0x5851F42D4C957F2DULL));
  AugmentDraw d;
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double u = unit(rng);
  d.scale = cfg.intensity_low + (cfg.intensity_high - cfg.intensity_low) * u;
  for (auto& f : d.flips) f = unit(rng) < cfg.flip_probability;
  return d;
}

Volume apply_augmentation(const Volume& v, const AugmentDraw& draw) {
  Volume out = v;
  if (draw.scale != 1.0) {
    for (auto& x : out.data()) {
      x = static_cast<std::uint16_t>(std::clamp(std::round(x * draw.scale), 0.0, 65535.0));
    }
  }
  for (int axis = 0; axis < 3; ++axis) {
    if (draw.flips[axis]) out = flip(out, axis);
  }
  return out;
}

Volume augment(const Volume& v, const AugmentConfig& cfg, std::uint64_t draw_index) {
  return apply_augmentation(v, draw_augmentation(cfg, draw_index));
}

Volume apply_preprocess(const Volume& v, Preprocess p, const Volume* head_mask) {
  switch (p) {
    case Preprocess::None: return v;
    case Preprocess::Lsb8: return lsb8(v);
    case Preprocess::Robust: return robust_scale(v);
    case Preprocess::Background:
      if (head_mask == nullptr) {
        throw Error(ErrorKind::Config, "background preprocessing needs a head mask");
      }
      return mask_background(v, *head_mask);
  }
  return v;
}

double input_scale(Preprocess p) {
  return p == Preprocess::Lsb8 || p == Preprocess::Robust ? 255.0 : 65535.0;
}

}  // namespace headmotion::prep
