#pragma once

#include <span>
#include <vector>

namespace headmotion::softbin {

/// `count` equal-width prototype bins over [min, max] mm/s.
struct BinGrid {
  double min = 0.0;
  double max = 3.12;
  int count = 40;

  void validate() const;
  double width() const { return (max - min) / count; }
  double center(int i) const { return min + (i + 0.5) * width(); }
  std::vector<double> centers() const;
};

/// Gaussian soft label over the bin centers. Values outside [min, max] are clamped first
/// (with a warning). Default sigma is one bin width.
std::vector<double> encode(double value, const BinGrid& grid, double sigma);
inline std::vector<double> encode(double value, const BinGrid& grid) {
  return encode(value, grid, grid.width());
}

/// Expected bin center under `probabilities`.
double decode(std::span<const double> probabilities, const BinGrid& grid);

struct LossGrad {
  double loss = 0.0;
  std::vector<double> grad;
};

/// KL(target || pred), with the gradient taken with respect to the pre-softmax logits.
/// Throws InfiniteLoss when pred is zero where target is not.
LossGrad kl_loss(std::span<const double> target, std::span<const double> pred);

struct ScalarLossGrad {
  double loss = 0.0;
  double grad = 0.0;
};

/// (predicted - value)^2 and its derivative in the prediction.
ScalarLossGrad mse_head_loss(double value, double predicted_value);

/// Numerically stable softmax.
std::vector<double> softmax(std::span<const double> logits);

}  // namespace headmotion::softbin
