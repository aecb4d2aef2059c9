#include "headmotion/softbin.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "headmotion/detail/text.hpp"
#include "headmotion/error.hpp"
#include "headmotion/log.hpp"

namespace headmotion::softbin {

void BinGrid::validate() const {
  if (count < 2) throw Error(ErrorKind::Config, "bin count must be at least 2");
  if (!(max > min) || !std::isfinite(min) || !std::isfinite(max)) {
    throw Error(ErrorKind::Config, "bin range must satisfy max > min");
  }
}

std::vector<double> BinGrid::centers() const {
  std::vector<double> c(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) c[static_cast<std::size_t>(i)] = center(i);
  return c;
}

std::vector<double> encode(double value, const BinGrid& grid, double sigma) {
  grid.validate();
  if (!std::isfinite(value)) throw Error(ErrorKind::NonFinite, "cannot encode a non-finite value");
  if (!(sigma > 0.0)) throw Error(ErrorKind::Config, "soft label sigma must be positive");
  if (value < grid.min || value > grid.max) {
    log_warning("encode: value " + detail::format_double(value) + " clamped into [" +
                detail::format_double(grid.min) + ", " + detail::format_double(grid.max) + "]");
    value = std::clamp(value, grid.min, grid.max);
  }
  std::vector<double> p(static_cast<std::size_t>(grid.count));
  // Subtracting the smallest exponent keeps the largest term at exp(0).
  double min_e = std::numeric_limits<double>::infinity();
  for (int i = 0; i < grid.count; ++i) {
    const double d = (value - grid.center(i)) / sigma;
    min_e = std::min(min_e, 0.5 * d * d);
  }
  double sum = 0.0;
  for (int i = 0; i < grid.count; ++i) {
    const double d = (value - grid.center(i)) / sigma;
    p[static_cast<std::size_t>(i)] = std::exp(-(0.5 * d * d - min_e));
    sum += p[static_cast<std::size_t>(i)];
  }
  for (auto& x : p) x /= sum;
  return p;
}

double decode(std::span<const double> probabilities, const BinGrid& grid) {
  grid.validate();
  if (probabilities.size() != static_cast<std::size_t>(grid.count)) {
    throw Error(ErrorKind::ShapeMismatch, "probability vector length differs from bin count");
  }
  double v = 0.0;
  for (int i = 0; i < grid.count; ++i) v += probabilities[static_cast<std::size_t>(i)] * grid.center(i);
  return v;
}

LossGrad kl_loss(std::span<const double> target, std::span<const double> pred) {
  if (target.size() != pred.size()) {
    throw Error(ErrorKind::ShapeMismatch, "target and prediction lengths differ");
  }
  LossGrad out;
  out.grad.resize(target.size());
  double target_sum = 0.0;
  for (std::size_t i = 0; i < target.size(); ++i) target_sum += target[i];
  for (std::size_t i = 0; i < target.size(); ++i) {
    const double t = target[i];
    const double p = pred[i];
    if (t > 0.0) {
      if (!(p > 0.0)) {
        throw Error(ErrorKind::InfiniteLoss, "zero predicted probability in bin " + std::to_string(i) +
                                                 " with nonzero target");
      }
      out.loss += t * (std::log(t) - std::log(p));
    }
    out.grad[i] = p * target_sum - t;
  }
  return out;
}

ScalarLossGrad mse_head_loss(double value, double predicted_value) {
  const double d = predicted_value - value;
  return {d * d, 2.0 * d};
}

std::vector<double> softmax(std::span<const double> logits) {
  std::vector<double> p(logits.begin(), logits.end());
  if (p.empty()) return p;
  const double m = *std::max_element(p.begin(), p.end());
  double sum = 0.0;
  for (auto& x : p) {
    x = std::exp(x - m);
    sum += x;
  }
  for (auto& x : p) x /= sum;
  return p;
}

}  // namespace headmotion::softbin
