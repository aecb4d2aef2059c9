#pragma once

#include <complex>
#include <span>
#include <vector>

#include "headmotion/rigid_motion.hpp"

namespace headmotion::bands {

enum class FilterKind { Lowpass, Highpass, Bandpass };

struct BandSpec {
  double low_cut = 0.1;   // Hz
  double high_cut = 0.5;  // Hz
  int order = 4;
  double sample_rate = 30.0;  // Hz

  /// Throws FilterDesign unless 0 < low_cut < high_cut < sample_rate / 2 and order >= 1.
  void validate() const;
};

/// One biquad: H(z) = (b0 + b1 z^-1 + b2 z^-2) / (1 + a1 z^-1 + a2 z^-2).
struct Biquad {
  double b0 = 1.0, b1 = 0.0, b2 = 0.0;
  double a1 = 0.0, a2 = 0.0;
};

/// Cascade of second-order sections. All poles lie strictly inside the unit circle.
class FilterCoefficients {
 public:
  FilterCoefficients() = default;
  explicit FilterCoefficients(std::vector<Biquad> sections);

  const std::vector<Biquad>& sections() const { return sections_; }
  /// Digital filter order (2 per section).
  int order() const { return 2 * static_cast<int>(sections_.size()); }

  /// Complex frequency response at `freq_hz`.
  std::complex<double> response(double freq_hz, double sample_rate) const;
  double magnitude(double freq_hz, double sample_rate) const {
    return std::abs(response(freq_hz, sample_rate));
  }

 private:
  std::vector<Biquad> sections_;
};

/// Digital Butterworth design (analog prototype, pre-warped bilinear transform).
/// `cutoffs` holds one frequency for low/highpass, two for bandpass. A bandpass of
/// prototype order N yields a digital filter of order 2N.
FilterCoefficients design_butterworth(int order, FilterKind kind, std::span<const double> cutoffs,
                                      double sample_rate);

/// Forward-backward (zero-phase) filtering with odd reflection padding of 3 x filter order
/// samples at each end and steady-state section initial conditions.
std::vector<double> zero_phase_filter(std::span<const double> series,
                                      const FilterCoefficients& coeffs);

/// Single causal pass with zero initial state.
std::vector<double> causal_filter(std::span<const double> series, const FilterCoefficients& coeffs);

struct MotionBands {
  rigid::MotionScore drift;
  rigid::MotionScore breathing;
  rigid::MotionScore noisy;
};

struct BandFilters {
  FilterCoefficients lowpass;
  FilterCoefficients bandpass;
  FilterCoefficients highpass;
};

BandFilters design_band_filters(const BandSpec& spec);

/// Splits a scalar rate series into drift / breathing / noisy bands and aggregates each
/// windowed band as its mean absolute value.
MotionBands band_targets(std::span<const rigid::TimedValue> series, const BandSpec& spec,
                         const rigid::SequenceWindow& w);

/// Band targets of a pose trajectory: the per-interval difference blocks [A | t] / dt are
/// filtered component-wise, the Jenkinson norm of every filtered block gives a band rate,
/// and each band score is the windowed mean of that rate. Unfiltered, this reproduces
/// framewise_differences exactly.
MotionBands trajectory_band_targets(const rigid::Trajectory& traj, const BandSpec& spec,
                                    const rigid::SequenceWindow& w,
                                    const rigid::JenkinsonParams& p = {});

/// Checks timestamps against the nominal rate; throws IrregularSampling beyond 1% jitter.
void check_uniform_sampling(std::span<const double> times, double sample_rate);

}  // namespace headmotion::bands
