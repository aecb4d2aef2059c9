#include <cmath>
#include <complex>
#include <numbers>
#include <random>

#include <gtest/gtest.h>

#include "headmotion/bandsplit.hpp"
#include "headmotion/error.hpp"

using namespace headmotion;
using namespace headmotion::bands;

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kFs = 30.0;

std::vector<double> sinusoid(double freq, double seconds, double amplitude = 1.0, double phase = 0.0) {
  std::vector<double> x;
  for (int i = 0; i < static_cast<int>(seconds * kFs); ++i) {
    x.push_back(amplitude * std::sin(2.0 * kPi * freq * i / kFs + phase));
  }
  return x;
}

// Amplitude of the `freq` component over x[begin, end) by direct DFT projection.
double dft_amplitude(const std::vector<double>& x, double freq, std::size_t begin, std::size_t end) {
  std::complex<double> acc = 0.0;
  for (std::size_t i = begin; i < end; ++i) acc += x[i] * std::polar(1.0, -2.0 * kPi * freq * i / kFs);
  return 2.0 * std::abs(acc) / static_cast<double>(end - begin);
}

std::vector<rigid::TimedValue> timed(const std::vector<double>& x) {
  std::vector<rigid::TimedValue> out;
  for (std::size_t i = 0; i < x.size(); ++i) out.push_back({i / kFs, x[i]});
  return out;
}

double mean_abs(const std::vector<double>& x) {
  double s = 0.0;
  for (double v : x) s += std::abs(v);
  return s / x.size();
}

}  // namespace

TEST(ButterworthDesign, LowpassGains) {
  const double fc[] = {0.1};
  const auto lp = design_butterworth(4, FilterKind::Lowpass, fc, kFs);
  EXPECT_EQ(lp.order(), 4);
  EXPECT_NEAR(lp.magnitude(0.0, kFs), 1.0, 1e-12);
  EXPECT_NEAR(lp.magnitude(0.1, kFs), 1.0 / std::sqrt(2.0), 1e-9);
}

TEST(ButterworthDesign, BandpassPassband) {
  const double fc[] = {0.1, 0.5};
  const auto bp = design_butterworth(4, FilterKind::Bandpass, fc, kFs);
  EXPECT_EQ(bp.order(), 8);
  EXPECT_GE(bp.magnitude(0.3, kFs), 0.99);
}

TEST(ButterworthDesign, MatchesReferenceMagnitudes) {
  // Reference magnitudes from an independent SOS Butterworth implementation.
  const std::vector<double> freqs{0.05, 0.1, 0.2, 0.3, 0.5, 1.0, 2.0};
  const std::vector<double> low{0.998053004320379, 0.707106781186548, 0.062351032865891, 0.012330305206488,
                                0.001594389380052, 9.8559185494e-05, 5.892232963e-06};
  const std::vector<double> band{0.031432511449946, 0.70710678118652, 0.999999969644221, 0.999924511192986,
                                 0.707106781186563, 0.031056889010282, 0.001590952494937};
  const std::vector<double> high{9.963853488e-05, 0.001594389380052, 0.025513148870661, 0.128229489142611,
                                 0.70710678118656, 0.998094838278045, 0.99999317134008};
  const auto f = design_band_filters(BandSpec{});
  for (std::size_t i = 0; i < freqs.size(); ++i) {
    EXPECT_NEAR(f.lowpass.magnitude(freqs[i], kFs), low[i], 1e-9) << freqs[i];
    EXPECT_NEAR(f.bandpass.magnitude(freqs[i], kFs), band[i], 1e-9) << freqs[i];
    EXPECT_NEAR(f.highpass.magnitude(freqs[i], kFs), high[i], 1e-9) << freqs[i];
  }
}

TEST(ButterworthDesign, RejectsCutoffAtNyquist) {
  const double fc[] = {15.0};
  try {
    design_butterworth(4, FilterKind::Lowpass, fc, kFs);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::FilterDesign);
  }
  const double bad_band[] = {0.5, 0.1};
  EXPECT_THROW(design_butterworth(4, FilterKind::Bandpass, bad_band, kFs), Error);
  EXPECT_THROW(design_butterworth(0, FilterKind::Lowpass, std::vector<double>{1.0}, kFs), Error);
}

TEST(ZeroPhaseFilter, ConstantThroughLowpass) {
  const double fc[] = {0.1};
  const auto lp = design_butterworth(4, FilterKind::Lowpass, fc, kFs);
  const std::vector<double> x(600, 2.5);
  for (double y : zero_phase_filter(x, lp)) EXPECT_NEAR(y, 2.5, 1e-9);
}

TEST(ZeroPhaseFilter, MatchesReferenceForwardBackward) {
  std::vector<double> x;
  for (int i = 0; i < 600; ++i) {
    const double t = i / kFs;
    x.push_back(std::sin(2 * kPi * 0.3 * t) + 0.1 * std::cos(2 * kPi * 3.0 * t));
  }
  const auto y = zero_phase_filter(x, design_band_filters(BandSpec{}).bandpass);
  // Same odd padding (24 samples) and initial conditions in the reference run.
  EXPECT_NEAR(y[0], 0.30476409471478194, 1e-9);
  EXPECT_NEAR(y[100], -0.08086544713907962, 1e-9);
  EXPECT_NEAR(y[300], 0.088455471222046, 1e-9);
  EXPECT_NEAR(y[599], -0.06956698896392502, 1e-9);
}

TEST(ZeroPhaseFilter, SinusoidAmplitudePreservedInPassband) {
  const auto x = sinusoid(0.3, 120.0);
  const auto y = zero_phase_filter(x, design_band_filters(BandSpec{}).bandpass);
  // Interior 80% trimmed to whole periods of 0.3 Hz (100 samples).
  const std::size_t begin = x.size() / 10;
  const std::size_t len = (x.size() * 8 / 10) / 100 * 100;
  const double amp = dft_amplitude(y, 0.3, begin, begin + len);
  EXPECT_GE(amp, 0.98);
  EXPECT_LE(amp, 1.02);
}

TEST(ZeroPhaseFilter, CrossCorrelationPeaksAtLagZero) {
  const auto x = sinusoid(0.3, 60.0);
  const auto y = zero_phase_filter(x, design_band_filters(BandSpec{}).bandpass);
  auto xcorr = [&](int lag) {
    double s = 0.0;
    for (std::size_t i = 150; i + 150 < x.size(); ++i) s += x[i] * y[i + lag];
    return s;
  };
  const double c0 = xcorr(0);
  for (int lag = 1; lag <= 10; ++lag) {
    EXPECT_GT(c0, xcorr(lag));
    EXPECT_GT(c0, xcorr(-lag));
  }
}

TEST(ZeroPhaseFilter, TooShortSeries) {
  const auto bp = design_band_filters(BandSpec{}).bandpass;
  try {
    zero_phase_filter(std::vector<double>(24, 1.0), bp);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::InsufficientLength);
  }
  EXPECT_NO_THROW(zero_phase_filter(std::vector<double>(25, 1.0), bp));
}

TEST(CausalFilter, ImpulseResponseOfSingleSection) {
  const FilterCoefficients f({Biquad{0.5, 0.25, 0.0, -0.5, 0.0}});
  const auto y = causal_filter(std::vector<double>{1.0, 0.0, 0.0, 0.0}, f);
  // y[n] = 0.5 x[n] + 0.25 x[n-1] + 0.5 y[n-1]
  EXPECT_DOUBLE_EQ(y[0], 0.5);
  EXPECT_DOUBLE_EQ(y[1], 0.5);
  EXPECT_DOUBLE_EQ(y[2], 0.25);
  EXPECT_DOUBLE_EQ(y[3], 0.125);
}

TEST(FilterCoefficients, UnstableSectionRejected) {
  EXPECT_THROW(FilterCoefficients({Biquad{1.0, 0.0, 0.0, 0.0, 1.2}}), Error);
}

TEST(BandTargets, ConstantRate) {
  const std::vector<double> x(1800, 0.4);
  const auto b = band_targets(timed(x), BandSpec{}, rigid::SequenceWindow(0.0, 60.0));
  EXPECT_NEAR(b.drift.value, 0.4, 0.05 * 0.4);
  EXPECT_LE(b.breathing.value, 0.05 * 0.4);
  EXPECT_LE(b.noisy.value, 0.05 * 0.4);
}

TEST(BandTargets, BreathingComponent) {
  const auto x = sinusoid(0.25, 120.0, 0.5);
  const double solo = mean_abs(x);
  const auto b = band_targets(timed(x), BandSpec{}, rigid::SequenceWindow(0.0, 120.0));
  EXPECT_GE(b.breathing.value, 0.85 * solo);
  EXPECT_LE(b.drift.value, 0.15 * solo);
  EXPECT_LE(b.noisy.value, 0.15 * solo);
}

TEST(BandTargets, JitterComponent) {
  const auto x = sinusoid(2.0, 60.0, 0.2);
  const double solo = mean_abs(x);
  const auto b = band_targets(timed(x), BandSpec{}, rigid::SequenceWindow(0.0, 60.0));
  EXPECT_GE(b.noisy.value, 0.85 * solo);
  EXPECT_LE(b.drift.value, 0.15 * solo);
  EXPECT_LE(b.breathing.value, 0.15 * solo);
}

TEST(BandTargets, IrregularSamplingRejected) {
  auto s = timed(std::vector<double>(300, 1.0));
  s[100].time += 0.01;
  try {
    band_targets(s, BandSpec{}, rigid::SequenceWindow(0.0, 10.0));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::IrregularSampling);
  }
}

TEST(TrajectoryBandTargets, SeparatesDriftAndBreathing) {
  auto make = [](double drift, double amp) {
    rigid::Trajectory t;
    for (int i = 0; i <= 1800; ++i) {
      const double time = i / kFs;
      const Eigen::Vector3d p(drift * time, 0.0, amp * std::sin(2.0 * kPi * 0.25 * time));
      t.push_back({time, rigid::RigidTransform::translation(p)});
    }
    return t;
  };
  const rigid::SequenceWindow w(0.0, 60.0);
  const double drift_solo = rigid::sequence_motion_score(make(0.02, 0.0), w).value;
  const double breath_solo = rigid::sequence_motion_score(make(0.0, 1.0), w).value;
  const auto b = trajectory_band_targets(make(0.02, 1.0), BandSpec{}, w);
  EXPECT_GE(b.drift.value, 0.85 * drift_solo);
  EXPECT_GE(b.breathing.value, 0.85 * breath_solo);
  // Leakage is measured against the leaking component's own score.
  const auto d = trajectory_band_targets(make(0.02, 0.0), BandSpec{}, w);
  const auto r = trajectory_band_targets(make(0.0, 1.0), BandSpec{}, w);
  EXPECT_LE(d.breathing.value + d.noisy.value, 0.15 * drift_solo);
  EXPECT_LE(r.drift.value, 0.15 * breath_solo);
  EXPECT_LE(r.noisy.value, 0.15 * breath_solo);
}

TEST(TrajectoryBandTargets, StaticTrajectoryIsZero) {
  rigid::Trajectory t;
  for (int i = 0; i < 300; ++i) t.push_back({i / kFs, rigid::RigidTransform::translation({1, 2, 3})});
  const auto b = trajectory_band_targets(t, BandSpec{}, rigid::SequenceWindow(0.0, 10.0));
  EXPECT_NEAR(b.drift.value, 0.0, 1e-12);
  EXPECT_NEAR(b.breathing.value, 0.0, 1e-12);
  EXPECT_NEAR(b.noisy.value, 0.0, 1e-12);
}

TEST(BandSpec, Validation) {
  BandSpec s;
  s.low_cut = 0.6;
  EXPECT_THROW(s.validate(), Error);
  s = BandSpec{};
  s.high_cut = 15.0;
  EXPECT_THROW(s.validate(), Error);
}
