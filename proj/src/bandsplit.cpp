#include "headmotion/bandsplit.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "headmotion/error.hpp"

namespace headmotion::bands {

using cplx = std::complex<double>;

void BandSpec::validate() const {
  if (order < 1) throw Error(ErrorKind::FilterDesign, "filter order must be positive");
  if (!(sample_rate > 0.0)) throw Error(ErrorKind::FilterDesign, "sample rate must be positive");
  if (!(low_cut > 0.0 && low_cut < high_cut && high_cut < sample_rate / 2.0)) {
    std::ostringstream msg;
    msg << "band cutoffs must satisfy 0 < low (" << low_cut << ") < high (" << high_cut
        << ") < Nyquist (" << sample_rate / 2.0 << ")";
    throw Error(ErrorKind::FilterDesign, msg.str());
  }
}

FilterCoefficients::FilterCoefficients(std::vector<Biquad> sections)
    : sections_(std::move(sections)) {
  for (std::size_t i = 0; i < sections_.size(); ++i) {
    const auto& s = sections_[i];
    // Schur-Cohn conditions for 1 + a1 z^-1 + a2 z^-2.
    if (!(std::abs(s.a2) < 1.0 && std::abs(s.a1) < 1.0 + s.a2)) {
      throw Error(ErrorKind::FilterDesign, "section " + std::to_string(i) + " is unstable");
    }
  }
}

std::complex<double> FilterCoefficients::response(double freq_hz, double sample_rate) const {
  const double w = 2.0 * std::numbers::pi * freq_hz / sample_rate;
  const cplx zinv = std::polar(1.0, -w);
  const cplx zinv2 = zinv * zinv;
  cplx h{1.0, 0.0};
  for (const auto& s : sections_) {
    h *= (s.b0 + s.b1 * zinv + s.b2 * zinv2) / (1.0 + s.a1 * zinv + s.a2 * zinv2);
  }
  return h;
}

namespace {

double prewarp(double freq_hz, double fs) { return 2.0 * fs * std::tan(std::numbers::pi * freq_hz / fs); }

cplx bilinear(cplx s, double fs) { return (2.0 * fs + s) / (2.0 * fs - s); }

std::vector<cplx> prototype_poles(int order) {
  std::vector<cplx> poles;
  for (int k = 0; k < order; ++k) {
    const double theta = std::numbers::pi * (2.0 * k + order + 1) / (2.0 * order);
    poles.push_back(std::polar(1.0, theta));
  }
  return poles;
}

// Groups digital poles into denominator sections: conjugate pairs first, then real poles
// two at a time, and a possible single real pole last.
std::vector<std::pair<double, double>> pole_sections(const std::vector<cplx>& poles) {
  constexpr double kImagTol = 1e-12;
  std::vector<std::pair<double, double>> sections;
  std::vector<double> reals;
  for (const auto& p : poles) {
    if (p.imag() > kImagTol) {
      sections.emplace_back(-2.0 * p.real(), std::norm(p));
    } else if (std::abs(p.imag()) <= kImagTol) {
      reals.push_back(p.real());
    }
  }
  std::sort(reals.begin(), reals.end());
  std::size_t i = 0;
  for (; i + 1 < reals.size(); i += 2) {
    sections.emplace_back(-(reals[i] + reals[i + 1]), reals[i] * reals[i + 1]);
  }
  if (i < reals.size()) sections.emplace_back(-reals[i], 0.0);
  return sections;
}

}  // namespace

FilterCoefficients design_butterworth(int order, FilterKind kind, std::span<const double> cutoffs,
                                      double sample_rate) {
  if (order < 1) throw Error(ErrorKind::FilterDesign, "filter order must be positive");
  if (!(sample_rate > 0.0)) throw Error(ErrorKind::FilterDesign, "sample rate must be positive");
  const double nyquist = sample_rate / 2.0;
  const std::size_t expected = kind == FilterKind::Bandpass ? 2 : 1;
  if (cutoffs.size() != expected) {
    throw Error(ErrorKind::FilterDesign,
                "expected " + std::to_string(expected) + " cutoff frequencies");
  }
  for (double c : cutoffs) {
    if (!(c > 0.0 && c < nyquist)) {
      std::ostringstream msg;
      msg << "cutoff " << c << " Hz must lie in (0, Nyquist = " << nyquist << " Hz)";
      throw Error(ErrorKind::FilterDesign, msg.str());
    }
  }
  if (kind == FilterKind::Bandpass && !(cutoffs[0] < cutoffs[1])) {
    throw Error(ErrorKind::FilterDesign, "bandpass cutoffs must be increasing");
  }

  const auto proto = prototype_poles(order);
  std::vector<cplx> analog;
  double reference_hz = 0.0;
  switch (kind) {
    case FilterKind::Lowpass: {
      const double wc = prewarp(cutoffs[0], sample_rate);
      for (const auto& p : proto) analog.push_back(wc * p);
      reference_hz = 0.0;
      break;
    }
    case FilterKind::Highpass: {
      const double wc = prewarp(cutoffs[0], sample_rate);
      for (const auto& p : proto) analog.push_back(wc / p);
      reference_hz = nyquist;
      break;
    }
    case FilterKind::Bandpass: {
      const double w1 = prewarp(cutoffs[0], sample_rate);
      const double w2 = prewarp(cutoffs[1], sample_rate);
      const double w0 = std::sqrt(w1 * w2);
      const double bw = w2 - w1;
      for (const auto& p : proto) {
        const cplx pb = p * bw;
        const cplx root = std::sqrt(pb * pb - 4.0 * w0 * w0);
        analog.push_back((pb + root) / 2.0);
        analog.push_back((pb - root) / 2.0);
      }
      reference_hz = sample_rate / std::numbers::pi * std::atan(w0 / (2.0 * sample_rate));
      break;
    }
  }

  std::vector<cplx> digital;
  digital.reserve(analog.size());
  for (const auto& s : analog) digital.push_back(bilinear(s, sample_rate));

  std::vector<Biquad> sections;
  for (const auto& [a1, a2] : pole_sections(digital)) {
    Biquad s;
    s.a1 = a1;
    s.a2 = a2;
    const bool single = a2 == 0.0;
    switch (kind) {
      case FilterKind::Lowpass:
        if (single) { s.b0 = 1.0; s.b1 = 1.0; s.b2 = 0.0; }
        else { s.b0 = 1.0; s.b1 = 2.0; s.b2 = 1.0; }
        break;
      case FilterKind::Highpass:
        if (single) { s.b0 = 1.0; s.b1 = -1.0; s.b2 = 0.0; }
        else { s.b0 = 1.0; s.b1 = -2.0; s.b2 = 1.0; }
        break;
      case FilterKind::Bandpass:
        s.b0 = 1.0; s.b1 = 0.0; s.b2 = -1.0;
        break;
    }
    sections.push_back(s);
  }

  FilterCoefficients unnormalized(sections);
  const double gain = 1.0 / unnormalized.magnitude(reference_hz, sample_rate);
  sections.front().b0 *= gain;
  sections.front().b1 *= gain;
  sections.front().b2 *= gain;
  return FilterCoefficients(std::move(sections));
}

namespace {

struct SectionState {
  double z1 = 0.0;
  double z2 = 0.0;
};

// Steady-state states of the cascade for a unit constant input.
std::vector<SectionState> steady_state(const FilterCoefficients& coeffs) {
  std::vector<SectionState> zi;
  double level = 1.0;
  for (const auto& s : coeffs.sections()) {
    const double g = (s.b0 + s.b1 + s.b2) / (1.0 + s.a1 + s.a2);
    const double y = g * level;
    zi.push_back({y - s.b0 * level, s.b2 * level - s.a2 * y});
    level = y;
  }
  return zi;
}

void run_cascade(std::vector<double>& x, const FilterCoefficients& coeffs,
                 std::vector<SectionState> state) {
  const auto& sections = coeffs.sections();
  for (std::size_t k = 0; k < sections.size(); ++k) {
    const auto& s = sections[k];
    double z1 = state[k].z1;
    double z2 = state[k].z2;
    for (double& v : x) {
      const double in = v;
      const double out = s.b0 * in + z1;
      z1 = s.b1 * in - s.a1 * out + z2;
      z2 = s.b2 * in - s.a2 * out;
      v = out;
    }
  }
}

std::vector<SectionState> scaled(std::vector<SectionState> zi, double factor) {
  for (auto& z : zi) {
    z.z1 *= factor;
    z.z2 *= factor;
  }
  return zi;
}

}  // namespace

std::vector<double> causal_filter(std::span<const double> series, const FilterCoefficients& coeffs) {
  std::vector<double> out(series.begin(), series.end());
  run_cascade(out, coeffs, std::vector<SectionState>(coeffs.sections().size()));
  return out;
}

std::vector<double> zero_phase_filter(std::span<const double> series,
                                      const FilterCoefficients& coeffs) {
  const std::size_t pad = 3 * static_cast<std::size_t>(coeffs.order());
  const std::size_t n = series.size();
  if (n <= pad) {
    throw Error(ErrorKind::InsufficientLength,
                "series of length " + std::to_string(n) + " needs more than " +
                    std::to_string(pad) + " samples");
  }
  std::vector<double> ext;
  ext.reserve(n + 2 * pad);
  for (std::size_t i = pad; i >= 1; --i) ext.push_back(2.0 * series[0] - series[i]);
  ext.insert(ext.end(), series.begin(), series.end());
  for (std::size_t i = 1; i <= pad; ++i) ext.push_back(2.0 * series[n - 1] - series[n - 1 - i]);

  const auto zi = steady_state(coeffs);
  run_cascade(ext, coeffs, scaled(zi, ext.front()));
  std::reverse(ext.begin(), ext.end());
  run_cascade(ext, coeffs, scaled(zi, ext.front()));
  std::reverse(ext.begin(), ext.end());
  return {ext.begin() + static_cast<std::ptrdiff_t>(pad),
          ext.begin() + static_cast<std::ptrdiff_t>(pad + n)};
}

BandFilters design_band_filters(const BandSpec& spec) {
  spec.validate();
  const double low[] = {spec.low_cut};
  const double band[] = {spec.low_cut, spec.high_cut};
  const double high[] = {spec.high_cut};
  return {design_butterworth(spec.order, FilterKind::Lowpass, low, spec.sample_rate),
          design_butterworth(spec.order, FilterKind::Bandpass, band, spec.sample_rate),
          design_butterworth(spec.order, FilterKind::Highpass, high, spec.sample_rate)};
}

void check_uniform_sampling(std::span<const double> times, double sample_rate) {
  const double nominal = 1.0 / sample_rate;
  for (std::size_t i = 1; i < times.size(); ++i) {
    const double dt = times[i] - times[i - 1];
    if (std::abs(dt - nominal) > 0.01 * nominal) {
      std::ostringstream msg;
      msg << "interval " << dt << " s before sample " << i << " deviates more than 1% from "
          << nominal << " s";
      throw Error(ErrorKind::IrregularSampling, msg.str());
    }
  }
}

namespace {

double windowed_mean(std::span<const double> times, std::span<const double> values,
                     const rigid::SequenceWindow& w) {
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < times.size(); ++i) {
    const double t = times[i] - w.clock_offset;
    if (t >= w.start && t <= w.end) {
      sum += values[i];
      ++count;
    }
  }
  if (count == 0) throw Error(ErrorKind::EmptyWindow, "no samples inside the sequence window");
  return sum / static_cast<double>(count);
}

}  // namespace

MotionBands band_targets(std::span<const rigid::TimedValue> series, const BandSpec& spec,
                         const rigid::SequenceWindow& w) {
  const auto filters = design_band_filters(spec);
  std::vector<double> times;
  std::vector<double> values;
  for (const auto& s : series) {
    times.push_back(s.time);
    values.push_back(s.value);
  }
  check_uniform_sampling(times, spec.sample_rate);

  auto score = [&](const FilterCoefficients& f) {
    auto filtered = zero_phase_filter(values, f);
    for (double& v : filtered) v = std::abs(v);
    return rigid::MotionScore{windowed_mean(times, filtered, w)};
  };
  return {score(filters.lowpass), score(filters.bandpass), score(filters.highpass)};
}

MotionBands trajectory_band_targets(const rigid::Trajectory& traj, const BandSpec& spec,
                                    const rigid::SequenceWindow& w,
                                    const rigid::JenkinsonParams& p) {
  const auto filters = design_band_filters(spec);
  const auto blocks = rigid::framewise_difference_blocks(traj);
  std::vector<double> times;
  times.reserve(traj.size());
  for (const auto& s : traj.samples()) times.push_back(s.time);
  check_uniform_sampling(times, spec.sample_rate);
  times.erase(times.begin());

  const std::size_t n = blocks.size();
  std::vector<std::vector<double>> components(12, std::vector<double>(n));
  for (std::size_t i = 0; i < n; ++i) {
    for (int c = 0; c < 12; ++c) components[c][i] = blocks[i].block(c / 4, c % 4);
  }

  auto score = [&](const FilterCoefficients& f) {
    std::vector<std::vector<double>> filtered;
    filtered.reserve(12);
    for (const auto& comp : components) filtered.push_back(zero_phase_filter(comp, f));
    std::vector<double> rates(n);
    Eigen::Matrix<double, 3, 4> block;
    for (std::size_t i = 0; i < n; ++i) {
      for (int c = 0; c < 12; ++c) block(c / 4, c % 4) = filtered[c][i];
      rates[i] = rigid::jenkinson_norm(block, p);
    }
    return rigid::MotionScore{windowed_mean(times, rates, w)};
  };
  return {score(filters.lowpass), score(filters.bandpass), score(filters.highpass)};
}

}  // namespace headmotion::bands
