#include "headmotion/simulate.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdio>
#include <exception>
#include <mutex>
#include <numbers>
#include <random>

#include <fftw3.h>

#include "headmotion/bandsplit.hpp"
#include "headmotion/error.hpp"
#include "headmotion/volume_io.hpp"

namespace headmotion::sim {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kDeg = kPi / 180.0;

std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
  std::uint64_t x = a + 0x9E3779B97F4A7C15ULL * (b + 1);
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

Eigen::Vector3d unit_or_zero(const Eigen::Vector3d& v) {
  const double n = v.norm();
  return n > 0.0 ? Eigen::Vector3d(v / n) : Eigen::Vector3d::Zero();
}

// Phantom layout in coordinates normalized by the grid extent (center at 0).
struct Ellipsoid {
  Eigen::Vector3d center;
  Eigen::Vector3d semi;
  double value = 0.0;

  double level(const Eigen::Vector3d& u) const {
    return ((u - center).array() / semi.array()).square().sum();
  }
};

struct Wave {
  Eigen::Vector3d k;
  double phase = 0.0;
  double amplitude = 0.0;
};

struct PhantomLayout {
  std::vector<Ellipsoid> shells;  // outermost first; later shells overwrite earlier ones
  std::vector<Wave> texture;
  double noise_sd = 12.0;
  std::uint64_t noise_seed = 0;
};

PhantomLayout draw_layout(std::uint64_t seed) {
  std::mt19937_64 rng(mix(seed, 0x7068616e));
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  PhantomLayout L;
  const Eigen::Vector3d shift(0.02 * u(rng), 0.02 * u(rng), 0.02 * u(rng));
  const Eigen::Vector3d head(0.42 * (1.0 + 0.05 * u(rng)), 0.46 * (1.0 + 0.05 * u(rng)),
                             0.40 * (1.0 + 0.05 * u(rng)));
  L.shells.push_back({shift, head, 650.0 + 50.0 * u(rng)});
  L.shells.push_back({shift, head * 0.86, 880.0 + 60.0 * u(rng)});
  L.shells.push_back({shift + Eigen::Vector3d(0.0, 0.02 * u(rng), 0.0), head * 0.55, 760.0 + 40.0 * u(rng)});
  const double vy = 0.05 * u(rng);
  for (double side : {-1.0, 1.0}) {
    L.shells.push_back({shift + Eigen::Vector3d(side * 0.09, vy, 0.02),
                        Eigen::Vector3d(0.05, 0.14, 0.08) * (1.0 + 0.1 * u(rng)), 320.0 + 30.0 * u(rng)});
  }
  for (int i = 0; i < 4; ++i) {
    Wave w;
    w.k = Eigen::Vector3d(u(rng), u(rng), u(rng)) * 2.0 * kPi * 2.0;
    w.phase = kPi * u(rng);
    w.amplitude = 10.0 + 5.0 * u(rng);
    L.texture.push_back(w);
  }
  L.noise_seed = mix(seed, 0x6e6f6973);
  return L;
}

Eigen::Vector3d normalized_coord(const std::array<int, 3>& dims, int x, int y, int z) {
  return {(x - (dims[0] - 1) / 2.0) / dims[0], (y - (dims[1] - 1) / 2.0) / dims[1],
          (z - (dims[2] - 1) / 2.0) / dims[2]};
}

void check_dims(const std::array<int, 3>& dims) {
  for (int d : dims) {
    if (d < 16) throw Error(ErrorKind::Config, "phantom dims must be at least 16 per axis");
  }
}

// Signed frequency of DFT index i on an axis of length n.
inline int signed_freq(int i, int n) { return i < n - n / 2 ? i : i - n; }

struct FftwBuffer {
  fftw_complex* data = nullptr;
  explicit FftwBuffer(std::size_t n) : data(fftw_alloc_complex(n)) {
    if (!data) throw std::bad_alloc();
  }
  ~FftwBuffer() { fftw_free(data); }
  FftwBuffer(const FftwBuffer&) = delete;
  FftwBuffer& operator=(const FftwBuffer&) = delete;
  std::complex<double>* c() { return reinterpret_cast<std::complex<double>*>(data); }
};

// Planner calls are not thread safe; execution on distinct buffers is.
std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

void fft3(FftwBuffer& buf, const std::array<int, 3>& dims, int sign) {
  fftw_plan plan;
  {
    std::lock_guard lock(planner_mutex());
    plan = fftw_plan_dft_3d(dims[2], dims[1], dims[0], buf.data, buf.data, sign, FFTW_ESTIMATE);
  }
  fftw_execute(plan);
  std::lock_guard lock(planner_mutex());
  fftw_destroy_plan(plan);
}

}  // namespace

void TrajectorySpec::validate() const {
  if (!(duration > 0.0)) throw Error(ErrorKind::Config, "trajectory duration must be positive");
  if (!(breathing_frequency >= 0.1 && breathing_frequency <= 0.5)) {
    throw Error(ErrorKind::Config, "breathing frequency must lie in [0.1, 0.5] Hz");
  }
  if (!(rate > 2.0 * breathing_frequency)) {
    throw Error(ErrorKind::Config, "sample rate must exceed twice the breathing frequency");
  }
  if (jitter_sd < 0.0 || rotation_jitter_sd < 0.0) {
    throw Error(ErrorKind::Config, "jitter standard deviations must be nonnegative");
  }
  if (!drift_rate.allFinite() || !rotation_drift_rate.allFinite() || !std::isfinite(breathing_amplitude) ||
      !std::isfinite(rotation_breathing_amplitude)) {
    throw Error(ErrorKind::Config, "trajectory amplitudes must be finite");
  }
  if (breathing_amplitude != 0.0 && breathing_axis.norm() == 0.0) {
    throw Error(ErrorKind::Config, "breathing axis must be nonzero");
  }
  if (rotation_breathing_amplitude != 0.0 && rotation_breathing_axis.norm() == 0.0) {
    throw Error(ErrorKind::Config, "rotation breathing axis must be nonzero");
  }
}

TrajectorySpec TrajectorySpec::scaled(double factor) const {
  TrajectorySpec s = *this;
  s.drift_rate *= factor;
  s.breathing_amplitude *= factor;
  s.jitter_sd *= factor;
  s.rotation_drift_rate *= factor;
  s.rotation_breathing_amplitude *= factor;
  s.rotation_jitter_sd *= factor;
  return s;
}

ReadoutSchedule ReadoutSchedule::uniform(int segments, double duration) {
  if (segments < 1) throw Error(ErrorKind::ScheduleMismatch, "segment count must be positive");
  ReadoutSchedule s;
  s.segments = segments;
  for (int i = 0; i < segments; ++i) s.times.push_back((i + 0.5) * duration / segments);
  return s;
}

void ReadoutSchedule::validate() const {
  if (segments < 1) throw Error(ErrorKind::ScheduleMismatch, "segment count must be positive");
  if (static_cast<int>(times.size()) != segments) {
    throw Error(ErrorKind::ScheduleMismatch, "schedule needs one timestamp per segment");
  }
}

Volume make_phantom(std::array<int, 3> dims, std::array<double, 3> voxel_size, std::uint64_t seed) {
  check_dims(dims);
  const PhantomLayout L = draw_layout(seed);
  Volume v(dims, voxel_size, Modality::Synthetic);
  std::mt19937_64 rng(L.noise_seed);
  std::normal_distribution<double> noise(0.0, L.noise_sd);
  for (int z = 0; z < dims[2]; ++z) {
    for (int y = 0; y < dims[1]; ++y) {
      for (int x = 0; x < dims[0]; ++x) {
        const Eigen::Vector3d u = normalized_coord(dims, x, y, z);
        double value = 0.0;
        for (const auto& e : L.shells) {
          if (e.level(u) <= 1.0) value = e.value;
        }
        if (value == 0.0) continue;
        for (const auto& w : L.texture) value += w.amplitude * std::cos(w.k.dot(u) + w.phase);
        value += noise(rng);
        v.at(x, y, z) = static_cast<std::uint16_t>(std::clamp(std::lround(value), 1L, 65535L));
      }
    }
  }
  return v;
}

Volume phantom_head_mask(std::array<int, 3> dims, std::array<double, 3> voxel_size,
                         std::uint64_t seed, int margin) {
  check_dims(dims);
  const PhantomLayout L = draw_layout(seed);
  Volume m(dims, voxel_size, Modality::Synthetic);
  for (int z = 0; z < dims[2]; ++z) {
    for (int y = 0; y < dims[1]; ++y) {
      for (int x = 0; x < dims[0]; ++x) {
        if (L.shells.front().level(normalized_coord(dims, x, y, z)) <= 1.0) m.at(x, y, z) = 1;
      }
    }
  }
  for (int it = 0; it < margin; ++it) {
    Volume grown = m;
    for (int z = 0; z < dims[2]; ++z) {
      for (int y = 0; y < dims[1]; ++y) {
        for (int x = 0; x < dims[0]; ++x) {
          if (!m.at(x, y, z)) continue;
          const int nb[6][3] = {{x - 1, y, z}, {x + 1, y, z}, {x, y - 1, z},
                                {x, y + 1, z}, {x, y, z - 1}, {x, y, z + 1}};
          for (const auto& p : nb) {
            if (p[0] >= 0 && p[1] >= 0 && p[2] >= 0 && p[0] < dims[0] && p[1] < dims[1] && p[2] < dims[2]) {
              grown.at(p[0], p[1], p[2]) = 1;
            }
          }
        }
      }
    }
    m = std::move(grown);
  }
  return m;
}

rigid::Trajectory synth_trajectory(const TrajectorySpec& spec) {
  spec.validate();
  const auto n = static_cast<std::size_t>(std::floor(spec.duration * spec.rate + 1e-9)) + 1;
  const Eigen::Vector3d baxis = unit_or_zero(spec.breathing_axis);
  const Eigen::Vector3d raxis = unit_or_zero(spec.rotation_breathing_axis);
  std::mt19937_64 rng(mix(spec.seed, 0x74726a));
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::vector<rigid::PoseSample> samples;
  samples.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / spec.rate;
    const double wave = std::sin(2.0 * kPi * spec.breathing_frequency * t);
    Eigen::Vector3d jt, jr;
    for (int k = 0; k < 3; ++k) jt[k] = gauss(rng);
    for (int k = 0; k < 3; ++k) jr[k] = gauss(rng);
    const Eigen::Vector3d trans =
        spec.drift_rate * t + spec.breathing_amplitude * wave * baxis + spec.jitter_sd * jt;
    const Eigen::Vector3d rot = (spec.rotation_drift_rate * t +
                                 spec.rotation_breathing_amplitude * wave * raxis +
                                 spec.rotation_jitter_sd * jr) *
                                kDeg;
    samples.push_back({t, rigid::RigidTransform::from_rotation_vector(rot, trans)});
  }
  return rigid::Trajectory(std::move(samples));
}

const rigid::RigidTransform& pose_at(const rigid::Trajectory& traj, double time) {
  if (traj.empty()) throw Error(ErrorKind::ScheduleMismatch, "empty trajectory");
  const auto& s = traj.samples();
  auto it = std::lower_bound(s.begin(), s.end(), time,
                             [](const rigid::PoseSample& p, double t) { return p.time < t; });
  if (it == s.end()) return s.back().pose;
  if (it != s.begin() && time - std::prev(it)->time <= it->time - time) --it;
  return it->pose;
}

Volume corrupt_kspace(const Volume& v, const rigid::Trajectory& traj, const ReadoutSchedule& sched) {
  sched.validate();
  if (traj.empty()) throw Error(ErrorKind::ScheduleMismatch, "empty trajectory");
  const double t0 = traj.samples().front().time;
  const double t1 = traj.samples().back().time;
  for (double t : sched.times) {
    if (!(t >= t0 && t <= t1)) {
      throw Error(ErrorKind::ScheduleMismatch, "segment time " + std::to_string(t) +
                                                   " s lies outside the trajectory");
    }
  }
  const auto& dims = v.dims();
  if (sched.segments > dims[1]) {
    throw Error(ErrorKind::ScheduleMismatch, "more segments than phase-encode lines");
  }
  const auto& vox = v.voxel_size();
  const std::size_t total = v.size();

  // Spectrum of the volume, re-phased so that rotations pivot about the grid center.
  FftwBuffer spec(total);
  for (std::size_t i = 0; i < total; ++i) spec.c()[i] = v.data()[i];
  fft3(spec, dims, FFTW_FORWARD);
  std::array<std::vector<std::complex<double>>, 3> center_phase;
  for (int a = 0; a < 3; ++a) {
    const double c = (dims[a] - 1) / 2.0;
    for (int i = 0; i < dims[a]; ++i) {
      center_phase[a].push_back(std::polar(1.0, 2.0 * kPi * signed_freq(i, dims[a]) * c / dims[a]));
    }
  }
  std::vector<std::complex<double>> centered(total);
  for (int z = 0; z < dims[2]; ++z) {
    for (int y = 0; y < dims[1]; ++y) {
      for (int x = 0; x < dims[0]; ++x) {
        const std::size_t i = v.index(x, y, z);
        centered[i] = spec.c()[i] * center_phase[0][x] * center_phase[1][y] * center_phase[2][z];
      }
    }
  }
  // Trilinear lookup of the centered spectrum at signed fractional frequencies; zero outside.
  auto lookup = [&](const Eigen::Vector3d& q) {
    int base[3];
    double frac[3];
    for (int a = 0; a < 3; ++a) {
      const double f = std::floor(q[a]);
      base[a] = static_cast<int>(f);
      frac[a] = q[a] - f;
    }
    std::complex<double> acc = 0.0;
    for (int corner = 0; corner < 8; ++corner) {
      double w = 1.0;
      int idx[3];
      bool inside = true;
      for (int a = 0; a < 3; ++a) {
        const int bit = (corner >> a) & 1;
        w *= bit ? frac[a] : 1.0 - frac[a];
        const int k = base[a] + bit;
        if (k < -(dims[a] / 2) || k > dims[a] - 1 - dims[a] / 2) inside = false;
        idx[a] = k < 0 ? k + dims[a] : k;
      }
      if (!inside || w == 0.0) continue;
      acc += w * centered[v.index(idx[0], idx[1], idx[2])];
    }
    return acc;
  };

  // Segment of each phase-encode line, in signed frequency order.
  const int ny = dims[1];
  std::vector<int> segment_of(ny);
  for (int y = 0; y < ny; ++y) {
    const int order = signed_freq(y, ny) + ny / 2;
    segment_of[y] = static_cast<int>(static_cast<long long>(order) * sched.segments / ny);
  }
  std::vector<Eigen::Matrix3d> rot_t(sched.segments);
  std::vector<Eigen::Vector3d> shift(sched.segments);
  std::vector<bool> identity(sched.segments);
  for (int s = 0; s < sched.segments; ++s) {
    const auto& pose = pose_at(traj, sched.times[s]);
    rot_t[s] = pose.rotation().transpose();
    shift[s] = pose.translation();
    identity[s] = pose.matrix() == Eigen::Matrix4d::Identity();
  }

  for (int z = 0; z < dims[2]; ++z) {
    for (int y = 0; y < dims[1]; ++y) {
      const int s = segment_of[y];
      for (int x = 0; x < dims[0]; ++x) {
        const std::size_t i = v.index(x, y, z);
        if (identity[s]) continue;  // spectrum sample already exact
        const Eigen::Vector3d k(signed_freq(x, dims[0]), signed_freq(y, dims[1]), signed_freq(z, dims[2]));
        // Physical frequency (cycles/mm), rotated back, then into fractional grid units.
        Eigen::Vector3d kp;
        for (int a = 0; a < 3; ++a) kp[a] = k[a] / (dims[a] * vox[a]);
        const Eigen::Vector3d src = rot_t[s] * kp;
        Eigen::Vector3d q;
        for (int a = 0; a < 3; ++a) q[a] = src[a] * dims[a] * vox[a];
        const std::complex<double> moved = lookup(q) * std::polar(1.0, -2.0 * kPi * kp.dot(shift[s]));
        spec.c()[i] = moved * std::conj(center_phase[0][x] * center_phase[1][y] * center_phase[2][z]);
      }
    }
  }
  fft3(spec, dims, FFTW_BACKWARD);
  Volume out(dims, vox, v.modality());
  const double norm = static_cast<double>(total);
  for (std::size_t i = 0; i < total; ++i) {
    const double mag = std::abs(spec.c()[i]) / norm;
    out.data()[i] = static_cast<std::uint16_t>(std::clamp(std::lround(mag), 0L, 65535L));
  }
  return out;
}

void DatasetOptions::validate() const {
  if (n < 2) throw Error(ErrorKind::Config, "dataset needs at least 2 items");
  check_dims(dims);
  for (double s : voxel_size) {
    if (!(s > 0.0)) throw Error(ErrorKind::Config, "voxel size must be positive");
  }
  if (levels.empty()) throw Error(ErrorKind::Config, "motion level distribution is empty");
  for (const auto& [lo, hi] : levels) {
    if (!(lo >= 0.0 && hi >= lo)) throw Error(ErrorKind::Config, "motion level intervals need 0 <= lo <= hi");
  }
  if (split_counts) {
    const auto& c = *split_counts;
    if (c[0] + c[1] + c[2] != n) throw Error(ErrorKind::Config, "split counts must sum to n");
  }
  if (!(duration > 0.0) || !(rate > 1.0)) throw Error(ErrorKind::Config, "bad trajectory timing");
  if (segments < 1 || segments > dims[1]) throw Error(ErrorKind::Config, "bad segment count");
  if (!(age_coupling >= 0.0 && age_coupling <= 1.0)) {
    throw Error(ErrorKind::Config, "age coupling must lie in [0, 1]");
  }
}

std::vector<double> draw_levels(const DatasetOptions& opts) {
  opts.validate();
  std::mt19937_64 rng(mix(opts.seed, 0x6c766c));
  std::vector<std::size_t> rank(opts.n);
  for (std::size_t i = 0; i < opts.n; ++i) rank[i] = i;
  std::shuffle(rank.begin(), rank.end(), rng);
  double total = 0.0;
  for (const auto& [lo, hi] : opts.levels) total += hi - lo;
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> out(opts.n);
  for (std::size_t i = 0; i < opts.n; ++i) {
    // Stratified quantile mapped through the piecewise uniform distribution.
    double q = (static_cast<double>(rank[i]) + u(rng)) / static_cast<double>(opts.n) * total;
    double level = opts.levels.back().second;
    for (const auto& [lo, hi] : opts.levels) {
      if (q <= hi - lo) {
        level = lo + q;
        break;
      }
      q -= hi - lo;
    }
    out[i] = level;
  }
  return out;
}

namespace {

// Random motion mix for one subject, scaled so that its motion score hits `level`.
TrajectorySpec item_spec(const DatasetOptions& opts, std::uint64_t seed, double level) {
  std::mt19937_64 rng(mix(seed, 0x6d6f74));
  std::uniform_real_distribution<double> u(0.0, 1.0);
  auto sym = [&] { return 2.0 * u(rng) - 1.0; };
  TrajectorySpec spec;
  spec.duration = opts.duration;
  spec.rate = opts.rate;
  spec.seed = mix(seed, 0x6a6974);
  spec.breathing_frequency = 0.2 + 0.13 * u(rng);
  const double f = spec.breathing_frequency;
  const double breathing = 0.6 + 0.3 * u(rng);
  const double jitter = 0.15 * u(rng);
  const double drift = 0.1 * u(rng);
  const double rot_share = 0.15 + 0.25 * u(rng);
  spec.breathing_axis = Eigen::Vector3d(0.3 * sym(), 0.5 + 0.5 * u(rng), 0.5 + 0.5 * u(rng));
  spec.rotation_breathing_axis = Eigen::Vector3d(1.0, 0.2 * sym(), 0.2 * sym());
  // A sinusoid of amplitude A moves at a mean rate of 4 A f.
  spec.breathing_amplitude = breathing * (1.0 - rot_share) / (4.0 * f);
  // Small rotations displace the 80 mm sphere at about 80 sqrt(2/5) times the angular rate.
  spec.rotation_breathing_amplitude = breathing * rot_share / (4.0 * f * 80.0 * std::sqrt(0.4)) / kDeg;
  // Independent jitter in 3 axes at rate r gives a mean rate near 2.26 * sd * r.
  spec.jitter_sd = jitter / (2.26 * opts.rate);
  spec.drift_rate = drift * unit_or_zero(Eigen::Vector3d(sym(), sym(), sym()));

  const rigid::SequenceWindow window(0.0, opts.duration, 0.0);
  const double unit = rigid::sequence_motion_score(synth_trajectory(spec), window).value;
  return spec.scaled(unit > 0.0 ? level / unit : 0.0);
}

std::string item_stem(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "sub-%04zu", i + 1);
  return buf;
}

}  // namespace

io::DatasetManifest build_dataset(const DatasetOptions& opts, const std::filesystem::path& out_dir) {
  const std::vector<double> levels = draw_levels(opts);
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw Error(ErrorKind::Io, "cannot create " + out_dir.string() + ": " + ec.message());

  std::mt19937_64 rng(mix(opts.seed, 0x73706c));
  std::array<std::size_t, 3> counts{};
  if (opts.split_counts) {
    counts = *opts.split_counts;
  } else {
    counts[0] = static_cast<std::size_t>(std::llround(0.70 * static_cast<double>(opts.n)));
    counts[1] = static_cast<std::size_t>(std::llround(0.15 * static_cast<double>(opts.n)));
    counts[1] = std::min(counts[1], opts.n - counts[0]);
    counts[2] = opts.n - counts[0] - counts[1];
  }
  std::vector<std::size_t> perm(opts.n);
  for (std::size_t i = 0; i < opts.n; ++i) perm[i] = i;
  std::shuffle(perm.begin(), perm.end(), rng);
  std::vector<io::Split> splits(opts.n);
  for (std::size_t r = 0; r < opts.n; ++r) {
    splits[perm[r]] = r < counts[0] ? io::Split::Train
                      : r < counts[0] + counts[1] ? io::Split::Validation
                                                  : io::Split::Test;
  }
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> age(opts.n);
  double lmin = levels[0], lmax = levels[0];
  for (double l : levels) {
    lmin = std::min(lmin, l);
    lmax = std::max(lmax, l);
  }
  for (std::size_t i = 0; i < opts.n; ++i) {
    const double rel = lmax > lmin ? (levels[i] - lmin) / (lmax - lmin) : 0.5;
    age[i] = 30.0 + 65.0 * ((1.0 - opts.age_coupling) * u(rng) + opts.age_coupling * rel);
  }

  const rigid::SequenceWindow window(0.0, opts.duration, 0.0);
  const auto sched = ReadoutSchedule::uniform(opts.segments, opts.duration);
  std::vector<io::ManifestEntry> entries(opts.n);
  std::vector<std::exception_ptr> failures(opts.n);
  const auto n = static_cast<std::ptrdiff_t>(opts.n);
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t ii = 0; ii < n; ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    try {
      const std::uint64_t seed = mix(opts.seed, 1000 + i);
      const TrajectorySpec spec = item_spec(opts, seed, levels[i]);
      const rigid::Trajectory traj = synth_trajectory(spec);
      const Volume clean = make_phantom(opts.dims, opts.voxel_size, seed);
      const Volume corrupted = corrupt_kspace(clean, traj, sched);
      const std::string stem = item_stem(i);
      io::write_nifti(corrupted, out_dir / (stem + ".nii.gz"));
      io::write_tracking_log(traj, out_dir / (stem + "_motion.csv"));
      if (opts.write_masks) {
        io::write_nifti(phantom_head_mask(opts.dims, opts.voxel_size, seed), out_dir / (stem + "_mask.nii.gz"));
      }
      // Labels go through the same path as real logs: read back, then score.
      const rigid::Trajectory logged = io::read_tracking_log(out_dir / (stem + "_motion.csv"));
      const auto b = bands::trajectory_band_targets(logged, bands::BandSpec{}, window);
      io::ManifestEntry& e = entries[i];
      e.volume = stem + ".nii.gz";
      e.log = stem + "_motion.csv";
      e.window = window;
      e.motion_score = rigid::sequence_motion_score(logged, window).value;
      e.bands = io::BandScores{b.drift.value, b.breathing.value, b.noisy.value};
      e.covariates["age"] = age[i];
      e.split = splits[i];
    } catch (...) {
      failures[i] = std::current_exception();
    }
  }
  for (const auto& f : failures) {
    if (f) std::rethrow_exception(f);
  }
  io::DatasetManifest manifest(std::move(entries), out_dir);
  io::write_manifest(manifest, out_dir / "manifest.csv");
  return manifest;
}

}  // namespace headmotion::sim
