#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "headmotion/manifest.hpp"
#include "headmotion/rigid_motion.hpp"
#include "headmotion/volume.hpp"

namespace headmotion::sim {

/// Pose(t) = jitter + drift*t + amplitude*sin(2 pi f t) along an axis, for translation (mm)
/// and rotation (deg) alike. Poses are expressed about the volume center.
struct TrajectorySpec {
  double duration = 60.0;  // s
  double rate = 30.0;      // Hz
  Eigen::Vector3d drift_rate = Eigen::Vector3d::Zero();  // mm/s
  double breathing_amplitude = 0.0;                      // mm
  double breathing_frequency = 0.25;                     // Hz
  Eigen::Vector3d breathing_axis = Eigen::Vector3d::UnitZ();
  double jitter_sd = 0.0;  // mm
  Eigen::Vector3d rotation_drift_rate = Eigen::Vector3d::Zero();  // deg/s
  double rotation_breathing_amplitude = 0.0;                      // deg
  Eigen::Vector3d rotation_breathing_axis = Eigen::Vector3d::UnitX();
  double rotation_jitter_sd = 0.0;  // deg
  std::uint64_t seed = 0;

  void validate() const;
  /// Multiplies every motion amplitude by `factor`; the jitter draws stay the same.
  TrajectorySpec scaled(double factor) const;
};

/// Segments partition the phase-encode axis (y) in signed frequency order; segment s is
/// acquired at times[s].
struct ReadoutSchedule {
  int segments = 32;
  std::vector<double> times;

  /// Segment midpoints spread evenly over [0, duration].
  static ReadoutSchedule uniform(int segments, double duration);
  void validate() const;
};

Volume make_phantom(std::array<int, 3> dims, std::array<double, 3> voxel_size, std::uint64_t seed);

/// Voxels inside the phantom's head (value 1), dilated by `margin` voxels.
Volume phantom_head_mask(std::array<int, 3> dims, std::array<double, 3> voxel_size,
                         std::uint64_t seed, int margin = 1);

rigid::Trajectory synth_trajectory(const TrajectorySpec& spec);

/// Pose of the trajectory sample nearest to `time`.
const rigid::RigidTransform& pose_at(const rigid::Trajectory& traj, double time);

/// Segmented k-space corruption: each phase-encode segment is taken from the spectrum of the
/// volume posed at its acquisition time, then inverse transformed and re-quantized.
Volume corrupt_kspace(const Volume& v, const rigid::Trajectory& traj, const ReadoutSchedule& sched);

struct DatasetOptions {
  std::size_t n = 240;
  std::array<int, 3> dims{32, 32, 32};
  std::array<double, 3> voxel_size{2.0, 2.0, 2.0};
  /// Target motion levels (mm/s) are drawn uniformly over the union of these intervals,
  /// stratified over the items.
  std::vector<std::pair<double, double>> levels{{0.0, 1.5}};
  /// Explicit split counts (train, validation, test); otherwise 70/15/15.
  std::optional<std::array<std::size_t, 3>> split_counts;
  double duration = 60.0;
  double rate = 30.0;
  int segments = 32;
  /// 0 draws age independently of motion, 1 makes age a monotone function of the level.
  double age_coupling = 0.0;
  bool write_masks = true;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Target motion level of every item, in item order.
std::vector<double> draw_levels(const DatasetOptions& opts);

/// Writes `<out>/sub-NNNN.nii.gz`, `sub-NNNN_motion.csv`, optional `sub-NNNN_mask.nii.gz`
/// and `<out>/manifest.csv`; returns the manifest (base dir = out).
io::DatasetManifest build_dataset(const DatasetOptions& opts, const std::filesystem::path& out_dir);

}  // namespace headmotion::sim
