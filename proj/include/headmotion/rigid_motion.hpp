#pragma once

#include <span>
#include <vector>

#include <Eigen/Dense>

namespace headmotion::rigid {

/// Homogeneous 4x4 rigid transform. Rotation block is unitless, translation in mm.
/// Construction validates orthonormality (1e-6), det = +1 and the (0,0,0,1) last row.
class RigidTransform {
 public:
  RigidTransform() : matrix_(Eigen::Matrix4d::Identity()) {}
  explicit RigidTransform(const Eigen::Matrix4d& matrix);

  static RigidTransform identity() { return RigidTransform(); }
  static RigidTransform translation(const Eigen::Vector3d& t);
  /// Rotation of `angle_rad` about `axis` (need not be unit), followed by translation `t`.
  static RigidTransform axis_angle(const Eigen::Vector3d& axis, double angle_rad,
                                   const Eigen::Vector3d& t = Eigen::Vector3d::Zero());
  /// Rotation from a rotation vector (axis * angle, radians).
  static RigidTransform from_rotation_vector(const Eigen::Vector3d& rotvec,
                                             const Eigen::Vector3d& t = Eigen::Vector3d::Zero());

  const Eigen::Matrix4d& matrix() const { return matrix_; }
  Eigen::Matrix3d rotation() const { return matrix_.topLeftCorner<3, 3>(); }
  Eigen::Vector3d translation() const { return matrix_.topRightCorner<3, 1>(); }

  RigidTransform inverse() const;
  RigidTransform operator*(const RigidTransform& rhs) const;

  /// Returns true when `m` satisfies the rigid invariants at `tol`.
  static bool is_rigid(const Eigen::Matrix4d& m, double tol = 1e-6);

 private:
  struct Unchecked {};
  RigidTransform(const Eigen::Matrix4d& m, Unchecked) : matrix_(m) {}

  Eigen::Matrix4d matrix_;
};

struct PoseSample {
  double time = 0.0;  // seconds
  RigidTransform pose;
};

/// Timestamped head poses; timestamps strictly increasing.
class Trajectory {
 public:
  Trajectory() = default;
  explicit Trajectory(std::vector<PoseSample> samples);

  const std::vector<PoseSample>& samples() const { return samples_; }
  std::size_t size() const { return samples_.size(); }
  bool empty() const { return samples_.empty(); }
  const PoseSample& operator[](std::size_t i) const { return samples_[i]; }

  /// Appends a sample; throws NonMonotonic unless `time` exceeds the last timestamp.
  void push_back(PoseSample sample);

 private:
  std::vector<PoseSample> samples_;
};

struct JenkinsonParams {
  double sphere_radius = 80.0;  // mm
  Eigen::Vector3d sphere_center = Eigen::Vector3d::Zero();
};

struct SequenceWindow {
  double start = 0.0;         // scanner clock, s
  double end = 0.0;           // scanner clock, s
  double clock_offset = 0.0;  // camera clock minus scanner clock, s

  SequenceWindow() = default;
  SequenceWindow(double start, double end, double clock_offset = 0.0);
};

struct MotionScore {
  double value = 0.0;  // mm/s
};

struct TimedValue {
  double time = 0.0;
  double value = 0.0;
};

/// Relative displacement of a frame pair, already divided by the frame interval:
/// top 3x4 block of (b * a^-1 - I) / dt.
struct TimedDifference {
  double time = 0.0;
  Eigen::Matrix<double, 3, 4> block;
};

/// RMS displacement (mm) between two poses over a sphere of radius R about c.
double jenkinson_difference(const RigidTransform& a, const RigidTransform& b,
                            const JenkinsonParams& p = {});

/// Same quantity from an already formed [A | t] block (used for filtered differences).
double jenkinson_norm(const Eigen::Matrix<double, 3, 4>& block, const JenkinsonParams& p = {});

/// Consecutive-frame motion rate in mm/s, stamped at the later frame.
std::vector<TimedValue> framewise_differences(const Trajectory& traj,
                                              const JenkinsonParams& p = {});

/// Consecutive-frame [A | t] blocks per second, stamped at the later frame.
std::vector<TimedDifference> framewise_difference_blocks(const Trajectory& traj);

/// Keeps samples with (time - clock_offset) in [start, end].
std::vector<TimedValue> select_window(std::span<const TimedValue> series, const SequenceWindow& w);

/// Arithmetic mean of the rates; throws EmptyWindow on an empty series.
MotionScore motion_score(std::span<const TimedValue> series);

/// framewise_differences -> select_window -> motion_score.
MotionScore sequence_motion_score(const Trajectory& traj, const SequenceWindow& w,
                                  const JenkinsonParams& p = {});

}  // namespace headmotion::rigid
