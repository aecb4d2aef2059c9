#include "headmotion/rigid_motion.hpp"

#include <cmath>
#include <sstream>

#include "headmotion/error.hpp"

namespace headmotion::rigid {

RigidTransform::RigidTransform(const Eigen::Matrix4d& matrix) : matrix_(matrix) {
  if (!is_rigid(matrix)) {
    std::ostringstream msg;
    msg << "matrix is not a proper rigid transform:\n" << matrix;
    throw Error(ErrorKind::InvalidTransform, msg.str());
  }
}

bool RigidTransform::is_rigid(const Eigen::Matrix4d& m, double tol) {
  if (!m.allFinite()) return false;
  if (m(3, 0) != 0.0 || m(3, 1) != 0.0 || m(3, 2) != 0.0 || m(3, 3) != 1.0) return false;
  const Eigen::Matrix3d r = m.topLeftCorner<3, 3>();
  if (((r.transpose() * r) - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() > tol) return false;
  return std::abs(r.determinant() - 1.0) <= tol;
}

RigidTransform RigidTransform::translation(const Eigen::Vector3d& t) {
  Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
  m.topRightCorner<3, 1>() = t;
  return RigidTransform(m, Unchecked{});
}

RigidTransform RigidTransform::axis_angle(const Eigen::Vector3d& axis, double angle_rad,
                                          const Eigen::Vector3d& t) {
  Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
  if (axis.norm() > 0.0) {
    m.topLeftCorner<3, 3>() = Eigen::AngleAxisd(angle_rad, axis.normalized()).toRotationMatrix();
  }
  m.topRightCorner<3, 1>() = t;
  return RigidTransform(m);
}

RigidTransform RigidTransform::from_rotation_vector(const Eigen::Vector3d& rotvec,
                                                    const Eigen::Vector3d& t) {
  const double angle = rotvec.norm();
  if (angle == 0.0) return translation(t);
  return axis_angle(rotvec / angle, angle, t);
}

RigidTransform RigidTransform::inverse() const {
  Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
  const Eigen::Matrix3d rt = rotation().transpose();
  m.topLeftCorner<3, 3>() = rt;
  m.topRightCorner<3, 1>() = -rt * translation();
  return RigidTransform(m, Unchecked{});
}

RigidTransform RigidTransform::operator*(const RigidTransform& rhs) const {
  Eigen::Matrix4d m = matrix_ * rhs.matrix_;
  m.row(3) << 0.0, 0.0, 0.0, 1.0;
  return RigidTransform(m, Unchecked{});
}

Trajectory::Trajectory(std::vector<PoseSample> samples) {
  samples_.reserve(samples.size());
  for (auto& s : samples) push_back(std::move(s));
}

void Trajectory::push_back(PoseSample sample) {
  if (!std::isfinite(sample.time)) {
    throw Error(ErrorKind::NonMonotonic, "non-finite timestamp at sample " +
                                             std::to_string(samples_.size()));
  }
  if (!samples_.empty() && !(sample.time > samples_.back().time)) {
    std::ostringstream msg;
    msg << "timestamp " << sample.time << " at sample " << samples_.size()
        << " does not exceed previous " << samples_.back().time;
    throw Error(ErrorKind::NonMonotonic, msg.str());
  }
  samples_.push_back(std::move(sample));
}

SequenceWindow::SequenceWindow(double start_s, double end_s, double offset_s)
    : start(start_s), end(end_s), clock_offset(offset_s) {
  if (!(end > start)) {
    throw Error(ErrorKind::EmptyWindow, "window end must exceed start");
  }
}

namespace {

Eigen::Matrix<double, 3, 4> difference_block(const RigidTransform& a, const RigidTransform& b) {
  const Eigen::Matrix4d m = (b * a.inverse()).matrix() - Eigen::Matrix4d::Identity();
  return m.topRows<3>();
}

}  // namespace

double jenkinson_norm(const Eigen::Matrix<double, 3, 4>& block, const JenkinsonParams& p) {
  if (!(p.sphere_radius > 0.0)) {
    throw Error(ErrorKind::Config, "sphere radius must be positive");
  }
  const Eigen::Matrix3d a = block.leftCols<3>();
  const Eigen::Vector3d shift = block.col(3) + a * p.sphere_center;
  const double r2 = p.sphere_radius * p.sphere_radius;
  const double d2 = r2 / 5.0 * (a.transpose() * a).trace() + shift.squaredNorm();
  return std::sqrt(std::max(d2, 0.0));
}

double jenkinson_difference(const RigidTransform& a, const RigidTransform& b,
                            const JenkinsonParams& p) {
  return jenkinson_norm(difference_block(a, b), p);
}

std::vector<TimedDifference> framewise_difference_blocks(const Trajectory& traj) {
  if (traj.size() < 2) {
    throw Error(ErrorKind::DegenerateInterval, "trajectory needs at least 2 samples");
  }
  std::vector<TimedDifference> out;
  out.reserve(traj.size() - 1);
  for (std::size_t i = 1; i < traj.size(); ++i) {
    const double dt = traj[i].time - traj[i - 1].time;
    if (!(dt > 0.0)) {
      throw Error(ErrorKind::DegenerateInterval,
                  "zero-length interval before sample " + std::to_string(i));
    }
    out.push_back({traj[i].time, difference_block(traj[i - 1].pose, traj[i].pose) / dt});
  }
  return out;
}

std::vector<TimedValue> framewise_differences(const Trajectory& traj, const JenkinsonParams& p) {
  if (traj.size() < 2) {
    throw Error(ErrorKind::DegenerateInterval, "trajectory needs at least 2 samples");
  }
  std::vector<TimedValue> out;
  out.reserve(traj.size() - 1);
  for (std::size_t i = 1; i < traj.size(); ++i) {
    const double dt = traj[i].time - traj[i - 1].time;
    if (!(dt > 0.0)) {
      throw Error(ErrorKind::DegenerateInterval,
                  "zero-length interval before sample " + std::to_string(i));
    }
    out.push_back({traj[i].time, jenkinson_difference(traj[i - 1].pose, traj[i].pose, p) / dt});
  }
  return out;
}

std::vector<TimedValue> select_window(std::span<const TimedValue> series, const SequenceWindow& w) {
  std::vector<TimedValue> out;
  for (const auto& s : series) {
    const double scanner_time = s.time - w.clock_offset;
    if (scanner_time >= w.start && scanner_time <= w.end) out.push_back(s);
  }
  return out;
}

MotionScore motion_score(std::span<const TimedValue> series) {
  if (series.empty()) {
    throw Error(ErrorKind::EmptyWindow, "no samples inside the sequence window");
  }
  double sum = 0.0;
  for (const auto& s : series) sum += s.value;
  const double mean = sum / static_cast<double>(series.size());
  if (!std::isfinite(mean) || mean < 0.0) {
    throw Error(ErrorKind::NonFinite, "motion score is not a finite nonnegative value");
  }
  return {mean};
}

MotionScore sequence_motion_score(const Trajectory& traj, const SequenceWindow& w,
                                  const JenkinsonParams& p) {
  const auto rates = framewise_differences(traj, p);
  const auto windowed = select_window(rates, w);
  return motion_score(windowed);
}

}  // namespace headmotion::rigid
