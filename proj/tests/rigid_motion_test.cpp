#include <cmath>
#include <numbers>
#include <random>

#include <gtest/gtest.h>

#include "headmotion/error.hpp"
#include "headmotion/rigid_motion.hpp"

using namespace headmotion;
using namespace headmotion::rigid;

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

// RMS displacement of uniform points in the sphere under b * a^-1, by sampling.
double monte_carlo_rms(const RigidTransform& a, const RigidTransform& b, double radius, int n,
                       std::mt19937_64& rng) {
  const Eigen::Matrix4d m = b.matrix() * a.matrix().inverse();
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  double sum = 0.0;
  int taken = 0;
  while (taken < n) {
    Eigen::Vector3d x(u(rng), u(rng), u(rng));
    if (x.squaredNorm() > 1.0) continue;
    x *= radius;
    const Eigen::Vector3d y = m.topLeftCorner<3, 3>() * x + m.topRightCorner<3, 1>();
    sum += (y - x).squaredNorm();
    ++taken;
  }
  return std::sqrt(sum / n);
}

Trajectory translating(int frames, double step, double fps) {
  Trajectory t;
  for (int i = 0; i < frames; ++i) {
    t.push_back({i / fps, RigidTransform::translation({step * i, 0.0, 0.0})});
  }
  return t;
}

}  // namespace

TEST(RigidTransform, RejectsNonRigidMatrices) {
  Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
  m(0, 0) = 1.01;
  EXPECT_THROW(RigidTransform{m}, Error);
  m = Eigen::Matrix4d::Identity();
  m(0, 0) = -1.0;  // reflection
  try {
    RigidTransform r{m};
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::InvalidTransform);
  }
  m = Eigen::Matrix4d::Identity();
  m(3, 0) = 0.5;
  EXPECT_THROW(RigidTransform{m}, Error);
}

TEST(RigidTransform, InverseComposesToIdentity) {
  const auto r = RigidTransform::axis_angle({1, 2, 3}, 0.3, {4, -5, 6});
  const Eigen::Matrix4d prod = (r * r.inverse()).matrix();
  EXPECT_TRUE(prod.isApprox(Eigen::Matrix4d::Identity(), 1e-12));
}

TEST(Jenkinson, IdentityIsZero) {
  EXPECT_DOUBLE_EQ(jenkinson_difference(RigidTransform::identity(), RigidTransform::identity()), 0.0);
}

TEST(Jenkinson, PureTranslationIsItsLength) {
  const auto b = RigidTransform::translation({1.0, 0.0, 0.0});
  EXPECT_NEAR(jenkinson_difference(RigidTransform::identity(), b), 1.0, 1e-12);
}

TEST(Jenkinson, OneDegreeAboutZ) {
  const auto b = RigidTransform::axis_angle({0, 0, 1}, 1.0 * kDeg);
  const double closed = std::sqrt(80.0 * 80.0 / 5.0 * 4.0 * (1.0 - std::cos(kDeg)));
  EXPECT_NEAR(jenkinson_difference(RigidTransform::identity(), b), closed, 1e-12);
  EXPECT_NEAR(closed, 0.883063, 1e-6);
  std::mt19937_64 rng(7);
  EXPECT_NEAR(monte_carlo_rms(RigidTransform::identity(), b, 80.0, 100000, rng), closed, 0.01 * closed);
}

TEST(Jenkinson, MatchesMonteCarloOnRandomPairs) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int i = 0; i < 20; ++i) {
    const auto a = RigidTransform::from_rotation_vector(Eigen::Vector3d(u(rng), u(rng), u(rng)) * 0.05,
                                                        Eigen::Vector3d(u(rng), u(rng), u(rng)) * 3.0);
    const auto b = RigidTransform::from_rotation_vector(Eigen::Vector3d(u(rng), u(rng), u(rng)) * 0.05,
                                                        Eigen::Vector3d(u(rng), u(rng), u(rng)) * 3.0);
    const double mc = monte_carlo_rms(a, b, 80.0, 100000, rng);
    EXPECT_NEAR(jenkinson_difference(a, b), mc, 0.01 * mc);
  }
}

TEST(Jenkinson, OffCenterSphere) {
  // Rotation about z moves a sphere centered at (10,0,0) by an extra |A c|.
  const auto b = RigidTransform::axis_angle({0, 0, 1}, 0.02);
  JenkinsonParams p;
  p.sphere_center = {10.0, 0.0, 0.0};
  const Eigen::Matrix3d A = b.rotation() - Eigen::Matrix3d::Identity();
  const double expected =
      std::sqrt(80.0 * 80.0 / 5.0 * (A.transpose() * A).trace() + (A * p.sphere_center).squaredNorm());
  EXPECT_NEAR(jenkinson_difference(RigidTransform::identity(), b, p), expected, 1e-12);
}

TEST(FramewiseDifferences, StaticTrajectoryIsZero) {
  Trajectory t;
  const auto pose = RigidTransform::axis_angle({1, 1, 0}, 0.1, {1, 2, 3});
  for (int i = 0; i < 10; ++i) t.push_back({i / 30.0, pose});
  for (const auto& r : framewise_differences(t)) EXPECT_NEAR(r.value, 0.0, 1e-12);
}

TEST(FramewiseDifferences, ConstantTranslationRate) {
  const auto rates = framewise_differences(translating(31, 0.01, 30.0));
  ASSERT_EQ(rates.size(), 30u);
  for (const auto& r : rates) EXPECT_NEAR(r.value, 0.3, 1e-9);
}

TEST(FramewiseDifferences, MatchesPerPairClosedForm) {
  Trajectory t;
  t.push_back({0.0, RigidTransform::identity()});
  t.push_back({0.1, RigidTransform::axis_angle({0, 1, 0}, 0.01, {0.2, 0.0, 0.1})});
  t.push_back({0.25, RigidTransform::axis_angle({1, 0, 1}, 0.03, {-0.1, 0.4, 0.0})});
  const auto rates = framewise_differences(t);
  ASSERT_EQ(rates.size(), 2u);
  for (std::size_t i = 0; i < 2; ++i) {
    const double dt = t[i + 1].time - t[i].time;
    // Per-pair oracle: the difference of the two poses written out from the matrices.
    const Eigen::Matrix4d m = t[i + 1].pose.matrix() * t[i].pose.matrix().inverse() - Eigen::Matrix4d::Identity();
    const Eigen::Matrix3d A = m.topLeftCorner<3, 3>();
    const double d = std::sqrt(80.0 * 80.0 / 5.0 * (A.transpose() * A).trace() +
                               m.topRightCorner<3, 1>().squaredNorm());
    EXPECT_NEAR(rates[i].value, d / dt, 1e-12);
  }
}

TEST(FramewiseDifferences, DuplicateTimestampsRejected) {
  EXPECT_THROW(Trajectory({{0.0, RigidTransform()}, {0.0, RigidTransform()}}), Error);
  Trajectory t;
  t.push_back({0.0, RigidTransform()});
  EXPECT_THROW(t.push_back({0.0, RigidTransform()}), Error);
  try {
    framewise_differences(t);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::DegenerateInterval);
  }
}

TEST(SelectWindow, CoversAllOrNothing) {
  std::vector<TimedValue> s;
  for (int i = 0; i < 10; ++i) s.push_back({static_cast<double>(i), i * 0.1});
  EXPECT_EQ(select_window(s, SequenceWindow(0.0, 9.0)).size(), 10u);
  EXPECT_TRUE(select_window(s, SequenceWindow(20.0, 30.0)).empty());
}

TEST(SelectWindow, OffsetShiftsSelection) {
  std::vector<TimedValue> s;
  for (int i = 0; i < 20; ++i) s.push_back({static_cast<double>(i), static_cast<double>(i)});
  const auto base = select_window(s, SequenceWindow(2.0, 6.0, 0.0));
  const auto shifted = select_window(s, SequenceWindow(2.0, 6.0, 5.0));
  ASSERT_EQ(base.size(), shifted.size());
  for (std::size_t i = 0; i < base.size(); ++i) EXPECT_DOUBLE_EQ(shifted[i].time, base[i].time + 5.0);
}

TEST(SequenceWindow, EmptyWindowRejected) { EXPECT_THROW(SequenceWindow(5.0, 5.0), Error); }

TEST(MotionScore, MeanOfRates) {
  std::vector<TimedValue> a{{0, 0.3}, {1, 0.3}, {2, 0.3}};
  EXPECT_NEAR(motion_score(a).value, 0.3, 1e-15);
  std::vector<TimedValue> b{{0, 0.1}, {1, 0.3}};
  EXPECT_NEAR(motion_score(b).value, 0.2, 1e-15);
  try {
    motion_score(std::vector<TimedValue>{});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::EmptyWindow);
  }
}

TEST(MotionScore, SynthesizedTrajectoryMatchesBruteForceMean) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> g(0.0, 0.05);
  Trajectory t;
  for (int i = 0; i < 200; ++i) {
    t.push_back({i / 30.0, RigidTransform::from_rotation_vector({g(rng) * 0.01, g(rng) * 0.01, 0.0},
                                                                {g(rng), g(rng), g(rng)})});
  }
  const SequenceWindow w(1.0, 5.0);
  double sum = 0.0;
  int n = 0;
  for (std::size_t i = 0; i + 1 < t.size(); ++i) {
    const double time = t[i + 1].time;
    if (time < 1.0 || time > 5.0) continue;
    sum += jenkinson_difference(t[i].pose, t[i + 1].pose) / (t[i + 1].time - t[i].time);
    ++n;
  }
  EXPECT_NEAR(sequence_motion_score(t, w).value, sum / n, 1e-12);
}
