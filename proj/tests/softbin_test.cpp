#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "headmotion/error.hpp"
#include "headmotion/log.hpp"
#include "headmotion/softbin.hpp"

using namespace headmotion;
using namespace headmotion::softbin;

namespace {

std::vector<double> random_simplex(std::mt19937_64& rng, int n) {
  std::exponential_distribution<double> e(1.0);
  std::vector<double> p(n);
  double s = 0.0;
  for (auto& x : p) s += (x = e(rng));
  for (auto& x : p) x /= s;
  return p;
}

double kl_of_logits(const std::vector<double>& target, const std::vector<double>& logits) {
  const auto p = softmax(logits);
  double loss = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (target[i] > 0.0) loss += target[i] * std::log(target[i] / p[i]);
  }
  return loss;
}

}  // namespace

TEST(BinGrid, Geometry) {
  const BinGrid g;
  EXPECT_DOUBLE_EQ(g.width(), 0.078);
  EXPECT_DOUBLE_EQ(g.center(0), 0.039);
  EXPECT_NEAR(g.center(39), 3.081, 1e-12);
  EXPECT_EQ(g.centers().size(), 40u);
  BinGrid bad{1.0, 1.0, 40};
  EXPECT_THROW(bad.validate(), Error);
}

TEST(Encode, SymmetricAtGridMidpoint) {
  const BinGrid g;
  const auto t = encode(1.56, g);
  double sum = 0.0;
  for (int i = 0; i < 40; ++i) {
    sum += t[i];
    EXPECT_NEAR(t[i], t[39 - i], 1e-12);
  }
  EXPECT_NEAR(sum, 1.0, 1e-12);
  const auto max_it = std::max_element(t.begin(), t.end());
  const auto idx = max_it - t.begin();
  EXPECT_TRUE(idx == 19 || idx == 20);
}

TEST(Encode, NarrowSigmaConcentrates) {
  const BinGrid g;
  const auto t = encode(g.center(7), g, g.width() / 10.0);
  EXPECT_GT(t[7], 0.999);
}

TEST(Encode, DecodeRoundTripWithinHalfBin) {
  const BinGrid g;
  for (int j = 1; j < 39; ++j) {
    EXPECT_NEAR(decode(encode(g.center(j), g), g), g.center(j), g.width() / 2.0) << j;
  }
}

TEST(Encode, ClampsWithWarningAndRejectsNonFinite) {
  const BinGrid g;
  int warnings = 0;
  auto old = set_warning_sink([&](const std::string&) { ++warnings; });
  EXPECT_EQ(encode(5.0, g), encode(3.12, g));
  EXPECT_EQ(encode(-1.0, g), encode(0.0, g));
  set_warning_sink(old);
  EXPECT_EQ(warnings, 2);
  try {
    encode(std::nan(""), g);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::NonFinite);
  }
}

TEST(Decode, UniformAndOneHot) {
  const BinGrid g;
  EXPECT_NEAR(decode(std::vector<double>(40, 1.0 / 40), g), 1.56, 1e-12);
  std::vector<double> one(40, 0.0);
  one[0] = 1.0;
  EXPECT_NEAR(decode(one, g), 0.039, 1e-15);
}

TEST(Decode, MatchesNaiveDotProduct) {
  const BinGrid g;
  std::mt19937_64 rng(1);
  for (int k = 0; k < 100; ++k) {
    const auto p = random_simplex(rng, 40);
    double naive = 0.0;
    for (int i = 0; i < 40; ++i) naive += p[i] * (g.min + (i + 0.5) * (g.max - g.min) / 40);
    EXPECT_NEAR(decode(p, g), naive, 1e-12);
  }
}

TEST(KlLoss, ZeroAtTarget) {
  std::mt19937_64 rng(2);
  const auto p = random_simplex(rng, 40);
  const auto r = kl_loss(p, p);
  EXPECT_NEAR(r.loss, 0.0, 1e-15);
  for (double g : r.grad) EXPECT_NEAR(g, 0.0, 1e-15);
}

TEST(KlLoss, OneHotAgainstUniform) {
  std::vector<double> t(40, 0.0);
  t[11] = 1.0;
  EXPECT_NEAR(kl_loss(t, std::vector<double>(40, 1.0 / 40)).loss, 3.6889, 1e-4);
  EXPECT_NEAR(kl_loss(t, std::vector<double>(40, 1.0 / 40)).loss, std::log(40.0), 1e-12);
}

TEST(KlLoss, LogitGradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n(0.0, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    const auto t = random_simplex(rng, 40);
    std::vector<double> logits(40);
    for (auto& z : logits) z = n(rng);
    const auto r = kl_loss(t, softmax(logits));
    const double h = 1e-5;
    for (int i = 0; i < 40; ++i) {
      auto up = logits, down = logits;
      up[i] += h;
      down[i] -= h;
      const double fd = (kl_of_logits(t, up) - kl_of_logits(t, down)) / (2 * h);
      EXPECT_NEAR(r.grad[i], fd, 1e-6 * std::max(1.0, std::abs(fd)));
    }
  }
}

TEST(KlLoss, InfiniteWhenPredictionVanishes) {
  std::vector<double> t(4, 0.25), p{0.5, 0.5, 0.0, 0.0};
  try {
    kl_loss(t, p);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::InfiniteLoss);
  }
}

TEST(MseHeadLoss, Values) {
  EXPECT_EQ(mse_head_loss(0.7, 0.7).loss, 0.0);
  const auto r = mse_head_loss(0.0, 1.0);
  EXPECT_DOUBLE_EQ(r.loss, 1.0);
  EXPECT_DOUBLE_EQ(r.grad, 2.0);
  const double h = 1e-6, y = 0.3, yhat = 1.7;
  const double fd = (mse_head_loss(y, yhat + h).loss - mse_head_loss(y, yhat - h).loss) / (2 * h);
  EXPECT_NEAR(mse_head_loss(y, yhat).grad, fd, 1e-6);
}

TEST(Softmax, StableAndNormalized) {
  const auto p = softmax(std::vector<double>{1000.0, 1001.0, 999.0});
  EXPECT_NEAR(p[0] + p[1] + p[2], 1.0, 1e-15);
  EXPECT_GT(p[1], p[0]);
}
