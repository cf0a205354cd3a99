#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "pseg/metrics.hpp"
#include "support/gradcheck.hpp"
#include "support/rle_oracle.hpp"

using namespace pseg;
using namespace pseg::metrics;
using nn::Tensor;

namespace {

// |x| = 4, |y| = 6, overlap 3 on a 4x4 grid.
std::pair<BinaryMask, BinaryMask> worked_pair() {
  BinaryMask x(4, 4), y(4, 4);
  for (int c = 0; c < 4; ++c) x.set(0, c, true);
  for (int c = 1; c < 4; ++c) y.set(0, c, true);
  for (int c = 0; c < 3; ++c) y.set(1, c, true);
  return {x, y};
}

}  // namespace

TEST(Metrics, WorkedPair) {
  auto [x, y] = worked_pair();
  // Brute-force counts, independent of the implementation.
  int nx = 0, ny = 0, both = 0;
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 4; ++c) {
      nx += x.at(r, c);
      ny += y.at(r, c);
      both += x.at(r, c) && y.at(r, c);
    }
  ASSERT_EQ(nx, 4);
  ASSERT_EQ(ny, 6);
  ASSERT_EQ(both, 3);
  EXPECT_NEAR(dice(x, y), 0.6, 1e-12);
  EXPECT_NEAR(iou(x, y), 3.0 / 7.0, 1e-12);
}

TEST(Metrics, TrivialCases) {
  BinaryMask a(3, 3, {1, 1, 0, 0, 0, 0, 0, 0, 0}), b(3, 3, {0, 0, 0, 0, 0, 0, 0, 1, 1});
  EXPECT_EQ(dice(a, a), 1.0);
  EXPECT_EQ(iou(a, a), 1.0);
  EXPECT_EQ(dice(a, b), 0.0);
  EXPECT_EQ(iou(a, b), 0.0);
  BinaryMask e(3, 3);
  EXPECT_EQ(dice(e, e), 1.0);
  EXPECT_EQ(iou(e, e), 1.0);
  EXPECT_THROW(dice(a, BinaryMask(3, 4)), std::invalid_argument);
  EXPECT_THROW(iou(a, BinaryMask(4, 3)), std::invalid_argument);
}

TEST(Metrics, IdentitySymmetryRange) {
  std::mt19937_64 rng(31);
  for (int i = 0; i < 1000; ++i) {
    const double dx = (i % 7) / 7.0, dy = (i % 5) / 5.0;
    auto x = pseg::testing::random_mask(16, 12, rng, dx), y = pseg::testing::random_mask(16, 12, rng, dy);
    const double d = dice(x, y), j = iou(x, y);
    ASSERT_NEAR(d, 2.0 * j / (1.0 + j), 1e-6);
    ASSERT_LE(j, d + 1e-12);
    ASSERT_EQ(d, dice(y, x));
    ASSERT_EQ(j, iou(y, x));
    ASSERT_GE(j, 0.0);
    ASSERT_LE(d, 1.0);
  }
}

TEST(BceLoss, ConstantHalfIsLn2) {
  std::mt19937_64 rng(1);
  auto y = pseg::testing::random_mask(8, 8, rng, 0.5);
  std::vector<float> yv(y.pixels().begin(), y.pixels().end());
  const Tensor p({1, 1, 8, 8}, 0.5f);
  EXPECT_NEAR(bce_loss(p, Tensor({1, 1, 8, 8}, yv)).item(), 0.69315, 1e-4);
}

TEST(BceLoss, PerfectPredictionNearZero) {
  const Tensor y({2, 1, 2, 2}, std::vector<float>{1, 0, 0, 1, 1, 1, 0, 0});
  EXPECT_LT(bce_loss(y.clone(), y).item(), 1e-5);
}

TEST(BceLoss, SinglePixelGradient) {
  // y = 1 everywhere: d/dp_k of mean(-ln p) = -1/(n p_k).
  const int n = 6;
  std::vector<float> pv{0.2f, 0.35f, 0.5f, 0.65f, 0.8f, 0.9f};
  Tensor p({1, 1, 2, 3}, pv, true);
  const Tensor y({1, 1, 2, 3}, 1.0f);
  bce_loss(p, y).backward();
  for (int k = 0; k < n; ++k) {
    const double expect = -1.0 / (n * pv[k]);
    // Central difference on the forward only.
    const float h = 1e-3f;
    auto eval = [&](float v) {
      nn::NoGradGuard g;
      auto q = pv;
      q[k] = v;
      return static_cast<double>(bce_loss(Tensor({1, 1, 2, 3}, q), y).item());
    };
    const double fd = (eval(pv[k] + h) - eval(pv[k] - h)) / (2.0 * h);
    EXPECT_NEAR(p.grad()[k], expect, 1e-3 * std::abs(expect));
    EXPECT_NEAR(fd, expect, 1e-3 * std::abs(expect));
  }
}

TEST(BceLoss, MovingTowardTargetDecreasesLoss) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<float> d(0.05f, 0.95f);
  for (int t = 0; t < 100; ++t) {
    std::vector<float> pv(16), yv(16);
    for (int i = 0; i < 16; ++i) {
      pv[i] = d(rng);
      yv[i] = static_cast<float>(rng() & 1);
    }
    const Tensor y({1, 1, 4, 4}, yv);
    const double before = bce_loss(Tensor({1, 1, 4, 4}, pv), y).item();
    const int k = t % 16;
    pv[k] += (yv[k] - pv[k]) * 0.5f;
    ASSERT_LT(bce_loss(Tensor({1, 1, 4, 4}, pv), y).item(), before);
  }
}

TEST(BceLoss, ShapeMismatchRejected) {
  EXPECT_THROW(bce_loss(Tensor({1, 1, 2, 2}, 0.5f), Tensor({1, 1, 2, 3}, 0.0f)), nn::ShapeError);
}

TEST(GradCheck, BceLoss) {
  std::mt19937_64 rng(77);
  for (int t = 0; t < 20; ++t) {
    auto p = pseg::testing::random_tensor({2, 1, 3, 3}, rng, 0.05f, 0.95f);
    auto y = pseg::testing::random_tensor({2, 1, 3, 3}, rng, 0.0f, 1.0f);
    auto res = pseg::testing::grad_check(
        [](const std::vector<Tensor>& in) { return bce_loss(in[0], in[1]); }, {p, y}, rng, 1e-3f);
    ASSERT_LT(res.max_rel_error, 1e-3) << "instance " << t << " input " << res.worst_input;
  }
}

TEST(Aggregate, Examples) {
  auto one = aggregate({{"a", 0.6, 0.42857}}, 0.5f, 32);
  EXPECT_EQ(one.mean_dice, 0.6);
  EXPECT_EQ(one.mean_iou, 0.42857);
  EXPECT_EQ(one.n_samples, 1);
  auto two = aggregate({{"a", 1.0, 1.0}, {"b", 0.0, 0.0}}, 0.5f, 32);
  EXPECT_EQ(two.mean_dice, 0.5);
  EXPECT_THROW(aggregate({}, 0.5f, 32), std::invalid_argument);
}

TEST(Aggregate, MatchesCompensatedSum) {
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<SampleScore> entries;
  for (int i = 0; i < 100; ++i) {
    const double j = u(rng);
    entries.push_back({"s" + std::to_string(i), 2 * j / (1 + j), j});
  }
  auto kahan = [&](auto field) {
    double s = 0.0, c = 0.0;
    for (const auto& e : entries) {
      const double yv = field(e) - c, t = s + yv;
      c = (t - s) - yv;
      s = t;
    }
    return s / entries.size();
  };
  auto r = aggregate(entries, 0.5f, 32);
  EXPECT_NEAR(r.mean_dice, kahan([](const SampleScore& e) { return e.dice; }), 1e-6);
  EXPECT_NEAR(r.mean_iou, kahan([](const SampleScore& e) { return e.iou; }), 1e-6);
}

TEST(Aggregate, TextAndJsonFormats) {
  auto r = aggregate({{"img1", 0.6, 3.0 / 7.0}, {"img2", 1.0, 1.0}}, 0.5f, 32);
  EXPECT_EQ(r.to_text(),
            "2 0.500000 32 0.800000 0.714286\n"
            "img1 0.600000 0.428571\n"
            "img2 1.000000 1.000000\n");
  const auto js = r.to_json();
  EXPECT_NE(js.find("\"mean_dice\":0.8"), std::string::npos);
  EXPECT_NE(js.find("\"id\":\"img2\""), std::string::npos);
}
