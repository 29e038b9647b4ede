#include <gtest/gtest.h>

#include <random>
#include <sstream>

#include "cmap/fusion_metrics.hpp"
#include "cmap/synthetic.hpp"

using namespace cmap;

namespace {

BinaryMask random_mask(std::size_t h, std::size_t w, std::uint64_t seed, double p = 0.4) {
  std::mt19937_64 rng(seed);
  std::bernoulli_distribution b(p);
  std::vector<std::uint8_t> v(h * w);
  for (auto& x : v) x = b(rng) ? 1 : 0;
  return BinaryMask(h, w, std::move(v));
}

}  // namespace

TEST(DualPrior, ComplementDefaultAndOverride) {
  const auto d1 = make_dual_prior(Prior::filled(2, 2, 1.0f));
  for (float v : d1.background.values()) EXPECT_EQ(v, 0.0f);
  const auto d2 = make_dual_prior(Prior::filled(2, 2, 0.3f));
  for (float v : d2.background.values()) EXPECT_NEAR(v, 0.7f, 1e-7);
  const auto bg = synthetic::random_prior(2, 2, 5);
  EXPECT_EQ(make_dual_prior(Prior::filled(2, 2, 0.3f), bg).background, bg);
  EXPECT_THROW(make_dual_prior(Prior::filled(2, 2, 0.3f), Prior::filled(1, 4, 0.1f)), ShapeError);
}

TEST(Binarize, StrictThreshold) {
  EXPECT_EQ(binarize(Prior(1, 1, {0.5f}), 0.5)[0], false);
  EXPECT_EQ(binarize(Prior(1, 1, {0.51f}), 0.5)[0], true);
  EXPECT_EQ(binarize(Prior::filled(3, 3, 0.0f), 0.5).count(), 0u);
  EXPECT_THROW(binarize(Prior::filled(1, 1, 0.0f), 1.0), ValueError);
}

TEST(KshotFuse, MeanBehaviour) {
  const auto m = synthetic::random_prior(4, 4, 1);
  EXPECT_EQ(kshot_fuse({m, m, m}), m);
  const auto half = kshot_fuse({Prior(1, 2, {0.0f, 1.0f}), Prior(1, 2, {1.0f, 0.0f})});
  EXPECT_EQ(half[0], 0.5f);
  EXPECT_EQ(half[1], 0.5f);

  std::vector<Prior> five;
  for (std::uint64_t s = 0; s < 5; ++s) five.push_back(synthetic::random_prior(3, 5, s + 10));
  const auto fused = kshot_fuse(five);
  for (std::size_t i = 0; i < 15; ++i) {
    double mean = 0.0;
    for (const auto& p : five) mean += p[i];
    EXPECT_NEAR(fused[i], mean / 5.0, 1e-6);
  }
  EXPECT_THROW(kshot_fuse({}), ValueError);
  EXPECT_THROW(kshot_fuse({m, Prior::filled(2, 8, 0.0f)}), ShapeError);
}

TEST(KshotFuse, BinarizeOfRepeatedPriorIsUnchanged) {
  for (std::uint64_t s = 0; s < 20; ++s) {
    const auto m = synthetic::random_prior(6, 6, s);
    for (std::size_t k = 1; k <= 7; ++k)
      EXPECT_EQ(binarize(kshot_fuse(std::vector<Prior>(k, m)), 0.5), binarize(m, 0.5));
  }
}

TEST(Iou, HandCases) {
  const BinaryMask gt(1, 4, {1, 1, 0, 0});
  EXPECT_EQ(iou(gt, gt), 1.0);
  EXPECT_EQ(iou(BinaryMask(1, 4, {0, 0, 1, 1}), gt), 0.0);
  EXPECT_EQ(iou(BinaryMask(1, 4, {1, 0, 0, 0}), gt), 0.5);
  EXPECT_EQ(iou(BinaryMask::filled(2, 2, false), BinaryMask::filled(2, 2, false)), 1.0);
  EXPECT_THROW(iou(gt, BinaryMask::filled(2, 2, false)), ShapeError);
}

TEST(FbIou, HandCases) {
  const BinaryMask gt(1, 4, {1, 0, 0, 0});
  const BinaryMask pred(1, 4, {1, 1, 0, 0});
  EXPECT_NEAR(fb_iou(pred, gt), 7.0 / 12.0, 1e-12);
  EXPECT_EQ(fb_iou(gt, gt), 1.0);
  EXPECT_EQ(fb_iou(gt.complement(), gt), 0.0);
}

TEST(Iou, Properties) {
  for (std::uint64_t s = 0; s < 50; ++s) {
    const auto a = random_mask(5, 7, s), b = random_mask(5, 7, s + 1000);
    const double v = iou(a, b);
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
    EXPECT_EQ(v, iou(b, a));
    EXPECT_EQ(fb_iou(a, b), fb_iou(a.complement(), b.complement()));
    EXPECT_EQ(v == 1.0, a == b);

    // Counting oracle.
    std::size_t inter = 0, uni = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
      inter += a[i] && b[i];
      uni += a[i] || b[i];
    }
    EXPECT_DOUBLE_EQ(v, uni ? double(inter) / uni : 1.0);
  }
}

TEST(EvaluateEpisodes, ClassMeansAndAccumulation) {
  const auto m = random_mask(4, 4, 3);
  const auto one = evaluate_episodes({{m, m, 1}});
  EXPECT_EQ(one.miou, 1.0);
  EXPECT_EQ(one.per_class_iou.size(), 1u);

  const BinaryMask a(1, 2, {1, 0}), b(1, 2, {0, 1});
  const auto two = evaluate_episodes({{a, a, 1}, {a, b, 2}});
  EXPECT_EQ(two.per_class_iou.at(1), 1.0);
  EXPECT_EQ(two.per_class_iou.at(2), 0.0);
  EXPECT_EQ(two.miou, 0.5);

  // Mixed set against brute-force accumulation.
  std::vector<Episode> eps;
  for (std::uint64_t s = 0; s < 30; ++s) eps.push_back({random_mask(6, 6, s), random_mask(6, 6, s + 500), int(s % 4)});
  const auto r = evaluate_episodes(eps);
  double class_sum = 0.0, fb = 0.0;
  for (int cls = 0; cls < 4; ++cls) {
    std::size_t inter = 0, uni = 0;
    for (const auto& e : eps) {
      if (e.class_id != cls) continue;
      for (std::size_t i = 0; i < e.pred.size(); ++i) {
        inter += e.pred[i] && e.gt[i];
        uni += e.pred[i] || e.gt[i];
      }
    }
    const double expect = uni ? double(inter) / uni : 1.0;
    EXPECT_NEAR(r.per_class_iou.at(cls), expect, 1e-12);
    class_sum += expect;
  }
  for (const auto& e : eps) fb += fb_iou(e.pred, e.gt);
  EXPECT_NEAR(r.miou, class_sum / 4.0, 1e-9);
  EXPECT_NEAR(r.fb_iou, fb / 30.0, 1e-12);

  double mean = 0.0;
  for (const auto& [c, v] : r.per_class_iou) mean += v;
  EXPECT_NEAR(r.miou, mean / r.per_class_iou.size(), 1e-9);
  EXPECT_THROW(evaluate_episodes({}), ValueError);
}

TEST(EvalReport, TextFormat) {
  EvalReport r;
  r.per_class_iou = {{3, 0.5}, {7, 1.0}};
  r.miou = 0.75;
  r.fb_iou = 7.0 / 12.0;
  std::ostringstream os;
  write_report(r, os);
  EXPECT_EQ(os.str(), "class=3 iou=0.500000\nclass=7 iou=1.000000\nmiou=0.750000\nfbiou=0.583333\n");
}
