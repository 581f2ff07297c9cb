// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <random>

#include "cramfuse/detect.hpp"
#include "cramfuse/losses.hpp"
#include "cramfuse/metrics.hpp"
#include "oracles.hpp"

using namespace cramfuse;

TEST(RotatedIou, ClosedFormCases) {
  const Box3D a = oracle::box(0, 0, 1, 1, 0), b = oracle::box(0.5, 0, 1, 1, 0);
  EXPECT_NEAR(rotated_bev_iou(a, b), 1.0 / 3.0, 1e-12);
  EXPECT_NEAR(rotated_bev_iou(a, a), 1.0, 1e-12);
  EXPECT_EQ(rotated_bev_iou(a, oracle::box(5, 5, 1, 1, 0.3)), 0.0);
}

TEST(RotatedIou, SymmetricAndBounded) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-1, 1);
  for (int i = 0; i < 200; ++i) {
    const Box3D a = oracle::box(u(rng), u(rng), 2 + u(rng), 1.5 + u(rng) / 2, 3 * u(rng));
    const Box3D b = oracle::box(u(rng), u(rng), 2 + u(rng), 1.5 + u(rng) / 2, 3 * u(rng));
    const double ab = rotated_bev_iou(a, b);
    EXPECT_NEAR(ab, rotated_bev_iou(b, a), 1e-12);
    EXPECT_GE(ab, 0.0);
    EXPECT_LE(ab, 1.0 + 1e-12);
  }
}

TEST(RotatedIou, MatchesMonteCarlo) {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(-1, 1);
  for (int i = 0; i < 20; ++i) {
    const Box3D a = oracle::box(u(rng), u(rng), 2 + u(rng), 1.5 + u(rng) / 2, 3 * u(rng));
    const Box3D b = oracle::box(u(rng), u(rng), 2 + u(rng), 1.5 + u(rng) / 2, 3 * u(rng));
    EXPECT_NEAR(rotated_bev_iou(a, b), oracle::monte_carlo_iou(a, b, 1000000, rng), 2e-3);
  }
}

TEST(BevAp, PerfectAndEmpty) {
  const std::vector<Box3D> gts = {oracle::box(10, 0, 4, 2, 0), oracle::box(20, 5, 4, 2, 1)};
  EXPECT_DOUBLE_EQ(bev_ap({{gts, gts}}, 0.5).buckets[0].ap, 1.0);
  EXPECT_EQ(bev_ap({{{}, gts}}, 0.5).buckets[0].ap, 0.0);
  EXPECT_THROW(bev_ap({}, 0.0), DomainError);
}

TEST(BevAp, MatchesExhaustiveOracle) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0, 1);
  for (int trial = 0; trial < 2000; ++trial) {
    const int ng = 1 + static_cast<int>(rng() % 3), nd = static_cast<int>(rng() % 5);
    std::vector<Box3D> gts, dets;
    for (int g = 0; g < ng; ++g) gts.push_back(oracle::box(10 + 3 * g, 0, 2, 1, 0));
    for (int d = 0; d < nd; ++d) {
      const int near = static_cast<int>(rng() % ng);
      dets.push_back(oracle::box(10 + 3 * near + 2.4 * u(rng) - 1.2, 0.6 * u(rng) - 0.3, 2, 1, 0, u(rng)));
    }
    const double expect = oracle::exhaustive_ap(dets, gts, 0.5);
    ASSERT_GE(expect, 0.0);
    EXPECT_NEAR(bev_ap({{dets, gts}}, 0.5).buckets[0].ap, expect, 1e-12) << "trial " << trial;
  }
}

TEST(BevAp, BucketsSplitByRange) {
  const std::vector<Box3D> gts = {oracle::box(10, 0, 4, 2, 0), oracle::box(40, 0, 4, 2, 0)};
  const std::vector<Box3D> dets = {oracle::box(10, 0, 4, 2, 0, 0.9), oracle::box(60, 0, 4, 2, 0, 0.8)};
  const auto r = bev_ap({{dets, gts}}, 0.5, {{0, 30}, {30, 50}, {50}});
  EXPECT_EQ(r.buckets[0].num_gt, 1);
  EXPECT_DOUBLE_EQ(r.buckets[0].ap, 1.0);
  EXPECT_EQ(r.buckets[1].num_tp, 0);
  EXPECT_EQ(r.buckets[2].num_fp, 1);
}

TEST(AveragePrecision, EnvelopeExample) {
  // TP, FP, TP over 2 gts: precision envelope gives 0.5*1 + 0.5*2/3.
  EXPECT_NEAR(average_precision({true, false, true}, 2), 0.5 + 1.0 / 3.0, 1e-15);
  EXPECT_EQ(average_precision({true}, 0), 0.0);
}

TEST(LatencyProbe, NoOpIsFast) { EXPECT_LT(latency_probe([] {}), 1.0); }

TEST(DecodeHeading, BinCenterConvention) {
  std::vector<double> onehot(12, 0.0);
  onehot[0] = 1.0;
  EXPECT_NEAR(decode_heading(onehot, 0.0), -kPi + kPi / 12, 1e-15);
}

TEST(DecodeHeading, RoundTrip) {
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> u(-kPi, kPi);
  for (int i = 0; i < 500; ++i) {
    const double t = u(rng);
    const auto e = encode_heading(t, 12);
    std::vector<double> logits(12, 0.0);
    logits[e.bin] = 5.0;
    EXPECT_NEAR(decode_heading(logits, e.residual), t, 1e-9);
  }
}

TEST(Nms, KeepsHigherScoreOfDuplicates) {
  EXPECT_EQ(nms_rotated({oracle::box(0, 0, 4, 2, 0)}, 0.2).size(), 1u);
  const auto kept = nms_rotated({oracle::box(0, 0, 4, 2, 0, 0.8), oracle::box(0, 0, 4, 2, 0, 0.9)}, 0.2);
  ASSERT_EQ(kept.size(), 1u);
  EXPECT_EQ(kept[0].score, 0.9);
}

TEST(Nms, MatchesBruteForceGreedy) {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(0, 1);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<Box3D> boxes;
    for (int i = 0; i < 12; ++i) boxes.push_back(oracle::box(8 * u(rng), 8 * u(rng), 4, 2, 3 * u(rng), u(rng)));
    std::vector<Box3D> sorted = boxes, expect;
    std::sort(sorted.begin(), sorted.end(), [](const Box3D& a, const Box3D& b) { return a.score > b.score; });
    std::vector<bool> dead(sorted.size(), false);
    for (std::size_t i = 0; i < sorted.size(); ++i) {
      if (dead[i]) continue;
      expect.push_back(sorted[i]);
      for (std::size_t j = i + 1; j < sorted.size(); ++j) {
        if (rotated_bev_iou(sorted[i], sorted[j]) > 0.2) dead[j] = true;
      }
    }
    const auto got = nms_rotated(boxes, 0.2);
    ASSERT_EQ(got.size(), expect.size());
    for (std::size_t i = 0; i < got.size(); ++i) EXPECT_EQ(got[i].score, expect[i].score);
  }
}
