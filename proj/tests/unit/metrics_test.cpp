#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <numbers>
#include <sstream>

#include "savid/errors.hpp"
#include "savid/metrics.hpp"
#include "savid/verify/oracles.hpp"

namespace savid {
namespace {

Box3D box(double x, double y, double l = 1.0, double w = 1.0, double yaw = 0.0, double score = 1.0, int cls = 0) {
  Box3D b;
  b.center = {x, y, 0.0};
  b.size = {l, w, 1.0};
  b.yaw = yaw;
  b.score = score;
  b.class_id = cls;
  return b;
}

std::vector<Box3D> random_boxes(std::size_t n, Rng& rng, double extent) {
  std::uniform_real_distribution<double> pos(-extent, extent), size(0.5, 4.0), yaw(-3.1, 3.1), score(0, 1);
  std::vector<Box3D> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(box(pos(rng), pos(rng), size(rng), size(rng), yaw(rng), score(rng)));
  return out;
}

TEST(Box, WrapAngle) {
  EXPECT_NEAR(wrap_angle(3 * std::numbers::pi / 2), -std::numbers::pi / 2, 1e-12);
  EXPECT_NEAR(wrap_angle(-std::numbers::pi), std::numbers::pi, 1e-12);
  EXPECT_EQ(wrap_angle(0.25), 0.25);
}

TEST(Box, ValidateRejectsDegenerateBoxes) {
  EXPECT_NO_THROW(box(0, 0).validate());
  EXPECT_THROW(box(0, 0, 0.0).validate(), ValidationError);
  EXPECT_THROW(box(0, 0, 1, 1, 4.0).validate(), ValidationError);
}

TEST(BevIou, Examples) {
  EXPECT_NEAR(bev_iou(box(0, 0), box(0, 0)), 1.0, 1e-12);
  EXPECT_EQ(bev_iou(box(0, 0), box(5, 0)), 0.0);
  EXPECT_NEAR(bev_iou(box(0, 0), box(0.5, 0)), 1.0 / 3.0, 1e-12);
  EXPECT_NEAR(bev_iou(box(0, 0, 2, 1), box(0, 0, 2, 1, std::numbers::pi / 2)), 1.0 / 3.0, 1e-12);
  EXPECT_NEAR(bev_iou(box(0, 0), box(0, 0, 1, 1, std::numbers::pi / 2)), 1.0, 1e-12);
  EXPECT_NEAR(bev_iou(box(0, 0, 2, 2), box(0, 0, 1, 1)), 0.25, 1e-12);
}

TEST(BevIou, ZeroAreaGivesZero) {
  Box3D flat = box(0, 0);
  flat.size = {0.0, 1.0, 1.0};
  EXPECT_EQ(bev_iou(flat, box(0, 0)), 0.0);
}

TEST(BevIou, SymmetricAndMatchesMonteCarlo) {
  Rng rng(1);
  const auto a = random_boxes(30, rng, 1.5), b = random_boxes(30, rng, 1.5);
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double iou = bev_iou(a[i], b[i]);
    EXPECT_NEAR(iou, bev_iou(b[i], a[i]), 1e-12);
    EXPECT_GE(iou, 0.0);
    EXPECT_LE(iou, 1.0);
    EXPECT_NEAR(iou, verify::bev_iou_monte_carlo(a[i], b[i], 200000, rng), 0.01) << "pair " << i;
  }
}

TEST(Nms, SuppressesOverlapsByScore) {
  const std::vector<Box3D> boxes{box(0.1, 0, 1, 1, 0, 0.8), box(0, 0, 1, 1, 0, 0.9), box(5, 0, 1, 1, 0, 0.7)};
  EXPECT_EQ(nms(boxes, 0.5), (std::vector<std::size_t>{1, 2}));
  EXPECT_EQ(nms(boxes, 0.99), (std::vector<std::size_t>{1, 0, 2}));
  EXPECT_TRUE(nms(std::vector<Box3D>{}, 0.5).empty());
}

TEST(Nms, TiesKeepTheLowerIndex) {
  const std::vector<Box3D> boxes{box(0, 0, 1, 1, 0, 0.5), box(0, 0, 1, 1, 0, 0.5)};
  EXPECT_EQ(nms(boxes, 0.5), (std::vector<std::size_t>{0}));
}

TEST(Nms, MatchesOracle) {
  Rng rng(2);
  for (int trial = 0; trial < 50; ++trial) {
    const auto boxes = random_boxes(40, rng, 6.0);
    for (double t : {0.1, 0.3, 0.7}) EXPECT_EQ(nms(boxes, t), verify::nms_oracle(boxes, t));
  }
}

TEST(AveragePrecision, PerfectAndEmpty) {
  const std::vector<Box3D> gts{box(0, 0), box(10, 0)};
  const ApResult perfect = average_precision(gts, gts, 0.5);
  EXPECT_NEAR(perfect.ap, 1.0, 1e-12);
  EXPECT_EQ(perfect.true_positives, 2u);
  EXPECT_EQ(average_precision(std::vector<Box3D>{box(50, 50)}, gts, 0.5).ap, 0.0);
  EXPECT_EQ(average_precision(std::vector<Box3D>{}, gts, 0.5).ap, 0.0);
  const ApResult none = average_precision(gts, std::vector<Box3D>{}, 0.5);
  EXPECT_TRUE(none.no_ground_truth);
}

TEST(AveragePrecision, HandComputedCurve) {
  // TP, FP, TP against three ground truths: precision 1 up to recall 1/3,
  // then 2/3 up to recall 2/3.
  const std::vector<Box3D> gts{box(0, 0), box(10, 0), box(20, 0)};
  const std::vector<Box3D> preds{box(0, 0, 1, 1, 0, 0.9), box(50, 0, 1, 1, 0, 0.8), box(10, 0, 1, 1, 0, 0.7)};
  EXPECT_NEAR(average_precision(preds, gts, 0.5, ApMode::interp101).ap, (34.0 + 33.0 * 2.0 / 3.0) / 101.0, 1e-12);
  EXPECT_NEAR(average_precision(preds, gts, 0.5, ApMode::exact).ap, 5.0 / 9.0, 1e-12);
}

TEST(AveragePrecision, DuplicateDetectionsCountOnce) {
  const std::vector<Box3D> gts{box(0, 0)};
  const std::vector<Box3D> preds{box(0, 0, 1, 1, 0, 0.9), box(0.05, 0, 1, 1, 0, 0.8)};
  const ApResult r = average_precision(preds, gts, 0.5);
  EXPECT_EQ(r.true_positives, 1u);
  EXPECT_NEAR(r.ap, 1.0, 1e-12);
}

TEST(AveragePrecision, MatchesOracle) {
  Rng rng(3);
  for (int trial = 0; trial < 40; ++trial) {
    const auto gts = random_boxes(8, rng, 8.0);
    auto preds = random_boxes(12, rng, 8.0);
    for (std::size_t i = 0; i < 5; ++i) {
      preds[i] = gts[i];
      preds[i].center[0] += 0.2;
    }
    for (ApMode mode : {ApMode::interp101, ApMode::exact})
      EXPECT_NEAR(average_precision(preds, gts, 0.5, mode).ap, verify::ap_oracle(preds, gts, 0.5, mode), 1e-12);
  }
}

TEST(AveragePrecision, AddingATruePositiveNeverHurts) {
  Rng rng(4);
  const auto gts = random_boxes(6, rng, 10.0);
  std::vector<Box3D> preds = random_boxes(6, rng, 10.0);
  double previous = average_precision(preds, gts, 0.5).ap;
  for (std::size_t i = 0; i < gts.size(); ++i) {
    Box3D hit = gts[i];
    hit.score = 2.0;  // above every random score
    preds.push_back(hit);
    const double ap = average_precision(preds, gts, 0.5).ap;
    EXPECT_GE(ap, previous - 1e-12);
    previous = ap;
  }
}

RobustnessTable flat_table(double ap_cln, double value) {
  RobustnessTable t;
  t.ap_cln = ap_cln;
  for (CorruptionKind k : kCorruptionKinds)
    for (int s = 1; s <= kSeverityLevels; ++s) t.ap[{k, s}] = value;
  return t;
}

TEST(ApCorr, EqualCellsGiveTheCleanValue) {
  const RobustnessTable t = flat_table(0.6, 0.6);
  EXPECT_NEAR(ap_corr(t), 0.6, 1e-15);
  EXPECT_NEAR(rce(t.ap_cln, ap_corr(t)), 0.0, 1e-15);
}

TEST(ApCorr, MeanOfKindMeans) {
  RobustnessTable t;
  t.ap_cln = 0.5;
  for (int s = 1; s <= kSeverityLevels; ++s) {
    t.ap[{CorruptionKind::cutout, s}] = 0.4;
    t.ap[{CorruptionKind::fov_lost, s}] = 0.2;
  }
  EXPECT_NEAR(ap_corr(t), 0.3, 1e-15);
  const std::array<CorruptionKind, 1> only{CorruptionKind::fov_lost};
  EXPECT_NEAR(ap_corr(t, only), 0.2, 1e-15);
}

TEST(ApCorr, EqualsTheFlatMeanOverCompleteTables) {
  Rng rng(5);
  std::uniform_real_distribution<double> u(0, 1);
  RobustnessTable t = flat_table(0.7, 0.0);
  double sum = 0.0;
  for (auto& [key, v] : t.ap) sum += (v = u(rng));
  EXPECT_NEAR(ap_corr(t), sum / static_cast<double>(t.ap.size()), 1e-12);
}

TEST(ApCorr, MissingCellsAreListed) {
  RobustnessTable t = flat_table(0.5, 0.5);
  t.ap.erase({CorruptionKind::crosstalk, 4});
  const std::array<CorruptionKind, 2> kinds{CorruptionKind::crosstalk, CorruptionKind::cutout};
  const auto missing = missing_cells(t, kinds);
  ASSERT_EQ(missing.size(), 1u);
  EXPECT_EQ(missing[0], (CellKey{CorruptionKind::crosstalk, 4}));
  try {
    ap_corr(t, kinds);
    FAIL() << "expected ValidationError";
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find(to_string(CellKey{CorruptionKind::crosstalk, 4})), std::string::npos);
  }
  EXPECT_THROW(ap_corr(RobustnessTable{}), ValidationError);
}

TEST(Rce, Examples) {
  EXPECT_NEAR(rce(0.3817, 0.2777), 0.2724, 0.0005);
  EXPECT_EQ(rce(0.5, 0.5), 0.0);
  EXPECT_EQ(rce(0.5, 0.0), 1.0);
  EXPECT_LT(rce(0.5, 0.6), 0.0);
  EXPECT_NEAR(rce(0.8, 0.6), rce(0.4, 0.3), 1e-15);
  EXPECT_THROW(rce(0.0, 0.1), ValidationError);
  EXPECT_THROW(rce(-0.1, 0.1), ValidationError);
}

TEST(Detections, StreamRoundTrip) {
  Rng rng(6);
  auto boxes = random_boxes(20, rng, 30.0);
  for (std::size_t i = 0; i < boxes.size(); ++i) boxes[i].class_id = static_cast<int>(i % 3);
  std::stringstream ss;
  write_detections(ss, boxes);
  EXPECT_EQ(read_detections(ss), boxes);
}

TEST(Detections, FileRoundTripAndErrors) {
  const auto path = std::filesystem::temp_directory_path() / "savid_metrics_test_dets.txt";
  const std::vector<Box3D> boxes{box(1, 2, 3, 4, 0.5, 0.25, 2)};
  save_detections(path, boxes);
  EXPECT_EQ(load_detections(path), boxes);
  std::filesystem::remove(path);
  EXPECT_THROW(load_detections(path), ValidationError);
  std::stringstream bad("0 0.5 1 2 3\n");
  EXPECT_THROW(read_detections(bad), ValidationError);
}

}  // namespace
}  // namespace savid
