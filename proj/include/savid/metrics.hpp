#pragma once

#include <array>
#include <compare>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "savid/corruption.hpp"
#include "savid/pointcloud.hpp"

namespace savid {

struct Box3D {
  Vec3 center{};
  Vec3 size{1.0, 1.0, 1.0};  // length (along yaw), width, height
  double yaw = 0.0;
  int class_id = 0;
  double score = 1.0;

  /// Throws ValidationError unless every size is positive and yaw lies in
  /// (-pi, pi].
  void validate() const;

  /// Ground-plane corners, counter-clockwise.
  std::array<std::array<double, 2>, 4> bev_corners() const;

  friend bool operator==(const Box3D&, const Box3D&) = default;
};

/// Wraps an angle into (-pi, pi].
double wrap_angle(double a);

/// Ground-plane IoU of two yawed rectangles by convex polygon clipping.
/// Zero-area boxes give 0.
double bev_iou(const Box3D& a, const Box3D& b);

/// Greedy NMS in descending score order (ties: lower index first). A box is
/// suppressed when its IoU with a kept box exceeds the threshold. Returns
/// kept indices in selection order.
std::vector<std::size_t> nms(std::span<const Box3D> boxes, double iou_threshold);

enum class ApMode {
  interp101,  // mean of the precision envelope at recall 0, 0.01, ..., 1
  exact,      // area under the precision envelope
};

struct ApResult {
  double ap = 0.0;
  bool no_ground_truth = false;
  std::size_t true_positives = 0;
};

/// Single-class AP. Predictions are visited by descending score (ties:
/// lower index) and each claims the unmatched ground truth of highest IoU
/// at or above the threshold.
ApResult average_precision(std::span<const Box3D> preds, std::span<const Box3D> gts, double iou_threshold,
                           ApMode mode = ApMode::interp101);

struct CellKey {
  CorruptionKind kind = CorruptionKind::density_decrease;
  int severity = 1;

  auto operator<=>(const CellKey&) const = default;
};

std::string to_string(const CellKey& key);

struct RobustnessTable {
  double ap_cln = 0.0;
  std::map<CellKey, double> ap;

  friend bool operator==(const RobustnessTable&, const RobustnessTable&) = default;
};

/// Cells of `kinds` x {1..5} absent from the table.
std::vector<CellKey> missing_cells(const RobustnessTable& table, std::span<const CorruptionKind> kinds);

/// Mean over kinds of the mean over severities. With no explicit kind list
/// the kinds present in the table are used. Throws ValidationError listing
/// every missing cell.
double ap_corr(const RobustnessTable& table);
double ap_corr(const RobustnessTable& table, std::span<const CorruptionKind> kinds);

/// (ap_cln - x) / ap_cln; ap_cln must be positive.
double rce(double ap_cln, double x);

/// One detection per line: class_id score x y z l w h yaw.
void write_detections(std::ostream& out, std::span<const Box3D> boxes);
std::vector<Box3D> read_detections(std::istream& in);
void save_detections(const std::filesystem::path& path, std::span<const Box3D> boxes);
std::vector<Box3D> load_detections(const std::filesystem::path& path);

}  // namespace savid
