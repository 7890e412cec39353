#include "savid/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <istream>
#include <numbers>
#include <numeric>
#include <ostream>
#include <set>
#include <sstream>

#include "savid/errors.hpp"

namespace savid {

namespace {

using Vec2 = std::array<double, 2>;
using Polygon = std::vector<Vec2>;

double cross(const Vec2& o, const Vec2& a, const Vec2& b) {
  return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0]);
}

double polygon_area(const Polygon& p) {
  double twice = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const Vec2& a = p[i];
    const Vec2& b = p[(i + 1) % p.size()];
    twice += a[0] * b[1] - a[1] * b[0];
  }
  return std::abs(twice) / 2.0;
}

// Sutherland-Hodgman against a convex counter-clockwise clip polygon.
Polygon clip(Polygon subject, const Polygon& clipper) {
  for (std::size_t e = 0; e < clipper.size() && !subject.empty(); ++e) {
    const Vec2& a = clipper[e];
    const Vec2& b = clipper[(e + 1) % clipper.size()];
    Polygon out;
    for (std::size_t i = 0; i < subject.size(); ++i) {
      const Vec2& p = subject[i];
      const Vec2& q = subject[(i + 1) % subject.size()];
      const double sp = cross(a, b, p), sq = cross(a, b, q);
      if (sp >= 0.0) out.push_back(p);
      if ((sp >= 0.0) != (sq >= 0.0)) {
        const double t = sp / (sp - sq);
        out.push_back({p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])});
      }
    }
    subject = std::move(out);
  }
  return subject;
}

std::vector<std::size_t> score_order(std::span<const Box3D> boxes) {
  std::vector<std::size_t> order(boxes.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return boxes[a].score > boxes[b].score; });
  return order;
}

}  // namespace

void Box3D::validate() const {
  for (double v : center) {
    if (!std::isfinite(v)) throw ValidationError("box center must be finite");
  }
  for (double v : size) {
    if (!(v > 0.0 && std::isfinite(v))) throw ValidationError("box sizes must be positive");
  }
  if (!(yaw > -std::numbers::pi && yaw <= std::numbers::pi)) throw ValidationError("box yaw must lie in (-pi, pi]");
  if (!std::isfinite(score)) throw ValidationError("box score must be finite");
}

std::array<std::array<double, 2>, 4> Box3D::bev_corners() const {
  const double c = std::cos(yaw), s = std::sin(yaw);
  const double hl = size[0] / 2.0, hw = size[1] / 2.0;
  const std::array<Vec2, 4> local{{{hl, hw}, {-hl, hw}, {-hl, -hw}, {hl, -hw}}};
  std::array<Vec2, 4> out{};
  for (std::size_t i = 0; i < 4; ++i) {
    out[i] = {center[0] + c * local[i][0] - s * local[i][1], center[1] + s * local[i][0] + c * local[i][1]};
  }
  return out;
}

double wrap_angle(double a) {
  double w = std::remainder(a, 2.0 * std::numbers::pi);
  if (w <= -std::numbers::pi) w += 2.0 * std::numbers::pi;
  return w;
}

double bev_iou(const Box3D& a, const Box3D& b) {
  const double area_a = a.size[0] * a.size[1], area_b = b.size[0] * b.size[1];
  if (!(area_a > 0.0) || !(area_b > 0.0)) return 0.0;
  const auto ca = a.bev_corners(), cb = b.bev_corners();
  const Polygon inter = clip(Polygon(ca.begin(), ca.end()), Polygon(cb.begin(), cb.end()));
  if (inter.size() < 3) return 0.0;
  const double i = polygon_area(inter);
  return std::clamp(i / (area_a + area_b - i), 0.0, 1.0);
}

std::vector<std::size_t> nms(std::span<const Box3D> boxes, double iou_threshold) {
  if (!(iou_threshold >= 0.0 && iou_threshold <= 1.0)) throw ValidationError("NMS threshold must lie in [0, 1]");
  std::vector<std::size_t> kept;
  for (std::size_t idx : score_order(boxes)) {
    bool suppressed = false;
    for (std::size_t k : kept) {
      if (bev_iou(boxes[idx], boxes[k]) > iou_threshold) {
        suppressed = true;
        break;
      }
    }
    if (!suppressed) kept.push_back(idx);
  }
  return kept;
}

ApResult average_precision(std::span<const Box3D> preds, std::span<const Box3D> gts, double iou_threshold,
                           ApMode mode) {
  if (!(iou_threshold >= 0.0 && iou_threshold <= 1.0)) throw ValidationError("AP IoU threshold must lie in [0, 1]");
  ApResult result;
  if (gts.empty()) {
    result.no_ground_truth = true;
    return result;
  }
  std::vector<char> matched(gts.size(), 0);
  std::vector<double> precision, recall;
  std::size_t tp = 0, seen = 0;
  for (std::size_t idx : score_order(preds)) {
    double best = -1.0;
    std::size_t best_gt = gts.size();
    for (std::size_t g = 0; g < gts.size(); ++g) {
      if (matched[g]) continue;
      const double iou = bev_iou(preds[idx], gts[g]);
      if (iou >= iou_threshold && iou > best) {
        best = iou;
        best_gt = g;
      }
    }
    ++seen;
    if (best_gt < gts.size()) {
      matched[best_gt] = 1;
      ++tp;
    }
    precision.push_back(static_cast<double>(tp) / static_cast<double>(seen));
    recall.push_back(static_cast<double>(tp) / static_cast<double>(gts.size()));
  }
  result.true_positives = tp;
  // Precision envelope: best precision at this recall or beyond.
  for (std::size_t i = precision.size(); i-- > 1;) precision[i - 1] = std::max(precision[i - 1], precision[i]);

  if (mode == ApMode::interp101) {
    double sum = 0.0;
    std::size_t i = 0;
    for (int k = 0; k <= 100; ++k) {
      const double r = k / 100.0;
      while (i < recall.size() && recall[i] < r) ++i;
      if (i < recall.size()) sum += precision[i];
    }
    result.ap = sum / 101.0;
  } else {
    double prev = 0.0;
    for (std::size_t i = 0; i < recall.size(); ++i) {
      result.ap += (recall[i] - prev) * precision[i];
      prev = recall[i];
    }
  }
  return result;
}

std::string to_string(const CellKey& key) {
  return std::string(corruption_name(key.kind)) + "/" + std::to_string(key.severity);
}

std::vector<CellKey> missing_cells(const RobustnessTable& table, std::span<const CorruptionKind> kinds) {
  std::vector<CellKey> missing;
  for (CorruptionKind kind : kinds) {
    for (int s = 1; s <= kSeverityLevels; ++s) {
      if (!table.ap.contains({kind, s})) missing.push_back({kind, s});
    }
  }
  return missing;
}

double ap_corr(const RobustnessTable& table) {
  std::vector<CorruptionKind> kinds;
  for (const auto& [key, value] : table.ap) {
    if (kinds.empty() || kinds.back() != key.kind) kinds.push_back(key.kind);
  }
  return ap_corr(table, kinds);
}

double ap_corr(const RobustnessTable& table, std::span<const CorruptionKind> kinds) {
  if (kinds.empty()) throw ValidationError("ap_corr: no corruption kinds");
  const auto missing = missing_cells(table, kinds);
  if (!missing.empty()) {
    std::string list;
    for (const auto& key : missing) list += (list.empty() ? "" : ", ") + to_string(key);
    throw ValidationError("ap_corr: missing cells: " + list);
  }
  double total = 0.0;
  for (CorruptionKind kind : kinds) {
    double per_kind = 0.0;
    for (int s = 1; s <= kSeverityLevels; ++s) per_kind += table.ap.at({kind, s});
    total += per_kind / kSeverityLevels;
  }
  return total / static_cast<double>(kinds.size());
}

double rce(double ap_cln, double x) {
  if (!(ap_cln > 0.0)) throw ValidationError("rce: clean AP must be positive");
  return (ap_cln - x) / ap_cln;
}

void write_detections(std::ostream& out, std::span<const Box3D> boxes) {
  out << std::setprecision(17);
  for (const Box3D& b : boxes) {
    out << b.class_id << ' ' << b.score << ' ' << b.center[0] << ' ' << b.center[1] << ' ' << b.center[2] << ' '
        << b.size[0] << ' ' << b.size[1] << ' ' << b.size[2] << ' ' << b.yaw << '\n';
  }
}

std::vector<Box3D> read_detections(std::istream& in) {
  std::vector<Box3D> boxes;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream fields(line);
    Box3D b;
    fields >> b.class_id >> b.score >> b.center[0] >> b.center[1] >> b.center[2] >> b.size[0] >> b.size[1] >>
        b.size[2] >> b.yaw;
    std::string extra;
    if (fields.fail() || (fields >> extra)) {
      throw ValidationError("detections line " + std::to_string(line_no) + ": expected 9 fields");
    }
    try {
      b.validate();
    } catch (const ValidationError& e) {
      throw ValidationError("detections line " + std::to_string(line_no) + ": " + e.what());
    }
    boxes.push_back(b);
  }
  return boxes;
}

void save_detections(const std::filesystem::path& path, std::span<const Box3D> boxes) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write detections to " + path.string());
  write_detections(out, boxes);
}

std::vector<Box3D> load_detections(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot read detections from " + path.string());
  return read_detections(in);
}

}  // namespace savid
