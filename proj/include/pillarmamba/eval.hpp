#pragma once

#include <array>
#include <optional>
#include <vector>

#include "pillarmamba/box.hpp"

namespace pillarmamba {

using Point2 = std::array<double, 2>;
using Polygon = std::vector<Point2>;

/// Absolute shoelace area.
double polygon_area(const Polygon& poly);

/// Sutherland-Hodgman clipping of `subject` by the convex counter-clockwise polygon `clip`.
Polygon clip_convex(const Polygon& subject, const Polygon& clip);

/// BEV rotated-rectangle IoU in [0, 1]. Zero-area boxes give 0 and bump degenerate_iou_count().
double rotated_iou_bev(const Box3D& a, const Box3D& b);

/// BEV intersection times z-overlap, over the union of volumes.
double rotated_iou_3d(const Box3D& a, const Box3D& b);

std::int64_t degenerate_iou_count();
void reset_degenerate_iou_count();

enum class IouKind { bev, box3d };

struct ApOptions {
  std::array<double, kNumClasses> iou_threshold = {0.5, 0.25, 0.25};
  IouKind iou = IouKind::box3d;
  std::int64_t recall_points = 40;
};

struct MatchResult {
  std::vector<std::int64_t> detection_to_gt;  // per detection in global order, -1 when unmatched
  std::vector<bool> gt_matched;
};

struct ClassAp {
  int cls = 0;
  std::optional<double> ap;  // none when the class has no ground truth
  std::int64_t num_gt = 0;
  std::int64_t num_detections = 0;
  std::int64_t true_positives = 0;
  std::vector<double> precision_at_recall;  // interpolated precision at r = k / recall_points
};

/// Detections of all scenes in descending score order; ties break on scene index, then box fields.
struct RankedDetection {
  std::size_t scene;
  std::size_t index;
  const Detection* det;
};
std::vector<RankedDetection> rank_detections(const std::vector<std::vector<Detection>>& detections, int cls);

/// Greedy matching of one class, each detection taking the best unmatched same-scene GT at or above threshold.
MatchResult match_class(const std::vector<RankedDetection>& ranked, const std::vector<std::vector<Box3D>>& gts,
                        int cls, double threshold, IouKind iou);

/// AP with precision interpolated as the max precision at recall >= r, averaged over r = 1/N .. 1.
ClassAp ap_r40(const std::vector<std::vector<Detection>>& detections, const std::vector<std::vector<Box3D>>& gts,
               int cls, const ApOptions& opts = {});

std::vector<ClassAp> evaluate(const std::vector<std::vector<Detection>>& detections,
                              const std::vector<std::vector<Box3D>>& gts, const ApOptions& opts = {});

}  // namespace pillarmamba
