#include "pillarmamba/eval.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <string>
#include <tuple>

namespace pillarmamba {

namespace {

std::atomic<std::int64_t> g_degenerate{0};

double cross(const Point2& o, const Point2& a, const Point2& b) {
  return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0]);
}

Point2 line_intersection(const Point2& p, const Point2& q, const Point2& a, const Point2& b) {
  const double d1 = cross(a, b, p), d2 = cross(a, b, q);
  const double t = d1 / (d1 - d2);
  return {p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])};
}

Polygon corners(const Box3D& b) {
  auto f = footprint(b);
  return Polygon(f.begin(), f.end());
}

bool degenerate(const Box3D& b) { return !(b.l > 0.0 && b.w > 0.0); }

double bev_intersection(const Box3D& a, const Box3D& b) {
  return polygon_area(clip_convex(corners(a), corners(b)));
}

}  // namespace

double polygon_area(const Polygon& poly) {
  double s = 0.0;
  for (std::size_t i = 0; i < poly.size(); ++i) {
    const auto& p = poly[i];
    const auto& q = poly[(i + 1) % poly.size()];
    s += p[0] * q[1] - q[0] * p[1];
  }
  return std::abs(s) / 2.0;
}

Polygon clip_convex(const Polygon& subject, const Polygon& clip) {
  Polygon out = subject;
  for (std::size_t e = 0; e < clip.size() && !out.empty(); ++e) {
    const Point2& a = clip[e];
    const Point2& b = clip[(e + 1) % clip.size()];
    Polygon in = std::move(out);
    out.clear();
    for (std::size_t i = 0; i < in.size(); ++i) {
      const Point2& p = in[i];
      const Point2& q = in[(i + 1) % in.size()];
      const bool p_in = cross(a, b, p) >= 0.0, q_in = cross(a, b, q) >= 0.0;
      if (p_in) out.push_back(p);
      if (p_in != q_in) out.push_back(line_intersection(p, q, a, b));
    }
  }
  return out;
}

double rotated_iou_bev(const Box3D& a, const Box3D& b) {
  if (degenerate(a) || degenerate(b)) {
    ++g_degenerate;
    return 0.0;
  }
  const double inter = bev_intersection(a, b);
  const double uni = a.l * a.w + b.l * b.w - inter;
  return uni > 0.0 ? std::clamp(inter / uni, 0.0, 1.0) : 0.0;
}

double rotated_iou_3d(const Box3D& a, const Box3D& b) {
  if (degenerate(a) || degenerate(b) || !(a.h > 0.0 && b.h > 0.0)) {
    ++g_degenerate;
    return 0.0;
  }
  const double dz = std::min(a.z + a.h / 2, b.z + b.h / 2) - std::max(a.z - a.h / 2, b.z - b.h / 2);
  if (dz <= 0.0) return 0.0;
  const double inter = bev_intersection(a, b) * dz;
  const double uni = a.l * a.w * a.h + b.l * b.w * b.h - inter;
  return uni > 0.0 ? std::clamp(inter / uni, 0.0, 1.0) : 0.0;
}

std::int64_t degenerate_iou_count() { return g_degenerate.load(); }
void reset_degenerate_iou_count() { g_degenerate = 0; }

std::vector<RankedDetection> rank_detections(const std::vector<std::vector<Detection>>& detections, int cls) {
  std::vector<RankedDetection> ranked;
  for (std::size_t s = 0; s < detections.size(); ++s)
    for (std::size_t i = 0; i < detections[s].size(); ++i)
      if (detections[s][i].box.cls == cls) ranked.push_back({s, i, &detections[s][i]});
  auto key = [](const RankedDetection& r) {
    const auto& b = r.det->box;
    return std::make_tuple(-r.det->score, r.scene, b.x, b.y, b.z, b.l, b.w, b.h, b.yaw);
  };
  std::stable_sort(ranked.begin(), ranked.end(),
                   [&](const RankedDetection& a, const RankedDetection& b) { return key(a) < key(b); });
  return ranked;
}

MatchResult match_class(const std::vector<RankedDetection>& ranked, const std::vector<std::vector<Box3D>>& gts,
                        int cls, double threshold, IouKind iou) {
  MatchResult m;
  std::vector<std::size_t> scene_offset(gts.size() + 1, 0);
  for (std::size_t s = 0; s < gts.size(); ++s) scene_offset[s + 1] = scene_offset[s] + gts[s].size();
  m.gt_matched.assign(scene_offset.back(), false);
  for (const auto& r : ranked) {
    require(r.scene < gts.size(), "match_class: detection scene without ground truth list");
    std::int64_t best = -1;
    double best_iou = threshold;
    for (std::size_t g = 0; g < gts[r.scene].size(); ++g) {
      const Box3D& gt = gts[r.scene][g];
      const auto flat = scene_offset[r.scene] + g;
      if (gt.cls != cls || m.gt_matched[flat]) continue;
      const double v = iou == IouKind::bev ? rotated_iou_bev(r.det->box, gt) : rotated_iou_3d(r.det->box, gt);
      if (v >= best_iou) {
        if (best < 0 || v > best_iou) best = static_cast<std::int64_t>(flat);
        best_iou = std::max(best_iou, v);
      }
    }
    if (best >= 0) m.gt_matched[static_cast<std::size_t>(best)] = true;
    m.detection_to_gt.push_back(best);
  }
  return m;
}

ClassAp ap_r40(const std::vector<std::vector<Detection>>& detections, const std::vector<std::vector<Box3D>>& gts,
               int cls, const ApOptions& opts) {
  require(cls >= 0 && cls < kNumClasses, "ap_r40: class id out of range");
  ClassAp out;
  out.cls = cls;
  for (const auto& scene : gts)
    for (const auto& g : scene) out.num_gt += g.cls == cls;
  const auto ranked = rank_detections(detections, cls);
  out.num_detections = static_cast<std::int64_t>(ranked.size());
  const auto match = match_class(ranked, gts, cls, opts.iou_threshold[static_cast<std::size_t>(cls)], opts.iou);
  if (out.num_gt == 0) return out;

  std::vector<double> precision;
  std::vector<std::int64_t> tp_at;
  std::int64_t tp = 0;
  for (std::size_t k = 0; k < ranked.size(); ++k) {
    tp += match.detection_to_gt[k] >= 0;
    tp_at.push_back(tp);
    precision.push_back(static_cast<double>(tp) / static_cast<double>(k + 1));
  }
  out.true_positives = tp;
  // Suffix maximum gives the interpolated precision at every recall level.
  for (std::size_t k = precision.size(); k-- > 1;) precision[k - 1] = std::max(precision[k - 1], precision[k]);
  double sum = 0.0;
  for (std::int64_t i = 1; i <= opts.recall_points; ++i) {
    // recall tp / num_gt >= i / recall_points, compared in integers
    double p = 0.0;
    for (std::size_t k = 0; k < tp_at.size(); ++k)
      if (tp_at[k] * opts.recall_points >= i * out.num_gt) {
        p = precision[k];
        break;
      }
    out.precision_at_recall.push_back(p);
    sum += p;
  }
  out.ap = sum / opts.recall_points;
  return out;
}

std::vector<ClassAp> evaluate(const std::vector<std::vector<Detection>>& detections,
                              const std::vector<std::vector<Box3D>>& gts, const ApOptions& opts) {
  require(detections.size() == gts.size(), "evaluate: " + std::to_string(detections.size()) +
                                               " detection lists vs " + std::to_string(gts.size()) + " scenes");
  std::vector<ClassAp> out;
  for (int c = 0; c < kNumClasses; ++c) out.push_back(ap_r40(detections, gts, c, opts));
  return out;
}

}  // namespace pillarmamba
