#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "pillarmamba/eval.hpp"
#include "pillarmamba/rng.hpp"

using namespace pillarmamba;

namespace {

Box3D random_box(Rng& rng, double spread = 4.0) {
  return Box3D{rng.uniform(-spread, spread),
               rng.uniform(-spread, spread),
               rng.uniform(-1.0, 1.0),
               rng.uniform(0.3, 5.0),
               rng.uniform(0.3, 3.0),
               rng.uniform(0.5, 2.0),
               rng.uniform(-std::numbers::pi, std::numbers::pi),
               0};
}

Box3D rigid(const Box3D& b, double angle, double tx, double ty) {
  Box3D r = b;
  r.x = std::cos(angle) * b.x - std::sin(angle) * b.y + tx;
  r.y = std::sin(angle) * b.x + std::cos(angle) * b.y + ty;
  r.yaw = normalize_yaw(b.yaw + angle);
  return r;
}

// Axis-aligned 3D IoU computed from interval overlaps only.
double aligned_iou(const Box3D& a, const Box3D& b) {
  auto overlap = [](double c1, double s1, double c2, double s2) {
    return std::max(0.0, std::min(c1 + s1 / 2, c2 + s2 / 2) - std::max(c1 - s1 / 2, c2 - s2 / 2));
  };
  const double inter = overlap(a.x, a.l, b.x, b.l) * overlap(a.y, a.w, b.y, b.w) * overlap(a.z, a.h, b.z, b.h);
  return inter / (a.l * a.w * a.h + b.l * b.w * b.h - inter);
}

// For every score cut, rerun greedy matching on only the detections above it and count precision and recall.
std::optional<double> brute_force_ap(const std::vector<std::vector<Detection>>& dets,
                                     const std::vector<std::vector<Box3D>>& gts, int cls, double thr) {
  std::int64_t num_gt = 0;
  for (const auto& s : gts)
    for (const auto& g : s) num_gt += g.cls == cls;
  if (num_gt == 0) return std::nullopt;
  std::vector<double> cuts;
  for (const auto& s : dets)
    for (const auto& d : s)
      if (d.box.cls == cls) cuts.push_back(d.score);
  std::vector<std::pair<std::int64_t, std::int64_t>> points;  // (tp, kept)
  for (double cut : cuts) {
    std::vector<std::tuple<double, std::size_t, const Detection*>> kept;
    for (std::size_t s = 0; s < dets.size(); ++s)
      for (const auto& d : dets[s])
        if (d.box.cls == cls && d.score >= cut) kept.emplace_back(d.score, s, &d);
    std::sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) { return std::get<0>(a) > std::get<0>(b); });
    std::vector<std::vector<bool>> used;
    for (const auto& s : gts) used.emplace_back(s.size(), false);
    std::int64_t tp = 0;
    for (const auto& [score, s, d] : kept) {
      int best = -1;
      double best_iou = -1;
      for (std::size_t g = 0; g < gts[s].size(); ++g) {
        if (gts[s][g].cls != cls || used[s][g]) continue;
        const double v = aligned_iou(d->box, gts[s][g]);
        if (v >= thr && v > best_iou) best = static_cast<int>(g), best_iou = v;
      }
      if (best >= 0) used[s][static_cast<std::size_t>(best)] = true, ++tp;
    }
    points.emplace_back(tp, static_cast<std::int64_t>(kept.size()));
  }
  double sum = 0;
  for (std::int64_t i = 1; i <= 40; ++i) {
    double best = 0;
    for (auto [tp, n] : points)
      if (tp * 40 >= i * num_gt) best = std::max(best, static_cast<double>(tp) / static_cast<double>(n));
    sum += best;
  }
  return sum / 40;
}

Box3D aligned_box(Rng& rng, int cls) {
  // Dimensions on a coarse lattice so overlaps between boxes are common.
  return Box3D{static_cast<double>(rng.below(4)) * 0.5,
               static_cast<double>(rng.below(4)) * 0.5,
               static_cast<double>(rng.below(3)) * 0.25,
               1.0 + static_cast<double>(rng.below(3)) * 0.5,
               1.0 + static_cast<double>(rng.below(3)) * 0.5,
               1.0,
               0.0,
               cls};
}

}  // namespace

TEST_CASE("rotated IoU examples") {
  Box3D a{0, 0, 0, 4, 2, 1, 0, 0};
  CHECK(rotated_iou_bev(a, a) == doctest::Approx(1.0).epsilon(1e-12));
  Box3D b = a;
  b.x = 1.0;
  CHECK(rotated_iou_bev(a, b) == doctest::Approx(0.6).epsilon(1e-12));
  Box3D sq{1, 2, 0, 2, 2, 1, 0.3, 0};
  Box3D turned = sq;
  turned.yaw += std::numbers::pi / 2;
  CHECK(rotated_iou_bev(sq, turned) == doctest::Approx(1.0).epsilon(1e-12));
  Box3D far = a;
  far.x = 10;
  CHECK(rotated_iou_bev(a, far) == 0.0);
  // Touching edges share no area.
  Box3D touch = a;
  touch.x = 4.0;
  CHECK(rotated_iou_bev(a, touch) == doctest::Approx(0.0).epsilon(1e-12));

  // 3D: half z-overlap on identical footprints gives (1/2)/(3/2).
  Box3D up = a;
  up.z = 0.5;
  CHECK(rotated_iou_3d(a, up) == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
  up.z = 1.0;
  CHECK(rotated_iou_3d(a, up) == 0.0);

  // A 45-degree square inside an axis square: octagon overlap.
  Box3D axis{0, 0, 0, 2, 2, 1, 0, 0};
  Box3D diamond = axis;
  diamond.yaw = std::numbers::pi / 4;
  const double octagon = 8.0 * (std::sqrt(2.0) - 1.0);
  CHECK(rotated_iou_bev(axis, diamond) == doctest::Approx(octagon / (8.0 - octagon)).epsilon(1e-12));
}

TEST_CASE("degenerate boxes count and give zero") {
  reset_degenerate_iou_count();
  Box3D a{0, 0, 0, 4, 2, 1, 0, 0};
  Box3D flat = a;
  flat.w = 0;
  CHECK(rotated_iou_bev(a, flat) == 0.0);
  CHECK(rotated_iou_bev(flat, flat) == 0.0);
  CHECK(degenerate_iou_count() == 2);
}

TEST_CASE("rotated IoU against axis-aligned interval arithmetic") {
  Rng rng(5);
  for (int i = 0; i < 500; ++i) {
    Box3D a = random_box(rng, 2.0), b = random_box(rng, 2.0);
    a.yaw = b.yaw = 0.0;
    CHECK(rotated_iou_3d(a, b) == doctest::Approx(aligned_iou(a, b)).epsilon(1e-12));
  }
}

TEST_CASE("IoU symmetry, range and rigid-motion invariance") {
  Rng rng(6);
  for (int i = 0; i < 1000; ++i) {
    const Box3D a = random_box(rng), b = random_box(rng);
    const double ab = rotated_iou_bev(a, b), ba = rotated_iou_bev(b, a);
    CHECK(std::abs(ab - ba) <= 1e-12);
    CHECK(std::abs(rotated_iou_3d(a, b) - rotated_iou_3d(b, a)) <= 1e-12);
    CHECK(ab >= 0.0);
    CHECK(ab <= 1.0);
    const double angle = rng.uniform(-std::numbers::pi, std::numbers::pi);
    const double tx = rng.uniform(-50, 50), ty = rng.uniform(-50, 50);
    CHECK(std::abs(rotated_iou_bev(rigid(a, angle, tx, ty), rigid(b, angle, tx, ty)) - ab) < 1e-9);
  }
}

TEST_CASE("AP examples") {
  const Box3D gt{0, 0, 0, 4, 2, 1.5, 0, 0};
  std::vector<std::vector<Box3D>> gts{{gt}};
  auto one = ap_r40({{{gt, 0.9}}}, gts, 0);
  REQUIRE(one.ap.has_value());
  CHECK(*one.ap == 1.0);
  CHECK(ap_r40({{}}, gts, 0).ap == 0.0);
  Box3D miss = gt;
  miss.x = 20;
  auto tp_fp = ap_r40({{{gt, 0.9}, {miss, 0.8}}}, gts, 0);
  CHECK(*tp_fp.ap == 1.0);
  CHECK(tp_fp.true_positives == 1);
  // FP ranked first halves the precision at every recall point.
  auto fp_tp = ap_r40({{{gt, 0.8}, {miss, 0.9}}}, gts, 0);
  CHECK(*fp_tp.ap == 0.5);
  CHECK_FALSE(ap_r40({{{gt, 0.9}}}, gts, 1).ap.has_value());

  // Pedestrian threshold 0.25 accepts an IoU 0.6 match that vehicle's 0.5 also accepts; 1/3 only passes 0.25.
  Box3D shifted = gt;
  shifted.z = 0.75;  // 3D IoU = 1/3
  CHECK(*ap_r40({{{shifted, 0.9}}}, gts, 0).ap == 0.0);
  Box3D ped = gt;
  ped.cls = 1;
  shifted.cls = 1;
  CHECK(*ap_r40({{{shifted, 0.9}}}, {{ped}}, 1).ap == 1.0);

  // A GT can be matched once; a duplicate detection is a false positive.
  auto dup = ap_r40({{{gt, 0.9}, {gt, 0.8}}}, gts, 0);
  CHECK(dup.true_positives == 1);
  // Detections only match inside their own scene.
  auto cross_scene = ap_r40({{}, {{gt, 0.9}}}, {{gt}, {}}, 0);
  CHECK(*cross_scene.ap == 0.0);
}

TEST_CASE("AP matches brute-force PR enumeration") {
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    CAPTURE(seed);
    Rng rng(7000 + seed);
    const std::size_t scenes = 1 + rng.below(3);
    std::vector<std::vector<Box3D>> gts(scenes);
    std::vector<std::vector<Detection>> dets(scenes);
    std::vector<double> scores;
    const std::size_t nd = rng.below(11);
    for (std::size_t i = 0; i < nd; ++i) scores.push_back(static_cast<double>(i + 1) / 16.0);
    rng.shuffle(std::span<double>(scores));
    for (auto& s : gts)
      for (std::size_t i = 0, n = rng.below(4); i < n; ++i) s.push_back(aligned_box(rng, static_cast<int>(rng.below(2))));
    for (std::size_t i = 0; i < nd; ++i)
      dets[rng.below(scenes)].push_back({aligned_box(rng, static_cast<int>(rng.below(2))), scores[i]});
    ApOptions opts;
    opts.iou_threshold = {0.3, 0.3, 0.3};
    for (int cls = 0; cls < 2; ++cls) {
      const auto got = ap_r40(dets, gts, cls, opts).ap;
      const auto want = brute_force_ap(dets, gts, cls, 0.3);
      REQUIRE(got.has_value() == want.has_value());
      if (got) CHECK(*got == *want);
    }
  }
}

TEST_CASE("AP ignores input order and grows with a top-ranked true positive") {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    CAPTURE(seed);
    Rng rng(8000 + seed);
    std::vector<std::vector<Box3D>> gts(2);
    std::vector<std::vector<Detection>> dets(2);
    for (auto& s : gts)
      for (int i = 0; i < 3; ++i) s.push_back(aligned_box(rng, 0));
    for (auto& s : dets)
      for (int i = 0; i < 6; ++i) s.push_back({aligned_box(rng, 0), rng.uniform(0.0, 1.0)});
    const auto base = ap_r40(dets, gts, 0);
    auto shuffled = dets;
    for (auto& s : shuffled) rng.shuffle(std::span<Detection>(s));
    CHECK(*ap_r40(shuffled, gts, 0).ap == *base.ap);

    // Add a new GT plus an exact detection above every score: it always matches and comes first.
    auto gts2 = gts;
    auto dets2 = dets;
    Box3D extra{30, 30, 0, 2, 2, 1, 0, 0};
    gts2[0].push_back(extra);
    dets2[0].push_back({extra, 2.0});
    const auto before = ap_r40(dets, gts2, 0);
    const auto after = ap_r40(dets2, gts2, 0);
    CHECK(*after.ap >= *before.ap);
  }
}

TEST_CASE("evaluate reports per class") {
  Box3D v{0, 0, 0, 4, 2, 1.5, 0, 0};
  Box3D c{10, 0, 0, 1.8, 0.6, 1.7, 0, 2};
  auto res = evaluate({{{v, 0.9}, {c, 0.7}}}, {{v, c}});
  REQUIRE(res.size() == 3);
  CHECK(*res[0].ap == 1.0);
  CHECK_FALSE(res[1].ap.has_value());
  CHECK(*res[2].ap == 1.0);
  CHECK(res[2].precision_at_recall.size() == 40);
  CHECK_THROWS_AS(evaluate({{}}, {}), ContractViolation);
}
