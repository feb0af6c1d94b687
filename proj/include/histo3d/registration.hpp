// Copyright 2026 The histo3d Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <numbers>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/SVD>
#include <json.hpp>

#include "histo3d/annotations.hpp"
#include "histo3d/error.hpp"
#include "histo3d/geometry.hpp"
#include "histo3d/mesh_io.hpp"
#include "histo3d/polygon.hpp"
#include "histo3d/slicing.hpp"

namespace histo3d {

/// p -> scale * R(theta) * p + translation, theta in (-pi, pi].
struct Similarity2D {
  double theta = 0.0;
  double scale = 1.0;
  Vec2 translation = Vec2::Zero();

  static Similarity2D identity() { return {}; }

  static Similarity2D rotation_about(const Vec2& center, double theta) {
    Similarity2D r{theta, 1.0, Vec2::Zero()};
    r.translation = center - r.rotation() * center;
    return r.normalized();
  }

  Mat2 rotation() const {
    const double c = std::cos(theta), s = std::sin(theta);
    Mat2 r;
    r << c, -s, s, c;
    return r;
  }

  Vec2 apply(const Vec2& p) const { return scale * (rotation() * p) + translation; }

  std::vector<Vec2> apply(std::span<const Vec2> pts) const {
    const Mat2 sr = scale * rotation();
    std::vector<Vec2> out;
    out.reserve(pts.size());
    for (const Vec2& p : pts) out.push_back(sr * p + translation);
    return out;
  }

  /// Positive scale and a proper rotation keep the winding, so the vertex
  /// order of the result matches the input.
  Polygon2D apply(const Polygon2D& p) const { return Polygon2D(apply(std::span(p.points()))); }

  /// (*this) after `first`.
  Similarity2D after(const Similarity2D& first) const {
    Similarity2D out;
    out.theta = theta + first.theta;
    out.scale = scale * first.scale;
    out.translation = scale * (rotation() * first.translation) + translation;
    return out.normalized();
  }

  Similarity2D inverse() const {
    Similarity2D inv;
    inv.theta = -theta;
    inv.scale = 1.0 / scale;
    inv.translation = -(inv.rotation() * translation) / scale;
    return inv.normalized();
  }

  Similarity2D normalized() const {
    Similarity2D out = *this;
    out.theta = std::remainder(theta, 2.0 * std::numbers::pi);
    if (out.theta <= -std::numbers::pi) out.theta += 2.0 * std::numbers::pi;
    return out;
  }
};

struct CpdConfig {
  int target_points = 500;
  double outlier_weight = 0.0;
  int max_iterations = 150;
  /// Convergence when |sigma2_new - sigma2| / sigma2 drops below this.
  double sigma_tolerance = 1e-8;
  int rotation_restarts = 8;
  double restart_step_deg = 45.0;
  int iou_resolution = 512;
  /// Off: rigid only, scale stays at the pre-alignment value.
  bool estimate_scale = true;

  void validate() const {
    if (target_points < 3) throw ArgumentError("target_points must be >= 3");
    if (!(outlier_weight >= 0.0 && outlier_weight < 1.0)) {
      throw ArgumentError("outlier_weight must be in [0, 1)");
    }
    if (max_iterations < 1) throw ArgumentError("max_iterations must be >= 1");
    if (!(sigma_tolerance > 0.0)) throw ArgumentError("sigma_tolerance must be positive");
    if (rotation_restarts < 1) throw ArgumentError("rotation_restarts must be >= 1");
    if (!std::isfinite(restart_step_deg)) throw ArgumentError("restart_step_deg must be finite");
    if (iou_resolution < 64) throw ArgumentError("iou_resolution must be >= 64");
  }
};

/// Inserts the midpoint of the longest edge (first one on ties) until the
/// polygon has at least `target` vertices. The shape is unchanged.
inline Polygon2D upsample_polygon(const Polygon2D& p, int target) {
  if (target <= static_cast<int>(p.size())) return p;
  std::vector<Vec2> pts = p.points();
  std::vector<double> len(pts.size());
  for (std::size_t i = 0; i < pts.size(); ++i) len[i] = (pts[(i + 1) % pts.size()] - pts[i]).norm();
  pts.reserve(target);
  len.reserve(target);
  while (static_cast<int>(pts.size()) < target) {
    const auto longest = static_cast<std::size_t>(
        std::distance(len.begin(), std::max_element(len.begin(), len.end())));
    const Vec2 mid = 0.5 * (pts[longest] + pts[(longest + 1) % pts.size()]);
    const double half = 0.5 * len[longest];
    pts.insert(pts.begin() + static_cast<std::ptrdiff_t>(longest) + 1, mid);
    len[longest] = half;
    len.insert(len.begin() + static_cast<std::ptrdiff_t>(longest) + 1, half);
  }
  return Polygon2D(std::move(pts));
}

/// Centroid and largest-extent pre-alignment of `moving` onto `fixed`.
inline Similarity2D prealign(const Polygon2D& moving, const Polygon2D& fixed) {
  const Vec2 me = moving.bounds().extent();
  const Vec2 fe = fixed.bounds().extent();
  const double m_side = std::max(me.x(), me.y());
  const double f_side = std::max(fe.x(), fe.y());
  if (!(m_side > 0.0) || !(f_side > 0.0)) throw DegenerateError("polygon has no extent");
  Similarity2D t;
  t.scale = f_side / m_side;
  t.translation = polygon_centroid(fixed) - t.scale * polygon_centroid(moving);
  return t;
}

namespace detail {

/// Kernel terms below exp(-kKernelCutoff) relative to the nearest one are
/// negligible in double precision.
inline constexpr double kKernelCutoff = 40.0;

/// exp(-a) for a in [0, kKernelCutoff], relative error below 1e-15: a
/// power-of-two split with a degree-12 polynomial on [-ln2/2, ln2/2].
/// Branch-free so loops over it vectorize.
inline double kernel_exp(double a) {
  constexpr double kLog2e = 1.4426950408889634;
  constexpr double kLn2Hi = 6.93147180369123816490e-01;
  constexpr double kLn2Lo = 1.90821492927058770002e-10;
  constexpr double kRound = 6755399441055744.0;  // 1.5 * 2^52
  const double shifted = a * kLog2e + kRound;
  const double k = shifted - kRound;
  const double g = (k * kLn2Hi - a) + k * kLn2Lo;  // -a + k ln2, |g| <= ln2/2
  // Estrin evaluation of sum g^i / i!, i = 0..12.
  const double g2 = g * g;
  const double g4 = g2 * g2;
  const double g8 = g4 * g4;
  const double c01 = 1.0 + g;
  const double c23 = 1.0 / 2 + g * (1.0 / 6);
  const double c45 = 1.0 / 24 + g * (1.0 / 120);
  const double c67 = 1.0 / 720 + g * (1.0 / 5040);
  const double c89 = 1.0 / 40320 + g * (1.0 / 362880);
  const double c1011 = 1.0 / 3628800 + g * (1.0 / 39916800);
  const double c12 = 1.0 / 479001600;
  const double lo = (c01 + g2 * c23) + g4 * (c45 + g2 * c67);
  const double hi = (c89 + g2 * c1011) + g4 * c12;
  const double p = lo + g8 * hi;
  // 2^-k from the integer held in the low mantissa bits of `shifted`.
  const std::uint64_t ki = std::bit_cast<std::uint64_t>(shifted) - std::bit_cast<std::uint64_t>(kRound);
  return p * std::bit_cast<double>((std::uint64_t{1023} - ki) << 52);
}

}  // namespace detail

struct CpdResult {
  Similarity2D transform;
  int iterations = 0;
  double sigma2 = 0.0;
  bool converged = false;
};

/// Rigid-plus-isotropic-scale Coherent Point Drift aligning `moving` onto
/// `fixed`, starting from `init`.
///
/// The E-step uses Gaussian responsibilities with a uniform outlier term of
/// weight w; the M-step solves rotation by SVD of the weighted
/// cross-covariance, then scale, translation and sigma^2 in closed form.
/// Responsibilities are computed relative to each fixed point's nearest
/// moving point, so they stay finite as sigma^2 shrinks.
inline CpdResult cpd_similarity(std::span<const Vec2> fixed, std::span<const Vec2> moving,
                                const CpdConfig& cfg,
                                const Similarity2D& init = Similarity2D::identity()) {
  const std::size_t n_fixed = fixed.size();
  const std::size_t n_moving = moving.size();
  if (n_fixed < 3 || n_moving < 3) throw ArgumentError("CPD needs at least 3 points per set");
  constexpr double kDim = 2.0;

  Similarity2D current = init;
  std::vector<Vec2> moved = current.apply(moving);

  double sigma2 = 0.0;
  for (const Vec2& x : fixed) {
    for (const Vec2& y : moved) sigma2 += (x - y).squaredNorm();
  }
  sigma2 /= kDim * static_cast<double>(n_fixed * n_moving);
  if (!(sigma2 > 0.0)) {
    return {current, 0, sigma2, true};
  }
  const double sigma2_floor = 1e-12 * sigma2;

  const double w = cfg.outlier_weight;
  // Moved points sorted by x: each fixed point only visits the x-window that
  // can hold kernel terms above exp(-kKernelCutoff).
  std::vector<std::uint32_t> order(n_moving);
  std::vector<double> sx(n_moving), sy(n_moving);
  const auto sort_moved = [&] {
    std::iota(order.begin(), order.end(), 0u);
    std::sort(order.begin(), order.end(), [&](std::uint32_t a, std::uint32_t b) {
      return moved[a].x() < moved[b].x() || (moved[a].x() == moved[b].x() && a < b);
    });
    for (std::size_t k = 0; k < n_moving; ++k) {
      sx[k] = moved[order[k]].x();
      sy[k] = moved[order[k]].y();
    }
  };
  sort_moved();
  // Accumulators in sorted order, mapped back once per iteration.
  std::vector<double> p1s(n_moving), pxs(n_moving), pys(n_moving);
  std::vector<double> p1(n_moving);
  std::vector<Vec2> px(n_moving);
  std::vector<double> pt1(n_fixed);
  std::vector<double> e(n_moving);

  CpdResult result;
  for (int iter = 1; iter <= cfg.max_iterations; ++iter) {
    result.iterations = iter;
    // E-step.
    std::fill(p1s.begin(), p1s.end(), 0.0);
    std::fill(pxs.begin(), pxs.end(), 0.0);
    std::fill(pys.begin(), pys.end(), 0.0);
    const double two_s2 = 2.0 * sigma2;
    const double inv_two_s2 = 1.0 / two_s2;
    const double outlier =
        w > 0.0 ? 2.0 * std::numbers::pi * sigma2 * w / (1.0 - w) *
                      static_cast<double>(n_moving) / static_cast<double>(n_fixed)
                : 0.0;
    for (std::size_t n = 0; n < n_fixed; ++n) {
      const double x = fixed[n].x();
      const double y = fixed[n].y();
      const auto start = static_cast<std::size_t>(
          std::distance(sx.begin(), std::lower_bound(sx.begin(), sx.end(), x)));
      double dmin = std::numeric_limits<double>::infinity();
      for (std::size_t k = start; k < n_moving; ++k) {
        const double dx = sx[k] - x;
        if (dx * dx >= dmin) break;
        dmin = std::min(dmin, dx * dx + (sy[k] - y) * (sy[k] - y));
      }
      for (std::size_t k = start; k-- > 0;) {
        const double dx = sx[k] - x;
        if (dx * dx >= dmin) break;
        dmin = std::min(dmin, dx * dx + (sy[k] - y) * (sy[k] - y));
      }
      const double reach = std::sqrt(dmin + detail::kKernelCutoff * two_s2);
      const auto lo = static_cast<std::size_t>(
          std::distance(sx.begin(), std::lower_bound(sx.begin(), sx.end(), x - reach)));
      const auto hi = static_cast<std::size_t>(
          std::distance(sx.begin(), std::upper_bound(sx.begin(), sx.end(), x + reach)));
      for (std::size_t k = lo; k < hi; ++k) {
        const double dx = sx[k] - x;
        const double dy = sy[k] - y;
        const double a = (dx * dx + dy * dy - dmin) * inv_two_s2;
        // min(a, cutoff) without a branch; far terms floor at exp(-cutoff).
        constexpr double c = detail::kKernelCutoff;
        e[k] = detail::kernel_exp(0.5 * ((a + c) - std::abs(a - c)));
      }
      // Four interleaved partial sums; fixed order keeps the result exact
      // across runs.
      double part[4] = {0.0, 0.0, 0.0, 0.0};
      std::size_t k = lo;
      for (; k + 4 <= hi; k += 4) {
        for (int j = 0; j < 4; ++j) part[j] += e[k + static_cast<std::size_t>(j)];
      }
      for (; k < hi; ++k) part[0] += e[k];
      double denom = (part[0] + part[1]) + (part[2] + part[3]);
      const double row = denom;
      if (outlier > 0.0) denom += outlier * std::exp(std::min(dmin * inv_two_s2, 700.0));
      const double inv = 1.0 / denom;
      for (k = lo; k < hi; ++k) {
        const double p = e[k] * inv;
        p1s[k] += p;
        pxs[k] += p * x;
        pys[k] += p * y;
      }
      pt1[n] = row * inv;
    }
    for (std::size_t k = 0; k < n_moving; ++k) {
      p1[order[k]] = p1s[k];
      px[order[k]] = Vec2(pxs[k], pys[k]);
    }

    // M-step.
    double np = 0.0;
    Vec2 mu_x = Vec2::Zero();
    Vec2 mu_y = Vec2::Zero();
    for (std::size_t n = 0; n < n_fixed; ++n) mu_x += pt1[n] * fixed[n];
    for (std::size_t m = 0; m < n_moving; ++m) {
      np += p1[m];
      mu_y += p1[m] * moving[m];
    }
    if (!(np > 0.0)) throw NonConvergenceError("CPD: every fixed point classified as outlier");
    mu_x /= np;
    mu_y /= np;

    Mat2 a = Mat2::Zero();
    double y_py = 0.0;
    for (std::size_t m = 0; m < n_moving; ++m) {
      a += px[m] * moving[m].transpose();
      y_py += p1[m] * (moving[m] - mu_y).squaredNorm();
    }
    a -= np * mu_x * mu_y.transpose();
    double x_px = 0.0;
    for (std::size_t n = 0; n < n_fixed; ++n) x_px += pt1[n] * (fixed[n] - mu_x).squaredNorm();

    Eigen::JacobiSVD<Mat2> svd(a, Eigen::ComputeFullU | Eigen::ComputeFullV);
    Mat2 c = Mat2::Identity();
    c(1, 1) = (svd.matrixU() * svd.matrixV().transpose()).determinant() < 0 ? -1.0 : 1.0;
    const Mat2 r = svd.matrixU() * c * svd.matrixV().transpose();
    const double tr_ar = (a.transpose() * r).trace();

    Similarity2D next;
    next.theta = std::atan2(r(1, 0), r(0, 0));
    next.scale = cfg.estimate_scale ? tr_ar / y_py : current.scale;
    if (!(next.scale > 0.0) || !std::isfinite(next.scale)) {
      throw NonConvergenceError("CPD: scale estimate is not positive");
    }
    next.translation = mu_x - next.scale * (next.rotation() * mu_y);
    double next_sigma2 =
        (x_px - 2.0 * next.scale * tr_ar + next.scale * next.scale * y_py) / (np * kDim);
    if (!std::isfinite(next_sigma2)) throw NonConvergenceError("CPD: sigma^2 is not finite");

    current = next.normalized();
    moved = current.apply(moving);
    sort_moved();
    if (next_sigma2 <= sigma2_floor) {
      sigma2 = std::max(next_sigma2, 0.0);
      result.converged = true;
      break;
    }
    const double change = std::abs(next_sigma2 - sigma2) / sigma2;
    sigma2 = next_sigma2;
    if (change < cfg.sigma_tolerance) {
      result.converged = true;
      break;
    }
  }
  result.transform = current;
  result.sigma2 = sigma2;
  return result;
}

/// Intersection over union of the two polygons' rasterizations.
///
/// Both are sampled at cell centres of one grid covering the union of their
/// bounding boxes, `resolution` cells along its longer side, with even-odd
/// filling.
inline double iou(const Polygon2D& a, const Polygon2D& b, int resolution = 512) {
  if (resolution < 64) throw ArgumentError("iou resolution must be >= 64");
  Box2 box = a.bounds();
  box.extend(b.bounds());
  const Vec2 ext = box.extent();
  const double longest = std::max(ext.x(), ext.y());
  if (!(longest > 0.0)) throw DegenerateError("polygons have no extent");
  const double cell = longest / resolution;
  const int nx = std::clamp(static_cast<int>(std::ceil(ext.x() / cell)), 1, resolution);
  const int ny = std::clamp(static_cast<int>(std::ceil(ext.y() / cell)), 1, resolution);

  std::vector<std::uint8_t> row(static_cast<std::size_t>(nx));
  std::vector<double> xs;
  const auto fill = [&](const Polygon2D& poly, double y, std::uint8_t bit) {
    xs.clear();
    const std::size_t n = poly.size();
    for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
      const Vec2& p = poly[i];
      const Vec2& q = poly[j];
      if ((p.y() > y) != (q.y() > y)) {
        xs.push_back(p.x() + (y - p.y()) * (q.x() - p.x()) / (q.y() - p.y()));
      }
    }
    std::sort(xs.begin(), xs.end());
    for (std::size_t k = 0; k + 1 < xs.size(); k += 2) {
      // Cells whose centre lies in [x0, x1).
      const double lo = (xs[k] - box.min.x()) / cell - 0.5;
      const double hi = (xs[k + 1] - box.min.x()) / cell - 0.5;
      const int i0 = std::max(0, static_cast<int>(std::ceil(lo)));
      const int i1 = std::min(nx, static_cast<int>(std::ceil(hi)));
      for (int i = i0; i < i1; ++i) row[static_cast<std::size_t>(i)] |= bit;
    }
  };

  std::size_t inter = 0;
  std::size_t uni = 0;
  for (int j = 0; j < ny; ++j) {
    const double y = box.min.y() + (j + 0.5) * cell;
    std::fill(row.begin(), row.end(), 0);
    fill(a, y, 1);
    fill(b, y, 2);
    for (std::uint8_t v : row) {
      inter += v == 3;
      uni += v != 0;
    }
  }
  if (uni == 0) throw DegenerateError("polygons vanish at this raster resolution");
  return static_cast<double>(inter) / static_cast<double>(uni);
}

/// Planar polygon embedded in 3D through a plane frame.
struct PlanarPolygon3D {
  PlaneFrame frame;
  Polygon2D outline;

  std::vector<Vec3> points3d() const {
    std::vector<Vec3> out;
    out.reserve(outline.size());
    for (const Vec2& q : outline.points()) out.push_back(frame.lift(q));
    return out;
  }
};

struct RegisteredRoi {
  std::string class_label;
  PlanarPolygon3D polygon;
};

struct RegistrationResult {
  std::string polygon_name;
  std::string slide_name;
  std::string case_id;
  /// Slide coordinates -> reference-plane coordinates, pre-alignment included.
  Similarity2D transform;
  double iou = 0.0;
  double restart_angle_deg = 0.0;
  int iterations_used = 0;
  bool converged = true;
  PlanarPolygon3D registered_contour;
  std::vector<RegisteredRoi> registered_rois;
  /// Slab width of the reference polygon, used by extrusion and splatting.
  double thickness_mm = 0.0;
  Region region;
};

/// Registers one slide contour onto its reference polygon.
///
/// Both outlines are upsampled, the contour is pre-aligned, and CPD is run
/// from `rotation_restarts` initial rotations about the contour centroid.
/// The candidate with the highest IoU wins, ties going to the smaller
/// restart angle. Its transform is then applied to the original contour and
/// every ROI, which are lifted into the reference plane.
inline RegistrationResult register_slide(const SlideAnnotations& slide,
                                         const ReferencePolygon& ref, const CpdConfig& cfg,
                                         const std::string& case_id = "") {
  cfg.validate();
  const Polygon2D moving = upsample_polygon(slide.contour, cfg.target_points);
  const Polygon2D fixed = upsample_polygon(ref.outline, cfg.target_points);
  const Similarity2D pre = prealign(moving, fixed);
  const Vec2 pivot = polygon_centroid(moving);

  struct Candidate {
    CpdResult cpd;
    double score = -1.0;
    double angle_deg = 0.0;
  };
  std::optional<Candidate> best;
  for (int k = 0; k < cfg.rotation_restarts; ++k) {
    const double angle = k * cfg.restart_step_deg;
    const Similarity2D init = pre.after(Similarity2D::rotation_about(pivot, deg_to_rad(angle)));
    try {
      CpdResult cpd = cpd_similarity(fixed.points(), moving.points(), cfg, init);
      const double score = iou(cpd.transform.apply(moving), ref.outline, cfg.iou_resolution);
      if (!best || score > best->score) best = Candidate{cpd, score, angle};
    } catch (const NonConvergenceError&) {
    } catch (const DegenerateError&) {
    }
  }
  if (!best) throw NoCandidateError(slide.slide_name + ": every restart failed");

  RegistrationResult res;
  res.polygon_name = ref.name;
  res.slide_name = slide.slide_name;
  res.case_id = case_id;
  res.transform = best->cpd.transform;
  res.iou = best->score;
  res.restart_angle_deg = best->angle_deg;
  res.iterations_used = best->cpd.iterations;
  res.converged = best->cpd.converged;
  res.registered_contour = {ref.frame, res.transform.apply(slide.contour)};
  for (const Roi& roi : slide.rois) {
    res.registered_rois.push_back({roi.class_label, {ref.frame, res.transform.apply(roi.polygon)}});
  }
  res.thickness_mm = ref.thickness_mm;
  res.region = ref.region;
  return res;
}

enum class ExportGranularity { Slide, Annotation };

struct RegisteredExport {
  std::string json;
  std::vector<std::pair<std::string, std::string>> obj_files;  // (filename, content)
};

/// Filename-safe form of a class label.
inline std::string label_token(const std::string& label) {
  std::string out;
  for (unsigned char c : label) {
    out += std::isalnum(c) || c == '-' || c == '.' ? static_cast<char>(c) : '_';
  }
  return out.empty() ? "_" : out;
}

/// JSON: one entry per annotation (the contour has class "Contour" and
/// roi_index null). OBJ: one per slide, or one per annotation named
/// `<case>_<name>_<class>_<k>.obj` for ROI k.
inline RegisteredExport serialize_registered(std::span<const RegistrationResult> results,
                                             ExportGranularity per) {
  using nlohmann::ordered_json;
  RegisteredExport out;
  ordered_json arr = ordered_json::array();
  const auto entry = [](const RegistrationResult& r, const std::string& label,
                        const ordered_json& roi_index, const PlanarPolygon3D& poly) {
    const auto pts = poly.points3d();
    return ordered_json{
        {"name", r.polygon_name},
        {"slide", r.slide_name},
        {"case_id", r.case_id},
        {"class_label", label},
        {"roi_index", roi_index},
        {"region", r.region.name()},
        {"slice_index", detail::region_json(r.region)},
        {"thickness_mm", r.thickness_mm},
        {"iou", r.iou},
        {"restart_angle_deg", r.restart_angle_deg},
        {"iterations", r.iterations_used},
        {"transform",
         {{"theta_deg", rad_to_deg(r.transform.theta)},
          {"scale", r.transform.scale},
          {"translation", {r.transform.translation.x(), r.transform.translation.y()}}}},
        {"points", detail::points_json(pts)},
        {"edges", detail::cycle_edges_json(pts.size())}};
  };
  for (const RegistrationResult& r : results) {
    arr.push_back(entry(r, kContourClass, nullptr, r.registered_contour));
    for (std::size_t k = 0; k < r.registered_rois.size(); ++k) {
      arr.push_back(entry(r, r.registered_rois[k].class_label, k, r.registered_rois[k].polygon));
    }
    const std::string stem = r.case_id + "_" + r.polygon_name;
    if (per == ExportGranularity::Slide) {
      std::vector<std::vector<Vec3>> loops{r.registered_contour.points3d()};
      for (const auto& roi : r.registered_rois) loops.push_back(roi.polygon.points3d());
      out.obj_files.emplace_back(stem + ".obj", write_obj_polylines(loops));
    } else {
      out.obj_files.emplace_back(stem + ".obj",
                                 write_obj_polylines({r.registered_contour.points3d()}));
      for (std::size_t k = 0; k < r.registered_rois.size(); ++k) {
        const auto& roi = r.registered_rois[k];
        out.obj_files.emplace_back(
            stem + "_" + label_token(roi.class_label) + "_" + std::to_string(k) + ".obj",
            write_obj_polylines({roi.polygon.points3d()}));
      }
    }
  }
  out.json = arr.dump(1) + "\n";
  return out;
}

/// Inverse of serialize_registered's JSON. Entries sharing a name form one
/// result; the entry classed "Contour" with null roi_index is its contour.
inline std::vector<RegistrationResult> parse_registered(std::string_view text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw SyntaxError("", std::string("malformed JSON: ") + e.what());
  }
  if (!j.is_array()) throw SchemaError("", "registered results must be a JSON array");
  std::vector<RegistrationResult> out;
  std::map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < j.size(); ++i) {
    const std::string path = "[" + std::to_string(i) + "]";
    const auto& e = j[i];
    const auto str = [&](const char* key) {
      if (!e.is_object() || !e.contains(key) || !e[key].is_string()) {
        throw SchemaError(path + "." + key, "expected a string");
      }
      return e[key].get<std::string>();
    };
    const auto num = [&](const char* key) {
      if (!e.contains(key) || !e[key].is_number()) {
        throw SchemaError(path + "." + key, "expected a number");
      }
      return e[key].get<double>();
    };
    const std::string name = str("name");
    const std::string label = str("class_label");
    const Region region = detail::parse_region(e, path);
    const auto pts = detail::parse_points(e.value("points", nlohmann::json()), path + ".points");
    if (pts.size() < 3) throw SchemaError(path + ".points", "need at least 3 points");
    const auto order =
        detail::edge_cycle(e.value("edges", nlohmann::json()), pts.size(), path + ".edges");
    PlanarPolygon3D poly;
    poly.frame = frame_for_region(region, pts[0]);
    std::vector<Vec2> outline;
    for (auto k : order) outline.push_back(poly.frame.project(pts[k]));
    try {
      poly.outline = Polygon2D(std::move(outline));
    } catch (const DegenerateError& err) {
      throw SchemaError(path + ".points", err.what());
    }

    auto [it, inserted] = index.emplace(name, out.size());
    if (inserted) {
      RegistrationResult r;
      r.polygon_name = name;
      r.slide_name = str("slide");
      r.case_id = str("case_id");
      r.region = region;
      r.thickness_mm = num("thickness_mm");
      r.iou = num("iou");
      r.restart_angle_deg = num("restart_angle_deg");
      r.iterations_used = static_cast<int>(num("iterations"));
      if (e.contains("transform") && e["transform"].is_object()) {
        const auto& t = e["transform"];
        r.transform.theta = deg_to_rad(t.value("theta_deg", 0.0));
        r.transform.scale = t.value("scale", 1.0);
        if (t.contains("translation") && t["translation"].is_array() &&
            t["translation"].size() == 2) {
          r.transform.translation = Vec2(t["translation"][0].get<double>(),
                                         t["translation"][1].get<double>());
        }
      }
      out.push_back(std::move(r));
    }
    RegistrationResult& r = out[it->second];
    const bool is_contour = label == kContourClass && (!e.contains("roi_index") || e["roi_index"].is_null());
    if (is_contour) {
      r.registered_contour = std::move(poly);
    } else {
      r.registered_rois.push_back({label, std::move(poly)});
    }
  }
  for (const auto& r : out) {
    if (r.registered_contour.outline.size() == 0) {
      throw SchemaError("", "result '" + r.polygon_name + "' has no Contour entry");
    }
  }
  return out;
}

}  // namespace histo3d
