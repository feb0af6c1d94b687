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
#include <array>
#include <cmath>
#include <cstdint>
#include <set>
#include <span>
#include <utility>
#include <vector>

#include "histo3d/error.hpp"
#include "histo3d/geometry.hpp"
#include "histo3d/mesh.hpp"
#include "histo3d/polygon.hpp"
#include "histo3d/triangulate.hpp"

namespace histo3d {

inline constexpr double kCoplanarTolerance = 1e-6;  // mm

namespace detail {

/// Andrew's monotone chain; counter-clockwise, collinear points dropped.
inline std::vector<Vec2> hull_2d(std::vector<Vec2> pts) {
  std::sort(pts.begin(), pts.end(), [](const Vec2& a, const Vec2& b) {
    return a.x() < b.x() || (a.x() == b.x() && a.y() < b.y());
  });
  pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
  if (pts.size() < 3) return pts;
  std::vector<Vec2> h(2 * pts.size());
  std::size_t k = 0;
  for (const Vec2& p : pts) {
    while (k >= 2 && cross2(h[k - 2], h[k - 1], p) <= 0.0) --k;
    h[k++] = p;
  }
  const std::size_t lower = k + 1;
  for (auto it = pts.rbegin() + 1; it != pts.rend(); ++it) {
    while (k >= lower && cross2(h[k - 2], h[k - 1], *it) <= 0.0) --k;
    h[k++] = *it;
  }
  h.resize(k - 1);
  return h;
}

struct HullFace {
  std::array<std::uint32_t, 3> v;
  Vec3 normal;
  double offset;
  bool alive = true;
};

inline HullFace make_face(std::span<const Vec3> pts, std::uint32_t a, std::uint32_t b,
                          std::uint32_t c) {
  Vec3 n = (pts[b] - pts[a]).cross(pts[c] - pts[a]);
  const double len = n.norm();
  if (len > 0.0) n /= len;
  return {{a, b, c}, n, n.dot(pts[a]), true};
}

}  // namespace detail

/// Convex hull of a point cloud as a closed, outward-oriented mesh.
///
/// Points within 1e-6 mm of a common plane have no volume of their own: their
/// planar hull is extruded by `coplanar_thickness` (symmetric about the
/// plane), or InsufficientPointsError is thrown when that is not positive.
inline TriMesh convex_hull(std::span<const Vec3> pts, double coplanar_thickness = 0.0) {
  if (pts.size() < 3) throw InsufficientPointsError("convex hull needs at least 3 points");
  const auto far_from = [&](auto dist) {
    std::size_t best = 0;
    double best_d = -1.0;
    for (std::size_t i = 0; i < pts.size(); ++i) {
      const double d = dist(pts[i]);
      if (d > best_d) {
        best_d = d;
        best = i;
      }
    }
    return std::pair{best, best_d};
  };
  const std::size_t i0 =
      static_cast<std::size_t>(std::distance(pts.begin(), std::min_element(
          pts.begin(), pts.end(), [](const Vec3& a, const Vec3& b) { return a.x() < b.x(); })));
  const Vec3 p0 = pts[i0];
  const auto [i1, d1] = far_from([&](const Vec3& p) { return (p - p0).norm(); });
  if (d1 <= kCoplanarTolerance) throw InsufficientPointsError("hull points coincide");
  const Vec3 axis = (pts[i1] - p0) / d1;
  const auto [i2, d2] = far_from([&](const Vec3& p) { return (p - p0).cross(axis).norm(); });
  if (d2 <= kCoplanarTolerance) throw InsufficientPointsError("hull points are collinear");
  const Vec3 plane_n = axis.cross(pts[i2] - p0).normalized();
  const auto [i3, d3] = far_from([&](const Vec3& p) { return std::abs((p - p0).dot(plane_n)); });

  if (d3 <= kCoplanarTolerance) {
    if (!(coplanar_thickness > 0.0)) {
      throw InsufficientPointsError("hull points are coplanar and no thickness is available");
    }
    const PlaneFrame frame(p0, axis, plane_n.cross(axis));
    std::vector<Vec2> flat;
    flat.reserve(pts.size());
    for (const Vec3& p : pts) flat.push_back(frame.project(p));
    return prism_mesh(frame, Polygon2D(detail::hull_2d(std::move(flat))), coplanar_thickness);
  }

  const AABB box = [&] {
    AABB b;
    for (const Vec3& p : pts) b.extend(p);
    return b;
  }();
  const double eps = 1e-10 * std::max(1.0, box.extent().maxCoeff());

  using detail::HullFace;
  std::vector<HullFace> faces;
  const auto u = [](std::size_t i) { return static_cast<std::uint32_t>(i); };
  {
    const std::array<std::uint32_t, 4> t{u(i0), u(i1), u(i2), u(i3)};
    const Vec3 inside = 0.25 * (pts[t[0]] + pts[t[1]] + pts[t[2]] + pts[t[3]]);
    for (int skip = 0; skip < 4; ++skip) {
      std::array<std::uint32_t, 3> f{};
      for (int k = 0, m = 0; k < 4; ++k) {
        if (k != skip) f[m++] = t[k];
      }
      HullFace face = detail::make_face(pts, f[0], f[1], f[2]);
      if (face.normal.dot(inside) - face.offset > 0.0) {
        face = detail::make_face(pts, f[0], f[2], f[1]);
      }
      faces.push_back(face);
    }
  }

  std::vector<std::size_t> visible;
  std::set<std::pair<std::uint32_t, std::uint32_t>> edges;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    if (i == i0 || i == i1 || i == i2 || i == i3) continue;
    const Vec3& p = pts[i];
    visible.clear();
    for (std::size_t f = 0; f < faces.size(); ++f) {
      if (faces[f].alive && faces[f].normal.dot(p) - faces[f].offset > eps) visible.push_back(f);
    }
    if (visible.empty()) continue;
    edges.clear();
    for (std::size_t f : visible) {
      const auto& v = faces[f].v;
      for (int k = 0; k < 3; ++k) edges.emplace(v[k], v[(k + 1) % 3]);
      faces[f].alive = false;
    }
    for (const auto& [a, b] : edges) {
      if (!edges.contains({b, a})) faces.push_back(detail::make_face(pts, a, b, u(i)));
    }
  }

  TriMesh m;
  std::vector<std::int64_t> remap(pts.size(), -1);
  for (const HullFace& f : faces) {
    if (!f.alive) continue;
    Triangle t{};
    for (int k = 0; k < 3; ++k) {
      if (remap[f.v[k]] < 0) {
        remap[f.v[k]] = static_cast<std::int64_t>(m.vertices.size());
        m.vertices.push_back(pts[f.v[k]]);
      }
      t[k] = static_cast<std::uint32_t>(remap[f.v[k]]);
    }
    m.triangles.push_back(t);
  }
  return m;
}

}  // namespace histo3d
