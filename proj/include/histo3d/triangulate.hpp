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

#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <vector>

#include "histo3d/error.hpp"
#include "histo3d/geometry.hpp"
#include "histo3d/mesh.hpp"
#include "histo3d/polygon.hpp"

namespace histo3d {

using IndexTriangle = std::array<std::size_t, 3>;

namespace detail {

/// Closed-triangle test; q on an edge counts as inside.
inline bool in_triangle(const Vec2& a, const Vec2& b, const Vec2& c, const Vec2& q) {
  return cross2(a, b, q) >= 0.0 && cross2(b, c, q) >= 0.0 && cross2(c, a, q) >= 0.0;
}

}  // namespace detail

/// Triangulates a simple polygon by ear clipping. Returns |p| - 2 triangles
/// as counter-clockwise index triples into p.
///
/// Strictly convex ears are clipped first; collinear vertices are only
/// clipped (as zero-area ears) once no convex ear remains.
inline std::vector<IndexTriangle> ear_clip(const Polygon2D& p) {
  if (!is_simple(p)) throw SelfIntersectionError("cannot triangulate a self-intersecting polygon");
  const std::size_t n = p.size();
  std::vector<std::size_t> prev(n), next(n);
  for (std::size_t i = 0; i < n; ++i) {
    prev[i] = (i + n - 1) % n;
    next[i] = (i + 1) % n;
  }
  const auto blocked = [&](std::size_t i) {
    const Vec2& a = p[prev[i]];
    const Vec2& b = p[i];
    const Vec2& c = p[next[i]];
    for (std::size_t j = next[next[i]]; j != prev[i]; j = next[j]) {
      const Vec2& q = p[j];
      if (q == a || q == b || q == c) continue;
      if (detail::in_triangle(a, b, c, q)) return true;
    }
    return false;
  };

  std::vector<IndexTriangle> tris;
  tris.reserve(n - 2);
  std::size_t remaining = n;
  std::size_t cursor = 0;
  while (remaining > 3) {
    std::size_t ear = n;
    std::size_t i = cursor;
    for (std::size_t k = 0; k < remaining; ++k, i = next[i]) {
      if (cross2(p[prev[i]], p[i], p[next[i]]) > 0.0 && !blocked(i)) {
        ear = i;
        break;
      }
    }
    if (ear == n) {
      // Only flat or numerically reflex corners are left; clip the flattest.
      double best = std::numeric_limits<double>::infinity();
      i = cursor;
      for (std::size_t k = 0; k < remaining; ++k, i = next[i]) {
        const double c = std::abs(cross2(p[prev[i]], p[i], p[next[i]]));
        if (c < best) {
          best = c;
          ear = i;
        }
      }
    }
    tris.push_back({prev[ear], ear, next[ear]});
    next[prev[ear]] = next[ear];
    prev[next[ear]] = prev[ear];
    cursor = next[ear];
    --remaining;
  }
  tris.push_back({prev[cursor], cursor, next[cursor]});
  return tris;
}

/// Closed prism swept from `outline` (in `frame` coordinates) along the
/// frame normal, from -thickness/2 to +thickness/2.
inline TriMesh prism_mesh(const PlaneFrame& frame, const Polygon2D& outline, double thickness) {
  if (!(thickness > 0.0)) throw DegenerateError("extrusion thickness must be positive");
  const auto caps = ear_clip(outline);
  const std::size_t n = outline.size();
  const auto bottom = [](std::size_t i) { return static_cast<std::uint32_t>(i); };
  const auto top = [n](std::size_t i) { return static_cast<std::uint32_t>(n + i); };
  TriMesh m;
  m.vertices.reserve(2 * n);
  for (const Vec2& q : outline.points()) m.vertices.push_back(frame.lift(q, -0.5 * thickness));
  for (const Vec2& q : outline.points()) m.vertices.push_back(frame.lift(q, 0.5 * thickness));
  for (const IndexTriangle& t : caps) {
    m.triangles.push_back({top(t[0]), top(t[1]), top(t[2])});
    m.triangles.push_back({bottom(t[0]), bottom(t[2]), bottom(t[1])});
  }
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t j = (i + 1) % n;
    m.triangles.push_back({bottom(i), bottom(j), top(j)});
    m.triangles.push_back({bottom(i), top(j), top(i)});
  }
  return m;
}

}  // namespace histo3d
