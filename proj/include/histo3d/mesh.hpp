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
#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "histo3d/error.hpp"
#include "histo3d/geometry.hpp"

namespace histo3d {

inline constexpr double kDegenerateTriangleArea = 1e-9;  // mm^2

using Triangle = std::array<std::uint32_t, 3>;

/// Indexed triangle surface. Counter-clockwise winding seen from outside.
struct TriMesh {
  std::vector<Vec3> vertices;
  std::vector<Triangle> triangles;

  bool operator==(const TriMesh&) const = default;

  /// Appends `other` as a disjoint component.
  void append(const TriMesh& other) {
    const auto base = static_cast<std::uint32_t>(vertices.size());
    vertices.insert(vertices.end(), other.vertices.begin(), other.vertices.end());
    for (const Triangle& t : other.triangles) {
      triangles.push_back({t[0] + base, t[1] + base, t[2] + base});
    }
  }
};

inline double triangle_area(const Vec3& a, const Vec3& b, const Vec3& c) {
  return 0.5 * (b - a).cross(c - a).norm();
}

/// Checks index ranges and drops zero-area triangles. Throws EmptyMeshError
/// if nothing is left.
inline TriMesh sanitize(TriMesh m) {
  const std::size_t n = m.vertices.size();
  std::vector<Triangle> kept;
  kept.reserve(m.triangles.size());
  for (std::size_t i = 0; i < m.triangles.size(); ++i) {
    const Triangle& t = m.triangles[i];
    for (auto idx : t) {
      if (idx >= n) {
        throw FormatError("triangle " + std::to_string(i) + " references vertex " +
                          std::to_string(idx) + " of " + std::to_string(n));
      }
    }
    if (t[0] == t[1] || t[1] == t[2] || t[0] == t[2]) continue;
    if (triangle_area(m.vertices[t[0]], m.vertices[t[1]], m.vertices[t[2]]) <
        kDegenerateTriangleArea) {
      continue;
    }
    kept.push_back(t);
  }
  if (kept.empty()) throw EmptyMeshError("mesh has no triangles");
  m.triangles = std::move(kept);
  return m;
}

/// Every directed edge appears exactly once and its reverse exactly once.
inline bool is_closed(const TriMesh& m) {
  if (m.triangles.empty()) return false;
  std::map<std::pair<std::uint32_t, std::uint32_t>, int> directed;
  for (const Triangle& t : m.triangles) {
    for (int k = 0; k < 3; ++k) {
      if (++directed[{t[k], t[(k + 1) % 3]}] > 1) return false;
    }
  }
  for (const auto& [edge, count] : directed) {
    if (!directed.contains({edge.second, edge.first})) return false;
  }
  return true;
}

/// Signed enclosed volume; positive for outward-facing triangles.
inline double mesh_volume(const TriMesh& m) {
  if (!is_closed(m)) throw OpenMeshError("volume requires a closed mesh");
  const Vec3 o = m.vertices[m.triangles.front()[0]];
  double six = 0.0;
  for (const Triangle& t : m.triangles) {
    const Vec3 a = m.vertices[t[0]] - o;
    const Vec3 b = m.vertices[t[1]] - o;
    const Vec3 c = m.vertices[t[2]] - o;
    six += a.dot(b.cross(c));
  }
  return six / 6.0;
}

inline AABB bounding_box(const TriMesh& m) {
  if (m.vertices.empty()) throw EmptyMeshError("bounding box of an empty mesh");
  AABB box;
  for (const Vec3& v : m.vertices) box.extend(v);
  return box;
}

/// Maps vertices; mirrors flip triangle winding so normals stay outward.
inline TriMesh apply_transform(const TriMesh& m, const AffineTransform3D& t) {
  const double det = t.determinant();
  if (!std::isfinite(det) || std::abs(det) < 1e-12) {
    throw SingularTransformError("transform is not invertible (det=" +
                                 std::to_string(det) + ")");
  }
  TriMesh out;
  out.vertices.reserve(m.vertices.size());
  for (const Vec3& v : m.vertices) out.vertices.push_back(t.apply(v));
  out.triangles = m.triangles;
  if (det < 0) {
    for (Triangle& tri : out.triangles) std::swap(tri[1], tri[2]);
  }
  return out;
}

namespace detail {

/// Closed latitude/longitude surface around the origin. `point(theta, phi)`
/// gets the polar angle theta in [0, pi] (0 at -z) and azimuth phi.
template <typename PointFn>
TriMesh lat_long_surface(int stacks, int slices, PointFn&& point) {
  TriMesh m;
  m.vertices.push_back(point(0.0, 0.0));
  for (int i = 1; i < stacks; ++i) {
    const double theta = std::numbers::pi * i / stacks;
    for (int j = 0; j < slices; ++j) {
      m.vertices.push_back(point(theta, 2.0 * std::numbers::pi * j / slices));
    }
  }
  m.vertices.push_back(point(std::numbers::pi, 0.0));

  const auto ring = [slices](int i, int j) {
    return static_cast<std::uint32_t>(1 + (i - 1) * slices + (j % slices));
  };
  const auto south = 0u;
  const auto north = static_cast<std::uint32_t>(m.vertices.size() - 1);
  for (int j = 0; j < slices; ++j) {
    m.triangles.push_back({south, ring(1, j + 1), ring(1, j)});
  }
  for (int i = 1; i + 1 < stacks; ++i) {
    for (int j = 0; j < slices; ++j) {
      m.triangles.push_back({ring(i, j), ring(i, j + 1), ring(i + 1, j + 1)});
      m.triangles.push_back({ring(i, j), ring(i + 1, j + 1), ring(i + 1, j)});
    }
  }
  for (int j = 0; j < slices; ++j) {
    m.triangles.push_back({ring(stacks - 1, j), ring(stacks - 1, j + 1), north});
  }
  return m;
}

inline double signed_pow(double x, double e) {
  return std::copysign(std::pow(std::abs(x), e), x);
}

}  // namespace detail

/// UV-sphere tessellation of an axis-aligned ellipsoid.
inline TriMesh ellipsoid_mesh(const Vec3& center, const Vec3& semi_axes, int stacks,
                              int slices) {
  if (stacks < 2 || slices < 3) throw ArgumentError("ellipsoid tessellation too coarse");
  if ((semi_axes.array() <= 0).any()) throw ArgumentError("ellipsoid semi-axes must be positive");
  return detail::lat_long_surface(stacks, slices, [&](double theta, double phi) {
    const double s = std::sin(theta);
    return Vec3(center.x() + semi_axes.x() * s * std::cos(phi),
                center.y() + semi_axes.y() * s * std::sin(phi),
                center.z() - semi_axes.z() * std::cos(theta));
  });
}

inline constexpr double kGenericModelExponent = 0.8;

/// Procedural stand-in for the generic prostate: a superellipsoid with
/// exponent 0.8 of equal extent along all axes, stretched so its bounding
/// box is exactly (width, height, depth) along (x, y, z) and centred at the
/// origin.
inline TriMesh generic_prostate_model(double width_mm, double height_mm, double depth_mm,
                                      int stacks = 32, int slices = 64) {
  if (!(width_mm > 0 && height_mm > 0 && depth_mm > 0)) {
    throw ArgumentError("generic model dimensions must be positive");
  }
  if (stacks < 8 || slices < 8) throw ArgumentError("generic model needs stacks, slices >= 8");
  const double e = kGenericModelExponent;
  TriMesh m = detail::lat_long_surface(stacks, slices, [e](double theta, double phi) {
    const double ring = detail::signed_pow(std::sin(theta), e);
    return Vec3(ring * detail::signed_pow(std::cos(phi), e),
                ring * detail::signed_pow(std::sin(phi), e),
                -detail::signed_pow(std::cos(theta), e));
  });
  // Tessellations that miss an axis extreme would come out undersized.
  const AABB box = bounding_box(m);
  const Vec3 target(width_mm, height_mm, depth_mm);
  const Vec3 scale = target.cwiseQuotient(box.extent());
  const Vec3 mid = box.center();
  for (Vec3& v : m.vertices) {
    v = (v - mid).cwiseProduct(scale);
  }
  return sanitize(std::move(m));
}

}  // namespace histo3d
