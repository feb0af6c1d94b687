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
#include <cmath>
#include <cstddef>
#include <utility>
#include <vector>

#include "histo3d/error.hpp"
#include "histo3d/geometry.hpp"

namespace histo3d {

inline constexpr double kPointTolerance = 1e-9;  // mm
inline constexpr double kAreaTolerance = 1e-9;   // mm^2

inline double signed_area(std::span<const Vec2> pts) {
  if (pts.size() < 3) return 0.0;
  const Vec2& o = pts[0];
  double twice = 0.0;
  for (std::size_t i = 1; i + 1 < pts.size(); ++i) {
    twice += cross2(pts[i] - o, pts[i + 1] - o);
  }
  return 0.5 * twice;
}

/// Closed planar loop. Construction drops consecutive duplicates (including
/// a repeated closing vertex) and normalizes the winding to counter-clockwise.
class Polygon2D {
 public:
  Polygon2D() = default;

  explicit Polygon2D(std::vector<Vec2> points) : points_(std::move(points)) {
    std::vector<Vec2> cleaned;
    cleaned.reserve(points_.size());
    for (const Vec2& p : points_) {
      if (cleaned.empty() || (p - cleaned.back()).norm() > kPointTolerance) {
        cleaned.push_back(p);
      }
    }
    while (cleaned.size() > 1 &&
           (cleaned.front() - cleaned.back()).norm() <= kPointTolerance) {
      cleaned.pop_back();
    }
    if (cleaned.size() < 3) {
      throw DegenerateError("polygon needs at least 3 distinct points, got " +
                            std::to_string(cleaned.size()));
    }
    if (signed_area(cleaned) < 0.0) std::reverse(cleaned.begin(), cleaned.end());
    points_ = std::move(cleaned);
  }

  const std::vector<Vec2>& points() const { return points_; }
  std::size_t size() const { return points_.size(); }
  const Vec2& operator[](std::size_t i) const { return points_[i]; }
  const Vec2& vertex(std::size_t i) const { return points_[i % points_.size()]; }

  Box2 bounds() const {
    Box2 b;
    for (const Vec2& p : points_) b.extend(p);
    return b;
  }

  bool operator==(const Polygon2D& o) const { return points_ == o.points_; }

 private:
  std::vector<Vec2> points_;
};

inline double polygon_area(const Polygon2D& p) {
  const double a = signed_area(p.points());
  if (a < kAreaTolerance) throw DegenerateError("polygon area below tolerance");
  return a;
}

inline double polygon_perimeter(const Polygon2D& p) {
  double len = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) len += (p.vertex(i + 1) - p[i]).norm();
  return len;
}

/// Area centroid.
inline Vec2 polygon_centroid(const Polygon2D& p) {
  const Vec2& o = p[0];
  double twice = 0.0;
  Vec2 acc = Vec2::Zero();
  for (std::size_t i = 1; i + 1 < p.size(); ++i) {
    const Vec2 a = p[i] - o;
    const Vec2 b = p[i + 1] - o;
    const double c = cross2(a, b);
    twice += c;
    acc += c * (a + b);
  }
  if (0.5 * twice < kAreaTolerance) throw DegenerateError("polygon area below tolerance");
  return o + acc / (3.0 * twice);
}

/// Area-weighted centroid of several disjoint loops.
inline Vec2 polygons_centroid(std::span<const Polygon2D> polys) {
  double total = 0.0;
  Vec2 acc = Vec2::Zero();
  for (const Polygon2D& p : polys) {
    const double a = polygon_area(p);
    total += a;
    acc += a * polygon_centroid(p);
  }
  if (total <= 0.0) throw DegenerateError("no area to take a centroid of");
  return acc / total;
}

/// Even-odd point containment.
inline bool contains(const Polygon2D& poly, const Vec2& q) {
  bool inside = false;
  const std::size_t n = poly.size();
  for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
    const Vec2& a = poly[i];
    const Vec2& b = poly[j];
    if ((a.y() > q.y()) != (b.y() > q.y())) {
      const double x = a.x() + (q.y() - a.y()) * (b.x() - a.x()) / (b.y() - a.y());
      if (q.x() < x) inside = !inside;
    }
  }
  return inside;
}

namespace detail {

inline int orientation_sign(const Vec2& a, const Vec2& b, const Vec2& c) {
  const double v = cross2(a, b, c);
  return (v > 0) - (v < 0);
}

inline bool on_segment(const Vec2& a, const Vec2& b, const Vec2& q) {
  return std::min(a.x(), b.x()) <= q.x() && q.x() <= std::max(a.x(), b.x()) &&
         std::min(a.y(), b.y()) <= q.y() && q.y() <= std::max(a.y(), b.y());
}

inline bool segments_intersect(const Vec2& a, const Vec2& b, const Vec2& c,
                               const Vec2& d) {
  const int o1 = orientation_sign(a, b, c);
  const int o2 = orientation_sign(a, b, d);
  const int o3 = orientation_sign(c, d, a);
  const int o4 = orientation_sign(c, d, b);
  if (o1 != o2 && o3 != o4) return true;
  if (o1 == 0 && on_segment(a, b, c)) return true;
  if (o2 == 0 && on_segment(a, b, d)) return true;
  if (o3 == 0 && on_segment(c, d, a)) return true;
  if (o4 == 0 && on_segment(c, d, b)) return true;
  return false;
}

}  // namespace detail

/// True when no two non-adjacent edges touch and no adjacent edges fold back
/// onto each other.
inline bool is_simple(const Polygon2D& poly) {
  const std::size_t n = poly.size();
  std::vector<Box2> boxes(n);
  for (std::size_t i = 0; i < n; ++i) {
    boxes[i].extend(poly[i]);
    boxes[i].extend(poly.vertex(i + 1));
  }
  for (std::size_t i = 0; i < n; ++i) {
    const Vec2& a = poly[i];
    const Vec2& b = poly.vertex(i + 1);
    const Vec2& c = poly.vertex(i + 2);
    if (detail::orientation_sign(a, b, c) == 0 && (a - b).dot(c - b) > 0) return false;
    for (std::size_t j = i + 2; j < n; ++j) {
      if (i == 0 && j == n - 1) continue;
      if (!boxes[i].intersects(boxes[j])) continue;
      if (detail::segments_intersect(a, b, poly[j], poly.vertex(j + 1))) return false;
    }
  }
  return true;
}

/// Closed half-plane {q : (q - point) . normal >= 0}.
struct HalfPlane {
  Vec2 point = Vec2::Zero();
  Vec2 normal = Vec2::UnitX();

  double signed_distance(const Vec2& q) const { return (q - point).dot(normal); }
  HalfPlane flipped() const { return {point, -normal}; }
};

/// Portion of a simple polygon inside a half-plane.
///
/// Inside runs of the boundary are collected between their entry and exit
/// crossings; crossings are then sorted along the cut line and paired, and
/// each exit is re-chained to the entry it pairs with. This yields one
/// polygon per connected component, so a U-shape cut across its mouth
/// gives two pieces.
inline std::vector<Polygon2D> clip_polygon(const Polygon2D& poly, const HalfPlane& hp) {
  if (hp.normal.norm() == 0.0) throw DegenerateError("half-plane normal is zero");
  const std::size_t n = poly.size();
  std::vector<double> s(n);
  bool any_in = false;
  bool any_out = false;
  for (std::size_t i = 0; i < n; ++i) {
    s[i] = hp.signed_distance(poly[i]);
    (s[i] >= 0.0 ? any_in : any_out) = true;
  }
  if (!any_out) return {poly};
  if (!any_in) return {};

  enum class Kind { Vertex, Entry, Exit };
  struct Item {
    Kind kind;
    Vec2 p;
  };
  std::vector<Item> ring;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t j = (i + 1) % n;
    const bool in_i = s[i] >= 0.0;
    const bool in_j = s[j] >= 0.0;
    if (in_i) ring.push_back({Kind::Vertex, poly[i]});
    if (in_i != in_j) {
      const double t = s[i] / (s[i] - s[j]);
      const Vec2 x = poly[i] + t * (poly[j] - poly[i]);
      ring.push_back({in_i ? Kind::Exit : Kind::Entry, x});
    }
  }
  const auto first_entry =
      std::find_if(ring.begin(), ring.end(), [](const Item& it) { return it.kind == Kind::Entry; });
  std::rotate(ring.begin(), first_entry, ring.end());

  // Chains: Entry, inside vertices..., Exit.
  struct Chain {
    std::vector<Vec2> pts;
    std::size_t next = 0;
  };
  std::vector<Chain> chains;
  for (const Item& it : ring) {
    if (it.kind == Kind::Entry) chains.emplace_back();
    chains.back().pts.push_back(it.p);
  }

  // Direction of travel along the cut line that keeps the inside on the left.
  const Vec2 dir(hp.normal.y(), -hp.normal.x());
  struct Crossing {
    double t;
    std::size_t chain;
    bool is_exit;
  };
  std::vector<Crossing> crossings;
  for (std::size_t c = 0; c < chains.size(); ++c) {
    crossings.push_back({chains[c].pts.front().dot(dir), c, false});
    crossings.push_back({chains[c].pts.back().dot(dir), c, true});
  }
  std::stable_sort(crossings.begin(), crossings.end(),
                   [](const Crossing& a, const Crossing& b) { return a.t < b.t; });
  for (std::size_t k = 0; k + 1 < crossings.size(); k += 2) {
    const Crossing& a = crossings[k];
    const Crossing& b = crossings[k + 1];
    if (a.is_exit == b.is_exit) {
      throw DegenerateError("inconsistent crossings while clipping polygon");
    }
    const Crossing& exit = a.is_exit ? a : b;
    const Crossing& entry = a.is_exit ? b : a;
    chains[exit.chain].next = entry.chain;
  }

  std::vector<Polygon2D> out;
  std::vector<bool> used(chains.size(), false);
  const double min_area = 1e-12 * std::max(1.0, std::abs(signed_area(poly.points())));
  for (std::size_t start = 0; start < chains.size(); ++start) {
    if (used[start]) continue;
    std::vector<Vec2> pts;
    std::size_t c = start;
    while (!used[c]) {
      used[c] = true;
      pts.insert(pts.end(), chains[c].pts.begin(), chains[c].pts.end());
      c = chains[c].next;
    }
    if (c != start) throw DegenerateError("clip chains do not close");
    if (std::abs(signed_area(pts)) <= min_area) continue;
    try {
      out.emplace_back(std::move(pts));
    } catch (const DegenerateError&) {
      // Sliver that collapsed onto the cut line.
    }
  }
  return out;
}

/// Clips by several half-planes in sequence.
inline std::vector<Polygon2D> clip_polygon(const Polygon2D& poly,
                                           std::span<const HalfPlane> planes) {
  std::vector<Polygon2D> current{poly};
  for (const HalfPlane& hp : planes) {
    std::vector<Polygon2D> next;
    for (const Polygon2D& p : current) {
      auto pieces = clip_polygon(p, hp);
      next.insert(next.end(), std::make_move_iterator(pieces.begin()),
                  std::make_move_iterator(pieces.end()));
    }
    current = std::move(next);
  }
  return current;
}

}  // namespace histo3d
