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

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <span>

#include "histo3d/error.hpp"

/// Shared small-geometry vocabulary. All lengths are millimetres.
///
/// World frame: +x points to the patient's left, +y ventral, +z towards the
/// base (the apex sits at low z). Transverse cuts are therefore z-planes and
/// sagittal cuts are x-planes.
namespace histo3d {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat2 = Eigen::Matrix2d;
using Mat3 = Eigen::Matrix3d;

inline double deg_to_rad(double deg) { return deg * std::numbers::pi / 180.0; }
inline double rad_to_deg(double rad) { return rad * 180.0 / std::numbers::pi; }

/// z-component of the 2D cross product (b - a) x (c - a).
inline double cross2(const Vec2& a, const Vec2& b, const Vec2& c) {
  return (b.x() - a.x()) * (c.y() - a.y()) - (b.y() - a.y()) * (c.x() - a.x());
}

inline double cross2(const Vec2& u, const Vec2& v) {
  return u.x() * v.y() - u.y() * v.x();
}

struct AABB {
  Vec3 min = Vec3::Constant(std::numeric_limits<double>::infinity());
  Vec3 max = Vec3::Constant(-std::numeric_limits<double>::infinity());

  bool empty() const { return (min.array() > max.array()).any(); }
  Vec3 extent() const { return max - min; }
  Vec3 center() const { return 0.5 * (min + max); }

  void extend(const Vec3& p) {
    min = min.cwiseMin(p);
    max = max.cwiseMax(p);
  }
};

struct Box2 {
  Vec2 min = Vec2::Constant(std::numeric_limits<double>::infinity());
  Vec2 max = Vec2::Constant(-std::numeric_limits<double>::infinity());

  Vec2 extent() const { return max - min; }
  void extend(const Vec2& p) {
    min = min.cwiseMin(p);
    max = max.cwiseMax(p);
  }
  void extend(const Box2& b) {
    min = min.cwiseMin(b.min);
    max = max.cwiseMax(b.max);
  }
  bool intersects(const Box2& b) const {
    return min.x() <= b.max.x() && b.min.x() <= max.x() &&
           min.y() <= b.max.y() && b.min.y() <= max.y();
  }
};

/// Orthonormal frame of a plane. 2D coordinates are measured along `u` and
/// `v` from `origin`; the plane normal is u x v.
class PlaneFrame {
 public:
  PlaneFrame() = default;

  PlaneFrame(const Vec3& origin, const Vec3& u, const Vec3& v)
      : origin_(origin), u_(u), v_(v) {
    if (std::abs(u.norm() - 1.0) > 1e-12 || std::abs(v.norm() - 1.0) > 1e-12 ||
        std::abs(u.dot(v)) > 1e-12) {
      throw ArgumentError("plane frame basis is not orthonormal");
    }
  }

  /// Transverse plane z = const; (u, v) = (+x, +y), normal +z. Plane
  /// coordinates coincide with world x/y.
  static PlaneFrame transverse(double z) {
    return PlaneFrame(Vec3(0, 0, z), Vec3::UnitX(), Vec3::UnitY());
  }

  /// Sagittal plane x = const; (u, v) = (+y, +z), normal +x.
  static PlaneFrame sagittal(double x) {
    return PlaneFrame(Vec3(x, 0, 0), Vec3::UnitY(), Vec3::UnitZ());
  }

  const Vec3& origin() const { return origin_; }
  const Vec3& u() const { return u_; }
  const Vec3& v() const { return v_; }
  Vec3 normal() const { return u_.cross(v_); }

  double signed_distance(const Vec3& p) const { return (p - origin_).dot(normal()); }

  Vec2 project(const Vec3& p) const {
    const Vec3 d = p - origin_;
    return Vec2(d.dot(u_), d.dot(v_));
  }

  Vec3 lift(const Vec2& q) const { return origin_ + q.x() * u_ + q.y() * v_; }

  Vec3 lift(const Vec2& q, double offset) const {
    return lift(q) + offset * normal();
  }

  bool operator==(const PlaneFrame& o) const {
    return origin_ == o.origin_ && u_ == o.u_ && v_ == o.v_;
  }

 private:
  Vec3 origin_ = Vec3::Zero();
  Vec3 u_ = Vec3::UnitX();
  Vec3 v_ = Vec3::UnitY();
};

/// x -> linear * x + translation.
struct AffineTransform3D {
  Mat3 linear = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  static AffineTransform3D identity() { return {}; }

  static AffineTransform3D scaling(const Vec3& s) {
    AffineTransform3D t;
    t.linear = s.asDiagonal();
    return t;
  }

  static AffineTransform3D translation_by(const Vec3& d) {
    AffineTransform3D t;
    t.translation = d;
    return t;
  }

  /// Rotation by Euler angles in degrees, applied about x, then y, then z.
  static AffineTransform3D rotation_xyz_deg(const Vec3& deg) {
    AffineTransform3D t;
    t.linear = (Eigen::AngleAxisd(deg_to_rad(deg.z()), Vec3::UnitZ()) *
                Eigen::AngleAxisd(deg_to_rad(deg.y()), Vec3::UnitY()) *
                Eigen::AngleAxisd(deg_to_rad(deg.x()), Vec3::UnitX()))
                   .toRotationMatrix();
    return t;
  }

  Vec3 apply(const Vec3& p) const { return linear * p + translation; }

  /// (*this) after `first`.
  AffineTransform3D after(const AffineTransform3D& first) const {
    AffineTransform3D t;
    t.linear = linear * first.linear;
    t.translation = linear * first.translation + translation;
    return t;
  }

  double determinant() const { return linear.determinant(); }
};

}  // namespace histo3d
