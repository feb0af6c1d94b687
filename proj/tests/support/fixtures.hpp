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

// Fixtures shared by the unit tests and the acceptance runner.

#pragma once

#include <cmath>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "histo3d/histo3d.hpp"

#ifndef HISTO3D_SAMPLES_DIR
#define HISTO3D_SAMPLES_DIR "samples"
#endif

namespace histo3d::testing {

inline constexpr std::uint64_t kSuiteSeed = 20261017;

inline std::string sample_path(const std::string& name) {
  return std::string(HISTO3D_SAMPLES_DIR) + "/" + name;
}

inline SectioningProtocol figure2_protocol() {
  return parse_protocol(read_file(sample_path("figure2_protocol.json")));
}

struct ProtocolShape {
  std::string case_id = "T01";
  int apex_per_side = 1;
  int base_per_side = 1;
  bool apex_split = false;
  bool base_split = false;
  int central_count = 1;
  bool central_split = false;
  double apex_offset_mm = 5.0;
  double base_offset_mm = 5.0;
};

/// Protocol document with blocks numbered in dissection order: apex
/// compartments, central slices, base compartments.
inline nlohmann::json protocol_json(const ProtocolShape& s) {
  using nlohmann::json;
  int block = 1;
  const auto apex_base = [&](int per, bool split, double offset) {
    json sections = json::object();
    for (const std::string& code : compartment_codes(split)) {
      json ids = json::array();
      const std::string b = std::to_string(block++);
      for (int k = 1; k <= per; ++k) ids.push_back(b + code + std::to_string(k));
      sections[code] = {{"count", per}, {"ids", ids}};
    }
    return json{{"offset_mm", offset}, {"split_frontal", split}, {"sections", sections}};
  };
  json j;
  j["case_id"] = s.case_id;
  j["apex"] = apex_base(s.apex_per_side, s.apex_split, s.apex_offset_mm);
  json central = json::array();
  for (int i = 1; i <= s.central_count; ++i) {
    json ids = json::array();
    for (const std::string& code : compartment_codes(s.central_split)) {
      ids.push_back(std::to_string(block++) + code);
    }
    central.push_back({{"index", i}, {"split_frontal", s.central_split}, {"ids", ids}});
  }
  j["central_count"] = s.central_count;
  j["central"] = central;
  j["base"] = apex_base(s.base_per_side, s.base_split, s.base_offset_mm);
  return j;
}

inline std::string protocol_text(const ProtocolShape& s) { return protocol_json(s).dump(2); }

/// Random valid protocol shape.
inline ProtocolShape random_shape(std::mt19937_64& rng) {
  std::uniform_int_distribution<int> per(1, 5), central(1, 6), coin(0, 1);
  std::uniform_real_distribution<double> offset(1.0, 15.0);
  ProtocolShape s;
  s.case_id = "F" + std::to_string(rng() % 1000);
  s.apex_per_side = per(rng);
  s.base_per_side = per(rng);
  s.apex_split = coin(rng);
  s.base_split = coin(rng);
  s.central_count = central(rng);
  s.central_split = coin(rng);
  s.apex_offset_mm = offset(rng);
  s.base_offset_mm = offset(rng);
  return s;
}

inline TriMesh unit_cube() {
  TriMesh m;
  for (int i = 0; i < 8; ++i) m.vertices.emplace_back(i & 1, (i >> 1) & 1, (i >> 2) & 1);
  m.triangles = {{0, 2, 3}, {0, 3, 1}, {4, 5, 7}, {4, 7, 6}, {0, 1, 5}, {0, 5, 4},
                 {2, 6, 7}, {2, 7, 3}, {0, 4, 6}, {0, 6, 2}, {1, 3, 7}, {1, 7, 5}};
  return m;
}

inline const char* kCubeObj =
    "# unit cube\n"
    "v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\n"
    "v 0 0 1\nv 1 0 1\nv 1 1 1\nv 0 1 1\n"
    "f 1 4 3 2\nf 5 6 7 8\nf 1 2 6 5\nf 2 3 7 6\nf 3 4 8 7\nf 4 1 5 8\n";

inline Polygon2D rect(double x0, double y0, double x1, double y1) {
  return Polygon2D({{x0, y0}, {x1, y0}, {x1, y1}, {x0, y1}});
}

/// Star-shaped (hence simple) polygon with `n` vertices at sorted random
/// angles and radii in [r_min, r_max] about `center`.
inline Polygon2D random_star(std::mt19937_64& rng, int n, double r_min = 1.0,
                             double r_max = 5.0, Vec2 center = Vec2::Zero()) {
  // One angle per sector keeps every gap below pi, so the outline is
  // star-shaped about the centre and therefore simple.
  std::uniform_real_distribution<double> u(0.0, 1.0), rad(r_min, r_max);
  std::vector<double> a(static_cast<std::size_t>(n));
  for (std::size_t i = 0; i < a.size(); ++i) a[i] = (static_cast<double>(i) + u(rng)) * 2.0 * std::numbers::pi / n;
  std::vector<Vec2> pts;
  for (double x : a) {
    const double r = rad(rng);
    pts.push_back(center + r * Vec2(std::cos(x), std::sin(x)));
  }
  return Polygon2D(pts);
}

struct SyntheticSlide {
  SlideAnnotations slide;
  /// Reference plane -> slide coordinates. Registration should recover
  /// its inverse.
  Similarity2D truth;
};

/// One synthetic slide per reference polygon: a random similarity
/// (theta in [0, 360) deg, scale in [0.8, 1.2], |t| <= 20 mm) applied to the
/// outline, plus N(0, jitter) noise per vertex coordinate.
inline std::vector<SyntheticSlide> synthetic_suite(const ReferenceModel& model, double jitter,
                                                   std::uint64_t seed = kSuiteSeed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  std::normal_distribution<double> noise(0.0, jitter > 0.0 ? jitter : 1.0);
  std::vector<SyntheticSlide> out;
  for (const ReferencePolygon& ref : model.polygons) {
    Similarity2D t;
    t.theta = uni(rng) * 2.0 * std::numbers::pi;
    t.scale = 0.8 + 0.4 * uni(rng);
    const double r = 20.0 * std::sqrt(uni(rng));
    const double a = uni(rng) * 2.0 * std::numbers::pi;
    t.translation = Vec2(r * std::cos(a), r * std::sin(a));
    std::vector<Vec2> pts;
    for (const Vec2& q : ref.outline.points()) {
      Vec2 w = t.apply(q);
      if (jitter > 0.0) w += Vec2(noise(rng), noise(rng));
      pts.push_back(w);
    }
    out.push_back({{ref.name, Polygon2D(pts), {}}, t});
  }
  return out;
}

/// Generic model (40 x 30 x 35 mm) sliced with the sample protocol.
inline ReferenceModel suite_model() {
  return build_reference_model(generic_prostate_model(40, 30, 35), figure2_protocol());
}

/// Wraps the angle difference into (-180, 180] degrees.
inline double angle_diff_deg(double a_rad, double b_rad) {
  return rad_to_deg(std::remainder(a_rad - b_rad, 2.0 * std::numbers::pi));
}

}  // namespace histo3d::testing
