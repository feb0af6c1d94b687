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

#include <cmath>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "histo3d/annotations.hpp"
#include "histo3d/convex_hull.hpp"
#include "histo3d/error.hpp"
#include "histo3d/mesh.hpp"
#include "histo3d/mesh_io.hpp"
#include "histo3d/registration.hpp"
#include "histo3d/slicing.hpp"
#include "histo3d/triangulate.hpp"

namespace histo3d {

enum class ReconstructionMethod { ConvexHull, GaussianSplatter, LinearExtrusion };

inline const char* method_name(ReconstructionMethod m) {
  switch (m) {
    case ReconstructionMethod::ConvexHull: return "convex_hull";
    case ReconstructionMethod::GaussianSplatter: return "gaussian_splatter";
    case ReconstructionMethod::LinearExtrusion: return "linear_extrusion";
  }
  return "unknown";
}

inline ReconstructionMethod parse_method(const std::string& s) {
  if (s == "convex_hull" || s == "hull") return ReconstructionMethod::ConvexHull;
  if (s == "gaussian_splatter" || s == "splatter") return ReconstructionMethod::GaussianSplatter;
  if (s == "linear_extrusion" || s == "extrusion") return ReconstructionMethod::LinearExtrusion;
  throw ConfigError("unknown reconstruction method '" + s + "'");
}

inline constexpr const char* kAllClasses = "ALL";

struct ReconstructionMesh {
  std::string class_label;
  TriMesh mesh;
  ReconstructionMethod method = ReconstructionMethod::ConvexHull;
  /// "<polygon>#<roi index>" per contributing ROI.
  std::vector<std::string> provenance;
};

struct SplatterConfig {
  double radius_factor = 2.0;
  /// Unset: half the slab thickness of the ROI's reference polygon.
  std::optional<double> min_normal_sigma_mm;
  int stacks = 16;
  int slices = 32;

  void validate() const {
    if (!(radius_factor > 0.0)) throw ArgumentError("radius_factor must be positive");
    if (min_normal_sigma_mm && !(*min_normal_sigma_mm > 0.0)) {
      throw ArgumentError("min_normal_sigma_mm must be positive");
    }
    if (stacks < 2 || slices < 3) throw ArgumentError("splatter tessellation too coarse");
  }
};

inline std::string roi_source(const RegistrationResult& r, std::size_t k) {
  return r.polygon_name + "#" + std::to_string(k);
}

/// Hull of every registered ROI point, all classes merged under "ALL".
inline ReconstructionMesh convex_hull(std::span<const RegistrationResult> results) {
  std::vector<Vec3> pts;
  ReconstructionMesh out{kAllClasses, {}, ReconstructionMethod::ConvexHull, {}};
  double thickness = 0.0;
  for (const RegistrationResult& r : results) {
    for (std::size_t k = 0; k < r.registered_rois.size(); ++k) {
      const auto p = r.registered_rois[k].polygon.points3d();
      pts.insert(pts.end(), p.begin(), p.end());
      out.provenance.push_back(roi_source(r, k));
      thickness = std::max(thickness, r.thickness_mm);
    }
  }
  if (pts.empty()) throw InsufficientPointsError("no ROI points to build a hull from");
  out.mesh = convex_hull(pts, thickness);
  return out;
}

/// Mean and population standard deviation of points along the world axes.
inline std::pair<Vec3, Vec3> axis_moments(std::span<const Vec3> pts) {
  Vec3 mean = Vec3::Zero();
  for (const Vec3& p : pts) mean += p;
  mean /= static_cast<double>(pts.size());
  Vec3 var = Vec3::Zero();
  for (const Vec3& p : pts) var += (p - mean).cwiseAbs2();
  var /= static_cast<double>(pts.size());
  return {mean, var.cwiseSqrt()};
}

/// Semi-axes of the ellipsoid representing one registered ROI.
inline std::pair<Vec3, Vec3> splat_ellipsoid(const PlanarPolygon3D& roi, double thickness,
                                             const SplatterConfig& cfg) {
  const auto pts = roi.points3d();
  auto [mean, sigma] = axis_moments(pts);
  Eigen::Index normal_axis = 0;
  roi.frame.normal().cwiseAbs().maxCoeff(&normal_axis);
  const double floor = cfg.min_normal_sigma_mm.value_or(0.5 * thickness);
  sigma[normal_axis] = std::max(sigma[normal_axis], floor);
  const Vec3 semi = cfg.radius_factor * sigma;
  if ((semi.array() <= 0.0).any()) {
    throw InsufficientPointsError("ROI has no spread along some axis");
  }
  return {mean, semi};
}

/// One ellipsoid per ROI from its per-axis mean and standard deviation; the
/// ellipsoids of each class are concatenated into one mesh.
inline std::vector<ReconstructionMesh> gaussian_splatter(
    std::span<const RegistrationResult> results, const SplatterConfig& cfg = {}) {
  cfg.validate();
  std::map<std::string, ReconstructionMesh> by_class;
  for (const RegistrationResult& r : results) {
    for (std::size_t k = 0; k < r.registered_rois.size(); ++k) {
      const RegisteredRoi& roi = r.registered_rois[k];
      if (roi.polygon.outline.size() < 3) {
        throw InsufficientPointsError(roi_source(r, k) + ": fewer than 3 points");
      }
      const auto [center, semi] = splat_ellipsoid(roi.polygon, r.thickness_mm, cfg);
      auto& out = by_class[roi.class_label];
      out.class_label = roi.class_label;
      out.method = ReconstructionMethod::GaussianSplatter;
      out.mesh.append(ellipsoid_mesh(center, semi, cfg.stacks, cfg.slices));
      out.provenance.push_back(roi_source(r, k));
    }
  }
  std::vector<ReconstructionMesh> out;
  for (auto& [label, mesh] : by_class) out.push_back(std::move(mesh));
  return out;
}

/// Each ROI becomes a prism spanning its reference slab, symmetric about the
/// section plane; prisms of one class are concatenated.
inline std::vector<ReconstructionMesh> linear_extrusion(
    std::span<const RegistrationResult> results) {
  std::map<std::string, ReconstructionMesh> by_class;
  for (const RegistrationResult& r : results) {
    for (std::size_t k = 0; k < r.registered_rois.size(); ++k) {
      const RegisteredRoi& roi = r.registered_rois[k];
      auto& out = by_class[roi.class_label];
      out.class_label = roi.class_label;
      out.method = ReconstructionMethod::LinearExtrusion;
      out.mesh.append(prism_mesh(roi.polygon.frame, roi.polygon.outline, r.thickness_mm));
      out.provenance.push_back(roi_source(r, k));
    }
  }
  std::vector<ReconstructionMesh> out;
  for (auto& [label, mesh] : by_class) out.push_back(std::move(mesh));
  return out;
}

/// Stand-in registration results for slides known to contain the class: the
/// reference polygon serves as both contour and single ROI.
inline std::vector<RegistrationResult> mark_slides(const ReferenceModel& model,
                                                   std::span<const std::string> slide_ids,
                                                   const std::string& class_label = "tumor-positive") {
  if (class_label.empty()) throw ArgumentError("class label must not be empty");
  std::vector<RegistrationResult> out;
  for (const std::string& id : slide_ids) {
    const ReferencePolygon* ref = model.find(id);
    if (!ref) throw UnknownPolygonError("no reference polygon '" + id + "'");
    RegistrationResult r;
    r.polygon_name = ref->name;
    r.slide_name = ref->name;
    r.case_id = model.case_id;
    r.iou = 1.0;
    r.converged = true;
    r.registered_contour = {ref->frame, ref->outline};
    r.registered_rois.push_back({class_label, {ref->frame, ref->outline}});
    r.thickness_mm = ref->thickness_mm;
    r.region = ref->region;
    out.push_back(std::move(r));
  }
  return out;
}

struct ReconstructionExport {
  std::string summary_json;
  std::vector<std::pair<std::string, std::string>> obj_files;  // (filename, content)
};

/// OBJ per mesh named `<case>_<method>_<class>.obj`, plus a JSON summary
/// with each mesh's volume, class, method and provenance.
inline ReconstructionExport export_reconstructions(std::span<const ReconstructionMesh> meshes,
                                                   const std::string& case_id) {
  using nlohmann::ordered_json;
  ReconstructionExport out;
  ordered_json arr = ordered_json::array();
  for (const ReconstructionMesh& m : meshes) {
    const std::string file =
        case_id + "_" + method_name(m.method) + "_" + label_token(m.class_label) + ".obj";
    out.obj_files.emplace_back(file, write_obj(m.mesh));
    arr.push_back(ordered_json{{"file", file},
                               {"method", method_name(m.method)},
                               {"class_label", m.class_label},
                               {"volume_mm3", mesh_volume(m.mesh)},
                               {"vertices", m.mesh.vertices.size()},
                               {"triangles", m.mesh.triangles.size()},
                               {"closed", is_closed(m.mesh)},
                               {"provenance", m.provenance}});
  }
  out.summary_json = arr.dump(1) + "\n";
  return out;
}

}  // namespace histo3d
