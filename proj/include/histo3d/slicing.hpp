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
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "histo3d/error.hpp"
#include "histo3d/geometry.hpp"
#include "histo3d/mesh.hpp"
#include "histo3d/mesh_io.hpp"
#include "histo3d/polygon.hpp"
#include "histo3d/protocol.hpp"

namespace histo3d {

inline constexpr double kMinSectionArea = 1e-6;  // mm^2

/// Cross-section of a closed mesh with a plane, as CCW loops in plane
/// coordinates.
///
/// Vertices exactly on the plane count as lying on the positive side, so
/// every crossing triangle cuts exactly two of its edges. Segments are
/// chained through the mesh edge they share, which makes loop closure exact
/// for indexed meshes.
inline std::vector<Polygon2D> plane_section(const TriMesh& m, const PlaneFrame& plane) {
  std::vector<double> dist(m.vertices.size());
  for (std::size_t i = 0; i < m.vertices.size(); ++i) {
    dist[i] = plane.signed_distance(m.vertices[i]);
  }
  using EdgeKey = std::pair<std::uint32_t, std::uint32_t>;
  const auto key = [](std::uint32_t a, std::uint32_t b) {
    return a < b ? EdgeKey{a, b} : EdgeKey{b, a};
  };

  std::vector<std::pair<EdgeKey, EdgeKey>> segments;
  std::map<EdgeKey, std::vector<std::size_t>> by_edge;
  for (const Triangle& t : m.triangles) {
    EdgeKey cut[2];
    int n = 0;
    for (int k = 0; k < 3; ++k) {
      const auto a = t[k];
      const auto b = t[(k + 1) % 3];
      if ((dist[a] >= 0.0) != (dist[b] >= 0.0)) cut[n++] = key(a, b);
    }
    if (n == 0) continue;
    const std::size_t id = segments.size();
    segments.emplace_back(cut[0], cut[1]);
    by_edge[cut[0]].push_back(id);
    by_edge[cut[1]].push_back(id);
  }
  if (segments.empty()) throw NoIntersectionError("plane does not intersect the mesh");
  for (const auto& [edge, segs] : by_edge) {
    if (segs.size() != 2) {
      throw OpenLoopError("section edge (" + std::to_string(edge.first) + "," +
                          std::to_string(edge.second) + ") is shared by " +
                          std::to_string(segs.size()) + " segments; mesh is not closed");
    }
  }

  const auto crossing = [&](const EdgeKey& e) {
    const Vec3& a = m.vertices[e.first];
    const Vec3& b = m.vertices[e.second];
    const double t = dist[e.first] / (dist[e.first] - dist[e.second]);
    return plane.project(a + t * (b - a));
  };

  std::vector<Polygon2D> loops;
  std::vector<bool> used(segments.size(), false);
  for (std::size_t start = 0; start < segments.size(); ++start) {
    if (used[start]) continue;
    std::vector<Vec2> pts;
    std::size_t seg = start;
    EdgeKey at = segments[start].first;
    while (!used[seg]) {
      used[seg] = true;
      pts.push_back(crossing(at));
      const EdgeKey next = segments[seg].first == at ? segments[seg].second : segments[seg].first;
      const auto& pair = by_edge[next];
      seg = pair[0] == seg ? pair[1] : pair[0];
      at = next;
    }
    if (seg != start) throw OpenLoopError("section chain did not close");
    try {
      Polygon2D loop(std::move(pts));
      if (signed_area(loop.points()) >= kMinSectionArea) loops.push_back(std::move(loop));
    } catch (const DegenerateError&) {
    }
  }
  if (loops.empty()) throw NoIntersectionError("plane only grazes the mesh");
  return loops;
}

/// Axis-aligned half-space {p : p[axis] >= value} (or <= when !above).
struct AxisBound {
  int axis = 0;
  double value = 0.0;
  bool above = true;

  bool inside(const Vec3& p) const { return above ? p[axis] >= value : p[axis] <= value; }
};

/// [min, max] of coordinate `axis` over the part of the surface inside all
/// bounds, or nullopt when that part is empty.
inline std::optional<std::pair<double, double>> surface_extent(
    const TriMesh& m, int axis, std::span<const AxisBound> bounds) {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  std::vector<Vec3> poly, next;
  for (const Triangle& t : m.triangles) {
    poly = {m.vertices[t[0]], m.vertices[t[1]], m.vertices[t[2]]};
    for (const AxisBound& b : bounds) {
      next.clear();
      for (std::size_t i = 0; i < poly.size(); ++i) {
        const Vec3& p = poly[i];
        const Vec3& q = poly[(i + 1) % poly.size()];
        const bool pin = b.inside(p);
        if (pin) next.push_back(p);
        if (pin != b.inside(q)) {
          const double s = (b.value - p[b.axis]) / (q[b.axis] - p[b.axis]);
          Vec3 x = p + s * (q - p);
          x[b.axis] = b.value;
          next.push_back(x);
        }
      }
      std::swap(poly, next);
      if (poly.empty()) break;
    }
    for (const Vec3& p : poly) {
      lo = std::min(lo, p[axis]);
      hi = std::max(hi, p[axis]);
    }
  }
  if (lo > hi) return std::nullopt;
  return std::make_pair(lo, hi);
}

struct ReferencePolygon {
  std::string name;
  PlaneFrame frame;
  Polygon2D outline;
  double thickness_mm = 0.0;
  Region region;

  std::vector<Vec3> points3d() const {
    std::vector<Vec3> out;
    out.reserve(outline.size());
    for (const Vec2& q : outline.points()) out.push_back(frame.lift(q));
    return out;
  }
};

struct ReferenceModel {
  std::string case_id;
  std::vector<ReferencePolygon> polygons;
  AABB source_extent;

  const ReferencePolygon* find(const std::string& name) const {
    for (const auto& p : polygons) {
      if (p.name == name) return &p;
    }
    return nullptr;
  }
};

/// Overrides for the apex/base offsets stored in the protocol.
struct SliceOptions {
  std::optional<double> apex_offset_mm;
  std::optional<double> base_offset_mm;
};

namespace detail {

inline std::vector<HalfPlane> compartment_half_planes(const FragmentId& id, const Vec2& center,
                                                      int lr_axis, int vd_axis) {
  std::vector<HalfPlane> planes;
  Vec2 n = Vec2::Zero();
  n[lr_axis] = id.side == Side::Left ? 1.0 : -1.0;
  planes.push_back({center, n});
  if (id.frontal) {
    Vec2 f = Vec2::Zero();
    f[vd_axis] = *id.frontal == Frontal::Ventral ? 1.0 : -1.0;
    planes.push_back({center, f});
  }
  return planes;
}

inline std::optional<Polygon2D> largest_piece(std::span<const Polygon2D> loops,
                                              std::span<const HalfPlane> planes) {
  std::optional<Polygon2D> best;
  double best_area = 0.0;
  for (const Polygon2D& loop : loops) {
    for (Polygon2D& piece : clip_polygon(loop, planes)) {
      const double a = signed_area(piece.points());
      if (a >= kMinSectionArea && a > best_area) {
        best_area = a;
        best = std::move(piece);
      }
    }
  }
  return best;
}

inline std::vector<Polygon2D> section_or_mismatch(const TriMesh& m, const PlaneFrame& plane,
                                                  const std::string& what) {
  try {
    return plane_section(m, plane);
  } catch (const NoIntersectionError&) {
    throw ProtocolMeshMismatchError(what + ": cutting plane misses the mesh");
  }
}

inline void slice_apex_base(const TriMesh& m, const ApexBaseSpec& spec, RegionKind kind,
                            double z_lo, double z_hi,
                            std::map<std::string, ReferencePolygon>& out) {
  const std::string region_name = kind == RegionKind::Apex ? "apex" : "base";
  const auto mid_loops =
      section_or_mismatch(m, PlaneFrame::transverse(0.5 * (z_lo + z_hi)), region_name);
  const Vec2 center = polygons_centroid(mid_loops);

  for (const auto& [code, comp] : spec.sections) {
    const FragmentId& first = comp.ids.front();
    std::vector<AxisBound> bounds{{2, z_lo, true}, {2, z_hi, false}};
    bounds.push_back({0, center.x(), first.side == Side::Left});
    if (first.frontal) bounds.push_back({1, center.y(), *first.frontal == Frontal::Ventral});
    const auto extent = surface_extent(m, 0, bounds);
    if (!extent || extent->second - extent->first <= 0.0) {
      throw ProtocolMeshMismatchError(region_name + " compartment " + code + " is empty");
    }
    const double width = (extent->second - extent->first) / comp.count;

    // Sagittal plane coordinates are (y, z).
    std::vector<HalfPlane> planes{{Vec2(0, z_lo), Vec2(0, 1)}, {Vec2(0, z_hi), Vec2(0, -1)}};
    if (first.frontal) {
      planes.push_back({Vec2(center.y(), 0),
                        Vec2(*first.frontal == Frontal::Ventral ? 1.0 : -1.0, 0)});
    }
    for (const FragmentId& id : comp.ids) {
      // Sequence numbers run from the midline outwards.
      const double offset = (*id.seq - 0.5) * width;
      const double x = id.side == Side::Left ? extent->first + offset : extent->second - offset;
      const PlaneFrame frame = PlaneFrame::sagittal(x);
      const auto loops = section_or_mismatch(m, frame, id.str());
      auto piece = largest_piece(loops, planes);
      if (!piece) {
        throw ProtocolMeshMismatchError("fragment " + id.str() + " has no section in the " +
                                        region_name);
      }
      out[id.str()] = {id.str(), frame, std::move(*piece), width, {kind, 0}};
    }
  }
}

}  // namespace detail

/// Applies the protocol to a closed surface.
///
/// Apex occupies z in [z_min, z_min + apex_offset], base the top
/// base_offset, and the central band between them is split into
/// central_count equal slabs sectioned at their mid-planes. Slices are
/// halved left/right (and ventral/dorsal) through their area centroid. Each
/// apex/base compartment is cut into `count` equal sagittal slabs, sectioned
/// at mid-plane and trimmed to the region's z band.
inline ReferenceModel build_reference_model(const TriMesh& m, const SectioningProtocol& p,
                                            const SliceOptions& opts = {}) {
  if (!is_closed(m)) throw OpenMeshError("reference surface must be closed");
  const double apex_off = opts.apex_offset_mm.value_or(p.apex.offset_mm);
  const double base_off = opts.base_offset_mm.value_or(p.base.offset_mm);
  if (!(apex_off > 0.0) || !(base_off > 0.0)) {
    throw ArgumentError("apex and base offsets must be positive");
  }
  const AABB box = bounding_box(m);
  const double z_min = box.min.z();
  const double z_max = box.max.z();
  if (z_max - z_min <= apex_off + base_off) {
    throw ProtocolMeshMismatchError("mesh z-extent " + std::to_string(z_max - z_min) +
                                    " mm does not exceed apex+base offsets");
  }

  std::map<std::string, ReferencePolygon> built;
  detail::slice_apex_base(m, p.apex, RegionKind::Apex, z_min, z_min + apex_off, built);
  detail::slice_apex_base(m, p.base, RegionKind::Base, z_max - base_off, z_max, built);

  const double c_lo = z_min + apex_off;
  const double thickness = (z_max - base_off - c_lo) / p.central_count;
  for (const CentralSliceSpec& slice : p.central) {
    const double z = c_lo + (slice.index - 0.5) * thickness;
    const PlaneFrame frame = PlaneFrame::transverse(z);
    const auto loops =
        detail::section_or_mismatch(m, frame, "central slice " + std::to_string(slice.index));
    const Vec2 center = polygons_centroid(loops);
    for (const FragmentId& id : slice.ids) {
      const auto planes = detail::compartment_half_planes(id, center, 0, 1);
      auto piece = detail::largest_piece(loops, planes);
      if (!piece) {
        throw ProtocolMeshMismatchError("fragment " + id.str() + " has no section");
      }
      built[id.str()] = {id.str(), frame, std::move(*piece), thickness,
                         {RegionKind::Central, slice.index}};
    }
  }

  ReferenceModel model;
  model.case_id = p.case_id;
  model.source_extent = box;
  for (const FragmentEntry& e : fragment_ids(p)) {
    auto it = built.find(e.id.str());
    if (it != built.end()) model.polygons.push_back(std::move(it->second));
  }
  return model;
}

/// Plane frame implied by a region and one point on the polygon: central
/// polygons lie in transverse planes, apex/base polygons in sagittal ones.
inline PlaneFrame frame_for_region(const Region& region, const Vec3& on_plane) {
  return region.kind == RegionKind::Central ? PlaneFrame::transverse(on_plane.z())
                                            : PlaneFrame::sagittal(on_plane.x());
}

namespace detail {

inline nlohmann::ordered_json points_json(const std::vector<Vec3>& pts) {
  nlohmann::ordered_json arr = nlohmann::ordered_json::array();
  for (const Vec3& p : pts) arr.push_back({p.x(), p.y(), p.z()});
  return arr;
}

inline nlohmann::ordered_json cycle_edges_json(std::size_t n) {
  nlohmann::ordered_json arr = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < n; ++i) arr.push_back({i, (i + 1) % n});
  return arr;
}

inline nlohmann::ordered_json region_json(const Region& r) {
  return r.kind == RegionKind::Central ? nlohmann::ordered_json(r.slice_index)
                                       : nlohmann::ordered_json(nullptr);
}

inline Region parse_region(const nlohmann::json& j, const std::string& path) {
  if (!j.contains("region") || !j["region"].is_string()) {
    throw SchemaError(path + ".region", "expected apex|base|central");
  }
  const auto name = j["region"].get<std::string>();
  Region r;
  if (name == "apex") {
    r.kind = RegionKind::Apex;
  } else if (name == "base") {
    r.kind = RegionKind::Base;
  } else if (name == "central") {
    r.kind = RegionKind::Central;
    if (!j.contains("slice_index") || !j["slice_index"].is_number_integer()) {
      throw SchemaError(path + ".slice_index", "central polygons need an integer slice_index");
    }
    r.slice_index = j["slice_index"].get<int>();
  } else {
    throw SchemaError(path + ".region", "unknown region '" + name + "'");
  }
  return r;
}

inline std::vector<Vec3> parse_points(const nlohmann::json& j, const std::string& path) {
  if (!j.is_array()) throw SchemaError(path, "expected an array of [x,y,z]");
  std::vector<Vec3> out;
  for (std::size_t i = 0; i < j.size(); ++i) {
    const auto& p = j[i];
    if (!p.is_array() || p.size() != 3 || !p[0].is_number() || !p[1].is_number() ||
        !p[2].is_number()) {
      throw SchemaError(path + "[" + std::to_string(i) + "]", "expected [x,y,z]");
    }
    out.emplace_back(p[0].get<double>(), p[1].get<double>(), p[2].get<double>());
  }
  return out;
}

/// Walks an edge list into a single closed cycle of point indices.
inline std::vector<std::size_t> edge_cycle(const nlohmann::json& edges, std::size_t n,
                                           const std::string& path) {
  if (!edges.is_array() || edges.size() != n) {
    throw SchemaError(path, "expected one edge per point");
  }
  std::vector<std::size_t> next(n, n);
  for (std::size_t i = 0; i < edges.size(); ++i) {
    const auto& e = edges[i];
    if (!e.is_array() || e.size() != 2 || !e[0].is_number_unsigned() ||
        !e[1].is_number_unsigned()) {
      throw SchemaError(path + "[" + std::to_string(i) + "]", "expected [i,j]");
    }
    const auto a = e[0].get<std::size_t>();
    const auto b = e[1].get<std::size_t>();
    if (a >= n || b >= n || next[a] != n) {
      throw SchemaError(path + "[" + std::to_string(i) + "]", "edges do not form a cycle");
    }
    next[a] = b;
  }
  std::vector<std::size_t> order;
  std::size_t at = 0;
  for (std::size_t k = 0; k < n; ++k) {
    order.push_back(at);
    at = next[at];
    if (at == n) throw SchemaError(path, "edges do not form a cycle");
  }
  if (at != 0) throw SchemaError(path, "edges do not form a single cycle");
  return order;
}

}  // namespace detail

/// JSON array of {name, region, slice_index, thickness_mm, points, edges}.
inline std::string serialize_reference_model(const ReferenceModel& r) {
  nlohmann::ordered_json arr = nlohmann::ordered_json::array();
  for (const ReferencePolygon& p : r.polygons) {
    const auto pts = p.points3d();
    arr.push_back({{"name", p.name},
                   {"region", p.region.name()},
                   {"slice_index", detail::region_json(p.region)},
                   {"thickness_mm", p.thickness_mm},
                   {"points", detail::points_json(pts)},
                   {"edges", detail::cycle_edges_json(pts.size())}});
  }
  return arr.dump(1) + "\n";
}

inline ReferenceModel parse_reference_model(std::string_view text, const std::string& case_id) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw SyntaxError("", std::string("malformed JSON: ") + e.what());
  }
  if (!j.is_array()) throw SchemaError("", "reference model must be a JSON array");
  ReferenceModel model;
  model.case_id = case_id;
  for (std::size_t i = 0; i < j.size(); ++i) {
    const std::string path = "[" + std::to_string(i) + "]";
    const auto& item = j[i];
    if (!item.is_object() || !item.contains("name") || !item["name"].is_string()) {
      throw SchemaError(path + ".name", "expected a string");
    }
    ReferencePolygon poly;
    poly.name = item["name"].get<std::string>();
    poly.region = detail::parse_region(item, path);
    if (!item.contains("thickness_mm") || !item["thickness_mm"].is_number()) {
      throw SchemaError(path + ".thickness_mm", "expected a number");
    }
    poly.thickness_mm = item["thickness_mm"].get<double>();
    const auto pts = detail::parse_points(item.value("points", nlohmann::json()), path + ".points");
    if (pts.size() < 3) throw SchemaError(path + ".points", "need at least 3 points");
    const auto order = detail::edge_cycle(item.value("edges", nlohmann::json()), pts.size(),
                                          path + ".edges");
    poly.frame = frame_for_region(poly.region, pts[0]);
    std::vector<Vec2> outline;
    for (auto k : order) outline.push_back(poly.frame.project(pts[k]));
    try {
      poly.outline = Polygon2D(std::move(outline));
    } catch (const DegenerateError& e) {
      throw SchemaError(path + ".points", e.what());
    }
    for (const Vec3& q : pts) {
      model.source_extent.extend(q);
    }
    if (model.find(poly.name)) throw ValidationError(path + ".name", "duplicate polygon name");
    model.polygons.push_back(std::move(poly));
  }
  return model;
}

/// One OBJ per polygon, named `<case_id>_<name>.obj`, with `v` points and
/// `l` edges.
inline std::vector<std::pair<std::string, std::string>> export_reference_obj(
    const ReferenceModel& r) {
  std::vector<std::pair<std::string, std::string>> out;
  for (const ReferencePolygon& p : r.polygons) {
    out.emplace_back(r.case_id + "_" + p.name + ".obj", write_obj_polylines({p.points3d()}));
  }
  return out;
}

}  // namespace histo3d
