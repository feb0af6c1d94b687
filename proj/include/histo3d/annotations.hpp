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

#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "histo3d/error.hpp"
#include "histo3d/polygon.hpp"
#include "histo3d/protocol.hpp"
#include "histo3d/slicing.hpp"

namespace histo3d {

inline constexpr const char* kContourClass = "Contour";

struct Roi {
  std::string class_label;
  Polygon2D polygon;
};

/// One tissue fragment: its outline plus class-labelled regions.
struct SlideAnnotations {
  std::string slide_name;
  Polygon2D contour;
  std::vector<Roi> rois;
};

struct IngestOptions {
  /// Millimetres per annotation unit (pixels); 0.25 um/px -> 0.00025.
  double scale = 1.0;
  /// Negate y after scaling, for image coordinates with y pointing down.
  bool flip_y = false;
};

namespace detail {

/// `properties.classification.name`, then `properties.classification` as a
/// string, then `properties.class`.
inline std::optional<std::string> classification_of(const nlohmann::json& feature) {
  if (!feature.contains("properties") || !feature["properties"].is_object()) return std::nullopt;
  const auto& props = feature["properties"];
  if (props.contains("classification")) {
    const auto& c = props["classification"];
    if (c.is_object() && c.contains("name") && c["name"].is_string()) {
      return c["name"].get<std::string>();
    }
    if (c.is_string()) return c.get<std::string>();
  }
  if (props.contains("class") && props["class"].is_string()) {
    return props["class"].get<std::string>();
  }
  return std::nullopt;
}

inline Polygon2D ring_polygon(const nlohmann::json& ring, const IngestOptions& opts,
                              const std::string& path) {
  if (!ring.is_array()) throw SchemaError(path, "ring must be an array of positions");
  std::vector<Vec2> pts;
  for (std::size_t i = 0; i < ring.size(); ++i) {
    const auto& p = ring[i];
    if (!p.is_array() || p.size() < 2 || !p[0].is_number() || !p[1].is_number()) {
      throw SchemaError(path + "[" + std::to_string(i) + "]", "expected [x, y]");
    }
    const double x = p[0].get<double>() * opts.scale;
    const double y = p[1].get<double>() * opts.scale;
    pts.emplace_back(x, opts.flip_y ? -y : y);
  }
  Polygon2D poly;
  try {
    poly = Polygon2D(std::move(pts));
  } catch (const DegenerateError&) {
    throw GeometryError(path + ": ring has fewer than 3 distinct points");
  }
  if (!is_simple(poly)) throw GeometryError(path + ": ring self-intersects");
  return poly;
}

/// Outer rings of a Polygon or MultiPolygon geometry.
inline std::vector<const nlohmann::json*> outer_rings(const nlohmann::json& geometry,
                                                      const std::string& path,
                                                      bool& is_multi) {
  if (!geometry.is_object() || !geometry.contains("type") || !geometry["type"].is_string() ||
      !geometry.contains("coordinates") || !geometry["coordinates"].is_array()) {
    throw SchemaError(path, "expected a geometry with type and coordinates");
  }
  const auto type = geometry["type"].get<std::string>();
  const auto& coords = geometry["coordinates"];
  std::vector<const nlohmann::json*> rings;
  if (type == "Polygon") {
    is_multi = false;
    if (coords.empty()) throw GeometryError(path + ": polygon without rings");
    rings.push_back(&coords[0]);
  } else if (type == "MultiPolygon") {
    is_multi = true;
    for (const auto& poly : coords) {
      if (!poly.is_array() || poly.empty()) throw GeometryError(path + ": empty polygon member");
      rings.push_back(&poly[0]);
    }
  } else {
    throw SchemaError(path + ".type", "unsupported geometry type '" + type + "'");
  }
  return rings;
}

}  // namespace detail

/// Reads a GeoJSON FeatureCollection. The single feature classified
/// "Contour" becomes the tissue outline; every other classified outer ring
/// becomes one ROI. Holes and unclassified features are ignored.
inline SlideAnnotations parse_geojson_annotations(std::string_view text,
                                                  const std::string& slide_name,
                                                  const IngestOptions& opts = {}) {
  if (!(opts.scale > 0.0)) throw ArgumentError("annotation scale must be positive");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw SyntaxError(slide_name, std::string("malformed JSON: ") + e.what());
  }
  if (!j.is_object() || j.value("type", "") != "FeatureCollection" || !j.contains("features") ||
      !j["features"].is_array()) {
    throw SchemaError(slide_name, "expected a GeoJSON FeatureCollection");
  }

  std::optional<Polygon2D> contour;
  std::vector<Roi> rois;
  const auto& features = j["features"];
  for (std::size_t i = 0; i < features.size(); ++i) {
    const std::string path = "features[" + std::to_string(i) + "]";
    const auto& f = features[i];
    if (!f.is_object()) throw SchemaError(path, "expected a Feature object");
    const auto label = detail::classification_of(f);
    if (!label) continue;
    if (label->empty()) throw SchemaError(path + ".properties", "empty class name");
    if (!f.contains("geometry")) throw SchemaError(path + ".geometry", "missing geometry");
    bool multi = false;
    const auto rings = detail::outer_rings(f["geometry"], path + ".geometry", multi);
    if (*label == kContourClass) {
      if (multi) throw GeometryError(path + ": contour must be a single Polygon");
      if (contour) throw MultipleContourError(slide_name + ": more than one Contour feature");
      contour = detail::ring_polygon(*rings[0], opts, path + ".geometry.coordinates[0]");
    } else {
      for (std::size_t r = 0; r < rings.size(); ++r) {
        rois.push_back({*label, detail::ring_polygon(*rings[r], opts,
                                                     path + ".geometry.coordinates[" +
                                                         std::to_string(r) + "]")});
      }
    }
  }
  if (!contour) throw MissingContourError(slide_name + ": no feature classified 'Contour'");
  const Box2 cbox = contour->bounds();
  for (std::size_t k = 0; k < rois.size(); ++k) {
    if (!cbox.intersects(rois[k].polygon.bounds())) {
      throw GeometryError(slide_name + ": ROI " + std::to_string(k) + " (" +
                          rois[k].class_label + ") lies outside the contour's bounds");
    }
  }
  return {slide_name, std::move(*contour), std::move(rois)};
}

/// GeoJSON FeatureCollection holding the contour and ROIs, coordinates
/// mapped back to annotation units through `opts`.
inline std::string to_geojson(const SlideAnnotations& s, const IngestOptions& opts = {}) {
  if (!(opts.scale > 0.0)) throw ArgumentError("annotation scale must be positive");
  using nlohmann::ordered_json;
  const auto ring = [&](const Polygon2D& p) {
    ordered_json r = ordered_json::array();
    const auto point = [&](const Vec2& q) {
      const double y = opts.flip_y ? -q.y() : q.y();
      return ordered_json::array({q.x() / opts.scale, y / opts.scale});
    };
    for (const Vec2& q : p.points()) r.push_back(point(q));
    r.push_back(point(p[0]));
    return r;
  };
  const auto feature = [&](const std::string& label, const Polygon2D& p) {
    return ordered_json{{"type", "Feature"},
                        {"geometry", {{"type", "Polygon"}, {"coordinates", {ring(p)}}}},
                        {"properties", {{"classification", {{"name", label}}}}}};
  };
  ordered_json features = ordered_json::array();
  features.push_back(feature(kContourClass, s.contour));
  for (const Roi& roi : s.rois) features.push_back(feature(roi.class_label, roi.polygon));
  return ordered_json{{"type", "FeatureCollection"}, {"features", features}}.dump(1) + "\n";
}

/// Slide file -> reference polygon name assignments.
struct SlideMapping {
  std::vector<std::pair<std::string, std::string>> entries;  // (file, polygon)
};

/// Manifest file: JSON array of {"file": ..., "polygon": ...}.
inline SlideMapping parse_manifest(std::string_view text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw SyntaxError("manifest", std::string("malformed JSON: ") + e.what());
  }
  if (!j.is_array()) throw SchemaError("manifest", "expected an array");
  SlideMapping m;
  std::set<std::string> polygons;
  for (std::size_t i = 0; i < j.size(); ++i) {
    const std::string path = "manifest[" + std::to_string(i) + "]";
    const auto& e = j[i];
    if (!e.is_object() || !e.contains("file") || !e["file"].is_string() ||
        !e.contains("polygon") || !e["polygon"].is_string() || e.size() != 2) {
      throw SchemaError(path, "expected {\"file\": string, \"polygon\": string}");
    }
    const auto polygon = e["polygon"].get<std::string>();
    if (!polygons.insert(polygon).second) {
      throw DuplicateAssignmentError(path + ": polygon '" + polygon + "' assigned twice");
    }
    m.entries.emplace_back(e["file"].get<std::string>(), polygon);
  }
  return m;
}

/// Annotation file as seen by the resolver: its name (e.g. "3L1.geojson")
/// and its parsed content.
struct AnnotationFile {
  std::string file;
  SlideAnnotations annotations;
};

struct ResolvedSlide {
  SlideAnnotations annotations;
  const ReferencePolygon* polygon = nullptr;
};

struct Resolution {
  std::vector<ResolvedSlide> slides;  // in reference-model (protocol) order
  std::vector<std::string> warnings;
};

/// Pairs annotation files with reference polygons. Without a manifest the
/// file stem must be the polygon's fragment id. With a manifest, files it
/// does not mention are an UnmappedFileError in strict mode and a warning
/// otherwise.
inline Resolution resolve_mapping(std::vector<AnnotationFile> files, const ReferenceModel& model,
                                  const std::optional<SlideMapping>& manifest = std::nullopt,
                                  bool strict = true) {
  Resolution res;
  std::map<std::string, std::string> file_to_polygon;
  if (manifest) {
    for (const auto& [file, polygon] : manifest->entries) file_to_polygon[file] = polygon;
  }
  std::map<std::string, std::size_t> by_polygon;  // polygon name -> index into files
  for (std::size_t i = 0; i < files.size(); ++i) {
    const std::string& file = files[i].file;
    std::string polygon;
    if (manifest) {
      auto it = file_to_polygon.find(file);
      if (it == file_to_polygon.end()) {
        if (strict) throw UnmappedFileError("file '" + file + "' is not in the manifest");
        res.warnings.push_back("skipping '" + file + "': not in the manifest");
        continue;
      }
      polygon = it->second;
    } else {
      polygon = std::filesystem::path(file).stem().string();
      try {
        FragmentId::parse(polygon);
      } catch (const ValidationError&) {
        throw UnknownPolygonError("file '" + file + "': stem '" + polygon +
                                  "' is not a fragment id");
      }
    }
    if (!model.find(polygon)) {
      throw UnknownPolygonError("file '" + file + "': no reference polygon '" + polygon + "'");
    }
    if (!by_polygon.emplace(polygon, i).second) {
      throw DuplicateAssignmentError("polygon '" + polygon + "' assigned to both '" +
                                     files[by_polygon[polygon]].file + "' and '" + file + "'");
    }
  }
  for (const ReferencePolygon& ref : model.polygons) {
    auto it = by_polygon.find(ref.name);
    if (it == by_polygon.end()) continue;
    res.slides.push_back({std::move(files[it->second].annotations), &ref});
  }
  return res;
}

}  // namespace histo3d
