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

#include <random>
#include <string>

#include <gtest/gtest.h>

#include "support/fixtures.hpp"

namespace histo3d {
namespace {

using nlohmann::json;

json ring(std::initializer_list<std::pair<double, double>> pts) {
  json r = json::array();
  for (const auto& [x, y] : pts) r.push_back({x, y});
  r.push_back(r[0]);
  return r;
}

json square_ring(double x, double y, double s) {
  return ring({{x, y}, {x + s, y}, {x + s, y + s}, {x, y + s}});
}

json feature(const json& classification, const json& geometry) {
  return {{"type", "Feature"}, {"geometry", geometry}, {"properties", {{"classification", classification}}}};
}

json polygon(const json& outer) { return {{"type", "Polygon"}, {"coordinates", {outer}}}; }

json collection(std::vector<json> features) {
  return {{"type", "FeatureCollection"}, {"features", features}};
}

json contour_feature() {
  return feature({{"name", "Contour"}}, polygon(square_ring(0, 0, 100)));
}

TEST(GeoJson, ContourAndFiveTumorRois) {
  std::vector<json> f{contour_feature()};
  for (int k = 0; k < 5; ++k) {
    f.push_back(feature({{"name", "Gleason 4"}}, polygon(square_ring(10 + 15 * k, 10, 8))));
  }
  const SlideAnnotations s = parse_geojson_annotations(collection(f).dump(), "slide A");
  EXPECT_EQ(s.slide_name, "slide A");
  EXPECT_NEAR(polygon_area(s.contour), 10000.0, 1e-9);
  ASSERT_EQ(s.rois.size(), 5u);
  for (const Roi& r : s.rois) EXPECT_EQ(r.class_label, "Gleason 4");
}

TEST(GeoJson, ContourOnlyIsValid) {
  const auto s = parse_geojson_annotations(collection({contour_feature()}).dump(), "s");
  EXPECT_TRUE(s.rois.empty());
}

TEST(GeoJson, ContourErrors) {
  EXPECT_THROW(parse_geojson_annotations(collection({contour_feature(), contour_feature()}).dump(), "s"),
               MultipleContourError);
  EXPECT_THROW(parse_geojson_annotations(
                   collection({feature("Gleason 3", polygon(square_ring(0, 0, 1)))}).dump(), "s"),
               MissingContourError);
  const json multi = {{"type", "MultiPolygon"},
                      {"coordinates", {{square_ring(0, 0, 1)}, {square_ring(5, 5, 1)}}}};
  EXPECT_THROW(parse_geojson_annotations(collection({feature("Contour", multi)}).dump(), "s"),
               GeometryError);
}

TEST(GeoJson, GeometryAndSchemaErrors) {
  const json bowtie = polygon(ring({{0, 0}, {10, 10}, {10, 0}, {0, 10}}));
  EXPECT_THROW(parse_geojson_annotations(
                   collection({contour_feature(), feature("Gleason 3", bowtie)}).dump(), "s"),
               GeometryError);
  const json two_points = polygon(json::array({{0, 0}, {1, 1}, {0, 0}}));
  EXPECT_THROW(parse_geojson_annotations(
                   collection({contour_feature(), feature("Gleason 3", two_points)}).dump(), "s"),
               GeometryError);
  EXPECT_THROW(parse_geojson_annotations(R"({"type": "Feature"})", "s"), SchemaError);
  EXPECT_THROW(parse_geojson_annotations("{", "s"), SyntaxError);
  const json line = {{"type", "LineString"}, {"coordinates", json::array({{0, 0}, {1, 1}})}};
  EXPECT_THROW(parse_geojson_annotations(collection({contour_feature(), feature("x", line)}).dump(), "s"),
               SchemaError);
  // ROI far outside the contour fails the bounds sanity check.
  EXPECT_THROW(parse_geojson_annotations(
                   collection({contour_feature(), feature("G", polygon(square_ring(500, 500, 5)))}).dump(),
                   "s"),
               GeometryError);
}

TEST(GeoJson, ClassificationLookupOrderAndMultiPolygonRois) {
  json as_string = contour_feature();
  as_string["properties"] = {{"classification", "Contour"}};
  json as_class = feature(nullptr, polygon(square_ring(20, 20, 5)));
  as_class["properties"] = {{"class", "Gleason 5"}};
  json unclassified = {{"type", "Feature"}, {"geometry", polygon(square_ring(30, 30, 5))}, {"properties", json::object()}};
  const json multi = {{"type", "MultiPolygon"},
                      {"coordinates", {{square_ring(1, 1, 2), square_ring(1.5, 1.5, 0.5)}, {square_ring(50, 50, 3)}}}};
  const auto s = parse_geojson_annotations(
      collection({as_string, as_class, unclassified, feature({{"name", "Gleason 3"}}, multi)}).dump(), "s");
  ASSERT_EQ(s.rois.size(), 3u);
  EXPECT_EQ(s.rois[0].class_label, "Gleason 5");
  EXPECT_EQ(s.rois[1].class_label, "Gleason 3");
  EXPECT_NEAR(polygon_area(s.rois[1].polygon), 4.0, 1e-12);  // hole ignored
  EXPECT_EQ(s.rois[2].class_label, "Gleason 3");
}

TEST(GeoJson, ScaleAndFlip) {
  const json doc = collection({contour_feature()});
  const auto mm = parse_geojson_annotations(doc.dump(), "s", {.scale = 0.00025});
  EXPECT_NEAR(polygon_area(mm.contour), 10000.0 * 0.00025 * 0.00025, 1e-15);
  const auto flipped = parse_geojson_annotations(doc.dump(), "s", {.scale = 1.0, .flip_y = true});
  EXPECT_LE(flipped.contour.bounds().max.y(), 0.0);
  EXPECT_THROW(parse_geojson_annotations(doc.dump(), "s", {.scale = 0.0}), ArgumentError);
}

TEST(GeoJson, ReserializationIsLossless) {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    SlideAnnotations s{"s", testing::random_star(rng, 40, 1000, 5000), {}};
    for (int k = 0; k < 3; ++k) {
      s.rois.push_back({"Gleason " + std::to_string(3 + k), testing::random_star(rng, 12, 50, 300)});
    }
    const IngestOptions opts{.scale = 0.00025 * (1 + trial), .flip_y = trial % 2 == 1};
    const std::string text = to_geojson(s, opts);
    const auto back = parse_geojson_annotations(text, "s", opts);
    ASSERT_EQ(back.contour.size(), s.contour.size());
    ASSERT_EQ(back.rois.size(), 3u);
    // Round trip through pixels: the second re-serialization is stable.
    const auto again = parse_geojson_annotations(to_geojson(back, opts), "s", opts);
    for (std::size_t i = 0; i < back.contour.size(); ++i) {
      const Vec2& a = back.contour[i];
      const Vec2& b = again.contour[i];
      EXPECT_LE((a - b).cwiseAbs().maxCoeff(), 1e-9 * std::max(1.0, a.cwiseAbs().maxCoeff()));
    }
    for (std::size_t k = 0; k < 3; ++k) EXPECT_EQ(again.rois[k].class_label, s.rois[k].class_label);
  }
}

class Mapping : public ::testing::Test {
 protected:
  void SetUp() override {
    model = build_reference_model(generic_prostate_model(40, 30, 35),
                                  parse_protocol(testing::protocol_text({.central_count = 4, .central_split = true})));
  }
  AnnotationFile file(const std::string& name) {
    return {name, {name, testing::rect(0, 0, 1, 1), {}}};
  }
  ReferenceModel model;
};

TEST_F(Mapping, FileStemConvention) {
  // Central ids are <block><LV|LD|RV|RD>; pick two present in the model.
  const std::string a = model.polygons[4].name, b = model.polygons[2].name;
  const auto res = resolve_mapping({file(a + ".geojson"), file(b + ".geojson")}, model);
  ASSERT_EQ(res.slides.size(), 2u);
  EXPECT_EQ(res.slides[0].polygon->name, b);  // protocol order
  EXPECT_EQ(res.slides[1].polygon->name, a);
}

TEST_F(Mapping, ManifestAndErrors) {
  const std::string target = model.polygons[5].name;
  const auto manifest = parse_manifest(
      json::array({{{"file", "tumor_slide_A.geojson"}, {"polygon", target}}}).dump());
  const auto res = resolve_mapping({file("tumor_slide_A.geojson")}, model, manifest);
  ASSERT_EQ(res.slides.size(), 1u);
  EXPECT_EQ(res.slides[0].polygon->name, target);

  EXPECT_THROW(resolve_mapping({file("9Q.geojson")}, model), UnknownPolygonError);
  EXPECT_THROW(resolve_mapping({file("99LV.geojson")}, model), UnknownPolygonError);
  EXPECT_THROW(resolve_mapping({file("other.geojson")}, model, manifest, true), UnmappedFileError);
  const auto lenient = resolve_mapping({file("tumor_slide_A.geojson"), file("other.geojson")}, model,
                                       manifest, false);
  EXPECT_EQ(lenient.slides.size(), 1u);
  EXPECT_EQ(lenient.warnings.size(), 1u);

  EXPECT_THROW(parse_manifest(json::array({{{"file", "a"}, {"polygon", target}},
                                           {{"file", "b"}, {"polygon", target}}})
                                  .dump()),
               DuplicateAssignmentError);
  const auto twice = parse_manifest(json::array({{{"file", "a"}, {"polygon", target}},
                                                 {{"file", "b"}, {"polygon", model.polygons[6].name}}})
                                        .dump());
  EXPECT_NO_THROW(resolve_mapping({file("a"), file("b")}, model, twice));
  EXPECT_THROW(parse_manifest("{}"), SchemaError);
}

TEST_F(Mapping, DuplicateByStem) {
  const auto manifest = parse_manifest(
      json::array({{{"file", "x.geojson"}, {"polygon", model.polygons[0].name}},
                   {{"file", "y.geojson"}, {"polygon", model.polygons[1].name}}})
          .dump());
  EXPECT_NO_THROW(resolve_mapping({file("x.geojson"), file("y.geojson")}, model, manifest));
  const std::string n = model.polygons[0].name;
  EXPECT_THROW(resolve_mapping({file(n + ".geojson"), file(n + ".json")}, model),
               DuplicateAssignmentError);
}

}  // namespace
}  // namespace histo3d
