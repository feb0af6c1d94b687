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

// Runs the ten acceptance criteria and prints one PASS/FAIL line each.
// Exit status is the number of failed criteria.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <numbers>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "commands.hpp"
#include "support/fixtures.hpp"

namespace fs = std::filesystem;
using namespace histo3d;

namespace {

struct Verdict {
  bool pass;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof(buf), f, args...);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

const ReferenceModel& suite_model() {
  static const ReferenceModel m = testing::suite_model();
  return m;
}

const std::vector<testing::SyntheticSlide>& noisy_suite() {
  static const auto s = testing::synthetic_suite(suite_model(), 0.5);
  return s;
}

std::vector<RegistrationResult> register_suite(const std::vector<testing::SyntheticSlide>& suite,
                                               const CpdConfig& cfg) {
  std::vector<RegistrationResult> out;
  for (std::size_t i = 0; i < suite.size(); ++i) {
    out.push_back(register_slide(suite[i].slide, suite_model().polygons[i], cfg, "S01"));
  }
  return out;
}

// Filled by criterion 1 and reused by criteria 3 and 9.
std::vector<RegistrationResult> g_noisy_500;

const std::vector<RegistrationResult>& noisy_500() {
  if (g_noisy_500.empty()) g_noisy_500 = register_suite(noisy_suite(), CpdConfig{});
  return g_noisy_500;
}

Verdict registration_quality() {
  const auto t0 = std::chrono::steady_clock::now();
  g_noisy_500 = register_suite(noisy_suite(), CpdConfig{});
  const double secs = seconds_since(t0);
  double sum = 0.0, lo = 1.0;
  for (const auto& r : g_noisy_500) {
    sum += r.iou;
    lo = std::min(lo, r.iou);
  }
  const double mean = sum / static_cast<double>(g_noisy_500.size());
  return {mean >= 0.90 && lo >= 0.80 && secs < 60.0,
          fmt("%zu slides, mean IoU %.4f (>= 0.90), min %.4f (>= 0.80), %.1f s (< 60)",
              g_noisy_500.size(), mean, lo, secs)};
}

Verdict exact_recovery() {
  const auto suite = testing::synthetic_suite(suite_model(), 0.0);
  const auto rs = register_suite(suite, CpdConfig{});
  double worst_deg = 0.0, worst_scale = 0.0, lo = 1.0;
  for (std::size_t i = 0; i < rs.size(); ++i) {
    const Similarity2D& truth = suite[i].truth;
    worst_deg = std::max(worst_deg, std::abs(testing::angle_diff_deg(rs[i].transform.theta, -truth.theta)));
    worst_scale = std::max(worst_scale, std::abs(rs[i].transform.scale * truth.scale - 1.0));
    lo = std::min(lo, rs[i].iou);
  }
  return {worst_deg <= 0.1 && worst_scale <= 1e-3 && lo > 0.99,
          fmt("max rotation error %.2e deg (<= 0.1), max scale error %.2e (<= 1e-3), min IoU %.4f (> 0.99)",
              worst_deg, worst_scale, lo)};
}

Verdict sampling_stability() {
  CpdConfig c1000;
  c1000.target_points = 1000;
  CpdConfig c100;
  c100.target_points = 100;
  const auto r1000 = register_suite(noisy_suite(), c1000);
  const auto r100 = register_suite(noisy_suite(), c100);
  double dev500 = 0.0, dev100 = 0.0;
  for (std::size_t i = 0; i < r1000.size(); ++i) {
    dev500 = std::max(dev500, std::abs(noisy_500()[i].iou - r1000[i].iou));
    dev100 = std::max(dev100, std::abs(r100[i].iou - r1000[i].iou));
  }
  return {dev500 < 0.02 && dev100 >= 0.02,
          fmt("max |IoU500 - IoU1000| %.4f (< 0.02), max |IoU100 - IoU1000| %.4f (>= 0.02)",
              dev500, dev100)};
}

double section_area(const TriMesh& m, const PlaneFrame& f) {
  double a = 0.0;
  for (const Polygon2D& p : plane_section(m, f)) a += polygon_area(p);
  return a;
}

Verdict slicing_oracles() {
  const double cube = section_area(testing::unit_cube(), PlaneFrame::transverse(0.5));
  const TriMesh sphere = ellipsoid_mesh(Vec3::Zero(), Vec3(10, 10, 10), 64, 128);
  const double disc = section_area(sphere, PlaneFrame::transverse(6.0));
  const double want_disc = 64.0 * std::numbers::pi;

  const TriMesh generic = generic_prostate_model(40, 30, 35);
  std::map<int, std::pair<double, PlaneFrame>> central;
  for (const ReferencePolygon& p : suite_model().polygons) {
    if (p.region.kind != RegionKind::Central) continue;
    auto [it, fresh] = central.try_emplace(p.region.slice_index, 0.0, p.frame);
    it->second.first += polygon_area(p.outline);
  }
  double worst = 0.0;
  for (const auto& [index, sum_frame] : central) {
    const double full = section_area(generic, sum_frame.second);
    worst = std::max(worst, std::abs(sum_frame.first - full) / full);
  }
  const bool pass = std::abs(cube - 1.0) <= 1e-9 &&
                    std::abs(disc - want_disc) <= 0.01 * want_disc && !central.empty() &&
                    worst <= 1e-9;
  return {pass, fmt("cube %.12f, sphere disc %.3f vs %.3f (%.3f%%), fragments vs slice over %zu "
                    "slices: max rel error %.2e",
                    cube, disc, want_disc, 100.0 * std::abs(disc / want_disc - 1.0),
                    central.size(), worst)};
}

Verdict extrusion_identity() {
  std::mt19937_64 rng(testing::kSuiteSeed + 5);
  std::uniform_int_distribution<int> nv(3, 60);
  std::uniform_real_distribution<double> thick(0.5, 8.0), off(-20.0, 20.0);
  double worst = 0.0;
  int open = 0;
  for (int i = 0; i < 100; ++i) {
    const Polygon2D p = testing::random_star(rng, nv(rng), 1.0, 12.0);
    const double t = thick(rng);
    const PlaneFrame f = i % 2 ? PlaneFrame::sagittal(off(rng)) : PlaneFrame::transverse(off(rng));
    const TriMesh m = prism_mesh(f, p, t);
    open += !is_closed(m);
    const double want = polygon_area(p) * t;
    worst = std::max(worst, std::abs(mesh_volume(m) - want) / want);
  }
  return {worst <= 1e-9 && open == 0,
          fmt("100 polygons: max rel volume error %.2e (<= 1e-9), %d not closed", worst, open)};
}

double outside_distance(const TriMesh& hull, const Vec3& p) {
  double worst = -std::numeric_limits<double>::infinity();
  for (const Triangle& t : hull.triangles) {
    const Vec3& a = hull.vertices[t[0]];
    const Vec3 n = (hull.vertices[t[1]] - a).cross(hull.vertices[t[2]] - a).normalized();
    worst = std::max(worst, n.dot(p - a));
  }
  return worst;
}

Verdict hull_properties() {
  std::vector<Vec3> corners;
  for (int i = 0; i < 8; ++i) corners.emplace_back(i & 1, (i >> 1) & 1, (i >> 2) & 1);
  const TriMesh cube = convex_hull(corners);
  const double vol = mesh_volume(cube);
  std::mt19937_64 rng(testing::kSuiteSeed + 6);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  int outside = 0;
  for (int i = 0; i < 1000; ++i) outside += outside_distance(cube, Vec3(u(rng), u(rng), u(rng))) > 1e-12;

  std::normal_distribution<double> g(0.0, 1.0);
  std::uniform_int_distribution<int> count(4, 300);
  int unstable = 0;
  for (int c = 0; c < 50; ++c) {
    std::vector<Vec3> cloud;
    const int n = count(rng);
    for (int i = 0; i < n; ++i) cloud.emplace_back(3.0 * g(rng), g(rng), 2.0 * g(rng));
    const TriMesh h = convex_hull(cloud);
    const TriMesh hh = convex_hull(h.vertices);
    std::set<std::array<double, 3>> a, b;
    for (const Vec3& v : h.vertices) a.insert({v.x(), v.y(), v.z()});
    for (const Vec3& v : hh.vertices) b.insert({v.x(), v.y(), v.z()});
    const bool same = a == b && std::abs(mesh_volume(h) - mesh_volume(hh)) <= 1e-12 * mesh_volume(h);
    unstable += !same;
  }
  return {std::abs(vol - 1.0) <= 1e-12 && outside == 0 && unstable == 0,
          fmt("cube hull volume %.15f, %d of 1000 interior points outside, %d of 50 clouds not "
              "idempotent",
              vol, outside, unstable)};
}

Verdict splatter_checks() {
  std::mt19937_64 rng(testing::kSuiteSeed + 7);
  std::uniform_real_distribution<double> off(-15.0, 15.0), thick(1.0, 7.0), rf(1.0, 3.0);
  double worst = 0.0;
  for (int i = 0; i < 50; ++i) {
    const PlaneFrame f = i % 2 ? PlaneFrame::sagittal(off(rng)) : PlaneFrame::transverse(off(rng));
    const Polygon2D poly = testing::random_star(rng, 8 + i, 0.5, 6.0, Vec2(off(rng), off(rng)));
    const double t = thick(rng);
    SplatterConfig cfg;
    cfg.radius_factor = rf(rng);
    const auto [center, semi] = splat_ellipsoid({f, poly}, t, cfg);

    long double s[3] = {0, 0, 0}, s2[3] = {0, 0, 0};
    for (const Vec2& q : poly.points()) {
      const Vec3 p = f.lift(q);
      for (int k = 0; k < 3; ++k) {
        s[k] += p[k];
        s2[k] += static_cast<long double>(p[k]) * p[k];
      }
    }
    const long double n = poly.size();
    const int normal_axis = i % 2 ? 0 : 2;
    for (int k = 0; k < 3; ++k) {
      const double mean = static_cast<double>(s[k] / n);
      double sigma = std::sqrt(std::max(0.0L, s2[k] / n - (s[k] / n) * (s[k] / n)));
      if (k == normal_axis) sigma = std::max(sigma, 0.5 * t);
      worst = std::max({worst, std::abs(center[k] - mean), std::abs(semi[k] - cfg.radius_factor * sigma)});
    }
  }
  const Vec3 abc(7.0, 4.0, 2.5);
  const double vol = mesh_volume(ellipsoid_mesh(Vec3(1, -2, 3), abc, 64, 128));
  const double want = 4.0 / 3.0 * std::numbers::pi * abc.prod();

  std::vector<RegistrationResult> rs;
  const std::vector<std::string> labels{"Gleason 3", "Gleason 4", "Gleason 5"};
  for (int i = 0; i < 5; ++i) {
    RegistrationResult r;
    r.polygon_name = "P" + std::to_string(i);
    r.thickness_mm = 3.0;
    const PlaneFrame f = PlaneFrame::transverse(3.0 * i);
    for (int k = 0; k <= i % 3; ++k) {
      r.registered_rois.push_back({labels[static_cast<std::size_t>((i + k) % 3)],
                                   {f, testing::random_star(rng, 12, 1.0, 4.0)}});
    }
    rs.push_back(r);
  }
  const auto meshes = gaussian_splatter(rs);
  std::set<std::string> seen;
  for (const auto& m : meshes) seen.insert(m.class_label);
  const bool one_per_class = meshes.size() == labels.size() && seen.size() == labels.size();
  return {worst <= 1e-9 && std::abs(vol - want) <= 0.005 * want && one_per_class,
          fmt("max mean/semi-axis error %.2e (<= 1e-9), ellipsoid volume off by %.3f%% (<= 0.5%%), "
              "%zu meshes for %zu classes",
              worst, 100.0 * std::abs(vol / want - 1.0), meshes.size(), labels.size())};
}

Verdict iou_correctness() {
  const Polygon2D a = testing::rect(0, 0, 2, 1);
  const double same = iou(a, a, 512);
  const double third = iou(a, testing::rect(1, 0, 3, 1), 512);
  const double none = iou(a, testing::rect(5, 5, 6, 6), 512);
  std::mt19937_64 rng(testing::kSuiteSeed + 8);
  std::uniform_real_distribution<double> off(-3.0, 3.0);
  double asym = 0.0;
  for (int i = 0; i < 100; ++i) {
    const Polygon2D p = testing::random_star(rng, 6 + i % 30);
    const Polygon2D q = testing::random_star(rng, 6 + i % 17, 1.0, 5.0, Vec2(off(rng), off(rng)));
    asym = std::max(asym, std::abs(iou(p, q, 512) - iou(q, p, 512)));
  }
  const bool pass = std::abs(same - 1.0) <= 0.01 && std::abs(third - 1.0 / 3.0) <= 0.01 &&
                    std::abs(none) <= 0.01 && asym <= 1e-12;
  return {pass, fmt("identical %.4f, half overlap %.4f, disjoint %.4f, max asymmetry %.2e over 100 pairs",
                    same, third, none, asym)};
}

Verdict format_round_trips() {
  std::mt19937_64 rng(testing::kSuiteSeed + 9);
  int protocol_bad = 0;
  for (int i = 0; i < 50; ++i) {
    const std::string text = testing::protocol_text(testing::random_shape(rng));
    const SectioningProtocol p = parse_protocol(text);
    const std::string once = serialize_protocol(p);
    const SectioningProtocol q = parse_protocol(once);
    bool same = serialize_protocol(q) == once;
    const auto ia = fragment_ids(p), ib = fragment_ids(q);
    same = same && ia.size() == ib.size();
    for (std::size_t k = 0; same && k < ia.size(); ++k) same = ia[k].id.str() == ib[k].id.str();
    protocol_bad += !same;
  }

  const std::vector<TriMesh> meshes{testing::unit_cube(), ellipsoid_mesh(Vec3(1, 2, 3), Vec3(4, 5, 6), 12, 24),
                                    generic_prostate_model(40, 30, 35),
                                    prism_mesh(PlaneFrame::sagittal(2.0), testing::random_star(rng, 17), 2.5)};
  int obj_bad = 0;
  for (const TriMesh& m : meshes) {
    const std::string text = write_obj(m);
    const TriMesh back = load_mesh(text, MeshFormat::OBJ);
    bool same = back.vertices.size() == m.vertices.size() && back.triangles == m.triangles &&
                write_obj(back) == text;
    for (std::size_t k = 0; same && k < m.vertices.size(); ++k) {
      same = (back.vertices[k] - m.vertices[k]).norm() <= 1e-6 * std::max(1.0, m.vertices[k].norm());
    }
    obj_bad += !same;
  }

  double worst = 0.0;
  std::size_t compared = 0;
  const auto& registered = noisy_500();
  const auto exported = serialize_registered(registered, ExportGranularity::Slide);
  const auto back = parse_registered(exported.json);
  bool shape_ok = back.size() == registered.size();
  for (std::size_t i = 0; shape_ok && i < back.size(); ++i) {
    const auto a = registered[i].registered_contour.points3d();
    const auto b = back[i].registered_contour.points3d();
    shape_ok = a.size() == b.size() && back[i].polygon_name == registered[i].polygon_name;
    for (std::size_t k = 0; shape_ok && k < a.size(); ++k, ++compared) {
      worst = std::max(worst, (a[k] - b[k]).cwiseAbs().maxCoeff());
    }
  }
  return {protocol_bad == 0 && obj_bad == 0 && shape_ok && compared > 0 && worst <= 1e-9,
          fmt("%d of 50 protocols differ, %d of %zu OBJ meshes differ, registered JSON max "
              "coordinate error %.2e over %zu points",
              protocol_bad, obj_bad, meshes.size(), worst, compared)};
}

std::map<std::string, std::string> output_hashes(const fs::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (!e.is_regular_file() || e.path().filename() == "run_manifest.json") continue;
    out[fs::relative(e.path(), dir).generic_string()] = cli::sha256_hex(read_file(e.path().string()));
  }
  return out;
}

int run_tool(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int rc = cli::run_cli(args, out, err);
  if (rc != 0) std::fprintf(stderr, "%s", err.str().c_str());
  return rc;
}

Polygon2D shrunk(const Polygon2D& p, double f, const Vec2& shift) {
  Vec2 c = Vec2::Zero();
  for (const Vec2& q : p.points()) c += q;
  c /= static_cast<double>(p.size());
  std::vector<Vec2> pts;
  for (const Vec2& q : p.points()) pts.push_back(c + f * (q - c) + shift);
  return Polygon2D(pts);
}

Verdict end_to_end_determinism() {
  const fs::path root = fs::temp_directory_path() / "histo3d_acceptance";
  fs::remove_all(root);
  fs::create_directories(root / "annotations");
  // Noise-free slides: vertex jitter can make a contour cross itself, and
  // GeoJSON ingest rejects such rings.
  const auto suite = testing::synthetic_suite(suite_model(), 0.0);
  for (std::size_t i = 0; i < suite.size(); ++i) {
    SlideAnnotations s = suite[i].slide;
    if (i % 3 == 0) s.rois.push_back({"Gleason 4", shrunk(s.contour, 0.4, Vec2::Zero())});
    if (i % 4 == 1) s.rois.push_back({"Gleason 3", shrunk(s.contour, 0.25, Vec2(0.5, 0.0))});
    write_file((root / "annotations" / (s.slide_name + ".geojson")).string(), to_geojson(s));
  }
  nlohmann::json cfg{{"protocol", testing::sample_path("figure2_protocol.json")},
                     {"generic_dims", {40, 30, 35}},
                     {"annotations", (root / "annotations").string()},
                     {"methods", {"convex_hull", "gaussian_splatter", "linear_extrusion"}}};
  write_file((root / "pipeline.json").string(), cfg.dump(2));

  const auto t0 = std::chrono::steady_clock::now();
  std::vector<std::map<std::string, std::string>> runs;
  for (const char* name : {"run1", "run2"}) {
    if (run_tool({"pipeline", "--config", (root / "pipeline.json").string(), "--out", (root / name).string()}) != 0) {
      return {false, "pipeline run failed"};
    }
    runs.push_back(output_hashes(root / name));
  }
  const double secs = seconds_since(t0) / 2.0;

  const std::vector<std::string> ids{"1L1", "7LV", "8LD", "9RV", "11LV"};
  nlohmann::json mark = cfg;
  mark.erase("annotations");
  mark["methods"] = {"linear_extrusion"};
  mark["mark_slides"] = {{"ids", ids}, {"class_label", "tumor-positive"}};
  write_file((root / "mark.json").string(), mark.dump(2));
  std::vector<std::map<std::string, std::string>> marks;
  for (const char* name : {"mark1", "mark2"}) {
    if (run_tool({"pipeline", "--config", (root / "mark.json").string(), "--out", (root / name).string()}) != 0) {
      return {false, "mark-slides pipeline run failed"};
    }
    marks.push_back(output_hashes(root / name));
  }
  const ReferenceModel model =
      parse_reference_model(read_file((root / "mark1" / "reference_model.json").string()), "S01");
  double want = 0.0;
  for (const auto& id : ids) {
    const ReferencePolygon* p = model.find(id);
    if (!p) return {false, "marked id missing from reference model: " + id};
    want += polygon_area(p->outline) * p->thickness_mm;
  }
  const auto summary =
      nlohmann::json::parse(read_file((root / "mark1" / "reconstruction_summary.json").string()));
  const double got = summary.at(0).at("volume_mm3").get<double>();
  const double rel = std::abs(got - want) / want;

  const bool pass = !runs[0].empty() && runs[0] == runs[1] && !marks[0].empty() &&
                    marks[0] == marks[1] && rel <= 1e-9;
  const std::string detail =
      fmt("pipeline: %zu files, identical %s, %.1f s per run; mark-slides: %zu files, identical "
          "%s, slab volume %.6f vs area*thickness %.6f (rel %.2e)",
          runs[0].size(), runs[0] == runs[1] ? "yes" : "no", secs, marks[0].size(),
          marks[0] == marks[1] ? "yes" : "no", got, want, rel);
  fs::remove_all(root);
  return {pass, detail};
}

}  // namespace

int main(int argc, char** argv) {
  // Optional arguments select criteria by number.
  std::set<std::size_t> only;
  for (int i = 1; i < argc; ++i) only.insert(std::stoul(argv[i]));
  const std::vector<std::pair<std::string, std::function<Verdict()>>> criteria{
      {"registration quality", registration_quality},
      {"exact recovery", exact_recovery},
      {"sampling-point stability", sampling_stability},
      {"slicing oracles", slicing_oracles},
      {"extrusion identity", extrusion_identity},
      {"hull properties", hull_properties},
      {"splatter", splatter_checks},
      {"IoU correctness", iou_correctness},
      {"format round-trips", format_round_trips},
      {"end-to-end determinism", end_to_end_determinism},
  };
  int failed = 0;
  int ran = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    if (!only.empty() && !only.contains(i + 1)) continue;
    ++ran;
    Verdict v{false, ""};
    try {
      v = criteria[i].second();
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    failed += !v.pass;
    std::printf("[%s] %2zu %s: %s\n", v.pass ? "PASS" : "FAIL", i + 1, criteria[i].first.c_str(),
                v.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%d of %d criteria passed\n", ran - failed, ran);
  return failed;
}
