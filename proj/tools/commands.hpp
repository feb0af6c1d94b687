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

// Subcommands of the histo3d tool. Kept in a header so tests can drive the
// exact code path of the binary through run_cli().

#pragma once

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>
#include <openssl/evp.h>

#include "histo3d/histo3d.hpp"

namespace histo3d::cli {

namespace fs = std::filesystem;

struct PipelineConfig {
  fs::path protocol;
  fs::path mesh;
  std::optional<std::array<double, 3>> generic_dims;
  std::array<double, 3> rotate_deg{0.0, 0.0, 0.0};
  std::array<double, 3> mesh_scale{1.0, 1.0, 1.0};
  std::optional<double> apex_offset_mm;
  std::optional<double> base_offset_mm;

  fs::path reference;  // standalone register / mark-slides input
  std::string case_id;
  fs::path annotations;
  fs::path manifest;
  bool strict = true;
  IngestOptions ingest;
  CpdConfig cpd;
  ExportGranularity per = ExportGranularity::Slide;

  fs::path registered;  // standalone reconstruct input
  SplatterConfig splatter;
  std::vector<ReconstructionMethod> methods{ReconstructionMethod::ConvexHull,
                                            ReconstructionMethod::GaussianSplatter,
                                            ReconstructionMethod::LinearExtrusion};

  /// Set: the pipeline marks these slides instead of registering annotations.
  std::optional<std::vector<std::string>> mark_ids;
  std::string mark_class = "tumor-positive";

  fs::path output = "histo3d_out";
};

inline const char* granularity_name(ExportGranularity g) {
  return g == ExportGranularity::Slide ? "slide" : "annotation";
}

inline ExportGranularity parse_granularity(const std::string& s) {
  if (s == "slide") return ExportGranularity::Slide;
  if (s == "annotation") return ExportGranularity::Annotation;
  throw ConfigError("export granularity must be 'slide' or 'annotation', got '" + s + "'");
}

namespace detail {

using nlohmann::json;

inline std::array<double, 3> triple(const json& j, const std::string& key) {
  if (j.is_number()) {
    const double v = j.get<double>();
    return {v, v, v};
  }
  if (!j.is_array() || j.size() != 3 || !j[0].is_number() || !j[1].is_number() ||
      !j[2].is_number()) {
    throw SchemaError(key, "expected three numbers");
  }
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

inline double number(const json& j, const std::string& key) {
  if (!j.is_number()) throw SchemaError(key, "expected a number");
  return j.get<double>();
}

inline int integer(const json& j, const std::string& key) {
  if (!j.is_number_integer()) throw SchemaError(key, "expected an integer");
  return j.get<int>();
}

inline std::string string(const json& j, const std::string& key) {
  if (!j.is_string()) throw SchemaError(key, "expected a string");
  return j.get<std::string>();
}

inline bool boolean(const json& j, const std::string& key) {
  if (!j.is_boolean()) throw SchemaError(key, "expected true or false");
  return j.get<bool>();
}

inline void check_keys(const json& j, const std::string& path,
                       std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw SchemaError(path, "expected an object");
  for (const auto& [key, value] : j.items()) {
    if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; })) {
      throw SchemaError(path.empty() ? key : path + "." + key, "unknown key");
    }
  }
}

inline double mpp_to_scale(double mpp) {
  if (!(mpp > 0.0)) throw ConfigError("microns per pixel must be positive");
  return mpp / 1000.0;
}

}  // namespace detail

/// Reads a pipeline config file. Relative paths are resolved against the
/// file's directory.
inline PipelineConfig load_config(const fs::path& file) {
  using nlohmann::json;
  json j;
  try {
    j = json::parse(read_file(file.string()));
  } catch (const json::parse_error& e) {
    throw SyntaxError(file.string(), std::string("malformed JSON: ") + e.what());
  }
  detail::check_keys(j, "",
                     {"protocol", "mesh", "generic_dims", "rotate_deg", "mesh_scale",
                      "apex_offset_mm", "base_offset_mm", "reference", "case_id", "annotations",
                      "manifest", "strict", "mpp", "annotation_scale", "flip_y", "cpd",
                      "export", "registered", "splatter", "methods", "mark_slides", "output"});
  const fs::path base = file.parent_path();
  const auto path = [&](const char* key) {
    const fs::path p = detail::string(j[key], key);
    return p.is_absolute() ? p : base / p;
  };
  PipelineConfig c;
  if (j.contains("protocol")) c.protocol = path("protocol");
  if (j.contains("mesh")) c.mesh = path("mesh");
  if (j.contains("generic_dims")) c.generic_dims = detail::triple(j["generic_dims"], "generic_dims");
  if (j.contains("rotate_deg")) c.rotate_deg = detail::triple(j["rotate_deg"], "rotate_deg");
  if (j.contains("mesh_scale")) c.mesh_scale = detail::triple(j["mesh_scale"], "mesh_scale");
  if (j.contains("apex_offset_mm")) c.apex_offset_mm = detail::number(j["apex_offset_mm"], "apex_offset_mm");
  if (j.contains("base_offset_mm")) c.base_offset_mm = detail::number(j["base_offset_mm"], "base_offset_mm");
  if (j.contains("reference")) c.reference = path("reference");
  if (j.contains("case_id")) c.case_id = detail::string(j["case_id"], "case_id");
  if (j.contains("annotations")) c.annotations = path("annotations");
  if (j.contains("manifest")) c.manifest = path("manifest");
  if (j.contains("strict")) c.strict = detail::boolean(j["strict"], "strict");
  if (j.contains("mpp") && j.contains("annotation_scale")) {
    throw ConfigError("give either mpp or annotation_scale, not both");
  }
  if (j.contains("mpp")) c.ingest.scale = detail::mpp_to_scale(detail::number(j["mpp"], "mpp"));
  if (j.contains("annotation_scale")) {
    c.ingest.scale = detail::number(j["annotation_scale"], "annotation_scale");
  }
  if (j.contains("flip_y")) c.ingest.flip_y = detail::boolean(j["flip_y"], "flip_y");
  if (j.contains("cpd")) {
    const auto& k = j["cpd"];
    detail::check_keys(k, "cpd",
                       {"target_points", "outlier_weight", "max_iterations", "sigma_tolerance",
                        "rotation_restarts", "restart_step_deg", "iou_resolution",
                        "estimate_scale"});
    if (k.contains("target_points")) c.cpd.target_points = detail::integer(k["target_points"], "cpd.target_points");
    if (k.contains("outlier_weight")) c.cpd.outlier_weight = detail::number(k["outlier_weight"], "cpd.outlier_weight");
    if (k.contains("max_iterations")) c.cpd.max_iterations = detail::integer(k["max_iterations"], "cpd.max_iterations");
    if (k.contains("sigma_tolerance")) c.cpd.sigma_tolerance = detail::number(k["sigma_tolerance"], "cpd.sigma_tolerance");
    if (k.contains("rotation_restarts")) c.cpd.rotation_restarts = detail::integer(k["rotation_restarts"], "cpd.rotation_restarts");
    if (k.contains("restart_step_deg")) c.cpd.restart_step_deg = detail::number(k["restart_step_deg"], "cpd.restart_step_deg");
    if (k.contains("iou_resolution")) c.cpd.iou_resolution = detail::integer(k["iou_resolution"], "cpd.iou_resolution");
    if (k.contains("estimate_scale")) c.cpd.estimate_scale = detail::boolean(k["estimate_scale"], "cpd.estimate_scale");
  }
  if (j.contains("export")) c.per = parse_granularity(detail::string(j["export"], "export"));
  if (j.contains("registered")) c.registered = path("registered");
  if (j.contains("splatter")) {
    const auto& k = j["splatter"];
    detail::check_keys(k, "splatter", {"radius_factor", "min_normal_sigma_mm", "stacks", "slices"});
    if (k.contains("radius_factor")) c.splatter.radius_factor = detail::number(k["radius_factor"], "splatter.radius_factor");
    if (k.contains("min_normal_sigma_mm")) c.splatter.min_normal_sigma_mm = detail::number(k["min_normal_sigma_mm"], "splatter.min_normal_sigma_mm");
    if (k.contains("stacks")) c.splatter.stacks = detail::integer(k["stacks"], "splatter.stacks");
    if (k.contains("slices")) c.splatter.slices = detail::integer(k["slices"], "splatter.slices");
  }
  if (j.contains("methods")) {
    if (!j["methods"].is_array()) throw SchemaError("methods", "expected an array of names");
    c.methods.clear();
    for (const auto& m : j["methods"]) c.methods.push_back(parse_method(detail::string(m, "methods")));
  }
  if (j.contains("mark_slides")) {
    const auto& k = j["mark_slides"];
    detail::check_keys(k, "mark_slides", {"ids", "class_label"});
    if (!k.contains("ids") || !k["ids"].is_array()) {
      throw SchemaError("mark_slides.ids", "expected an array of fragment ids");
    }
    c.mark_ids.emplace();
    for (const auto& id : k["ids"]) c.mark_ids->push_back(detail::string(id, "mark_slides.ids"));
    if (k.contains("class_label")) c.mark_class = detail::string(k["class_label"], "mark_slides.class_label");
  }
  if (j.contains("output")) c.output = path("output");
  return c;
}

inline nlohmann::ordered_json config_json(const PipelineConfig& c) {
  using nlohmann::ordered_json;
  ordered_json j;
  j["protocol"] = c.protocol.generic_string();
  j["mesh"] = c.mesh.generic_string();
  j["generic_dims"] = c.generic_dims ? ordered_json(*c.generic_dims) : ordered_json(nullptr);
  j["rotate_deg"] = c.rotate_deg;
  j["mesh_scale"] = c.mesh_scale;
  j["apex_offset_mm"] = c.apex_offset_mm ? ordered_json(*c.apex_offset_mm) : ordered_json(nullptr);
  j["base_offset_mm"] = c.base_offset_mm ? ordered_json(*c.base_offset_mm) : ordered_json(nullptr);
  j["annotations"] = c.annotations.generic_string();
  j["manifest"] = c.manifest.generic_string();
  j["strict"] = c.strict;
  j["annotation_scale"] = c.ingest.scale;
  j["flip_y"] = c.ingest.flip_y;
  j["cpd"] = {{"target_points", c.cpd.target_points},
              {"outlier_weight", c.cpd.outlier_weight},
              {"max_iterations", c.cpd.max_iterations},
              {"sigma_tolerance", c.cpd.sigma_tolerance},
              {"rotation_restarts", c.cpd.rotation_restarts},
              {"restart_step_deg", c.cpd.restart_step_deg},
              {"iou_resolution", c.cpd.iou_resolution},
              {"estimate_scale", c.cpd.estimate_scale}};
  j["export"] = granularity_name(c.per);
  j["splatter"] = {{"radius_factor", c.splatter.radius_factor},
                   {"min_normal_sigma_mm", c.splatter.min_normal_sigma_mm
                                               ? ordered_json(*c.splatter.min_normal_sigma_mm)
                                               : ordered_json(nullptr)},
                   {"stacks", c.splatter.stacks},
                   {"slices", c.splatter.slices}};
  ordered_json methods = ordered_json::array();
  for (auto m : c.methods) methods.push_back(method_name(m));
  j["methods"] = methods;
  if (c.mark_ids) j["mark_slides"] = {{"ids", *c.mark_ids}, {"class_label", c.mark_class}};
  j["output"] = c.output.generic_string();
  return j;
}

inline std::string sha256_hex(std::string_view bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw IoError("SHA-256 computation failed");
  }
  std::string hex;
  char buf[3];
  for (unsigned int i = 0; i < len; ++i) {
    std::snprintf(buf, sizeof(buf), "%02x", digest[i]);
    hex += buf;
  }
  return hex;
}

/// Files written by one stage, relative to the output directory.
struct StageRecord {
  std::string name;
  double seconds = 0.0;
  std::vector<std::pair<std::string, std::string>> files;  // (relative path, sha256)
};

class Writer {
 public:
  explicit Writer(fs::path root) : root_(std::move(root)) {}

  const fs::path& root() const { return root_; }

  void write(StageRecord& rec, const std::string& relative, std::string_view contents) {
    const fs::path target = root_ / relative;
    std::error_code ec;
    fs::create_directories(target.parent_path(), ec);
    if (ec) throw IoError("cannot create directory " + target.parent_path().string());
    write_file(target.string(), contents);
    rec.files.emplace_back(relative, sha256_hex(contents));
  }

 private:
  fs::path root_;
};

inline SectioningProtocol load_protocol(const fs::path& p) {
  if (p.empty()) throw ConfigError("no protocol given (--protocol)");
  return parse_protocol(read_file(p.string()));
}

/// The input mesh after the configured scale and rotation about its
/// bounding-box centre.
inline TriMesh load_model_mesh(const PipelineConfig& c) {
  const bool has_mesh = !c.mesh.empty();
  if (has_mesh == c.generic_dims.has_value()) {
    throw ConfigError(has_mesh ? "give either a mesh or generic-model dimensions, not both"
                               : "no mesh given and no generic-model dimensions (--mesh or --generic-dims)");
  }
  TriMesh m = has_mesh ? load_mesh_file(c.mesh.string())
                       : generic_prostate_model((*c.generic_dims)[0], (*c.generic_dims)[1],
                                                (*c.generic_dims)[2]);
  const Vec3 scale(c.mesh_scale[0], c.mesh_scale[1], c.mesh_scale[2]);
  const Vec3 rot(c.rotate_deg[0], c.rotate_deg[1], c.rotate_deg[2]);
  if (scale != Vec3::Ones() || rot != Vec3::Zero()) {
    const Vec3 center = bounding_box(m).center();
    const AffineTransform3D t = AffineTransform3D::translation_by(center)
                                    .after(AffineTransform3D::rotation_xyz_deg(rot))
                                    .after(AffineTransform3D::scaling(scale))
                                    .after(AffineTransform3D::translation_by(-center));
    m = apply_transform(m, t);
  }
  return m;
}

inline std::string format_fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
  return buf;
}

inline ReferenceModel stage_slice(const PipelineConfig& c, Writer& w, StageRecord& rec,
                                  std::ostream& out) {
  const SectioningProtocol p = load_protocol(c.protocol);
  const TriMesh mesh = load_model_mesh(c);
  ReferenceModel model = build_reference_model(mesh, p, {c.apex_offset_mm, c.base_offset_mm});
  w.write(rec, "reference_model.json", serialize_reference_model(model));
  for (const auto& [name, obj] : export_reference_obj(model)) w.write(rec, "reference/" + name, obj);

  out << "reference polygons: " << model.polygons.size() << "\n";
  std::map<std::string, std::vector<double>> thickness;
  for (const auto& ref : model.polygons) {
    auto& v = thickness[ref.region.name()];
    if (std::none_of(v.begin(), v.end(), [&](double t) { return std::abs(t - ref.thickness_mm) < 1e-9; })) {
      v.push_back(ref.thickness_mm);
    }
  }
  for (const char* region : {"apex", "central", "base"}) {
    if (!thickness.contains(region)) continue;
    out << "  " << region << " thickness mm:";
    for (double t : thickness[region]) out << " " << format_fixed(t, 4);
    out << "\n";
  }
  return model;
}

inline std::string resolve_case_id(const PipelineConfig& c) {
  if (!c.case_id.empty()) return c.case_id;
  if (!c.protocol.empty()) return load_protocol(c.protocol).case_id;
  throw ConfigError("case id unknown: give --case-id or --protocol");
}

/// Reference model from --reference if given, otherwise sliced in memory.
inline ReferenceModel obtain_model(const PipelineConfig& c) {
  if (!c.reference.empty()) {
    return parse_reference_model(read_file(c.reference.string()), resolve_case_id(c));
  }
  const SectioningProtocol p = load_protocol(c.protocol);
  return build_reference_model(load_model_mesh(c), p, {c.apex_offset_mm, c.base_offset_mm});
}

inline void write_registered(const std::vector<RegistrationResult>& results,
                             const PipelineConfig& c, Writer& w, StageRecord& rec) {
  const RegisteredExport ex = serialize_registered(results, c.per);
  w.write(rec, "registered.json", ex.json);
  for (const auto& [name, obj] : ex.obj_files) w.write(rec, "registered/" + name, obj);
}

inline std::vector<RegistrationResult> stage_register(const PipelineConfig& c,
                                                      const ReferenceModel& model, Writer& w,
                                                      StageRecord& rec, std::ostream& out,
                                                      std::ostream& err) {
  if (c.annotations.empty()) throw ConfigError("no annotations directory given (--annotations)");
  if (!fs::is_directory(c.annotations)) {
    throw ConfigError("annotations directory not found: " + c.annotations.string());
  }
  std::vector<fs::path> paths;
  for (const auto& entry : fs::directory_iterator(c.annotations)) {
    if (entry.is_regular_file() && entry.path().extension() == ".geojson") {
      paths.push_back(entry.path());
    }
  }
  std::sort(paths.begin(), paths.end());
  if (paths.empty()) {
    if (c.strict) throw ConfigError("no .geojson files in " + c.annotations.string());
    err << "warning: no .geojson files in " << c.annotations.string() << "\n";
  }
  std::vector<AnnotationFile> files;
  for (const fs::path& p : paths) {
    files.push_back({p.filename().string(),
                     parse_geojson_annotations(read_file(p.string()), p.stem().string(), c.ingest)});
  }
  std::optional<SlideMapping> manifest;
  if (!c.manifest.empty()) manifest = parse_manifest(read_file(c.manifest.string()));
  const Resolution res = resolve_mapping(std::move(files), model, manifest, c.strict);
  for (const auto& warning : res.warnings) err << "warning: " << warning << "\n";

  std::vector<RegistrationResult> results;
  for (const ResolvedSlide& s : res.slides) {
    results.push_back(register_slide(s.annotations, *s.polygon, c.cpd, model.case_id));
  }
  write_registered(results, c, w, rec);

  nlohmann::ordered_json report = nlohmann::ordered_json::array();
  out << "slide        polygon  iou     angle  iters\n";
  double sum = 0.0, sum2 = 0.0;
  for (const auto& r : results) {
    char line[160];
    std::snprintf(line, sizeof(line), "%-12s %-8s %.4f %6.1f %6d%s\n", r.slide_name.c_str(),
                  r.polygon_name.c_str(), r.iou, r.restart_angle_deg, r.iterations_used,
                  r.converged ? "" : " (max iterations)");
    out << line;
    sum += r.iou;
    sum2 += r.iou * r.iou;
    report.push_back({{"slide", r.slide_name},
                      {"polygon", r.polygon_name},
                      {"iou", r.iou},
                      {"restart_angle_deg", r.restart_angle_deg},
                      {"iterations", r.iterations_used},
                      {"converged", r.converged}});
  }
  if (!results.empty()) {
    const double n = static_cast<double>(results.size());
    const double mean = sum / n;
    const double sd = std::sqrt(std::max(0.0, sum2 / n - mean * mean));
    out << "mean IoU " << format_fixed(mean, 4) << " +/- " << format_fixed(sd, 4) << " over "
        << results.size() << " slides\n";
  }
  w.write(rec, "registration_report.json", report.dump(1) + "\n");
  return results;
}

inline std::vector<RegistrationResult> stage_mark(const PipelineConfig& c,
                                                  const ReferenceModel& model, Writer& w,
                                                  StageRecord& rec, std::ostream& out) {
  const std::vector<std::string> ids = c.mark_ids.value_or(std::vector<std::string>{});
  auto results = mark_slides(model, ids, c.mark_class);
  write_registered(results, c, w, rec);
  out << "marked slides: " << results.size() << " (" << c.mark_class << ")\n";
  return results;
}

inline void stage_reconstruct(const PipelineConfig& c,
                              const std::vector<RegistrationResult>& results, std::string case_id,
                              Writer& w, StageRecord& rec, std::ostream& out) {
  if (case_id.empty() && !results.empty()) case_id = results.front().case_id;
  if (case_id.empty()) case_id = "case";
  std::vector<ReconstructionMesh> meshes;
  for (ReconstructionMethod m : c.methods) {
    switch (m) {
      case ReconstructionMethod::ConvexHull:
        meshes.push_back(convex_hull(results));
        break;
      case ReconstructionMethod::GaussianSplatter:
        for (auto& r : gaussian_splatter(results, c.splatter)) meshes.push_back(std::move(r));
        break;
      case ReconstructionMethod::LinearExtrusion:
        for (auto& r : linear_extrusion(results)) meshes.push_back(std::move(r));
        break;
    }
  }
  const ReconstructionExport ex = export_reconstructions(meshes, case_id);
  for (const auto& [name, obj] : ex.obj_files) w.write(rec, "reconstruction/" + name, obj);
  w.write(rec, "reconstruction_summary.json", ex.summary_json);
  for (const auto& m : meshes) {
    out << method_name(m.method) << " " << m.class_label << ": volume "
        << format_fixed(mesh_volume(m.mesh), 3) << " mm^3 from " << m.provenance.size()
        << " ROI(s)\n";
  }
}

inline void write_run_manifest(const PipelineConfig& c, const std::string& command,
                               const std::vector<StageRecord>& stages, Writer& w) {
  using nlohmann::ordered_json;
  ordered_json j;
  j["tool"] = "histo3d";
  j["version"] = kVersion;
  j["command"] = command;
  j["compiler"] = __VERSION__;
  j["eigen"] = std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) +
               "." + std::to_string(EIGEN_MINOR_VERSION);
  j["config"] = config_json(c);
  ordered_json st = ordered_json::array();
  double total = 0.0;
  for (const auto& s : stages) {
    ordered_json files = ordered_json::array();
    for (const auto& [path, hash] : s.files) files.push_back({{"path", path}, {"sha256", hash}});
    st.push_back({{"name", s.name}, {"seconds", s.seconds}, {"files", files}});
    total += s.seconds;
  }
  j["stages"] = st;
  j["total_seconds"] = total;
  StageRecord ignored;
  w.write(ignored, "run_manifest.json", j.dump(1) + "\n");
}

/// Runs `fn` as a named stage, recording its duration and files.
template <typename Fn>
auto timed_stage(std::vector<StageRecord>& stages, const std::string& name, Fn&& fn) {
  stages.push_back({name, 0.0, {}});
  const auto t0 = std::chrono::steady_clock::now();
  if constexpr (std::is_void_v<decltype(fn(stages.back()))>) {
    fn(stages.back());
    stages.back().seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  } else {
    auto r = fn(stages.back());
    stages.back().seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return r;
  }
}

/// Command-line values; unset ones leave the config file's value in place.
struct Overrides {
  std::string config;
  std::string protocol, mesh, reference, case_id, annotations, manifest, registered, output;
  std::vector<double> generic_dims, rotate, mesh_scale;
  std::optional<double> apex_offset, base_offset, mpp, scale, outlier_weight, restart_step,
      radius_factor, min_normal_sigma;
  std::optional<int> target_points, max_iters, restarts, iou_resolution;
  bool lenient = false, flip_y = false, fixed_scale = false;
  std::string per, methods, ids, class_label;
  bool ids_given = false;
};

inline void add_model_options(CLI::App& sub, Overrides& o) {
  sub.add_option("--protocol", o.protocol, "Sectioning protocol JSON");
  sub.add_option("--mesh", o.mesh, "Surface model (OBJ, PLY or STL)");
  sub.add_option("--generic-dims", o.generic_dims, "Generic model width,height,depth in mm")
      ->delimiter(',')
      ->expected(3);
  sub.add_option("--rotate", o.rotate, "Mesh rotation x,y,z in degrees")->delimiter(',')->expected(3);
  sub.add_option("--mesh-scale", o.mesh_scale, "Mesh scale, uniform or x,y,z")
      ->delimiter(',')
      ->expected(1, 3);
  sub.add_option("--apex-offset", o.apex_offset, "Apex offset override in mm");
  sub.add_option("--base-offset", o.base_offset, "Base offset override in mm");
}

inline void add_registration_options(CLI::App& sub, Overrides& o) {
  sub.add_option("--annotations", o.annotations, "Directory of .geojson slide annotations");
  sub.add_option("--manifest", o.manifest, "JSON mapping of annotation files to polygons");
  sub.add_flag("--lenient", o.lenient, "Warn about unmapped files instead of failing");
  sub.add_option("--mpp", o.mpp, "Annotation microns per pixel");
  sub.add_option("--scale", o.scale, "Annotation millimetres per unit");
  sub.add_flag("--flip-y", o.flip_y, "Annotation y axis points down");
  sub.add_option("--target-points", o.target_points, "Upsampling target per outline");
  sub.add_option("--outlier-weight", o.outlier_weight, "CPD uniform outlier weight in [0,1)");
  sub.add_option("--max-iters", o.max_iters, "CPD iteration limit");
  sub.add_option("--restarts", o.restarts, "Number of initial rotations");
  sub.add_option("--restart-step-deg", o.restart_step, "Angle between initial rotations");
  sub.add_option("--iou-resolution", o.iou_resolution, "IoU raster cells along the longer side");
  sub.add_flag("--fixed-scale", o.fixed_scale, "Keep the pre-alignment scale during CPD");
  sub.add_option("--per", o.per, "OBJ export granularity: slide or annotation");
}

inline void add_reconstruction_options(CLI::App& sub, Overrides& o) {
  sub.add_option("--methods", o.methods, "Comma list of convex_hull, gaussian_splatter, linear_extrusion");
  sub.add_option("--radius-factor", o.radius_factor, "Splatter semi-axis per standard deviation");
  sub.add_option("--min-normal-sigma", o.min_normal_sigma,
                 "Splatter normal sigma floor in mm (default half the slab)");
}

inline std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : s) {
    if (ch == ',') {
      if (!cur.empty()) out.push_back(cur);
      cur.clear();
    } else if (ch != ' ') {
      cur += ch;
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

inline PipelineConfig merge(const Overrides& o) {
  PipelineConfig c = o.config.empty() ? PipelineConfig{} : load_config(o.config);
  if (!o.protocol.empty()) c.protocol = o.protocol;
  if (!o.mesh.empty()) {
    c.mesh = o.mesh;
    c.generic_dims.reset();
  }
  if (!o.generic_dims.empty()) {
    c.generic_dims = std::array<double, 3>{o.generic_dims[0], o.generic_dims[1], o.generic_dims[2]};
    if (o.mesh.empty()) c.mesh.clear();
  }
  if (!o.rotate.empty()) c.rotate_deg = {o.rotate[0], o.rotate[1], o.rotate[2]};
  if (o.mesh_scale.size() == 1) c.mesh_scale = {o.mesh_scale[0], o.mesh_scale[0], o.mesh_scale[0]};
  if (o.mesh_scale.size() == 3) c.mesh_scale = {o.mesh_scale[0], o.mesh_scale[1], o.mesh_scale[2]};
  if (o.apex_offset) c.apex_offset_mm = o.apex_offset;
  if (o.base_offset) c.base_offset_mm = o.base_offset;
  if (!o.reference.empty()) c.reference = o.reference;
  if (!o.case_id.empty()) c.case_id = o.case_id;
  if (!o.annotations.empty()) c.annotations = o.annotations;
  if (!o.manifest.empty()) c.manifest = o.manifest;
  if (o.lenient) c.strict = false;
  if (o.mpp && o.scale) throw ConfigError("give either --mpp or --scale, not both");
  if (o.mpp) c.ingest.scale = detail::mpp_to_scale(*o.mpp);
  if (o.scale) c.ingest.scale = *o.scale;
  if (o.flip_y) c.ingest.flip_y = true;
  if (o.target_points) c.cpd.target_points = *o.target_points;
  if (o.outlier_weight) c.cpd.outlier_weight = *o.outlier_weight;
  if (o.max_iters) c.cpd.max_iterations = *o.max_iters;
  if (o.restarts) c.cpd.rotation_restarts = *o.restarts;
  if (o.restart_step) c.cpd.restart_step_deg = *o.restart_step;
  if (o.iou_resolution) c.cpd.iou_resolution = *o.iou_resolution;
  if (o.fixed_scale) c.cpd.estimate_scale = false;
  if (!o.per.empty()) c.per = parse_granularity(o.per);
  if (!o.registered.empty()) c.registered = o.registered;
  if (!o.methods.empty()) {
    c.methods.clear();
    for (const auto& m : split_list(o.methods)) c.methods.push_back(parse_method(m));
  }
  if (o.radius_factor) c.splatter.radius_factor = *o.radius_factor;
  if (o.min_normal_sigma) c.splatter.min_normal_sigma_mm = o.min_normal_sigma;
  if (o.ids_given) c.mark_ids = split_list(o.ids);
  if (!o.class_label.empty()) c.mark_class = o.class_label;
  if (!o.output.empty()) c.output = o.output;
  c.cpd.validate();
  c.splatter.validate();
  return c;
}

inline int cmd_protocol(const std::string& action, const std::string& input,
                        const std::string& output, std::ostream& out) {
  const SectioningProtocol p = parse_protocol(read_file(input));
  if (action == "validate") {
    const auto ids = fragment_ids(p);
    std::size_t apex = 0, base = 0, central = 0;
    for (const auto& e : ids) {
      (e.region.kind == RegionKind::Apex ? apex : e.region.kind == RegionKind::Base ? base : central)++;
    }
    out << input << ": valid protocol for case " << p.case_id << ", " << ids.size()
        << " fragments (apex " << apex << ", central " << central << " in " << p.central_count
        << " slices, base " << base << ")\n";
  } else {
    const std::string canonical = serialize_protocol(p);
    if (output.empty()) {
      out << canonical;
    } else {
      write_file(output, canonical);
    }
  }
  return 0;
}

/// Entry point shared by the binary and the tests. `args` excludes argv[0].
inline int run_cli(std::vector<std::string> args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Histology-to-3D reconstruction toolkit", "histo3d"};
  app.set_version_flag("--version", std::string("histo3d ") + kVersion);
  app.require_subcommand(1);
  Overrides o;

  auto* protocol = app.add_subcommand("protocol", "Validate or canonicalize a sectioning protocol");
  std::string action, input, proto_out;
  protocol->add_option("action", action, "validate or convert")
      ->required()
      ->check(CLI::IsMember({"validate", "convert"}));
  protocol->add_option("input", input, "Protocol JSON")->required();
  protocol->add_option("-o,--output", proto_out, "Write the canonical form here (convert)");

  auto* slice = app.add_subcommand("slice", "Build the reference model");
  slice->add_option("--config", o.config, "Pipeline config JSON");
  add_model_options(*slice, o);
  slice->add_option("--out", o.output, "Output directory");

  auto* reg = app.add_subcommand("register", "Register slide annotations onto the reference model");
  reg->add_option("--config", o.config, "Pipeline config JSON");
  reg->add_option("--reference", o.reference, "Reference model JSON (otherwise sliced in memory)");
  reg->add_option("--case-id", o.case_id, "Case identifier");
  add_model_options(*reg, o);
  add_registration_options(*reg, o);
  reg->add_option("--out", o.output, "Output directory");

  auto* rec = app.add_subcommand("reconstruct", "Build 3D meshes from registered annotations");
  rec->add_option("--config", o.config, "Pipeline config JSON");
  rec->add_option("--registered", o.registered, "Registered results JSON");
  rec->add_option("--case-id", o.case_id, "Case identifier for output names");
  add_reconstruction_options(*rec, o);
  rec->add_option("--out", o.output, "Output directory");

  auto* mark = app.add_subcommand("mark-slides", "Use whole reference polygons as annotations");
  mark->add_option("--config", o.config, "Pipeline config JSON");
  mark->add_option("--reference", o.reference, "Reference model JSON (otherwise sliced in memory)");
  mark->add_option("--case-id", o.case_id, "Case identifier");
  add_model_options(*mark, o);
  mark->add_option("--ids", o.ids, "Comma list of fragment ids");
  mark->add_option("--class", o.class_label, "Class label of the marked slides");
  mark->add_option("--per", o.per, "OBJ export granularity: slide or annotation");
  mark->add_option("--out", o.output, "Output directory");

  auto* pipe = app.add_subcommand("pipeline", "Slice, register (or mark) and reconstruct");
  pipe->add_option("--config", o.config, "Pipeline config JSON");
  add_model_options(*pipe, o);
  add_registration_options(*pipe, o);
  add_reconstruction_options(*pipe, o);
  pipe->add_option("--out", o.output, "Output directory");

  std::reverse(args.begin(), args.end());
  try {
    app.parse(args);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e, out, err);
    return rc == 0 ? 0 : 2;
  }
  o.ids_given = mark->count("--ids") > 0;

  try {
    if (protocol->parsed()) return cmd_protocol(action, input, proto_out, out);

    const PipelineConfig c = merge(o);
    Writer w(c.output);
    std::vector<StageRecord> stages;
    std::string command;
    if (slice->parsed()) {
      command = "slice";
      timed_stage(stages, "slice", [&](StageRecord& r) { return stage_slice(c, w, r, out); });
    } else if (reg->parsed()) {
      command = "register";
      const ReferenceModel model = obtain_model(c);
      timed_stage(stages, "register",
                  [&](StageRecord& r) { return stage_register(c, model, w, r, out, err); });
    } else if (rec->parsed()) {
      command = "reconstruct";
      if (c.registered.empty()) throw IoError("no registered results given (--registered)");
      const auto results = parse_registered(read_file(c.registered.string()));
      timed_stage(stages, "reconstruct", [&](StageRecord& r) {
        stage_reconstruct(c, results, c.case_id, w, r, out);
      });
    } else if (mark->parsed()) {
      command = "mark-slides";
      const ReferenceModel model = obtain_model(c);
      timed_stage(stages, "mark-slides",
                  [&](StageRecord& r) { return stage_mark(c, model, w, r, out); });
    } else {
      command = "pipeline";
      const ReferenceModel model =
          timed_stage(stages, "slice", [&](StageRecord& r) { return stage_slice(c, w, r, out); });
      const auto results =
          c.mark_ids
              ? timed_stage(stages, "mark-slides",
                            [&](StageRecord& r) { return stage_mark(c, model, w, r, out); })
              : timed_stage(stages, "register", [&](StageRecord& r) {
                  return stage_register(c, model, w, r, out, err);
                });
      timed_stage(stages, "reconstruct", [&](StageRecord& r) {
        stage_reconstruct(c, results, model.case_id, w, r, out);
      });
    }
    write_run_manifest(c, command, stages, w);
    return 0;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return e.exit_code();
  }
}

}  // namespace histo3d::cli
