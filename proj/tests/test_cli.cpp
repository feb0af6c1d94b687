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

#include <filesystem>
#include <sstream>

#include <gtest/gtest.h>

#include "commands.hpp"
#include "support/fixtures.hpp"

namespace histo3d {
namespace {

namespace fs = std::filesystem;

struct CliRun {
  int code;
  std::string out, err;
};

CliRun run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli::run_cli(std::move(args), out, err);
  return {code, out.str(), err.str()};
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    dir_ = fs::temp_directory_path() / (std::string("histo3d_cli_") + info->name());
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string path(const std::string& name) const { return (dir_ / name).string(); }
  std::string write(const std::string& name, const std::string& text) const {
    write_file(path(name), text);
    return path(name);
  }
  static std::size_t count_files(const fs::path& d, const std::string& ext) {
    std::size_t n = 0;
    for (const auto& e : fs::directory_iterator(d)) n += e.path().extension() == ext;
    return n;
  }

  fs::path dir_;
  const std::string protocol_ = testing::sample_path("figure2_protocol.json");
};

TEST_F(Cli, HelpVersionAndUsageErrors) {
  EXPECT_EQ(run({"--help"}).code, 0);
  const CliRun v = run({"--version"});
  EXPECT_EQ(v.code, 0);
  EXPECT_NE(v.out.find(kVersion), std::string::npos);
  EXPECT_EQ(run({}).code, 2);
  EXPECT_EQ(run({"slice", "--no-such-flag"}).code, 2);
  EXPECT_EQ(run({"protocol", "lint", protocol_}).code, 2);
}

TEST_F(Cli, ProtocolValidateAndConvert) {
  const CliRun v = run({"protocol", "validate", protocol_});
  EXPECT_EQ(v.code, 0) << v.err;
  EXPECT_NE(v.out.find("case S01, 30 fragments"), std::string::npos) << v.out;

  ASSERT_EQ(run({"protocol", "convert", protocol_, "-o", path("a.json")}).code, 0);
  ASSERT_EQ(run({"protocol", "convert", path("a.json"), "-o", path("b.json")}).code, 0);
  EXPECT_EQ(read_file(path("a.json")), read_file(path("b.json")));
  const CliRun stdout_copy = run({"protocol", "convert", path("a.json")});
  EXPECT_EQ(stdout_copy.out, read_file(path("a.json")));
}

TEST_F(Cli, ProtocolErrorExitCodes) {
  testing::ProtocolShape dup;
  auto j = nlohmann::json::parse(testing::protocol_text(dup));
  j["central"][0]["ids"] = {"3L", "3L"};
  const CliRun d = run({"protocol", "validate", write("dup.json", j.dump())});
  EXPECT_EQ(d.code, 2) << d.out;
  EXPECT_NE(d.err.find("error:"), std::string::npos);
  EXPECT_EQ(run({"protocol", "validate", path("missing.json")}).code, 1);
  EXPECT_EQ(run({"protocol", "validate", write("bad.json", "{\"case_id\": ")}).code, 1);
  EXPECT_EQ(run({"protocol", "validate", write("schema.json", "{\"case_id\": 4}")}).code, 1);
}

TEST_F(Cli, SliceGenericModel) {
  const CliRun s = run({"slice", "--protocol", protocol_, "--generic-dims", "40,30,35", "--out", path("o")});
  ASSERT_EQ(s.code, 0) << s.err;
  EXPECT_NE(s.out.find("30"), std::string::npos);
  EXPECT_EQ(count_files(path("o/reference"), ".obj"), 30u);
  const ReferenceModel m = parse_reference_model(read_file(path("o/reference_model.json")), "S01");
  EXPECT_EQ(m.polygons.size(), 30u);
  EXPECT_TRUE(fs::exists(path("o/run_manifest.json")));

  const CliRun r = run({"slice", "--protocol", protocol_, "--generic-dims", "40,30,35", "--rotate",
                     "0,0,90", "--out", path("r")});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(count_files(path("r/reference"), ".obj"), 30u);
}

TEST_F(Cli, SliceNeedsExactlyOneModel) {
  EXPECT_EQ(run({"slice", "--protocol", protocol_, "--out", path("o")}).code, 2);
  write_file(path("cube.obj"), testing::kCubeObj);
  EXPECT_EQ(run({"slice", "--protocol", protocol_, "--mesh", path("cube.obj"), "--generic-dims",
                 "40,30,35", "--out", path("o")})
                .code,
            2);
  EXPECT_EQ(run({"slice", "--protocol", protocol_, "--mesh", path("nope.obj"), "--out", path("o")}).code, 1);
}

TEST_F(Cli, RegisterEmptyDirectory) {
  fs::create_directories(path("ann"));
  const std::vector<std::string> base{"register", "--protocol", protocol_, "--generic-dims",
                                      "40,30,35", "--annotations", path("ann"), "--out", path("o")};
  EXPECT_EQ(run(base).code, 2);
  auto lenient = base;
  lenient.push_back("--lenient");
  const CliRun l = run(lenient);
  ASSERT_EQ(l.code, 0) << l.err;
  EXPECT_NE(l.err.find("warning"), std::string::npos);
  EXPECT_TRUE(parse_registered(read_file(path("o/registered.json"))).empty());
  auto missing = base;
  missing[6] = path("no_such_dir");
  EXPECT_EQ(run(missing).code, 2);
}

TEST_F(Cli, MarkSlidesThenReconstruct) {
  const CliRun e = run({"mark-slides", "--protocol", protocol_, "--generic-dims", "40,30,35", "--ids",
                     "", "--out", path("empty")});
  EXPECT_EQ(e.code, 0) << e.err;
  EXPECT_EQ(run({"mark-slides", "--protocol", protocol_, "--generic-dims", "40,30,35", "--ids",
                 "9Z9", "--out", path("bad")})
                .code,
            2);

  const CliRun m = run({"mark-slides", "--protocol", protocol_, "--generic-dims", "40,30,35",
                     "--ids", "7LV,8LD,1L2", "--class", "Gleason 4", "--out", path("m")});
  ASSERT_EQ(m.code, 0) << m.err;
  EXPECT_EQ(count_files(path("m/registered"), ".obj"), 3u);

  EXPECT_EQ(run({"reconstruct", "--out", path("x")}).code, 1);
  const CliRun r = run({"reconstruct", "--registered", path("m/registered.json"), "--methods",
                     "convex_hull,gaussian_splatter,linear_extrusion", "--out", path("rec")});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(count_files(path("rec/reconstruction"), ".obj"), 3u);
  EXPECT_TRUE(fs::exists(path("rec/reconstruction/S01_linear_extrusion_Gleason_4.obj")));
  EXPECT_EQ(run({"reconstruct", "--registered", path("m/registered.json"), "--methods", "voxels",
                 "--out", path("v")})
                .code,
            2);
}

TEST_F(Cli, ConfigFileAndOverrides) {
  nlohmann::json cfg{{"protocol", protocol_},
                     {"generic_dims", {40, 30, 35}},
                     {"apex_offset_mm", 6.0},
                     {"output", path("from_config")}};
  const std::string good = write("good.json", cfg.dump());
  ASSERT_EQ(run({"slice", "--config", good}).code, 0);
  EXPECT_TRUE(fs::exists(path("from_config/reference_model.json")));

  ASSERT_EQ(run({"slice", "--config", good, "--apex-offset", "8", "--out", path("flag")}).code, 0);
  const auto a = parse_reference_model(read_file(path("from_config/reference_model.json")), "S01");
  const auto b = parse_reference_model(read_file(path("flag/reference_model.json")), "S01");
  EXPECT_NE(a.find("1L1")->frame.origin().x(), b.find("1L1")->frame.origin().x());

  cfg["colour"] = "blue";
  const CliRun u = run({"slice", "--config", write("unknown.json", cfg.dump())});
  EXPECT_EQ(u.code, 1);
  EXPECT_NE(u.err.find("colour"), std::string::npos);
  EXPECT_EQ(run({"slice", "--config", write("broken.json", "{")}).code, 1);
}

TEST_F(Cli, PipelineMissingAnnotations) {
  const CliRun p = run({"pipeline", "--protocol", protocol_, "--generic-dims", "40,30,35",
                     "--annotations", path("nowhere"), "--out", path("o")});
  EXPECT_EQ(p.code, 2);
  EXPECT_NE(p.err.find("nowhere"), std::string::npos);
}

}  // namespace
}  // namespace histo3d
