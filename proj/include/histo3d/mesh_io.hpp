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
#include <array>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include "histo3d/error.hpp"
#include "histo3d/mesh.hpp"

namespace histo3d {

enum class MeshFormat { Auto, OBJ, PLY, STL };

inline constexpr double kWeldTolerance = 1e-6;  // mm

namespace detail {

inline std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

inline std::vector<std::string_view> split_ws(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && (s[i] == ' ' || s[i] == '\t' || s[i] == '\r')) ++i;
    std::size_t j = i;
    while (j < s.size() && s[j] != ' ' && s[j] != '\t' && s[j] != '\r') ++j;
    if (j > i) out.push_back(s.substr(i, j - i));
    i = j;
  }
  return out;
}

inline bool parse_double(std::string_view tok, double& out) {
  // std::from_chars for double is available in libstdc++ 11.
  const auto res = std::from_chars(tok.data(), tok.data() + tok.size(), out);
  return res.ec == std::errc() && res.ptr == tok.data() + tok.size() && std::isfinite(out);
}

inline bool parse_long(std::string_view tok, long& out) {
  const auto res = std::from_chars(tok.data(), tok.data() + tok.size(), out);
  return res.ec == std::errc() && res.ptr == tok.data() + tok.size();
}

template <typename Fn>
void for_each_line(std::string_view text, Fn&& fn) {
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto end = text.find('\n', pos);
    const auto line =
        text.substr(pos, end == std::string_view::npos ? std::string_view::npos : end - pos);
    ++line_no;
    fn(line_no, line);
    if (end == std::string_view::npos) break;
    pos = end + 1;
  }
}

inline TriMesh load_obj(std::string_view text) {
  TriMesh m;
  for_each_line(text, [&](std::size_t line_no, std::string_view raw) {
    const auto line = trim(raw.substr(0, raw.find('#')));
    if (line.empty()) return;
    const auto tok = split_ws(line);
    const auto fail = [line_no](const std::string& why) {
      throw FormatError("OBJ line " + std::to_string(line_no) + ": " + why);
    };
    if (tok[0] == "v") {
      if (tok.size() < 4) fail("vertex needs 3 coordinates");
      Vec3 p;
      for (int k = 0; k < 3; ++k) {
        if (!parse_double(tok[k + 1], p[k])) fail("bad coordinate '" + std::string(tok[k + 1]) + "'");
      }
      m.vertices.push_back(p);
    } else if (tok[0] == "f") {
      if (tok.size() < 4) fail("face needs at least 3 vertices");
      std::vector<std::uint32_t> idx;
      for (std::size_t k = 1; k < tok.size(); ++k) {
        const auto ref = tok[k].substr(0, tok[k].find('/'));
        long v = 0;
        if (!parse_long(ref, v) || v == 0) fail("bad vertex reference '" + std::string(tok[k]) + "'");
        const long count = static_cast<long>(m.vertices.size());
        const long resolved = v > 0 ? v - 1 : count + v;
        if (resolved < 0 || resolved >= count) fail("vertex index out of range");
        idx.push_back(static_cast<std::uint32_t>(resolved));
      }
      for (std::size_t k = 1; k + 1 < idx.size(); ++k) {
        m.triangles.push_back({idx[0], idx[k], idx[k + 1]});
      }
    }
    // vn, vt, g, o, s, usemtl, mtllib, l: ignored.
  });
  return m;
}

inline TriMesh load_ply(std::string_view text) {
  std::vector<std::string_view> lines;
  for_each_line(text, [&](std::size_t, std::string_view l) { lines.push_back(l); });
  if (lines.empty() || trim(lines[0]) != "ply") throw FormatError("PLY: missing magic");

  struct Element {
    std::string name;
    std::size_t count = 0;
    std::vector<std::string> props;  // "list" properties recorded as "list:<name>"
  };
  std::vector<Element> elements;
  std::size_t i = 1;
  bool ascii = false;
  for (; i < lines.size(); ++i) {
    const auto tok = split_ws(trim(lines[i]));
    if (tok.empty()) continue;
    const auto fail = [i](const std::string& why) {
      throw FormatError("PLY line " + std::to_string(i + 1) + ": " + why);
    };
    if (tok[0] == "end_header") {
      ++i;
      break;
    }
    if (tok[0] == "format") {
      if (tok.size() < 2 || tok[1] != "ascii") fail("only ASCII PLY is supported");
      ascii = true;
    } else if (tok[0] == "element") {
      long count = 0;
      if (tok.size() != 3 || !parse_long(tok[2], count) || count < 0) fail("bad element line");
      elements.push_back({std::string(tok[1]), static_cast<std::size_t>(count), {}});
    } else if (tok[0] == "property") {
      if (elements.empty()) fail("property before element");
      if (tok.size() >= 5 && tok[1] == "list") {
        elements.back().props.push_back("list:" + std::string(tok[4]));
      } else if (tok.size() == 3) {
        elements.back().props.emplace_back(tok[2]);
      } else {
        fail("bad property line");
      }
    }
  }
  if (!ascii) throw FormatError("PLY: missing 'format ascii 1.0'");

  TriMesh m;
  for (const Element& el : elements) {
    int xi = -1, yi = -1, zi = -1, list_i = -1;
    for (std::size_t k = 0; k < el.props.size(); ++k) {
      if (el.props[k] == "x") xi = static_cast<int>(k);
      if (el.props[k] == "y") yi = static_cast<int>(k);
      if (el.props[k] == "z") zi = static_cast<int>(k);
      if (el.props[k] == "list:vertex_indices" || el.props[k] == "list:vertex_index") {
        list_i = static_cast<int>(k);
      }
    }
    for (std::size_t r = 0; r < el.count; ++r, ++i) {
      if (i >= lines.size()) throw FormatError("PLY: unexpected end of data in " + el.name);
      const auto tok = split_ws(trim(lines[i]));
      const auto fail = [i](const std::string& why) {
        throw FormatError("PLY line " + std::to_string(i + 1) + ": " + why);
      };
      if (el.name == "vertex") {
        if (xi < 0 || yi < 0 || zi < 0) fail("vertex element lacks x/y/z");
        if (tok.size() < el.props.size()) fail("too few vertex values");
        Vec3 p;
        if (!parse_double(tok[xi], p.x()) || !parse_double(tok[yi], p.y()) ||
            !parse_double(tok[zi], p.z())) {
          fail("bad vertex coordinate");
        }
        m.vertices.push_back(p);
      } else if (el.name == "face") {
        if (list_i < 0) fail("face element lacks vertex_indices");
        // Scalar properties before the list occupy one token each.
        std::size_t at = static_cast<std::size_t>(list_i);
        long n = 0;
        if (at >= tok.size() || !parse_long(tok[at], n) || n < 3) fail("bad face vertex count");
        if (tok.size() < at + 1 + static_cast<std::size_t>(n)) fail("truncated face");
        std::vector<std::uint32_t> idx;
        for (long k = 0; k < n; ++k) {
          long v = 0;
          if (!parse_long(tok[at + 1 + k], v) || v < 0) fail("bad face index");
          idx.push_back(static_cast<std::uint32_t>(v));
        }
        for (std::size_t k = 1; k + 1 < idx.size(); ++k) {
          m.triangles.push_back({idx[0], idx[k], idx[k + 1]});
        }
      }
    }
  }
  return m;
}

/// Merges vertices closer than `tol`, via a hash grid of cell size `tol`.
inline TriMesh weld(const std::vector<Vec3>& corners, double tol) {
  using Key = std::tuple<long long, long long, long long>;
  std::map<Key, std::vector<std::uint32_t>> grid;
  TriMesh m;
  std::vector<std::uint32_t> remap(corners.size());
  for (std::size_t i = 0; i < corners.size(); ++i) {
    const Vec3& p = corners[i];
    const Key k{std::llround(std::floor(p.x() / tol)), std::llround(std::floor(p.y() / tol)),
                std::llround(std::floor(p.z() / tol))};
    std::int64_t found = -1;
    for (long long dx = -1; dx <= 1 && found < 0; ++dx) {
      for (long long dy = -1; dy <= 1 && found < 0; ++dy) {
        for (long long dz = -1; dz <= 1 && found < 0; ++dz) {
          const auto it = grid.find({std::get<0>(k) + dx, std::get<1>(k) + dy, std::get<2>(k) + dz});
          if (it == grid.end()) continue;
          for (auto idx : it->second) {
            if ((m.vertices[idx] - p).norm() <= tol) {
              found = idx;
              break;
            }
          }
        }
      }
    }
    if (found < 0) {
      found = static_cast<std::int64_t>(m.vertices.size());
      m.vertices.push_back(p);
      grid[k].push_back(static_cast<std::uint32_t>(found));
    }
    remap[i] = static_cast<std::uint32_t>(found);
  }
  for (std::size_t i = 0; i + 2 < corners.size(); i += 3) {
    m.triangles.push_back({remap[i], remap[i + 1], remap[i + 2]});
  }
  return m;
}

inline bool looks_like_binary_stl(std::string_view bytes) {
  if (bytes.size() < 84) return false;
  std::uint32_t n = 0;
  std::memcpy(&n, bytes.data() + 80, 4);
  return bytes.size() == 84 + 50ull * n;
}

inline TriMesh load_stl(std::string_view bytes) {
  std::vector<Vec3> corners;
  if (looks_like_binary_stl(bytes)) {
    std::uint32_t n = 0;
    std::memcpy(&n, bytes.data() + 80, 4);
    for (std::uint32_t t = 0; t < n; ++t) {
      const char* rec = bytes.data() + 84 + 50ull * t;
      for (int c = 0; c < 3; ++c) {
        float xyz[3];
        std::memcpy(xyz, rec + 12 + 12 * c, 12);
        corners.emplace_back(xyz[0], xyz[1], xyz[2]);
      }
    }
  } else {
    if (trim(bytes).substr(0, 5) != "solid") throw FormatError("STL: neither binary nor ASCII");
    int in_loop = -1;
    for_each_line(bytes, [&](std::size_t line_no, std::string_view raw) {
      const auto tok = split_ws(trim(raw));
      if (tok.empty()) return;
      const auto fail = [line_no](const std::string& why) {
        throw FormatError("STL line " + std::to_string(line_no) + ": " + why);
      };
      if (tok[0] == "outer") {
        in_loop = 0;
      } else if (tok[0] == "vertex") {
        if (in_loop < 0 || tok.size() != 4) fail("malformed vertex");
        Vec3 p;
        for (int k = 0; k < 3; ++k) {
          if (!parse_double(tok[k + 1], p[k])) fail("bad coordinate");
        }
        corners.push_back(p);
        ++in_loop;
      } else if (tok[0] == "endloop") {
        if (in_loop != 3) fail("facet loop must have exactly 3 vertices");
        in_loop = -1;
      }
    });
    if (in_loop >= 0) throw FormatError("STL: unterminated facet loop");
  }
  return weld(corners, kWeldTolerance);
}

inline MeshFormat sniff_format(std::string_view bytes) {
  const auto head = trim(bytes.substr(0, 256));
  if (looks_like_binary_stl(bytes)) return MeshFormat::STL;
  if (head.substr(0, 3) == "ply") return MeshFormat::PLY;
  if (head.substr(0, 5) == "solid") return MeshFormat::STL;
  return MeshFormat::OBJ;
}

inline char* format_g9(char* buf, std::size_t size, double v) {
  if (v == 0.0) v = 0.0;  // no "-0"
  std::snprintf(buf, size, "%.9g", v);
  return buf;
}

}  // namespace detail

/// Parses OBJ (ASCII), PLY (ASCII) or STL (ASCII or binary). Polygonal faces
/// are fan-triangulated, STL corners welded, zero-area triangles dropped.
inline TriMesh load_mesh(std::string_view bytes, MeshFormat hint = MeshFormat::Auto) {
  const MeshFormat fmt = hint == MeshFormat::Auto ? detail::sniff_format(bytes) : hint;
  TriMesh m;
  switch (fmt) {
    case MeshFormat::OBJ: m = detail::load_obj(bytes); break;
    case MeshFormat::PLY: m = detail::load_ply(bytes); break;
    case MeshFormat::STL: m = detail::load_stl(bytes); break;
    case MeshFormat::Auto: break;
  }
  if (m.triangles.empty()) throw EmptyMeshError("mesh file contains no triangles");
  return sanitize(std::move(m));
}

inline MeshFormat format_from_extension(const std::string& path) {
  auto dot = path.rfind('.');
  std::string ext = dot == std::string::npos ? "" : path.substr(dot + 1);
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  if (ext == "obj") return MeshFormat::OBJ;
  if (ext == "ply") return MeshFormat::PLY;
  if (ext == "stl") return MeshFormat::STL;
  return MeshFormat::Auto;
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::string& path, std::string_view contents) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path + "'");
  out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
  if (!out) throw IoError("failed writing '" + path + "'");
}

inline TriMesh load_mesh_file(const std::string& path) {
  return load_mesh(read_file(path), format_from_extension(path));
}

/// `v`/`f` records, 1-based, 9 significant digits.
inline std::string write_obj(const TriMesh& m) {
  std::string out;
  out.reserve(m.vertices.size() * 40 + m.triangles.size() * 24);
  char a[32], b[32], c[32];
  char line[128];
  for (const Vec3& v : m.vertices) {
    std::snprintf(line, sizeof line, "v %s %s %s\n", detail::format_g9(a, sizeof a, v.x()),
                  detail::format_g9(b, sizeof b, v.y()), detail::format_g9(c, sizeof c, v.z()));
    out += line;
  }
  for (const Triangle& t : m.triangles) {
    std::snprintf(line, sizeof line, "f %u %u %u\n", t[0] + 1, t[1] + 1, t[2] + 1);
    out += line;
  }
  return out;
}

/// Closed polylines as `v` + `l` records; each loop's last point connects
/// back to its first.
inline std::string write_obj_polylines(const std::vector<std::vector<Vec3>>& loops) {
  std::string out;
  char a[32], b[32], c[32];
  char line[128];
  for (const auto& loop : loops) {
    for (const Vec3& v : loop) {
      std::snprintf(line, sizeof line, "v %s %s %s\n", detail::format_g9(a, sizeof a, v.x()),
                    detail::format_g9(b, sizeof b, v.y()), detail::format_g9(c, sizeof c, v.z()));
      out += line;
    }
  }
  std::size_t base = 1;
  for (const auto& loop : loops) {
    const std::size_t n = loop.size();
    for (std::size_t i = 0; i < n; ++i) {
      std::snprintf(line, sizeof line, "l %zu %zu\n", base + i, base + (i + 1) % n);
      out += line;
    }
    base += n;
  }
  return out;
}

/// Binary STL with an 80-byte blank header and zero normals.
inline std::string write_stl_binary(const TriMesh& m) {
  std::string out(84 + 50 * m.triangles.size(), '\0');
  const auto n = static_cast<std::uint32_t>(m.triangles.size());
  std::memcpy(out.data() + 80, &n, 4);
  for (std::size_t t = 0; t < m.triangles.size(); ++t) {
    char* rec = out.data() + 84 + 50 * t;
    for (int c = 0; c < 3; ++c) {
      const Vec3& v = m.vertices[m.triangles[t][c]];
      const float xyz[3] = {static_cast<float>(v.x()), static_cast<float>(v.y()),
                            static_cast<float>(v.z())};
      std::memcpy(rec + 12 + 12 * c, xyz, 12);
    }
  }
  return out;
}

}  // namespace histo3d
