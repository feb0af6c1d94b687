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
#include <map>
#include <optional>
#include <regex>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "histo3d/error.hpp"

/// Machine-readable sectioning protocol: how the specimen was cut into apex,
/// base and central (transverse) fragments, and which block id each carries.
///
/// File layout:
///
///     {
///       "case_id": "S01",
///       "apex": {"offset_mm": 8, "split_frontal": false,
///                "sections": {"L": {"count": 3, "ids": ["1L1", "1L2", "1L3"]},
///                             "R": {"count": 3, "ids": ["2R1", "2R2", "2R3"]}}},
///       "base": { ...same as apex... },
///       "central_count": 2,
///       "central": [{"index": 1, "split_frontal": false, "ids": ["3L", "3R"]},
///                   {"index": 2, "split_frontal": true,
///                    "ids": ["4LV", "4LD", "4RV", "4RD"]}]
///     }
///
/// Fragment ids follow `<block><L|R>[<V|D>][<seq>]`. Apex and base fragments
/// carry a 1-based sagittal sequence number; central fragments do not.
namespace histo3d {

enum class Side { Left, Right };
enum class Frontal { Ventral, Dorsal };

struct FragmentId {
  std::string block;
  Side side = Side::Left;
  std::optional<Frontal> frontal;
  std::optional<int> seq;

  /// Compartment code: "L", "R", "LV", "LD", "RV" or "RD".
  std::string compartment() const {
    std::string c = side == Side::Left ? "L" : "R";
    if (frontal) c += *frontal == Frontal::Ventral ? "V" : "D";
    return c;
  }

  std::string str() const {
    std::string s = block + compartment();
    if (seq) s += std::to_string(*seq);
    return s;
  }

  bool operator==(const FragmentId&) const = default;

  /// Throws ValidationError (with `path`) when `text` is not a canonical id.
  static FragmentId parse(std::string_view text, const std::string& path = "") {
    static const std::regex grammar("^([A-Za-z0-9]+)([LR])([VD]?)([0-9]*)$");
    std::match_results<std::string_view::const_iterator> m;
    if (!std::regex_match(text.begin(), text.end(), m, grammar)) {
      throw ValidationError(path, "fragment id '" + std::string(text) +
                                      "' does not match <block><L|R>[<V|D>][<seq>]");
    }
    FragmentId id;
    id.block = m[1].str();
    id.side = m[2].str() == "L" ? Side::Left : Side::Right;
    if (m[3].length() > 0) id.frontal = m[3].str() == "V" ? Frontal::Ventral : Frontal::Dorsal;
    if (m[4].length() > 0) {
      const std::string digits = m[4].str();
      if (digits[0] == '0' || digits.size() > 9) {
        throw ValidationError(path, "fragment id '" + std::string(text) +
                                        "' has a non-canonical sequence number");
      }
      id.seq = std::stoi(digits);
    }
    return id;
  }
};

struct Compartment {
  int count = 0;
  std::vector<FragmentId> ids;

  bool operator==(const Compartment&) const = default;
};

struct ApexBaseSpec {
  double offset_mm = 0.0;
  bool split_frontal = false;
  /// Keyed by compartment code.
  std::map<std::string, Compartment> sections;

  bool operator==(const ApexBaseSpec&) const = default;
};

struct CentralSliceSpec {
  int index = 0;
  bool split_frontal = false;
  std::vector<FragmentId> ids;

  bool operator==(const CentralSliceSpec&) const = default;
};

struct SectioningProtocol {
  std::string case_id;
  ApexBaseSpec apex;
  ApexBaseSpec base;
  int central_count = 0;
  std::vector<CentralSliceSpec> central;

  bool operator==(const SectioningProtocol&) const = default;
};

enum class RegionKind { Apex, Base, Central };

struct Region {
  RegionKind kind = RegionKind::Central;
  int slice_index = 0;  // 1-based for Central, 0 otherwise

  bool operator==(const Region&) const = default;

  std::string name() const {
    switch (kind) {
      case RegionKind::Apex: return "apex";
      case RegionKind::Base: return "base";
      case RegionKind::Central: return "central";
    }
    return {};
  }
};

struct FragmentEntry {
  FragmentId id;
  Region region;
};

inline const std::vector<std::string>& compartment_codes(bool split_frontal) {
  static const std::vector<std::string> sides{"L", "R"};
  static const std::vector<std::string> quadrants{"LV", "LD", "RV", "RD"};
  return split_frontal ? quadrants : sides;
}

namespace detail {

using nlohmann::json;

inline std::string join(const std::string& path, const std::string& key) {
  return path.empty() ? key : path + "." + key;
}

inline void expect_keys(const json& obj, const std::string& path,
                        std::initializer_list<const char*> keys) {
  if (!obj.is_object()) throw SchemaError(path, "expected an object");
  std::set<std::string> allowed(keys.begin(), keys.end());
  for (const auto& [k, v] : obj.items()) {
    if (!allowed.contains(k)) throw SchemaError(join(path, k), "unknown key");
  }
  for (const char* k : keys) {
    if (!obj.contains(k)) throw SchemaError(join(path, k), "missing key");
  }
}

inline int get_int(const json& j, const std::string& path) {
  if (!j.is_number_integer()) throw SchemaError(path, "expected an integer");
  return j.get<int>();
}

inline bool get_bool(const json& j, const std::string& path) {
  if (!j.is_boolean()) throw SchemaError(path, "expected a boolean");
  return j.get<bool>();
}

inline std::vector<std::string> get_string_list(const json& j, const std::string& path) {
  if (!j.is_array()) throw SchemaError(path, "expected an array of strings");
  std::vector<std::string> out;
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_string()) {
      throw SchemaError(path + "[" + std::to_string(i) + "]", "expected a string");
    }
    out.push_back(j[i].get<std::string>());
  }
  return out;
}

inline ApexBaseSpec parse_apex_base(const json& j, const std::string& path) {
  expect_keys(j, path, {"offset_mm", "split_frontal", "sections"});
  ApexBaseSpec spec;
  if (!j["offset_mm"].is_number()) throw SchemaError(join(path, "offset_mm"), "expected a number");
  spec.offset_mm = j["offset_mm"].get<double>();
  if (!(spec.offset_mm > 0.0)) throw ValidationError(join(path, "offset_mm"), "must be positive");
  spec.split_frontal = get_bool(j["split_frontal"], join(path, "split_frontal"));

  const std::string spath = join(path, "sections");
  const json& sections = j["sections"];
  if (!sections.is_object()) throw SchemaError(spath, "expected an object");
  const auto& codes = compartment_codes(spec.split_frontal);
  for (const auto& [key, value] : sections.items()) {
    if (std::find(codes.begin(), codes.end(), key) == codes.end()) {
      throw ValidationError(join(spath, key), spec.split_frontal
                                                  ? "expected LV/LD/RV/RD when split_frontal"
                                                  : "expected L/R when not split_frontal");
    }
  }
  for (const std::string& code : codes) {
    const std::string cpath = join(spath, code);
    if (!sections.contains(code)) throw ValidationError(cpath, "missing compartment");
    const json& c = sections[code];
    expect_keys(c, cpath, {"count", "ids"});
    Compartment comp;
    comp.count = get_int(c["count"], join(cpath, "count"));
    if (comp.count < 1) throw ValidationError(join(cpath, "count"), "must be positive");
    const auto texts = get_string_list(c["ids"], join(cpath, "ids"));
    if (static_cast<int>(texts.size()) != comp.count) {
      throw ValidationError(join(cpath, "ids"), "has " + std::to_string(texts.size()) +
                                                    " ids but count is " +
                                                    std::to_string(comp.count));
    }
    std::set<std::string> seen;
    for (std::size_t i = 0; i < texts.size(); ++i) {
      const std::string ipath = join(cpath, "ids") + "[" + std::to_string(i) + "]";
      FragmentId id = FragmentId::parse(texts[i], ipath);
      if (!seen.insert(texts[i]).second) {
        throw ValidationError(ipath, "duplicate fragment id '" + texts[i] + "'");
      }
      if (id.compartment() != code) {
        throw ValidationError(ipath, "id '" + texts[i] + "' is not in compartment " + code);
      }
      if (!id.seq || *id.seq != static_cast<int>(i) + 1) {
        throw ValidationError(ipath, "id '" + texts[i] + "' must have sequence number " +
                                         std::to_string(i + 1));
      }
      comp.ids.push_back(std::move(id));
    }
    spec.sections.emplace(code, std::move(comp));
  }
  return spec;
}

inline CentralSliceSpec parse_central(const json& j, const std::string& path) {
  expect_keys(j, path, {"index", "split_frontal", "ids"});
  CentralSliceSpec s;
  s.index = get_int(j["index"], join(path, "index"));
  s.split_frontal = get_bool(j["split_frontal"], join(path, "split_frontal"));
  const auto texts = get_string_list(j["ids"], join(path, "ids"));
  const auto& codes = compartment_codes(s.split_frontal);
  if (texts.size() != codes.size()) {
    throw ValidationError(join(path, "ids"), "expected " + std::to_string(codes.size()) +
                                                 " ids, got " + std::to_string(texts.size()));
  }
  std::set<std::string> seen;
  for (std::size_t i = 0; i < texts.size(); ++i) {
    const std::string ipath = join(path, "ids") + "[" + std::to_string(i) + "]";
    FragmentId id = FragmentId::parse(texts[i], ipath);
    if (id.seq) throw ValidationError(ipath, "central fragment ids carry no sequence number");
    const std::string code = id.compartment();
    if (std::find(codes.begin(), codes.end(), code) == codes.end()) {
      throw ValidationError(ipath, "compartment " + code + " not allowed here");
    }
    if (!seen.insert(code).second) throw ValidationError(ipath, "compartment " + code + " repeated");
    s.ids.push_back(std::move(id));
  }
  return s;
}

inline json apex_base_to_json(const ApexBaseSpec& s) {
  json sections = json::object();
  for (const auto& [code, comp] : s.sections) {
    json ids = json::array();
    for (const auto& id : comp.ids) ids.push_back(id.str());
    sections[code] = {{"count", comp.count}, {"ids", ids}};
  }
  return {{"offset_mm", s.offset_mm}, {"split_frontal", s.split_frontal}, {"sections", sections}};
}

inline void append_apex_base(std::vector<FragmentEntry>& out, const ApexBaseSpec& s,
                             RegionKind kind) {
  static const std::vector<std::string> order{"L", "LV", "LD", "R", "RV", "RD"};
  for (const std::string& code : order) {
    auto it = s.sections.find(code);
    if (it == s.sections.end()) continue;
    for (const auto& id : it->second.ids) out.push_back({id, {kind, 0}});
  }
}

}  // namespace detail

/// Apex compartments, then central slices by index, then base. Within a
/// central slice fragments follow LV, LD, RV, RD (or L, R).
inline std::vector<FragmentEntry> fragment_ids(const SectioningProtocol& p) {
  std::vector<FragmentEntry> out;
  detail::append_apex_base(out, p.apex, RegionKind::Apex);
  for (const auto& slice : p.central) {
    for (const std::string& code : compartment_codes(slice.split_frontal)) {
      for (const auto& id : slice.ids) {
        if (id.compartment() == code) out.push_back({id, {RegionKind::Central, slice.index}});
      }
    }
  }
  detail::append_apex_base(out, p.base, RegionKind::Base);
  return out;
}

inline SectioningProtocol parse_protocol(std::string_view text) {
  using nlohmann::json;
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw SyntaxError("", std::string("malformed JSON: ") + e.what());
  }
  detail::expect_keys(j, "", {"case_id", "apex", "base", "central_count", "central"});
  SectioningProtocol p;
  if (!j["case_id"].is_string()) throw SchemaError("case_id", "expected a string");
  p.case_id = j["case_id"].get<std::string>();
  if (p.case_id.empty()) throw ValidationError("case_id", "must not be empty");
  p.apex = detail::parse_apex_base(j["apex"], "apex");
  p.base = detail::parse_apex_base(j["base"], "base");
  p.central_count = detail::get_int(j["central_count"], "central_count");
  if (p.central_count < 1) throw ValidationError("central_count", "must be positive");
  if (!j["central"].is_array()) throw SchemaError("central", "expected an array");
  if (static_cast<int>(j["central"].size()) != p.central_count) {
    throw ValidationError("central", "has " + std::to_string(j["central"].size()) +
                                         " slices but central_count is " +
                                         std::to_string(p.central_count));
  }
  for (std::size_t i = 0; i < j["central"].size(); ++i) {
    const std::string path = "central[" + std::to_string(i) + "]";
    auto slice = detail::parse_central(j["central"][i], path);
    if (slice.index != static_cast<int>(i) + 1) {
      throw ValidationError(path + ".index", "expected index " + std::to_string(i + 1));
    }
    p.central.push_back(std::move(slice));
  }

  // Global uniqueness, reported at the second occurrence.
  std::map<std::string, std::string> seen;
  const auto check = [&](const FragmentId& id, const std::string& path) {
    const auto [it, inserted] = seen.emplace(id.str(), path);
    if (!inserted) {
      throw ValidationError(path, "duplicate fragment id '" + id.str() + "' (first at " +
                                      it->second + ")");
    }
  };
  for (const auto* spec : {&p.apex, &p.base}) {
    const std::string region = spec == &p.apex ? "apex" : "base";
    for (const auto& [code, comp] : spec->sections) {
      for (std::size_t i = 0; i < comp.ids.size(); ++i) {
        check(comp.ids[i], region + ".sections." + code + ".ids[" + std::to_string(i) + "]");
      }
    }
  }
  for (std::size_t s = 0; s < p.central.size(); ++s) {
    for (std::size_t i = 0; i < p.central[s].ids.size(); ++i) {
      check(p.central[s].ids[i],
            "central[" + std::to_string(s) + "].ids[" + std::to_string(i) + "]");
    }
  }
  return p;
}

/// Canonical form: sorted keys, two-space indent, trailing newline.
inline std::string serialize_protocol(const SectioningProtocol& p) {
  using nlohmann::json;
  json central = json::array();
  for (const auto& s : p.central) {
    json ids = json::array();
    for (const auto& id : s.ids) ids.push_back(id.str());
    central.push_back({{"index", s.index}, {"split_frontal", s.split_frontal}, {"ids", ids}});
  }
  json j = {{"case_id", p.case_id},
            {"apex", detail::apex_base_to_json(p.apex)},
            {"base", detail::apex_base_to_json(p.base)},
            {"central_count", p.central_count},
            {"central", central}};
  return j.dump(2) + "\n";
}

}  // namespace histo3d
