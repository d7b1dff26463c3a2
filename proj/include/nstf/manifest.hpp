// nstf/manifest.hpp

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Line-oriented utterance manifests. Each line is one flat JSON object:
//
//   {"utt_id": "u1", "audio_filepath": "a/u1.wav", "duration": 3.45,
//    "lang": "ZH", "text": "...", "greedy_text": "...",
//    "corrected_text": "...", "hypo_mer": 0.0, "kept": true, "source": "ASL-2"}
//
// Writers emit the known keys in the order above, then any unknown keys in
// the order they were read.

#pragma once

#include <cmath>
#include <cstddef>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "nstf/error.hpp"

namespace nstf {

enum class Lang { ZH, EN, CS };

inline const char* to_string(Lang lang) {
  switch (lang) {
    case Lang::ZH: return "ZH";
    case Lang::EN: return "EN";
    case Lang::CS: return "CS";
  }
  return "?";
}

inline std::optional<Lang> parse_lang(std::string_view s) {
  if (s == "ZH" || s == "zh") return Lang::ZH;
  if (s == "EN" || s == "en") return Lang::EN;
  if (s == "CS" || s == "cs") return Lang::CS;
  return std::nullopt;
}

struct ManifestEntry {
  std::string utt_id;
  std::string audio_ref;
  double duration_s = 0.0;
  Lang lang = Lang::ZH;
  std::optional<std::string> ref_text;
  std::optional<std::string> greedy_text;
  std::optional<std::string> corrected_text;
  std::optional<double> hypo_mer;
  std::optional<bool> kept;
  std::optional<std::string> source;
  // Keys this library does not know about, preserved for round trips.
  nlohmann::ordered_json extra = nlohmann::ordered_json::object();

  bool operator==(const ManifestEntry&) const = default;
};

struct Manifest {
  std::string name;
  std::vector<ManifestEntry> entries;

  bool operator==(const Manifest&) const = default;
};

namespace manifest_detail {

inline const std::vector<std::string_view>& known_keys() {
  static const std::vector<std::string_view> keys = {
      "utt_id", "audio_filepath", "duration", "lang", "text", "greedy_text",
      "corrected_text", "hypo_mer", "kept", "source"};
  return keys;
}

inline bool is_known(std::string_view key) {
  for (auto k : known_keys())
    if (k == key) return true;
  return false;
}

inline std::optional<std::string> opt_string(const nlohmann::ordered_json& obj,
                                             const char* key) {
  auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) return std::nullopt;
  if (!it->is_string()) throw std::runtime_error(std::string("field '") + key + "' must be a string");
  return it->get<std::string>();
}

}  // namespace manifest_detail

/// Checks the per-entry invariants. Throws ValidationError.
inline void validate_entry(const ManifestEntry& e) {
  if (e.utt_id.empty()) throw ValidationError("entry with empty utt_id");
  if (!std::isfinite(e.duration_s) || e.duration_s < 0.0)
    throw ValidationError("utterance " + e.utt_id + ": duration must be finite and >= 0, got " +
                          std::to_string(e.duration_s));
  if (e.kept && !e.hypo_mer)
    throw ValidationError("utterance " + e.utt_id + ": 'kept' present without 'hypo_mer'");
  if (e.hypo_mer) {
    if (!e.greedy_text || !e.corrected_text)
      throw ValidationError("utterance " + e.utt_id +
                            ": 'hypo_mer' present without both greedy_text and corrected_text");
    if (!std::isfinite(*e.hypo_mer) || *e.hypo_mer < 0.0)
      throw ValidationError("utterance " + e.utt_id + ": hypo_mer must be finite and >= 0");
  }
}

/// Validates every entry and utt_id uniqueness.
inline void validate(const Manifest& m) {
  std::unordered_map<std::string_view, std::size_t> seen;
  for (std::size_t i = 0; i < m.entries.size(); ++i) {
    const auto& e = m.entries[i];
    validate_entry(e);
    if (!seen.emplace(e.utt_id, i).second)
      throw ValidationError("duplicate utt_id '" + e.utt_id + "' in manifest " + m.name);
  }
}

inline nlohmann::ordered_json entry_to_json(const ManifestEntry& e) {
  nlohmann::ordered_json j = nlohmann::ordered_json::object();
  j["utt_id"] = e.utt_id;
  j["audio_filepath"] = e.audio_ref;
  j["duration"] = e.duration_s;
  j["lang"] = to_string(e.lang);
  if (e.ref_text) j["text"] = *e.ref_text;
  if (e.greedy_text) j["greedy_text"] = *e.greedy_text;
  if (e.corrected_text) j["corrected_text"] = *e.corrected_text;
  if (e.hypo_mer) j["hypo_mer"] = *e.hypo_mer;
  if (e.kept) j["kept"] = *e.kept;
  if (e.source) j["source"] = *e.source;
  for (const auto& [k, v] : e.extra.items())
    if (!manifest_detail::is_known(k)) j[k] = v;
  return j;
}

/// Parses one record. Throws std::exception subclasses on bad shape; callers
/// attach the line number.
inline ManifestEntry entry_from_json(const nlohmann::ordered_json& j) {
  using manifest_detail::opt_string;
  if (!j.is_object()) throw std::runtime_error("record is not an object");
  ManifestEntry e;

  auto id = opt_string(j, "utt_id");
  if (!id) throw std::runtime_error("missing 'utt_id'");
  e.utt_id = *id;
  e.audio_ref = opt_string(j, "audio_filepath").value_or("");

  auto dur = j.find("duration");
  if (dur == j.end() || !dur->is_number())
    throw std::runtime_error("utterance " + e.utt_id + ": missing or non-numeric 'duration'");
  e.duration_s = dur->get<double>();

  auto lang_str = opt_string(j, "lang");
  if (!lang_str) throw std::runtime_error("utterance " + e.utt_id + ": missing 'lang'");
  auto lang = parse_lang(*lang_str);
  if (!lang) throw std::runtime_error("utterance " + e.utt_id + ": unknown lang '" + *lang_str + "'");
  e.lang = *lang;

  e.ref_text = opt_string(j, "text");
  e.greedy_text = opt_string(j, "greedy_text");
  e.corrected_text = opt_string(j, "corrected_text");
  if (auto it = j.find("hypo_mer"); it != j.end() && !it->is_null()) {
    if (!it->is_number()) throw std::runtime_error("utterance " + e.utt_id + ": non-numeric 'hypo_mer'");
    e.hypo_mer = it->get<double>();
  }
  if (auto it = j.find("kept"); it != j.end() && !it->is_null()) {
    if (!it->is_boolean()) throw std::runtime_error("utterance " + e.utt_id + ": non-boolean 'kept'");
    e.kept = it->get<bool>();
  }
  e.source = opt_string(j, "source");

  for (const auto& [k, v] : j.items())
    if (!manifest_detail::is_known(k)) e.extra[k] = v;
  return e;
}

inline std::string serialize_entry(const ManifestEntry& e) {
  return entry_to_json(e).dump(-1, ' ', false, nlohmann::ordered_json::error_handler_t::replace);
}

/// Reads a manifest file. Blank lines are skipped; line numbers in errors
/// are 1-based physical lines.
inline Manifest read_manifest(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open manifest " + path);

  Manifest m;
  m.name = path;
  std::unordered_map<std::string, std::size_t> seen;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;

    ManifestEntry e;
    try {
      e = entry_from_json(nlohmann::ordered_json::parse(line));
      validate_entry(e);
    } catch (const std::exception& ex) {
      throw ManifestError(path + ":" + std::to_string(lineno) + ": " + ex.what(), lineno);
    }
    auto [it, inserted] = seen.emplace(e.utt_id, lineno);
    if (!inserted)
      throw ManifestError(path + ":" + std::to_string(lineno) + ": duplicate utt_id '" + e.utt_id +
                              "' (first seen on line " + std::to_string(it->second) + ")",
                          lineno);
    if (e.duration_s == 0.0) NSTF_WARN << path << ":" << lineno << ": utterance " << e.utt_id << " has zero duration";
    m.entries.push_back(std::move(e));
  }
  if (in.bad()) throw IoError("error reading manifest " + path);
  return m;
}

/// Validates, then writes one record per line ('\n' terminated).
inline void write_manifest(const Manifest& m, const std::string& path) {
  validate(m);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path + " for writing");
  for (const auto& e : m.entries) out << serialize_entry(e) << '\n';
  out.flush();
  if (!out) throw IoError("error writing manifest " + path);
}

/// Plain left-to-right sum of durations, in seconds.
template <class Range>
double total_duration(const Range& entries) {
  double total = 0.0;
  for (const ManifestEntry& e : entries) total += e.duration_s;
  return total;
}

/// Buckets by language; all three buckets are always present.
inline std::map<Lang, std::vector<ManifestEntry>> partition_by_lang(const Manifest& m) {
  std::map<Lang, std::vector<ManifestEntry>> out{{Lang::ZH, {}}, {Lang::EN, {}}, {Lang::CS, {}}};
  for (const auto& e : m.entries) out[e.lang].push_back(e);
  return out;
}

}  // namespace nstf
