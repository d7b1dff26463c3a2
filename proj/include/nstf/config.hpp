// nstf/config.hpp

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

// Iteration configuration and its JSON form. Keys may be nested
// ({"endpoint": {"url": ...}}) or dotted ({"endpoint.url": ...}).
//
//   iteration      NST iteration index (>= 1)           default 1
//   batch_size     hypotheses per LLM request           default 40
//   max_attempts   requests per batch before dropping   default 3
//   threshold      Hypo-MER keep threshold              default 0.1
//   metric         CER | WER | MER                      default MER
//   hypo_reference corrected | greedy                   default corrected
//   parallelism    concurrent LLM batches               default 1
//   seed           RNG seed                             default 0
//   languages      list of ZH / EN                      default [ZH, EN]
//   endpoint.url, endpoint.model, endpoint.timeout_s, endpoint.api_key_env
//   prompts.ZH, prompts.EN   optional prompt files overriding the built-ins

#pragma once

#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "nstf/error.hpp"
#include "nstf/filter.hpp"
#include "nstf/http_client.hpp"
#include "nstf/llm_correct.hpp"
#include "nstf/manifest.hpp"

namespace nstf {

struct IterationConfig {
  int iteration_index = 1;
  std::size_t batch_size = 40;
  RetryPolicy retry;
  FilterConfig filter;
  std::vector<Lang> languages = {Lang::ZH, Lang::EN};
  std::size_t parallelism = 1;
  std::uint64_t rng_seed = 0;
  EndpointConfig endpoint;
  std::map<Lang, std::string> prompt_files;
};

inline void validate(const IterationConfig& c) {
  if (c.iteration_index < 1) throw ValidationError("iteration must be >= 1");
  if (c.batch_size < 1) throw ValidationError("batch_size must be >= 1");
  if (c.retry.max_attempts < 1) throw ValidationError("max_attempts must be >= 1");
  if (!(c.filter.threshold >= 0.0)) throw ValidationError("threshold must be >= 0");
  if (c.parallelism < 1) throw ValidationError("parallelism must be >= 1");
  for (Lang l : c.languages)
    if (l == Lang::CS) throw ValidationError("languages may only contain ZH and EN");
}

namespace config_detail {

// Looks up "a.b" as j["a"]["b"] or j["a.b"].
inline const nlohmann::json* find(const nlohmann::json& j, const std::string& dotted) {
  if (auto it = j.find(dotted); it != j.end()) return &*it;
  const auto dot = dotted.find('.');
  if (dot == std::string::npos) return nullptr;
  auto sec = j.find(dotted.substr(0, dot));
  if (sec == j.end() || !sec->is_object()) return nullptr;
  auto it = sec->find(dotted.substr(dot + 1));
  return it == sec->end() ? nullptr : &*it;
}

template <class T>
std::optional<T> get(const nlohmann::json& j, const std::string& key) {
  const nlohmann::json* v = find(j, key);
  if (!v || v->is_null()) return std::nullopt;
  try {
    if constexpr (std::is_unsigned_v<T>) {
      if (!v->is_number_integer() || v->get<long long>() < 0)
        throw ValidationError("config key '" + key + "' must be a non-negative integer");
    } else if constexpr (std::is_integral_v<T> && !std::is_same_v<T, bool>) {
      if (!v->is_number_integer()) throw ValidationError("config key '" + key + "' must be an integer");
    }
    return v->get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ValidationError("config key '" + key + "' has the wrong type");
  }
}

inline const std::vector<std::string>& known_top_level() {
  static const std::vector<std::string> keys = {
      "iteration", "batch_size", "max_attempts", "threshold", "metric", "hypo_reference",
      "parallelism", "seed", "languages", "endpoint", "prompts", "sim"};
  return keys;
}

}  // namespace config_detail

/// Builds a config from a JSON document; absent keys keep their defaults
/// (each default taken for a missing key is logged).
inline IterationConfig iteration_config_from_json(const nlohmann::json& j) {
  using config_detail::get;
  if (!j.is_object()) throw ValidationError("config must be a JSON object");
  for (const auto& [k, v] : j.items()) {
    const auto dot = k.find('.');
    const std::string head = k.substr(0, dot);
    bool known = false;
    for (const auto& kk : config_detail::known_top_level()) known = known || kk == head;
    if (!known) NSTF_WARN << "ignoring unknown config key '" << k << "'";
  }

  IterationConfig c;
  auto note_default = [](const char* key, const auto& value) {
    NSTF_LOG << "config: '" << key << "' not set, using default " << value;
  };

  if (auto v = get<int>(j, "iteration")) c.iteration_index = *v;
  if (auto v = get<std::size_t>(j, "batch_size")) c.batch_size = *v;
  else note_default("batch_size", c.batch_size);
  if (auto v = get<int>(j, "max_attempts")) c.retry.max_attempts = *v;
  else note_default("max_attempts", c.retry.max_attempts);
  if (auto v = get<double>(j, "threshold")) c.filter.threshold = *v;
  else note_default("threshold", c.filter.threshold);
  if (auto v = get<std::string>(j, "metric")) {
    auto m = parse_score_mode(*v);
    if (!m) throw ValidationError("unknown metric '" + *v + "' (expected CER, WER or MER)");
    c.filter.metric_mode = *m;
  } else {
    note_default("metric", to_string(c.filter.metric_mode));
  }
  if (auto v = get<std::string>(j, "hypo_reference")) {
    auto r = parse_hypo_reference(*v);
    if (!r) throw ValidationError("unknown hypo_reference '" + *v + "' (expected corrected or greedy)");
    c.filter.reference = *r;
  }
  if (auto v = get<std::size_t>(j, "parallelism")) c.parallelism = *v;
  if (auto v = get<std::uint64_t>(j, "seed")) c.rng_seed = *v;
  if (auto v = get<std::vector<std::string>>(j, "languages")) {
    c.languages.clear();
    for (const auto& s : *v) {
      auto l = parse_lang(s);
      if (!l) throw ValidationError("unknown language '" + s + "'");
      c.languages.push_back(*l);
    }
  }
  if (auto v = get<std::string>(j, "endpoint.url")) c.endpoint.url = *v;
  if (auto v = get<std::string>(j, "endpoint.model")) c.endpoint.model = *v;
  if (auto v = get<double>(j, "endpoint.timeout_s")) c.endpoint.timeout_s = *v;
  if (auto v = get<std::string>(j, "endpoint.api_key_env")) c.endpoint.api_key_env = *v;
  if (auto v = get<std::string>(j, "prompts.ZH")) c.prompt_files[Lang::ZH] = *v;
  if (auto v = get<std::string>(j, "prompts.EN")) c.prompt_files[Lang::EN] = *v;

  validate(c);
  return c;
}

inline nlohmann::json read_json_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  nlohmann::json j = nlohmann::json::parse(in, nullptr, false, /*ignore_comments=*/true);
  if (j.is_discarded()) throw ValidationError(path + ": not valid JSON");
  return j;
}

inline IterationConfig load_iteration_config(const std::string& path) {
  return iteration_config_from_json(read_json_file(path));
}

inline PromptTemplate template_for(const IterationConfig& c, Lang lang) {
  if (auto it = c.prompt_files.find(lang); it != c.prompt_files.end())
    return load_template(it->second, lang);
  return default_template(lang);
}

}  // namespace nstf
