// nstf/filter.hpp

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

// Pseudo-label selection. An utterance is kept when its greedy hypothesis
// and the LLM-corrected hypothesis differ by at most `threshold` (Hypo-MER).

#pragma once

#include <algorithm>
#include <cstddef>
#include <numeric>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "nstf/error.hpp"
#include "nstf/manifest.hpp"
#include "nstf/metrics.hpp"

namespace nstf {

/// Which text is the reference when scoring greedy against corrected.
enum class HypoReference { Corrected, Greedy };

inline std::optional<HypoReference> parse_hypo_reference(std::string_view s) {
  if (s == "corrected") return HypoReference::Corrected;
  if (s == "greedy") return HypoReference::Greedy;
  return std::nullopt;
}

struct FilterConfig {
  double threshold = 0.1;
  ScoreMode metric_mode = ScoreMode::MER;
  HypoReference reference = HypoReference::Corrected;
};

struct FilterDecision {
  std::string utt_id;
  double hypo_mer = 0.0;
  bool kept = false;
};

inline double hypo_mer(std::string_view greedy_text, std::string_view corrected_text, ScoreMode mode,
                       HypoReference reference = HypoReference::Corrected) {
  return reference == HypoReference::Corrected ? error_rate(corrected_text, greedy_text, mode).rate
                                               : error_rate(greedy_text, corrected_text, mode).rate;
}

struct FilterResult {
  std::vector<ManifestEntry> kept;
  std::vector<ManifestEntry> dropped;
  std::vector<FilterDecision> decisions;
};

/// Scores every entry and splits into kept (hypo_mer <= threshold) and
/// dropped, preserving order. Outputs carry hypo_mer and kept fields; kept
/// entries train on corrected_text.
inline FilterResult apply_filter(const std::vector<ManifestEntry>& entries, const FilterConfig& cfg) {
  if (!(cfg.threshold >= 0.0)) throw ValidationError("filter threshold must be >= 0");
  FilterResult out;
  out.decisions.reserve(entries.size());
  for (const auto& e : entries) {
    if (!e.greedy_text || !e.corrected_text)
      throw ValidationError("utterance " + e.utt_id + ": filtering needs greedy_text and corrected_text");
    const double score = hypo_mer(*e.greedy_text, *e.corrected_text, cfg.metric_mode, cfg.reference);
    const bool keep = score <= cfg.threshold;
    out.decisions.push_back({e.utt_id, score, keep});
    ManifestEntry scored = e;
    scored.hypo_mer = score;
    scored.kept = keep;
    (keep ? out.kept : out.dropped).push_back(std::move(scored));
  }
  return out;
}

namespace filter_detail {

// Keeps the lowest-hypo_mer entries (ties by utt_id) while their running
// duration stays within budget; stops at the first entry that would
// overflow. Result is in input order.
inline std::vector<ManifestEntry> trim_to(const std::vector<ManifestEntry>& entries, double budget) {
  std::vector<std::size_t> order(entries.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const double ma = entries[a].hypo_mer.value_or(0.0);
    const double mb = entries[b].hypo_mer.value_or(0.0);
    if (ma != mb) return ma < mb;
    return entries[a].utt_id < entries[b].utt_id;
  });
  std::vector<bool> take(entries.size(), false);
  double acc = 0.0;
  for (std::size_t idx : order) {
    if (acc + entries[idx].duration_s > budget) break;
    acc += entries[idx].duration_s;
    take[idx] = true;
  }
  std::vector<ManifestEntry> out;
  for (std::size_t i = 0; i < entries.size(); ++i)
    if (take[i]) out.push_back(entries[i]);
  return out;
}

}  // namespace filter_detail

/// Equalizes ZH and EN pseudo-label hours by trimming the larger side down
/// to the smaller side's total. The smaller side passes through unchanged.
inline std::pair<std::vector<ManifestEntry>, std::vector<ManifestEntry>> balance_durations(
    const std::vector<ManifestEntry>& zh, const std::vector<ManifestEntry>& en) {
  const double zh_total = total_duration(zh);
  const double en_total = total_duration(en);
  if (zh_total > en_total) return {filter_detail::trim_to(zh, en_total), en};
  if (en_total > zh_total) return {zh, filter_detail::trim_to(en, zh_total)};
  return {zh, en};
}

}  // namespace nstf
