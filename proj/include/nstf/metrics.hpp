// nstf/metrics.hpp

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

// CER / WER / MER scoring on top of the Levenshtein alignment, and the
// correction-quality summary used to judge how much an LLM pass helps over
// greedy decoding.

#pragma once

#include <cstddef>
#include <iomanip>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "nstf/align.hpp"
#include "nstf/error.hpp"
#include "nstf/manifest.hpp"
#include "nstf/textnorm.hpp"

namespace nstf {

enum class ScoreMode { CER, WER, MER };

inline const char* to_string(ScoreMode m) {
  switch (m) {
    case ScoreMode::CER: return "CER";
    case ScoreMode::WER: return "WER";
    case ScoreMode::MER: return "MER";
  }
  return "?";
}

inline std::optional<ScoreMode> parse_score_mode(std::string_view s) {
  if (s == "CER" || s == "cer") return ScoreMode::CER;
  if (s == "WER" || s == "wer") return ScoreMode::WER;
  if (s == "MER" || s == "mer") return ScoreMode::MER;
  return std::nullopt;
}

inline TokenSequence tokenize(std::string_view text, ScoreMode mode) {
  switch (mode) {
    case ScoreMode::CER: return tokenize_chars(text);
    case ScoreMode::WER: return tokenize_words(text);
    case ScoreMode::MER: return tokenize_mixed(text);
  }
  return {};
}

struct ErrorRate {
  std::size_t errors = 0;
  std::size_t ref_len = 0;
  double rate = 0.0;

  // Empty reference: 0 if the hypothesis is empty too, otherwise 1.0.
  // Rates above 1.0 are not clipped.
  static double rate_of(std::size_t errors, std::size_t ref_len) {
    if (ref_len > 0) return static_cast<double>(errors) / static_cast<double>(ref_len);
    return errors > 0 ? 1.0 : 0.0;
  }

  /// Pools counts (corpus-level rate).
  ErrorRate& operator+=(const ErrorRate& other) {
    errors += other.errors;
    ref_len += other.ref_len;
    rate = rate_of(errors, ref_len);
    return *this;
  }
};

inline ErrorRate error_rate_from(const Alignment& a) {
  ErrorRate r;
  r.errors = a.errors();
  r.ref_len = a.ref_len();
  r.rate = ErrorRate::rate_of(r.errors, r.ref_len);
  return r;
}

/// Normalizes both texts, tokenizes per mode and scores hyp against ref.
inline ErrorRate error_rate(std::string_view ref_text, std::string_view hyp_text, ScoreMode mode) {
  const TokenSequence ref = tokenize(ref_text, mode);
  const TokenSequence hyp = tokenize(hyp_text, mode);
  return error_rate_from(align(ref, hyp));
}

struct CorrectionQualityReport {
  std::size_t n_utts = 0;
  double frac_greedy_exact = 0.0;
  double frac_llm_exact = 0.0;
  double frac_not_worse = 0.0;
  double frac_more_accurate = 0.0;
};

/// Greedy vs corrected accuracy summary. All four fractions use n_utts as denominator.
/// Requires ref_text, greedy_text and corrected_text on every entry.
inline CorrectionQualityReport correction_quality(const std::vector<ManifestEntry>& entries,
                                                  ScoreMode mode) {
  if (entries.empty()) throw ValidationError("correction_quality: no utterances to score");
  std::size_t greedy_exact = 0, llm_exact = 0, not_worse = 0, better = 0;
  for (const auto& e : entries) {
    if (!e.ref_text || !e.greedy_text || !e.corrected_text)
      throw ValidationError("utterance " + e.utt_id +
                            ": correction_quality needs text, greedy_text and corrected_text");
    const double g = error_rate(*e.ref_text, *e.greedy_text, mode).rate;
    const double c = error_rate(*e.ref_text, *e.corrected_text, mode).rate;
    greedy_exact += g == 0.0;
    llm_exact += c == 0.0;
    not_worse += c <= g;
    better += c < g;
  }
  const auto n = static_cast<double>(entries.size());
  return {entries.size(), greedy_exact / n, llm_exact / n, not_worse / n, better / n};
}

inline nlohmann::ordered_json to_json(const CorrectionQualityReport& r) {
  nlohmann::ordered_json j;
  j["n_utts"] = r.n_utts;
  j["frac_greedy_exact"] = r.frac_greedy_exact;
  j["frac_llm_exact"] = r.frac_llm_exact;
  j["frac_not_worse"] = r.frac_not_worse;
  j["frac_more_accurate"] = r.frac_more_accurate;
  return j;
}

inline std::string format_report(const CorrectionQualityReport& r, ScoreMode mode) {
  const char* m = to_string(mode);
  std::ostringstream os;
  os << "# fractions are over all " << r.n_utts << " scored utterances\n";
  os << std::left << std::setw(8) << "# Utts" << "  " << std::setw(16)
     << (std::string("Greedy ") + m + "=0(%)") << "  " << std::setw(13)
     << (std::string("LLM ") + m + "=0(%)") << "  " << std::setw(14) << "Not worse(%)"
     << "  " << "More accurate(%)\n";
  os << std::fixed << std::setprecision(1);
  os << std::setw(8) << r.n_utts << "  " << std::setw(16) << 100.0 * r.frac_greedy_exact << "  "
     << std::setw(13) << 100.0 * r.frac_llm_exact << "  " << std::setw(14)
     << 100.0 * r.frac_not_worse << "  " << 100.0 * r.frac_more_accurate << '\n';
  return os.str();
}

}  // namespace nstf
