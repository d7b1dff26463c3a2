// nstf/orchestrator.hpp

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

// The data side of one noisy-student iteration:
//
//   greedy hypotheses (per language)
//     -> LLM correction in batches (retry, drop)
//     -> Hypo-MER filter
//     -> ZH/EN duration balancing
//     -> training manifest + decisions manifest + statistics
//
// Acoustic training and decoding happen elsewhere; this consumes the
// teacher's greedy output and produces the student's pseudo-labels.

#pragma once

#include <atomic>
#include <cstddef>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <unordered_set>
#include <variant>
#include <vector>

#include <json.hpp>

#include "nstf/config.hpp"
#include "nstf/error.hpp"
#include "nstf/filter.hpp"
#include "nstf/llm_correct.hpp"
#include "nstf/manifest.hpp"
#include "nstf/metrics.hpp"

namespace nstf {

struct IterationStats {
  int iteration_index = 1;
  double total_hours = 0.0;          // utterances whose LLM batch succeeded
  double filtered_hours = 0.0;       // kept by the filter, before balancing
  double filtered_ratio = 0.0;       // filtered / total; 0 when total is 0
  double train_hours = 0.0;          // after balancing
  double dropped_batch_hours = 0.0;  // lost to BatchDropped
  std::optional<double> greedy_err;    // greedy vs text, succeeded utterances
  std::optional<double> filtered_err;  // corrected vs text, kept utterances
  std::size_t n_input = 0;
  std::size_t n_kept = 0;
  std::size_t n_train = 0;
  std::size_t n_dropped_batches = 0;
  ScoreMode metric = ScoreMode::MER;
};

struct IterationResult {
  Manifest train;
  Manifest decisions;
  IterationStats stats;
};

namespace orchestrator_detail {

struct Job {
  Lang lang;
  std::size_t batch;
};

// Runs every batch on `parallelism` worker threads. Each batch's retries
// stay on one thread. The first EndpointAbort (or other exception) stops
// dispatch and is rethrown after all workers join.
inline std::map<Lang, std::vector<BatchResult>> run_batches(
    const std::map<Lang, std::vector<CorrectionBatch>>& batches,
    const std::map<Lang, PromptTemplate>& templates, ChatClient& client, const RetryPolicy& policy,
    std::size_t parallelism) {
  std::vector<Job> jobs;
  std::map<Lang, std::vector<BatchResult>> results;
  for (const auto& [lang, list] : batches) {
    results[lang].resize(list.size());
    for (std::size_t i = 0; i < list.size(); ++i) jobs.push_back({lang, i});
  }

  std::atomic<std::size_t> next{0};
  std::atomic<bool> stop{false};
  std::exception_ptr failure;
  std::mutex failure_mu;

  auto worker = [&] {
    while (!stop) {
      const std::size_t k = next.fetch_add(1);
      if (k >= jobs.size()) return;
      const Job& job = jobs[k];
      try {
        results.at(job.lang)[job.batch] =
            correct_batch(client, templates.at(job.lang), batches.at(job.lang)[job.batch], policy);
      } catch (...) {
        std::lock_guard<std::mutex> lock(failure_mu);
        if (!failure) failure = std::current_exception();
        stop = true;
      }
    }
  };

  const std::size_t n_threads = std::min(parallelism, std::max<std::size_t>(jobs.size(), 1));
  if (n_threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < n_threads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  if (failure) std::rethrow_exception(failure);
  return results;
}

inline void set_status(ManifestEntry& e, const char* status) { e.extra["status"] = status; }

}  // namespace orchestrator_detail

/// Runs correction, filtering and balancing for one iteration.
///
/// Every input entry needs greedy_text and a language listed in
/// config.languages. Balancing is skipped (with a warning) when one of the
/// two languages has no input at all.
inline IterationResult run_iteration(const std::map<Lang, Manifest>& hyp_manifests,
                                     const IterationConfig& config, ChatClient& client) {
  using namespace orchestrator_detail;
  validate(config);

  const std::set<Lang> enabled(config.languages.begin(), config.languages.end());
  std::map<Lang, std::vector<ManifestEntry>> inputs;
  std::unordered_set<std::string> seen;
  for (const auto& [key, m] : hyp_manifests) {
    for (const auto& e : m.entries) {
      validate_entry(e);
      if (e.lang != key)
        throw ValidationError("utterance " + e.utt_id + " has lang " + to_string(e.lang) +
                              " but was supplied in the " + to_string(key) + " manifest");
      if (!enabled.count(e.lang))
        throw ValidationError("utterance " + e.utt_id + ": language " + to_string(e.lang) +
                              " is not enabled");
      if (!e.greedy_text) throw ValidationError("utterance " + e.utt_id + ": missing greedy_text");
      if (!seen.insert(e.utt_id).second) throw ValidationError("duplicate utt_id '" + e.utt_id + "'");
      inputs[e.lang].push_back(e);
    }
  }

  std::map<Lang, std::vector<CorrectionBatch>> batches;
  std::map<Lang, PromptTemplate> templates;
  for (const auto& [lang, entries] : inputs) {
    batches[lang] = make_batches(entries, config.batch_size);
    templates[lang] = template_for(config, lang);
  }

  const auto results = run_batches(batches, templates, client, config.retry, config.parallelism);

  IterationResult out;
  out.train.name = "train";
  out.decisions.name = "decisions";
  IterationStats& st = out.stats;
  st.iteration_index = config.iteration_index;
  st.metric = config.filter.metric_mode;

  double total_s = 0.0, dropped_s = 0.0, filtered_s = 0.0;
  ErrorRate greedy_pool, filtered_pool;
  bool have_greedy_ref = false, have_filtered_ref = false;
  std::map<Lang, std::vector<ManifestEntry>> kept_by_lang;

  for (const auto& [lang, entries] : inputs) {
    const auto& lang_results = results.at(lang);
    std::vector<ManifestEntry> corrected;
    std::size_t pos = 0;
    for (std::size_t b = 0; b < lang_results.size(); ++b) {
      const auto& batch = batches.at(lang)[b];
      if (const auto* texts = std::get_if<std::vector<std::string>>(&lang_results[b])) {
        for (std::size_t k = 0; k < batch.size(); ++k) {
          ManifestEntry e = entries[pos + k];
          e.corrected_text = (*texts)[k];
          corrected.push_back(std::move(e));
        }
      } else {
        const auto& drop = std::get<BatchDropped>(lang_results[b]);
        ++st.n_dropped_batches;
        NSTF_WARN << "dropped " << to_string(lang) << " batch of " << drop.utt_ids.size()
                  << " utterances after " << drop.attempts << " attempts: " << drop.last_error;
        for (std::size_t k = 0; k < batch.size(); ++k) {
          ManifestEntry e = entries[pos + k];
          dropped_s += e.duration_s;
          e.corrected_text.reset();
          e.hypo_mer.reset();
          e.kept.reset();
          set_status(e, "batch_dropped");
          out.decisions.entries.push_back(std::move(e));
        }
      }
      pos += batch.size();
    }
    st.n_input += entries.size();

    FilterResult fr = apply_filter(corrected, config.filter);
    for (const auto& e : corrected) {
      total_s += e.duration_s;
      if (e.ref_text) {
        greedy_pool += error_rate(*e.ref_text, *e.greedy_text, config.filter.metric_mode);
        have_greedy_ref = true;
      }
    }
    for (const auto& e : fr.kept) {
      filtered_s += e.duration_s;
      if (e.ref_text) {
        filtered_pool += error_rate(*e.ref_text, *e.corrected_text, config.filter.metric_mode);
        have_filtered_ref = true;
      }
    }
    st.n_kept += fr.kept.size();

    // decisions for succeeded batches, in input order
    std::size_t ki = 0, di = 0;
    for (const auto& e : corrected) {
      ManifestEntry d;
      if (ki < fr.kept.size() && fr.kept[ki].utt_id == e.utt_id) {
        d = fr.kept[ki++];
        set_status(d, "kept");
      } else {
        d = fr.dropped[di++];
        set_status(d, "filtered");
      }
      out.decisions.entries.push_back(std::move(d));
    }
    kept_by_lang[lang] = std::move(fr.kept);
  }

  // Dropped-batch entries were appended before the scored ones of their
  // language; restore input order.
  std::map<std::string, std::size_t> decision_index;
  {
    std::map<std::string, std::size_t> input_pos;
    std::size_t p = 0;
    for (const auto& [lang, entries] : inputs)
      for (const auto& e : entries) input_pos[e.utt_id] = p++;
    std::stable_sort(out.decisions.entries.begin(), out.decisions.entries.end(),
                     [&](const ManifestEntry& a, const ManifestEntry& b) {
                       return input_pos.at(a.utt_id) < input_pos.at(b.utt_id);
                     });
    for (std::size_t i = 0; i < out.decisions.entries.size(); ++i)
      decision_index[out.decisions.entries[i].utt_id] = i;
  }

  std::vector<ManifestEntry>& zh = kept_by_lang[Lang::ZH];
  std::vector<ManifestEntry>& en = kept_by_lang[Lang::EN];
  std::vector<ManifestEntry> zh_out, en_out;
  if (inputs.count(Lang::ZH) && inputs.count(Lang::EN)) {
    std::tie(zh_out, en_out) = balance_durations(zh, en);
  } else {
    NSTF_WARN << "only one language supplied; skipping ZH/EN duration balancing";
    zh_out = zh;
    en_out = en;
  }

  std::set<std::string> selected;
  for (const auto* side : {&zh_out, &en_out})
    for (const auto& e : *side) selected.insert(e.utt_id);
  for (const auto* side : {&zh, &en})
    for (const auto& e : *side)
      if (!selected.count(e.utt_id))
        set_status(out.decisions.entries[decision_index.at(e.utt_id)], "balanced_out");

  double train_s = 0.0;
  for (const auto* side : {&zh_out, &en_out}) {
    for (const auto& e : *side) {
      if (normalize(*e.corrected_text).empty()) {
        NSTF_WARN << "utterance " << e.utt_id << ": empty pseudo-label, not used for training";
        set_status(out.decisions.entries[decision_index.at(e.utt_id)], "empty_label");
        continue;
      }
      ManifestEntry t = e;
      t.ref_text = *e.corrected_text;
      t.extra.erase("status");
      train_s += t.duration_s;
      out.train.entries.push_back(std::move(t));
    }
  }

  st.n_train = out.train.entries.size();
  st.total_hours = total_s / 3600.0;
  st.filtered_hours = filtered_s / 3600.0;
  st.train_hours = train_s / 3600.0;
  st.dropped_batch_hours = dropped_s / 3600.0;
  st.filtered_ratio = total_s > 0.0 ? filtered_s / total_s : 0.0;
  if (have_greedy_ref) st.greedy_err = greedy_pool.rate;
  if (have_filtered_ref) st.filtered_err = filtered_pool.rate;
  return out;
}

inline nlohmann::ordered_json to_json(const IterationStats& s) {
  nlohmann::ordered_json j;
  j["iteration"] = s.iteration_index;
  j["metric"] = to_string(s.metric);
  j["total_hours"] = s.total_hours;
  j["filtered_hours"] = s.filtered_hours;
  j["filtered_ratio"] = s.filtered_ratio;
  j["train_hours"] = s.train_hours;
  j["dropped_batch_hours"] = s.dropped_batch_hours;
  j["greedy_err"] = s.greedy_err ? nlohmann::ordered_json(*s.greedy_err) : nlohmann::ordered_json();
  j["filtered_err"] = s.filtered_err ? nlohmann::ordered_json(*s.filtered_err) : nlohmann::ordered_json();
  j["n_input"] = s.n_input;
  j["n_kept"] = s.n_kept;
  j["n_train"] = s.n_train;
  j["n_dropped_batches"] = s.n_dropped_batches;
  return j;
}

inline IterationStats stats_from_json(const nlohmann::json& j) {
  IterationStats s;
  try {
    s.iteration_index = j.at("iteration").get<int>();
    if (auto m = parse_score_mode(j.value("metric", std::string("MER")))) s.metric = *m;
    s.total_hours = j.at("total_hours").get<double>();
    s.filtered_hours = j.at("filtered_hours").get<double>();
    s.filtered_ratio = j.value("filtered_ratio", s.total_hours > 0 ? s.filtered_hours / s.total_hours : 0.0);
    s.train_hours = j.value("train_hours", 0.0);
    s.dropped_batch_hours = j.value("dropped_batch_hours", 0.0);
    if (j.contains("greedy_err") && !j["greedy_err"].is_null()) s.greedy_err = j["greedy_err"].get<double>();
    if (j.contains("filtered_err") && !j["filtered_err"].is_null())
      s.filtered_err = j["filtered_err"].get<double>();
    s.n_input = j.value("n_input", std::size_t{0});
    s.n_kept = j.value("n_kept", std::size_t{0});
    s.n_train = j.value("n_train", std::size_t{0});
    s.n_dropped_batches = j.value("n_dropped_batches", std::size_t{0});
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed stats record: ") + e.what());
  }
  return s;
}

/// Fixed-width table, one row per iteration. Hours and ratio to 2 decimals,
/// error rates in percent to 2 decimals ("-" when unavailable).
inline std::string format_report(const std::vector<IterationStats>& rows) {
  const std::string metric = rows.empty() ? "MER" : to_string(rows.front().metric);
  std::ostringstream os;
  os << std::left << std::setw(6) << "Iter" << std::right << std::setw(12) << "Total hours"
     << std::setw(15) << "Filtered hours" << std::setw(15) << "Filtered ratio" << std::setw(13)
     << ("Greedy " + metric) << std::setw(20) << ("LLM Filtered " + metric) << std::setw(13)
     << "Train hours" << std::setw(15) << "Dropped hours" << '\n';
  auto pct = [](const std::optional<double>& v) {
    if (!v) return std::string("-");
    std::ostringstream s;
    s << std::fixed << std::setprecision(2) << 100.0 * *v;
    return s.str();
  };
  os << std::fixed << std::setprecision(2);
  for (const auto& r : rows) {
    os << std::left << std::setw(6) << r.iteration_index << std::right << std::setw(12) << r.total_hours
       << std::setw(15) << r.filtered_hours << std::setw(15) << r.filtered_ratio << std::setw(13)
       << pct(r.greedy_err) << std::setw(20) << pct(r.filtered_err) << std::setw(13) << r.train_hours
       << std::setw(15) << r.dropped_batch_hours << '\n';
  }
  return os.str();
}

inline void write_text_file(const std::filesystem::path& path, const std::string& body) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << body;
  out.flush();
  if (!out) throw IoError("error writing " + path.string());
}

inline std::filesystem::path iteration_dir(const std::filesystem::path& out_root, int iteration) {
  return out_root / ("iter_" + std::to_string(iteration));
}

/// Writes train.manifest, decisions.manifest, stats.txt and stats.json under
/// <out_root>/iter_<N>/. A partially written directory is removed on error.
inline std::filesystem::path write_iteration_outputs(const IterationResult& r,
                                                     const std::filesystem::path& out_root) {
  namespace fs = std::filesystem;
  const fs::path dir = iteration_dir(out_root, r.stats.iteration_index);
  try {
    fs::create_directories(dir);
    write_manifest(r.train, (dir / "train.manifest").string());
    write_manifest(r.decisions, (dir / "decisions.manifest").string());
    write_text_file(dir / "stats.txt", format_report({r.stats}));
    write_text_file(dir / "stats.json", to_json(r.stats).dump(2) + "\n");
  } catch (const fs::filesystem_error& e) {
    std::error_code ec;
    fs::remove_all(dir, ec);
    throw IoError(e.what());
  } catch (...) {
    std::error_code ec;
    fs::remove_all(dir, ec);
    throw;
  }
  return dir;
}

}  // namespace nstf
