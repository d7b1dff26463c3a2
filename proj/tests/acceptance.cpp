// tests/acceptance.cpp

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

// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// non-zero if any fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "edit_distance_oracle.hpp"
#include "nstf/cli.hpp"

namespace {

namespace fs = std::filesystem;
using namespace nstf;

const std::string kRoot = NSTF_SOURCE_DIR;

struct Check {
  bool ok = true;
  std::string detail;
  void expect(bool cond, const std::string& what) {
    if (!cond && ok) detail = what;
    ok = ok && cond;
  }
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

bool same_distance(const std::vector<int>& a, const std::vector<int>& b) {
  const Alignment al = align(a, b);
  const int want = oracle::edit_distance(a, b);
  return static_cast<int>(al.errors()) == want && al.ref_len() == a.size() && al.hyp_len() == b.size();
}

// 1. align agrees with the recursive oracle.
Check oracle_equivalence() {
  Check c;
  const auto t0 = std::chrono::steady_clock::now();
  std::vector<std::vector<std::vector<int>>> by_len;
  for (std::size_t n = 0; n <= 8; ++n) by_len.push_back(oracle::all_strings(4, n));

  std::size_t pairs = 0;
  // every pair whose lengths sum to at most 8
  for (std::size_t la = 0; la <= 8; ++la)
    for (std::size_t lb = 0; la + lb <= 8; ++lb)
      for (const auto& a : by_len[la])
        for (const auto& b : by_len[lb]) {
          ++pairs;
          if (!same_distance(a, b)) c.expect(false, "mismatch on exhaustive pair");
        }
  // every pair with both lengths at most 5
  for (std::size_t la = 0; la <= 5; ++la)
    for (std::size_t lb = 0; lb <= 5; ++lb) {
      if (la + lb <= 8) continue;
      for (const auto& a : by_len[la])
        for (const auto& b : by_len[lb]) {
          ++pairs;
          if (!same_distance(a, b)) c.expect(false, "mismatch on exhaustive pair");
        }
    }
  // uniform sample of pairs with both lengths at most 8
  std::mt19937_64 rng(20240917);
  std::uniform_int_distribution<int> sym(0, 3), len8(0, 8), len12(0, 12);
  auto random_string = [&](int n) {
    std::vector<int> s(static_cast<std::size_t>(n));
    for (int& x : s) x = sym(rng);
    return s;
  };
  for (int i = 0; i < 200000; ++i, ++pairs)
    if (!same_distance(random_string(len8(rng)), random_string(len8(rng))))
      c.expect(false, "mismatch on sampled pair");
  for (int i = 0; i < 1000; ++i, ++pairs)
    if (!same_distance(random_string(len12(rng)), random_string(len12(rng))))
      c.expect(false, "mismatch on random pair up to 12");
  const double secs = seconds_since(t0);
  c.expect(secs < 10.0, "took " + std::to_string(secs) + " s");
  if (c.ok) c.detail = std::to_string(pairs) + " pairs in " + std::to_string(secs).substr(0, 4) + " s";
  return c;
}

// 2. Hand-aligned fixture rates.
Check fixture_scoring() {
  Check c;
  c.expect(error_rate("nice to meet you", "nice to meat you", ScoreMode::WER).rate == 0.25, "WER meet/meat");
  const auto r = error_rate("rocket blasts delay", "rocket blas delay", ScoreMode::WER);
  c.expect(r.errors == 1 && r.ref_len == 3 && r.rate == 1.0 / 3.0, "WER blasts/blas");
  const auto m = error_rate("打开 google 地图", "打开 googel 地图", ScoreMode::MER);
  c.expect(m.errors == 1 && m.ref_len == 5 && m.rate == 0.2, "MER google/googel");
  return c;
}

// 3. Prompt text and payload.
Check prompt_conformance() {
  Check c;
  const std::string fixture = slurp(kRoot + "/prompts/en.txt");
  c.expect(!fixture.empty(), "prompts/en.txt missing");
  c.expect(render_prompt(default_template(Lang::EN), CorrectionBatch{}) == fixture, "EN template differs");
  CorrectionBatch b;
  b.utt_ids = {"a", "b"};
  b.greedy_texts = {"Nice to meat you", "hello word"};
  c.expect(render_payload(b) == "#Nice to meat you#hello word#", "payload differs");
  return c;
}

// 4. Defaults and the retry budget.
Check protocol_defaults() {
  Check c;
  const auto cfg = iteration_config_from_json(nlohmann::json::object());
  c.expect(cfg.batch_size == 40, "batch_size");
  c.expect(cfg.retry.max_attempts == 3, "max_attempts");
  c.expect(cfg.filter.threshold == 0.1, "threshold");
  c.expect(cfg.filter.metric_mode == ScoreMode::MER, "metric");
  FailingClient failing(-1);
  CountingClient counter(failing);
  CorrectionBatch b;
  b.utt_ids = {"u1"};
  b.greedy_texts = {"hello word"};
  b.duration_s = 1.0;
  const auto res = correct_batch(counter, default_template(Lang::EN), b, cfg.retry);
  c.expect(std::holds_alternative<BatchDropped>(res), "batch not dropped");
  c.expect(counter.calls() == 3, "requests: " + std::to_string(counter.calls()));
  return c;
}

std::vector<ManifestEntry> random_scored_entries(std::mt19937_64& rng, Lang lang, const std::string& prefix) {
  std::uniform_int_distribution<int> count(0, 30);
  std::uniform_real_distribution<double> mer(0.0, 0.5), dur(0.5, 20.0);
  std::bernoulli_distribution round_mer(0.3);
  std::vector<ManifestEntry> out(static_cast<std::size_t>(count(rng)));
  for (std::size_t i = 0; i < out.size(); ++i) {
    auto& e = out[i];
    e.utt_id = prefix + std::to_string(i);
    e.audio_ref = e.utt_id + ".wav";
    e.duration_s = dur(rng);
    e.lang = lang;
    e.hypo_mer = round_mer(rng) ? std::round(mer(rng) * 10) / 10 : mer(rng);
    e.kept = true;
    e.corrected_text = "x";
  }
  return out;
}

// 5. Raising the threshold never removes a kept utterance.
Check filter_monotonicity() {
  Check c;
  std::mt19937_64 rng(5);
  const std::vector<std::string> words = {"a", "b", "c", "d", "e"};
  std::uniform_int_distribution<int> count(1, 25), len(0, 6), word(0, 4), edits(0, 3);
  std::uniform_real_distribution<double> thr(0.0, 1.0);
  for (int trial = 0; trial < 500; ++trial) {
    std::vector<ManifestEntry> entries(static_cast<std::size_t>(count(rng)));
    for (std::size_t i = 0; i < entries.size(); ++i) {
      auto& e = entries[i];
      e.utt_id = "u" + std::to_string(i);
      e.audio_ref = "a";
      e.duration_s = 1.0;
      e.lang = Lang::EN;
      std::vector<std::string> toks(static_cast<std::size_t>(len(rng)));
      for (auto& t : toks) t = words[word(rng)];
      auto join = [](const std::vector<std::string>& v) {
        std::string s;
        for (const auto& t : v) s += (s.empty() ? "" : " ") + t;
        return s;
      };
      e.corrected_text = join(toks);
      for (int k = edits(rng); k > 0 && !toks.empty(); --k) toks[word(rng) % toks.size()] = words[word(rng)];
      e.greedy_text = join(toks);
    }
    double t1 = thr(rng), t2 = thr(rng);
    if (t1 > t2) std::swap(t1, t2);
    if (trial % 10 == 0) t1 = 0.0;
    std::set<std::string> k1, k2;
    for (const auto& e : apply_filter(entries, {t1}).kept) k1.insert(e.utt_id);
    for (const auto& e : apply_filter(entries, {t2}).kept) k2.insert(e.utt_id);
    for (const auto& id : k1) c.expect(k2.count(id) == 1, "trial " + std::to_string(trial) + ": " + id);
  }
  return c;
}

// 6. Balanced sides differ by at most one trimmed-side entry.
Check balance_invariant() {
  Check c;
  std::mt19937_64 rng(6);
  for (int trial = 0; trial < 200; ++trial) {
    const auto zh = random_scored_entries(rng, Lang::ZH, "z");
    const auto en = random_scored_entries(rng, Lang::EN, "e");
    const auto [zo, eo] = balance_durations(zh, en);
    const bool zh_trimmed = total_duration(zh) > total_duration(en);
    const auto& trimmed_in = zh_trimmed ? zh : en;
    double max_dur = 0.0;
    for (const auto& e : trimmed_in) max_dur = std::max(max_dur, e.duration_s);
    const std::string tag = "trial " + std::to_string(trial);
    c.expect(std::abs(total_duration(zo) - total_duration(eo)) <= max_dur, tag + ": gap too large");
    auto subset = [](const std::vector<ManifestEntry>& out, const std::vector<ManifestEntry>& in) {
      std::set<std::string> ids;
      for (const auto& e : in) ids.insert(e.utt_id);
      for (const auto& e : out)
        if (!ids.count(e.utt_id)) return false;
      return true;
    };
    c.expect(subset(zo, zh) && subset(eo, en), tag + ": not a subset");
  }
  return c;
}

// 7. The default scenario shows the expected trend.
Check simulation_trend() {
  Check c;
  const auto t0 = std::chrono::steady_clock::now();
  const auto scenario = sim::load_scenario(kRoot + "/scenarios/default.json");
  c.expect(scenario.corpus.n_utts == 10000 && scenario.iterations == 3, "unexpected default scenario");
  const auto stats = sim::run_simulation(scenario);
  const double secs = seconds_since(t0);
  c.expect(stats.size() == 3, "iterations");
  std::ostringstream summary;
  for (const auto& s : stats) {
    c.expect(s.greedy_err && s.filtered_err && *s.filtered_err < *s.greedy_err,
             "iter " + std::to_string(s.iteration_index) + ": filtered error not below greedy");
    summary << " iter" << s.iteration_index << " " << std::to_string(s.filtered_hours).substr(0, 5) << "h";
  }
  if (stats.size() >= 2) c.expect(stats[0].filtered_hours < stats[1].filtered_hours, "filtered hours did not grow");
  c.expect(secs < 120.0, "took " + std::to_string(secs) + " s");
  if (c.ok) c.detail = summary.str().substr(1) + ", " + std::to_string(secs).substr(0, 4) + " s";
  return c;
}

// 8. Ratio rendering.
Check report_formatting() {
  Check c;
  IterationStats s;
  s.total_hours = 686.93;
  s.filtered_hours = 266.82;
  s.filtered_ratio = s.filtered_hours / s.total_hours;
  const std::string table = format_report({s});
  const std::string row = table.substr(table.find('\n') + 1);
  c.expect(row.find(" 0.39 ") != std::string::npos, "row: " + row);
  c.expect(row.find("686.93") != std::string::npos && row.find("266.82") != std::string::npos, "hours");
  return c;
}

// 9. Same inputs, same bytes.
Check determinism() {
  Check c;
  const fs::path tmp = fs::temp_directory_path() / "nstf_acceptance_determinism";
  fs::remove_all(tmp);
  fs::create_directories(tmp);
  const std::string scenario = (tmp / "scenario.json").string();
  std::ofstream(scenario) << R"({"seed": 11, "batch_size": 40, "parallelism": 4,
    "sim": {"n_utts": 1000, "error_rates": [0.3, 0.2, 0.15]}})";
  std::ostringstream sink;
  for (const char* run : {"a", "b"}) {
    const std::string out = (tmp / run).string();
    c.expect(cli::run_cli({"nstfilter", "--log-level", "off", "iterate", "--mock", "echo", "--seed", "3", "--out",
                           out + "/it", kRoot + "/tests/data/greedy_mixed.manifest"},
                          sink) == 0,
             "iterate failed");
    c.expect(cli::run_cli({"nstfilter", "--log-level", "off", "simulate", "--scenario", scenario, "--out",
                           out + "/sim", "--write-manifests"},
                          sink) == 0,
             "simulate failed");
  }
  std::size_t files = 0;
  for (const auto& entry : fs::recursive_directory_iterator(tmp / "a")) {
    if (!entry.is_regular_file()) continue;
    const fs::path rel = fs::relative(entry.path(), tmp / "a");
    c.expect(slurp(entry.path()) == slurp(tmp / "b" / rel), rel.string() + " differs");
    ++files;
  }
  c.expect(files >= 4 + 2 + 3 * 4, "only " + std::to_string(files) + " files written");
  if (c.ok) c.detail = std::to_string(files) + " files compared";
  fs::remove_all(tmp);
  return c;
}

// 10. Correction-quality fractions on the crafted fixture.
Check correction_quality_fixture() {
  Check c;
  const auto ref = read_manifest(kRoot + "/tests/data/ref.manifest");
  const auto hyp = read_manifest(kRoot + "/tests/data/hyp.manifest");
  std::vector<ManifestEntry> entries = hyp.entries;
  c.expect(entries.size() == 4 && ref.entries.size() == 4, "fixture size");
  for (std::size_t i = 0; i < entries.size() && i < ref.entries.size(); ++i) entries[i].ref_text = ref.entries[i].ref_text;
  const auto q = correction_quality(entries, ScoreMode::MER);
  c.expect(q.frac_greedy_exact == 0.25 && q.frac_llm_exact == 0.5 && q.frac_not_worse == 0.75 &&
               q.frac_more_accurate == 0.25,
           "got " + to_json(q).dump());
  return c;
}

}  // namespace

int main() {
  log::threshold() = log::Level::Off;
  const std::vector<std::pair<std::string, std::function<Check()>>> criteria = {
      {"align matches the recursive edit-distance oracle", oracle_equivalence},
      {"fixture WER/MER values", fixture_scoring},
      {"EN prompt and payload rendering", prompt_conformance},
      {"config defaults and retry budget", protocol_defaults},
      {"filter monotonic in threshold", filter_monotonicity},
      {"ZH/EN balance invariant", balance_invariant},
      {"default simulation trend", simulation_trend},
      {"filtered ratio rendering", report_formatting},
      {"byte-identical reruns", determinism},
      {"correction-quality fixture", correction_quality_fixture},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Check c;
    try {
      c = criteria[i].second();
    } catch (const std::exception& e) {
      c.ok = false;
      c.detail = std::string("exception: ") + e.what();
    }
    failed += !c.ok;
    std::printf("%s [%zu] %s%s%s\n", c.ok ? "PASS" : "FAIL", i + 1, criteria[i].first.c_str(),
                c.detail.empty() ? "" : " : ", c.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%zu/%zu criteria passed\n", criteria.size() - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
