// nstf/cli.hpp

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

// The nstfilter command line. Every stage runs standalone on manifest files:
//
//   score     error rates of hypotheses vs references (+ correction quality)
//   correct   LLM correction only
//   filter    Hypo-MER keep/drop decisions
//   balance   ZH/EN duration balancing of kept entries
//   iterate   correct + filter + balance + stats for one iteration
//   simulate  synthetic multi-iteration run
//   report    render stats.json files as a table
//
// Exit codes: 0 ok, 1 validation error, 2 I/O error, 3 endpoint abort.
// Logs go to stderr.

#pragma once

#include <filesystem>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "nstf/config.hpp"
#include "nstf/error.hpp"
#include "nstf/filter.hpp"
#include "nstf/http_client.hpp"
#include "nstf/llm_correct.hpp"
#include "nstf/manifest.hpp"
#include "nstf/metrics.hpp"
#include "nstf/orchestrator.hpp"
#include "nstf/sim.hpp"

namespace nstf::cli {

inline constexpr const char* kVersion = "0.1.0";

enum ExitCode : int { kOk = 0, kValidation = 1, kIo = 2, kEndpoint = 3 };

struct CommandOutcome {
  int exit_code = kOk;
  std::string message;
};

struct Options {
  std::string config_path;
  std::string out;
  std::string mock;
  std::optional<std::uint64_t> seed;
  std::optional<double> threshold;
  std::optional<std::size_t> batch_size;
  std::vector<std::string> langs;
  std::vector<std::string> inputs;
  // score
  std::string ref_path;
  std::string hyp_path;
  std::string mode = "MER";
  // correct
  std::string dropped_path;
  // simulate
  bool write_manifests = false;
};

/// Config file (if any) with command-line overrides applied.
inline IterationConfig effective_config(const Options& o, const nlohmann::json* doc = nullptr) {
  nlohmann::json j = doc ? *doc : (o.config_path.empty() ? nlohmann::json::object() : read_json_file(o.config_path));
  if (o.threshold) j["threshold"] = *o.threshold;
  if (o.batch_size) j["batch_size"] = *o.batch_size;
  if (o.seed) j["seed"] = *o.seed;
  if (!o.langs.empty()) j["languages"] = o.langs;
  return iteration_config_from_json(j);
}

/// "echo", "scripted:FILE", "fail" (every call fails) or "failing:K".
inline std::unique_ptr<ChatClient> make_client(const std::string& mock, const IterationConfig& cfg) {
  if (mock.empty()) return std::make_unique<HttpChatClient>(cfg.endpoint);
  MockBehavior b;
  if (mock == "echo") {
    b.kind = MockBehavior::Kind::Echo;
  } else if (mock.rfind("scripted:", 0) == 0) {
    b.kind = MockBehavior::Kind::Scripted;
    b.script = read_script_file(mock.substr(9));
  } else if (mock == "fail") {
    b.kind = MockBehavior::Kind::Failing;
    b.fail_first = -1;
  } else if (mock.rfind("failing:", 0) == 0) {
    b.kind = MockBehavior::Kind::Failing;
    try {
      b.fail_first = std::stol(mock.substr(8));
    } catch (const std::exception&) {
      throw ValidationError("bad --mock value '" + mock + "'");
    }
  } else {
    throw ValidationError("unknown --mock value '" + mock + "' (echo, scripted:FILE, fail, failing:K)");
  }
  return mock_endpoint(b);
}

inline std::vector<ManifestEntry> read_all(const std::vector<std::string>& paths) {
  std::vector<ManifestEntry> all;
  std::set<std::string> seen;
  for (const auto& p : paths) {
    for (auto& e : read_manifest(p).entries) {
      if (!seen.insert(e.utt_id).second) throw ValidationError("utt_id '" + e.utt_id + "' appears in more than one input manifest");
      all.push_back(std::move(e));
    }
  }
  return all;
}

// Groups entries per language, skipping languages not enabled in cfg.
inline std::map<Lang, Manifest> group_for(const std::vector<ManifestEntry>& entries, const IterationConfig& cfg) {
  const std::set<Lang> enabled(cfg.languages.begin(), cfg.languages.end());
  std::map<Lang, Manifest> out;
  std::size_t skipped = 0;
  for (const auto& e : entries) {
    if (!enabled.count(e.lang)) {
      ++skipped;
      continue;
    }
    auto& m = out[e.lang];
    m.name = to_string(e.lang);
    m.entries.push_back(e);
  }
  if (skipped) NSTF_WARN << "skipped " << skipped << " utterances in languages not enabled";
  return out;
}

inline CommandOutcome cmd_score(const Options& o, std::ostream& os) {
  const auto mode = parse_score_mode(o.mode);
  if (!mode) return {kValidation, "unknown --mode '" + o.mode + "'"};
  const Manifest ref = read_manifest(o.ref_path);
  const Manifest hyp = read_manifest(o.hyp_path);

  std::map<std::string, const ManifestEntry*> hyp_by_id;
  for (const auto& e : hyp.entries) hyp_by_id[e.utt_id] = &e;
  std::set<std::string> ref_ids;
  std::vector<std::string> offenders;
  for (const auto& e : ref.entries) {
    ref_ids.insert(e.utt_id);
    if (!hyp_by_id.count(e.utt_id)) offenders.push_back(e.utt_id + " (missing from hyp)");
  }
  for (const auto& e : hyp.entries)
    if (!ref_ids.count(e.utt_id)) offenders.push_back(e.utt_id + " (missing from ref)");
  if (!offenders.empty()) {
    std::string msg = std::to_string(offenders.size()) + " utt_id mismatches between manifests:";
    for (std::size_t i = 0; i < offenders.size() && i < 10; ++i) msg += "\n  " + offenders[i];
    return {kValidation, msg};
  }

  ErrorRate greedy_pool, corrected_pool;
  std::vector<ManifestEntry> quality;
  bool all_corrected = true;
  for (const auto& r : ref.entries) {
    if (!r.ref_text) return {kValidation, "utterance " + r.utt_id + ": reference manifest entry has no text"};
    const ManifestEntry& h = *hyp_by_id.at(r.utt_id);
    const auto& hyp_text = h.greedy_text ? h.greedy_text : h.ref_text;
    if (!hyp_text) return {kValidation, "utterance " + r.utt_id + ": hypothesis entry has no greedy_text or text"};
    greedy_pool += error_rate(*r.ref_text, *hyp_text, *mode);
    if (h.corrected_text) {
      corrected_pool += error_rate(*r.ref_text, *h.corrected_text, *mode);
      ManifestEntry q = h;
      q.ref_text = r.ref_text;
      q.greedy_text = *hyp_text;
      quality.push_back(std::move(q));
    } else {
      all_corrected = false;
    }
  }

  const char* m = to_string(*mode);
  os << std::fixed << std::setprecision(4);
  os << "utterances: " << ref.entries.size() << '\n';
  os << "greedy " << m << ": " << greedy_pool.rate << " (" << greedy_pool.errors << "/" << greedy_pool.ref_len << ")\n";
  if (!quality.empty()) {
    if (!all_corrected) NSTF_WARN << "only " << quality.size() << " utterances have corrected_text";
    os << "corrected " << m << ": " << corrected_pool.rate << " (" << corrected_pool.errors << "/"
       << corrected_pool.ref_len << ")\n";
    const auto report = correction_quality(quality, *mode);
    os << format_report(report, *mode);
    os << to_json(report).dump() << '\n';
  }
  return {};
}

inline CommandOutcome cmd_correct(const Options& o, std::ostream& os) {
  const IterationConfig cfg = effective_config(o);
  const auto grouped = group_for(read_all(o.inputs), cfg);
  auto client = make_client(o.mock, cfg);

  Manifest out, dropped;
  out.name = o.out;
  dropped.name = o.dropped_path;
  std::size_t n_batches = 0, n_dropped = 0;
  for (const auto& [lang, m] : grouped) {
    const PromptTemplate tmpl = template_for(cfg, lang);
    const auto batches = make_batches(m.entries, cfg.batch_size);
    std::map<Lang, std::vector<CorrectionBatch>> one{{lang, batches}};
    const auto results = orchestrator_detail::run_batches(one, {{lang, tmpl}}, *client, cfg.retry, cfg.parallelism);
    std::size_t pos = 0;
    for (std::size_t b = 0; b < batches.size(); ++b, ++n_batches) {
      const auto& res = results.at(lang)[b];
      for (std::size_t k = 0; k < batches[b].size(); ++k) {
        ManifestEntry e = m.entries[pos + k];
        if (const auto* texts = std::get_if<std::vector<std::string>>(&res)) {
          e.corrected_text = (*texts)[k];
          e.hypo_mer.reset();
          e.kept.reset();
          out.entries.push_back(std::move(e));
        } else {
          e.extra["status"] = "batch_dropped";
          dropped.entries.push_back(std::move(e));
        }
      }
      if (std::holds_alternative<BatchDropped>(res)) ++n_dropped;
      pos += batches[b].size();
    }
  }
  write_manifest(out, o.out);
  if (!o.dropped_path.empty()) write_manifest(dropped, o.dropped_path);
  os << "corrected " << out.entries.size() << " utterances in " << n_batches << " batches; " << n_dropped
     << " batches dropped (" << dropped.entries.size() << " utterances)\n";
  return {};
}

inline CommandOutcome cmd_filter(const Options& o, std::ostream& os) {
  const IterationConfig cfg = effective_config(o);
  Manifest all;
  all.entries = read_all(o.inputs);
  all.name = o.out;
  const FilterResult fr = apply_filter(all.entries, cfg.filter);
  Manifest decisions;
  decisions.name = o.out;
  std::size_t ki = 0, di = 0;
  for (const auto& e : all.entries) {
    if (ki < fr.kept.size() && fr.kept[ki].utt_id == e.utt_id) decisions.entries.push_back(fr.kept[ki++]);
    else decisions.entries.push_back(fr.dropped[di++]);
  }
  write_manifest(decisions, o.out);
  os << "kept " << fr.kept.size() << " / " << all.entries.size() << " utterances (" << to_string(cfg.filter.metric_mode)
     << " threshold " << cfg.filter.threshold << ")\n";
  return {};
}

inline CommandOutcome cmd_balance(const Options& o, std::ostream& os) {
  std::vector<ManifestEntry> zh, en;
  for (auto& e : read_all(o.inputs)) {
    if (!e.kept || !*e.kept) continue;
    if (!e.corrected_text) return {kValidation, "utterance " + e.utt_id + ": kept entry without corrected_text"};
    if (e.lang == Lang::ZH) zh.push_back(std::move(e));
    else if (e.lang == Lang::EN) en.push_back(std::move(e));
  }
  auto [zh_out, en_out] = balance_durations(zh, en);
  Manifest train;
  train.name = o.out;
  for (auto* side : {&zh_out, &en_out})
    for (auto& e : *side) {
      e.ref_text = e.corrected_text;
      e.extra.erase("status");
      train.entries.push_back(std::move(e));
    }
  write_manifest(train, o.out);
  os << std::fixed << std::setprecision(2) << "ZH " << total_duration(zh_out) / 3600.0 << " h, EN "
     << total_duration(en_out) / 3600.0 << " h (" << train.entries.size() << " utterances)\n";
  return {};
}

inline CommandOutcome cmd_iterate(const Options& o, std::ostream& os) {
  IterationConfig cfg = effective_config(o);
  const auto grouped = group_for(read_all(o.inputs), cfg);
  auto client = make_client(o.mock, cfg);
  const IterationResult r = run_iteration(grouped, cfg, *client);
  const auto dir = write_iteration_outputs(r, o.out);
  NSTF_LOG << "wrote " << dir.string();
  os << format_report({r.stats});
  return {};
}

inline CommandOutcome cmd_simulate(const Options& o, std::ostream& os) {
  namespace fs = std::filesystem;
  nlohmann::json doc = read_json_file(o.config_path);
  if (o.threshold) doc["threshold"] = *o.threshold;
  if (o.batch_size) doc["batch_size"] = *o.batch_size;
  if (o.seed) doc["seed"] = *o.seed;
  const sim::Scenario scenario = sim::scenario_from_json(doc);

  const fs::path root(o.out);
  fs::create_directories(root);
  auto stats = sim::run_simulation(scenario, [&](const IterationResult& r) {
    const fs::path dir = iteration_dir(root, r.stats.iteration_index);
    fs::create_directories(dir);
    write_text_file(dir / "stats.txt", format_report({r.stats}));
    write_text_file(dir / "stats.json", to_json(r.stats).dump(2) + "\n");
    if (o.write_manifests) {
      write_manifest(r.train, (dir / "train.manifest").string());
      write_manifest(r.decisions, (dir / "decisions.manifest").string());
    }
  });
  nlohmann::ordered_json summary = nlohmann::ordered_json::array();
  for (const auto& s : stats) summary.push_back(to_json(s));
  const std::string table = format_report(stats);
  write_text_file(root / "summary.txt", table);
  write_text_file(root / "summary.json", summary.dump(2) + "\n");
  os << table;
  return {};
}

inline CommandOutcome cmd_report(const Options& o, std::ostream& os) {
  std::vector<IterationStats> rows;
  for (const auto& p : o.inputs) {
    const nlohmann::json j = read_json_file(p);
    if (j.is_array())
      for (const auto& item : j) rows.push_back(stats_from_json(item));
    else
      rows.push_back(stats_from_json(j));
  }
  const std::string table = format_report(rows);
  if (!o.out.empty()) {
    nlohmann::ordered_json arr = nlohmann::ordered_json::array();
    for (const auto& s : rows) arr.push_back(to_json(s));
    write_text_file(o.out, table);
    write_text_file(o.out + ".json", arr.dump(2) + "\n");
  }
  os << table;
  return {};
}

template <class Fn>
int guarded(Fn&& fn) {
  CommandOutcome outcome;
  try {
    outcome = fn();
  } catch (const EndpointAbort& e) {
    outcome = {kEndpoint, std::string("endpoint error: ") + e.what()};
  } catch (const IoError& e) {
    outcome = {kIo, e.what()};
  } catch (const std::filesystem::filesystem_error& e) {
    outcome = {kIo, e.what()};
  } catch (const ValidationError& e) {
    outcome = {kValidation, e.what()};
  } catch (const std::exception& e) {
    outcome = {kValidation, e.what()};
  }
  if (outcome.exit_code != kOk) NSTF_ERR << outcome.message;
  return outcome.exit_code;
}

/// Entry point; output that is not a log goes to `os`.
inline int run_cli(std::vector<std::string> args, std::ostream& os = std::cout) {
  CLI::App app{"Pseudo-label selection for code-switching noisy student training"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);
  std::string log_level = "info";
  app.add_option("--log-level", log_level, "debug, info, warn, error or off")
      ->check(CLI::IsMember({"debug", "info", "warn", "error", "off"}));

  Options o;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", o.config_path, "JSON config file");
    sub->add_option("--seed", o.seed, "RNG seed (overrides config)");
    sub->add_option("--threshold", o.threshold, "Hypo-MER threshold (overrides config)");
    sub->add_option("--batch-size", o.batch_size, "hypotheses per LLM request (overrides config)");
    sub->add_option("--lang", o.langs, "languages to process (ZH, EN)");
  };

  auto* score = app.add_subcommand("score", "error rates of hypotheses against references");
  score->add_option("--ref", o.ref_path, "manifest with reference 'text'")->required();
  score->add_option("--hyp", o.hyp_path, "manifest with greedy_text (or text) and optional corrected_text")->required();
  score->add_option("--mode", o.mode, "CER, WER or MER");

  auto* correct = app.add_subcommand("correct", "LLM correction stage only");
  add_common(correct);
  correct->add_option("--out", o.out, "output manifest")->required();
  correct->add_option("--dropped", o.dropped_path, "manifest for utterances of dropped batches");
  correct->add_option("--mock", o.mock, "offline endpoint: echo, scripted:FILE, fail, failing:K");
  correct->add_option("manifests", o.inputs, "input manifests")->required();

  auto* filter = app.add_subcommand("filter", "Hypo-MER keep/drop decisions");
  add_common(filter);
  filter->add_option("--out", o.out, "decisions manifest")->required();
  filter->add_option("manifests", o.inputs, "manifests with greedy_text and corrected_text")->required();

  auto* balance = app.add_subcommand("balance", "equalize ZH/EN hours of kept entries");
  balance->add_option("--out", o.out, "training manifest")->required();
  balance->add_option("manifests", o.inputs, "decisions manifests")->required();

  auto* iterate = app.add_subcommand("iterate", "run one pseudo-labelling iteration");
  add_common(iterate);
  iterate->add_option("--out", o.out, "output root; results go to <out>/iter_<N>/")->required();
  iterate->add_option("--mock", o.mock, "offline endpoint: echo, scripted:FILE, fail, failing:K");
  iterate->add_option("manifests", o.inputs, "greedy hypothesis manifests")->required();

  auto* simulate = app.add_subcommand("simulate", "synthetic multi-iteration run");
  simulate->add_option("--config,--scenario", o.config_path, "scenario file")->required();
  simulate->add_option("--out", o.out, "output directory")->required();
  simulate->add_option("--seed", o.seed, "RNG seed (overrides scenario)");
  simulate->add_option("--threshold", o.threshold, "Hypo-MER threshold (overrides scenario)");
  simulate->add_option("--batch-size", o.batch_size, "hypotheses per request (overrides scenario)");
  simulate->add_flag("--write-manifests", o.write_manifests, "also write train/decisions manifests");

  auto* report = app.add_subcommand("report", "render stats.json files as a table");
  report->add_option("--out", o.out, "also write the table (and <out>.json)");
  report->add_option("stats", o.inputs, "stats.json or summary.json files");

  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e, os, std::cerr);
    return rc == 0 ? kOk : kValidation;
  }

  const log::Level saved = log::threshold();
  log::threshold() = log_level == "debug" ? log::Level::Debug
                     : log_level == "warn" ? log::Level::Warn
                     : log_level == "error" ? log::Level::Error
                     : log_level == "off" ? log::Level::Off
                                          : log::Level::Info;
  int rc = kValidation;
  if (score->parsed()) rc = guarded([&] { return cmd_score(o, os); });
  else if (correct->parsed()) rc = guarded([&] { return cmd_correct(o, os); });
  else if (filter->parsed()) rc = guarded([&] { return cmd_filter(o, os); });
  else if (balance->parsed()) rc = guarded([&] { return cmd_balance(o, os); });
  else if (iterate->parsed()) rc = guarded([&] { return cmd_iterate(o, os); });
  else if (simulate->parsed()) rc = guarded([&] { return cmd_simulate(o, os); });
  else if (report->parsed()) rc = guarded([&] { return cmd_report(o, os); });
  log::threshold() = saved;
  return rc;
}

}  // namespace nstf::cli
