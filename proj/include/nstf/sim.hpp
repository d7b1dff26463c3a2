// nstf/sim.hpp

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

// Offline simulation of the pseudo-labelling loop. Synthetic bilingual
// corpora stand in for the unsupervised audio, a token-level noise model
// stands in for the teacher's greedy decoding, and an oracle that reverts
// a fraction of the errors stands in for the LLM. The oracle is served
// through the same chat protocol as a real endpoint, so run_iteration is
// exercised unchanged.
//
// Randomness: every utterance draws from its own mt19937_64 seeded by
// hashing (scenario seed, iteration, utt_id), so results do not depend on
// thread scheduling or batch layout.

#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <random>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "nstf/align.hpp"
#include "nstf/config.hpp"
#include "nstf/error.hpp"
#include "nstf/llm_correct.hpp"
#include "nstf/manifest.hpp"
#include "nstf/orchestrator.hpp"
#include "nstf/textnorm.hpp"

namespace nstf::sim {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

/// Stable 64-bit seed derived from a base seed and a string key.
inline std::uint64_t derive_seed(std::uint64_t base, std::string_view key) {
  std::uint64_t h = 0xCBF29CE484222325ull;  // FNV-1a
  for (unsigned char c : key) {
    h ^= c;
    h *= 0x100000001B3ull;
  }
  return splitmix64(base ^ splitmix64(h));
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  /// Uniform in [0, 1).
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  /// Uniform in [0, n).
  std::size_t index(std::size_t n) {
    return std::min(n - 1, static_cast<std::size_t>(uniform() * static_cast<double>(n)));
  }

 private:
  std::mt19937_64 engine_;
};

struct Vocabulary {
  Lang lang = Lang::EN;
  std::vector<Token> tokens;
};

/// ZH: the first `size` CJK ideographs from U+4E00. EN: `size` distinct
/// lowercase pseudo-words of 3..8 letters.
inline Vocabulary make_vocabulary(Lang lang, std::size_t size, std::uint64_t seed) {
  if (size < 2) throw ValidationError("vocab_size must be >= 2");
  Vocabulary v;
  v.lang = lang;
  if (lang == Lang::ZH) {
    if (size > 0x9FFF - 0x4E00 + 1) throw ValidationError("ZH vocab_size too large");
    for (std::size_t i = 0; i < size; ++i) {
      std::string ch;
      textnorm_detail::append_utf8(ch, static_cast<UChar32>(0x4E00 + i));
      v.tokens.push_back({ch, Script::Han});
    }
    return v;
  }
  if (lang != Lang::EN) throw ValidationError("simulation supports ZH and EN only");
  Rng rng(derive_seed(seed, "vocab-en"));
  std::set<std::string> seen;
  while (v.tokens.size() < size) {
    const std::size_t len = 3 + rng.index(6);
    std::string w;
    for (std::size_t k = 0; k < len; ++k) w.push_back(static_cast<char>('a' + rng.index(26)));
    if (seen.insert(w).second) v.tokens.push_back({w, Script::Latin});
  }
  return v;
}

struct CorpusParams {
  std::size_t n_utts = 1000;
  double mean_len = 12.0;
  std::size_t vocab_size = 1000;
  double mean_dur_s = 3.6;
};

/// Synthetic manifest with reference texts. Lengths are uniform on
/// [1, 2*mean_len - 1] tokens and durations uniform on
/// [0.5, 1.5] * mean_dur_s.
inline Manifest gen_corpus(std::size_t n_utts, Lang lang, double mean_len, std::size_t vocab_size,
                           double mean_dur_s, std::uint64_t seed) {
  if (n_utts < 1) throw ValidationError("n_utts must be >= 1");
  if (!(mean_len >= 1.0)) throw ValidationError("mean_len must be >= 1");
  if (!(mean_dur_s > 0.0)) throw ValidationError("mean_dur_s must be > 0");
  const Vocabulary vocab = make_vocabulary(lang, vocab_size, seed);
  const std::string tag = lang == Lang::ZH ? "zh" : "en";
  const auto max_len = static_cast<std::size_t>(std::max(1.0, 2.0 * mean_len - 1.0));

  Manifest m;
  m.name = "sim-" + tag;
  m.entries.reserve(n_utts);
  for (std::size_t i = 0; i < n_utts; ++i) {
    ManifestEntry e;
    e.utt_id = "sim-" + tag + "-" + std::to_string(i);
    Rng rng(derive_seed(seed, "corpus/" + e.utt_id));
    const std::size_t len = 1 + rng.index(max_len);
    TokenSequence toks;
    for (std::size_t k = 0; k < len; ++k) toks.push_back(vocab.tokens[rng.index(vocab.tokens.size())]);
    e.audio_ref = "sim/" + tag + "/" + std::to_string(i) + ".wav";
    e.duration_s = mean_dur_s * (0.5 + rng.uniform());
    e.lang = lang;
    e.ref_text = join_tokens(toks);
    e.source = "sim";
    m.entries.push_back(std::move(e));
  }
  return m;
}

struct AsrErrorModel {
  double sub_p = 0.0;
  double del_p = 0.0;
  double ins_p = 0.0;
  std::uint64_t rng_seed = 0;
};

inline void validate(const AsrErrorModel& m) {
  for (double p : {m.sub_p, m.del_p, m.ins_p})
    if (!(p >= 0.0 && p < 1.0)) throw ValidationError("error probabilities must be in [0, 1)");
  if (!(m.sub_p + m.del_p + m.ins_p < 1.0)) throw ValidationError("sub_p + del_p + ins_p must be < 1");
}

/// Per reference token: substitute (sub_p) with a different vocabulary token
/// or delete (del_p); then, independently, insert a random token after it
/// (ins_p).
inline std::string corrupt(std::string_view ref_text, const AsrErrorModel& model, const Vocabulary& vocab) {
  validate(model);
  if (vocab.tokens.size() < 2) throw ValidationError("vocabulary needs at least 2 tokens");
  Rng rng(model.rng_seed);
  const TokenSequence ref = tokenize_mixed(ref_text);
  TokenSequence out;
  out.reserve(ref.size() + ref.size() / 4 + 1);
  for (const Token& t : ref) {
    const double u = rng.uniform();
    if (u < model.sub_p) {
      const Token* pick;
      do {
        pick = &vocab.tokens[rng.index(vocab.tokens.size())];
      } while (pick->surface == t.surface);
      out.push_back(*pick);
    } else if (u >= model.sub_p + model.del_p) {
      out.push_back(t);
    }
    if (rng.uniform() < model.ins_p) out.push_back(vocab.tokens[rng.index(vocab.tokens.size())]);
  }
  return join_tokens(out);
}

struct OracleCorrector {
  double fix_p = 0.6;
  std::uint64_t rng_seed = 0;
  // Effective fix probability is fix_p * max(0, 1 - decay_k * greedy_rate):
  // corrections get weaker as the hypothesis gets worse.
  double decay_k = 0.0;
};

/// Aligns greedy to ref and reverts each error with the effective fix
/// probability. Never moves the text further from ref.
inline std::string oracle_correct(std::string_view greedy_text, std::string_view ref_text,
                                  const OracleCorrector& oracle) {
  if (!(oracle.fix_p >= 0.0 && oracle.fix_p <= 1.0)) throw ValidationError("fix_p must be in [0, 1]");
  if (oracle.fix_p == 0.0) return std::string(greedy_text);
  const TokenSequence ref = tokenize_mixed(ref_text);
  const TokenSequence hyp = tokenize_mixed(greedy_text);
  const auto ops = align_path(std::span<const Token>(ref), std::span<const Token>(hyp));
  const Alignment counts = count_ops(ops);
  if (counts.errors() == 0) return std::string(greedy_text);

  const double greedy_rate = ErrorRate::rate_of(counts.errors(), counts.ref_len());
  const double p = oracle.fix_p * std::max(0.0, 1.0 - oracle.decay_k * greedy_rate);
  Rng rng(oracle.rng_seed);
  TokenSequence out;
  std::size_t i = 0, j = 0;
  for (EditOp op : ops) {
    switch (op) {
      case EditOp::Hit:
        out.push_back(hyp[j]);
        ++i, ++j;
        break;
      case EditOp::Sub:
        out.push_back(rng.uniform() < p ? ref[i] : hyp[j]);
        ++i, ++j;
        break;
      case EditOp::Del:
        if (rng.uniform() < p) out.push_back(ref[i]);
        ++i;
        break;
      case EditOp::Ins:
        if (!(rng.uniform() < p)) out.push_back(hyp[j]);
        ++j;
        break;
    }
  }
  return join_tokens(out);
}

struct Scenario {
  IterationConfig config;
  CorpusParams corpus;
  std::vector<double> error_rates = {0.30, 0.20, 0.15};
  int iterations = 3;
  double fix_p = 0.6;
  double decay_k = 0.0;
  // Split of each iteration's total error rate into sub/del/ins.
  double sub_frac = 0.6;
  double del_frac = 0.2;
  double ins_frac = 0.2;
};

inline void validate(const Scenario& s) {
  validate(s.config);
  if (s.iterations < 1) throw ValidationError("sim.iterations must be >= 1");
  if (s.error_rates.empty()) throw ValidationError("sim.error_rates must not be empty");
  if (s.corpus.n_utts < 1) throw ValidationError("sim.n_utts must be >= 1");
  if (s.corpus.vocab_size < 2) throw ValidationError("sim.vocab_size must be >= 2");
  if (!(s.fix_p >= 0.0 && s.fix_p <= 1.0)) throw ValidationError("sim.fix_p must be in [0, 1]");
  if (!(s.decay_k >= 0.0)) throw ValidationError("sim.decay_k must be >= 0");
  const double fsum = s.sub_frac + s.del_frac + s.ins_frac;
  if (s.sub_frac < 0 || s.del_frac < 0 || s.ins_frac < 0 || std::abs(fsum - 1.0) > 1e-9)
    throw ValidationError("sim.sub_frac + del_frac + ins_frac must be 1");
  for (double r : s.error_rates)
    if (!(r >= 0.0 && r < 1.0)) throw ValidationError("sim.error_rates entries must be in [0, 1)");
}

/// Reads the shared config keys plus a "sim" section:
/// n_utts, mean_len, vocab_size, mean_dur_s, error_rates, iterations,
/// fix_p, decay_k, sub_frac, del_frac, ins_frac. `iterations` defaults to
/// the length of error_rates; missing rates repeat the last one.
inline Scenario scenario_from_json(const nlohmann::json& j) {
  Scenario s;
  s.config = iteration_config_from_json(j);
  const auto sec = j.find("sim");
  if (sec == j.end() || !sec->is_object()) throw ValidationError("scenario needs a 'sim' section");
  const nlohmann::json& sim = *sec;
  try {
    s.corpus.n_utts = sim.value("n_utts", s.corpus.n_utts);
    s.corpus.mean_len = sim.value("mean_len", s.corpus.mean_len);
    s.corpus.vocab_size = sim.value("vocab_size", s.corpus.vocab_size);
    s.corpus.mean_dur_s = sim.value("mean_dur_s", s.corpus.mean_dur_s);
    s.error_rates = sim.value("error_rates", s.error_rates);
    s.iterations = sim.value("iterations", static_cast<int>(s.error_rates.size()));
    s.fix_p = sim.value("fix_p", s.fix_p);
    s.decay_k = sim.value("decay_k", s.decay_k);
    s.sub_frac = sim.value("sub_frac", s.sub_frac);
    s.del_frac = sim.value("del_frac", s.del_frac);
    s.ins_frac = sim.value("ins_frac", s.ins_frac);
    if (sim.contains("n_utts") && (!sim["n_utts"].is_number_integer() || sim["n_utts"].get<long long>() < 1))
      throw ValidationError("sim.n_utts must be a positive integer");
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("bad sim section: ") + e.what());
  }
  validate(s);
  return s;
}

inline Scenario load_scenario(const std::string& path) { return scenario_from_json(read_json_file(path)); }

/// Greedy hypotheses for one iteration plus the oracle's answers, served as
/// a chat endpoint keyed by batch payload.
struct SimulatedRound {
  std::map<Lang, Manifest> hypotheses;
  LookupClient endpoint;
};

inline void prepare_round(SimulatedRound& round, const Scenario& s, const std::map<Lang, Manifest>& corpora,
                          const std::map<Lang, Vocabulary>& vocabs, int iteration) {
  const double rate = s.error_rates[std::min<std::size_t>(iteration - 1, s.error_rates.size() - 1)];
  const std::uint64_t seed = s.config.rng_seed;
  for (const auto& [lang, corpus] : corpora) {
    Manifest hyp = corpus;
    std::vector<std::string> corrected;
    corrected.reserve(hyp.entries.size());
    for (auto& e : hyp.entries) {
      const std::uint64_t useed = derive_seed(seed, "iter" + std::to_string(iteration) + "/" + e.utt_id);
      AsrErrorModel model{rate * s.sub_frac, rate * s.del_frac, rate * s.ins_frac, useed};
      e.greedy_text = corrupt(*e.ref_text, model, vocabs.at(lang));
      OracleCorrector oracle{s.fix_p, splitmix64(useed), s.decay_k};
      corrected.push_back(oracle_correct(*e.greedy_text, *e.ref_text, oracle));
    }
    const auto batches = make_batches(hyp.entries, s.config.batch_size);
    std::size_t pos = 0;
    for (const auto& b : batches) {
      std::vector<std::string> answer(corrected.begin() + static_cast<std::ptrdiff_t>(pos),
                                      corrected.begin() + static_cast<std::ptrdiff_t>(pos + b.size()));
      round.endpoint.add(render_payload(b), wrap_corrections(answer));
      pos += b.size();
    }
    round.hypotheses[lang] = std::move(hyp);
  }
}

/// Runs `iterations` rounds over fixed corpora with the scenario's error
/// schedule. Calls on_round (if given) with each round's full result.
template <class OnRound>
std::vector<IterationStats> run_simulation(const Scenario& s, OnRound&& on_round) {
  validate(s);
  std::map<Lang, Manifest> corpora;
  std::map<Lang, Vocabulary> vocabs;
  for (Lang lang : s.config.languages) {
    if (corpora.count(lang)) continue;
    vocabs[lang] = make_vocabulary(lang, s.corpus.vocab_size, s.config.rng_seed);
    corpora[lang] = gen_corpus(s.corpus.n_utts, lang, s.corpus.mean_len, s.corpus.vocab_size,
                               s.corpus.mean_dur_s, s.config.rng_seed);
  }

  std::vector<IterationStats> stats;
  for (int it = 1; it <= s.iterations; ++it) {
    SimulatedRound round;
    prepare_round(round, s, corpora, vocabs, it);
    IterationConfig cfg = s.config;
    cfg.iteration_index = it;
    IterationResult r = run_iteration(round.hypotheses, cfg, round.endpoint);
    on_round(r);
    stats.push_back(r.stats);
  }
  return stats;
}

inline std::vector<IterationStats> run_simulation(const Scenario& s) {
  return run_simulation(s, [](const IterationResult&) {});
}

}  // namespace nstf::sim
