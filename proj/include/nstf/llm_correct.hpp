// nstf/llm_correct.hpp

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

// LLM hypothesis correction: prompt rendering, the '#'-separated batch
// payload, '<...>' response parsing, and the retry-then-drop protocol.
//
// A prompt is the language template followed by a newline and the payload
// "#h1#h2#...#hn#". The model is expected to answer "<c1>#<c2>#...#<cn>".

#pragma once

#include <atomic>
#include <cstddef>
#include <deque>
#include <fstream>
#include <iterator>
#include <map>
#include <memory>
#include <mutex>
#include <sstream>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "nstf/error.hpp"
#include "nstf/manifest.hpp"

namespace nstf {

struct PromptTemplate {
  Lang language = Lang::EN;
  std::string system_instruction;
  std::string problem_description;
  std::string examples;

  /// The three parts joined: by a single space for EN, directly for ZH.
  std::string text() const {
    const std::string_view sep = language == Lang::EN ? " " : "";
    std::string out;
    for (const std::string* part : {&system_instruction, &problem_description, &examples}) {
      if (part->empty()) continue;
      if (!out.empty()) out += sep;
      out += *part;
    }
    return out;
  }
};

/// Built-in templates. The EN wording is fixed; ZH is its translation.
inline PromptTemplate default_template(Lang lang) {
  if (lang == Lang::ZH) {
    return {Lang::ZH,
            "请确认我的需求，并以ASR专家的身份回复我。",
            "我将提供一批ASR模型的解码结果，每个句子之间用#分隔，请你帮我找出并纠正其中可能存在的"
            "替换、插入和删除错误，并输出纠正后的结果。最终的输出格式为<纠正后的结果>。",
            "示例如下：输入：#今天天起很好#我想去北京#。输出：<今天天气很好>#<我想去北京>。"
            "之后每次我输入ASR识别结果时，请直接返回结果，不要输出推理过程。"};
  }
  if (lang != Lang::EN) throw ValidationError(std::string("no prompt template for lang ") + to_string(lang));
  return {Lang::EN,
          "Please confirm my requirement and reply to me as an ASR expert.",
          "I will provide a batch of decoding results of an ASR model. Each sentence is separated "
          "by #, and you will assist me to find and correct possible substitution, insertion, and "
          "deletion errors, and output the corrected result. The final output format is "
          "<corrected result>.",
          "The example is as follows: Input: #Nice to meat you#hello word#. Output: "
          "<Nice to meet you>#<hello world>. After each time I input ASR hypotheses, please "
          "return the result directly without the inference process."};
}

/// Loads a template from a prompt file. The file content is used verbatim
/// as the whole template text.
inline PromptTemplate load_template(const std::string& path, Lang lang) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open prompt file " + path);
  std::string body((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  PromptTemplate t;
  t.language = lang;
  t.system_instruction = std::move(body);
  return t;
}

/// Replaces the protocol delimiters '#', '<', '>' (and line breaks, which
/// would split the payload line) with a single space.
inline std::string sanitize_hypothesis(std::string_view text) {
  std::string out(text);
  for (char& c : out)
    if (c == '#' || c == '<' || c == '>' || c == '\n' || c == '\r') c = ' ';
  return out;
}

inline bool is_sanitized(std::string_view text) {
  return text.find_first_of("#<>\n\r") == std::string_view::npos;
}

struct CorrectionBatch {
  std::vector<std::string> utt_ids;
  std::vector<std::string> greedy_texts;
  double duration_s = 0.0;

  std::size_t size() const { return utt_ids.size(); }
};

/// Splits entries (all one language) into consecutive batches of at most
/// batch_size, in input order. Hypotheses are sanitized on the way in.
inline std::vector<CorrectionBatch> make_batches(const std::vector<ManifestEntry>& entries,
                                                 std::size_t batch_size) {
  if (batch_size == 0) throw ValidationError("batch_size must be >= 1");
  std::vector<CorrectionBatch> batches;
  for (std::size_t i = 0; i < entries.size(); i += batch_size) {
    CorrectionBatch b;
    const std::size_t end = std::min(entries.size(), i + batch_size);
    for (std::size_t k = i; k < end; ++k) {
      const auto& e = entries[k];
      if (!e.greedy_text) throw ValidationError("utterance " + e.utt_id + ": missing greedy_text");
      b.utt_ids.push_back(e.utt_id);
      b.greedy_texts.push_back(sanitize_hypothesis(*e.greedy_text));
      b.duration_s += e.duration_s;
    }
    batches.push_back(std::move(b));
  }
  return batches;
}

/// "#h1#h2#...#hn#"; empty for an empty batch.
inline std::string render_payload(const CorrectionBatch& batch) {
  if (batch.greedy_texts.size() != batch.utt_ids.size())
    throw ValidationError("correction batch: utt_ids and greedy_texts differ in length");
  if (batch.greedy_texts.empty()) return {};
  std::string out = "#";
  for (std::size_t i = 0; i < batch.greedy_texts.size(); ++i) {
    const auto& h = batch.greedy_texts[i];
    if (!is_sanitized(h))
      throw ValidationError("utterance " + batch.utt_ids[i] +
                            ": hypothesis contains a reserved delimiter (#, <, > or newline)");
    out += h;
    out += '#';
  }
  return out;
}

/// Template text, then '\n' and the payload. An empty batch renders the
/// bare template.
inline std::string render_prompt(const PromptTemplate& tmpl, const CorrectionBatch& batch) {
  const std::string payload = render_payload(batch);
  std::string out = tmpl.text();
  if (!payload.empty()) {
    out += '\n';
    out += payload;
  }
  return out;
}

class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, std::size_t found, std::size_t expected)
      : std::runtime_error(what), found_(found), expected_(expected) {}
  std::size_t found() const { return found_; }
  std::size_t expected() const { return expected_; }

 private:
  std::size_t found_;
  std::size_t expected_;
};

/// Collects the contents of every '<...>' group in order. Text outside the
/// groups (separators, trailing punctuation) is ignored.
inline std::vector<std::string> parse_response(std::string_view text, std::size_t expected_n) {
  std::vector<std::string> groups;
  std::size_t pos = 0;
  while (true) {
    const std::size_t open = text.find('<', pos);
    if (open == std::string_view::npos) break;
    const std::size_t close = text.find_first_of("<>", open + 1);
    if (close == std::string_view::npos)
      throw ParseError("unterminated '<' at offset " + std::to_string(open), groups.size(), expected_n);
    if (text[close] == '<')
      throw ParseError("nested '<' at offset " + std::to_string(close), groups.size(), expected_n);
    groups.emplace_back(text.substr(open + 1, close - open - 1));
    pos = close + 1;
  }
  if (groups.size() != expected_n)
    throw ParseError("expected " + std::to_string(expected_n) + " corrections, found " +
                         std::to_string(groups.size()),
                     groups.size(), expected_n);
  return groups;
}

/// Chat-completion transport. complete() sends one user message and returns
/// the assistant text. Throws TransportError for retryable failures and
/// EndpointAbort for fatal ones. Implementations must be thread-safe.
class ChatClient {
 public:
  virtual ~ChatClient() = default;
  virtual std::string complete(const std::string& prompt) = 0;
};

struct RetryPolicy {
  int max_attempts = 3;
};

struct BatchDropped {
  std::vector<std::string> utt_ids;
  double duration_s = 0.0;
  int attempts = 0;
  std::string last_error;
};

using BatchResult = std::variant<std::vector<std::string>, BatchDropped>;

/// Sends the batch, retrying identical requests on TransportError or
/// ParseError. After max_attempts failures the batch is dropped.
inline BatchResult correct_batch(ChatClient& client, const PromptTemplate& tmpl,
                                 const CorrectionBatch& batch, const RetryPolicy& policy) {
  if (policy.max_attempts < 1) throw ValidationError("max_attempts must be >= 1");
  const std::string prompt = render_prompt(tmpl, batch);
  std::string last_error;
  for (int attempt = 1; attempt <= policy.max_attempts; ++attempt) {
    try {
      return parse_response(client.complete(prompt), batch.size());
    } catch (const TransportError& e) {
      last_error = std::string("transport: ") + e.what();
    } catch (const ParseError& e) {
      last_error = std::string("parse: ") + e.what();
    }
    NSTF_WARN << "batch starting at " << (batch.utt_ids.empty() ? "" : batch.utt_ids.front())
              << ": attempt " << attempt << "/" << policy.max_attempts << " failed (" << last_error
              << ")";
  }
  return BatchDropped{batch.utt_ids, batch.duration_s, policy.max_attempts, last_error};
}

// ---------------------------------------------------------------------------
// Offline clients.

/// Returns the '#' payload on the prompt's last line, split into hypotheses.
inline std::vector<std::string> extract_hypotheses(std::string_view prompt) {
  const std::size_t nl = prompt.rfind('\n');
  std::string_view payload = nl == std::string_view::npos ? prompt : prompt.substr(nl + 1);
  if (payload.size() < 2 || payload.front() != '#' || payload.back() != '#') return {};
  payload = payload.substr(1, payload.size() - 2);
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t end = payload.find('#', start);
    out.emplace_back(payload.substr(start, end == std::string_view::npos ? std::string_view::npos : end - start));
    if (end == std::string_view::npos) break;
    start = end + 1;
  }
  return out;
}

inline std::string wrap_corrections(const std::vector<std::string>& texts) {
  std::string out;
  for (std::size_t i = 0; i < texts.size(); ++i) {
    if (i > 0) out += '#';
    out += '<';
    out += texts[i];
    out += '>';
  }
  return out;
}

/// Answers every prompt with its own hypotheses: "#a#b#" -> "<a>#<b>".
class EchoClient : public ChatClient {
 public:
  std::string complete(const std::string& prompt) override {
    return wrap_corrections(extract_hypotheses(prompt));
  }
};

/// Replays fixture responses in order; past the end it raises TransportError.
class ScriptedClient : public ChatClient {
 public:
  explicit ScriptedClient(std::vector<std::string> responses)
      : responses_(responses.begin(), responses.end()) {}

  std::string complete(const std::string&) override {
    std::lock_guard<std::mutex> lock(mu_);
    if (responses_.empty()) throw TransportError("scripted client exhausted");
    std::string r = std::move(responses_.front());
    responses_.pop_front();
    return r;
  }

 private:
  std::mutex mu_;
  std::deque<std::string> responses_;
};

/// Raises TransportError for the first k calls, then echoes.
/// k < 0 means every call fails.
class FailingClient : public ChatClient {
 public:
  explicit FailingClient(long k) : forever_(k < 0), calls_(0), k_(k) {}

  std::string complete(const std::string& prompt) override {
    if (forever_ || calls_.fetch_add(1) < k_) throw TransportError("mock endpoint failure");
    return echo_.complete(prompt);
  }

 private:
  bool forever_;
  std::atomic<long> calls_;
  long k_;
  EchoClient echo_;
};

/// Answers from a payload -> response table; unknown payloads raise
/// TransportError. Repeated payloads consume their responses in order.
class LookupClient : public ChatClient {
 public:
  void add(const std::string& payload, std::string response) {
    std::lock_guard<std::mutex> lock(mu_);
    table_[payload].push_back(std::move(response));
  }

  std::string complete(const std::string& prompt) override {
    const std::size_t nl = prompt.rfind('\n');
    const std::string payload = nl == std::string::npos ? prompt : prompt.substr(nl + 1);
    std::lock_guard<std::mutex> lock(mu_);
    auto it = table_.find(payload);
    if (it == table_.end() || it->second.empty()) throw TransportError("no scripted answer for payload");
    std::string r = std::move(it->second.front());
    it->second.pop_front();
    return r;
  }

 private:
  std::mutex mu_;
  std::map<std::string, std::deque<std::string>> table_;
};

/// Forwards to another client and counts requests.
class CountingClient : public ChatClient {
 public:
  explicit CountingClient(ChatClient& inner) : inner_(inner) {}

  std::string complete(const std::string& prompt) override {
    ++calls_;
    return inner_.complete(prompt);
  }
  long calls() const { return calls_.load(); }

 private:
  ChatClient& inner_;
  std::atomic<long> calls_{0};
};

struct MockBehavior {
  enum class Kind { Echo, Scripted, Failing } kind = Kind::Echo;
  std::vector<std::string> script;  // Scripted
  long fail_first = 0;              // Failing; < 0 fails forever
};

inline std::unique_ptr<ChatClient> mock_endpoint(const MockBehavior& b) {
  switch (b.kind) {
    case MockBehavior::Kind::Echo: return std::make_unique<EchoClient>();
    case MockBehavior::Kind::Scripted: return std::make_unique<ScriptedClient>(b.script);
    case MockBehavior::Kind::Failing: return std::make_unique<FailingClient>(b.fail_first);
  }
  return nullptr;
}

/// Reads a scripted-mock fixture: one response per non-empty line.
inline std::vector<std::string> read_script_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open mock script " + path);
  std::vector<std::string> out;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) out.push_back(line);
  }
  return out;
}

}  // namespace nstf
