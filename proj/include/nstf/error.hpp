// nstf/error.hpp

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

#pragma once

#include <cstddef>
#include <iostream>
#include <mutex>
#include <sstream>
#include <stdexcept>
#include <string>

namespace nstf {

/// Bad input data or configuration. Maps to exit code 1 in the CLI.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// File could not be opened, read or written. Maps to exit code 2.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Manifest line that failed to parse or violated an invariant.
class ManifestError : public ValidationError {
 public:
  ManifestError(const std::string& what, std::size_t line)
      : ValidationError(what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

/// Unrecoverable endpoint failure (bad credentials, bad config, unreachable
/// host). Aborts the whole run; maps to exit code 3.
class EndpointAbort : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Recoverable failure of one chat-completion request; the batch is retried.
class TransportError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace log {

enum class Level { Debug = 0, Info = 1, Warn = 2, Error = 3, Off = 4 };

inline Level& threshold() {
  static Level level = Level::Info;
  return level;
}

inline std::mutex& sink_mutex() {
  static std::mutex m;
  return m;
}

inline void write(Level level, const std::string& msg) {
  if (level < threshold()) return;
  static const char* const names[] = {"DEBUG", "LOG", "WARNING", "ERROR"};
  std::lock_guard<std::mutex> lock(sink_mutex());
  std::cerr << names[static_cast<int>(level)] << " (nstfilter) " << msg
            << '\n';
}

// Stream-style message collector: log::Message(Level::Warn) << "x " << 3;
class Message {
 public:
  explicit Message(Level level) : level_(level) {}
  ~Message() { write(level_, buf_.str()); }
  Message(const Message&) = delete;
  Message& operator=(const Message&) = delete;

  template <class T>
  Message& operator<<(const T& v) {
    buf_ << v;
    return *this;
  }

 private:
  Level level_;
  std::ostringstream buf_;
};

}  // namespace log

#define NSTF_LOG ::nstf::log::Message(::nstf::log::Level::Info)
#define NSTF_WARN ::nstf::log::Message(::nstf::log::Level::Warn)
#define NSTF_ERR ::nstf::log::Message(::nstf::log::Level::Error)

}  // namespace nstf
