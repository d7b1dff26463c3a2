// nstf/align.hpp

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

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace nstf {

enum class EditOp : std::uint8_t { Hit, Sub, Del, Ins };

/// Counts of a minimal unit-cost alignment of a hypothesis against a
/// reference. Del means a reference token missing from the hypothesis; Ins
/// means an extra hypothesis token.
struct Alignment {
  std::size_t hits = 0;
  std::size_t subs = 0;
  std::size_t dels = 0;
  std::size_t ins = 0;

  std::size_t errors() const { return subs + dels + ins; }
  std::size_t ref_len() const { return hits + subs + dels; }
  std::size_t hyp_len() const { return hits + subs + ins; }

  bool operator==(const Alignment&) const = default;
};

/// Levenshtein alignment path from the start of both sequences to the end.
///
/// Uses the full (m+1)x(n+1) cost table and a backtrace from the bottom-right
/// cell. When several predecessors give the same cost the backtrace prefers
/// the diagonal (hit or substitution), then deletion, then insertion, so the
/// returned counts are deterministic.
template <class T>
std::vector<EditOp> align_path(std::span<const T> ref, std::span<const T> hyp) {
  const std::size_t m = ref.size();
  const std::size_t n = hyp.size();
  const std::size_t width = n + 1;
  std::vector<std::uint32_t> cost((m + 1) * width);
  auto at = [&](std::size_t i, std::size_t j) -> std::uint32_t& {
    return cost[i * width + j];
  };

  for (std::size_t j = 0; j <= n; ++j) at(0, j) = static_cast<std::uint32_t>(j);
  for (std::size_t i = 1; i <= m; ++i) {
    at(i, 0) = static_cast<std::uint32_t>(i);
    for (std::size_t j = 1; j <= n; ++j) {
      const std::uint32_t diag = at(i - 1, j - 1) + (ref[i - 1] == hyp[j - 1] ? 0u : 1u);
      const std::uint32_t up = at(i - 1, j) + 1;
      const std::uint32_t left = at(i, j - 1) + 1;
      at(i, j) = std::min({diag, up, left});
    }
  }

  std::vector<EditOp> ops;
  ops.reserve(std::max(m, n));
  std::size_t i = m, j = n;
  while (i > 0 || j > 0) {
    if (i > 0 && j > 0) {
      const bool same = ref[i - 1] == hyp[j - 1];
      if (at(i, j) == at(i - 1, j - 1) + (same ? 0u : 1u)) {
        ops.push_back(same ? EditOp::Hit : EditOp::Sub);
        --i;
        --j;
        continue;
      }
    }
    if (i > 0 && at(i, j) == at(i - 1, j) + 1) {
      ops.push_back(EditOp::Del);
      --i;
    } else {
      ops.push_back(EditOp::Ins);
      --j;
    }
  }
  std::reverse(ops.begin(), ops.end());
  return ops;
}

inline Alignment count_ops(std::span<const EditOp> ops) {
  Alignment a;
  for (EditOp op : ops) {
    switch (op) {
      case EditOp::Hit: ++a.hits; break;
      case EditOp::Sub: ++a.subs; break;
      case EditOp::Del: ++a.dels; break;
      case EditOp::Ins: ++a.ins; break;
    }
  }
  return a;
}

template <class T>
Alignment align(std::span<const T> ref, std::span<const T> hyp) {
  const auto ops = align_path(ref, hyp);
  return count_ops(ops);
}

template <class T>
Alignment align(const std::vector<T>& ref, const std::vector<T>& hyp) {
  return align(std::span<const T>(ref), std::span<const T>(hyp));
}

}  // namespace nstf
