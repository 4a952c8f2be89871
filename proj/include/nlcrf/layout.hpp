// Copyright 2026 the nonlocal-crf authors
//
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

#ifndef NLCRF_LAYOUT_HPP_
#define NLCRF_LAYOUT_HPP_

#include <cstddef>
#include <stdexcept>

namespace nlcrf {

/// Shared flat indexing for everything that lives over a chain: parameters,
/// marginals and sufficient statistics all use one vector with the n node
/// blocks (k entries each) first, followed by the n-1 edge blocks (k*k
/// entries, row-major: source state major, destination state minor).
struct ChainLayout {
  int length = 0;      // n, number of nodes
  int num_states = 0;  // k, labels per node

  ChainLayout() = default;
  ChainLayout(int n, int k) : length(n), num_states(k) {
    if (n < 1) throw std::invalid_argument("ChainLayout: length must be >= 1");
    if (k < 2) throw std::invalid_argument("ChainLayout: num_states must be >= 2");
  }

  int num_edges() const { return length - 1; }
  int num_blocks() const { return length + num_edges(); }

  std::size_t node_size() const { return static_cast<std::size_t>(num_states); }
  std::size_t edge_size() const { return node_size() * node_size(); }

  std::size_t node_offset(int i) const { return static_cast<std::size_t>(i) * node_size(); }
  std::size_t edge_offset(int i) const {
    return static_cast<std::size_t>(length) * node_size() + static_cast<std::size_t>(i) * edge_size();
  }

  /// Index of entry (a, b) inside edge block i.
  std::size_t edge_index(int i, int a, int b) const {
    return edge_offset(i) + static_cast<std::size_t>(a) * node_size() + static_cast<std::size_t>(b);
  }
  std::size_t node_index(int i, int a) const { return node_offset(i) + static_cast<std::size_t>(a); }

  std::size_t dim() const {
    return static_cast<std::size_t>(length) * node_size() + static_cast<std::size_t>(num_edges()) * edge_size();
  }

  bool operator==(const ChainLayout&) const = default;
};

}  // namespace nlcrf

#endif  // NLCRF_LAYOUT_HPP_
