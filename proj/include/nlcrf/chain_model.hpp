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

#ifndef NLCRF_CHAIN_MODEL_HPP_
#define NLCRF_CHAIN_MODEL_HPP_

#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "nlcrf/layout.hpp"

namespace nlcrf {

using Labeling = std::vector<int>;

/// Log-potentials of a linear-chain MRF: P(y) proportional to
/// exp(sum_i node_i(y_i) + sum_i edge_i(y_i, y_{i+1})).
class ChainModel {
 public:
  ChainModel() = default;
  explicit ChainModel(ChainLayout layout, double fill = 0.0)
      : layout_(layout), values_(layout.dim(), fill) {}
  ChainModel(ChainLayout layout, std::vector<double> values);

  const ChainLayout& layout() const { return layout_; }
  int length() const { return layout_.length; }
  int num_states() const { return layout_.num_states; }

  std::span<double> node(int i) { return {values_.data() + layout_.node_offset(i), layout_.node_size()}; }
  std::span<const double> node(int i) const {
    return {values_.data() + layout_.node_offset(i), layout_.node_size()};
  }
  std::span<double> edge(int i) { return {values_.data() + layout_.edge_offset(i), layout_.edge_size()}; }
  std::span<const double> edge(int i) const {
    return {values_.data() + layout_.edge_offset(i), layout_.edge_size()};
  }

  double edge_at(int i, int a, int b) const { return values_[layout_.edge_index(i, a, b)]; }

  std::vector<double>& values() { return values_; }
  const std::vector<double>& values() const { return values_; }

  bool all_finite() const;

 private:
  ChainLayout layout_;
  std::vector<double> values_;
};

/// Concatenated node and edge marginals mu, the optimization variable.
/// Same flat layout as ChainModel.
class MarginalVector {
 public:
  MarginalVector() = default;
  explicit MarginalVector(ChainLayout layout, double fill = 0.0)
      : layout_(layout), values_(layout.dim(), fill) {}
  MarginalVector(ChainLayout layout, std::vector<double> values);

  const ChainLayout& layout() const { return layout_; }
  int length() const { return layout_.length; }
  int num_states() const { return layout_.num_states; }

  std::span<double> node(int i) { return {values_.data() + layout_.node_offset(i), layout_.node_size()}; }
  std::span<const double> node(int i) const {
    return {values_.data() + layout_.node_offset(i), layout_.node_size()};
  }
  std::span<double> edge(int i) { return {values_.data() + layout_.edge_offset(i), layout_.edge_size()}; }
  std::span<const double> edge(int i) const {
    return {values_.data() + layout_.edge_offset(i), layout_.edge_size()};
  }

  std::vector<double>& values() { return values_; }
  const std::vector<double>& values() const { return values_; }

 private:
  ChainLayout layout_;
  std::vector<double> values_;
};

/// 0-1 indicator vector S(y); a vertex of the marginal polytope.
struct SufficientStatistics {
  MarginalVector indicators;

  const ChainLayout& layout() const { return indicators.layout(); }
  const std::vector<double>& values() const { return indicators.values(); }
};

/// S(y): one-hot node and edge indicators for a labeling.
SufficientStatistics sufficient_statistics(const ChainModel& model, const Labeling& y);
SufficientStatistics sufficient_statistics(const ChainLayout& layout, const Labeling& y);

/// <theta, mu>: sum over all node and edge entries of potential * marginal.
double dot(const ChainModel& theta, const MarginalVector& mu);
double dot(const ChainModel& theta, const SufficientStatistics& s);

/// Diagnostic report from validate_marginals.
struct MarginalCheck {
  double max_simplex_violation = 0.0;      // |block sum - 1| and max(-entry, 0)
  double max_consistency_violation = 0.0;  // edge row/col sums vs node blocks
  bool ok = false;
};

inline constexpr double kSimplexTolerance = 1e-9;
inline constexpr double kConsistencyTolerance = 1e-8;

/// Checks entrywise nonnegativity, per-block normalization and local
/// consistency of the edge blocks against the adjacent node blocks.
MarginalCheck validate_marginals(const MarginalVector& mu);

/// All node blocks 1/k, all edge blocks 1/k^2.
MarginalVector uniform_marginals(const ChainLayout& layout);

void throw_if_dimension_mismatch(const ChainLayout& a, const ChainLayout& b, const char* what);

/// Text serialization; finite values round-trip bit-identically.
/// Format documented in docs/FORMATS.md.
void save_model(const ChainModel& model, std::ostream& out);
ChainModel load_model(std::istream& in);
void save_model_file(const ChainModel& model, const std::string& path);
ChainModel load_model_file(const std::string& path);

}  // namespace nlcrf

#endif  // NLCRF_CHAIN_MODEL_HPP_
