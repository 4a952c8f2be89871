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

#include "nlcrf/chain_model.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "nlcrf/text_io.hpp"

namespace nlcrf {

ChainModel::ChainModel(ChainLayout layout, std::vector<double> values)
    : layout_(layout), values_(std::move(values)) {
  if (values_.size() != layout_.dim()) {
    throw std::invalid_argument("ChainModel: values size " + std::to_string(values_.size()) +
                                " does not match layout dim " + std::to_string(layout_.dim()));
  }
}

bool ChainModel::all_finite() const {
  for (double v : values_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

MarginalVector::MarginalVector(ChainLayout layout, std::vector<double> values)
    : layout_(layout), values_(std::move(values)) {
  if (values_.size() != layout_.dim()) {
    throw std::invalid_argument("MarginalVector: values size " + std::to_string(values_.size()) +
                                " does not match layout dim " + std::to_string(layout_.dim()));
  }
}

SufficientStatistics sufficient_statistics(const ChainLayout& layout, const Labeling& y) {
  if (static_cast<int>(y.size()) != layout.length) {
    throw std::invalid_argument("sufficient_statistics: labeling length " +
                                std::to_string(y.size()) + " does not match chain length " +
                                std::to_string(layout.length));
  }
  for (int label : y) {
    if (label < 0 || label >= layout.num_states) {
      throw std::invalid_argument("sufficient_statistics: label " + std::to_string(label) +
                                  " out of range [0, " + std::to_string(layout.num_states) + ")");
    }
  }
  MarginalVector s(layout);
  for (int i = 0; i < layout.length; ++i) s.values()[layout.node_index(i, y[i])] = 1.0;
  for (int i = 0; i + 1 < layout.length; ++i) s.values()[layout.edge_index(i, y[i], y[i + 1])] = 1.0;
  return SufficientStatistics{std::move(s)};
}

SufficientStatistics sufficient_statistics(const ChainModel& model, const Labeling& y) {
  return sufficient_statistics(model.layout(), y);
}

void throw_if_dimension_mismatch(const ChainLayout& a, const ChainLayout& b, const char* what) {
  if (!(a == b)) {
    throw std::invalid_argument(std::string(what) + ": layout mismatch (" +
                                std::to_string(a.length) + "," + std::to_string(a.num_states) +
                                ") vs (" + std::to_string(b.length) + "," +
                                std::to_string(b.num_states) + ")");
  }
}

double dot(const ChainModel& theta, const MarginalVector& mu) {
  throw_if_dimension_mismatch(theta.layout(), mu.layout(), "dot");
  const auto& a = theta.values();
  const auto& b = mu.values();
  double acc = 0.0;
  for (size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

double dot(const ChainModel& theta, const SufficientStatistics& s) {
  return dot(theta, s.indicators);
}

MarginalCheck validate_marginals(const MarginalVector& mu) {
  const ChainLayout& layout = mu.layout();
  const int k = layout.num_states;
  MarginalCheck check;

  auto block_violation = [&](std::span<const double> block) {
    double sum = 0.0;
    double worst = 0.0;
    for (double v : block) {
      sum += v;
      if (v < 0.0) worst = std::max(worst, -v);
    }
    worst = std::max(worst, std::abs(sum - 1.0));
    return worst;
  };

  for (int i = 0; i < layout.length; ++i) {
    check.max_simplex_violation = std::max(check.max_simplex_violation, block_violation(mu.node(i)));
  }
  for (int i = 0; i < layout.num_edges(); ++i) {
    check.max_simplex_violation = std::max(check.max_simplex_violation, block_violation(mu.edge(i)));
  }

  // Edge marginal E_i must have row sums equal to node block i and column
  // sums equal to node block i+1.
  for (int i = 0; i < layout.num_edges(); ++i) {
    auto edge = mu.edge(i);
    auto left = mu.node(i);
    auto right = mu.node(i + 1);
    for (int a = 0; a < k; ++a) {
      double row = 0.0;
      for (int b = 0; b < k; ++b) row += edge[a * k + b];
      check.max_consistency_violation =
          std::max(check.max_consistency_violation, std::abs(row - left[a]));
    }
    for (int b = 0; b < k; ++b) {
      double col = 0.0;
      for (int a = 0; a < k; ++a) col += edge[a * k + b];
      check.max_consistency_violation =
          std::max(check.max_consistency_violation, std::abs(col - right[b]));
    }
  }

  check.ok = check.max_simplex_violation <= kSimplexTolerance &&
             check.max_consistency_violation <= kConsistencyTolerance;
  return check;
}

MarginalVector uniform_marginals(const ChainLayout& layout) {
  MarginalVector mu(layout);
  const double node_value = 1.0 / layout.num_states;
  const double edge_value = node_value * node_value;
  for (int i = 0; i < layout.length; ++i) {
    for (double& v : mu.node(i)) v = node_value;
  }
  for (int i = 0; i < layout.num_edges(); ++i) {
    for (double& v : mu.edge(i)) v = edge_value;
  }
  return mu;
}

void save_model(const ChainModel& model, std::ostream& out) {
  out << "nlcrf-model 1\n";
  out << model.length() << ' ' << model.num_states() << '\n';
  const ChainLayout& layout = model.layout();
  for (int i = 0; i < layout.length; ++i) {
    write_doubles(out, model.node(i));
  }
  for (int i = 0; i < layout.num_edges(); ++i) {
    write_doubles(out, model.edge(i));
  }
}

ChainModel load_model(std::istream& in) {
  expect_header(in, "nlcrf-model", 1);
  int n = 0, k = 0;
  if (!(in >> n >> k)) throw std::runtime_error("model file: missing dimensions");
  ChainLayout layout(n, k);
  std::vector<double> values(layout.dim());
  for (double& v : values) {
    if (!(in >> v)) throw std::runtime_error("model file: truncated value list");
  }
  return ChainModel(layout, std::move(values));
}

void save_model_file(const ChainModel& model, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  save_model(model, out);
  if (!out) throw std::runtime_error("write failed: " + path);
}

ChainModel load_model_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open for reading: " + path);
  return load_model(in);
}

}  // namespace nlcrf
