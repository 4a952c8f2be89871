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

#include "nlcrf/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include "nlcrf/numerics.hpp"

namespace nlcrf {
namespace {

// Below this state count the k-wide loops run serially; the parallel
// regions would cost more than they save.
constexpr int kOmpMinStates = 24;

double entropy(std::span<const double> block) {
  double acc = 0.0;
  for (double v : block) {
    if (v > 0.0) acc -= v * std::log(v);
  }
  return acc;
}

int degree(const ChainLayout& layout, int i) {
  if (layout.length == 1) return 0;
  return (i == 0 || i == layout.length - 1) ? 1 : 2;
}

void require_interior(const MarginalVector& mu) {
  for (double v : mu.values()) {
    if (!(v >= kInteriorThreshold)) {
      throw std::domain_error("bethe_entropy_gradient: marginal entry not strictly interior");
    }
  }
}

}  // namespace

// Messages are kept in log space; each log-sum-exp subtracts the running
// maximum, so arbitrarily scaled potentials stay in range. alpha[i*k+b] sums
// over prefixes ending in state b, beta[i*k+a] over suffixes starting in a.
OracleResult marginal_oracle(const ChainModel& theta) {
  const ChainLayout& layout = theta.layout();
  const int n = layout.length;
  const int k = layout.num_states;

  std::vector<double> alpha(static_cast<size_t>(n) * k);
  std::vector<double> beta(static_cast<size_t>(n) * k);

  for (int a = 0; a < k; ++a) alpha[a] = theta.node(0)[a];
  for (int i = 1; i < n; ++i) {
    const double* prev = alpha.data() + static_cast<size_t>(i - 1) * k;
    double* cur = alpha.data() + static_cast<size_t>(i) * k;
    auto node = theta.node(i);
    auto edge = theta.edge(i - 1);
    // Entries are independent and each one is a serial scan over the
    // predecessor states, so the result does not depend on the thread count.
#pragma omp parallel for if (k >= kOmpMinStates)
    for (int b = 0; b < k; ++b) {
      double m = -std::numeric_limits<double>::infinity();
      for (int a = 0; a < k; ++a) m = std::max(m, prev[a] + edge[a * k + b]);
      double sum = 0.0;
      for (int a = 0; a < k; ++a) sum += std::exp(prev[a] + edge[a * k + b] - m);
      cur[b] = node[b] + m + std::log(sum);
    }
  }

  for (int a = 0; a < k; ++a) beta[static_cast<size_t>(n - 1) * k + a] = 0.0;
  for (int i = n - 2; i >= 0; --i) {
    const double* next = beta.data() + static_cast<size_t>(i + 1) * k;
    double* cur = beta.data() + static_cast<size_t>(i) * k;
    auto node = theta.node(i + 1);
    auto edge = theta.edge(i);
#pragma omp parallel for if (k >= kOmpMinStates)
    for (int a = 0; a < k; ++a) {
      double m = -std::numeric_limits<double>::infinity();
      for (int b = 0; b < k; ++b) m = std::max(m, edge[a * k + b] + node[b] + next[b]);
      double sum = 0.0;
      for (int b = 0; b < k; ++b) sum += std::exp(edge[a * k + b] + node[b] + next[b] - m);
      cur[a] = m + std::log(sum);
    }
  }

  OracleResult result{MarginalVector(layout), 0.0};
  result.log_partition =
      log_sum_exp(std::span<const double>(alpha.data() + static_cast<size_t>(n - 1) * k, k));

  // Fill each block with log-scores and softmax-normalize it in place;
  // blocks are independent of one another.
#pragma omp parallel for if (layout.num_blocks() >= 4 && k >= kOmpMinStates)
  for (int blk = 0; blk < layout.num_blocks(); ++blk) {
    if (blk < n) {
      const int i = blk;
      auto out = result.marginals.node(i);
      for (int a = 0; a < k; ++a) {
        out[a] = alpha[static_cast<size_t>(i) * k + a] + beta[static_cast<size_t>(i) * k + a];
      }
      softmax_in_place(out);
    } else {
      const int i = blk - n;
      auto out = result.marginals.edge(i);
      auto edge = theta.edge(i);
      auto node = theta.node(i + 1);
      for (int a = 0; a < k; ++a) {
        for (int b = 0; b < k; ++b) {
          out[a * k + b] = alpha[static_cast<size_t>(i) * k + a] + edge[a * k + b] + node[b] +
                           beta[static_cast<size_t>(i + 1) * k + b];
        }
      }
      softmax_in_place(out);
    }
  }
  return result;
}

double log_partition(const ChainModel& theta) { return marginal_oracle(theta).log_partition; }

Labeling map_decode(const ChainModel& theta) {
  const ChainLayout& layout = theta.layout();
  const int n = layout.length;
  const int k = layout.num_states;

  std::vector<double> delta(static_cast<size_t>(n) * k);
  std::vector<int> back(static_cast<size_t>(n) * k, 0);

  for (int a = 0; a < k; ++a) delta[a] = theta.node(0)[a];
  for (int i = 1; i < n; ++i) {
    const double* prev = delta.data() + static_cast<size_t>(i - 1) * k;
    double* cur = delta.data() + static_cast<size_t>(i) * k;
    int* ptr = back.data() + static_cast<size_t>(i) * k;
    auto node = theta.node(i);
    auto edge = theta.edge(i - 1);
#pragma omp parallel for if (k >= kOmpMinStates)
    for (int b = 0; b < k; ++b) {
      // Upward scan with a strict > keeps the smallest argmax on ties.
      double best = prev[0] + edge[b];
      int best_a = 0;
      for (int a = 1; a < k; ++a) {
        const double score = prev[a] + edge[a * k + b];
        if (score > best) {
          best = score;
          best_a = a;
        }
      }
      cur[b] = node[b] + best;
      ptr[b] = best_a;
    }
  }

  const double* last = delta.data() + static_cast<size_t>(n - 1) * k;
  int best_b = 0;
  for (int b = 1; b < k; ++b) {
    if (last[b] > last[best_b]) best_b = b;
  }

  Labeling y(n);
  y[n - 1] = best_b;
  for (int i = n - 1; i > 0; --i) y[i - 1] = back[static_cast<size_t>(i) * k + y[i]];
  return y;
}

double bethe_entropy(const MarginalVector& mu) {
  const ChainLayout& layout = mu.layout();
  std::vector<double> contribution(layout.num_blocks());
#pragma omp parallel for if (layout.num_blocks() >= 4 && layout.num_states >= kOmpMinStates)
  for (int blk = 0; blk < layout.num_blocks(); ++blk) {
    if (blk < layout.length) {
      contribution[blk] = -(degree(layout, blk) - 1) * entropy(mu.node(blk));
    } else {
      contribution[blk] = entropy(mu.edge(blk - layout.length));
    }
  }
  // Fixed-order reduction keeps the value independent of the thread count.
  double acc = 0.0;
  for (double c : contribution) acc += c;
  return acc;
}

MarginalVector bethe_entropy_gradient(const MarginalVector& mu) {
  require_interior(mu);
  const ChainLayout& layout = mu.layout();
  MarginalVector grad(layout);
#pragma omp parallel for if (layout.num_blocks() >= 4 && layout.num_states >= kOmpMinStates)
  for (int blk = 0; blk < layout.num_blocks(); ++blk) {
    if (blk < layout.length) {
      const double weight = degree(layout, blk) - 1;
      auto in = mu.node(blk);
      auto out = grad.node(blk);
      for (size_t j = 0; j < in.size(); ++j) out[j] = weight * (std::log(in[j]) + 1.0);
    } else {
      auto in = mu.edge(blk - layout.length);
      auto out = grad.edge(blk - layout.length);
      for (size_t j = 0; j < in.size(); ++j) out[j] = -(std::log(in[j]) + 1.0);
    }
  }
  return grad;
}

MarginalVector clamp_interior(const MarginalVector& mu, double floor) {
  const ChainLayout& layout = mu.layout();
  MarginalVector out = mu;
  auto fix_block = [floor](std::span<double> block) {
    double sum = 0.0;
    for (double& v : block) {
      v = std::clamp(v, floor, 1.0);
      sum += v;
    }
    // The renormalization can push an entry a hair back under the floor, so
    // clip once more; the resulting block-sum error is O(dim * floor).
    for (double& v : block) v = std::max(v / sum, floor);
  };
  for (int i = 0; i < layout.length; ++i) fix_block(out.node(i));
  for (int i = 0; i < layout.num_edges(); ++i) fix_block(out.edge(i));
  return out;
}

namespace reference {

// Straight-line serial implementations, written independently of the OpenMP
// kernels above so the equality tests compare two derivations.

OracleResult marginal_oracle(const ChainModel& theta) {
  const ChainLayout& layout = theta.layout();
  const int n = layout.length;
  const int k = layout.num_states;

  std::vector<std::vector<double>> alpha(n, std::vector<double>(k));
  std::vector<std::vector<double>> beta(n, std::vector<double>(k));
  std::vector<double> scratch(k);

  for (int a = 0; a < k; ++a) alpha[0][a] = theta.node(0)[a];
  for (int i = 1; i < n; ++i) {
    for (int b = 0; b < k; ++b) {
      for (int a = 0; a < k; ++a) scratch[a] = alpha[i - 1][a] + theta.edge_at(i - 1, a, b);
      alpha[i][b] = theta.node(i)[b] + log_sum_exp(scratch);
    }
  }
  for (int a = 0; a < k; ++a) beta[n - 1][a] = 0.0;
  for (int i = n - 2; i >= 0; --i) {
    for (int a = 0; a < k; ++a) {
      for (int b = 0; b < k; ++b) {
        scratch[b] = theta.edge_at(i, a, b) + theta.node(i + 1)[b] + beta[i + 1][b];
      }
      beta[i][a] = log_sum_exp(scratch);
    }
  }

  OracleResult result{MarginalVector(layout), log_sum_exp(alpha[n - 1])};
  for (int i = 0; i < n; ++i) {
    auto out = result.marginals.node(i);
    for (int a = 0; a < k; ++a) out[a] = alpha[i][a] + beta[i][a];
    softmax_in_place(out);
  }
  for (int i = 0; i + 1 < n; ++i) {
    auto out = result.marginals.edge(i);
    for (int a = 0; a < k; ++a) {
      for (int b = 0; b < k; ++b) {
        out[a * k + b] =
            alpha[i][a] + theta.edge_at(i, a, b) + theta.node(i + 1)[b] + beta[i + 1][b];
      }
    }
    softmax_in_place(out);
  }
  return result;
}

double bethe_entropy(const MarginalVector& mu) {
  const ChainLayout& layout = mu.layout();
  double acc = 0.0;
  for (int i = 0; i < layout.length; ++i) {
    acc -= (degree(layout, i) - 1) * entropy(mu.node(i));
  }
  for (int i = 0; i < layout.num_edges(); ++i) acc += entropy(mu.edge(i));
  return acc;
}

MarginalVector bethe_entropy_gradient(const MarginalVector& mu) {
  require_interior(mu);
  const ChainLayout& layout = mu.layout();
  MarginalVector grad(layout);
  for (int i = 0; i < layout.length; ++i) {
    const double weight = degree(layout, i) - 1;
    auto in = mu.node(i);
    auto out = grad.node(i);
    for (size_t j = 0; j < in.size(); ++j) out[j] = weight * (std::log(in[j]) + 1.0);
  }
  for (int i = 0; i < layout.num_edges(); ++i) {
    auto in = mu.edge(i);
    auto out = grad.edge(i);
    for (size_t j = 0; j < in.size(); ++j) out[j] = -(std::log(in[j]) + 1.0);
  }
  return grad;
}

}  // namespace reference

}  // namespace nlcrf
