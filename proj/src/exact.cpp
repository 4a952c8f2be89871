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

#include "nlcrf/exact.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include "nlcrf/numerics.hpp"
#include "nlcrf/oracle.hpp"
#include "nlcrf/rng.hpp"

namespace nlcrf {
namespace {

size_t labeling_count(const ChainLayout& layout) {
  double count = 1.0;
  for (int i = 0; i < layout.length; ++i) count *= layout.num_states;
  if (count > kMaxEnumeration) {
    throw std::invalid_argument("enumeration over " + std::to_string(count) +
                                " labelings refused (limit " + std::to_string(kMaxEnumeration) +
                                ")");
  }
  return static_cast<size_t>(count);
}

double labeling_score(const ChainModel& theta, const Labeling& y) {
  double score = theta.node(0)[y[0]];
  for (int i = 1; i < theta.length(); ++i) {
    score += theta.node(i)[y[i]] + theta.edge_at(i - 1, y[i - 1], y[i]);
  }
  return score;
}

}  // namespace

bool enumeration_feasible(const ChainLayout& layout) {
  double count = 1.0;
  for (int i = 0; i < layout.length; ++i) {
    count *= layout.num_states;
    if (count > kMaxEnumeration) return false;
  }
  return true;
}

void for_each_labeling(const ChainLayout& layout, const std::function<void(const Labeling&)>& fn) {
  labeling_count(layout);
  Labeling y(layout.length, 0);
  while (true) {
    fn(y);
    int i = layout.length - 1;
    while (i >= 0 && ++y[i] == layout.num_states) y[i--] = 0;
    if (i < 0) return;
  }
}

JointTable enumerate_distribution(const ChainModel& theta) {
  const ChainLayout& layout = theta.layout();
  JointTable table{layout, {}};
  table.probabilities.reserve(labeling_count(layout));

  double max_score = -std::numeric_limits<double>::infinity();
  for_each_labeling(layout, [&](const Labeling& y) {
    max_score = std::max(max_score, labeling_score(theta, y));
  });
  double z = 0.0;
  for_each_labeling(layout, [&](const Labeling& y) {
    const double w = std::exp(labeling_score(theta, y) - max_score);
    table.probabilities.push_back(w);
    z += w;
  });
  for (double& p : table.probabilities) p /= z;
  return table;
}

MarginalVector exact_marginals(const JointTable& table) {
  const ChainLayout& layout = table.layout;
  if (table.probabilities.size() != labeling_count(layout)) {
    throw std::invalid_argument("exact_marginals: table size does not match layout");
  }
  MarginalVector mu(layout, 0.0);
  size_t index = 0;
  for_each_labeling(layout, [&](const Labeling& y) {
    const double w = table.probabilities[index++];
    if (w != 0.0) {
      for (int i = 0; i < layout.length; ++i) mu.values()[layout.node_index(i, y[i])] += w;
      for (int i = 0; i + 1 < layout.length; ++i) {
        mu.values()[layout.edge_index(i, y[i], y[i + 1])] += w;
      }
    }
  });
  return mu;
}

MarginalVector exact_marginals(const ChainModel& theta) {
  return exact_marginals(enumerate_distribution(theta));
}

double exact_log_partition(const ChainModel& theta) {
  const ChainLayout& layout = theta.layout();
  labeling_count(layout);
  double max_score = -std::numeric_limits<double>::infinity();
  for_each_labeling(layout, [&](const Labeling& y) {
    max_score = std::max(max_score, labeling_score(theta, y));
  });
  double acc = 0.0;
  for_each_labeling(layout, [&](const Labeling& y) {
    acc += std::exp(labeling_score(theta, y) - max_score);
  });
  return max_score + std::log(acc);
}

Labeling exact_map(const ChainModel& theta) {
  const ChainLayout& layout = theta.layout();
  labeling_count(layout);
  Labeling best;
  double best_score = -std::numeric_limits<double>::infinity();
  for_each_labeling(layout, [&](const Labeling& y) {
    const double score = labeling_score(theta, y);
    if (score > best_score) {  // strict: lexicographic order keeps first tie
      best_score = score;
      best = y;
    }
  });
  return best;
}

namespace {

// Shared state of one entropic-ascent run over the full simplex.
struct FullSimplexState {
  const ChainModel& theta;
  const EnergyFunction& energy;
  std::vector<double> scores;  // <theta, S(y)> per labeling, lexicographic

  explicit FullSimplexState(const ChainModel& model, const EnergyFunction& e)
      : theta(model), energy(e) {
    scores.reserve(labeling_count(model.layout()));
    for_each_labeling(model.layout(),
                      [&](const Labeling& y) { scores.push_back(labeling_score(model, y)); });
  }

  // mu(q) from normalized probabilities q.
  MarginalVector moments(const std::vector<double>& q) const {
    const ChainLayout& layout = theta.layout();
    MarginalVector mu(layout, 0.0);
    size_t index = 0;
    for_each_labeling(layout, [&](const Labeling& y) {
      const double w = q[index++];
      if (w > 0.0) {
        for (int i = 0; i < layout.length; ++i) mu.values()[layout.node_index(i, y[i])] += w;
        for (int i = 0; i + 1 < layout.length; ++i) {
          mu.values()[layout.edge_index(i, y[i], y[i + 1])] += w;
        }
      }
    });
    return mu;
  }

  // F(q) = sum_y q_y score_y + H(q) - L(mu(q)).
  double objective(const std::vector<double>& q, const MarginalVector& mu) const {
    double acc = 0.0;
    for (size_t y = 0; y < q.size(); ++y) {
      acc += q[y] * scores[y];
      if (q[y] > 0.0) acc -= q[y] * std::log(q[y]);
    }
    return acc - energy.evaluate(mu).value;
  }

  // Modified scores score_y - <grad L(mu), S(y)> driving the fixed point
  // q propto exp(modified score).
  std::vector<double> targets(const MarginalVector& mu) const {
    const ChainLayout& layout = theta.layout();
    const MarginalVector grad = energy.evaluate(mu).gradient;
    std::vector<double> target(scores.size());
    size_t index = 0;
    for_each_labeling(layout, [&](const Labeling& y) {
      double corr = grad.values()[layout.node_index(0, y[0])];
      for (int i = 1; i < layout.length; ++i) {
        corr += grad.values()[layout.node_index(i, y[i])] +
                grad.values()[layout.edge_index(i - 1, y[i - 1], y[i])];
      }
      target[index] = scores[index] - corr;
      ++index;
    });
    return target;
  }
};

std::vector<double> normalized_exp(const std::vector<double>& log_weights) {
  std::vector<double> q(log_weights.size());
  double m = -std::numeric_limits<double>::infinity();
  for (double v : log_weights) m = std::max(m, v);
  double sum = 0.0;
  for (size_t y = 0; y < q.size(); ++y) {
    q[y] = std::exp(log_weights[y] - m);
    sum += q[y];
  }
  for (double& v : q) v /= sum;
  return q;
}

}  // namespace

ExactSolveResult solve_augmented_exact(const ChainModel& theta, const EnergyFunction& energy,
                                       const ExactSolveOptions& options) {
  const ChainLayout& layout = theta.layout();
  const FullSimplexState state(theta, energy);
  const size_t count = state.scores.size();

  ExactSolveResult best;
  double best_objective = -std::numeric_limits<double>::infinity();
  const int runs = std::max(1, options.restarts);
  Rng rng(options.seed);

  for (int run = 0; run < runs; ++run) {
    std::vector<double> log_q(count, 0.0);
    if (run > 0) {
      for (double& v : log_q) v = 3.0 * rng.normal();
    }
    std::vector<double> q = normalized_exp(log_q);
    MarginalVector mu = state.moments(q);
    double f = state.objective(q, mu);
    bool converged = false;
    int iterations = 0;

    for (int t = 1; t <= options.max_iters; ++t) {
      iterations = t;
      const std::vector<double> target = state.targets(mu);
      const std::vector<double> fixed_point = normalized_exp(target);
      double residual = 0.0;
      for (size_t y = 0; y < count; ++y) residual += std::abs(fixed_point[y] - q[y]);
      if (residual < options.tol) {
        converged = true;
        break;
      }

      // Interpolate in log space toward the fixed point; full steps are
      // usually fine, backtracking covers non-convex energies.
      double eta = 1.0;
      bool accepted = false;
      while (eta >= 1e-10) {
        std::vector<double> trial_log(count);
        for (size_t y = 0; y < count; ++y) {
          const double base = q[y] > 0.0 ? std::log(q[y]) : -745.0;  // exp underflow edge
          trial_log[y] = (1.0 - eta) * base + eta * target[y];
        }
        std::vector<double> trial = normalized_exp(trial_log);
        MarginalVector trial_mu = state.moments(trial);
        const double trial_f = state.objective(trial, trial_mu);
        if (trial_f >= f) {
          q = std::move(trial);
          mu = std::move(trial_mu);
          f = trial_f;
          accepted = true;
          break;
        }
        eta *= 0.5;
      }
      if (!accepted) {
        converged = true;  // no direction of improvement at line-search resolution
        break;
      }
    }

    // Report the polytope-side objective so the value lines up with the
    // iterative solvers; at stationary points it matches F(q).
    const double polytope_objective =
        dot(theta, mu) + bethe_entropy(mu) - energy.evaluate(mu).value;
    if (polytope_objective > best_objective) {
      best_objective = polytope_objective;
      best.marginals = std::move(mu);
      best.objective = polytope_objective;
      best.iterations = iterations;
      best.converged = converged;
    }
  }
  (void)layout;
  return best;
}

}  // namespace nlcrf
