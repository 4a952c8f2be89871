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

#include "nlcrf/learning.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include "nlcrf/energies.hpp"
#include "nlcrf/rng.hpp"
#include "nlcrf/text_io.hpp"

namespace nlcrf {

void validate_dataset(const Dataset& d) {
  if (d.num_states < 2) throw std::invalid_argument("dataset: need at least two states");
  if (d.feature_dim < 0) throw std::invalid_argument("dataset: negative feature dim");
  for (const Example& x : d.examples) {
    if (x.labels.empty()) throw std::invalid_argument("dataset: empty example");
    if (x.node_features.size() != x.labels.size()) {
      throw std::invalid_argument("dataset: features/labels length mismatch");
    }
    for (int y : x.labels) {
      if (y < 0 || y >= d.num_states) throw std::invalid_argument("dataset: label out of range");
    }
    for (const auto& f : x.node_features) {
      if (static_cast<int>(f.size()) != d.feature_dim) {
        throw std::invalid_argument("dataset: ragged feature vectors");
      }
    }
  }
}

ThetaParametrization::ThetaParametrization(int feature_dim_in, int num_states_in)
    : feature_dim(feature_dim_in), num_states(num_states_in) {
  // Validate before sizing anything: a negative dimension cast to size_t
  // would otherwise surface as a bad_alloc instead of a usable error.
  if (feature_dim < 0 || num_states < 2) {
    throw std::invalid_argument("ThetaParametrization: bad dimensions");
  }
  node_weights.assign(static_cast<size_t>(feature_dim) * num_states, 0.0);
  edge_weights.assign(static_cast<size_t>(num_states) * num_states, 0.0);
}

ChainModel theta_of(const Example& x, const ThetaParametrization& p) {
  const int n = x.length();
  const int k = p.num_states;
  ChainModel model(ChainLayout{n, k});
  for (int i = 0; i < n; ++i) {
    const std::vector<double>& f = x.node_features[i];
    if (static_cast<int>(f.size()) != p.feature_dim) {
      throw std::invalid_argument("theta_of: feature dimension mismatch");
    }
    std::span<double> node = model.node(i);
    for (int d = 0; d < p.feature_dim; ++d) {
      const double fd = f[d];
      if (fd == 0.0) continue;
      for (int a = 0; a < k; ++a) node[a] += fd * p.node_weight(d, a);
    }
  }
  for (int i = 0; i + 1 < n; ++i) {
    std::span<double> edge = model.edge(i);
    std::copy(p.edge_weights.begin(), p.edge_weights.end(), edge.begin());
  }
  return model;
}

void accumulate_theta_gradient(const Example& x, const MarginalVector& flat_grad,
                               ThetaParametrization* grad) {
  const int n = flat_grad.length();
  const int k = grad->num_states;
  if (flat_grad.num_states() != k || x.length() != n) {
    throw std::invalid_argument("accumulate_theta_gradient: shape mismatch");
  }
  for (int i = 0; i < n; ++i) {
    std::span<const double> node = flat_grad.node(i);
    const std::vector<double>& f = x.node_features[i];
    for (int d = 0; d < grad->feature_dim; ++d) {
      const double fd = f[d];
      if (fd == 0.0) continue;
      for (int a = 0; a < k; ++a) grad->node_weight(d, a) += fd * node[a];
    }
  }
  for (int i = 0; i + 1 < n; ++i) {
    std::span<const double> edge = flat_grad.edge(i);
    for (size_t e = 0; e < edge.size(); ++e) grad->edge_weights[e] += edge[e];
  }
}

PsiParametrization PsiParametrization::make_constant(std::vector<double> psi) {
  PsiParametrization p;
  p.featurized = false;
  p.num_psi = static_cast<int>(psi.size());
  p.constant = std::move(psi);
  return p;
}

PsiParametrization PsiParametrization::make_featurized(int phi_dim, int num_psi, PsiLink link) {
  if (phi_dim < 1 || num_psi < 1) {
    throw std::invalid_argument("PsiParametrization: bad featurized dimensions");
  }
  PsiParametrization p;
  p.featurized = true;
  p.phi_dim = phi_dim;
  p.num_psi = num_psi;
  p.weights.assign(static_cast<size_t>(phi_dim) * num_psi, 0.0);
  p.link = link;
  return p;
}

namespace {

double softplus(double z) {
  // Stable on both tails.
  if (z > 30.0) return z;
  if (z < -30.0) return std::exp(z);
  return std::log1p(std::exp(z));
}

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

}  // namespace

std::vector<double> PsiParametrization::realize(std::span<const double> phi,
                                                bool nonnegative) const {
  if (!featurized) {
    std::vector<double> psi = constant;
    if (nonnegative) {
      for (double& v : psi) v = std::max(v, 0.0);
    }
    return psi;
  }
  if (static_cast<int>(phi.size()) != phi_dim) {
    throw std::invalid_argument("PsiParametrization::realize: phi dimension mismatch");
  }
  std::vector<double> psi(static_cast<size_t>(num_psi), 0.0);
  for (int j = 0; j < num_psi; ++j) {
    double z = 0.0;
    for (int f = 0; f < phi_dim; ++f) z += weight(j, f) * phi[f];
    switch (link) {
      case PsiLink::kIdentityProject:
        psi[j] = nonnegative ? std::max(z, 0.0) : z;
        break;
      case PsiLink::kSoftplus:
        psi[j] = softplus(z);
        break;
    }
  }
  return psi;
}

void PsiParametrization::accumulate_gradient(std::span<const double> phi,
                                             std::span<const double> psi_grad,
                                             PsiParametrization* grad) const {
  if (static_cast<int>(psi_grad.size()) != num_psi) {
    throw std::invalid_argument("PsiParametrization: gradient size mismatch");
  }
  if (!featurized) {
    for (int j = 0; j < num_psi; ++j) grad->constant[j] += psi_grad[j];
    return;
  }
  for (int j = 0; j < num_psi; ++j) {
    double z = 0.0;
    for (int f = 0; f < phi_dim; ++f) z += weight(j, f) * phi[f];
    double slope = 1.0;
    switch (link) {
      case PsiLink::kIdentityProject:
        // Subgradient 0 on the clipped side keeps clipped components frozen
        // until the data pushes them back across zero.
        slope = (z > 0.0) ? 1.0 : 0.0;
        break;
      case PsiLink::kSoftplus:
        slope = sigmoid(z);
        break;
    }
    if (slope == 0.0) continue;
    const double scaled = slope * psi_grad[j];
    for (int f = 0; f < phi_dim; ++f) grad->weight(j, f) += scaled * phi[f];
  }
}

MeanMapFeatures::MeanMapFeatures(int num_features, int input_dim, double bandwidth,
                                 std::uint64_t seed)
    : num_features_(num_features), input_dim_(input_dim), bandwidth_(bandwidth), seed_(seed) {
  if (num_features < 1 || input_dim < 1) {
    throw std::invalid_argument("MeanMapFeatures: bad dimensions");
  }
  if (!(bandwidth > 0.0)) throw std::invalid_argument("MeanMapFeatures: bandwidth must be > 0");
  Rng rng(seed);
  projection_.resize(static_cast<size_t>(num_features) * input_dim);
  for (double& v : projection_) v = rng.normal();
  phase_.resize(static_cast<size_t>(num_features));
  for (double& v : phase_) v = rng.uniform() * 2.0 * std::numbers::pi;
}

std::vector<double> MeanMapFeatures::operator()(const Example& x) const {
  const int n = x.length();
  if (n == 0) throw std::invalid_argument("MeanMapFeatures: empty example");
  std::vector<double> out(static_cast<size_t>(num_features_), 0.0);
  const double scale = std::sqrt(2.0 / num_features_);
  for (int i = 0; i < n; ++i) {
    const std::vector<double>& f = x.node_features[i];
    if (static_cast<int>(f.size()) != input_dim_) {
      throw std::invalid_argument("MeanMapFeatures: input dimension mismatch");
    }
    for (int d = 0; d < num_features_; ++d) {
      double z = phase_[d];
      const double* row = projection_.data() + static_cast<size_t>(d) * input_dim_;
      for (int j = 0; j < input_dim_; ++j) z += row[j] * f[j] / bandwidth_;
      out[d] += std::cos(z);
    }
  }
  for (double& v : out) v *= scale / n;
  return out;
}

std::unique_ptr<EnergyFunction> realize_energy(const EnergyFunction& energy_template,
                                               const PsiParametrization& psi, const Example& x,
                                               const MeanMapFeatures* mm) {
  if (psi.num_psi != energy_template.num_psi()) {
    throw std::invalid_argument("realize_energy: psi count does not match the energy");
  }
  if (!psi.featurized) {
    const std::vector<double> v = psi.realize({}, energy_template.psi_nonnegative());
    return energy_template.with_psi(v);
  }
  if (mm == nullptr) {
    throw std::invalid_argument("realize_energy: featurized psi needs mean-map features");
  }
  const std::vector<double> phi = (*mm)(x);
  const std::vector<double> v = psi.realize(phi, energy_template.psi_nonnegative());
  return energy_template.with_psi(v);
}

namespace {

// Everything fixed per example across a training run.
struct ExampleContext {
  ChainLayout layout{1, 2};
  SufficientStatistics stats;
  std::vector<double> phi;  // empty unless psi is featurized
};

std::vector<ExampleContext> build_contexts(const Dataset& d, const PsiParametrization& psi,
                                           const MeanMapFeatures* mm) {
  if (psi.featurized && mm == nullptr) {
    throw std::invalid_argument("train: featurized psi needs mean-map features");
  }
  std::vector<ExampleContext> ctx;
  ctx.reserve(d.examples.size());
  for (const Example& x : d.examples) {
    ExampleContext c;
    c.layout = ChainLayout{x.length(), d.num_states};
    c.stats = sufficient_statistics(c.layout, x.labels);
    if (psi.featurized) c.phi = (*mm)(x);
    ctx.push_back(std::move(c));
  }
  return ctx;
}

std::unique_ptr<EnergyFunction> energy_for(const EnergyFunction& tmpl,
                                           const PsiParametrization& psi,
                                           const ExampleContext& c) {
  const std::vector<double> v =
      psi.featurized ? psi.realize(c.phi, tmpl.psi_nonnegative())
                     : psi.realize({}, tmpl.psi_nonnegative());
  return tmpl.with_psi(v);
}

// rho = theta(x) - grad L at mu; the surrogate's chain parameters.
ChainModel corrected_model(const ChainModel& model, const EnergyFunction& energy,
                           const MarginalVector& mu) {
  const EnergyEvaluation eval = energy.evaluate(mu);
  ChainModel rho = model;
  for (size_t i = 0; i < rho.values().size(); ++i) rho.values()[i] -= eval.gradient.values()[i];
  return rho;
}

double example_surrogate(const ChainModel& rho, const SufficientStatistics& stats) {
  return dot(rho, stats) - log_partition(rho);
}

struct StepScale {
  double theta = 0.0;
  double psi = 0.0;
};

StepScale step_scale(const LearnerConfig& cfg, long step_index) {
  double s = 1.0;
  if (cfg.schedule == StepSchedule::kInvSqrt) s = 1.0 / std::sqrt(static_cast<double>(step_index + 1));
  return {cfg.theta_step * s, cfg.psi_step * s};
}

void apply_theta_step(ThetaParametrization* p, const ThetaParametrization& grad, double step) {
  for (size_t i = 0; i < p->node_weights.size(); ++i) p->node_weights[i] += step * grad.node_weights[i];
  for (size_t i = 0; i < p->edge_weights.size(); ++i) p->edge_weights[i] += step * grad.edge_weights[i];
}

void apply_psi_step(PsiParametrization* p, const PsiParametrization& grad, double step,
                    bool nonnegative) {
  if (!p->featurized) {
    for (size_t i = 0; i < p->constant.size(); ++i) {
      p->constant[i] += step * grad.constant[i];
      if (nonnegative) p->constant[i] = std::max(p->constant[i], 0.0);
    }
    return;
  }
  // Featurized weights are free; nonnegativity lives in the link.
  for (size_t i = 0; i < p->weights.size(); ++i) p->weights[i] += step * grad.weights[i];
}

PsiParametrization zero_like(const PsiParametrization& p) {
  PsiParametrization g = p;
  std::fill(g.constant.begin(), g.constant.end(), 0.0);
  std::fill(g.weights.begin(), g.weights.end(), 0.0);
  return g;
}

bool diverged(const std::vector<double>& history, double factor) {
  if (history.size() < 2) return false;
  const double first = history.front();
  return history.back() < first - factor * (1.0 + std::abs(first));
}

bool plateaued(const std::vector<double>& history, double tol) {
  if (tol <= 0.0 || history.size() < 2) return false;
  const double a = history[history.size() - 2];
  const double b = history.back();
  return std::abs(b - a) < tol * (1.0 + std::abs(b));
}

double dataset_surrogate(const Dataset& d, const std::vector<ExampleContext>& ctx,
                         const ThetaParametrization& theta, const PsiParametrization& psi,
                         const EnergyFunction& tmpl, const LearnerConfig& cfg,
                         long* solve_count) {
  double total = 0.0;
  for (int i = 0; i < d.size(); ++i) {
    const ChainModel model = theta_of(d.examples[i], theta);
    const std::unique_ptr<EnergyFunction> energy = energy_for(tmpl, psi, ctx[i]);
    const SolveResult res = solve(model, *energy, cfg.solver);
    ++*solve_count;
    const ChainModel rho = corrected_model(model, *energy, res.marginals);
    total += example_surrogate(rho, ctx[i].stats);
  }
  return total / d.size();
}

}  // namespace

TrainResult train_double_loop(const Dataset& d, const ThetaParametrization& theta0,
                              const PsiParametrization& psi0,
                              const EnergyFunction& energy_template,
                              const MeanMapFeatures* mean_map_features, const LearnerConfig& cfg) {
  validate_dataset(d);
  const std::vector<ExampleContext> ctx = build_contexts(d, psi0, mean_map_features);
  const int num_examples = d.size();

  TrainResult result;
  result.theta = theta0;
  result.psi = psi0;

  // marginals_version[i] tracks the update count current when example i was
  // last solved; gradients may only linearize around marginals from the
  // current epoch's solve pass.
  std::vector<MarginalVector> mu(num_examples);
  std::vector<long> marginals_version(num_examples, -1);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    // Fresh inference for every example under the current parameters.
    double surrogate = 0.0;
    for (int i = 0; i < num_examples; ++i) {
      const ChainModel model = theta_of(d.examples[i], result.theta);
      const std::unique_ptr<EnergyFunction> energy = energy_for(energy_template, result.psi, ctx[i]);
      const SolveResult res = solve(model, *energy, cfg.solver);
      ++result.solve_count;
      mu[i] = res.marginals;
      marginals_version[i] = result.update_count;
      const ChainModel rho = corrected_model(model, *energy, mu[i]);
      surrogate += example_surrogate(rho, ctx[i].stats);
    }
    result.surrogate_history.push_back(surrogate / num_examples);
    if (diverged(result.surrogate_history, cfg.divergence_factor)) {
      result.diverged = true;
      break;
    }
    if (plateaued(result.surrogate_history, cfg.plateau_tol)) break;
    if (epoch + 1 == cfg.epochs) break;  // final pass only refreshes the history

    const long epoch_version = result.update_count;
    for (int s = 0; s < cfg.inner_steps; ++s) {
      ThetaParametrization theta_grad(result.theta.feature_dim, result.theta.num_states);
      PsiParametrization psi_grad_acc = zero_like(result.psi);
      for (int i = 0; i < num_examples; ++i) {
        if (marginals_version[i] != epoch_version) ++result.stale_updates;
        const ChainModel model = theta_of(d.examples[i], result.theta);
        const std::unique_ptr<EnergyFunction> energy =
            energy_for(energy_template, result.psi, ctx[i]);
        // Model marginals are recomputed at the current parameters for every
        // inner step; only the linearization point mu[i] is held fixed.
        const ChainModel rho = corrected_model(model, *energy, mu[i]);
        const OracleResult oracle = marginal_oracle(rho);
        MarginalVector residual(ctx[i].layout);
        for (size_t e = 0; e < residual.values().size(); ++e) {
          residual.values()[e] = ctx[i].stats.values()[e] - oracle.marginals.values()[e];
        }
        if (cfg.learn_theta) accumulate_theta_gradient(d.examples[i], residual, &theta_grad);
        if (cfg.learn_psi && result.psi.num_psi > 0) {
          const std::vector<double> g = energy->psi_grad(mu[i], residual.values());
          result.psi.accumulate_gradient(ctx[i].phi, g, &psi_grad_acc);
        }
      }
      const StepScale scale = step_scale(cfg, result.update_count);
      if (cfg.learn_theta) {
        apply_theta_step(&result.theta, theta_grad, scale.theta / num_examples);
      }
      if (cfg.learn_psi && result.psi.num_psi > 0) {
        apply_psi_step(&result.psi, psi_grad_acc, scale.psi / num_examples,
                       energy_template.psi_nonnegative());
      }
      ++result.update_count;
    }
  }
  return result;
}

TrainResult train_doubly_stochastic(const Dataset& d, const ThetaParametrization& theta0,
                                    const PsiParametrization& psi0,
                                    const EnergyFunction& energy_template,
                                    const MeanMapFeatures* mean_map_features,
                                    const LearnerConfig& cfg) {
  validate_dataset(d);
  const std::vector<ExampleContext> ctx = build_contexts(d, psi0, mean_map_features);
  const int num_examples = d.size();
  Rng rng(cfg.seed);

  TrainResult result;
  result.theta = theta0;
  result.psi = psi0;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    result.surrogate_history.push_back(dataset_surrogate(d, ctx, result.theta, result.psi,
                                                         energy_template, cfg,
                                                         &result.solve_count));
    if (diverged(result.surrogate_history, cfg.divergence_factor)) {
      result.diverged = true;
      break;
    }
    if (plateaued(result.surrogate_history, cfg.plateau_tol)) break;
    if (epoch + 1 == cfg.epochs) break;

    for (int s = 0; s < num_examples; ++s) {
      const int i = rng.uniform_int(num_examples);
      // Solve, update once, and the next step's solve sees the new
      // parameters; marginals never cross an update.
      const long version_before = result.update_count;
      const ChainModel model = theta_of(d.examples[i], result.theta);
      const std::unique_ptr<EnergyFunction> energy =
          energy_for(energy_template, result.psi, ctx[i]);
      const SolveResult res = solve(model, *energy, cfg.solver);
      ++result.solve_count;
      if (version_before != result.update_count) ++result.stale_updates;

      MarginalVector residual(ctx[i].layout);
      for (size_t e = 0; e < residual.values().size(); ++e) {
        residual.values()[e] = ctx[i].stats.values()[e] - res.marginals.values()[e];
      }
      const StepScale scale = step_scale(cfg, result.update_count);
      if (cfg.learn_theta) {
        ThetaParametrization theta_grad(result.theta.feature_dim, result.theta.num_states);
        accumulate_theta_gradient(d.examples[i], residual, &theta_grad);
        apply_theta_step(&result.theta, theta_grad, scale.theta);
      }
      if (cfg.learn_psi && result.psi.num_psi > 0) {
        PsiParametrization psi_grad_acc = zero_like(result.psi);
        const std::vector<double> g = energy->psi_grad(res.marginals, residual.values());
        result.psi.accumulate_gradient(ctx[i].phi, g, &psi_grad_acc);
        apply_psi_step(&result.psi, psi_grad_acc, scale.psi, energy_template.psi_nonnegative());
      }
      ++result.update_count;
    }
  }
  return result;
}

TrainResult train(const Dataset& d, const ThetaParametrization& theta0,
                  const PsiParametrization& psi0, const EnergyFunction& energy_template,
                  const MeanMapFeatures* mean_map_features, const LearnerConfig& cfg) {
  switch (cfg.algorithm) {
    case LearnerAlgorithm::kDoubleLoop:
      return train_double_loop(d, theta0, psi0, energy_template, mean_map_features, cfg);
    case LearnerAlgorithm::kDoublyStochastic:
      return train_doubly_stochastic(d, theta0, psi0, energy_template, mean_map_features, cfg);
  }
  throw std::logic_error("train: unknown algorithm");
}

double surrogate_log_likelihood(const Dataset& d, const ThetaParametrization& theta,
                                const PsiParametrization& psi,
                                const EnergyFunction& energy_template,
                                const MeanMapFeatures* mean_map_features,
                                const SolverOptions& solver) {
  validate_dataset(d);
  const std::vector<ExampleContext> ctx = build_contexts(d, psi, mean_map_features);
  LearnerConfig cfg;
  cfg.solver = solver;
  long solves = 0;
  return dataset_surrogate(d, ctx, theta, psi, energy_template, cfg, &solves);
}

namespace {

struct Segment {
  int start = 0;
  int end = 0;  // inclusive
  int label = 0;
  bool operator==(const Segment&) const = default;
};

std::vector<Segment> segments_of(const Labeling& y) {
  std::vector<Segment> out;
  int start = 0;
  for (int i = 1; i <= static_cast<int>(y.size()); ++i) {
    if (i == static_cast<int>(y.size()) || y[i] != y[start]) {
      out.push_back({start, i - 1, y[start]});
      start = i;
    }
  }
  return out;
}

}  // namespace

EvalMetrics evaluate(const Dataset& d, const ThetaParametrization& theta,
                     const PsiParametrization& psi, const EnergyFunction& energy_template,
                     const MeanMapFeatures* mean_map_features, const SolverOptions& solver) {
  validate_dataset(d);
  EvalMetrics metrics;
  metrics.num_examples = d.size();
  long tokens = 0;
  long correct = 0;
  long gold_segments = 0;
  long pred_segments = 0;
  long matched_segments = 0;
  long violations = 0;
  long measured = 0;

  for (const Example& x : d.examples) {
    const ChainModel model = theta_of(x, theta);
    const std::unique_ptr<EnergyFunction> energy =
        realize_energy(energy_template, psi, x, mean_map_features);
    const Labeling y_hat = map_predict(model, *energy, solver);

    tokens += x.length();
    for (int i = 0; i < x.length(); ++i) {
      if (y_hat[i] == x.labels[i]) ++correct;
    }
    const std::vector<Segment> gold = segments_of(x.labels);
    const std::vector<Segment> pred = segments_of(y_hat);
    gold_segments += static_cast<long>(gold.size());
    pred_segments += static_cast<long>(pred.size());
    for (const Segment& s : pred) {
      if (std::find(gold.begin(), gold.end(), s) != gold.end()) ++matched_segments;
    }

    if (const auto* m = dynamic_cast<const MeasurementEnergy*>(energy.get())) {
      const SufficientStatistics stats = sufficient_statistics(model.layout(), y_hat);
      const std::vector<double> margins = m->margins(stats.indicators);
      measured += static_cast<long>(margins.size());
      for (double z : margins) {
        if (z < 1.0) ++violations;
      }
    }
  }

  metrics.token_accuracy = tokens > 0 ? static_cast<double>(correct) / tokens : 0.0;
  const double denom = static_cast<double>(gold_segments + pred_segments);
  metrics.segment_f1 = denom > 0.0 ? 2.0 * matched_segments / denom : 0.0;
  metrics.mean_violations = static_cast<double>(violations) / std::max(1, d.size());
  metrics.satisfaction_rate =
      measured > 0 ? 1.0 - static_cast<double>(violations) / measured : 1.0;
  return metrics;
}

// --- text round trips ----------------------------------------------------

void save_dataset(std::ostream& out, const Dataset& d) {
  out << "nlcrf-dataset 1 " << d.num_states << ' ' << d.feature_dim << '\n';
  for (const Example& x : d.examples) {
    out << x.length();
    for (int y : x.labels) out << ' ' << y;
    for (const auto& f : x.node_features) {
      for (double v : f) out << ' ' << format_double(v);
    }
    out << '\n';
  }
}

Dataset load_dataset(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("dataset: empty input");
  std::istringstream header(line);
  std::string tag;
  int version = 0;
  Dataset d;
  header >> tag >> version >> d.num_states >> d.feature_dim;
  if (!header || tag != "nlcrf-dataset" || version != 1) {
    throw std::runtime_error("dataset: bad header: " + line);
  }
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream row(line);
    int n = 0;
    row >> n;
    if (!row || n < 1) throw std::runtime_error("dataset: bad example length");
    Example x;
    x.labels.resize(n);
    for (int i = 0; i < n; ++i) row >> x.labels[i];
    x.node_features.assign(n, std::vector<double>(d.feature_dim));
    for (int i = 0; i < n; ++i) {
      for (int f = 0; f < d.feature_dim; ++f) row >> x.node_features[i][f];
    }
    if (!row) throw std::runtime_error("dataset: truncated example row");
    d.examples.push_back(std::move(x));
  }
  validate_dataset(d);
  return d;
}

void save_dataset_file(const std::string& path, const Dataset& d) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  save_dataset(out, d);
}

Dataset load_dataset_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path);
  return load_dataset(in);
}

void save_params(std::ostream& out, const ThetaParametrization& theta,
                 const PsiParametrization& psi) {
  out << "nlcrf-params 1\n";
  out << "theta " << theta.feature_dim << ' ' << theta.num_states << '\n';
  write_doubles(out, theta.node_weights);
  write_doubles(out, theta.edge_weights);
  if (psi.featurized) {
    out << "psi featurized " << psi.phi_dim << ' ' << psi.num_psi << ' '
        << (psi.link == PsiLink::kSoftplus ? "softplus" : "identity-project") << '\n';
    write_doubles(out, psi.weights);
  } else {
    out << "psi constant " << psi.num_psi << '\n';
    write_doubles(out, psi.constant);
  }
}

namespace {

std::vector<double> read_doubles(std::istream& in, size_t count, const char* what) {
  std::vector<double> v(count);
  for (size_t i = 0; i < count; ++i) {
    if (!(in >> v[i])) throw std::runtime_error(std::string("params: truncated ") + what);
  }
  return v;
}

}  // namespace

void load_params(std::istream& in, ThetaParametrization* theta, PsiParametrization* psi) {
  expect_header(in, "nlcrf-params", 1);
  std::string tag;
  in >> tag;
  if (tag != "theta") throw std::runtime_error("params: expected theta block");
  int feature_dim = 0;
  int num_states = 0;
  in >> feature_dim >> num_states;
  if (!in) throw std::runtime_error("params: bad theta dimensions");
  ThetaParametrization t(feature_dim, num_states);
  t.node_weights = read_doubles(in, t.node_weights.size(), "node weights");
  t.edge_weights = read_doubles(in, t.edge_weights.size(), "edge weights");
  in >> tag;
  if (tag != "psi") throw std::runtime_error("params: expected psi block");
  std::string mode;
  in >> mode;
  PsiParametrization p;
  if (mode == "constant") {
    int m = 0;
    in >> m;
    if (!in || m < 0) throw std::runtime_error("params: bad psi count");
    p = PsiParametrization::make_constant(read_doubles(in, static_cast<size_t>(m), "psi"));
  } else if (mode == "featurized") {
    int phi_dim = 0;
    int num_psi = 0;
    std::string link_name;
    in >> phi_dim >> num_psi >> link_name;
    if (!in) throw std::runtime_error("params: bad featurized psi header");
    PsiLink link;
    if (link_name == "softplus") {
      link = PsiLink::kSoftplus;
    } else if (link_name == "identity-project") {
      link = PsiLink::kIdentityProject;
    } else {
      throw std::runtime_error("params: unknown psi link " + link_name);
    }
    p = PsiParametrization::make_featurized(phi_dim, num_psi, link);
    p.weights = read_doubles(in, p.weights.size(), "psi weights");
  } else {
    throw std::runtime_error("params: unknown psi mode " + mode);
  }
  *theta = std::move(t);
  *psi = std::move(p);
}

void save_params_file(const std::string& path, const ThetaParametrization& theta,
                      const PsiParametrization& psi) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  save_params(out, theta, psi);
}

void load_params_file(const std::string& path, ThetaParametrization* theta,
                      PsiParametrization* psi) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path);
  load_params(in, theta, psi);
}

}  // namespace nlcrf
