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

#ifndef NLCRF_LEARNING_HPP_
#define NLCRF_LEARNING_HPP_

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "nlcrf/chain_model.hpp"
#include "nlcrf/energy.hpp"
#include "nlcrf/projected_inference.hpp"

namespace nlcrf {

/// One labeled chain: a label per position and a feature vector per position.
/// All examples in a dataset share the state count and feature dimension;
/// lengths may differ.
struct Example {
  Labeling labels;
  std::vector<std::vector<double>> node_features;

  int length() const { return static_cast<int>(labels.size()); }
};

struct Dataset {
  int num_states = 0;
  int feature_dim = 0;
  std::vector<Example> examples;

  int size() const { return static_cast<int>(examples.size()); }
};

/// Throws std::invalid_argument on ragged features, label range errors, or
/// empty examples.
void validate_dataset(const Dataset& d);

/// Linear chain potentials: node score (i, a) = <features_i, column a of W>,
/// edge scores from one k x k table shared by every position (and every
/// example, whatever its length).
struct ThetaParametrization {
  int feature_dim = 0;
  int num_states = 0;
  std::vector<double> node_weights;  // feature_dim x k, row-major
  std::vector<double> edge_weights;  // k x k, row-major

  ThetaParametrization() = default;
  ThetaParametrization(int feature_dim_in, int num_states_in);

  double& node_weight(int f, int a) { return node_weights[static_cast<size_t>(f) * num_states + a]; }
  double node_weight(int f, int a) const {
    return node_weights[static_cast<size_t>(f) * num_states + a];
  }
  double& edge_weight(int a, int b) { return edge_weights[static_cast<size_t>(a) * num_states + b]; }
  double edge_weight(int a, int b) const {
    return edge_weights[static_cast<size_t>(a) * num_states + b];
  }
};

/// Instantiates the chain potentials for one example.
ChainModel theta_of(const Example& x, const ThetaParametrization& p);

/// Adds the pullback of a flat-layout gradient (typically S(y) - m) through
/// theta_of into parameter space: node weights get feature-weighted sums,
/// the tied edge table gets the sum over positions.
void accumulate_theta_gradient(const Example& x, const MarginalVector& flat_grad,
                               ThetaParametrization* grad);

enum class PsiLink {
  kIdentityProject,  // psi = w . phi, clipped at zero when the energy demands it
  kSoftplus,         // psi = log(1 + exp(w . phi)), always positive
};

/// Energy weights, either one shared vector or a per-input linear map
/// psi(x) = link(W^T phi(x)) from global features phi.
struct PsiParametrization {
  bool featurized = false;
  std::vector<double> constant;  // used when !featurized

  int phi_dim = 0;
  int num_psi = 0;
  std::vector<double> weights;  // num_psi x phi_dim, row-major; used when featurized
  PsiLink link = PsiLink::kIdentityProject;

  static PsiParametrization make_constant(std::vector<double> psi);
  static PsiParametrization make_featurized(int phi_dim, int num_psi, PsiLink link);

  double& weight(int j, int f) { return weights[static_cast<size_t>(j) * phi_dim + f]; }
  double weight(int j, int f) const { return weights[static_cast<size_t>(j) * phi_dim + f]; }

  /// Realized weights for one input. `nonnegative` applies the identity
  /// link's projection (softplus is positive regardless). In constant mode
  /// phi is ignored.
  std::vector<double> realize(std::span<const double> phi, bool nonnegative) const;

  /// Adds dL/dpsi pulled back through the link into parameter space; `phi`
  /// must be the same features `realize` saw. No-op adjustments where the
  /// identity link is clipped. Constant mode accumulates into `constant`.
  void accumulate_gradient(std::span<const double> phi, std::span<const double> psi_grad,
                           PsiParametrization* grad) const;
};

/// Random Fourier features of the per-position inputs, averaged over the
/// chain. Rows of the projection are standard Gaussian, phases uniform on
/// [0, 2pi); the dot product of two outputs approximates the mean pairwise
/// Gaussian kernel value with width `bandwidth`.
class MeanMapFeatures {
 public:
  MeanMapFeatures(int num_features, int input_dim, double bandwidth, std::uint64_t seed);

  std::vector<double> operator()(const Example& x) const;

  int num_features() const { return num_features_; }
  int input_dim() const { return input_dim_; }
  double bandwidth() const { return bandwidth_; }
  std::uint64_t seed() const { return seed_; }

 private:
  int num_features_;
  int input_dim_;
  double bandwidth_;
  std::uint64_t seed_;
  std::vector<double> projection_;  // num_features x input_dim
  std::vector<double> phase_;       // num_features
};

inline std::vector<double> mean_map(const Example& x, const MeanMapFeatures& f) { return f(x); }

enum class LearnerAlgorithm {
  kDoubleLoop,        // full E-step, then several exact-gradient ascent steps
  kDoublyStochastic,  // one sampled example, one step, fresh solve every time
};

enum class StepSchedule { kConstant, kInvSqrt };

struct LearnerConfig {
  LearnerAlgorithm algorithm = LearnerAlgorithm::kDoublyStochastic;
  int epochs = 20;
  int inner_steps = 5;  // double-loop only
  double theta_step = 0.1;
  double psi_step = 0.01;
  StepSchedule schedule = StepSchedule::kConstant;
  std::uint64_t seed = 0;
  bool learn_theta = true;
  bool learn_psi = true;
  /// Abort when the surrogate drops below first - factor * (1 + |first|).
  double divergence_factor = 10.0;
  /// Stop early once successive surrogates differ by less than this
  /// (relative to 1 + |value|). Zero disables the plateau test.
  double plateau_tol = 0.0;
  SolverOptions solver;  // inference budget; defaults trimmed for learning

  LearnerConfig() {
    solver.max_iters = 30;
    solver.tol = 1e-6;
  }
};

struct TrainResult {
  ThetaParametrization theta;
  PsiParametrization psi;
  /// Mean per-example surrogate log-likelihood, one entry per completed
  /// epoch (measured on the epoch's fresh marginals, before its updates).
  std::vector<double> surrogate_history;
  bool diverged = false;
  /// Gradient steps taken against marginals solved under stale parameters.
  /// Both trainers re-solve first, so anything nonzero is a bug.
  int stale_updates = 0;
  long solve_count = 0;
  long update_count = 0;
};

/// Batch trainer: solves the projected inference problem for every example,
/// then runs `inner_steps` ascent steps on the resulting surrogate, each with
/// freshly recomputed model marginals m_i.
TrainResult train_double_loop(const Dataset& d, const ThetaParametrization& theta0,
                              const PsiParametrization& psi0,
                              const EnergyFunction& energy_template,
                              const MeanMapFeatures* mean_map_features, const LearnerConfig& cfg);

/// Online trainer: per step, sample an example, re-solve its marginals under
/// the current parameters, take one ascent step. An epoch is |d| steps.
TrainResult train_doubly_stochastic(const Dataset& d, const ThetaParametrization& theta0,
                                    const PsiParametrization& psi0,
                                    const EnergyFunction& energy_template,
                                    const MeanMapFeatures* mean_map_features,
                                    const LearnerConfig& cfg);

/// Dispatches on cfg.algorithm.
TrainResult train(const Dataset& d, const ThetaParametrization& theta0,
                  const PsiParametrization& psi0, const EnergyFunction& energy_template,
                  const MeanMapFeatures* mean_map_features, const LearnerConfig& cfg);

struct EvalMetrics {
  double token_accuracy = 0.0;
  double segment_f1 = 0.0;  // exact-boundary segments, micro-averaged
  /// Mean count per example of measurement margins below 1 at the predicted
  /// labeling; zero for energies without measurements.
  double mean_violations = 0.0;
  /// Fraction of (example, measurement) pairs with margin >= 1; 1 when there
  /// are no measurements.
  double satisfaction_rate = 1.0;
  int num_examples = 0;
};

/// Decodes every example with map_predict under the energy realized for it
/// and scores the predictions against the gold labels.
EvalMetrics evaluate(const Dataset& d, const ThetaParametrization& theta,
                     const PsiParametrization& psi, const EnergyFunction& energy_template,
                     const MeanMapFeatures* mean_map_features, const SolverOptions& solver);

/// Mean surrogate log-likelihood (1/N) sum_i [<rho_i, S(y_i)> - log Z(rho_i)]
/// at freshly solved marginals; the quantity the trainers ascend and report.
double surrogate_log_likelihood(const Dataset& d, const ThetaParametrization& theta,
                                const PsiParametrization& psi,
                                const EnergyFunction& energy_template,
                                const MeanMapFeatures* mean_map_features,
                                const SolverOptions& solver);

/// Realizes the energy for one example: constant mode shares one weight
/// vector, featurized mode maps the example's mean-map features through the
/// link. `mm` may be null in constant mode.
std::unique_ptr<EnergyFunction> realize_energy(const EnergyFunction& energy_template,
                                               const PsiParametrization& psi, const Example& x,
                                               const MeanMapFeatures* mm);

// --- text round trips ----------------------------------------------------

void save_dataset(std::ostream& out, const Dataset& d);
Dataset load_dataset(std::istream& in);
void save_dataset_file(const std::string& path, const Dataset& d);
Dataset load_dataset_file(const std::string& path);

void save_params(std::ostream& out, const ThetaParametrization& theta,
                 const PsiParametrization& psi);
void load_params(std::istream& in, ThetaParametrization* theta, PsiParametrization* psi);
void save_params_file(const std::string& path, const ThetaParametrization& theta,
                      const PsiParametrization& psi);
void load_params_file(const std::string& path, ThetaParametrization* theta,
                      PsiParametrization* psi);

}  // namespace nlcrf

#endif  // NLCRF_LEARNING_HPP_
