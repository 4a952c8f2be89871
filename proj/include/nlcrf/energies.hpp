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

#ifndef NLCRF_ENERGIES_HPP_
#define NLCRF_ENERGIES_HPP_

#include <iosfwd>
#include <string>
#include <vector>

#include "nlcrf/energy.hpp"

namespace nlcrf {

enum class MeasurementLoss {
  kSmoothedHinge,  // see smoothed_hinge()
  kSquare,         // z^2 / 2
};

double measurement_loss_value(MeasurementLoss loss, double z);
double measurement_loss_derivative(MeasurementLoss loss, double z);

/// One linear measurement a^T mu + b fed through a scalar loss.
/// `coefficients` holds (flat index into mu, coefficient) pairs.
struct Measurement {
  MeasurementLoss loss = MeasurementLoss::kSmoothedHinge;
  double offset = 0.0;
  std::vector<std::pair<int, double>> coefficients;
};

/// L(mu) = sum_j psi_j * loss_j(a_j^T mu + b_j). Weighted soft penalties on
/// linear statistics of the marginals; the workhorse for count and margin
/// constraints. Convex whenever all weights are nonnegative.
class MeasurementEnergy final : public EnergyFunction {
 public:
  MeasurementEnergy(ChainLayout layout, std::vector<Measurement> measurements,
                    std::vector<double> psi);

  EnergyEvaluation evaluate(const MarginalVector& mu) const override;
  int num_psi() const override { return static_cast<int>(psi_.size()); }
  std::vector<double> psi() const override { return psi_; }
  std::unique_ptr<EnergyFunction> with_psi(std::span<const double> psi) const override;
  using EnergyFunction::psi_grad;
  std::vector<double> psi_grad(const MarginalVector& mu,
                               std::span<const double> residual) const override;
  bool is_convex() const override;
  std::optional<double> smoothness_bound() const override;
  std::unique_ptr<EnergyFunction> clone() const override;

  const std::vector<Measurement>& measurements() const { return measurements_; }
  const ChainLayout& layout() const { return layout_; }

  /// a_j^T mu + b_j for every measurement.
  std::vector<double> margins(const MarginalVector& mu) const;

 private:
  ChainLayout layout_;
  std::vector<Measurement> measurements_;
  std::vector<double> psi_;
};

/// A set of node positions coupled by a coefficient tensor. `table` has
/// k^(positions.size()) entries, row-major in the listed position order.
struct Cluster {
  std::vector<int> positions;
  std::vector<double> table;
};

/// L(mu) = -sum_c <table_c, outer product of the cluster's node marginals>.
/// Rewards (or penalizes) joint label configurations of non-adjacent nodes;
/// multilinear, hence non-convex for clusters of two or more nodes. The
/// tunable weights are all table entries, concatenated cluster by cluster.
class MeanFieldEnergy final : public EnergyFunction {
 public:
  MeanFieldEnergy(ChainLayout layout, std::vector<Cluster> clusters);

  EnergyEvaluation evaluate(const MarginalVector& mu) const override;
  int num_psi() const override;
  std::vector<double> psi() const override;
  std::unique_ptr<EnergyFunction> with_psi(std::span<const double> psi) const override;
  using EnergyFunction::psi_grad;
  std::vector<double> psi_grad(const MarginalVector& mu,
                               std::span<const double> residual) const override;
  bool is_convex() const override;
  std::optional<double> smoothness_bound() const override;
  bool psi_nonnegative() const override { return false; }  // table entries carry sign
  std::unique_ptr<EnergyFunction> clone() const override;

  const std::vector<Cluster>& clusters() const { return clusters_; }
  const ChainLayout& layout() const { return layout_; }

 private:
  ChainLayout layout_;
  std::vector<Cluster> clusters_;
};

enum class PrototypeMode {
  kUnigram,  // distance taken between expected label counts
  kFull,     // distance taken between whole node-marginal sequences
};

/// L(mu) = psi * min_i || prototype_i - features(mu) ||_1, a pull toward the
/// nearest of a set of exemplars. Unigram mode compares the summed node
/// marginals (a k-vector of expected counts); full mode compares the
/// concatenated node blocks against prototypes of the same length and
/// ignores prototypes of other lengths. Piecewise linear and non-convex.
class PrototypeEnergy final : public EnergyFunction {
 public:
  /// Every prototype is a flat vector: k entries in unigram mode,
  /// length * k entries in full mode (any length >= 1). Only the state count
  /// is fixed; one instance serves chains of every length, full-mode
  /// prototypes of other lengths simply never match.
  PrototypeEnergy(int num_states, PrototypeMode mode,
                  std::vector<std::vector<double>> prototypes, double psi);

  EnergyEvaluation evaluate(const MarginalVector& mu) const override;
  int num_psi() const override { return 1; }
  std::vector<double> psi() const override { return {psi_}; }
  std::unique_ptr<EnergyFunction> with_psi(std::span<const double> psi) const override;
  using EnergyFunction::psi_grad;
  std::vector<double> psi_grad(const MarginalVector& mu,
                               std::span<const double> residual) const override;
  bool is_convex() const override { return false; }
  std::optional<double> smoothness_bound() const override { return std::nullopt; }
  std::unique_ptr<EnergyFunction> clone() const override;

  PrototypeMode mode() const { return mode_; }
  const std::vector<std::vector<double>>& prototypes() const { return prototypes_; }
  int num_states() const { return num_states_; }

  /// Index of the closest prototype (ties toward the lowest index), or -1 if
  /// none is applicable to this chain length.
  int nearest_prototype(const MarginalVector& mu) const;

 private:
  // L_1 distance minimization; d holds features(mu) - prototype.
  struct Nearest {
    int index = -1;
    double distance = 0.0;
    std::vector<double> sign;  // subgradient of the distance wrt features
  };
  Nearest nearest(const MarginalVector& mu) const;
  std::vector<double> distance_subgradient(const MarginalVector& mu) const;

  int num_states_;
  PrototypeMode mode_;
  std::vector<std::vector<double>> prototypes_;
  double psi_;
};

/// An observed count tied to one marginal entry.
struct CountObservation {
  int flat_index = 0;
  double count = 0.0;  // nonnegative
};

/// L(mu) = sum_obs [ scale * mu_e - count * log(scale * mu_e) ], the negative
/// Poisson log-likelihood (up to constants) of counts whose rates are
/// proportional to marginal entries. Entries are floored at kRateFloor inside
/// the log and the division. Convex; the tunable weight is the scale.
class PoissonEnergy final : public EnergyFunction {
 public:
  static constexpr double kRateFloor = 1e-8;

  PoissonEnergy(ChainLayout layout, std::vector<CountObservation> observations, double scale);

  EnergyEvaluation evaluate(const MarginalVector& mu) const override;
  int num_psi() const override { return 1; }
  std::vector<double> psi() const override { return {scale_}; }
  std::unique_ptr<EnergyFunction> with_psi(std::span<const double> psi) const override;
  using EnergyFunction::psi_grad;
  std::vector<double> psi_grad(const MarginalVector& mu,
                               std::span<const double> residual) const override;
  bool is_convex() const override { return true; }
  std::optional<double> smoothness_bound() const override { return std::nullopt; }
  std::unique_ptr<EnergyFunction> clone() const override;

  const std::vector<CountObservation>& observations() const { return observations_; }
  double scale() const { return scale_; }
  const ChainLayout& layout() const { return layout_; }

 private:
  ChainLayout layout_;
  std::vector<CountObservation> observations_;
  double scale_;
};

/// Text serialization for every energy family (including ZeroEnergy).
/// Format documented in docs/FORMATS.md. The layout travels with the energy
/// so a loaded instance can be validated against a model before use.
void save_energy(const EnergyFunction& energy, const ChainLayout& layout, std::ostream& out);
std::unique_ptr<EnergyFunction> load_energy(std::istream& in, ChainLayout* layout_out = nullptr);
void save_energy_file(const EnergyFunction& energy, const ChainLayout& layout,
                      const std::string& path);
std::unique_ptr<EnergyFunction> load_energy_file(const std::string& path,
                                                 ChainLayout* layout_out = nullptr);

}  // namespace nlcrf

#endif  // NLCRF_ENERGIES_HPP_
