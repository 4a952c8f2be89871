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

#include "nlcrf/energies.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>

namespace nlcrf {
namespace {

void check_flat_index(const ChainLayout& layout, int index, const char* what) {
  if (index < 0 || static_cast<std::size_t>(index) >= layout.dim()) {
    throw std::invalid_argument(std::string(what) + ": flat index " + std::to_string(index) +
                                " out of range [0, " + std::to_string(layout.dim()) + ")");
  }
}

// Advances a mixed-radix tuple in row-major order; false after the last one.
bool next_tuple(std::vector<int>& j, int k) {
  for (int m = static_cast<int>(j.size()) - 1; m >= 0; --m) {
    if (++j[m] < k) return true;
    j[m] = 0;
  }
  return false;
}

size_t table_size(const ChainLayout& layout, const Cluster& cluster) {
  size_t size = 1;
  for (size_t m = 0; m < cluster.positions.size(); ++m) {
    size *= static_cast<size_t>(layout.num_states);
  }
  return size;
}

}  // namespace

double measurement_loss_value(MeasurementLoss loss, double z) {
  switch (loss) {
    case MeasurementLoss::kSmoothedHinge:
      return smoothed_hinge(z);
    case MeasurementLoss::kSquare:
      return 0.5 * z * z;
  }
  throw std::logic_error("measurement_loss_value: unknown loss");
}

double measurement_loss_derivative(MeasurementLoss loss, double z) {
  switch (loss) {
    case MeasurementLoss::kSmoothedHinge:
      return smoothed_hinge_derivative(z);
    case MeasurementLoss::kSquare:
      return z;
  }
  throw std::logic_error("measurement_loss_derivative: unknown loss");
}

MeasurementEnergy::MeasurementEnergy(ChainLayout layout, std::vector<Measurement> measurements,
                                     std::vector<double> psi)
    : layout_(layout), measurements_(std::move(measurements)), psi_(std::move(psi)) {
  if (psi_.size() != measurements_.size()) {
    throw std::invalid_argument("MeasurementEnergy: need one weight per measurement");
  }
  for (const Measurement& m : measurements_) {
    for (const auto& [index, coefficient] : m.coefficients) {
      (void)coefficient;
      check_flat_index(layout_, index, "MeasurementEnergy");
    }
  }
}

std::vector<double> MeasurementEnergy::margins(const MarginalVector& mu) const {
  throw_if_dimension_mismatch(layout_, mu.layout(), "MeasurementEnergy");
  std::vector<double> z(measurements_.size());
  for (size_t j = 0; j < measurements_.size(); ++j) {
    double acc = measurements_[j].offset;
    for (const auto& [index, coefficient] : measurements_[j].coefficients) {
      acc += coefficient * mu.values()[index];
    }
    z[j] = acc;
  }
  return z;
}

EnergyEvaluation MeasurementEnergy::evaluate(const MarginalVector& mu) const {
  const std::vector<double> z = margins(mu);
  EnergyEvaluation result{0.0, MarginalVector(mu.layout(), 0.0)};
  for (size_t j = 0; j < measurements_.size(); ++j) {
    result.value += psi_[j] * measurement_loss_value(measurements_[j].loss, z[j]);
    const double factor = psi_[j] * measurement_loss_derivative(measurements_[j].loss, z[j]);
    if (factor == 0.0) continue;
    for (const auto& [index, coefficient] : measurements_[j].coefficients) {
      result.gradient.values()[index] += factor * coefficient;
    }
  }
  return result;
}

std::unique_ptr<EnergyFunction> MeasurementEnergy::with_psi(std::span<const double> psi) const {
  if (static_cast<int>(psi.size()) != num_psi()) {
    throw std::invalid_argument("MeasurementEnergy::with_psi: wrong size");
  }
  return std::make_unique<MeasurementEnergy>(layout_, measurements_,
                                             std::vector<double>(psi.begin(), psi.end()));
}

std::vector<double> MeasurementEnergy::psi_grad(const MarginalVector& mu,
                                                std::span<const double> residual) const {
  if (residual.size() != layout_.dim()) {
    throw std::invalid_argument("MeasurementEnergy::psi_grad: residual size mismatch");
  }
  const std::vector<double> z = margins(mu);
  std::vector<double> grad(measurements_.size());
  for (size_t j = 0; j < measurements_.size(); ++j) {
    double direction = 0.0;
    for (const auto& [index, coefficient] : measurements_[j].coefficients) {
      direction += coefficient * residual[index];
    }
    grad[j] = -measurement_loss_derivative(measurements_[j].loss, z[j]) * direction;
  }
  return grad;
}

bool MeasurementEnergy::is_convex() const {
  return std::all_of(psi_.begin(), psi_.end(), [](double w) { return w >= 0.0; });
}

std::optional<double> MeasurementEnergy::smoothness_bound() const {
  // Both losses have curvature at most 1, so psi_j * ||a_j||^2 bounds each
  // term's Hessian and the sum bounds the total.
  double bound = 0.0;
  for (size_t j = 0; j < measurements_.size(); ++j) {
    double norm_sq = 0.0;
    for (const auto& [index, coefficient] : measurements_[j].coefficients) {
      (void)index;
      norm_sq += coefficient * coefficient;
    }
    bound += std::abs(psi_[j]) * norm_sq;
  }
  return bound;
}

std::unique_ptr<EnergyFunction> MeasurementEnergy::clone() const {
  return std::make_unique<MeasurementEnergy>(*this);
}

MeanFieldEnergy::MeanFieldEnergy(ChainLayout layout, std::vector<Cluster> clusters)
    : layout_(layout), clusters_(std::move(clusters)) {
  for (const Cluster& cluster : clusters_) {
    if (cluster.positions.empty()) {
      throw std::invalid_argument("MeanFieldEnergy: empty cluster");
    }
    std::set<int> seen;
    for (int pos : cluster.positions) {
      if (pos < 0 || pos >= layout_.length) {
        throw std::invalid_argument("MeanFieldEnergy: position out of range");
      }
      if (!seen.insert(pos).second) {
        throw std::invalid_argument("MeanFieldEnergy: repeated position in cluster");
      }
    }
    if (cluster.table.size() != table_size(layout_, cluster)) {
      throw std::invalid_argument("MeanFieldEnergy: table size must be k^|cluster|");
    }
  }
}

EnergyEvaluation MeanFieldEnergy::evaluate(const MarginalVector& mu) const {
  throw_if_dimension_mismatch(layout_, mu.layout(), "MeanFieldEnergy");
  EnergyEvaluation result{0.0, MarginalVector(mu.layout(), 0.0)};
  const int k = layout_.num_states;
  for (const Cluster& cluster : clusters_) {
    const int c = static_cast<int>(cluster.positions.size());
    std::vector<int> j(c, 0);
    std::vector<double> prefix(c + 1), suffix(c + 1);
    size_t flat = 0;
    do {
      prefix[0] = 1.0;
      for (int m = 0; m < c; ++m) prefix[m + 1] = prefix[m] * mu.node(cluster.positions[m])[j[m]];
      suffix[c] = 1.0;
      for (int m = c - 1; m >= 0; --m) {
        suffix[m] = suffix[m + 1] * mu.node(cluster.positions[m])[j[m]];
      }
      const double w = cluster.table[flat];
      result.value -= w * prefix[c];
      if (w != 0.0) {
        for (int m = 0; m < c; ++m) {
          result.gradient.node(cluster.positions[m])[j[m]] -= w * prefix[m] * suffix[m + 1];
        }
      }
      ++flat;
    } while (next_tuple(j, k));
  }
  return result;
}

int MeanFieldEnergy::num_psi() const {
  size_t total = 0;
  for (const Cluster& cluster : clusters_) total += cluster.table.size();
  return static_cast<int>(total);
}

std::vector<double> MeanFieldEnergy::psi() const {
  std::vector<double> out;
  for (const Cluster& cluster : clusters_) {
    out.insert(out.end(), cluster.table.begin(), cluster.table.end());
  }
  return out;
}

std::unique_ptr<EnergyFunction> MeanFieldEnergy::with_psi(std::span<const double> psi) const {
  if (static_cast<int>(psi.size()) != num_psi()) {
    throw std::invalid_argument("MeanFieldEnergy::with_psi: wrong size");
  }
  std::vector<Cluster> clusters = clusters_;
  size_t offset = 0;
  for (Cluster& cluster : clusters) {
    std::copy(psi.begin() + offset, psi.begin() + offset + cluster.table.size(),
              cluster.table.begin());
    offset += cluster.table.size();
  }
  return std::make_unique<MeanFieldEnergy>(layout_, std::move(clusters));
}

std::vector<double> MeanFieldEnergy::psi_grad(const MarginalVector& mu,
                                              std::span<const double> residual) const {
  throw_if_dimension_mismatch(layout_, mu.layout(), "MeanFieldEnergy::psi_grad");
  if (residual.size() != layout_.dim()) {
    throw std::invalid_argument("MeanFieldEnergy::psi_grad: residual size mismatch");
  }
  const int k = layout_.num_states;
  std::vector<double> grad(num_psi());
  size_t offset = 0;
  for (const Cluster& cluster : clusters_) {
    const int c = static_cast<int>(cluster.positions.size());
    std::vector<int> j(c, 0);
    std::vector<double> prefix(c + 1), suffix(c + 1);
    size_t flat = 0;
    do {
      prefix[0] = 1.0;
      for (int m = 0; m < c; ++m) prefix[m + 1] = prefix[m] * mu.node(cluster.positions[m])[j[m]];
      suffix[c] = 1.0;
      for (int m = c - 1; m >= 0; --m) {
        suffix[m] = suffix[m + 1] * mu.node(cluster.positions[m])[j[m]];
      }
      double acc = 0.0;
      for (int m = 0; m < c; ++m) {
        const int idx = layout_.node_index(cluster.positions[m], j[m]);
        acc += prefix[m] * suffix[m + 1] * residual[idx];
      }
      grad[offset + flat] = acc;
      ++flat;
    } while (next_tuple(j, k));
    offset += cluster.table.size();
  }
  return grad;
}

bool MeanFieldEnergy::is_convex() const {
  // Single-node clusters make the energy linear in mu; anything larger is
  // multilinear and indefinite in general.
  return std::all_of(clusters_.begin(), clusters_.end(),
                     [](const Cluster& c) { return c.positions.size() <= 1; });
}

std::optional<double> MeanFieldEnergy::smoothness_bound() const {
  // Off-diagonal Hessian blocks between two member nodes have infinity norm
  // at most k * max|table| because the remaining marginals sum to one per
  // block; |c|(|c|-1) such blocks per cluster.
  double bound = 0.0;
  for (const Cluster& cluster : clusters_) {
    double max_abs = 0.0;
    for (double v : cluster.table) max_abs = std::max(max_abs, std::abs(v));
    const double c = static_cast<double>(cluster.positions.size());
    bound += c * (c - 1.0) * layout_.num_states * max_abs;
  }
  return bound;
}

std::unique_ptr<EnergyFunction> MeanFieldEnergy::clone() const {
  return std::make_unique<MeanFieldEnergy>(*this);
}

PrototypeEnergy::PrototypeEnergy(int num_states, PrototypeMode mode,
                                 std::vector<std::vector<double>> prototypes, double psi)
    : num_states_(num_states), mode_(mode), prototypes_(std::move(prototypes)), psi_(psi) {
  if (num_states_ < 2) throw std::invalid_argument("PrototypeEnergy: need at least two states");
  const size_t k = static_cast<size_t>(num_states_);
  for (const auto& prototype : prototypes_) {
    if (mode_ == PrototypeMode::kUnigram) {
      if (prototype.size() != k) {
        throw std::invalid_argument("PrototypeEnergy: unigram prototype must have k entries");
      }
    } else {
      if (prototype.empty() || prototype.size() % k != 0) {
        throw std::invalid_argument("PrototypeEnergy: full prototype must have length*k entries");
      }
    }
  }
}

PrototypeEnergy::Nearest PrototypeEnergy::nearest(const MarginalVector& mu) const {
  if (mu.num_states() != num_states_) {
    throw std::invalid_argument("PrototypeEnergy: state count mismatch");
  }
  const int k = num_states_;
  const int n = mu.length();

  std::vector<double> features;
  if (mode_ == PrototypeMode::kUnigram) {
    features.assign(k, 0.0);
    for (int i = 0; i < n; ++i) {
      auto node = mu.node(i);
      for (int a = 0; a < k; ++a) features[a] += node[a];
    }
  } else {
    features.assign(mu.values().begin(), mu.values().begin() + static_cast<size_t>(n) * k);
  }

  Nearest best;
  for (size_t p = 0; p < prototypes_.size(); ++p) {
    if (prototypes_[p].size() != features.size()) continue;  // other length bucket
    double d = 0.0;
    for (size_t j = 0; j < features.size(); ++j) d += std::abs(features[j] - prototypes_[p][j]);
    // Strict < keeps the lowest index on ties.
    if (best.index < 0 || d < best.distance) {
      best.index = static_cast<int>(p);
      best.distance = d;
    }
  }
  if (best.index >= 0) {
    const auto& prototype = prototypes_[best.index];
    best.sign.resize(features.size());
    for (size_t j = 0; j < features.size(); ++j) {
      const double diff = features[j] - prototype[j];
      best.sign[j] = diff > 0.0 ? 1.0 : (diff < 0.0 ? -1.0 : 0.0);
    }
  }
  return best;
}

int PrototypeEnergy::nearest_prototype(const MarginalVector& mu) const {
  return nearest(mu).index;
}

// Subgradient of the min distance wrt mu, in the flat layout (edge entries
// are zero). In unigram mode every node block sees the same sign vector
// because the features sum the blocks.
std::vector<double> PrototypeEnergy::distance_subgradient(const MarginalVector& mu) const {
  const ChainLayout& layout = mu.layout();
  const Nearest best = nearest(mu);
  std::vector<double> grad(layout.dim(), 0.0);
  if (best.index < 0) return grad;
  const int k = layout.num_states;
  if (mode_ == PrototypeMode::kUnigram) {
    for (int i = 0; i < layout.length; ++i) {
      for (int a = 0; a < k; ++a) grad[layout.node_index(i, a)] = best.sign[a];
    }
  } else {
    for (int i = 0; i < layout.length; ++i) {
      for (int a = 0; a < k; ++a) {
        grad[layout.node_index(i, a)] = best.sign[static_cast<size_t>(i) * k + a];
      }
    }
  }
  return grad;
}

EnergyEvaluation PrototypeEnergy::evaluate(const MarginalVector& mu) const {
  const Nearest best = nearest(mu);
  EnergyEvaluation result{0.0, MarginalVector(mu.layout(), 0.0)};
  if (best.index < 0) return result;  // no prototype for this chain length
  result.value = psi_ * best.distance;
  const std::vector<double> sub = distance_subgradient(mu);
  for (std::size_t idx = 0; idx < mu.layout().dim(); ++idx) {
    result.gradient.values()[idx] = psi_ * sub[idx];
  }
  return result;
}

std::unique_ptr<EnergyFunction> PrototypeEnergy::with_psi(std::span<const double> psi) const {
  if (psi.size() != 1) throw std::invalid_argument("PrototypeEnergy::with_psi: wrong size");
  return std::make_unique<PrototypeEnergy>(num_states_, mode_, prototypes_, psi[0]);
}

std::vector<double> PrototypeEnergy::psi_grad(const MarginalVector& mu,
                                              std::span<const double> residual) const {
  if (residual.size() != mu.values().size()) {
    throw std::invalid_argument("PrototypeEnergy::psi_grad: residual size mismatch");
  }
  const std::vector<double> sub = distance_subgradient(mu);
  double acc = 0.0;
  for (size_t idx = 0; idx < sub.size(); ++idx) acc += sub[idx] * residual[idx];
  return {-acc};
}

std::unique_ptr<EnergyFunction> PrototypeEnergy::clone() const {
  return std::make_unique<PrototypeEnergy>(*this);
}

PoissonEnergy::PoissonEnergy(ChainLayout layout, std::vector<CountObservation> observations,
                             double scale)
    : layout_(layout), observations_(std::move(observations)), scale_(scale) {
  for (const CountObservation& obs : observations_) {
    check_flat_index(layout_, obs.flat_index, "PoissonEnergy");
    if (!(obs.count >= 0.0)) throw std::invalid_argument("PoissonEnergy: negative count");
  }
  // Keep the rate strictly positive so the log stays finite.
  scale_ = std::max(scale_, kRateFloor);
}

EnergyEvaluation PoissonEnergy::evaluate(const MarginalVector& mu) const {
  throw_if_dimension_mismatch(layout_, mu.layout(), "PoissonEnergy");
  EnergyEvaluation result{0.0, MarginalVector(mu.layout(), 0.0)};
  for (const CountObservation& obs : observations_) {
    const double m = std::max(mu.values()[obs.flat_index], kRateFloor);
    result.value += scale_ * m - obs.count * std::log(scale_ * m);
    result.gradient.values()[obs.flat_index] += scale_ - obs.count / m;
  }
  return result;
}

std::unique_ptr<EnergyFunction> PoissonEnergy::with_psi(std::span<const double> psi) const {
  if (psi.size() != 1) throw std::invalid_argument("PoissonEnergy::with_psi: wrong size");
  return std::make_unique<PoissonEnergy>(layout_, observations_, psi[0]);
}

std::vector<double> PoissonEnergy::psi_grad(const MarginalVector& mu,
                                            std::span<const double> residual) const {
  throw_if_dimension_mismatch(layout_, mu.layout(), "PoissonEnergy::psi_grad");
  if (residual.size() != layout_.dim()) {
    throw std::invalid_argument("PoissonEnergy::psi_grad: residual size mismatch");
  }
  // d/dscale of the mu-gradient is 1 at every observed entry.
  double acc = 0.0;
  for (const CountObservation& obs : observations_) acc += residual[obs.flat_index];
  return {-acc};
}

std::unique_ptr<EnergyFunction> PoissonEnergy::clone() const {
  return std::make_unique<PoissonEnergy>(*this);
}

}  // namespace nlcrf
