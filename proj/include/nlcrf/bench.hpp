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

#ifndef NLCRF_BENCH_HPP_
#define NLCRF_BENCH_HPP_

#include <cstdint>
#include <iosfwd>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "nlcrf/energies.hpp"
#include "nlcrf/learning.hpp"

namespace nlcrf {

// --- synthetic benchmark generators ---------------------------------------

/// A count rule over one labeling: margin(y) = sum_i a[y_i] + b, satisfied
/// when the margin is at least 1 (the flat part of the smoothed hinge). The
/// matching marginal-space measurement puts a[s] on every node entry (i, s).
struct CountConstraint {
  std::string name;
  std::vector<double> label_weights;  // one per state
  double offset = 0.0;

  double margin(const Labeling& y) const;
  bool satisfied(const Labeling& y) const { return margin(y) >= 1.0; }
};

/// Total constraint violations in a labeled set.
long count_violations(const std::vector<CountConstraint>& constraints,
                      const std::vector<Labeling>& labelings);

/// Sequence-labeling sets sampled from a hidden chain and kept only when all
/// count constraints hold; features are noisy label indicators.
struct SoftconSpec {
  int length = 10;
  int num_states = 4;
  int num_train = 300;
  int num_dev = 100;
  int num_test = 100;
  double theta_scale = 1.0;
  double feature_noise = 0.4;
  std::uint64_t seed = 7;
  /// Abort when fewer than 1% of sampled sequences pass the filter.
  int max_attempts_factor = 100;
};

struct SoftconBenchmark {
  Dataset train, dev, test;
  std::vector<CountConstraint> constraints;
  /// Smoothed-hinge measurements mirroring `constraints`, unit weights.
  std::unique_ptr<MeasurementEnergy> energy;
  ChainModel true_theta;
};

SoftconBenchmark generate_softcon(const SoftconSpec& spec);

/// Noisy renderings of a small fixed vocabulary; emits the per-word unigram
/// count vectors and one-hot concatenations that drive the prototype energy.
struct PrototypeSpec {
  int vocab_size = 20;
  int min_length = 3;
  int max_length = 6;
  int num_states = 8;
  int num_train = 300;
  int num_dev = 100;
  int num_test = 100;
  double feature_noise = 0.45;
  std::uint64_t seed = 3;
};

struct PrototypeBenchmark {
  Dataset train, dev, test;
  std::vector<Labeling> vocabulary;
  std::vector<std::vector<double>> unigram_prototypes;  // expected label counts
  std::vector<std::vector<double>> full_prototypes;     // one-hot node blocks
};

PrototypeBenchmark generate_prototype(const PrototypeSpec& spec);

/// A population diffusing on a grid: chain over time with states = cells,
/// observed through Poisson counts with rate proportional to the true node
/// marginals.
struct CgmSpec {
  int grid_side = 5;  // num_states = grid_side^2
  int length = 20;
  double poisson_scale = 50.0;
  double diffusion = 1.0;  // edge penalty per unit grid distance
  std::uint64_t seed = 11;
};

struct CgmBenchmark {
  ChainModel theta;
  MarginalVector true_marginals;
  std::vector<CountObservation> observations;  // one per node entry
  double scale = 0.0;
  std::unique_ptr<PoissonEnergy> energy;
};

CgmBenchmark generate_cgm(const CgmSpec& spec);

/// FNV-1a over the canonical text serialization; pins generated data in tests.
std::uint64_t fnv1a(const std::string& text);
std::string dataset_fingerprint(const Dataset& d);   // 16 hex digits
std::string model_fingerprint(const ChainModel& m);  // 16 hex digits

// --- experiment harness ----------------------------------------------------

/// Sections of key = value pairs; '#' and ';' start comments.
struct IniConfig {
  std::map<std::string, std::map<std::string, std::string>> sections;

  bool has(const std::string& section, const std::string& key) const;
  /// Getters throw std::runtime_error naming section.key when missing or
  /// unparsable; the _or forms fall back instead.
  std::string get(const std::string& section, const std::string& key) const;
  std::string get_or(const std::string& section, const std::string& key,
                     const std::string& fallback) const;
  double get_double(const std::string& section, const std::string& key) const;
  double get_double_or(const std::string& section, const std::string& key, double fallback) const;
  int get_int(const std::string& section, const std::string& key) const;
  int get_int_or(const std::string& section, const std::string& key, int fallback) const;
  bool get_bool_or(const std::string& section, const std::string& key, bool fallback) const;

  void set(const std::string& section, const std::string& key, const std::string& value);
};

IniConfig parse_ini(std::istream& in);
IniConfig parse_ini_file(const std::string& path);

/// Runs the experiment a config describes (task softcon | prototype | cgm):
/// generate, then train/evaluate or solve/compare, and returns the report as
/// a JSON string. When out_dir is nonempty, writes report.json plus one
/// delimited trace file per recorded solver run there.
std::string run_experiment(const IniConfig& config, const std::string& out_dir);

/// One row of the delimited trace: iteration, objective, objective of the
/// running average, step delta, feasibility violation, elapsed seconds.
void write_trace(std::ostream& out, const std::vector<IterationRecord>& trace);

}  // namespace nlcrf

#endif  // NLCRF_BENCH_HPP_
