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

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>
#include <stdexcept>

#include "nlcrf/bench.hpp"
#include "nlcrf/numerics.hpp"
#include "nlcrf/oracle.hpp"
#include "nlcrf/rng.hpp"
#include "nlcrf/text_io.hpp"

namespace nlcrf {

double CountConstraint::margin(const Labeling& y) const {
  double m = offset;
  for (int s : y) {
    if (s < 0 || s >= static_cast<int>(label_weights.size())) {
      throw std::invalid_argument("CountConstraint: label out of range");
    }
    m += label_weights[s];
  }
  return m;
}

long count_violations(const std::vector<CountConstraint>& constraints,
                      const std::vector<Labeling>& labelings) {
  long violations = 0;
  for (const Labeling& y : labelings) {
    for (const CountConstraint& c : constraints) {
      if (!c.satisfied(y)) ++violations;
    }
  }
  return violations;
}

namespace {

// Exact sample from the chain Gibbs distribution: backward messages, then a
// forward categorical draw per position.
Labeling sample_labeling(const ChainModel& theta, Rng* rng) {
  const int n = theta.length();
  const int k = theta.num_states();
  // beta[i][a] = log sum over suffixes starting at i+1 given y_i = a.
  std::vector<std::vector<double>> beta(n, std::vector<double>(k, 0.0));
  std::vector<double> scratch(k);
  for (int i = n - 2; i >= 0; --i) {
    std::span<const double> node = theta.node(i + 1);
    for (int a = 0; a < k; ++a) {
      for (int b = 0; b < k; ++b) scratch[b] = theta.edge_at(i, a, b) + node[b] + beta[i + 1][b];
      beta[i][a] = log_sum_exp(scratch);
    }
  }
  Labeling y(n);
  std::vector<double> weights(k);
  {
    std::span<const double> node = theta.node(0);
    for (int a = 0; a < k; ++a) scratch[a] = node[a] + beta[0][a];
    const double m = *std::max_element(scratch.begin(), scratch.end());
    for (int a = 0; a < k; ++a) weights[a] = std::exp(scratch[a] - m);
    y[0] = rng->categorical(weights);
  }
  for (int i = 1; i < n; ++i) {
    std::span<const double> node = theta.node(i);
    for (int b = 0; b < k; ++b) scratch[b] = theta.edge_at(i - 1, y[i - 1], b) + node[b] + beta[i][b];
    const double m = *std::max_element(scratch.begin(), scratch.end());
    for (int b = 0; b < k; ++b) weights[b] = std::exp(scratch[b] - m);
    y[i] = rng->categorical(weights);
  }
  return y;
}

Example render_example(const Labeling& y, int num_states, double noise, Rng* rng) {
  Example x;
  x.labels = y;
  x.node_features.assign(y.size(), std::vector<double>(num_states, 0.0));
  for (size_t i = 0; i < y.size(); ++i) {
    for (int s = 0; s < num_states; ++s) {
      x.node_features[i][s] = (y[i] == s ? 1.0 : 0.0) + noise * rng->normal();
    }
  }
  return x;
}

}  // namespace

SoftconBenchmark generate_softcon(const SoftconSpec& spec) {
  if (spec.length < 2 || spec.num_states < 4) {
    throw std::invalid_argument("generate_softcon: need length >= 2 and at least 4 states");
  }
  if (spec.num_train < 1 || spec.num_dev < 0 || spec.num_test < 1) {
    throw std::invalid_argument("generate_softcon: bad split sizes");
  }
  const int k = spec.num_states;
  const ChainLayout layout{spec.length, k};
  Rng rng(spec.seed);

  SoftconBenchmark bench;
  bench.true_theta = ChainModel(layout);
  for (double& v : bench.true_theta.values()) v = spec.theta_scale * rng.normal();

  // Three count rules; all hold with margin >= 1 on every emitted labeling.
  {
    CountConstraint lead;  // state 0 strictly outnumbers state 1
    lead.name = "count0-exceeds-count1";
    lead.label_weights.assign(k, 0.0);
    lead.label_weights[0] = 1.0;
    lead.label_weights[1] = -1.0;
    lead.offset = 0.0;
    bench.constraints.push_back(lead);

    CountConstraint rare;  // last state appears at most once
    rare.name = "last-state-at-most-once";
    rare.label_weights.assign(k, 0.0);
    rare.label_weights[k - 1] = -1.0;
    rare.offset = 2.0;
    bench.constraints.push_back(rare);

    CountConstraint present;  // state 2 appears at least once
    present.name = "state2-present";
    present.label_weights.assign(k, 0.0);
    present.label_weights[2] = 1.0;
    present.offset = 0.0;
    bench.constraints.push_back(present);
  }

  const int needed = spec.num_train + spec.num_dev + spec.num_test;
  const long max_attempts = static_cast<long>(spec.max_attempts_factor) * needed;
  std::vector<Labeling> kept;
  kept.reserve(needed);
  long attempts = 0;
  while (static_cast<int>(kept.size()) < needed) {
    if (++attempts > max_attempts) {
      throw std::runtime_error("generate_softcon: rejection rate above 99%, constraint set "
                               "infeasible for this chain");
    }
    Labeling y = sample_labeling(bench.true_theta, &rng);
    bool ok = true;
    for (const CountConstraint& c : bench.constraints) {
      if (!c.satisfied(y)) {
        ok = false;
        break;
      }
    }
    if (ok) kept.push_back(std::move(y));
  }

  Dataset* splits[3] = {&bench.train, &bench.dev, &bench.test};
  const int sizes[3] = {spec.num_train, spec.num_dev, spec.num_test};
  int cursor = 0;
  for (int s = 0; s < 3; ++s) {
    splits[s]->num_states = k;
    splits[s]->feature_dim = k;
    for (int i = 0; i < sizes[s]; ++i) {
      splits[s]->examples.push_back(
          render_example(kept[cursor++], k, spec.feature_noise, &rng));
    }
  }

  std::vector<Measurement> measurements;
  for (const CountConstraint& c : bench.constraints) {
    Measurement m;
    m.loss = MeasurementLoss::kSmoothedHinge;
    m.offset = c.offset;
    for (int i = 0; i < layout.length; ++i) {
      for (int s = 0; s < k; ++s) {
        if (c.label_weights[s] != 0.0) {
          m.coefficients.emplace_back(layout.node_index(i, s), c.label_weights[s]);
        }
      }
    }
    measurements.push_back(std::move(m));
  }
  bench.energy = std::make_unique<MeasurementEnergy>(
      layout, std::move(measurements), std::vector<double>(bench.constraints.size(), 1.0));
  return bench;
}

PrototypeBenchmark generate_prototype(const PrototypeSpec& spec) {
  if (spec.vocab_size < 2 || spec.min_length < 1 || spec.max_length < spec.min_length ||
      spec.num_states < 2) {
    throw std::invalid_argument("generate_prototype: bad spec");
  }
  const int k = spec.num_states;
  Rng rng(spec.seed);

  PrototypeBenchmark bench;
  std::set<Labeling> seen;
  while (static_cast<int>(bench.vocabulary.size()) < spec.vocab_size) {
    const int len = spec.min_length + rng.uniform_int(spec.max_length - spec.min_length + 1);
    Labeling word(len);
    for (int& s : word) s = rng.uniform_int(k);
    if (seen.insert(word).second) bench.vocabulary.push_back(std::move(word));
  }

  for (const Labeling& word : bench.vocabulary) {
    std::vector<double> unigram(k, 0.0);
    std::vector<double> full(word.size() * static_cast<size_t>(k), 0.0);
    for (size_t i = 0; i < word.size(); ++i) {
      unigram[word[i]] += 1.0;
      full[i * k + word[i]] = 1.0;
    }
    bench.unigram_prototypes.push_back(std::move(unigram));
    bench.full_prototypes.push_back(std::move(full));
  }

  Dataset* splits[3] = {&bench.train, &bench.dev, &bench.test};
  const int sizes[3] = {spec.num_train, spec.num_dev, spec.num_test};
  for (int s = 0; s < 3; ++s) {
    splits[s]->num_states = k;
    splits[s]->feature_dim = k;
    for (int i = 0; i < sizes[s]; ++i) {
      const Labeling& word = bench.vocabulary[rng.uniform_int(spec.vocab_size)];
      splits[s]->examples.push_back(render_example(word, k, spec.feature_noise, &rng));
    }
  }
  return bench;
}

CgmBenchmark generate_cgm(const CgmSpec& spec) {
  if (spec.grid_side < 2 || spec.length < 2 || !(spec.poisson_scale > 0.0)) {
    throw std::invalid_argument("generate_cgm: bad spec");
  }
  const int k = spec.grid_side * spec.grid_side;
  const ChainLayout layout{spec.length, k};
  Rng rng(spec.seed);

  CgmBenchmark bench;
  bench.theta = ChainModel(layout);
  // Slowly drifting habitat quality per cell; transitions pay for grid
  // distance, so the population diffuses locally.
  std::vector<double> quality(k);
  for (double& q : quality) q = 0.5 * rng.normal();
  for (int i = 0; i < layout.length; ++i) {
    std::span<double> node = bench.theta.node(i);
    for (int s = 0; s < k; ++s) node[s] = quality[s] + 0.2 * rng.normal();
  }
  const double start_pull = 2.0;  // population starts concentrated in a corner
  bench.theta.node(0)[0] += start_pull;
  for (int i = 0; i + 1 < layout.length; ++i) {
    std::span<double> edge = bench.theta.edge(i);
    for (int a = 0; a < k; ++a) {
      const int ar = a / spec.grid_side;
      const int ac = a % spec.grid_side;
      for (int b = 0; b < k; ++b) {
        const int br = b / spec.grid_side;
        const int bc = b % spec.grid_side;
        const int dist = std::abs(ar - br) + std::abs(ac - bc);
        edge[static_cast<size_t>(a) * k + b] = -spec.diffusion * dist;
      }
    }
  }

  bench.true_marginals = marginal_oracle(bench.theta).marginals;
  bench.scale = spec.poisson_scale;
  for (int i = 0; i < layout.length; ++i) {
    std::span<const double> node = bench.true_marginals.node(i);
    for (int s = 0; s < k; ++s) {
      CountObservation obs;
      obs.flat_index = layout.node_index(i, s);
      obs.count = static_cast<double>(rng.poisson(spec.poisson_scale * node[s]));
      bench.observations.push_back(obs);
    }
  }
  bench.energy = std::make_unique<PoissonEnergy>(layout, bench.observations, bench.scale);
  return bench;
}

std::uint64_t fnv1a(const std::string& text) {
  std::uint64_t hash = 0xcbf29ce484222325ull;
  for (unsigned char c : text) {
    hash ^= c;
    hash *= 0x100000001b3ull;
  }
  return hash;
}

namespace {

std::string to_hex(std::uint64_t v) {
  static const char* digits = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[i] = digits[v & 0xf];
    v >>= 4;
  }
  return out;
}

}  // namespace

std::string dataset_fingerprint(const Dataset& d) {
  std::ostringstream out;
  save_dataset(out, d);
  return to_hex(fnv1a(out.str()));
}

std::string model_fingerprint(const ChainModel& m) {
  std::ostringstream out;
  save_model(m, out);
  return to_hex(fnv1a(out.str()));
}

}  // namespace nlcrf
