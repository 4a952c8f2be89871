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
#include <memory>
#include <sstream>
#include <vector>

#include "doctest.h"
#include "helpers.hpp"
#include "nlcrf/energies.hpp"
#include "nlcrf/exact.hpp"
#include "nlcrf/oracle.hpp"
#include "nlcrf/rng.hpp"

using namespace nlcrf;
using test::max_abs_diff;
using test::rel_err;

namespace {

Example make_example(std::vector<int> labels, std::vector<std::vector<double>> features) {
  Example x;
  x.labels = std::move(labels);
  x.node_features = std::move(features);
  return x;
}

Example random_example(int n, int k, int feature_dim, Rng& rng) {
  Example x;
  x.labels.resize(n);
  for (int& y : x.labels) y = rng.uniform_int(k);
  x.node_features.assign(n, std::vector<double>(feature_dim));
  for (auto& f : x.node_features) {
    for (double& v : f) v = rng.normal();
  }
  return x;
}

std::vector<double> one_hot(int dim, int index, double value = 1.0) {
  std::vector<double> v(dim, 0.0);
  v[index] = value;
  return v;
}

// log Q(y | x) under the chain alone; the quantity whose W-gradient
// accumulate_theta_gradient produces from the residual S(y) - m.
double chain_log_likelihood(const Example& x, const ThetaParametrization& p) {
  const ChainModel theta = theta_of(x, p);
  const SufficientStatistics stats = sufficient_statistics(theta.layout(), x.labels);
  return dot(theta, stats) - log_partition(theta);
}

// Identity weights scaled up: the decoder copies the feature argmax.
ThetaParametrization sharp_identity(int k, double scale = 5.0) {
  ThetaParametrization p(k, k);
  for (int d = 0; d < k; ++d) p.node_weight(d, d) = scale;
  return p;
}

}  // namespace

TEST_CASE("theta_of builds potentials linearly from features") {
  ThetaParametrization p(3, 2);
  for (int d = 0; d < 3; ++d) {
    for (int a = 0; a < 2; ++a) p.node_weight(d, a) = 10.0 * d + a;
  }
  p.edge_weight(0, 1) = 0.5;
  p.edge_weight(1, 0) = -0.25;

  const Example zero_x = make_example({0, 1}, {{0.0, 0.0, 0.0}, {0.0, 0.0, 0.0}});
  const ChainModel zeroed = theta_of(zero_x, ThetaParametrization(3, 2));
  for (double v : zeroed.values()) CHECK(v == 0.0);

  // One-hot features select single weight rows; scaling is linear.
  const Example x = make_example({0, 1}, {one_hot(3, 1), one_hot(3, 2, 2.0)});
  const ChainModel theta = theta_of(x, p);
  CHECK(theta.node(0)[0] == 10.0);
  CHECK(theta.node(0)[1] == 11.0);
  CHECK(theta.node(1)[0] == 40.0);
  CHECK(theta.node(1)[1] == 42.0);
  // The tied edge table is copied to every edge.
  CHECK(theta.edge_at(0, 0, 1) == 0.5);
  CHECK(theta.edge_at(0, 1, 0) == -0.25);
  CHECK(theta.edge_at(0, 0, 0) == 0.0);

  const Example bad = make_example({0}, {{1.0, 2.0}});  // wrong feature dim
  CHECK_THROWS_AS((void)theta_of(bad, p), std::invalid_argument);
  CHECK_THROWS_AS(ThetaParametrization(-1, 2), std::invalid_argument);
  CHECK_THROWS_AS(ThetaParametrization(2, 1), std::invalid_argument);
}

TEST_CASE("theta gradient matches finite differences of the chain likelihood") {
  Rng rng(711);
  const int n = 3, k = 2, feature_dim = 2;
  const Example x = random_example(n, k, feature_dim, rng);

  ThetaParametrization p(feature_dim, k);
  for (double& w : p.node_weights) w = 0.5 * rng.normal();
  for (double& w : p.edge_weights) w = 0.5 * rng.normal();

  const ChainModel theta = theta_of(x, p);
  const SufficientStatistics stats = sufficient_statistics(theta.layout(), x.labels);
  const MarginalVector m = marginal_oracle(theta).marginals;
  MarginalVector residual(theta.layout());
  for (size_t e = 0; e < residual.values().size(); ++e) {
    residual.values()[e] = stats.values()[e] - m.values()[e];
  }
  ThetaParametrization grad(feature_dim, k);
  accumulate_theta_gradient(x, residual, &grad);

  const double h = 1e-5;
  const auto check_fd = [&](double* weight, double analytic) {
    const double saved = *weight;
    *weight = saved + h;
    const double up = chain_log_likelihood(x, p);
    *weight = saved - h;
    const double down = chain_log_likelihood(x, p);
    *weight = saved;
    CHECK(rel_err(analytic, (up - down) / (2.0 * h)) < 1e-5);
  };
  for (int d = 0; d < feature_dim; ++d) {
    for (int a = 0; a < k; ++a) check_fd(&p.node_weight(d, a), grad.node_weight(d, a));
  }
  for (int a = 0; a < k; ++a) {
    for (int b = 0; b < k; ++b) check_fd(&p.edge_weight(a, b), grad.edge_weight(a, b));
  }

  // Shape mismatches are rejected.
  ThetaParametrization bad_grad(feature_dim, k + 1);
  CHECK_THROWS_AS(accumulate_theta_gradient(x, residual, &bad_grad), std::invalid_argument);
}

TEST_CASE("psi parametrizations realize and differentiate their links") {
  // Constant mode: pass-through with optional clipping.
  PsiParametrization constant = PsiParametrization::make_constant({-0.5, 1.25});
  CHECK(constant.realize({}, false) == std::vector<double>{-0.5, 1.25});
  CHECK(constant.realize({}, true) == std::vector<double>{0.0, 1.25});
  PsiParametrization cgrad = PsiParametrization::make_constant({0.0, 0.0});
  const std::vector<double> upstream = {0.3, -0.7};
  constant.accumulate_gradient({}, upstream, &cgrad);
  CHECK(cgrad.constant == upstream);

  Rng rng(712);
  const int phi_dim = 3, num_psi = 2;
  const std::vector<double> phi = {0.8, -0.4, 1.1};
  for (const PsiLink link : {PsiLink::kSoftplus, PsiLink::kIdentityProject}) {
    PsiParametrization p = PsiParametrization::make_featurized(phi_dim, num_psi, link);
    for (double& w : p.weights) w = rng.normal();
    if (link == PsiLink::kIdentityProject) {
      // Keep every pre-link activation strictly positive so the projection
      // is differentiable where we probe it.
      for (int j = 0; j < num_psi; ++j) {
        double z = 0.0;
        for (int f = 0; f < phi_dim; ++f) z += p.weight(j, f) * phi[f];
        if (z <= 0.1) p.weight(j, 0) += (0.2 - z) / phi[0];
      }
    }

    const std::vector<double> c = {0.9, -1.4};  // arbitrary downstream gradient
    const auto scalar = [&](const PsiParametrization& q) {
      const std::vector<double> psi = q.realize(phi, true);
      double s = 0.0;
      for (int j = 0; j < num_psi; ++j) s += c[j] * psi[j];
      return s;
    };
    PsiParametrization grad = PsiParametrization::make_featurized(phi_dim, num_psi, link);
    p.accumulate_gradient(phi, c, &grad);

    const double h = 1e-6;
    for (int j = 0; j < num_psi; ++j) {
      for (int f = 0; f < phi_dim; ++f) {
        PsiParametrization up = p, down = p;
        up.weight(j, f) += h;
        down.weight(j, f) -= h;
        const double fd = (scalar(up) - scalar(down)) / (2.0 * h);
        CHECK(rel_err(grad.weight(j, f), fd) < 1e-6);
      }
    }
  }

  // Softplus is positive even for very negative activations.
  PsiParametrization sp = PsiParametrization::make_featurized(1, 1, PsiLink::kSoftplus);
  sp.weights = {-50.0};
  const std::vector<double> tiny = sp.realize(std::vector<double>{1.0}, false);
  CHECK(tiny[0] > 0.0);
  CHECK(tiny[0] < 1e-20);

  CHECK_THROWS_AS(PsiParametrization::make_featurized(0, 1, PsiLink::kSoftplus),
                  std::invalid_argument);
  PsiParametrization wrong = PsiParametrization::make_featurized(2, 1, PsiLink::kSoftplus);
  CHECK_THROWS_AS((void)wrong.realize(std::vector<double>{1.0}, false), std::invalid_argument);
}

TEST_CASE("mean map features average per-position random features") {
  const MeanMapFeatures mm(64, 3, 1.0, 21);

  // Repeating one position leaves the average unchanged.
  const std::vector<double> f = {0.3, -1.2, 0.7};
  const Example once = make_example({0}, {f});
  const Example thrice = make_example({0, 1, 0}, {f, f, f});
  CHECK(max_abs_diff(mm(once), mm(thrice)) < 1e-14);
  CHECK(mean_map(once, mm) == mm(once));

  // As the bandwidth grows the projections vanish and every example maps to
  // the same phase-only vector.
  const MeanMapFeatures wide(64, 3, 1e9, 22);
  Rng rng(713);
  const Example a = random_example(4, 2, 3, rng);
  const Example b = random_example(2, 2, 3, rng);
  CHECK(max_abs_diff(wide(a), wide(b)) < 1e-6);

  const Example bad = make_example({0}, {{1.0}});
  CHECK_THROWS_AS((void)mm(bad), std::invalid_argument);
  CHECK_THROWS_AS(MeanMapFeatures(0, 3, 1.0, 1), std::invalid_argument);
  CHECK_THROWS_AS(MeanMapFeatures(8, 3, 0.0, 1), std::invalid_argument);
}

TEST_CASE("mean map dot products approximate the average pairwise kernel") {
  const int input_dim = 4;
  const double bandwidth = 1.3;
  const MeanMapFeatures mm(2000, input_dim, bandwidth, 23);
  Rng rng(714);

  const auto exact_kernel = [&](const Example& x, const Example& y) {
    double total = 0.0;
    for (const auto& u : x.node_features) {
      for (const auto& v : y.node_features) {
        double d2 = 0.0;
        for (int j = 0; j < input_dim; ++j) d2 += (u[j] - v[j]) * (u[j] - v[j]);
        total += std::exp(-d2 / (2.0 * bandwidth * bandwidth));
      }
    }
    return total / (static_cast<double>(x.length()) * y.length());
  };

  double worst = 0.0;
  for (int pair = 0; pair < 20; ++pair) {
    const Example x = random_example(2 + rng.uniform_int(4), 2, input_dim, rng);
    const Example y = random_example(2 + rng.uniform_int(4), 2, input_dim, rng);
    const std::vector<double> zx = mm(x);
    const std::vector<double> zy = mm(y);
    double inner = 0.0;
    for (size_t i = 0; i < zx.size(); ++i) inner += zx[i] * zy[i];
    worst = std::max(worst, std::abs(inner - exact_kernel(x, y)));
  }
  CHECK(worst < 0.05);
}

TEST_CASE("realize_energy instantiates the template for one example") {
  const ChainLayout layout{2, 2};
  Measurement m;
  m.loss = MeasurementLoss::kSmoothedHinge;
  m.offset = 0.0;
  m.coefficients.emplace_back(layout.node_index(0, 1), 1.0);
  const MeasurementEnergy tmpl(layout, {m, m}, {1.0, 1.0});

  const Example x = make_example({0, 1}, {one_hot(2, 0), one_hot(2, 1)});

  // Constant weights are clipped by the energy's nonnegativity.
  PsiParametrization psi = PsiParametrization::make_constant({-0.3, 0.8});
  const std::unique_ptr<EnergyFunction> realized = realize_energy(tmpl, psi, x, nullptr);
  CHECK(realized->psi() == std::vector<double>{0.0, 0.8});

  // Featurized weights need the feature map.
  PsiParametrization feat = PsiParametrization::make_featurized(8, 2, PsiLink::kSoftplus);
  CHECK_THROWS_AS((void)realize_energy(tmpl, feat, x, nullptr), std::invalid_argument);
  const MeanMapFeatures mm(8, 2, 1.0, 3);
  const std::unique_ptr<EnergyFunction> soft = realize_energy(tmpl, feat, x, &mm);
  for (double v : soft->psi()) CHECK(v > 0.0);  // softplus of zero weights

  PsiParametrization mismatched = PsiParametrization::make_constant({1.0});
  CHECK_THROWS_AS((void)realize_energy(tmpl, mismatched, x, nullptr), std::invalid_argument);
}

TEST_CASE("surrogate gradients match finite differences at fixed marginals") {
  Rng rng(715);
  const int n = 3, k = 2, feature_dim = 2;
  const Example x = random_example(n, k, feature_dim, rng);
  const ChainLayout layout{n, k};
  const SufficientStatistics stats = sufficient_statistics(layout, x.labels);

  Measurement count;
  count.loss = MeasurementLoss::kSmoothedHinge;
  count.offset = -0.5;
  for (int i = 0; i < n; ++i) count.coefficients.emplace_back(layout.node_index(i, 1), 1.0);
  const MeasurementEnergy tmpl(layout, {count}, {0.9});

  ThetaParametrization theta(feature_dim, k);
  for (double& w : theta.node_weights) w = 0.4 * rng.normal();
  for (double& w : theta.edge_weights) w = 0.4 * rng.normal();
  PsiParametrization psi = PsiParametrization::make_constant({0.9});

  // Fix the linearization point: marginals solved once under the current
  // parameters, exactly as the trainers hold them through an update.
  SolverOptions solver;
  solver.max_iters = 200;
  solver.tol = 1e-10;
  const MarginalVector mu =
      solve(theta_of(x, theta), *tmpl.with_psi(psi.constant), solver).marginals;

  const auto log_q = [&](const ThetaParametrization& t, const std::vector<double>& psi_now) {
    const std::unique_ptr<EnergyFunction> energy = tmpl.with_psi(psi_now);
    const EnergyEvaluation eval = energy->evaluate(mu);
    ChainModel rho = theta_of(x, t);
    for (size_t e = 0; e < rho.values().size(); ++e) {
      rho.values()[e] -= eval.gradient.values()[e];
    }
    return dot(rho, stats) - log_partition(rho);
  };

  // Analytic gradients: residual against the Gibbs marginals of rho.
  const std::unique_ptr<EnergyFunction> energy = tmpl.with_psi(psi.constant);
  const EnergyEvaluation eval = energy->evaluate(mu);
  ChainModel rho = theta_of(x, theta);
  for (size_t e = 0; e < rho.values().size(); ++e) rho.values()[e] -= eval.gradient.values()[e];
  const MarginalVector m = marginal_oracle(rho).marginals;
  MarginalVector residual(layout);
  for (size_t e = 0; e < residual.values().size(); ++e) {
    residual.values()[e] = stats.values()[e] - m.values()[e];
  }
  ThetaParametrization theta_grad(feature_dim, k);
  accumulate_theta_gradient(x, residual, &theta_grad);
  const std::vector<double> psi_grad = energy->psi_grad(mu, residual.values());

  const double h = 1e-5;
  const auto fd_weight = [&](double* w) {
    const double saved = *w;
    *w = saved + h;
    const double up = log_q(theta, psi.constant);
    *w = saved - h;
    const double down = log_q(theta, psi.constant);
    *w = saved;
    return (up - down) / (2.0 * h);
  };
  for (int d = 0; d < feature_dim; ++d) {
    for (int a = 0; a < k; ++a) {
      CHECK(rel_err(theta_grad.node_weight(d, a), fd_weight(&theta.node_weight(d, a))) < 1e-5);
    }
  }
  for (int a = 0; a < k; ++a) {
    for (int b = 0; b < k; ++b) {
      CHECK(rel_err(theta_grad.edge_weight(a, b), fd_weight(&theta.edge_weight(a, b))) < 1e-5);
    }
  }
  {
    std::vector<double> up = psi.constant, down = psi.constant;
    up[0] += h;
    down[0] -= h;
    const double fd = (log_q(theta, up) - log_q(theta, down)) / (2.0 * h);
    CHECK(rel_err(psi_grad[0], fd) < 1e-5);
  }
}

TEST_CASE("online training shrinks a single example's moment gap step by step") {
  Rng rng(716);
  const int k = 2, feature_dim = 2;
  const Example x = random_example(4, k, feature_dim, rng);
  Dataset d;
  d.num_states = k;
  d.feature_dim = feature_dim;
  d.examples = {x};

  const ChainLayout layout{x.length(), k};
  const SufficientStatistics stats = sufficient_statistics(layout, x.labels);
  const auto moment_gap = [&](const ThetaParametrization& p) {
    const MarginalVector m = marginal_oracle(theta_of(x, p)).marginals;
    double l1 = 0.0;
    for (size_t e = 0; e < m.values().size(); ++e) {
      l1 += std::abs(stats.values()[e] - m.values()[e]);
    }
    return l1;
  };

  LearnerConfig cfg;
  cfg.algorithm = LearnerAlgorithm::kDoublyStochastic;
  cfg.theta_step = 0.5;
  cfg.learn_psi = false;
  cfg.seed = 5;

  // epochs = t + 1 performs exactly t updates; identical seeds make each run
  // a prefix of the longer ones.
  std::vector<double> gaps;
  const ThetaParametrization theta0(feature_dim, k);
  const PsiParametrization psi0 = PsiParametrization::make_constant({});
  for (int steps = 0; steps <= 10; ++steps) {
    cfg.epochs = steps + 1;
    const TrainResult r = train(d, theta0, psi0, ZeroEnergy{}, nullptr, cfg);
    CHECK(r.update_count == steps);
    gaps.push_back(moment_gap(r.theta));
  }
  for (size_t t = 1; t < gaps.size(); ++t) CHECK(gaps[t] < gaps[t - 1]);
}

TEST_CASE("a zero psi step leaves the energy weights untouched") {
  Rng rng(717);
  const int k = 2, feature_dim = 2;
  Dataset d;
  d.num_states = k;
  d.feature_dim = feature_dim;
  for (int i = 0; i < 4; ++i) d.examples.push_back(random_example(3, k, feature_dim, rng));

  const ChainLayout layout{3, k};
  Measurement m;
  m.loss = MeasurementLoss::kSmoothedHinge;
  m.offset = 0.0;
  for (int i = 0; i < 3; ++i) m.coefficients.emplace_back(layout.node_index(i, 0), 1.0);
  const MeasurementEnergy tmpl(layout, {m}, {0.5});

  const ThetaParametrization theta0(feature_dim, k);
  const PsiParametrization psi0 = PsiParametrization::make_constant({0.5});

  for (const LearnerAlgorithm algorithm :
       {LearnerAlgorithm::kDoublyStochastic, LearnerAlgorithm::kDoubleLoop}) {
    LearnerConfig cfg;
    cfg.algorithm = algorithm;
    cfg.epochs = 4;
    cfg.psi_step = 0.0;  // psi participates but cannot move
    cfg.theta_step = 0.1;
    const TrainResult r = train(d, theta0, psi0, tmpl, nullptr, cfg);
    CHECK(r.psi.constant == psi0.constant);
    CHECK(r.update_count > 0);

    LearnerConfig frozen = cfg;
    frozen.psi_step = 0.05;
    frozen.learn_psi = false;  // same effect through the flag
    const TrainResult f = train(d, theta0, psi0, tmpl, nullptr, frozen);
    CHECK(f.psi.constant == psi0.constant);
  }
}

TEST_CASE("double-loop training recovers a known chain model") {
  // Labels are sampled from a known feature-conditional chain; maximum
  // likelihood over the same family should reproduce its node predictions.
  Rng rng(718);
  const int n = 5, k = 3, feature_dim = 3;
  const ChainLayout layout{n, k};

  ThetaParametrization truth(feature_dim, k);
  for (double& w : truth.node_weights) w = rng.normal();
  for (double& w : truth.edge_weights) w = 0.5 * rng.normal();

  const auto sample_example = [&](Rng& r) {
    Example x;
    x.labels.assign(n, 0);
    x.node_features.assign(n, std::vector<double>(feature_dim));
    for (auto& f : x.node_features) {
      for (double& v : f) v = r.normal();
    }
    const JointTable table = enumerate_distribution(theta_of(x, truth));
    int index = r.categorical(table.probabilities);
    for (int i = n - 1; i >= 0; --i) {
      x.labels[i] = index % k;
      index /= k;
    }
    return x;
  };

  Dataset train_set, test_set;
  train_set.num_states = test_set.num_states = k;
  train_set.feature_dim = test_set.feature_dim = feature_dim;
  for (int i = 0; i < 500; ++i) train_set.examples.push_back(sample_example(rng));
  for (int i = 0; i < 60; ++i) test_set.examples.push_back(sample_example(rng));

  LearnerConfig cfg;
  cfg.algorithm = LearnerAlgorithm::kDoubleLoop;
  cfg.epochs = 40;
  cfg.inner_steps = 5;
  cfg.theta_step = 0.2;
  cfg.learn_psi = false;
  cfg.plateau_tol = 1e-9;
  const ThetaParametrization theta0(feature_dim, k);
  const PsiParametrization psi0 = PsiParametrization::make_constant({});
  const TrainResult r = train(train_set, theta0, psi0, ZeroEnergy{}, nullptr, cfg);

  CHECK(!r.diverged);
  CHECK(r.stale_updates == 0);
  REQUIRE(r.surrogate_history.size() >= 2);
  CHECK(r.surrogate_history.back() > r.surrogate_history.front());

  // Average per-node KL between true and learned node marginals.
  double kl_sum = 0.0;
  long nodes = 0;
  for (const Example& x : test_set.examples) {
    const MarginalVector p_true = marginal_oracle(theta_of(x, truth)).marginals;
    const MarginalVector p_hat = marginal_oracle(theta_of(x, r.theta)).marginals;
    for (int i = 0; i < n; ++i) {
      double kl = 0.0;
      for (int a = 0; a < k; ++a) {
        const double p = std::max(p_true.node(i)[a], 1e-12);
        const double q = std::max(p_hat.node(i)[a], 1e-12);
        kl += p * std::log(p / q);
      }
      kl_sum += kl;
      ++nodes;
    }
  }
  CHECK(kl_sum / nodes < 0.05);
}

TEST_CASE("training runs are deterministic with fresh marginals throughout") {
  Rng rng(719);
  const int k = 2, feature_dim = 2;
  Dataset d;
  d.num_states = k;
  d.feature_dim = feature_dim;
  for (int i = 0; i < 6; ++i) d.examples.push_back(random_example(3, k, feature_dim, rng));

  const ChainLayout layout{3, k};
  Measurement m;
  m.loss = MeasurementLoss::kSmoothedHinge;
  m.offset = 1.0;
  for (int i = 0; i < 3; ++i) m.coefficients.emplace_back(layout.node_index(i, 1), -1.0);
  const MeasurementEnergy tmpl(layout, {m}, {0.3});

  const ThetaParametrization theta0(feature_dim, k);
  const PsiParametrization psi0 = PsiParametrization::make_constant({0.3});

  for (const LearnerAlgorithm algorithm :
       {LearnerAlgorithm::kDoublyStochastic, LearnerAlgorithm::kDoubleLoop}) {
    LearnerConfig cfg;
    cfg.algorithm = algorithm;
    cfg.epochs = 5;
    cfg.theta_step = 0.2;
    cfg.psi_step = 0.05;
    cfg.seed = 17;

    const TrainResult a = train(d, theta0, psi0, tmpl, nullptr, cfg);
    const TrainResult b = train(d, theta0, psi0, tmpl, nullptr, cfg);
    CHECK(a.surrogate_history == b.surrogate_history);
    CHECK(a.theta.node_weights == b.theta.node_weights);
    CHECK(a.theta.edge_weights == b.theta.edge_weights);
    CHECK(a.psi.constant == b.psi.constant);
    CHECK(a.stale_updates == 0);
    CHECK(a.solve_count == b.solve_count);
    CHECK(a.update_count == b.update_count);
    CHECK(static_cast<int>(a.surrogate_history.size()) == cfg.epochs);

    // One history entry per epoch; updates stop one epoch short because the
    // final pass only refreshes the history.
    const long expected_updates =
        algorithm == LearnerAlgorithm::kDoubleLoop
            ? static_cast<long>(cfg.epochs - 1) * cfg.inner_steps
            : static_cast<long>(cfg.epochs - 1) * d.size();
    CHECK(a.update_count == expected_updates);
  }
}

TEST_CASE("the divergence guard halts runaway steps") {
  Rng rng(720);
  const int k = 3, feature_dim = 3;
  Dataset d;
  d.num_states = k;
  d.feature_dim = feature_dim;
  for (int i = 0; i < 3; ++i) d.examples.push_back(random_example(4, k, feature_dim, rng));

  LearnerConfig cfg;
  cfg.algorithm = LearnerAlgorithm::kDoublyStochastic;
  cfg.epochs = 12;
  cfg.theta_step = 100.0;  // absurd on purpose
  cfg.learn_psi = false;

  const TrainResult r = train(d, ThetaParametrization(feature_dim, k),
                              PsiParametrization::make_constant({}), ZeroEnergy{}, nullptr, cfg);
  CHECK(r.diverged);
  CHECK(static_cast<int>(r.surrogate_history.size()) < cfg.epochs);
}

TEST_CASE("evaluate scores tokens, segments, and constraint violations") {
  const int k = 2;
  const ThetaParametrization sharp = sharp_identity(k);
  const PsiParametrization no_psi = PsiParametrization::make_constant({});
  SolverOptions solver;
  solver.max_iters = 50;

  // Predictions follow the feature argmax, so mismatches are hand-plantable.
  Dataset d;
  d.num_states = k;
  d.feature_dim = k;
  d.examples = {
      make_example({0, 0, 1, 1}, {one_hot(2, 0), one_hot(2, 0), one_hot(2, 0), one_hot(2, 1)}),
      make_example({1, 1}, {one_hot(2, 1), one_hot(2, 1)}),
      make_example({0, 1, 0}, {one_hot(2, 0), one_hot(2, 1), one_hot(2, 1)}),
  };
  // Predicted: (0,0,0,1), (1,1), (0,1,1).
  // Tokens: 3/4 + 2/2 + 2/3 = 7 of 9.
  // Segments: gold 2+1+3 = 6, predicted 2+1+2 = 5, matched 0+1+1 = 2.
  const EvalMetrics metrics = evaluate(d, sharp, no_psi, ZeroEnergy{}, nullptr, solver);
  CHECK(metrics.num_examples == 3);
  CHECK(metrics.token_accuracy == doctest::Approx(7.0 / 9.0).epsilon(1e-12));
  CHECK(metrics.segment_f1 == doctest::Approx(4.0 / 11.0).epsilon(1e-12));
  CHECK(metrics.mean_violations == 0.0);
  CHECK(metrics.satisfaction_rate == 1.0);

  // Perfect features give perfect scores.
  Dataset clean;
  clean.num_states = k;
  clean.feature_dim = k;
  clean.examples = {
      make_example({0, 1, 1}, {one_hot(2, 0), one_hot(2, 1), one_hot(2, 1)}),
      make_example({1, 0}, {one_hot(2, 1), one_hot(2, 0)}),
  };
  const EvalMetrics perfect = evaluate(clean, sharp, no_psi, ZeroEnergy{}, nullptr, solver);
  CHECK(perfect.token_accuracy == 1.0);
  CHECK(perfect.segment_f1 == 1.0);

  // Features pointing at the flipped label get everything wrong.
  Dataset wrong = clean;
  for (Example& x : wrong.examples) {
    for (int& y : x.labels) y = 1 - y;
  }
  const EvalMetrics zero = evaluate(wrong, sharp, no_psi, ZeroEnergy{}, nullptr, solver);
  CHECK(zero.token_accuracy == 0.0);
  CHECK(zero.segment_f1 == 0.0);

  // An unsatisfiable measurement is counted at the predicted labeling. Zero
  // weight keeps it out of the decoder, so only the bookkeeping changes.
  // Measurement terms are bound to one chain shape, so every example in the
  // scored set has to share it.
  Dataset pairs;
  pairs.num_states = k;
  pairs.feature_dim = k;
  pairs.examples = {
      make_example({1, 0}, {one_hot(2, 1), one_hot(2, 0)}),
      make_example({0, 1}, {one_hot(2, 0), one_hot(2, 1)}),
  };
  const ChainLayout layout{2, k};
  Measurement hopeless;
  hopeless.loss = MeasurementLoss::kSmoothedHinge;
  hopeless.offset = -10.0;
  for (int i = 0; i < 2; ++i) hopeless.coefficients.emplace_back(layout.node_index(i, 1), 1.0);
  const MeasurementEnergy counted(layout, {hopeless}, {0.0});
  const PsiParametrization psi_zero = PsiParametrization::make_constant({0.0});
  const EvalMetrics flagged = evaluate(pairs, sharp, psi_zero, counted, nullptr, solver);
  CHECK(flagged.token_accuracy == 1.0);
  CHECK(flagged.mean_violations == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(flagged.satisfaction_rate == 0.0);
}

TEST_CASE("datasets round trip through their text form") {
  Rng rng(721);
  Dataset d;
  d.num_states = 3;
  d.feature_dim = 2;
  d.examples.push_back(random_example(4, 3, 2, rng));
  d.examples.push_back(random_example(1, 3, 2, rng));
  d.examples[0].node_features[1][0] = 1.0 / 3.0;  // print-parse stress values
  d.examples[0].node_features[1][1] = -6.02214076e23;

  std::ostringstream out;
  save_dataset(out, d);
  std::istringstream in(out.str());
  const Dataset back = load_dataset(in);
  REQUIRE(back.examples.size() == d.examples.size());
  CHECK(back.num_states == d.num_states);
  CHECK(back.feature_dim == d.feature_dim);
  for (size_t i = 0; i < d.examples.size(); ++i) {
    CHECK(back.examples[i].labels == d.examples[i].labels);
    CHECK(back.examples[i].node_features == d.examples[i].node_features);
  }

  std::istringstream bad_header("nlcrf-dataset 9 3 2\n");
  CHECK_THROWS_AS((void)load_dataset(bad_header), std::runtime_error);
  std::istringstream truncated("nlcrf-dataset 1 3 2\n2 0 1 0.5\n");
  CHECK_THROWS_AS((void)load_dataset(truncated), std::runtime_error);

  Dataset ragged = d;
  ragged.examples[0].node_features[0].push_back(1.0);
  CHECK_THROWS_AS(validate_dataset(ragged), std::invalid_argument);
  Dataset bad_label = d;
  bad_label.examples[0].labels[0] = 7;
  CHECK_THROWS_AS(validate_dataset(bad_label), std::invalid_argument);
}

TEST_CASE("parameters round trip through their text form") {
  Rng rng(722);
  ThetaParametrization theta(3, 2);
  for (double& w : theta.node_weights) w = rng.normal();
  for (double& w : theta.edge_weights) w = rng.normal();
  theta.node_weights[0] = 0.1 + 0.2;  // not exactly representable

  SUBCASE("constant psi") {
    const PsiParametrization psi = PsiParametrization::make_constant({0.5, -1.25, 1.0 / 3.0});
    std::ostringstream out;
    save_params(out, theta, psi);
    std::istringstream in(out.str());
    ThetaParametrization theta2;
    PsiParametrization psi2;
    load_params(in, &theta2, &psi2);
    CHECK(theta2.node_weights == theta.node_weights);
    CHECK(theta2.edge_weights == theta.edge_weights);
    CHECK(!psi2.featurized);
    CHECK(psi2.constant == psi.constant);
  }

  SUBCASE("featurized psi") {
    PsiParametrization psi = PsiParametrization::make_featurized(4, 2, PsiLink::kSoftplus);
    for (double& w : psi.weights) w = rng.normal();
    std::ostringstream out;
    save_params(out, theta, psi);
    std::istringstream in(out.str());
    ThetaParametrization theta2;
    PsiParametrization psi2;
    load_params(in, &theta2, &psi2);
    CHECK(psi2.featurized);
    CHECK(psi2.phi_dim == 4);
    CHECK(psi2.num_psi == 2);
    CHECK(psi2.link == PsiLink::kSoftplus);
    CHECK(psi2.weights == psi.weights);
  }

  SUBCASE("corrupt streams are rejected") {
    ThetaParametrization t2;
    PsiParametrization p2;
    std::istringstream wrong_tag("nlcrf-params 1\nzeta 3 2\n");
    CHECK_THROWS_AS(load_params(wrong_tag, &t2, &p2), std::runtime_error);
    std::istringstream bad_link(
        "nlcrf-params 1\ntheta 1 2\n0 0\n0 0 0 0\npsi featurized 1 1 rbf\n0\n");
    CHECK_THROWS_AS(load_params(bad_link, &t2, &p2), std::runtime_error);
    std::istringstream short_psi("nlcrf-params 1\ntheta 1 2\n0 0\n0 0 0 0\npsi constant 3\n1 2\n");
    CHECK_THROWS_AS(load_params(short_psi, &t2, &p2), std::runtime_error);
  }
}

TEST_CASE("the default learner budget keeps inference cheap") {
  const LearnerConfig cfg;
  CHECK(cfg.solver.max_iters == 30);
  CHECK(cfg.solver.tol == 1e-6);
  CHECK(cfg.epochs == 20);
  CHECK(cfg.schedule == StepSchedule::kConstant);
}
