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
#include <limits>
#include <stdexcept>
#include <vector>

#include "doctest.h"
#include "helpers.hpp"
#include "nlcrf/energies.hpp"
#include "nlcrf/exact.hpp"
#include "nlcrf/projected_inference.hpp"

using namespace nlcrf;

namespace {

// Per-node count of `state` through a smoothed hinge, margin offset `b`.
Measurement count_hinge(const ChainLayout& layout, int state, double sign, double b) {
  Measurement m;
  m.offset = b;
  for (int i = 0; i < layout.length; ++i) {
    m.coefficients.emplace_back(static_cast<int>(layout.node_index(i, state)), sign);
  }
  return m;
}

MeasurementEnergy random_hinge_energy(const ChainLayout& layout, Rng& rng, int terms = 3) {
  std::vector<Measurement> ms;
  std::vector<double> psi;
  for (int j = 0; j < terms; ++j) {
    const int state = rng.uniform_int(layout.num_states);
    const double sign = rng.uniform() < 0.5 ? 1.0 : -1.0;
    const double offset = rng.uniform(-1.0, layout.length * 0.5);
    ms.push_back(count_hinge(layout, state, sign, offset));
    psi.push_back(rng.uniform(0.2, 2.0));
  }
  return MeasurementEnergy(layout, ms, psi);
}

// L(mu) = 0.5 * ||mu - S(y0)||^2 over all flat entries, via square-loss
// measurements with one coefficient each.
MeasurementEnergy quadratic_pull(const ChainLayout& layout, const Labeling& y0) {
  const SufficientStatistics s = sufficient_statistics(layout, y0);
  std::vector<Measurement> ms;
  std::vector<double> psi;
  for (size_t i = 0; i < layout.dim(); ++i) {
    Measurement m;
    m.loss = MeasurementLoss::kSquare;
    m.offset = -s.values()[i];
    m.coefficients.emplace_back(static_cast<int>(i), 1.0);
    ms.push_back(m);
    psi.push_back(1.0);
  }
  return MeasurementEnergy(layout, ms, psi);
}

}  // namespace

TEST_CASE("solver names round-trip and bad names are rejected") {
  for (SolverKind kind :
       {SolverKind::kRda, SolverKind::kMd, SolverKind::kAccRda, SolverKind::kEuclidean}) {
    CHECK_EQ(parse_solver(solver_name(kind)), kind);
  }
  CHECK_THROWS_AS(parse_solver("sgd"), std::invalid_argument);
}

TEST_CASE("mirror-descent learning rate follows the strong convexity constant") {
  // lambda = 0.5 / (2n-1)^2, rate = 1/(lambda t).
  CHECK_EQ(md_learning_rate(ChainLayout(3, 2), 4), doctest::Approx(12.5).epsilon(1e-15));
  CHECK_EQ(md_learning_rate(ChainLayout(1, 2), 1), doctest::Approx(2.0).epsilon(1e-15));
}

TEST_CASE("zero energy collapses every oracle solver onto plain inference") {
  Rng rng(71);
  const ChainLayout layout(5, 3);
  const ChainModel theta = test::random_model(layout, rng, 1.5);
  const OracleResult plain = marginal_oracle(theta);
  const ZeroEnergy zero;

  for (SolverKind kind : {SolverKind::kRda, SolverKind::kMd, SolverKind::kAccRda}) {
    CAPTURE(solver_name(kind));
    SolverOptions options;
    options.kind = kind;
    const SolveResult result = solve(theta, zero, options);
    CHECK(result.converged);
    CHECK_LE(result.iterations, 2);
    CHECK_LT(test::max_abs_diff(result.marginals.values(), plain.marginals.values()), 1e-9);
    // The variational model must reproduce the same distribution.
    const OracleResult redo = marginal_oracle(result.theta_tilde);
    CHECK_LT(test::max_abs_diff(redo.marginals.values(), plain.marginals.values()), 1e-9);
    CHECK_EQ(result.objective, doctest::Approx(plain.log_partition).epsilon(1e-9));
  }

  // Dual averaging with no energy gradient leaves the parameters untouched.
  SolverOptions rda;
  rda.kind = SolverKind::kRda;
  const SolveResult result = solve(theta, zero, rda);
  CHECK(result.theta_tilde.values() == theta.values());
  CHECK(result.marginals.values() == plain.marginals.values());
}

TEST_CASE("objective closed forms") {
  const ZeroEnergy zero;
  SUBCASE("uniform point at zero potentials") {
    const ChainLayout layout(2, 2);
    CHECK_EQ(objective_value(ChainModel(layout, 0.0), zero, uniform_marginals(layout)),
             doctest::Approx(std::log(4.0)).epsilon(1e-12));
  }
  SUBCASE("oracle marginals achieve the log partition") {
    Rng rng(73);
    const ChainLayout layout(4, 3);
    const ChainModel theta = test::random_model(layout, rng);
    const OracleResult o = marginal_oracle(theta);
    CHECK_EQ(objective_value(theta, zero, o.marginals),
             doctest::Approx(o.log_partition).epsilon(1e-8));
  }
  SUBCASE("energy value is subtracted") {
    const ChainLayout layout(2, 2);
    const MeasurementEnergy energy = quadratic_pull(layout, {0, 0});
    const MarginalVector mu = uniform_marginals(layout);
    double sq = 0.0;
    const SufficientStatistics s = sufficient_statistics(layout, {0, 0});
    for (size_t i = 0; i < mu.values().size(); ++i) {
      const double d = mu.values()[i] - s.values()[i];
      sq += 0.5 * d * d;
    }
    CHECK_EQ(objective_value(ChainModel(layout, 0.0), energy, mu),
             doctest::Approx(std::log(4.0) - sq).epsilon(1e-12));
  }
}

TEST_CASE("quadratic pull toward a vertex raises that labeling's marginals") {
  const ChainLayout layout(2, 2);
  const ChainModel theta(layout, 0.0);
  const Labeling y0 = {1, 0};
  const MeasurementEnergy energy = quadratic_pull(layout, y0);

  for (SolverKind kind : {SolverKind::kRda, SolverKind::kMd, SolverKind::kAccRda}) {
    CAPTURE(solver_name(kind));
    SolverOptions options;
    options.kind = kind;
    options.max_iters = 400;
    const SolveResult result = solve(theta, energy, options);
    CHECK_GT(result.marginals.node(0)[1], 0.5);
    CHECK_GT(result.marginals.node(1)[0], 0.5);
    // Ascent from the uniform prox-center.
    CHECK_GE(result.objective, objective_value(theta, energy, uniform_marginals(layout)) - 1e-12);
    CHECK(validate_marginals(result.marginals).ok);
  }
}

TEST_CASE("all oracle solvers find the exact optimum of convex problems") {
  Rng rng(79);
  ExactSolveOptions exact_options;
  exact_options.restarts = 3;

  for (int instance = 0; instance < 2; ++instance) {
    const ChainLayout layout(4, 2);
    const ChainModel theta = test::random_model(layout, rng);
    const MeasurementEnergy energy = random_hinge_energy(layout, rng);
    REQUIRE(energy.is_convex());
    const ExactSolveResult exact = solve_augmented_exact(theta, energy, exact_options);

    std::vector<MarginalVector> answers;
    for (SolverKind kind : {SolverKind::kRda, SolverKind::kMd, SolverKind::kAccRda}) {
      CAPTURE(solver_name(kind));
      SolverOptions options;
      options.kind = kind;
      options.max_iters = 4000;
      options.tol = 1e-10;
      const SolveResult result = solve(theta, energy, options);
      CHECK_GT(result.objective, exact.objective - 1e-4);
      CHECK_LT(result.objective, exact.objective + 1e-4);
      CHECK_LT(test::max_abs_diff(result.marginals.values(), exact.marginals.values()), 1e-3);
      answers.push_back(result.marginals);
    }
    for (size_t a = 0; a < answers.size(); ++a) {
      for (size_t b = a + 1; b < answers.size(); ++b) {
        CHECK_LT(test::max_abs_diff(answers[a].values(), answers[b].values()), 1e-3);
      }
    }
  }
}

TEST_CASE("converged solutions satisfy the fixed-point equation") {
  Rng rng(83);
  const ChainLayout layout(4, 3);
  const ChainModel theta = test::random_model(layout, rng);
  const MeasurementEnergy energy = random_hinge_energy(layout, rng);

  SolverOptions options;
  options.kind = SolverKind::kRda;
  options.max_iters = 5000;
  options.tol = 1e-9;
  const SolveResult result = solve(theta, energy, options);
  REQUIRE(result.converged);

  // Re-solving the chain at theta - grad L(mu*) must reproduce mu*. The stop
  // rule bounds successive movement, not distance to the limit, so the
  // residual sits a few orders above tol; 1e-5 still separates converged
  // runs from unconverged ones by several decades.
  const MarginalVector g = energy.evaluate(result.marginals).gradient;
  ChainModel corrected = theta;
  for (size_t i = 0; i < corrected.values().size(); ++i) corrected.values()[i] -= g.values()[i];
  const OracleResult redo = marginal_oracle(corrected);
  CHECK_LT(test::max_abs_diff(redo.marginals.values(), result.marginals.values()), 1e-5);
}

TEST_CASE("mirror descent handles non-convex prototype energies") {
  Rng rng(89);
  const ChainLayout layout(3, 2);
  const ChainModel theta = test::random_model(layout, rng);
  const PrototypeEnergy energy(2, PrototypeMode::kUnigram, {{3.0, 0.0}, {0.0, 3.0}}, 0.8);

  SolverOptions options;  // kind defaults to mirror descent
  options.max_iters = 800;
  options.record_trace = true;
  const SolveResult result = solve(theta, energy, options);
  CHECK(result.converged);
  CHECK(validate_marginals(result.marginals).ok);
  // No worse than where it started.
  CHECK_GE(result.objective,
           objective_value(theta, energy, marginal_oracle(theta).marginals) - 1e-9);
  for (const IterationRecord& rec : result.trace) {
    CHECK(std::isfinite(rec.objective));
    CHECK_LT(rec.max_violation, 1e-8);
  }
}

namespace {

struct RateFit {
  double slope = 0.0;
  double r2 = 0.0;
  // Worst ratio of gap(t) to the theoretical envelope calibrated on the
  // first few window points; <= 1 means the decay never falls behind it.
  double envelope_factor = 0.0;
  int window = 0;  // usable points in t = 10..500 before gaps hit the floor
};

// Least squares of log gap on log t. `envelope` is the theoretical rate the
// gaps must stay under once its constant is fixed from the early window.
template <typename Envelope>
RateFit fit_decay(const std::vector<double>& gaps, Envelope envelope) {
  std::vector<double> xs, ys;
  std::vector<int> ts;
  for (int t = 10; t <= 500 && t <= static_cast<int>(gaps.size()); ++t) {
    const double g = gaps[t - 1];
    if (g < 1e-12) break;  // solver hit its floor; the tail is just noise
    xs.push_back(std::log(static_cast<double>(t)));
    ys.push_back(std::log(g));
    ts.push_back(t);
  }
  RateFit fit;
  fit.window = static_cast<int>(xs.size());
  if (fit.window < 5) return fit;
  const double n = static_cast<double>(xs.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0, syy = 0;
  for (size_t i = 0; i < xs.size(); ++i) {
    sx += xs[i];
    sy += ys[i];
    sxx += xs[i] * xs[i];
    sxy += xs[i] * ys[i];
    syy += ys[i] * ys[i];
  }
  const double vxx = sxx - sx * sx / n;
  const double vxy = sxy - sx * sy / n;
  const double vyy = syy - sy * sy / n;
  fit.slope = vxy / vxx;
  fit.r2 = vyy > 0.0 ? (vxy * vxy) / (vxx * vyy) : 1.0;
  double c = 0.0;
  for (size_t i = 0; i < std::min<size_t>(5, ts.size()); ++i) {
    c = std::max(c, std::exp(ys[i]) / envelope(ts[i]));
  }
  double worst = 0.0;
  for (size_t i = 0; i < ts.size(); ++i) {
    worst = std::max(worst, std::exp(ys[i]) / (c * envelope(ts[i])));
  }
  fit.envelope_factor = worst;
  return fit;
}

}  // namespace

TEST_CASE("suboptimality decays at the advertised envelope rates") {
  // The two oracle schemes promise different decay envelopes: ln(t)/t for
  // dual averaging and 1/t^2 for the accelerated variant. On an instance
  // whose energy stays active at the optimum, both trajectories should be
  // clean power laws at least as steep as their envelope.
  Rng rng(97);
  const ChainLayout layout(4, 2);
  const ChainModel theta = test::random_model(layout, rng);
  Labeling target(layout.length);
  for (int i = 0; i < layout.length; ++i) target[i] = rng.uniform_int(2);
  const MeasurementEnergy energy = quadratic_pull(layout, target);

  ExactSolveOptions exact_options;
  exact_options.restarts = 2;
  exact_options.tol = 1e-13;
  const double opt = solve_augmented_exact(theta, energy, exact_options).objective;

  auto gaps = [&](SolverKind kind) {
    SolverOptions options;
    options.kind = kind;
    options.max_iters = 600;
    options.tol = 1e-15;  // run the full budget
    options.record_trace = true;
    const SolveResult result = solve(theta, energy, options);
    std::vector<double> out;
    out.reserve(result.trace.size());
    for (const IterationRecord& rec : result.trace) {
      out.push_back(std::max(opt - rec.objective, 1e-14));
    }
    return out;
  };
  const std::vector<double> rda = gaps(SolverKind::kRda);
  const std::vector<double> acc = gaps(SolverKind::kAccRda);
  CHECK_LT(rda.back(), 1e-8);
  CHECK_LT(acc.back(), 1e-8);

  const RateFit rda_fit =
      fit_decay(rda, [](int t) { return std::log(static_cast<double>(t)) / t; });
  const RateFit acc_fit =
      fit_decay(acc, [](int t) { return 1.0 / (static_cast<double>(t) * t); });
  REQUIRE_GE(rda_fit.window, 100);
  REQUIRE_GE(acc_fit.window, 100);
  // Power-law quality of the log-log fit.
  CHECK_GE(rda_fit.r2, 0.8);
  CHECK_GE(acc_fit.r2, 0.8);
  // Never slower than the promised envelopes (1.5x headroom for noise).
  CHECK_LE(rda_fit.envelope_factor, 1.5);
  CHECK_LE(acc_fit.envelope_factor, 1.5);
  // Fitted slopes at least as steep as the rates themselves.
  CHECK_LE(rda_fit.slope, -0.9);
  CHECK_LE(acc_fit.slope, -1.9);
}

TEST_CASE("accelerated solver refuses energies without a smoothness bound") {
  const ChainLayout layout(3, 2);
  const ChainModel theta(layout, 0.0);
  const PrototypeEnergy energy(2, PrototypeMode::kUnigram, {{1.5, 1.5}}, 1.0);
  SolverOptions options;
  options.kind = SolverKind::kAccRda;
  CHECK_THROWS_AS(solve(theta, energy, options), std::invalid_argument);
  options.smoothness = 5.0;  // explicit constant unblocks it
  CHECK_NOTHROW(solve(theta, energy, options));
}

TEST_CASE("map prediction decodes the variational model") {
  SUBCASE("zero energy equals plain decoding") {
    Rng rng(101);
    const ChainModel theta = test::random_model(ChainLayout(5, 3), rng);
    CHECK_EQ(map_predict(theta, ZeroEnergy()), map_decode(theta));
  }
  SUBCASE("a strong count penalty flips the prediction") {
    const ChainLayout layout(3, 2);
    ChainModel theta(layout, 0.0);
    for (int i = 0; i < 3; ++i) theta.node(i)[1] = 0.2;  // mildly prefer label 1
    REQUIRE_EQ(map_decode(theta), Labeling{1, 1, 1});

    // margin = 1 - count(label 1): satisfied only when label 1 never appears.
    const MeasurementEnergy energy(layout, {count_hinge(layout, 1, -1.0, 1.0)}, {5.0});
    SolverOptions options;
    options.max_iters = 600;
    const Labeling flipped = map_predict(theta, energy, options);
    CHECK_EQ(flipped, Labeling{0, 0, 0});

    // The flip is certified on the modified-parameter model by enumeration.
    const SolveResult result = solve(theta, energy, options);
    const double best = test::labeling_score(result.theta_tilde, flipped);
    for_each_labeling(layout, [&](const Labeling& y) {
      CHECK_GE(best + 1e-12, test::labeling_score(result.theta_tilde, y));
    });
  }
}

TEST_CASE("traces record feasible iterates with consistent bookkeeping") {
  Rng rng(103);
  const ChainLayout layout(4, 3);
  const ChainModel theta = test::random_model(layout, rng);
  const MeasurementEnergy energy = random_hinge_energy(layout, rng);

  SolverOptions options;
  options.kind = SolverKind::kRda;
  options.max_iters = 50;
  options.tol = 1e-12;
  options.record_trace = true;
  options.record_iterates = true;
  options.average_iterates = true;
  const SolveResult result = solve(theta, energy, options);

  REQUIRE_EQ(static_cast<int>(result.trace.size()), result.iterations);
  REQUIRE_EQ(result.iterates.size(), result.trace.size());
  CHECK_EQ(result.oracle_calls, result.iterations + 1);  // prox-center + one per step
  double last_elapsed = 0.0;
  for (size_t t = 0; t < result.trace.size(); ++t) {
    const IterationRecord& rec = result.trace[t];
    CHECK_EQ(rec.iteration, static_cast<int>(t) + 1);
    CHECK(std::isfinite(rec.objective));
    CHECK(std::isfinite(rec.objective_avg));
    CHECK_GE(rec.delta, 0.0);
    CHECK_LT(rec.max_violation, 1e-8);
    CHECK_GE(rec.elapsed_seconds, last_elapsed);
    last_elapsed = rec.elapsed_seconds;
    CHECK(validate_marginals(result.iterates[t]).ok);
  }

  // With averaging on, the reported point is the mean of the iterates.
  MarginalVector mean(layout, 0.0);
  for (const MarginalVector& it : result.iterates) {
    for (size_t i = 0; i < mean.values().size(); ++i) mean.values()[i] += it.values()[i];
  }
  for (double& v : mean.values()) v /= static_cast<double>(result.iterates.size());
  CHECK_LT(test::max_abs_diff(mean.values(), result.marginals.values()), 1e-12);
}

TEST_CASE("solver rejects bad inputs") {
  const ChainLayout layout(2, 2);
  ChainModel theta(layout, 0.0);
  theta.values()[0] = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(solve(theta, ZeroEnergy()), std::invalid_argument);

  SolverOptions options;
  options.beta = -1.0;
  options.kind = SolverKind::kRda;
  CHECK_THROWS_AS(solve(ChainModel(layout, 0.0), ZeroEnergy(), options), std::invalid_argument);
}
