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

// Command-line front end: generate synthetic benchmark data, train the
// energy-augmented chain models, run inference on saved instances, evaluate
// saved parameters, and drive whole experiments from one config file.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"

#include "nlcrf/bench.hpp"
#include "nlcrf/energies.hpp"
#include "nlcrf/learning.hpp"
#include "nlcrf/text_io.hpp"

namespace {

using nlcrf::IniConfig;
using nlohmann::json;

struct GlobalFlags {
  std::string config_path;
  std::string out_dir;
  std::optional<int> seed;
  std::optional<int> max_iters;
  std::optional<std::string> solver;
};

// The command line wins over the config file.
IniConfig load_config(const GlobalFlags& flags) {
  IniConfig cfg;
  if (!flags.config_path.empty()) cfg = nlcrf::parse_ini_file(flags.config_path);
  if (flags.seed) {
    cfg.set("task", "seed", std::to_string(*flags.seed));
    cfg.set("learner", "seed", std::to_string(*flags.seed));
  }
  if (flags.max_iters) cfg.set("solver", "max_iters", std::to_string(*flags.max_iters));
  if (flags.solver) cfg.set("solver", "kind", *flags.solver);
  return cfg;
}

nlcrf::SolverOptions solver_options(const IniConfig& cfg) {
  nlcrf::SolverOptions opts;
  opts.kind = nlcrf::parse_solver(cfg.get_or("solver", "kind", "md"));
  opts.max_iters = cfg.get_int_or("solver", "max_iters", opts.max_iters);
  opts.tol = cfg.get_double_or("solver", "tol", opts.tol);
  opts.beta = cfg.get_double_or("solver", "beta", opts.beta);
  opts.average_iterates = cfg.get_bool_or("solver", "average", false);
  opts.smoothness = cfg.get_double_or("solver", "smoothness", opts.smoothness);
  return opts;
}

nlcrf::LearnerConfig learner_config(const IniConfig& cfg) {
  nlcrf::LearnerConfig lc;
  const std::string algo = cfg.get_or("learner", "algorithm", "doubly-stochastic");
  if (algo == "double-loop") {
    lc.algorithm = nlcrf::LearnerAlgorithm::kDoubleLoop;
  } else if (algo == "doubly-stochastic") {
    lc.algorithm = nlcrf::LearnerAlgorithm::kDoublyStochastic;
  } else {
    throw std::runtime_error("config: unknown learner.algorithm '" + algo + "'");
  }
  lc.epochs = cfg.get_int_or("learner", "epochs", lc.epochs);
  lc.inner_steps = cfg.get_int_or("learner", "inner_steps", lc.inner_steps);
  lc.theta_step = cfg.get_double_or("learner", "theta_step", lc.theta_step);
  lc.psi_step = cfg.get_double_or("learner", "psi_step", lc.psi_step);
  lc.schedule = cfg.get_or("learner", "schedule", "constant") == "inv-sqrt"
                    ? nlcrf::StepSchedule::kInvSqrt
                    : nlcrf::StepSchedule::kConstant;
  lc.seed = static_cast<std::uint64_t>(cfg.get_int_or("learner", "seed", 0));
  lc.learn_theta = cfg.get_bool_or("learner", "learn_theta", true);
  lc.learn_psi = cfg.get_bool_or("learner", "learn_psi", true);
  lc.plateau_tol = cfg.get_double_or("learner", "plateau_tol", 0.0);
  lc.solver = solver_options(cfg);
  lc.solver.max_iters = cfg.get_int_or("learner", "solver_iters", 30);
  return lc;
}

// Everything a training or evaluation run needs, either freshly generated
// from [task] or loaded from the files it names.
struct TaskData {
  nlcrf::Dataset train, dev, test;
  std::unique_ptr<nlcrf::EnergyFunction> energy;
  std::optional<nlcrf::MeanMapFeatures> mean_map;
};

std::unique_ptr<nlcrf::EnergyFunction> prototype_energy_from(
    const IniConfig& cfg, const nlcrf::PrototypeBenchmark& bench, int num_states) {
  const std::string kind = cfg.get_or("energy", "kind", "prototype-full");
  const double psi_init = cfg.get_double_or("energy", "psi_init", 0.5);
  if (kind == "prototype-unigram") {
    return std::make_unique<nlcrf::PrototypeEnergy>(
        num_states, nlcrf::PrototypeMode::kUnigram, bench.unigram_prototypes, psi_init);
  }
  if (kind == "prototype-full" || kind == "none") {
    if (kind == "none") return std::make_unique<nlcrf::ZeroEnergy>();
    return std::make_unique<nlcrf::PrototypeEnergy>(
        num_states, nlcrf::PrototypeMode::kFull, bench.full_prototypes, psi_init);
  }
  throw std::runtime_error("config: unknown energy.kind '" + kind + "' for prototype task");
}

TaskData build_task_data(const IniConfig& cfg) {
  TaskData data;
  if (cfg.has("task", "train_file")) {
    data.train = nlcrf::load_dataset_file(cfg.get("task", "train_file"));
    if (cfg.has("task", "dev_file")) data.dev = nlcrf::load_dataset_file(cfg.get("task", "dev_file"));
    data.test = cfg.has("task", "test_file")
                    ? nlcrf::load_dataset_file(cfg.get("task", "test_file"))
                    : data.train;
    if (cfg.has("task", "energy_file")) {
      data.energy = nlcrf::load_energy_file(cfg.get("task", "energy_file"));
    } else {
      data.energy = std::make_unique<nlcrf::ZeroEnergy>();
    }
  } else {
    const std::string name = cfg.get("task", "name");
    if (name == "softcon") {
      nlcrf::SoftconSpec spec;
      spec.length = cfg.get_int_or("task", "n", spec.length);
      spec.num_states = cfg.get_int_or("task", "k", spec.num_states);
      spec.num_train = cfg.get_int_or("task", "train", spec.num_train);
      spec.num_dev = cfg.get_int_or("task", "dev", spec.num_dev);
      spec.num_test = cfg.get_int_or("task", "test", spec.num_test);
      spec.theta_scale = cfg.get_double_or("task", "theta_scale", spec.theta_scale);
      spec.feature_noise = cfg.get_double_or("task", "noise", spec.feature_noise);
      spec.seed = static_cast<std::uint64_t>(cfg.get_int_or("task", "seed", 7));
      auto bench = nlcrf::generate_softcon(spec);
      data.train = std::move(bench.train);
      data.dev = std::move(bench.dev);
      data.test = std::move(bench.test);
      data.energy = std::move(bench.energy);
    } else if (name == "prototype") {
      nlcrf::PrototypeSpec spec;
      spec.vocab_size = cfg.get_int_or("task", "vocab", spec.vocab_size);
      spec.min_length = cfg.get_int_or("task", "min_len", spec.min_length);
      spec.max_length = cfg.get_int_or("task", "max_len", spec.max_length);
      spec.num_states = cfg.get_int_or("task", "k", spec.num_states);
      spec.num_train = cfg.get_int_or("task", "train", spec.num_train);
      spec.num_dev = cfg.get_int_or("task", "dev", spec.num_dev);
      spec.num_test = cfg.get_int_or("task", "test", spec.num_test);
      spec.feature_noise = cfg.get_double_or("task", "noise", spec.feature_noise);
      spec.seed = static_cast<std::uint64_t>(cfg.get_int_or("task", "seed", 3));
      auto bench = nlcrf::generate_prototype(spec);
      data.energy = prototype_energy_from(cfg, bench, spec.num_states);
      data.train = std::move(bench.train);
      data.dev = std::move(bench.dev);
      data.test = std::move(bench.test);
    } else {
      throw std::runtime_error("config: task '" + name + "' does not produce a labeled dataset");
    }
  }
  if (cfg.get_bool_or("energy", "featurized", false)) {
    const int dim = cfg.get_int_or("energy", "mean_map_dim", 32);
    const double bandwidth = cfg.get_double_or("energy", "bandwidth", 1.0);
    const auto seed = static_cast<std::uint64_t>(cfg.get_int_or("energy", "mm_seed", 5));
    data.mean_map.emplace(dim, data.train.feature_dim, bandwidth, seed);
  }
  return data;
}

nlcrf::PsiParametrization initial_psi(const IniConfig& cfg, const nlcrf::EnergyFunction& energy,
                                      const std::optional<nlcrf::MeanMapFeatures>& mm) {
  const double psi_init = cfg.get_double_or("energy", "psi_init", 0.0);
  if (cfg.get_bool_or("energy", "featurized", false)) {
    if (!mm) throw std::runtime_error("config: energy.featurized without mean map features");
    const std::string link = cfg.get_or("energy", "link", "softplus");
    nlcrf::PsiLink l = link == "identity-project" ? nlcrf::PsiLink::kIdentityProject
                                                  : nlcrf::PsiLink::kSoftplus;
    return nlcrf::PsiParametrization::make_featurized(mm->num_features(), energy.num_psi(), l);
  }
  return nlcrf::PsiParametrization::make_constant(
      std::vector<double>(static_cast<size_t>(energy.num_psi()), psi_init));
}

int cmd_generate(const GlobalFlags& flags) {
  const IniConfig cfg = load_config(flags);
  const std::string out = flags.out_dir.empty() ? "." : flags.out_dir;
  std::filesystem::create_directories(out);
  const std::string name = cfg.get("task", "name");
  json summary;
  summary["task"] = name;
  if (name == "cgm") {
    nlcrf::CgmSpec spec;
    spec.grid_side = cfg.get_int_or("task", "grid", spec.grid_side);
    spec.length = cfg.get_int_or("task", "n", spec.length);
    spec.poisson_scale = cfg.get_double_or("task", "scale", spec.poisson_scale);
    spec.diffusion = cfg.get_double_or("task", "diffusion", spec.diffusion);
    spec.seed = static_cast<std::uint64_t>(cfg.get_int_or("task", "seed", 11));
    auto bench = nlcrf::generate_cgm(spec);
    nlcrf::save_model_file(bench.theta, out + "/model.txt");
    nlcrf::save_energy_file(*bench.energy, bench.theta.layout(), out + "/energy.txt");
    summary["model_fingerprint"] = nlcrf::model_fingerprint(bench.theta);
    summary["files"] = {out + "/model.txt", out + "/energy.txt"};
  } else {
    TaskData data = build_task_data(cfg);
    nlcrf::save_dataset_file(out + "/train.txt", data.train);
    nlcrf::save_dataset_file(out + "/dev.txt", data.dev);
    nlcrf::save_dataset_file(out + "/test.txt", data.test);
    const nlcrf::ChainLayout layout{data.train.examples.front().length(), data.train.num_states};
    nlcrf::save_energy_file(*data.energy, layout, out + "/energy.txt");
    summary["train_fingerprint"] = nlcrf::dataset_fingerprint(data.train);
    summary["dev_fingerprint"] = nlcrf::dataset_fingerprint(data.dev);
    summary["test_fingerprint"] = nlcrf::dataset_fingerprint(data.test);
    summary["files"] = {out + "/train.txt", out + "/dev.txt", out + "/test.txt",
                        out + "/energy.txt"};
  }
  std::cout << summary.dump(2) << '\n';
  return 0;
}

int cmd_train(const GlobalFlags& flags) {
  const IniConfig cfg = load_config(flags);
  const std::string out = flags.out_dir.empty() ? "." : flags.out_dir;
  std::filesystem::create_directories(out);
  TaskData data = build_task_data(cfg);

  nlcrf::ThetaParametrization theta0(data.train.feature_dim, data.train.num_states);
  nlcrf::PsiParametrization psi0 = initial_psi(cfg, *data.energy, data.mean_map);
  const nlcrf::LearnerConfig lc = learner_config(cfg);
  const nlcrf::MeanMapFeatures* mm = data.mean_map ? &*data.mean_map : nullptr;
  const nlcrf::TrainResult result = nlcrf::train(data.train, theta0, psi0, *data.energy, mm, lc);

  nlcrf::save_params_file(out + "/params.txt", result.theta, result.psi);
  json summary;
  summary["params_file"] = out + "/params.txt";
  summary["surrogate_history"] = result.surrogate_history;
  summary["diverged"] = result.diverged;
  summary["solve_count"] = result.solve_count;
  summary["update_count"] = result.update_count;
  summary["stale_updates"] = result.stale_updates;
  std::cout << summary.dump(2) << '\n';
  return result.diverged ? 1 : 0;
}

int cmd_infer(const GlobalFlags& flags, const std::string& model_path,
              const std::string& energy_path) {
  const IniConfig cfg = load_config(flags);
  const nlcrf::ChainModel model = nlcrf::load_model_file(model_path);
  std::unique_ptr<nlcrf::EnergyFunction> energy;
  if (energy_path.empty()) {
    energy = std::make_unique<nlcrf::ZeroEnergy>();
  } else {
    energy = nlcrf::load_energy_file(energy_path);
  }
  nlcrf::SolverOptions opts = solver_options(cfg);
  opts.record_trace = true;
  const nlcrf::SolveResult result = nlcrf::solve(model, *energy, opts);
  const nlcrf::Labeling decoded = nlcrf::map_decode(result.theta_tilde);

  json summary;
  summary["objective"] = result.objective;
  summary["iterations"] = result.iterations;
  summary["converged"] = result.converged;
  summary["oracle_calls"] = result.oracle_calls;
  summary["map"] = decoded;
  if (!flags.out_dir.empty()) {
    std::filesystem::create_directories(flags.out_dir);
    const std::string marginals_path = flags.out_dir + "/marginals.txt";
    std::ofstream m(marginals_path);
    if (!m) throw std::runtime_error("cannot write " + marginals_path);
    m << "nlcrf-marginals 1\n"
      << model.length() << ' ' << model.num_states() << '\n';
    nlcrf::write_doubles(m, result.marginals.values());
    const std::string trace_path = flags.out_dir + "/trace.txt";
    std::ofstream t(trace_path);
    if (!t) throw std::runtime_error("cannot write " + trace_path);
    nlcrf::write_trace(t, result.trace);
    summary["marginals_file"] = marginals_path;
    summary["trace_file"] = trace_path;
  }
  std::cout << summary.dump(2) << '\n';
  return 0;
}

int cmd_eval(const GlobalFlags& flags, const std::string& params_path) {
  const IniConfig cfg = load_config(flags);
  TaskData data = build_task_data(cfg);
  nlcrf::ThetaParametrization theta;
  nlcrf::PsiParametrization psi;
  nlcrf::load_params_file(params_path, &theta, &psi);
  const nlcrf::MeanMapFeatures* mm = data.mean_map ? &*data.mean_map : nullptr;
  const nlcrf::EvalMetrics metrics =
      nlcrf::evaluate(data.test, theta, psi, *data.energy, mm, solver_options(cfg));
  json summary;
  summary["token_accuracy"] = metrics.token_accuracy;
  summary["segment_f1"] = metrics.segment_f1;
  summary["mean_violations"] = metrics.mean_violations;
  summary["satisfaction_rate"] = metrics.satisfaction_rate;
  summary["num_examples"] = metrics.num_examples;
  std::cout << summary.dump(2) << '\n';
  return 0;
}

int cmd_bench(const GlobalFlags& flags) {
  const IniConfig cfg = load_config(flags);
  const std::string report = nlcrf::run_experiment(cfg, flags.out_dir);
  std::cout << report << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Chain CRFs with non-local energies: inference, learning, benchmarks"};
  app.require_subcommand(1);

  GlobalFlags flags;
  app.add_option("--config", flags.config_path, "Config file ([task]/[solver]/[learner]/[energy])");
  app.add_option("--seed", flags.seed, "Override task and learner seeds");
  app.add_option("--out", flags.out_dir, "Output directory");
  app.add_option("--max-iters", flags.max_iters, "Override solver iteration cap");
  app.add_option("--solver", flags.solver, "rda | md | acc-rda | euclidean")
      ->check(CLI::IsMember({"rda", "md", "acc-rda", "euclidean"}));

  auto* generate = app.add_subcommand("generate", "Write a synthetic benchmark to --out");
  auto* train = app.add_subcommand("train", "Train parameters on the configured task");
  auto* infer = app.add_subcommand("infer", "Solve one saved instance");
  std::string model_path;
  std::string energy_path;
  infer->add_option("--model", model_path, "Chain model file")->required();
  infer->add_option("--energy", energy_path, "Energy file (omit for the plain chain)");
  auto* eval = app.add_subcommand("eval", "Evaluate saved parameters on the configured task");
  std::string params_path;
  eval->add_option("--params", params_path, "Parameter file from train")->required();
  auto* bench = app.add_subcommand("bench", "Run the configured experiment end to end");

  CLI11_PARSE(app, argc, argv);

  try {
    if (generate->parsed()) return cmd_generate(flags);
    if (train->parsed()) return cmd_train(flags);
    if (infer->parsed()) return cmd_infer(flags, model_path, energy_path);
    if (eval->parsed()) return cmd_eval(flags, params_path);
    if (bench->parsed()) return cmd_bench(flags);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
