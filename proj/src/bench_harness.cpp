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

#include <chrono>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

#include "nlcrf/bench.hpp"
#include "nlcrf/text_io.hpp"

namespace nlcrf {

namespace {

using nlohmann::json;

std::string trim(const std::string& s) {
  const size_t begin = s.find_first_not_of(" \t\r\n");
  if (begin == std::string::npos) return "";
  const size_t end = s.find_last_not_of(" \t\r\n");
  return s.substr(begin, end - begin + 1);
}

[[noreturn]] void missing(const std::string& section, const std::string& key,
                          const char* why) {
  throw std::runtime_error("config: " + std::string(why) + " " + section + "." + key);
}

}  // namespace

bool IniConfig::has(const std::string& section, const std::string& key) const {
  const auto s = sections.find(section);
  return s != sections.end() && s->second.count(key) > 0;
}

std::string IniConfig::get(const std::string& section, const std::string& key) const {
  const auto s = sections.find(section);
  if (s == sections.end()) missing(section, key, "missing key");
  const auto k = s->second.find(key);
  if (k == s->second.end()) missing(section, key, "missing key");
  return k->second;
}

std::string IniConfig::get_or(const std::string& section, const std::string& key,
                              const std::string& fallback) const {
  return has(section, key) ? get(section, key) : fallback;
}

double IniConfig::get_double(const std::string& section, const std::string& key) const {
  const std::string v = get(section, key);
  try {
    size_t used = 0;
    const double out = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return out;
  } catch (const std::exception&) {
    missing(section, key, "unparsable number at");
  }
}

double IniConfig::get_double_or(const std::string& section, const std::string& key,
                                double fallback) const {
  return has(section, key) ? get_double(section, key) : fallback;
}

int IniConfig::get_int(const std::string& section, const std::string& key) const {
  const std::string v = get(section, key);
  try {
    size_t used = 0;
    const int out = std::stoi(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return out;
  } catch (const std::exception&) {
    missing(section, key, "unparsable integer at");
  }
}

int IniConfig::get_int_or(const std::string& section, const std::string& key,
                          int fallback) const {
  return has(section, key) ? get_int(section, key) : fallback;
}

bool IniConfig::get_bool_or(const std::string& section, const std::string& key,
                            bool fallback) const {
  if (!has(section, key)) return fallback;
  const std::string v = get(section, key);
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  missing(section, key, "unparsable boolean at");
}

void IniConfig::set(const std::string& section, const std::string& key,
                    const std::string& value) {
  sections[section][key] = value;
}

IniConfig parse_ini(std::istream& in) {
  IniConfig cfg;
  std::string line;
  std::string section;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const size_t comment = line.find_first_of("#;");
    if (comment != std::string::npos) line.erase(comment);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') {
        throw std::runtime_error("config: unterminated section header at line " +
                                 std::to_string(line_no));
      }
      section = trim(line.substr(1, line.size() - 2));
      if (section.empty()) {
        throw std::runtime_error("config: empty section name at line " + std::to_string(line_no));
      }
      cfg.sections[section];  // sections may legitimately stay empty
      continue;
    }
    const size_t eq = line.find('=');
    if (eq == std::string::npos) {
      throw std::runtime_error("config: expected key = value at line " + std::to_string(line_no));
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) {
      throw std::runtime_error("config: empty key at line " + std::to_string(line_no));
    }
    if (section.empty()) {
      throw std::runtime_error("config: key '" + key + "' outside any section (line " +
                               std::to_string(line_no) + ")");
    }
    cfg.sections[section][key] = value;
  }
  return cfg;
}

IniConfig parse_ini_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("config: cannot read " + path);
  return parse_ini(in);
}

void write_trace(std::ostream& out, const std::vector<IterationRecord>& trace) {
  out << "iteration\tobjective\tobjective_avg\tdelta\tmax_violation\telapsed_seconds\n";
  for (const IterationRecord& r : trace) {
    out << r.iteration << '\t' << format_double(r.objective) << '\t'
        << format_double(r.objective_avg) << '\t' << format_double(r.delta) << '\t'
        << format_double(r.max_violation) << '\t' << format_double(r.elapsed_seconds) << '\n';
  }
}

namespace {

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

SolverOptions solver_options_from(const IniConfig& cfg) {
  SolverOptions opts;
  opts.kind = parse_solver(cfg.get_or("solver", "kind", "md"));
  opts.max_iters = cfg.get_int_or("solver", "max_iters", opts.max_iters);
  opts.tol = cfg.get_double_or("solver", "tol", opts.tol);
  opts.beta = cfg.get_double_or("solver", "beta", opts.beta);
  opts.average_iterates = cfg.get_bool_or("solver", "average", opts.average_iterates);
  opts.smoothness = cfg.get_double_or("solver", "smoothness", opts.smoothness);
  return opts;
}

LearnerConfig learner_config_from(const IniConfig& cfg) {
  LearnerConfig lc;
  const std::string algo = cfg.get_or("learner", "algorithm", "doubly-stochastic");
  if (algo == "doubly-stochastic") {
    lc.algorithm = LearnerAlgorithm::kDoublyStochastic;
  } else if (algo == "double-loop") {
    lc.algorithm = LearnerAlgorithm::kDoubleLoop;
  } else {
    throw std::runtime_error("config: unknown learner.algorithm '" + algo + "'");
  }
  lc.epochs = cfg.get_int_or("learner", "epochs", lc.epochs);
  lc.inner_steps = cfg.get_int_or("learner", "inner_steps", lc.inner_steps);
  lc.theta_step = cfg.get_double_or("learner", "theta_step", lc.theta_step);
  lc.psi_step = cfg.get_double_or("learner", "psi_step", lc.psi_step);
  lc.schedule = cfg.get_or("learner", "schedule", "constant") == "inv-sqrt"
                    ? StepSchedule::kInvSqrt
                    : StepSchedule::kConstant;
  lc.seed = static_cast<std::uint64_t>(cfg.get_int_or("learner", "seed", 0));
  lc.learn_theta = cfg.get_bool_or("learner", "learn_theta", true);
  lc.learn_psi = cfg.get_bool_or("learner", "learn_psi", true);
  lc.plateau_tol = cfg.get_double_or("learner", "plateau_tol", lc.plateau_tol);
  lc.solver = solver_options_from(cfg);
  lc.solver.max_iters = cfg.get_int_or("learner", "solver_iters", 30);
  return lc;
}

json metrics_json(const EvalMetrics& m) {
  return json{{"token_accuracy", m.token_accuracy},
              {"segment_f1", m.segment_f1},
              {"mean_violations", m.mean_violations},
              {"satisfaction_rate", m.satisfaction_rate},
              {"num_examples", m.num_examples}};
}

json config_echo(const IniConfig& cfg) {
  json echo = json::object();
  for (const auto& [section, entries] : cfg.sections) {
    json s = json::object();
    for (const auto& [k, v] : entries) s[k] = v;
    echo[section] = s;
  }
  return echo;
}

json history_json(const std::vector<double>& history) {
  return json(history);
}

// --- softcon: baseline chain, then psi learning on the count penalties -----

json run_softcon(const IniConfig& cfg) {
  SoftconSpec spec;
  spec.length = cfg.get_int_or("task", "n", spec.length);
  spec.num_states = cfg.get_int_or("task", "k", spec.num_states);
  spec.num_train = cfg.get_int_or("task", "train", spec.num_train);
  spec.num_dev = cfg.get_int_or("task", "dev", spec.num_dev);
  spec.num_test = cfg.get_int_or("task", "test", spec.num_test);
  spec.theta_scale = cfg.get_double_or("task", "theta_scale", spec.theta_scale);
  spec.feature_noise = cfg.get_double_or("task", "noise", spec.feature_noise);
  spec.seed = static_cast<std::uint64_t>(cfg.get_int_or("task", "seed", 7));

  const auto t0 = std::chrono::steady_clock::now();
  SoftconBenchmark bench = generate_softcon(spec);
  const double gen_seconds = seconds_since(t0);

  LearnerConfig lc = learner_config_from(cfg);
  const SolverOptions eval_solver = solver_options_from(cfg);
  const double psi_init = cfg.get_double_or("energy", "psi_init", 0.0);
  const bool learn_psi = cfg.get_bool_or("learner", "learn_psi", true);

  json report;
  report["task"] = "softcon";
  report["train_fingerprint"] = dataset_fingerprint(bench.train);
  report["test_fingerprint"] = dataset_fingerprint(bench.test);
  report["generate_seconds"] = gen_seconds;

  // Baseline: plain chain, psi pinned at zero.
  ThetaParametrization theta0(bench.train.feature_dim, bench.train.num_states);
  PsiParametrization psi_zero = PsiParametrization::make_constant(
      std::vector<double>(static_cast<size_t>(bench.energy->num_psi()), 0.0));
  LearnerConfig base_cfg = lc;
  base_cfg.learn_psi = false;
  const auto t1 = std::chrono::steady_clock::now();
  TrainResult base = train(bench.train, theta0, psi_zero, *bench.energy, nullptr, base_cfg);
  const double base_train_seconds = seconds_since(t1);
  const EvalMetrics base_test =
      evaluate(bench.test, base.theta, base.psi, *bench.energy, nullptr, eval_solver);
  report["baseline"] = {{"metrics", metrics_json(base_test)},
                        {"surrogate_history", history_json(base.surrogate_history)},
                        {"train_seconds", base_train_seconds},
                        {"diverged", base.diverged},
                        {"stale_updates", base.stale_updates},
                        {"solve_count", base.solve_count},
                        {"update_count", base.update_count}};

  if (learn_psi) {
    // Augmented: start from the baseline chain, learn the penalty weights.
    PsiParametrization psi0 = PsiParametrization::make_constant(
        std::vector<double>(static_cast<size_t>(bench.energy->num_psi()), psi_init));
    LearnerConfig aug_cfg = lc;
    aug_cfg.learn_psi = true;
    const auto t2 = std::chrono::steady_clock::now();
    TrainResult aug = train(bench.train, base.theta, psi0, *bench.energy, nullptr, aug_cfg);
    const double aug_train_seconds = seconds_since(t2);
    const EvalMetrics aug_test =
        evaluate(bench.test, aug.theta, aug.psi, *bench.energy, nullptr, eval_solver);
    report["augmented"] = {{"metrics", metrics_json(aug_test)},
                           {"surrogate_history", history_json(aug.surrogate_history)},
                           {"train_seconds", aug_train_seconds},
                           {"psi", aug.psi.constant},
                           {"diverged", aug.diverged},
                           {"stale_updates", aug.stale_updates},
                           {"solve_count", aug.solve_count},
                           {"update_count", aug.update_count}};
    report["violation_reduction"] =
        base_test.mean_violations > 0.0
            ? 1.0 - aug_test.mean_violations / base_test.mean_violations
            : 0.0;
  }
  return report;
}

// --- prototype: base chain plus four energy variants ------------------------

json run_prototype(const IniConfig& cfg) {
  PrototypeSpec spec;
  spec.vocab_size = cfg.get_int_or("task", "vocab", spec.vocab_size);
  spec.min_length = cfg.get_int_or("task", "min_len", spec.min_length);
  spec.max_length = cfg.get_int_or("task", "max_len", spec.max_length);
  spec.num_states = cfg.get_int_or("task", "k", spec.num_states);
  spec.num_train = cfg.get_int_or("task", "train", spec.num_train);
  spec.num_dev = cfg.get_int_or("task", "dev", spec.num_dev);
  spec.num_test = cfg.get_int_or("task", "test", spec.num_test);
  spec.feature_noise = cfg.get_double_or("task", "noise", spec.feature_noise);
  spec.seed = static_cast<std::uint64_t>(cfg.get_int_or("task", "seed", 3));

  PrototypeBenchmark bench = generate_prototype(spec);
  LearnerConfig lc = learner_config_from(cfg);
  const SolverOptions eval_solver = solver_options_from(cfg);

  json report;
  report["task"] = "prototype";
  report["train_fingerprint"] = dataset_fingerprint(bench.train);
  report["test_fingerprint"] = dataset_fingerprint(bench.test);

  // Base chain, no energy.
  ThetaParametrization theta0(bench.train.feature_dim, bench.train.num_states);
  PsiParametrization psi_none = PsiParametrization::make_constant({});
  ZeroEnergy zero;
  LearnerConfig base_cfg = lc;
  base_cfg.learn_psi = false;
  const auto t0 = std::chrono::steady_clock::now();
  TrainResult base = train(bench.train, theta0, psi_none, zero, nullptr, base_cfg);
  report["base"] = {{"metrics", metrics_json(evaluate(bench.test, base.theta, psi_none, zero,
                                                      nullptr, eval_solver))},
                    {"train_seconds", seconds_since(t0)},
                    {"surrogate_history", history_json(base.surrogate_history)}};

  const double psi_init = cfg.get_double_or("energy", "psi_init", 0.5);
  const int mean_map_dim = cfg.get_int_or("energy", "mean_map_dim", 32);
  const double bandwidth = cfg.get_double_or("energy", "bandwidth", 1.0);
  const std::uint64_t mm_seed = static_cast<std::uint64_t>(cfg.get_int_or("energy", "mm_seed", 5));
  const bool tune_psi = cfg.get_bool_or("learner", "learn_psi", true);
  MeanMapFeatures mm(mean_map_dim, bench.train.feature_dim, bandwidth, mm_seed);

  const auto run_variant = [&](const char* name, PrototypeMode mode, bool featurized) {
    const auto& protos = mode == PrototypeMode::kUnigram ? bench.unigram_prototypes
                                                         : bench.full_prototypes;
    PrototypeEnergy energy(spec.num_states, mode, protos, psi_init);
    PsiParametrization psi0;
    if (featurized) {
      psi0 = PsiParametrization::make_featurized(mean_map_dim, 1, PsiLink::kSoftplus);
    } else {
      psi0 = PsiParametrization::make_constant({psi_init});
    }
    LearnerConfig var_cfg = lc;
    var_cfg.learn_theta = false;  // the chain stays as the base learned it
    var_cfg.learn_psi = tune_psi;
    const auto start = std::chrono::steady_clock::now();
    TrainResult r = train(bench.train, base.theta, psi0, energy, featurized ? &mm : nullptr,
                          var_cfg);
    const EvalMetrics m = evaluate(bench.test, r.theta, r.psi, energy,
                                   featurized ? &mm : nullptr, eval_solver);
    json entry = {{"metrics", metrics_json(m)},
                  {"train_seconds", seconds_since(start)},
                  {"surrogate_history", history_json(r.surrogate_history)},
                  {"diverged", r.diverged}};
    if (!featurized) entry["psi"] = r.psi.constant;
    report[name] = entry;
  };

  run_variant("unigram_constant", PrototypeMode::kUnigram, false);
  run_variant("full_constant", PrototypeMode::kFull, false);
  run_variant("unigram_featurized", PrototypeMode::kUnigram, true);
  run_variant("full_featurized", PrototypeMode::kFull, true);
  return report;
}

// --- cgm: one instance, two solvers, objective parity and wall time --------

json run_cgm(const IniConfig& cfg, const std::string& out_dir) {
  CgmSpec spec;
  spec.grid_side = cfg.get_int_or("task", "grid", spec.grid_side);
  spec.length = cfg.get_int_or("task", "n", spec.length);
  spec.poisson_scale = cfg.get_double_or("task", "scale", spec.poisson_scale);
  spec.diffusion = cfg.get_double_or("task", "diffusion", spec.diffusion);
  spec.seed = static_cast<std::uint64_t>(cfg.get_int_or("task", "seed", 11));

  CgmBenchmark bench = generate_cgm(spec);

  SolverOptions base_opts = solver_options_from(cfg);
  base_opts.record_trace = true;

  json report;
  report["task"] = "cgm";
  report["model_fingerprint"] = model_fingerprint(bench.theta);
  report["num_states"] = spec.grid_side * spec.grid_side;
  report["length"] = spec.length;

  const std::string primary = cfg.get_or("solver", "kind", "rda");
  const std::string baseline = cfg.get_or("solver", "compare_with", "euclidean");
  json runs = json::object();
  std::map<std::string, double> seconds;
  std::map<std::string, double> objectives;
  for (const std::string& name : {primary, baseline}) {
    SolverOptions opts = base_opts;
    opts.kind = parse_solver(name);
    const auto start = std::chrono::steady_clock::now();
    const SolveResult res = solve(bench.theta, *bench.energy, opts);
    const double elapsed = seconds_since(start);
    seconds[name] = elapsed;
    objectives[name] = res.objective;
    runs[name] = {{"objective", res.objective},
                  {"iterations", res.iterations},
                  {"converged", res.converged},
                  {"oracle_calls", res.oracle_calls},
                  {"seconds", elapsed}};
    if (!out_dir.empty()) {
      const std::string trace_path = out_dir + "/trace-" + name + ".txt";
      std::ofstream trace(trace_path);
      if (!trace) throw std::runtime_error("cannot write " + trace_path);
      write_trace(trace, res.trace);
      runs[name]["trace_file"] = trace_path;
    }
  }
  report["runs"] = runs;
  report["objective_gap"] = std::abs(objectives[primary] - objectives[baseline]);
  report["speedup"] = seconds[primary] > 0.0 ? seconds[baseline] / seconds[primary] : 0.0;
  return report;
}

}  // namespace

std::string run_experiment(const IniConfig& config, const std::string& out_dir) {
  const std::string task = config.get("task", "name");
  if (!out_dir.empty()) std::filesystem::create_directories(out_dir);

  json report;
  const auto start = std::chrono::steady_clock::now();
  if (task == "softcon") {
    report = run_softcon(config);
  } else if (task == "prototype") {
    report = run_prototype(config);
  } else if (task == "cgm") {
    report = run_cgm(config, out_dir);
  } else {
    throw std::runtime_error("config: unknown task.name '" + task + "'");
  }
  report["total_seconds"] = seconds_since(start);
  report["config"] = config_echo(config);

  const std::string text = report.dump(2);
  if (!out_dir.empty()) {
    const std::string path = out_dir + "/report.json";
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << text << '\n';
  }
  return text;
}

}  // namespace nlcrf
