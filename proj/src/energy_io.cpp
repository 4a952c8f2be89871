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

#include <fstream>
#include <istream>
#include <ostream>
#include <stdexcept>

#include "nlcrf/energies.hpp"
#include "nlcrf/text_io.hpp"

namespace nlcrf {
namespace {

const char* loss_name(MeasurementLoss loss) {
  switch (loss) {
    case MeasurementLoss::kSmoothedHinge:
      return "smoothed_hinge";
    case MeasurementLoss::kSquare:
      return "square";
  }
  throw std::logic_error("loss_name: unknown loss");
}

MeasurementLoss parse_loss(const std::string& name) {
  if (name == "smoothed_hinge") return MeasurementLoss::kSmoothedHinge;
  if (name == "square") return MeasurementLoss::kSquare;
  throw std::runtime_error("energy file: unknown loss '" + name + "'");
}

template <typename T>
T read_or_throw(std::istream& in, const char* what) {
  T value;
  if (!(in >> value)) throw std::runtime_error(std::string("energy file: expected ") + what);
  return value;
}

}  // namespace

void save_energy(const EnergyFunction& energy, const ChainLayout& layout, std::ostream& out) {
  out << "nlcrf-energy 1\n";
  out << "layout " << layout.length << ' ' << layout.num_states << '\n';

  if (dynamic_cast<const ZeroEnergy*>(&energy)) {
    out << "kind none\n";
    return;
  }
  if (const auto* e = dynamic_cast<const MeasurementEnergy*>(&energy)) {
    const auto psi = e->psi();
    out << "kind measurements " << e->measurements().size() << '\n';
    for (size_t j = 0; j < e->measurements().size(); ++j) {
      const Measurement& m = e->measurements()[j];
      out << loss_name(m.loss) << ' ' << format_double(psi[j]) << ' ' << format_double(m.offset)
          << ' ' << m.coefficients.size();
      for (const auto& [index, coefficient] : m.coefficients) {
        out << ' ' << index << ' ' << format_double(coefficient);
      }
      out << '\n';
    }
    return;
  }
  if (const auto* e = dynamic_cast<const MeanFieldEnergy*>(&energy)) {
    out << "kind meanfield " << e->clusters().size() << '\n';
    for (const Cluster& cluster : e->clusters()) {
      out << "cluster " << cluster.positions.size();
      for (int pos : cluster.positions) out << ' ' << pos;
      out << '\n';
      write_doubles(out, cluster.table);
    }
    return;
  }
  if (const auto* e = dynamic_cast<const PrototypeEnergy*>(&energy)) {
    out << "kind prototype " << (e->mode() == PrototypeMode::kUnigram ? "unigram" : "full") << ' '
        << format_double(e->psi()[0]) << ' ' << e->prototypes().size() << '\n';
    for (const auto& prototype : e->prototypes()) {
      out << prototype.size() << ' ';
      write_doubles(out, prototype);
    }
    return;
  }
  if (const auto* e = dynamic_cast<const PoissonEnergy*>(&energy)) {
    out << "kind poisson " << format_double(e->scale()) << ' ' << e->observations().size() << '\n';
    for (const CountObservation& obs : e->observations()) {
      out << obs.flat_index << ' ' << format_double(obs.count) << '\n';
    }
    return;
  }
  throw std::invalid_argument("save_energy: unsupported energy type");
}

std::unique_ptr<EnergyFunction> load_energy(std::istream& in, ChainLayout* layout_out) {
  expect_header(in, "nlcrf-energy", 1);
  std::string keyword = read_or_throw<std::string>(in, "'layout'");
  if (keyword != "layout") throw std::runtime_error("energy file: expected 'layout'");
  const int n = read_or_throw<int>(in, "chain length");
  const int k = read_or_throw<int>(in, "state count");
  const ChainLayout layout(n, k);
  if (layout_out) *layout_out = layout;

  keyword = read_or_throw<std::string>(in, "'kind'");
  if (keyword != "kind") throw std::runtime_error("energy file: expected 'kind'");
  const std::string kind = read_or_throw<std::string>(in, "energy kind");

  if (kind == "none") return std::make_unique<ZeroEnergy>();

  if (kind == "measurements") {
    const int count = read_or_throw<int>(in, "measurement count");
    std::vector<Measurement> measurements(count);
    std::vector<double> psi(count);
    for (int j = 0; j < count; ++j) {
      measurements[j].loss = parse_loss(read_or_throw<std::string>(in, "loss name"));
      psi[j] = read_or_throw<double>(in, "weight");
      measurements[j].offset = read_or_throw<double>(in, "offset");
      const int nnz = read_or_throw<int>(in, "coefficient count");
      measurements[j].coefficients.resize(nnz);
      for (auto& [index, coefficient] : measurements[j].coefficients) {
        index = read_or_throw<int>(in, "coefficient index");
        coefficient = read_or_throw<double>(in, "coefficient value");
      }
    }
    return std::make_unique<MeasurementEnergy>(layout, std::move(measurements), std::move(psi));
  }

  if (kind == "meanfield") {
    const int count = read_or_throw<int>(in, "cluster count");
    std::vector<Cluster> clusters(count);
    for (Cluster& cluster : clusters) {
      keyword = read_or_throw<std::string>(in, "'cluster'");
      if (keyword != "cluster") throw std::runtime_error("energy file: expected 'cluster'");
      const int size = read_or_throw<int>(in, "cluster size");
      cluster.positions.resize(size);
      for (int& pos : cluster.positions) pos = read_or_throw<int>(in, "cluster position");
      size_t entries = 1;
      for (int m = 0; m < size; ++m) entries *= static_cast<size_t>(k);
      cluster.table.resize(entries);
      for (double& v : cluster.table) v = read_or_throw<double>(in, "table entry");
    }
    return std::make_unique<MeanFieldEnergy>(layout, std::move(clusters));
  }

  if (kind == "prototype") {
    const std::string mode_name = read_or_throw<std::string>(in, "prototype mode");
    PrototypeMode mode;
    if (mode_name == "unigram") {
      mode = PrototypeMode::kUnigram;
    } else if (mode_name == "full") {
      mode = PrototypeMode::kFull;
    } else {
      throw std::runtime_error("energy file: unknown prototype mode '" + mode_name + "'");
    }
    const double psi = read_or_throw<double>(in, "weight");
    const int count = read_or_throw<int>(in, "prototype count");
    std::vector<std::vector<double>> prototypes(count);
    for (auto& prototype : prototypes) {
      const int entries = read_or_throw<int>(in, "prototype size");
      prototype.resize(entries);
      for (double& v : prototype) v = read_or_throw<double>(in, "prototype entry");
    }
    return std::make_unique<PrototypeEnergy>(layout.num_states, mode, std::move(prototypes), psi);
  }

  if (kind == "poisson") {
    const double scale = read_or_throw<double>(in, "scale");
    const int count = read_or_throw<int>(in, "observation count");
    std::vector<CountObservation> observations(count);
    for (CountObservation& obs : observations) {
      obs.flat_index = read_or_throw<int>(in, "observation index");
      obs.count = read_or_throw<double>(in, "observation count value");
    }
    return std::make_unique<PoissonEnergy>(layout, std::move(observations), scale);
  }

  throw std::runtime_error("energy file: unknown kind '" + kind + "'");
}

void save_energy_file(const EnergyFunction& energy, const ChainLayout& layout,
                      const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  save_energy(energy, layout, out);
  if (!out) throw std::runtime_error("write failed: " + path);
}

std::unique_ptr<EnergyFunction> load_energy_file(const std::string& path,
                                                 ChainLayout* layout_out) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open for reading: " + path);
  return load_energy(in, layout_out);
}

}  // namespace nlcrf
