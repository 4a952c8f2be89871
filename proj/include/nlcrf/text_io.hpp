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

#ifndef NLCRF_TEXT_IO_HPP_
#define NLCRF_TEXT_IO_HPP_

#include <cstdio>
#include <istream>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>

namespace nlcrf {

// %.17g keeps finite doubles bit-identical across a save/load cycle.
inline std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline void write_doubles(std::ostream& out, std::span<const double> values) {
  for (size_t i = 0; i < values.size(); ++i) {
    if (i) out << ' ';
    out << format_double(values[i]);
  }
  out << '\n';
}

// First line of every file: "<tag> <version>".
inline void expect_header(std::istream& in, const std::string& tag, int version) {
  std::string got_tag;
  int got_version = 0;
  if (!(in >> got_tag >> got_version)) {
    throw std::runtime_error("missing header, expected '" + tag + " " + std::to_string(version) + "'");
  }
  if (got_tag != tag) {
    throw std::runtime_error("bad file tag '" + got_tag + "', expected '" + tag + "'");
  }
  if (got_version != version) {
    throw std::runtime_error("unsupported " + tag + " version " + std::to_string(got_version) +
                             ", expected " + std::to_string(version));
  }
}

}  // namespace nlcrf

#endif  // NLCRF_TEXT_IO_HPP_
