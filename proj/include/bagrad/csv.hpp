// Copyright (c) 2026 The bagrad authors. All rights reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Deterministic CSV assembly. Doubles are rendered with shortest
// round-trip formatting so identical values give identical bytes.

#pragma once

#include <charconv>
#include <string>
#include <vector>

namespace bagrad {

inline std::string format_double(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

// One row of the shared experiment schema:
//   experiment,sigma_or_iter,loss_tag,seed,value,sentinel_flag
// sentinel_flag = 1 marks undefined values (e.g. infinite SNR at zero
// noise); their value column is 0 by convention.
struct CsvRow {
  std::string experiment;
  double sigma_or_iter = 0.0;
  std::string loss_tag;
  std::uint64_t seed = 0;
  double value = 0.0;
  bool sentinel = false;
};

inline std::string csv_header() {
  return "experiment,sigma_or_iter,loss_tag,seed,value,sentinel_flag\n";
}

inline std::string to_csv(const std::vector<CsvRow>& rows) {
  std::string out = csv_header();
  for (const CsvRow& r : rows) {
    out += r.experiment;
    out += ',';
    out += format_double(r.sigma_or_iter);
    out += ',';
    out += r.loss_tag;
    out += ',';
    out += std::to_string(r.seed);
    out += ',';
    out += format_double(r.sentinel ? 0.0 : r.value);
    out += ',';
    out += r.sentinel ? '1' : '0';
    out += '\n';
  }
  return out;
}

}  // namespace bagrad
