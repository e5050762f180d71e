// SPDX-License-Identifier: Apache-2.0
#include "fedld/data.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace fedld {

void validate_shards(const std::vector<Shard>& shards) {
  if (shards.empty()) throw DataError("no shards");
  double total = 0.0;
  for (const auto& s : shards) {
    if (s.selection_prob <= 0.0)
      throw DataError("shard " + std::to_string(s.id) +
                      ": selection probability must be positive");
    if (s.data.empty())
      throw DataError("shard " + std::to_string(s.id) + " is empty");
    total += s.selection_prob;
  }
  if (std::abs(total - 1.0) > 1e-12)
    throw DataError("shard selection probabilities sum to " +
                    std::to_string(total) + ", expected 1");
}

std::vector<double> selection_probs(const std::vector<Shard>& shards) {
  std::vector<double> f;
  f.reserve(shards.size());
  for (const auto& s : shards) f.push_back(s.selection_prob);
  return f;
}

Dataset pooled_dataset(const std::vector<Shard>& shards) {
  Dataset pooled;
  for (const auto& s : shards)
    pooled.insert(pooled.end(), s.data.begin(), s.data.end());
  return pooled;
}

std::string format_double(double x) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

void write_dataset_csv(const Dataset& data, int n_features, bool has_target,
                       std::ostream& out) {
  for (int k = 0; k < n_features; ++k) {
    if (k > 0) out << ',';
    out << 'x' << k;
  }
  if (has_target) {
    if (n_features > 0) out << ',';
    out << 'y';
  }
  out << '\n';
  for (const auto& d : data) {
    if (d.features.size() != n_features)
      throw DataError("datum feature length does not match header");
    for (int k = 0; k < n_features; ++k) {
      if (k > 0) out << ',';
      out << format_double(d.features[k]);
    }
    if (has_target) {
      if (!d.target) throw DataError("datum missing target column");
      if (n_features > 0) out << ',';
      out << format_double(*d.target);
    }
    out << '\n';
  }
}

Dataset read_dataset_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw DataError("empty dataset CSV");
  int n_features = 0;
  bool has_target = false;
  {
    std::stringstream header(line);
    std::string col;
    while (std::getline(header, col, ',')) {
      if (col == "y")
        has_target = true;
      else if (!col.empty() && col[0] == 'x')
        ++n_features;
      else
        throw DataError("unrecognized dataset column '" + col + "'");
    }
  }
  Dataset data;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream row(line);
    std::string cell;
    DataPoint d;
    d.features.resize(n_features);
    for (int k = 0; k < n_features; ++k) {
      if (!std::getline(row, cell, ',')) throw DataError("short CSV row");
      d.features[k] = std::stod(cell);
    }
    if (has_target) {
      if (!std::getline(row, cell, ',')) throw DataError("missing target cell");
      d.target = std::stod(cell);
    }
    data.push_back(std::move(d));
  }
  return data;
}

void write_dataset_csv_file(const Dataset& data, int n_features,
                            bool has_target, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot open for writing: " + path);
  write_dataset_csv(data, n_features, has_target, out);
}

Dataset read_dataset_csv_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open dataset: " + path);
  return read_dataset_csv(in);
}

}  // namespace fedld
