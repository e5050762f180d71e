// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "fedld/types.hpp"

namespace fedld {

/// One observation. `features` is empty for pure-label models (Bernoulli);
/// `target` is the regression response or the binary label.
struct DataPoint {
  Vector features;
  std::optional<double> target;
};

using Dataset = std::vector<DataPoint>;

/// One client's immutable slice of the pooled data, with its selection
/// probability f_s.
struct Shard {
  int id = 0;
  Dataset data;
  double selection_prob = 1.0;
  int size() const { return static_cast<int>(data.size()); }
};

/// Checks f_s > 0 for all shards and sum(f_s) == 1 within 1e-12.
void validate_shards(const std::vector<Shard>& shards);

std::vector<double> selection_probs(const std::vector<Shard>& shards);

Dataset pooled_dataset(const std::vector<Shard>& shards);

// CSV: header "x0,...,x{k-1}[,y]", one datum per row, doubles round-trip
// exactly. A lone "y" column means no features.
void write_dataset_csv(const Dataset& data, int n_features, bool has_target,
                       std::ostream& out);
Dataset read_dataset_csv(std::istream& in);

void write_dataset_csv_file(const Dataset& data, int n_features,
                            bool has_target, const std::string& path);
Dataset read_dataset_csv_file(const std::string& path);

/// Round-trip-exact decimal formatting used by all CSV writers.
std::string format_double(double x);

}  // namespace fedld
