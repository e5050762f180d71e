// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include <json.hpp>

#include "fedld/dynamics.hpp"
#include "fedld/estimators.hpp"
#include "fedld/types.hpp"

namespace fedld {

/// One simulated chain = `rounds` client visits of `local_updates` Langevin
/// steps each. Replica chains (chains > 1) use derived streams: replica c
/// draws client selections from stream id 2c and chain noise/batches from
/// stream id 2c+1, so scheduler and chain consumption never interleave.
struct FederationConfig {
  EstimatorKind estimator;
  StepSchedule schedule;
  int batch_size = 10;   // m
  int local_updates = 1; // steps per client visit
  int rounds = 1;        // client visits per chain
  long burn_in = 0;      // leading steps dropped from the trace (global)
  int thinning = 1;      // keep every k-th post-burn-in step
  int chains = 1;        // independent replicas
  std::uint64_t seed = 0;
  Vector initial_theta;  // empty -> model-dependent default (zeros)
};

void validate_config(const FederationConfig& cfg, int n_shards);

struct TraceRecord {
  int chain = 0;
  int round = 0;
  int shard = 0;
  long t = 0;
  Vector theta;
};

/// Kept posterior samples plus run metadata. Records are ordered by
/// (chain, t).
struct ChainTrace {
  std::vector<TraceRecord> records;
  nlohmann::json metadata;

  int dimension() const {
    return records.empty() ? 0 : static_cast<int>(records.front().theta.size());
  }
  int n_chains() const;
};

/// Server-side scheduler draw: index ~ Categorical(f_1, ..., f_S).
int select_client(const std::vector<double>& probs, RandomStream& rng);

/// Client-side burst: local_updates iterations of
/// minibatch -> estimator -> Langevin step. Returns the final state and every
/// intermediate theta (burn-in/thinning are applied by the caller).
/// `surrogates` must be present iff the estimator is CGDSGLD.
std::pair<ChainState, std::vector<Vector>> client_update(
    ChainState state, const ModelSpec& model, const Shard& shard,
    const FederationConfig& cfg, const SurrogateSet* surrogates);

/// Full simulation: repeat `rounds` times select_client -> client_update,
/// then apply global burn-in and thinning. Deterministic given the seed;
/// replica chains are independent, so the OpenMP path is bit-identical to
/// the serial one.
ChainTrace run_simulation(const ModelSpec& model,
                          const std::vector<Shard>& shards,
                          const FederationConfig& cfg,
                          const SurrogateSet* surrogates = nullptr,
                          Exec exec = Exec::OpenMP);

// Shard construction strategies.
struct EqualSplit {};                       // random disjoint equal shards
struct LabelBeta { double a = 1.0; double b = 1.0; };  // Beta-drawn label mix
struct ByMeans {                            // synthetic Gaussian blobs
  std::vector<Vector> means;
  int points_per_shard = 0;
};
using ShardStrategy = std::variant<EqualSplit, LabelBeta, ByMeans>;

/// EqualSplit/LabelBeta partition `pooled` (disjoint, covering); ByMeans
/// generates fresh N(mean_s, I) shards and ignores `pooled`. Selection
/// probabilities are set size-proportional (f_s = N_s / N).
std::vector<Shard> make_shards(const Dataset& pooled,
                               const ShardStrategy& strategy, int n_shards,
                               RandomStream& rng);

// Trace serialization. CSV: header chain,round,shard,t,theta_0..theta_{d-1};
// doubles round-trip exactly. The binary form is a compact alternative.
void write_trace_csv(const ChainTrace& trace, std::ostream& out);
ChainTrace read_trace_csv(std::istream& in);
void write_trace_csv_file(const ChainTrace& trace, const std::string& path);
ChainTrace read_trace_csv_file(const std::string& path);

void write_trace_binary(const ChainTrace& trace, std::ostream& out);
ChainTrace read_trace_binary(std::istream& in);
void write_trace_binary_file(const ChainTrace& trace, const std::string& path);
ChainTrace read_trace_binary_file(const std::string& path);

}  // namespace fedld
