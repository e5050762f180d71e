// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "fedld/diagnostics.hpp"
#include "fedld/federation.hpp"
#include "fedld/surrogates.hpp"

namespace fedld {

/// Parsed experiment description (see README for the JSON schema). The
/// config hash covers {model, data, federation, surrogates, seed} — the
/// fields that determine the trace — and is stamped into every output.
struct ExperimentConfig {
  ModelSpec model;
  std::string data_manifest;
  std::string heldout_path;

  FederationConfig federation;

  enum class SurrogateSource { None, Analytic, LocalSgld, FromFile };
  SurrogateSource surrogate_source = SurrogateSource::None;
  SurrogateScale surrogate_scale = SurrogateScale::ShardData;
  bool surrogate_diagonal = false;
  double surrogate_jitter = 1e-6;
  std::string surrogate_dir = "surrogates";
  LocalSgldConfig local_sgld;

  bool want_mse = false;
  std::string mse_test_function = "identity";
  bool want_moments = false;
  Vector moments_theta;
  int moments_batch_size = 1;
  bool want_grid = false;
  GridSpec grid;
  bool want_avg_loglik = false;
  int loglik_stride = 1;

  std::string out_dir = ".";
  std::uint64_t seed = 0;
};

ExperimentConfig config_from_json(const nlohmann::json& j);
nlohmann::json config_to_json(const ExperimentConfig& cfg);
ExperimentConfig load_config_file(const std::string& path);
void validate_experiment(const ExperimentConfig& cfg);

/// FNV-1a hash (hex) of the canonical trace-determining subset of the config.
std::string config_hash(const ExperimentConfig& cfg);

/// Shards plus the manifest they were loaded from.
struct DatasetBundle {
  std::vector<Shard> shards;
  nlohmann::json manifest;
  int total_size() const;
};
DatasetBundle load_manifest(const std::string& path);

// Dataset synthesis presets.
struct SynthSpec {
  enum class Preset { Blobs2D, BernoulliCoins, LinRegSynthetic };
  Preset preset = Preset::Blobs2D;
  int n_shards = 10;
  int per_shard = 200;
  int dim = 2;           // LinRegSynthetic feature dimension
  double lambda = 1.0;   // LinRegSynthetic prior precision
  double sigma_e = 1.0;  // LinRegSynthetic noise scale
  int heldout = 0;       // LinRegSynthetic held-out rows
  std::uint64_t seed = 0;
  std::string out_dir = ".";
};

/// Writes per-shard CSV files plus manifest.json (and heldout.csv for the
/// regression preset) into spec.out_dir.
void cmd_synth(const SynthSpec& spec);

/// Builds the per-shard surrogates from the configured source and writes one
/// JSON file per shard, the product file, and surrogates_manifest.json.
void cmd_fit_surrogates(const ExperimentConfig& cfg);

/// Runs the federated simulation and writes trace.csv + trace.meta.json
/// (and trace.bin when requested in the config).
void cmd_run(const ExperimentConfig& cfg);

/// Emits the requested diagnostics (MSE curves, estimator moments, grid
/// bound constants, held-out average log-likelihood) as CSV + JSON for the
/// given traces. Refuses traces whose config hash disagrees unless forced.
void cmd_diagnose(const ExperimentConfig& cfg,
                  const std::vector<std::string>& trace_paths, bool force);

/// CLI entry point (subcommands synth, fit-surrogates, run, diagnose).
/// Exit codes: 0 ok, 2 config error, 3 data error, 4 numeric divergence.
int run_cli(int argc, const char* const* argv);

}  // namespace fedld
