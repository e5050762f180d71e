// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "fedld/models.hpp"
#include "fedld/types.hpp"

namespace fedld {

/// Gaussian surrogate q_s for a shard likelihood, stored in precision form so
/// products are additive and the score is a single matrix-vector multiply.
struct GaussianSurrogate {
  Vector mean;
  Matrix precision;  // symmetric positive definite
  bool diagonal_only = false;
  int dim() const { return static_cast<int>(mean.size()); }
};

/// Unnormalized log q: -(theta - mean)' precision (theta - mean) / 2.
double log_surrogate(const GaussianSurrogate& q, const Vector& theta);

/// Score of the surrogate: -precision * (theta - mean).
Vector grad_log_surrogate(const GaussianSurrogate& q, const Vector& theta);

/// Product density: precision = sum of precisions, mean solves the
/// precision-weighted system.
GaussianSurrogate product_of_surrogates(
    const std::vector<GaussianSurrogate>& qs);

/// Per-shard surrogates plus their cached product.
struct SurrogateSet {
  std::vector<GaussianSurrogate> per_shard;
  GaussianSurrogate product;

  static SurrogateSet build(std::vector<GaussianSurrogate> parts);
  int n_shards() const { return static_cast<int>(per_shard.size()); }
};

/// Checks the cached product against the per-shard factors.
void validate_product(const SurrogateSet& set, double tol = 1e-8);

/// Moment-matched Gaussian: sample mean and unbiased (n-1) covariance plus
/// jitter * I; the diagonal variant zeroes off-diagonals before inverting.
GaussianSurrogate fit_from_samples(const std::vector<Vector>& samples,
                                   bool diagonal_only, double jitter = 1e-6);

/// Precision scale of the GaussianMean closed-form surrogate
/// N(theta | shard mean, n^-1 I): n = pooled size or n = shard size. The
/// shard-size form equals the exact shard likelihood.
enum class SurrogateScale { TotalData, ShardData };

GaussianSurrogate analytic_surrogate(const ModelSpec& model, const Shard& shard,
                                     int total_n,
                                     SurrogateScale scale = SurrogateScale::TotalData,
                                     double jitter = 1e-6);

/// Shard-local SGLD targeting the likelihood-only density p(x_s | theta).
struct LocalSgldConfig {
  double step_size = 1e-4;
  int n_samples = 1000;  // kept samples used for the fit
  int burn_in = 1000;
  int thinning = 1;
  int batch_size = 10;
  std::uint64_t seed = 0;
  std::uint64_t stream_id = 0;
};

GaussianSurrogate local_sgld_fit(const ModelSpec& model, const Shard& shard,
                                 const LocalSgldConfig& cfg, bool diagonal_only,
                                 double jitter = 1e-6);

/// Fits every shard (stream id = cfg.stream_id + shard index). Shards are
/// independent, so the OpenMP path is bit-identical to the serial one.
std::vector<GaussianSurrogate> fit_local_surrogates(
    const ModelSpec& model, const std::vector<Shard>& shards,
    const LocalSgldConfig& cfg, bool diagonal_only, double jitter = 1e-6,
    Exec exec = Exec::Serial);

// JSON document: {dim, mean, precision (row-major), diagonal_only}.
nlohmann::json surrogate_to_json(const GaussianSurrogate& q);
GaussianSurrogate surrogate_from_json(const nlohmann::json& j);
void write_surrogate_file(const GaussianSurrogate& q, const std::string& path);
GaussianSurrogate read_surrogate_file(const std::string& path);

}  // namespace fedld
