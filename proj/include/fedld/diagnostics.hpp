// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <string>
#include <vector>

#include "fedld/estimators.hpp"
#include "fedld/federation.hpp"
#include "fedld/models.hpp"
#include "fedld/types.hpp"

namespace fedld {

/// Test function phi whose Monte Carlo average over a trace is compared with
/// its posterior expectation.
struct TestFunction {
  enum class Kind { Identity, SecondMoment, Custom };
  Kind kind = Kind::Identity;
  std::string name = "identity";
  int out_dim = 0;
  std::function<Vector(const Vector&)> fn;

  static TestFunction identity(int dim);
  static TestFunction second_moment(int dim);
  static TestFunction custom(std::string name,
                             std::function<Vector(const Vector&)> fn,
                             int out_dim);
  Vector operator()(const Vector& theta) const;
};

/// Exact posterior expectation of phi (Identity, SecondMoment only).
Vector expectation_under(const AnalyticPosterior& posterior,
                         const TestFunction& phi);

/// MSE |mean of phi over the first n kept samples - truth|^2 as a function
/// of n. For multi-chain traces the per-chain curves are averaged pointwise
/// (truncated to the shortest chain).
struct MseCurve {
  std::vector<long> n_samples;
  std::vector<double> mse;
};
MseCurve mc_mse(const ChainTrace& trace, const TestFunction& phi,
                const Vector& truth);

/// Thrown when the exact enumeration would exceed the outcome cap; callers
/// fall back to estimator_moments_sampled.
struct EnumerationCapError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Exact estimator moments over shard choice x with-replacement mini-batches
/// (batches enumerated as multisets with multinomial weights).
struct ExactMoments {
  Vector mean;
  Matrix covariance;
  double variance_trace = 0.0;
  long n_outcomes = 0;
};
ExactMoments estimator_moments_exact(const ModelSpec& model,
                                     const std::vector<Shard>& shards,
                                     const Vector& theta, int m,
                                     const EstimatorKind& kind,
                                     const SurrogateSet* surrogates = nullptr,
                                     long outcome_cap = 1000000,
                                     Exec exec = Exec::Serial);

/// Monte Carlo fallback with standard errors for the mean.
struct SampledMoments {
  Vector mean;
  double variance_trace = 0.0;
  Vector mean_std_err;
};
SampledMoments estimator_moments_sampled(const ModelSpec& model,
                                         const std::vector<Shard>& shards,
                                         const Vector& theta, int m,
                                         const EstimatorKind& kind,
                                         const SurrogateSet* surrogates,
                                         int n_draws, RandomStream& rng);

/// Axis-aligned evaluation grid, dimension <= 3.
struct GridSpec {
  Vector lo;
  Vector hi;
  std::vector<int> resolution;
  long n_points() const;
  Vector point(long flat) const;
};

/// Grid approximations of the per-shard bound constants:
///   gamma_s^2 = max over grid theta, max over x_i in shard s of
///               |grad log p(x_i|theta)|^2
///   eps_s^2   = max over grid theta of the shard average of
///               |grad log p(x_i|theta) - N_s^-1 grad log q_s(theta)|^2
/// Maxima never decrease under grid refinement by supersets.
struct BoundConstants {
  std::vector<double> gamma_sq;
  std::vector<double> epsilon_sq;
  GridSpec grid;
};
BoundConstants grid_bound_constants(const ModelSpec& model,
                                    const std::vector<Shard>& shards,
                                    const SurrogateSet& surrogates,
                                    const GridSpec& grid,
                                    Exec exec = Exec::OpenMP);

/// Running posterior-averaged per-datum log-likelihood on a held-out set,
/// evaluated every `stride` kept samples. Multi-chain traces are averaged
/// pointwise like mc_mse.
struct LogLikCurve {
  std::vector<long> n_samples;
  std::vector<double> avg_log_lik;
};
LogLikCurve avg_log_likelihood(const ChainTrace& trace, const ModelSpec& model,
                               const Dataset& heldout, int stride = 1,
                               Exec exec = Exec::OpenMP);

}  // namespace fedld
