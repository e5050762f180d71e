// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "fedld/data.hpp"
#include "fedld/rng.hpp"
#include "fedld/types.hpp"

namespace fedld {

enum class ModelKind { BernoulliCoin, GaussianMean, BayesLinReg };

/// Closed set of tractable models. GaussianMean: N(x|theta, I) likelihood,
/// N(0, I) prior. BayesLinReg: N(y|beta'x, sigma_e^2) likelihood,
/// N(0, lambda^-1 I) prior. BernoulliCoin: theta in (0,1), uniform prior.
struct ModelSpec {
  ModelKind kind = ModelKind::GaussianMean;
  int dimension = 1;
  double prior_precision = 1.0;  // lambda (BayesLinReg)
  double noise_scale = 1.0;      // sigma_e (BayesLinReg)

  static ModelSpec bernoulli_coin();
  static ModelSpec gaussian_mean(int dim);
  static ModelSpec bayes_lin_reg(int dim, double lambda, double sigma_e);
};

struct AnalyticPosterior {
  Vector mean;
  Matrix covariance;
  /// Exact draw via the Cholesky factor of the covariance.
  Vector sample(RandomStream& rng) const;
};

double log_prior(const ModelSpec& model, const Vector& theta);
Vector grad_log_prior(const ModelSpec& model, const Vector& theta);

double log_lik_datum(const ModelSpec& model, const Vector& theta,
                     const DataPoint& x);
Vector grad_log_lik_datum(const ModelSpec& model, const Vector& theta,
                          const DataPoint& x);
/// Accumulating form used by the batch/dataset sums (no temporaries).
void add_grad_log_lik_datum(const ModelSpec& model, const Vector& theta,
                            const DataPoint& x, Vector& acc);

/// Sum of per-datum log-likelihood gradients over a dataset. The OpenMP path
/// reduces over fixed-size blocks so the result does not depend on the
/// thread count.
Vector sum_grad_log_lik(const ModelSpec& model, const Dataset& data,
                        const Vector& theta, Exec exec = Exec::Serial);

/// Conjugate posterior; GaussianMean and BayesLinReg only.
AnalyticPosterior analytic_posterior(const ModelSpec& model,
                                     const Dataset& data);

bool in_domain(const ModelSpec& model, const Vector& theta);
/// Projects onto the model's domain; BernoulliCoin clamps chain states to
/// [1e-6, 1 - 1e-6], other models are unconstrained.
void clamp_to_domain(const ModelSpec& model, Vector& theta);

void check_dimension(const ModelSpec& model, const Vector& theta);

}  // namespace fedld
