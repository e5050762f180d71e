// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <vector>

#include "fedld/data.hpp"
#include "fedld/models.hpp"
#include "fedld/rng.hpp"
#include "fedld/surrogates.hpp"
#include "fedld/types.hpp"

namespace fedld {

/// Indices into one shard, sampled uniformly with replacement.
struct MiniBatch {
  int shard_id = 0;
  std::vector<int> indices;
  int size() const { return static_cast<int>(indices.size()); }
};

struct EstimatorKind {
  enum class Algo { SGLD, DSGLD, CGDSGLD };
  Algo algo = Algo::DSGLD;
  double alpha = 1.0;  // conducive-gradient scale, CGDSGLD only

  static EstimatorKind sgld() { return {Algo::SGLD, 0.0}; }
  static EstimatorKind dsgld() { return {Algo::DSGLD, 0.0}; }
  static EstimatorKind cgdsgld(double alpha = 1.0);
};

/// Stochastic gradient estimate with its additive breakdown. The invariant
/// vector == prior_term + likelihood_term + conducive_term holds exactly
/// (the vector is assembled as that sum).
struct GradientEstimate {
  Vector vector;
  Vector prior_term;
  Vector likelihood_term;  // already rescaled by N/m resp. N_s/(f_s m)
  Vector conducive_term;   // zero for SGLD and DSGLD
};

/// m indices drawn uniformly with replacement from the shard.
MiniBatch sample_minibatch(const Shard& shard, int m, RandomStream& rng);

/// Centralized estimator: grad log p(theta) + (N/m) sum over the batch of
/// per-datum likelihood scores. The batch indexes the pooled dataset.
GradientEstimate sgld_estimate(const ModelSpec& model, const Vector& theta,
                               const Dataset& pooled, const MiniBatch& batch,
                               int total_n);

/// Shard-scheduled estimator: grad log p(theta) + N_s/(f_s m) * batch score.
GradientEstimate dsgld_estimate(const ModelSpec& model, const Vector& theta,
                                const Shard& shard, const MiniBatch& batch,
                                double f_s);

/// Conducive gradient for shard s:
///   g_s(theta) = grad log q(theta) - (1/f_s) grad log q_s(theta).
/// Zero-mean under shard choice: sum_s f_s g_s(theta) = 0.
Vector conducive_gradient(const SurrogateSet& surrogates, int shard_index,
                          double f_s, const Vector& theta);

/// DSGLD estimator plus alpha times the conducive gradient. alpha = 0 is
/// bit-identical to dsgld_estimate.
GradientEstimate cgdsgld_estimate(const ModelSpec& model, const Vector& theta,
                                  const Shard& shard, const MiniBatch& batch,
                                  double f_s, const SurrogateSet& surrogates,
                                  double alpha);

}  // namespace fedld
