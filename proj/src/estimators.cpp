// SPDX-License-Identifier: Apache-2.0
#include "fedld/estimators.hpp"

#include <string>

namespace fedld {

namespace {

// Sum of per-datum scores over the batch; indices address `data`.
Vector batch_score(const ModelSpec& model, const Vector& theta,
                   const Dataset& data, const MiniBatch& batch) {
  if (batch.indices.empty())
    throw std::invalid_argument("empty mini-batch");
  Vector g = Vector::Zero(model.dimension);
  for (const int idx : batch.indices) {
    if (idx < 0 || idx >= static_cast<int>(data.size()))
      throw std::invalid_argument("mini-batch index out of range");
    add_grad_log_lik_datum(model, theta, data[static_cast<std::size_t>(idx)],
                           g);
  }
  return g;
}

GradientEstimate assemble(Vector prior, Vector likelihood, Vector conducive) {
  GradientEstimate e;
  e.vector = (prior + likelihood) + conducive;
  e.prior_term = std::move(prior);
  e.likelihood_term = std::move(likelihood);
  e.conducive_term = std::move(conducive);
  return e;
}

}  // namespace

EstimatorKind EstimatorKind::cgdsgld(double alpha) {
  if (!(alpha >= 0.0)) throw ConfigError("CGDSGLD: alpha must be >= 0");
  return {Algo::CGDSGLD, alpha};
}

MiniBatch sample_minibatch(const Shard& shard, int m, RandomStream& rng) {
  if (shard.data.empty()) throw DataError("sample_minibatch: empty shard");
  if (m < 1) throw std::invalid_argument("sample_minibatch: m must be >= 1");
  MiniBatch batch;
  batch.shard_id = shard.id;
  batch.indices.resize(static_cast<std::size_t>(m));
  const int n = shard.size();
  for (int j = 0; j < m; ++j) batch.indices[static_cast<std::size_t>(j)] =
      rng.uniform_index(n);
  return batch;
}

GradientEstimate sgld_estimate(const ModelSpec& model, const Vector& theta,
                               const Dataset& pooled, const MiniBatch& batch,
                               int total_n) {
  check_dimension(model, theta);
  if (total_n < 1) throw std::invalid_argument("sgld_estimate: total_n < 1");
  const double scale =
      static_cast<double>(total_n) / static_cast<double>(batch.size());
  Vector lik = scale * batch_score(model, theta, pooled, batch);
  return assemble(grad_log_prior(model, theta), std::move(lik),
                  Vector::Zero(model.dimension));
}

GradientEstimate dsgld_estimate(const ModelSpec& model, const Vector& theta,
                                const Shard& shard, const MiniBatch& batch,
                                double f_s) {
  check_dimension(model, theta);
  if (!(f_s > 0.0 && f_s <= 1.0))
    throw std::invalid_argument("dsgld_estimate: f_s must lie in (0, 1]");
  const double scale = static_cast<double>(shard.size()) /
                       (f_s * static_cast<double>(batch.size()));
  Vector lik = scale * batch_score(model, theta, shard.data, batch);
  return assemble(grad_log_prior(model, theta), std::move(lik),
                  Vector::Zero(model.dimension));
}

Vector conducive_gradient(const SurrogateSet& surrogates, int shard_index,
                          double f_s, const Vector& theta) {
  if (shard_index < 0 || shard_index >= surrogates.n_shards())
    throw std::invalid_argument("conducive_gradient: shard index out of range");
  if (!(f_s > 0.0))
    throw std::invalid_argument("conducive_gradient: f_s must be positive");
  const auto& q_s = surrogates.per_shard[static_cast<std::size_t>(shard_index)];
  return grad_log_surrogate(surrogates.product, theta) -
         (1.0 / f_s) * grad_log_surrogate(q_s, theta);
}

GradientEstimate cgdsgld_estimate(const ModelSpec& model, const Vector& theta,
                                  const Shard& shard, const MiniBatch& batch,
                                  double f_s, const SurrogateSet& surrogates,
                                  double alpha) {
  if (!(alpha >= 0.0))
    throw std::invalid_argument("cgdsgld_estimate: alpha must be >= 0");
  GradientEstimate e = dsgld_estimate(model, theta, shard, batch, f_s);
  if (alpha == 0.0) return e;  // degenerate case, identical to DSGLD
  e.conducive_term =
      alpha * conducive_gradient(surrogates, shard.id, f_s, theta);
  e.vector = (e.prior_term + e.likelihood_term) + e.conducive_term;
  return e;
}

}  // namespace fedld
