// SPDX-License-Identifier: Apache-2.0
#include "fedld/surrogates.hpp"

#include <cmath>
#include <fstream>
#include <string>

#include "fedld/dynamics.hpp"

namespace fedld {

namespace {

void check_spd(const Matrix& precision, const char* what) {
  Eigen::LLT<Matrix> llt(precision);
  if (llt.info() != Eigen::Success)
    throw NumericError(std::string(what) + ": precision is not SPD");
}

void check_dims(const GaussianSurrogate& q, const Vector& theta) {
  if (theta.size() != q.mean.size())
    throw std::invalid_argument("surrogate/theta dimension mismatch");
}

}  // namespace

double log_surrogate(const GaussianSurrogate& q, const Vector& theta) {
  check_dims(q, theta);
  const Vector d = theta - q.mean;
  return -0.5 * d.dot(q.precision * d);
}

Vector grad_log_surrogate(const GaussianSurrogate& q, const Vector& theta) {
  check_dims(q, theta);
  return -(q.precision * (theta - q.mean));
}

GaussianSurrogate product_of_surrogates(
    const std::vector<GaussianSurrogate>& qs) {
  if (qs.empty())
    throw std::invalid_argument("product_of_surrogates: empty list");
  const auto d = qs.front().mean.size();
  Matrix precision = Matrix::Zero(d, d);
  Vector weighted = Vector::Zero(d);
  bool all_diag = true;
  for (const auto& q : qs) {
    if (q.mean.size() != d)
      throw std::invalid_argument("product_of_surrogates: dimension mismatch");
    precision += q.precision;
    weighted.noalias() += q.precision * q.mean;
    all_diag = all_diag && q.diagonal_only;
  }
  Eigen::LLT<Matrix> llt(precision);
  if (llt.info() != Eigen::Success)
    throw NumericError("product_of_surrogates: summed precision is not SPD");
  GaussianSurrogate prod;
  prod.precision = std::move(precision);
  prod.mean = llt.solve(weighted);
  prod.diagonal_only = all_diag;
  return prod;
}

SurrogateSet SurrogateSet::build(std::vector<GaussianSurrogate> parts) {
  SurrogateSet set;
  set.product = product_of_surrogates(parts);
  set.per_shard = std::move(parts);
  return set;
}

void validate_product(const SurrogateSet& set, double tol) {
  if (set.per_shard.empty()) throw std::invalid_argument("empty surrogate set");
  const auto d = set.product.mean.size();
  Matrix precision = Matrix::Zero(d, d);
  Vector weighted = Vector::Zero(d);
  for (const auto& q : set.per_shard) {
    precision += q.precision;
    weighted.noalias() += q.precision * q.mean;
  }
  const double scale = std::max(1.0, precision.norm());
  if ((precision - set.product.precision).norm() > tol * scale)
    throw DataError("surrogate product precision does not match factors");
  if ((precision * set.product.mean - weighted).norm() >
      tol * std::max(1.0, weighted.norm()))
    throw DataError("surrogate product mean does not match factors");
}

GaussianSurrogate fit_from_samples(const std::vector<Vector>& samples,
                                   bool diagonal_only, double jitter) {
  if (samples.empty()) throw DataError("fit_from_samples: no samples");
  const auto d = samples.front().size();
  const std::size_t minimum = diagonal_only ? 2 : static_cast<std::size_t>(d) + 1;
  if (samples.size() < minimum)
    throw DataError("fit_from_samples: need at least " +
                    std::to_string(minimum) + " samples, got " +
                    std::to_string(samples.size()));
  Vector mean = Vector::Zero(d);
  for (const auto& s : samples) {
    if (s.size() != d)
      throw std::invalid_argument("fit_from_samples: ragged samples");
    mean += s;
  }
  mean /= static_cast<double>(samples.size());
  Matrix cov = Matrix::Zero(d, d);
  for (const auto& s : samples) {
    const Vector dlt = s - mean;
    cov.noalias() += dlt * dlt.transpose();
  }
  cov /= static_cast<double>(samples.size() - 1);
  if (diagonal_only) cov = cov.diagonal().asDiagonal();
  cov += jitter * Matrix::Identity(d, d);
  Eigen::LLT<Matrix> llt(cov);
  if (llt.info() != Eigen::Success)
    throw NumericError("fit_from_samples: covariance is singular; "
                       "increase jitter");
  GaussianSurrogate q;
  q.mean = std::move(mean);
  q.precision = llt.solve(Matrix::Identity(d, d));
  // Symmetrize: the solve is exact only up to rounding.
  q.precision = 0.5 * (q.precision + q.precision.transpose()).eval();
  if (diagonal_only) q.precision = q.precision.diagonal().asDiagonal();
  q.diagonal_only = diagonal_only;
  return q;
}

GaussianSurrogate analytic_surrogate(const ModelSpec& model, const Shard& shard,
                                     int total_n, SurrogateScale scale,
                                     double jitter) {
  if (shard.data.empty()) throw DataError("analytic_surrogate: empty shard");
  const int d = model.dimension;
  switch (model.kind) {
    case ModelKind::GaussianMean: {
      Vector mean = Vector::Zero(d);
      for (const auto& x : shard.data) {
        if (x.features.size() != d)
          throw std::invalid_argument("GaussianMean datum dimension mismatch");
        mean += x.features;
      }
      mean /= static_cast<double>(shard.size());
      const double n = scale == SurrogateScale::TotalData
                           ? static_cast<double>(total_n)
                           : static_cast<double>(shard.size());
      if (!(n > 0.0)) throw DataError("analytic_surrogate: empty data size");
      GaussianSurrogate q;
      q.mean = std::move(mean);
      q.precision = n * Matrix::Identity(d, d);
      q.diagonal_only = true;
      return q;
    }
    case ModelKind::BayesLinReg: {
      const double s2 = model.noise_scale * model.noise_scale;
      Matrix xtx = Matrix::Zero(d, d);
      Vector xty = Vector::Zero(d);
      for (const auto& x : shard.data) {
        if (x.features.size() != d)
          throw std::invalid_argument("BayesLinReg datum dimension mismatch");
        if (!x.target) throw DataError("BayesLinReg datum has no target");
        xtx.noalias() += x.features * x.features.transpose();
        xty += *x.target * x.features;
      }
      Eigen::LLT<Matrix> llt(xtx);
      if (llt.info() != Eigen::Success) {
        xtx += jitter * Matrix::Identity(d, d);
        llt.compute(xtx);
        if (llt.info() != Eigen::Success)
          throw NumericError("analytic_surrogate: X'X singular after jitter");
      }
      GaussianSurrogate q;
      q.mean = llt.solve(xty);  // least-squares solution
      q.precision = xtx / s2;
      q.diagonal_only = false;
      return q;
    }
    case ModelKind::BernoulliCoin:
      throw ConfigError("analytic surrogate unavailable for BernoulliCoin");
  }
  throw std::logic_error("unreachable model kind");
}

GaussianSurrogate local_sgld_fit(const ModelSpec& model, const Shard& shard,
                                 const LocalSgldConfig& cfg, bool diagonal_only,
                                 double jitter) {
  if (shard.data.empty()) throw DataError("local_sgld_fit: empty shard");
  const std::size_t minimum =
      diagonal_only ? 2 : static_cast<std::size_t>(model.dimension) + 1;
  if (cfg.n_samples < static_cast<int>(minimum))
    throw DataError("local_sgld_fit: n_samples below the fit minimum of " +
                    std::to_string(minimum));
  if (cfg.burn_in < 0 || cfg.thinning < 1 || cfg.batch_size < 1)
    throw ConfigError("local_sgld_fit: invalid sampler configuration");

  const auto schedule = StepSchedule::constant(cfg.step_size);
  const int n_s = shard.size();
  const int m = std::min(cfg.batch_size, n_s);
  const double scale = static_cast<double>(n_s) / static_cast<double>(m);

  ChainState state;
  state.theta = Vector::Zero(model.dimension);
  clamp_to_domain(model, state.theta);
  if (model.kind == ModelKind::BernoulliCoin) state.theta[0] = 0.5;
  state.rng = RandomStream(cfg.seed, cfg.stream_id);

  std::vector<Vector> kept;
  kept.reserve(static_cast<std::size_t>(cfg.n_samples));
  const long total =
      cfg.burn_in + static_cast<long>(cfg.n_samples) * cfg.thinning;
  Vector grad(model.dimension);
  for (long t = 0; t < total; ++t) {
    // Likelihood-only target: the local density is proportional to
    // p(x_s | theta), no prior term.
    grad.setZero();
    for (int j = 0; j < m; ++j) {
      const int idx = state.rng.uniform_index(n_s);
      add_grad_log_lik_datum(model, state.theta,
                             shard.data[static_cast<std::size_t>(idx)], grad);
    }
    step(state, (scale * grad).eval(), schedule, model);
    const long k = state.t - cfg.burn_in;
    if (k > 0 && k % cfg.thinning == 0) kept.push_back(state.theta);
  }
  return fit_from_samples(kept, diagonal_only, jitter);
}

std::vector<GaussianSurrogate> fit_local_surrogates(
    const ModelSpec& model, const std::vector<Shard>& shards,
    const LocalSgldConfig& cfg, bool diagonal_only, double jitter, Exec exec) {
  std::vector<GaussianSurrogate> out(shards.size());
  const auto n = static_cast<std::ptrdiff_t>(shards.size());
  if (exec == Exec::Serial) {
    for (std::ptrdiff_t s = 0; s < n; ++s) {
      LocalSgldConfig local = cfg;
      local.stream_id = cfg.stream_id + static_cast<std::uint64_t>(s);
      out[static_cast<std::size_t>(s)] = local_sgld_fit(
          model, shards[static_cast<std::size_t>(s)], local, diagonal_only,
          jitter);
    }
    return out;
  }
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t s = 0; s < n; ++s) {
    LocalSgldConfig local = cfg;
    local.stream_id = cfg.stream_id + static_cast<std::uint64_t>(s);
    out[static_cast<std::size_t>(s)] = local_sgld_fit(
        model, shards[static_cast<std::size_t>(s)], local, diagonal_only,
        jitter);
  }
  return out;
}

nlohmann::json surrogate_to_json(const GaussianSurrogate& q) {
  const int d = q.dim();
  std::vector<double> mean(q.mean.data(), q.mean.data() + d);
  std::vector<double> precision;
  precision.reserve(static_cast<std::size_t>(d) * d);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) precision.push_back(q.precision(i, j));
  return nlohmann::json{{"dim", d},
                        {"mean", mean},
                        {"precision", precision},
                        {"diagonal_only", q.diagonal_only}};
}

GaussianSurrogate surrogate_from_json(const nlohmann::json& j) {
  if (!j.contains("dim") || !j.contains("mean") || !j.contains("precision") ||
      !j.contains("diagonal_only"))
    throw DataError("surrogate JSON missing a required field");
  const int d = j.at("dim").get<int>();
  const auto mean = j.at("mean").get<std::vector<double>>();
  const auto precision = j.at("precision").get<std::vector<double>>();
  if (static_cast<int>(mean.size()) != d ||
      static_cast<int>(precision.size()) != d * d)
    throw DataError("surrogate JSON has inconsistent dimensions");
  GaussianSurrogate q;
  q.mean = Eigen::Map<const Vector>(mean.data(), d);
  q.precision.resize(d, d);
  for (int i = 0; i < d; ++i)
    for (int j2 = 0; j2 < d; ++j2)
      q.precision(i, j2) = precision[static_cast<std::size_t>(i) * d + j2];
  q.diagonal_only = j.at("diagonal_only").get<bool>();
  check_spd(q.precision, "surrogate_from_json");
  return q;
}

void write_surrogate_file(const GaussianSurrogate& q, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot open for writing: " + path);
  out << surrogate_to_json(q).dump(2) << '\n';
}

GaussianSurrogate read_surrogate_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open surrogate: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::parse_error& e) {
    throw DataError("surrogate JSON parse error in " + path + ": " + e.what());
  }
  return surrogate_from_json(j);
}

}  // namespace fedld
