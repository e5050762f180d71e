// SPDX-License-Identifier: Apache-2.0
#include "fedld/models.hpp"

#include <cmath>
#include <string>
#include <vector>

namespace fedld {

namespace {

constexpr double kBernoulliClamp = 1e-6;
constexpr double kLog2Pi = 1.8378770664093453;  // log(2*pi)

double bernoulli_theta(const ModelSpec& model, const Vector& theta) {
  check_dimension(model, theta);
  const double t = theta[0];
  if (!(t > 0.0 && t < 1.0))
    throw std::invalid_argument("BernoulliCoin: theta must lie in (0,1), got " +
                                std::to_string(t));
  return t;
}

double binary_target(const DataPoint& x) {
  if (!x.target) throw DataError("BernoulliCoin datum has no label");
  const double v = *x.target;
  if (v != 0.0 && v != 1.0)
    throw DataError("BernoulliCoin label must be 0 or 1, got " +
                    std::to_string(v));
  return v;
}

double regression_target(const DataPoint& x) {
  if (!x.target) throw DataError("BayesLinReg datum has no target");
  return *x.target;
}

}  // namespace

ModelSpec ModelSpec::bernoulli_coin() {
  return ModelSpec{ModelKind::BernoulliCoin, 1, 1.0, 1.0};
}

ModelSpec ModelSpec::gaussian_mean(int dim) {
  if (dim < 1) throw ConfigError("GaussianMean: dimension must be positive");
  return ModelSpec{ModelKind::GaussianMean, dim, 1.0, 1.0};
}

ModelSpec ModelSpec::bayes_lin_reg(int dim, double lambda, double sigma_e) {
  if (dim < 1) throw ConfigError("BayesLinReg: dimension must be positive");
  if (!(lambda > 0.0)) throw ConfigError("BayesLinReg: lambda must be > 0");
  if (!(sigma_e > 0.0)) throw ConfigError("BayesLinReg: sigma_e must be > 0");
  return ModelSpec{ModelKind::BayesLinReg, dim, lambda, sigma_e};
}

void check_dimension(const ModelSpec& model, const Vector& theta) {
  if (theta.size() != model.dimension)
    throw std::invalid_argument(
        "parameter vector length " + std::to_string(theta.size()) +
        " does not match model dimension " + std::to_string(model.dimension));
}

double log_prior(const ModelSpec& model, const Vector& theta) {
  switch (model.kind) {
    case ModelKind::BernoulliCoin:
      bernoulli_theta(model, theta);
      return 0.0;  // uniform on (0,1)
    case ModelKind::GaussianMean:
      check_dimension(model, theta);
      return -0.5 * (model.dimension * kLog2Pi + theta.squaredNorm());
    case ModelKind::BayesLinReg: {
      check_dimension(model, theta);
      const double lambda = model.prior_precision;
      return 0.5 * model.dimension * (std::log(lambda) - kLog2Pi) -
             0.5 * lambda * theta.squaredNorm();
    }
  }
  throw std::logic_error("unreachable model kind");
}

Vector grad_log_prior(const ModelSpec& model, const Vector& theta) {
  switch (model.kind) {
    case ModelKind::BernoulliCoin:
      bernoulli_theta(model, theta);
      return Vector::Zero(1);
    case ModelKind::GaussianMean:
      check_dimension(model, theta);
      return -theta;
    case ModelKind::BayesLinReg:
      check_dimension(model, theta);
      return -model.prior_precision * theta;
  }
  throw std::logic_error("unreachable model kind");
}

double log_lik_datum(const ModelSpec& model, const Vector& theta,
                     const DataPoint& x) {
  switch (model.kind) {
    case ModelKind::BernoulliCoin: {
      const double t = bernoulli_theta(model, theta);
      const double y = binary_target(x);
      return y * std::log(t) + (1.0 - y) * std::log(1.0 - t);
    }
    case ModelKind::GaussianMean: {
      check_dimension(model, theta);
      if (x.features.size() != theta.size())
        throw std::invalid_argument("GaussianMean datum dimension mismatch");
      return -0.5 * (model.dimension * kLog2Pi +
                     (x.features - theta).squaredNorm());
    }
    case ModelKind::BayesLinReg: {
      check_dimension(model, theta);
      if (x.features.size() != theta.size())
        throw std::invalid_argument("BayesLinReg datum dimension mismatch");
      const double s2 = model.noise_scale * model.noise_scale;
      const double r = regression_target(x) - theta.dot(x.features);
      return -0.5 * (kLog2Pi + std::log(s2)) - 0.5 * r * r / s2;
    }
  }
  throw std::logic_error("unreachable model kind");
}

void add_grad_log_lik_datum(const ModelSpec& model, const Vector& theta,
                            const DataPoint& x, Vector& acc) {
  switch (model.kind) {
    case ModelKind::BernoulliCoin: {
      const double t = bernoulli_theta(model, theta);
      const double y = binary_target(x);
      acc[0] += y / t - (1.0 - y) / (1.0 - t);
      return;
    }
    case ModelKind::GaussianMean:
      check_dimension(model, theta);
      if (x.features.size() != theta.size())
        throw std::invalid_argument("GaussianMean datum dimension mismatch");
      acc += x.features - theta;
      return;
    case ModelKind::BayesLinReg: {
      check_dimension(model, theta);
      if (x.features.size() != theta.size())
        throw std::invalid_argument("BayesLinReg datum dimension mismatch");
      const double s2 = model.noise_scale * model.noise_scale;
      acc += ((regression_target(x) - theta.dot(x.features)) / s2) * x.features;
      return;
    }
  }
  throw std::logic_error("unreachable model kind");
}

Vector grad_log_lik_datum(const ModelSpec& model, const Vector& theta,
                          const DataPoint& x) {
  Vector g = Vector::Zero(model.dimension);
  add_grad_log_lik_datum(model, theta, x, g);
  return g;
}

Vector sum_grad_log_lik(const ModelSpec& model, const Dataset& data,
                        const Vector& theta, Exec exec) {
  const int d = model.dimension;
  if (exec == Exec::Serial) {
    Vector g = Vector::Zero(d);
    for (const auto& x : data) add_grad_log_lik_datum(model, theta, x, g);
    return g;
  }
  // Fixed-size blocks keep the reduction order independent of the number of
  // threads: block partials are computed in parallel and summed in order.
  constexpr std::ptrdiff_t kBlock = 1024;
  const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(data.size());
  const std::ptrdiff_t n_blocks = (n + kBlock - 1) / kBlock;
  std::vector<Vector> partial(static_cast<std::size_t>(n_blocks),
                              Vector::Zero(d));
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t b = 0; b < n_blocks; ++b) {
    const std::ptrdiff_t lo = b * kBlock;
    const std::ptrdiff_t hi = std::min(lo + kBlock, n);
    Vector& g = partial[static_cast<std::size_t>(b)];
    for (std::ptrdiff_t i = lo; i < hi; ++i)
      add_grad_log_lik_datum(model, theta, data[static_cast<std::size_t>(i)], g);
  }
  Vector g = Vector::Zero(d);
  for (const auto& p : partial) g += p;
  return g;
}

AnalyticPosterior analytic_posterior(const ModelSpec& model,
                                     const Dataset& data) {
  const int d = model.dimension;
  switch (model.kind) {
    case ModelKind::GaussianMean: {
      const double n = static_cast<double>(data.size());
      Vector sum = Vector::Zero(d);
      for (const auto& x : data) {
        if (x.features.size() != d)
          throw std::invalid_argument("GaussianMean datum dimension mismatch");
        sum += x.features;
      }
      AnalyticPosterior post;
      post.mean = sum / (n + 1.0);
      post.covariance = Matrix::Identity(d, d) / (n + 1.0);
      return post;
    }
    case ModelKind::BayesLinReg: {
      const double s2 = model.noise_scale * model.noise_scale;
      Matrix precision = model.prior_precision * Matrix::Identity(d, d);
      Vector xty = Vector::Zero(d);
      for (const auto& x : data) {
        if (x.features.size() != d)
          throw std::invalid_argument("BayesLinReg datum dimension mismatch");
        precision.noalias() += (x.features * x.features.transpose()) / s2;
        xty += (regression_target(x) / s2) * x.features;
      }
      Eigen::LLT<Matrix> llt(precision);
      if (llt.info() != Eigen::Success)
        throw NumericError("BayesLinReg posterior precision is not SPD");
      AnalyticPosterior post;
      post.mean = llt.solve(xty);
      post.covariance = llt.solve(Matrix::Identity(d, d));
      return post;
    }
    case ModelKind::BernoulliCoin:
      throw ConfigError("analytic posterior unavailable for BernoulliCoin");
  }
  throw std::logic_error("unreachable model kind");
}

Vector AnalyticPosterior::sample(RandomStream& rng) const {
  const auto d = mean.size();
  Eigen::LLT<Matrix> llt(covariance);
  if (llt.info() != Eigen::Success)
    throw NumericError("posterior covariance is not SPD");
  Vector z(d);
  for (Eigen::Index k = 0; k < d; ++k) z[k] = rng.gaussian();
  return mean + llt.matrixL() * z;
}

bool in_domain(const ModelSpec& model, const Vector& theta) {
  if (theta.size() != model.dimension) return false;
  if (!theta.allFinite()) return false;
  if (model.kind == ModelKind::BernoulliCoin)
    return theta[0] > 0.0 && theta[0] < 1.0;
  return true;
}

void clamp_to_domain(const ModelSpec& model, Vector& theta) {
  if (model.kind == ModelKind::BernoulliCoin) {
    theta[0] = std::min(std::max(theta[0], kBernoulliClamp),
                        1.0 - kBernoulliClamp);
  }
}

}  // namespace fedld
