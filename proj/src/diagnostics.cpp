// SPDX-License-Identifier: Apache-2.0
#include "fedld/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

namespace fedld {

TestFunction TestFunction::identity(int dim) {
  TestFunction tf;
  tf.kind = Kind::Identity;
  tf.name = "identity";
  tf.out_dim = dim;
  return tf;
}

TestFunction TestFunction::second_moment(int dim) {
  TestFunction tf;
  tf.kind = Kind::SecondMoment;
  tf.name = "second_moment";
  tf.out_dim = dim;
  return tf;
}

TestFunction TestFunction::custom(std::string name,
                                  std::function<Vector(const Vector&)> fn,
                                  int out_dim) {
  TestFunction tf;
  tf.kind = Kind::Custom;
  tf.name = std::move(name);
  tf.out_dim = out_dim;
  tf.fn = std::move(fn);
  return tf;
}

Vector TestFunction::operator()(const Vector& theta) const {
  switch (kind) {
    case Kind::Identity:
      return theta;
    case Kind::SecondMoment:
      return theta.cwiseProduct(theta);
    case Kind::Custom:
      if (!fn) throw std::invalid_argument("custom test function unset");
      return fn(theta);
  }
  throw std::logic_error("unreachable test function kind");
}

Vector expectation_under(const AnalyticPosterior& posterior,
                         const TestFunction& phi) {
  switch (phi.kind) {
    case TestFunction::Kind::Identity:
      return posterior.mean;
    case TestFunction::Kind::SecondMoment:
      return posterior.mean.cwiseProduct(posterior.mean) +
             posterior.covariance.diagonal();
    case TestFunction::Kind::Custom:
      throw ConfigError("no analytic expectation for custom test function '" +
                        phi.name + "'");
  }
  throw std::logic_error("unreachable test function kind");
}

namespace {

std::vector<std::vector<const TraceRecord*>> records_by_chain(
    const ChainTrace& trace) {
  std::map<int, std::vector<const TraceRecord*>> grouped;
  for (const auto& r : trace.records) grouped[r.chain].push_back(&r);
  std::vector<std::vector<const TraceRecord*>> chains;
  chains.reserve(grouped.size());
  for (auto& [id, recs] : grouped) chains.push_back(std::move(recs));
  return chains;
}

}  // namespace

MseCurve mc_mse(const ChainTrace& trace, const TestFunction& phi,
                const Vector& truth) {
  if (trace.records.empty()) throw DataError("mc_mse: empty trace");
  const auto chains = records_by_chain(trace);
  std::size_t len = chains.front().size();
  for (const auto& c : chains) len = std::min(len, c.size());
  if (len == 0) throw DataError("mc_mse: a chain has no kept samples");

  MseCurve curve;
  curve.n_samples.resize(len);
  curve.mse.assign(len, 0.0);
  for (const auto& chain : chains) {
    Vector running = Vector::Zero(truth.size());
    for (std::size_t i = 0; i < len; ++i) {
      const Vector value = phi(chain[i]->theta);
      if (value.size() != truth.size())
        throw std::invalid_argument("mc_mse: truth dimension mismatch");
      running += value;
      const Vector mean = running / static_cast<double>(i + 1);
      curve.mse[i] += (mean - truth).squaredNorm();
    }
  }
  const double n_chains = static_cast<double>(chains.size());
  for (std::size_t i = 0; i < len; ++i) {
    curve.n_samples[i] = static_cast<long>(i + 1);
    curve.mse[i] /= n_chains;
  }
  return curve;
}

// ---------------------------------------------------------------------------
// Exact estimator moments by multiset enumeration
// ---------------------------------------------------------------------------

namespace {

double count_multisets(int n, int m) {
  // C(n + m - 1, m), computed in doubles; callers cap the result anyway.
  double c = 1.0;
  for (int j = 1; j <= m; ++j)
    c = c * static_cast<double>(n - 1 + j) / static_cast<double>(j);
  return std::round(c);
}

// Probability of drawing the given non-decreasing index tuple in m
// with-replacement draws: m! / (prod count_v!) / n^m. Exact integer
// arithmetic for m <= 20 (one rounding in the final division).
double multiset_probability(const std::vector<int>& idx, int n) {
  const int m = static_cast<int>(idx.size());
  if (m > 20)
    throw std::invalid_argument("multiset_probability: m > 20 unsupported");
  std::uint64_t factorial = 1;
  for (int j = 2; j <= m; ++j) factorial *= static_cast<std::uint64_t>(j);
  std::uint64_t run_factorials = 1;
  std::uint64_t run = 1;
  for (int j = 1; j <= m; ++j) {
    if (j < m && idx[static_cast<std::size_t>(j)] ==
                     idx[static_cast<std::size_t>(j - 1)]) {
      ++run;
      run_factorials *= run;
    } else {
      run = 1;
    }
  }
  double denom = 1.0;
  for (int j = 0; j < m; ++j) denom *= static_cast<double>(n);
  return static_cast<double>(factorial / run_factorials) / denom;
}

// Advances a non-decreasing tuple over {0..n-1}; returns false after the last.
bool next_multiset(std::vector<int>& idx, int n) {
  const int m = static_cast<int>(idx.size());
  for (int j = m - 1; j >= 0; --j) {
    if (idx[static_cast<std::size_t>(j)] < n - 1) {
      const int v = idx[static_cast<std::size_t>(j)] + 1;
      for (int k = j; k < m; ++k) idx[static_cast<std::size_t>(k)] = v;
      return true;
    }
  }
  return false;
}

struct MomentAccumulator {
  Vector mean;
  Matrix second;
  double mass = 0.0;

  explicit MomentAccumulator(int d)
      : mean(Vector::Zero(d)), second(Matrix::Zero(d, d)) {}

  void add(double w, const Vector& v) {
    mean += w * v;
    second.noalias() += w * (v * v.transpose());
    mass += w;
  }
  void merge(const MomentAccumulator& other) {
    mean += other.mean;
    second += other.second;
    mass += other.mass;
  }
};

}  // namespace

ExactMoments estimator_moments_exact(const ModelSpec& model,
                                     const std::vector<Shard>& shards,
                                     const Vector& theta, int m,
                                     const EstimatorKind& kind,
                                     const SurrogateSet* surrogates,
                                     long outcome_cap, Exec exec) {
  if (shards.empty()) throw DataError("estimator_moments_exact: no shards");
  if (m < 1) throw std::invalid_argument("estimator_moments_exact: m < 1");
  const bool pooled_mode = kind.algo == EstimatorKind::Algo::SGLD;
  if (kind.algo == EstimatorKind::Algo::CGDSGLD && surrogates == nullptr)
    throw ConfigError("estimator_moments_exact: CGDSGLD requires surrogates");

  const Dataset pooled = pooled_mode ? pooled_dataset(shards) : Dataset{};
  double total_outcomes = 0.0;
  if (pooled_mode) {
    total_outcomes = count_multisets(static_cast<int>(pooled.size()), m);
  } else {
    for (const auto& s : shards)
      total_outcomes += count_multisets(s.size(), m);
  }
  if (total_outcomes > static_cast<double>(outcome_cap))
    throw EnumerationCapError(
        "estimator enumeration needs " +
        std::to_string(static_cast<long long>(total_outcomes)) +
        " outcomes, cap is " + std::to_string(outcome_cap));

  const int d = model.dimension;

  auto enumerate_shard = [&](int shard_idx) {
    MomentAccumulator acc(d);
    if (pooled_mode) {
      const int n = static_cast<int>(pooled.size());
      std::vector<int> idx(static_cast<std::size_t>(m), 0);
      do {
        const double w = multiset_probability(idx, n);
        const MiniBatch batch{0, idx};
        acc.add(w,
                sgld_estimate(model, theta, pooled, batch, n).vector);
      } while (next_multiset(idx, n));
      return acc;
    }
    const Shard& shard = shards[static_cast<std::size_t>(shard_idx)];
    const int n = shard.size();
    std::vector<int> idx(static_cast<std::size_t>(m), 0);
    do {
      const double w = shard.selection_prob * multiset_probability(idx, n);
      const MiniBatch batch{shard.id, idx};
      Vector v;
      if (kind.algo == EstimatorKind::Algo::DSGLD)
        v = dsgld_estimate(model, theta, shard, batch, shard.selection_prob)
                .vector;
      else
        v = cgdsgld_estimate(model, theta, shard, batch, shard.selection_prob,
                             *surrogates, kind.alpha)
                .vector;
      acc.add(w, v);
    } while (next_multiset(idx, n));
    return acc;
  };

  const int n_tasks = pooled_mode ? 1 : static_cast<int>(shards.size());
  std::vector<MomentAccumulator> partial(static_cast<std::size_t>(n_tasks),
                                         MomentAccumulator(d));
  if (exec == Exec::Serial || n_tasks == 1) {
    for (int s = 0; s < n_tasks; ++s)
      partial[static_cast<std::size_t>(s)] = enumerate_shard(s);
  } else {
#pragma omp parallel for schedule(dynamic)
    for (int s = 0; s < n_tasks; ++s)
      partial[static_cast<std::size_t>(s)] = enumerate_shard(s);
  }
  MomentAccumulator acc(d);
  for (const auto& p : partial) acc.merge(p);

  if (std::abs(acc.mass - 1.0) > 1e-9)
    throw NumericError("estimator_moments_exact: outcome mass " +
                       std::to_string(acc.mass) + " != 1");

  ExactMoments out;
  out.mean = acc.mean;
  out.covariance = acc.second - acc.mean * acc.mean.transpose();
  out.variance_trace = out.covariance.trace();
  out.n_outcomes = static_cast<long>(total_outcomes);
  return out;
}

SampledMoments estimator_moments_sampled(const ModelSpec& model,
                                         const std::vector<Shard>& shards,
                                         const Vector& theta, int m,
                                         const EstimatorKind& kind,
                                         const SurrogateSet* surrogates,
                                         int n_draws, RandomStream& rng) {
  if (n_draws < 2)
    throw std::invalid_argument("estimator_moments_sampled: n_draws must be >= 2");
  if (kind.algo == EstimatorKind::Algo::CGDSGLD && surrogates == nullptr)
    throw ConfigError("estimator_moments_sampled: CGDSGLD requires surrogates");
  const bool pooled_mode = kind.algo == EstimatorKind::Algo::SGLD;
  const Dataset pooled = pooled_mode ? pooled_dataset(shards) : Dataset{};
  Shard pooled_shard;
  if (pooled_mode) {
    pooled_shard.id = 0;
    pooled_shard.data = pooled;
    pooled_shard.selection_prob = 1.0;
  }
  const auto probs = selection_probs(shards);

  const int d = model.dimension;
  Vector mean = Vector::Zero(d);
  Matrix second = Matrix::Zero(d, d);
  for (int i = 0; i < n_draws; ++i) {
    Vector v;
    if (pooled_mode) {
      const MiniBatch batch = sample_minibatch(pooled_shard, m, rng);
      v = sgld_estimate(model, theta, pooled, batch,
                        static_cast<int>(pooled.size()))
              .vector;
    } else {
      const int s = select_client(probs, rng);
      const Shard& shard = shards[static_cast<std::size_t>(s)];
      const MiniBatch batch = sample_minibatch(shard, m, rng);
      if (kind.algo == EstimatorKind::Algo::DSGLD)
        v = dsgld_estimate(model, theta, shard, batch, shard.selection_prob)
                .vector;
      else
        v = cgdsgld_estimate(model, theta, shard, batch, shard.selection_prob,
                             *surrogates, kind.alpha)
                .vector;
    }
    mean += v;
    second.noalias() += v * v.transpose();
  }
  const double n = static_cast<double>(n_draws);
  mean /= n;
  // Unbiased covariance: (sum vv' - n mean mean') / (n - 1).
  const Matrix cov = (second - n * (mean * mean.transpose())) / (n - 1.0);
  SampledMoments out;
  out.mean = mean;
  out.variance_trace = cov.trace();
  out.mean_std_err = (cov.diagonal() / n).cwiseMax(0.0).cwiseSqrt();
  return out;
}

// ---------------------------------------------------------------------------
// Grid bound constants
// ---------------------------------------------------------------------------

long GridSpec::n_points() const {
  if (resolution.empty()) return 0;
  long n = 1;
  for (const int r : resolution) {
    if (r < 1) return 0;
    n *= r;
  }
  return n;
}

Vector GridSpec::point(long flat) const {
  const int d = static_cast<int>(resolution.size());
  Vector p(d);
  long rem = flat;
  for (int k = d - 1; k >= 0; --k) {
    const int r = resolution[static_cast<std::size_t>(k)];
    const long i = rem % r;
    rem /= r;
    p[k] = r == 1 ? lo[k]
                  : lo[k] + (hi[k] - lo[k]) * static_cast<double>(i) /
                                static_cast<double>(r - 1);
  }
  return p;
}

BoundConstants grid_bound_constants(const ModelSpec& model,
                                    const std::vector<Shard>& shards,
                                    const SurrogateSet& surrogates,
                                    const GridSpec& grid, Exec exec) {
  if (model.dimension > 3)
    throw ConfigError("grid_bound_constants: dimension must be <= 3");
  if (grid.lo.size() != model.dimension || grid.hi.size() != model.dimension ||
      static_cast<int>(grid.resolution.size()) != model.dimension)
    throw ConfigError("grid_bound_constants: grid/model dimension mismatch");
  const long n_points = grid.n_points();
  if (n_points <= 0) throw ConfigError("grid_bound_constants: empty grid");
  if (surrogates.n_shards() != static_cast<int>(shards.size()))
    throw ConfigError("grid_bound_constants: one surrogate per shard required");
  if (!in_domain(model, grid.lo) || !in_domain(model, grid.hi))
    throw ConfigError("grid_bound_constants: grid exceeds the model domain");

  const int n_shards = static_cast<int>(shards.size());
  std::vector<double> gamma_sq(static_cast<std::size_t>(n_shards), 0.0);
  std::vector<double> eps_sq(static_cast<std::size_t>(n_shards), 0.0);

  const auto scan = [&](long begin, long end, std::vector<double>& g_out,
                        std::vector<double>& e_out) {
    Vector score(model.dimension);
    for (long p = begin; p < end; ++p) {
      const Vector theta = grid.point(p);
      for (int s = 0; s < n_shards; ++s) {
        const Shard& shard = shards[static_cast<std::size_t>(s)];
        const Vector q_score =
            grad_log_surrogate(
                surrogates.per_shard[static_cast<std::size_t>(s)], theta) /
            static_cast<double>(shard.size());
        double eps_acc = 0.0;
        double gamma_max = 0.0;
        for (const auto& x : shard.data) {
          score.setZero();
          add_grad_log_lik_datum(model, theta, x, score);
          gamma_max = std::max(gamma_max, score.squaredNorm());
          eps_acc += (score - q_score).squaredNorm();
        }
        auto& g = g_out[static_cast<std::size_t>(s)];
        auto& e = e_out[static_cast<std::size_t>(s)];
        g = std::max(g, gamma_max);
        e = std::max(e, eps_acc / static_cast<double>(shard.size()));
      }
    }
  };

  if (exec == Exec::Serial) {
    scan(0, n_points, gamma_sq, eps_sq);
  } else {
#pragma omp parallel
    {
      std::vector<double> g_local(static_cast<std::size_t>(n_shards), 0.0);
      std::vector<double> e_local(static_cast<std::size_t>(n_shards), 0.0);
#pragma omp for schedule(static) nowait
      for (long p = 0; p < n_points; ++p) scan(p, p + 1, g_local, e_local);
#pragma omp critical
      for (int s = 0; s < n_shards; ++s) {
        gamma_sq[static_cast<std::size_t>(s)] =
            std::max(gamma_sq[static_cast<std::size_t>(s)],
                     g_local[static_cast<std::size_t>(s)]);
        eps_sq[static_cast<std::size_t>(s)] =
            std::max(eps_sq[static_cast<std::size_t>(s)],
                     e_local[static_cast<std::size_t>(s)]);
      }
    }
  }

  BoundConstants out;
  out.gamma_sq = std::move(gamma_sq);
  out.epsilon_sq = std::move(eps_sq);
  out.grid = grid;
  return out;
}

LogLikCurve avg_log_likelihood(const ChainTrace& trace, const ModelSpec& model,
                               const Dataset& heldout, int stride, Exec exec) {
  if (heldout.empty()) throw DataError("avg_log_likelihood: empty held-out set");
  if (trace.records.empty()) throw DataError("avg_log_likelihood: empty trace");
  if (stride < 1) throw std::invalid_argument("avg_log_likelihood: stride < 1");

  // Per-sample held-out average log-likelihood; records are independent, so
  // the parallel path fills disjoint slots.
  const auto n_rec = static_cast<std::ptrdiff_t>(trace.records.size());
  std::vector<double> ll(static_cast<std::size_t>(n_rec));
  const auto eval = [&](std::ptrdiff_t i) {
    const Vector& theta = trace.records[static_cast<std::size_t>(i)].theta;
    double acc = 0.0;
    for (const auto& x : heldout) acc += log_lik_datum(model, theta, x);
    ll[static_cast<std::size_t>(i)] = acc / static_cast<double>(heldout.size());
  };
  if (exec == Exec::Serial) {
    for (std::ptrdiff_t i = 0; i < n_rec; ++i) eval(i);
  } else {
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < n_rec; ++i) eval(i);
  }

  const auto chains = records_by_chain(trace);
  std::size_t len = chains.front().size();
  for (const auto& c : chains) len = std::min(len, c.size());

  // Index of each record within `ll` (records_by_chain preserves order).
  std::map<const TraceRecord*, std::size_t> slot;
  for (std::size_t i = 0; i < trace.records.size(); ++i)
    slot[&trace.records[i]] = i;

  const std::size_t n_checkpoints = len / static_cast<std::size_t>(stride);
  if (n_checkpoints == 0)
    throw DataError("avg_log_likelihood: stride exceeds the trace length");
  LogLikCurve curve;
  curve.n_samples.resize(n_checkpoints);
  curve.avg_log_lik.assign(n_checkpoints, 0.0);
  for (const auto& chain : chains) {
    double running = 0.0;
    std::size_t cp = 0;
    for (std::size_t i = 0; i < len; ++i) {
      running += ll[slot.at(chain[i])];
      if ((i + 1) % static_cast<std::size_t>(stride) == 0) {
        curve.avg_log_lik[cp] += running / static_cast<double>(i + 1);
        ++cp;
      }
    }
  }
  for (std::size_t cp = 0; cp < n_checkpoints; ++cp) {
    curve.n_samples[cp] = static_cast<long>((cp + 1) * static_cast<std::size_t>(stride));
    curve.avg_log_lik[cp] /= static_cast<double>(chains.size());
  }
  return curve;
}

}  // namespace fedld
