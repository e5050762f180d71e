// SPDX-License-Identifier: Apache-2.0
#include "fedld/federation.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include "fedld/data.hpp"

namespace fedld {

void validate_config(const FederationConfig& cfg, int n_shards) {
  if (cfg.local_updates < 1)
    throw ConfigError("federation: local_updates must be >= 1");
  if (cfg.rounds < 0) throw ConfigError("federation: rounds must be >= 0");
  if (cfg.burn_in < 0) throw ConfigError("federation: burn_in must be >= 0");
  if (cfg.thinning < 1) throw ConfigError("federation: thinning must be >= 1");
  if (cfg.batch_size < 1)
    throw ConfigError("federation: batch_size must be >= 1");
  if (cfg.chains < 1) throw ConfigError("federation: chains must be >= 1");
  if (cfg.estimator.algo == EstimatorKind::Algo::SGLD && n_shards != 1)
    throw ConfigError(
        "federation: the SGLD estimator is the pooled-data algorithm and "
        "requires a single shard");
}

int ChainTrace::n_chains() const {
  int n = 0;
  for (const auto& r : records) n = std::max(n, r.chain + 1);
  return n;
}

int select_client(const std::vector<double>& probs, RandomStream& rng) {
  if (probs.empty()) throw std::invalid_argument("select_client: empty probs");
  double total = 0.0;
  for (const double p : probs) {
    if (!(p > 0.0)) throw std::invalid_argument("select_client: f_s must be > 0");
    total += p;
  }
  if (std::abs(total - 1.0) > 1e-9)
    throw std::invalid_argument("select_client: probabilities must sum to 1");
  const double u = rng.uniform01();
  double cdf = 0.0;
  for (std::size_t s = 0; s < probs.size(); ++s) {
    cdf += probs[s];
    if (u < cdf) return static_cast<int>(s);
  }
  return static_cast<int>(probs.size()) - 1;
}

std::pair<ChainState, std::vector<Vector>> client_update(
    ChainState state, const ModelSpec& model, const Shard& shard,
    const FederationConfig& cfg, const SurrogateSet* surrogates) {
  const bool wants_surrogates =
      cfg.estimator.algo == EstimatorKind::Algo::CGDSGLD;
  if (wants_surrogates && surrogates == nullptr)
    throw ConfigError("client_update: CGDSGLD requires surrogates");
  if (!wants_surrogates && surrogates != nullptr)
    throw ConfigError("client_update: surrogates supplied but estimator is not CGDSGLD");

  std::vector<Vector> visited;
  visited.reserve(static_cast<std::size_t>(cfg.local_updates));
  for (int i = 0; i < cfg.local_updates; ++i) {
    const MiniBatch batch = sample_minibatch(shard, cfg.batch_size, state.rng);
    GradientEstimate est;
    switch (cfg.estimator.algo) {
      case EstimatorKind::Algo::SGLD:
        est = sgld_estimate(model, state.theta, shard.data, batch,
                            shard.size());
        break;
      case EstimatorKind::Algo::DSGLD:
        est = dsgld_estimate(model, state.theta, shard, batch,
                             shard.selection_prob);
        break;
      case EstimatorKind::Algo::CGDSGLD:
        est = cgdsgld_estimate(model, state.theta, shard, batch,
                               shard.selection_prob, *surrogates,
                               cfg.estimator.alpha);
        break;
    }
    step(state, est.vector, cfg.schedule, model);
    visited.push_back(state.theta);
  }
  return {std::move(state), std::move(visited)};
}

namespace {

std::vector<TraceRecord> run_one_chain(const ModelSpec& model,
                                       const std::vector<Shard>& shards,
                                       const FederationConfig& cfg,
                                       const SurrogateSet* surrogates,
                                       int chain_id) {
  const auto probs = selection_probs(shards);
  RandomStream server(cfg.seed, 2 * static_cast<std::uint64_t>(chain_id));
  ChainState state;
  state.theta = cfg.initial_theta.size() > 0
                    ? cfg.initial_theta
                    : Vector::Zero(model.dimension);
  clamp_to_domain(model, state.theta);
  if (model.kind == ModelKind::BernoulliCoin &&
      cfg.initial_theta.size() == 0)
    state.theta[0] = 0.5;
  state.rng =
      RandomStream(cfg.seed, 2 * static_cast<std::uint64_t>(chain_id) + 1);

  std::vector<TraceRecord> records;
  for (int round = 0; round < cfg.rounds; ++round) {
    const int s = select_client(probs, server);
    auto [next, visited] = client_update(
        std::move(state), model, shards[static_cast<std::size_t>(s)], cfg,
        surrogates);
    state = std::move(next);
    const long t_last = state.t;
    const long t_first = t_last - static_cast<long>(visited.size()) + 1;
    for (std::size_t i = 0; i < visited.size(); ++i) {
      const long t = t_first + static_cast<long>(i);
      const long k = t - cfg.burn_in;
      if (k > 0 && k % cfg.thinning == 0)
        records.push_back({chain_id, round, s, t, std::move(visited[i])});
    }
  }
  return records;
}

}  // namespace

ChainTrace run_simulation(const ModelSpec& model,
                          const std::vector<Shard>& shards,
                          const FederationConfig& cfg,
                          const SurrogateSet* surrogates, Exec exec) {
  validate_shards(shards);
  validate_config(cfg, static_cast<int>(shards.size()));
  if (cfg.initial_theta.size() > 0 &&
      cfg.initial_theta.size() != model.dimension)
    throw ConfigError("federation: initial_theta dimension mismatch");
  if (surrogates != nullptr &&
      surrogates->n_shards() != static_cast<int>(shards.size()))
    throw ConfigError("federation: one surrogate per shard required");

  std::vector<std::vector<TraceRecord>> per_chain(
      static_cast<std::size_t>(cfg.chains));
  if (exec == Exec::Serial || cfg.chains == 1) {
    for (int c = 0; c < cfg.chains; ++c)
      per_chain[static_cast<std::size_t>(c)] =
          run_one_chain(model, shards, cfg, surrogates, c);
  } else {
#pragma omp parallel for schedule(dynamic)
    for (int c = 0; c < cfg.chains; ++c)
      per_chain[static_cast<std::size_t>(c)] =
          run_one_chain(model, shards, cfg, surrogates, c);
  }

  ChainTrace trace;
  std::size_t total = 0;
  for (const auto& r : per_chain) total += r.size();
  trace.records.reserve(total);
  for (auto& r : per_chain)
    std::move(r.begin(), r.end(), std::back_inserter(trace.records));
  trace.metadata = nlohmann::json{
      {"seed", cfg.seed},
      {"chains", cfg.chains},
      {"rounds", cfg.rounds},
      {"local_updates", cfg.local_updates},
      {"burn_in", cfg.burn_in},
      {"thinning", cfg.thinning},
      {"n_records", trace.records.size()}};
  return trace;
}

// ---------------------------------------------------------------------------
// Shard construction
// ---------------------------------------------------------------------------

namespace {

std::vector<int> shard_sizes(int n, int n_shards) {
  std::vector<int> sizes(static_cast<std::size_t>(n_shards), n / n_shards);
  for (int s = 0; s < n % n_shards; ++s) ++sizes[static_cast<std::size_t>(s)];
  return sizes;
}

void assign_probs(std::vector<Shard>& shards) {
  long total = 0;
  for (const auto& s : shards) total += s.size();
  for (auto& s : shards)
    s.selection_prob =
        static_cast<double>(s.size()) / static_cast<double>(total);
}

std::vector<Shard> equal_split(const Dataset& pooled, int n_shards,
                               RandomStream& rng) {
  const int n = static_cast<int>(pooled.size());
  if (n < n_shards)
    throw DataError("make_shards: fewer data points than shards");
  std::vector<int> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), 0);
  for (int i = n - 1; i > 0; --i)
    std::swap(perm[static_cast<std::size_t>(i)],
              perm[static_cast<std::size_t>(rng.uniform_index(i + 1))]);
  const auto sizes = shard_sizes(n, n_shards);
  std::vector<Shard> shards(static_cast<std::size_t>(n_shards));
  int next = 0;
  for (int s = 0; s < n_shards; ++s) {
    auto& shard = shards[static_cast<std::size_t>(s)];
    shard.id = s;
    shard.data.reserve(static_cast<std::size_t>(sizes[static_cast<std::size_t>(s)]));
    for (int i = 0; i < sizes[static_cast<std::size_t>(s)]; ++i)
      shard.data.push_back(pooled[static_cast<std::size_t>(perm[static_cast<std::size_t>(next++)])]);
  }
  assign_probs(shards);
  return shards;
}

std::vector<Shard> label_beta_split(const Dataset& pooled, double a, double b,
                                    int n_shards, RandomStream& rng) {
  std::vector<int> positives, negatives;
  for (int i = 0; i < static_cast<int>(pooled.size()); ++i) {
    const auto& d = pooled[static_cast<std::size_t>(i)];
    if (!d.target || (*d.target != 0.0 && *d.target != 1.0))
      throw DataError("make_shards(LabelBeta): data must carry binary labels");
    (*d.target == 1.0 ? positives : negatives).push_back(i);
  }
  auto shuffle = [&rng](std::vector<int>& v) {
    for (int i = static_cast<int>(v.size()) - 1; i > 0; --i)
      std::swap(v[static_cast<std::size_t>(i)],
                v[static_cast<std::size_t>(rng.uniform_index(i + 1))]);
  };
  shuffle(positives);
  shuffle(negatives);

  const auto sizes = shard_sizes(static_cast<int>(pooled.size()), n_shards);
  std::vector<Shard> shards(static_cast<std::size_t>(n_shards));
  std::size_t pos_next = 0, neg_next = 0;
  for (int s = 0; s < n_shards; ++s) {
    auto& shard = shards[static_cast<std::size_t>(s)];
    shard.id = s;
    const int n_s = sizes[static_cast<std::size_t>(s)];
    int want_pos;
    if (s + 1 < n_shards) {
      const double pi = rng.beta(a, b);
      want_pos = static_cast<int>(std::lround(pi * n_s));
    } else {
      // Last shard absorbs the remainder so the shards partition the pool.
      want_pos = static_cast<int>(positives.size() - pos_next);
    }
    const int want_neg = n_s - want_pos;
    const int have_pos = static_cast<int>(positives.size() - pos_next);
    const int have_neg = static_cast<int>(negatives.size() - neg_next);
    if (want_pos > have_pos)
      throw DataError("make_shards(LabelBeta): shard " + std::to_string(s) +
                      " needs " + std::to_string(want_pos) +
                      " positive labels but only " + std::to_string(have_pos) +
                      " remain (deficit " + std::to_string(want_pos - have_pos) +
                      ")");
    if (want_neg > have_neg)
      throw DataError("make_shards(LabelBeta): shard " + std::to_string(s) +
                      " needs " + std::to_string(want_neg) +
                      " negative labels but only " + std::to_string(have_neg) +
                      " remain (deficit " + std::to_string(want_neg - have_neg) +
                      ")");
    for (int i = 0; i < want_pos; ++i)
      shard.data.push_back(pooled[static_cast<std::size_t>(positives[pos_next++])]);
    for (int i = 0; i < want_neg; ++i)
      shard.data.push_back(pooled[static_cast<std::size_t>(negatives[neg_next++])]);
  }
  assign_probs(shards);
  return shards;
}

std::vector<Shard> by_means_generate(const ByMeans& strategy, int n_shards,
                                     RandomStream& rng) {
  if (static_cast<int>(strategy.means.size()) != n_shards)
    throw ConfigError("make_shards(ByMeans): one mean per shard required");
  if (strategy.points_per_shard < 1)
    throw ConfigError("make_shards(ByMeans): points_per_shard must be >= 1");
  const auto d = strategy.means.front().size();
  std::vector<Shard> shards(static_cast<std::size_t>(n_shards));
  for (int s = 0; s < n_shards; ++s) {
    auto& shard = shards[static_cast<std::size_t>(s)];
    shard.id = s;
    const Vector& mu = strategy.means[static_cast<std::size_t>(s)];
    if (mu.size() != d)
      throw ConfigError("make_shards(ByMeans): ragged mean list");
    for (int i = 0; i < strategy.points_per_shard; ++i) {
      DataPoint p;
      p.features.resize(d);
      for (Eigen::Index k = 0; k < d; ++k)
        p.features[k] = mu[k] + rng.gaussian();
      shard.data.push_back(std::move(p));
    }
  }
  assign_probs(shards);
  return shards;
}

}  // namespace

std::vector<Shard> make_shards(const Dataset& pooled,
                               const ShardStrategy& strategy, int n_shards,
                               RandomStream& rng) {
  if (n_shards < 1) throw ConfigError("make_shards: need at least one shard");
  if (std::holds_alternative<ByMeans>(strategy))
    return by_means_generate(std::get<ByMeans>(strategy), n_shards, rng);
  if (pooled.empty()) throw DataError("make_shards: empty pooled dataset");
  if (std::holds_alternative<EqualSplit>(strategy))
    return equal_split(pooled, n_shards, rng);
  const auto& lb = std::get<LabelBeta>(strategy);
  if (!(lb.a > 0.0) || !(lb.b > 0.0))
    throw ConfigError("make_shards(LabelBeta): parameters must be positive");
  return label_beta_split(pooled, lb.a, lb.b, n_shards, rng);
}

// ---------------------------------------------------------------------------
// Trace serialization
// ---------------------------------------------------------------------------

void write_trace_csv(const ChainTrace& trace, std::ostream& out) {
  const int d = trace.dimension();
  out << "chain,round,shard,t";
  for (int k = 0; k < d; ++k) out << ",theta_" << k;
  out << '\n';
  for (const auto& r : trace.records) {
    out << r.chain << ',' << r.round << ',' << r.shard << ',' << r.t;
    for (int k = 0; k < d; ++k) out << ',' << format_double(r.theta[k]);
    out << '\n';
  }
}

ChainTrace read_trace_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw DataError("empty trace CSV");
  int d = 0;
  {
    std::stringstream header(line);
    std::string col;
    int idx = 0;
    const char* expect[] = {"chain", "round", "shard", "t"};
    while (std::getline(header, col, ',')) {
      if (idx < 4) {
        if (col != expect[idx])
          throw DataError("unexpected trace column '" + col + "'");
      } else if (col.rfind("theta_", 0) == 0) {
        ++d;
      } else {
        throw DataError("unexpected trace column '" + col + "'");
      }
      ++idx;
    }
  }
  ChainTrace trace;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream row(line);
    std::string cell;
    TraceRecord r;
    std::getline(row, cell, ',');
    r.chain = std::stoi(cell);
    std::getline(row, cell, ',');
    r.round = std::stoi(cell);
    std::getline(row, cell, ',');
    r.shard = std::stoi(cell);
    std::getline(row, cell, ',');
    r.t = std::stol(cell);
    r.theta.resize(d);
    for (int k = 0; k < d; ++k) {
      if (!std::getline(row, cell, ',')) throw DataError("short trace row");
      r.theta[k] = std::stod(cell);
    }
    trace.records.push_back(std::move(r));
  }
  return trace;
}

void write_trace_csv_file(const ChainTrace& trace, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot open for writing: " + path);
  write_trace_csv(trace, out);
}

ChainTrace read_trace_csv_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open trace: " + path);
  return read_trace_csv(in);
}

namespace {

constexpr char kTraceMagic[4] = {'F', 'L', 'D', 'T'};

template <typename T>
void put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

template <typename T>
T get(std::istream& in) {
  T v;
  in.read(reinterpret_cast<char*>(&v), sizeof(v));
  if (!in) throw DataError("truncated binary trace");
  return v;
}

}  // namespace

void write_trace_binary(const ChainTrace& trace, std::ostream& out) {
  out.write(kTraceMagic, 4);
  put<std::uint32_t>(out, 1);  // version
  put<std::uint32_t>(out, static_cast<std::uint32_t>(trace.dimension()));
  put<std::uint64_t>(out, trace.records.size());
  for (const auto& r : trace.records) {
    put<std::int32_t>(out, r.chain);
    put<std::int32_t>(out, r.round);
    put<std::int32_t>(out, r.shard);
    put<std::int64_t>(out, r.t);
    out.write(reinterpret_cast<const char*>(r.theta.data()),
              static_cast<std::streamsize>(sizeof(double)) * r.theta.size());
  }
}

ChainTrace read_trace_binary(std::istream& in) {
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kTraceMagic, 4) != 0)
    throw DataError("not a binary trace file");
  const auto version = get<std::uint32_t>(in);
  if (version != 1)
    throw DataError("unsupported binary trace version " +
                    std::to_string(version));
  const auto d = get<std::uint32_t>(in);
  const auto count = get<std::uint64_t>(in);
  ChainTrace trace;
  trace.records.reserve(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    TraceRecord r;
    r.chain = get<std::int32_t>(in);
    r.round = get<std::int32_t>(in);
    r.shard = get<std::int32_t>(in);
    r.t = get<std::int64_t>(in);
    r.theta.resize(d);
    in.read(reinterpret_cast<char*>(r.theta.data()),
            static_cast<std::streamsize>(sizeof(double)) * d);
    if (!in) throw DataError("truncated binary trace");
    trace.records.push_back(std::move(r));
  }
  return trace;
}

void write_trace_binary_file(const ChainTrace& trace, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open for writing: " + path);
  write_trace_binary(trace, out);
}

ChainTrace read_trace_binary_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open trace: " + path);
  return read_trace_binary(in);
}

}  // namespace fedld
