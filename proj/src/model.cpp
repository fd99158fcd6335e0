#include "bayesrank/model.hpp"

#include <cmath>
#include <limits>
#include <numeric>

#include "bayesrank/parallel.hpp"

namespace bayesrank {

namespace {

constexpr int kMaxRetries = 100;

double softplus(double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

double standard_normal(Rng& rng) { return std::normal_distribution<double>(0.0, 1.0)(rng); }

double uniform01(Rng& rng) { return std::uniform_real_distribution<double>(0.0, 1.0)(rng); }

/// scale / Gamma(shape, 1), retried until positive and finite.
double draw_inverse_gamma(double shape, double scale, double fallback, Rng& rng, long& retries) {
  std::gamma_distribution<double> g(shape, 1.0);
  for (int i = 0; i < kMaxRetries; ++i) {
    const double v = scale / g(rng);
    if (std::isfinite(v) && v > 0.0) return v;
    ++retries;
  }
  return fallback;
}

Index free_count(const Design& d) { return d.free_players(); }

double squared_deviation_sum(const ChainState& s, const Design& d, const Eigen::VectorXd& weights) {
  double total = 0.0;
  for (Index c = 0; c < free_count(d); ++c) {
    const double e = s.xi(d.column_player[static_cast<std::size_t>(c)]) - s.mu;
    total += e * e * weights(c);
  }
  return total;
}

Eigen::VectorXd free_abilities(const ChainState& s, const Design& d) {
  Eigen::VectorXd v(free_count(d));
  for (Index c = 0; c < v.size(); ++c) v(c) = s.xi(d.column_player[static_cast<std::size_t>(c)]);
  return v;
}

void update_xi(ChainState& s, const Design& d, const PriorSpec& prior, Rng& rng) {
  const Index f = free_count(d);
  if (f == 0) return;
  const Eigen::VectorXd v = prior_variances(s, d, prior);
  Eigen::MatrixXd q = d.xtx / s.sigma2;
  q.diagonal() += v.cwiseInverse();
  const Eigen::VectorXd b = d.xty / s.sigma2 + s.mu * v.cwiseInverse();
  const Eigen::LLT<Eigen::MatrixXd> llt(q);
  if (llt.info() != Eigen::Success) throw std::runtime_error("ability precision matrix is not positive definite");
  Eigen::VectorXd z(f);
  for (Index i = 0; i < f; ++i) z(i) = standard_normal(rng);
  const Eigen::VectorXd draw = llt.solve(b) + llt.matrixU().solve(z);
  for (Index c = 0; c < f; ++c) s.xi(d.column_player[static_cast<std::size_t>(c)]) = draw(c);
  s.xi(d.reference) = 0.0;
}

void update_mu(ChainState& s, const Design& d, const PriorSpec& prior, Rng& rng) {
  const Eigen::VectorXd inv = prior_variances(s, d, prior).cwiseInverse();
  const double precision = 1.0 / (prior.mu_sd * prior.mu_sd) + inv.sum();
  const double mean = free_abilities(s, d).dot(inv) / precision;
  s.mu = mean + standard_normal(rng) / std::sqrt(precision);
}

void update_sigma2(ChainState& s, const Design& d, const PriorSpec& prior, Rng& rng, SamplerDiagnostics& diag) {
  const double n = static_cast<double>(d.encounters());
  const double f = static_cast<double>(free_count(d));
  const double rss = d.encounters() > 0 ? (d.y - d.x * free_abilities(s, d)).squaredNorm() : 0.0;
  double shape = n / 2.0;
  double scale = rss / 2.0;
  switch (prior.kind) {
    case PriorKind::laplace:
      // sigma^2 does not enter the ability prior; without data its conditional is improper.
      if (d.encounters() == 0) return;
      break;
    case PriorKind::scaled_laplace: {
      Eigen::VectorXd w(free_count(d));
      for (Index c = 0; c < w.size(); ++c) w(c) = 1.0 / s.omega(d.column_player[static_cast<std::size_t>(c)]);
      shape += f / 2.0;
      scale += squared_deviation_sum(s, d, w) / 2.0;
      break;
    }
    case PriorKind::normal_half_cauchy:
      shape += f / 2.0;
      scale += squared_deviation_sum(s, d, Eigen::VectorXd::Constant(free_count(d), 1.0 / s.lambda)) / 2.0;
      break;
  }
  if (shape <= 0.0) return;
  s.sigma2 = draw_inverse_gamma(shape, scale, s.sigma2, rng, diag.variance_retries);
}

void update_omega(ChainState& s, const Design& d, const PriorSpec& prior, Rng& rng, SamplerDiagnostics& diag) {
  // 1/omega | rest ~ InvGauss(sqrt(a / b), a) with a the exponential rate
  // times 2 and b the squared deviation on the omega scale.
  double a = 0.0;
  double scale2 = 1.0;
  if (prior.kind == PriorKind::laplace) {
    a = 1.0 / (prior.laplace_scale * prior.laplace_scale);
  } else {
    a = s.lambda;
    scale2 = s.sigma2;
  }
  for (Index c = 0; c < free_count(d); ++c) {
    const Index p = d.column_player[static_cast<std::size_t>(c)];
    const double dev = std::max(std::abs(s.xi(p) - s.mu), 1e-12);
    const double mean = std::sqrt(a * scale2) / dev;
    double inv = std::numeric_limits<double>::quiet_NaN();
    for (int i = 0; i < kMaxRetries; ++i) {
      inv = sample_inverse_gaussian(mean, a, rng);
      if (std::isfinite(inv) && inv > 0.0 && std::isfinite(1.0 / inv) && 1.0 / inv > 0.0) break;
      ++diag.scale_retries;
      inv = std::numeric_limits<double>::quiet_NaN();
    }
    if (std::isfinite(inv)) s.omega(p) = 1.0 / inv;
  }
}

void update_lambda_gamma(ChainState& s, const Design& d, const PriorSpec& prior, Rng& rng) {
  double omega_sum = 0.0;
  for (Index c = 0; c < free_count(d); ++c) omega_sum += s.omega(d.column_player[static_cast<std::size_t>(c)]);
  const double shape = prior.lambda_shape + static_cast<double>(free_count(d));
  const double rate = prior.lambda_rate + omega_sum / 2.0;
  const double v = std::gamma_distribution<double>(shape, 1.0 / rate)(rng);
  if (std::isfinite(v) && v > 0.0) s.lambda = v;
}

void update_lambda_slice(ChainState& s, const Design& d, const PriorSpec& prior, Rng& rng,
                         SamplerDiagnostics& diag) {
  const double f = static_cast<double>(free_count(d));
  const double ss = squared_deviation_sum(s, d, Eigen::VectorXd::Ones(free_count(d)));
  const double c = prior.half_cauchy_scale;
  const double half_ss = ss / (2.0 * s.sigma2);
  auto log_target = [&](double eta) {
    return -(f / 2.0) * eta - half_ss * std::exp(-eta) - softplus(2.0 * (eta - std::log(c))) + eta;
  };
  const double eta0 = std::log(s.lambda);
  const double level = log_target(eta0) + std::log(uniform01(rng) + std::numeric_limits<double>::min());
  constexpr double width = 1.0;
  constexpr int max_steps = 64;
  double lo = eta0 - width * uniform01(rng);
  double hi = lo + width;
  for (int i = 0; i < max_steps && log_target(lo) > level; ++i, ++diag.slice_expansions) lo -= width;
  for (int i = 0; i < max_steps && log_target(hi) > level; ++i, ++diag.slice_expansions) hi += width;
  for (int i = 0; i < 1000; ++i) {
    const double eta = lo + (hi - lo) * uniform01(rng);
    if (log_target(eta) > level) {
      const double v = std::exp(eta);
      if (std::isfinite(v) && v > 0.0) s.lambda = v;
      return;
    }
    ++diag.slice_shrinks;
    (eta < eta0 ? lo : hi) = eta;
  }
}

}  // namespace

PriorSpec PriorSpec::numbered(int k) {
  if (k < 1 || k > 3) throw InvalidInput("prior must be 1, 2 or 3");
  PriorSpec p;
  p.kind = static_cast<PriorKind>(k);
  return p;
}

void PriorSpec::validate() const {
  if (number() < 1 || number() > 3) throw InvalidInput("unknown prior kind");
  for (double v : {laplace_scale, lambda_shape, lambda_rate, half_cauchy_scale, mu_sd})
    if (!(v > 0.0) || !std::isfinite(v)) throw InvalidInput("prior constants must be positive and finite");
}

void SamplerConfig::validate() const {
  if (chains < 1) throw InvalidInput("chains must be at least 1");
  if (burn_in < 0) throw InvalidInput("burn-in must be non-negative");
  if (thin < 1) throw InvalidInput("thin must be at least 1");
  if (target_draws < 1) throw InvalidInput("target draws must be at least 1");
  if (max_iterations < 0) throw InvalidInput("iteration cap must be non-negative");
  if (max_iterations > 0) {
    const long need = iterations_in_chain(0);
    if (need > max_iterations)
      throw InvalidInput("target unreachable: " + std::to_string(target_draws) + " draws with burn-in " +
                         std::to_string(burn_in) + " and thin " + std::to_string(thin) + " require " +
                         std::to_string(need) + " iterations per chain, cap is " + std::to_string(max_iterations));
  }
}

int SamplerConfig::kept_in_chain(int c) const {
  return target_draws / chains + (c < target_draws % chains ? 1 : 0);
}

SamplerDiagnostics& SamplerDiagnostics::operator+=(const SamplerDiagnostics& o) {
  variance_retries += o.variance_retries;
  scale_retries += o.scale_retries;
  slice_expansions += o.slice_expansions;
  slice_shrinks += o.slice_shrinks;
  iterations += o.iterations;
  return *this;
}

Eigen::VectorXd Design::mean(const Eigen::VectorXd& abilities) const {
  if (abilities.size() != players) throw InvalidInput("ability vector has the wrong length");
  Eigen::VectorXd free(free_players());
  for (Index c = 0; c < free.size(); ++c) free(c) = abilities(column_player[static_cast<std::size_t>(c)]);
  return x * free;
}

Index reference_player(std::span<const Encounter> encounters, Index players, const std::vector<std::string>& ids) {
  if (players < 1) throw InvalidInput("at least one player is required");
  if (!ids.empty() && static_cast<Index>(ids.size()) != players) throw InvalidInput("player id count mismatch");
  std::vector<long> count(static_cast<std::size_t>(players), 0);
  for (const auto& e : encounters)
    for (const auto* lineup : {&e.lineup_a, &e.lineup_b})
      for (Index p : *lineup) {
        if (p < 0 || p >= players) throw InvalidInput("encounter references an unknown player index");
        ++count[static_cast<std::size_t>(p)];
      }
  Index best = 0;
  for (Index p = 1; p < players; ++p) {
    const auto cp = count[static_cast<std::size_t>(p)];
    const auto cb = count[static_cast<std::size_t>(best)];
    if (cp > cb || (cp == cb && !ids.empty() && ids[static_cast<std::size_t>(p)] < ids[static_cast<std::size_t>(best)]))
      best = p;
  }
  return best;
}

Design build_design(std::span<const Encounter> encounters, Index players, Index reference) {
  if (players < 1) throw InvalidInput("at least one player is required");
  if (reference < 0 || reference >= players) throw InvalidInput("reference player out of range");
  Design d;
  d.players = players;
  d.reference = reference;
  d.free_column.assign(static_cast<std::size_t>(players), -1);
  for (Index p = 0; p < players; ++p) {
    if (p == reference) continue;
    d.free_column[static_cast<std::size_t>(p)] = static_cast<Index>(d.column_player.size());
    d.column_player.push_back(p);
  }
  const Index n = static_cast<Index>(encounters.size());
  const Index f = static_cast<Index>(d.column_player.size());
  std::vector<Eigen::Triplet<double>> triplets;
  triplets.reserve(static_cast<std::size_t>(n) * 2 * kLineupSize);
  d.y.resize(n);
  for (Index i = 0; i < n; ++i) {
    const auto& e = encounters[static_cast<std::size_t>(i)];
    std::vector<Index> seen;
    for (int side = 0; side < 2; ++side)
      for (Index p : side == 0 ? e.lineup_a : e.lineup_b) {
        if (p < 0 || p >= players) throw InvalidInput("encounter references an unknown player index");
        if (std::find(seen.begin(), seen.end(), p) != seen.end())
          throw InvalidInput("player appears twice in encounter " + std::to_string(i));
        seen.push_back(p);
        const Index c = d.free_column[static_cast<std::size_t>(p)];
        if (c >= 0) triplets.emplace_back(i, c, side == 0 ? 1.0 : -1.0);
      }
    d.y(i) = e.diff;
  }
  d.x.resize(n, f);
  d.x.setFromTriplets(triplets.begin(), triplets.end());
  d.xtx = Eigen::MatrixXd(d.x.transpose() * d.x);
  d.xty = d.x.transpose() * d.y;
  d.rank = f == 0 ? 0 : Eigen::ColPivHouseholderQR<Eigen::MatrixXd>(d.xtx).rank();
  return d;
}

Rng chain_rng(std::uint64_t seed, std::uint64_t chain) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(chain), static_cast<std::uint32_t>(chain >> 32)};
  return Rng(seq);
}

ChainState initial_state(const Design& design, const PriorSpec& prior, Rng& rng) {
  prior.validate();
  ChainState s;
  s.xi = Eigen::VectorXd::Zero(design.players);
  for (Index p : design.column_player) s.xi(p) = 0.5 * standard_normal(rng);
  s.mu = 0.5 * standard_normal(rng);
  double var_y = 1.0;
  if (design.encounters() > 1) {
    const double m = design.y.mean();
    var_y = std::max((design.y.array() - m).square().sum() / static_cast<double>(design.encounters() - 1), 1e-6);
  }
  const double jitter = std::exp(std::uniform_real_distribution<double>(-0.7, 0.7)(rng));
  s.sigma2 = var_y * jitter;
  s.lambda = jitter;
  const double omega0 = prior.kind == PriorKind::laplace ? 2.0 * prior.laplace_scale * prior.laplace_scale : 2.0 / s.lambda;
  s.omega = Eigen::VectorXd::Constant(design.players, omega0);
  return s;
}

Eigen::VectorXd prior_variances(const ChainState& s, const Design& d, const PriorSpec& prior) {
  Eigen::VectorXd v(d.free_players());
  for (Index c = 0; c < v.size(); ++c) {
    const Index p = d.column_player[static_cast<std::size_t>(c)];
    switch (prior.kind) {
      case PriorKind::laplace: v(c) = s.omega(p); break;
      case PriorKind::scaled_laplace: v(c) = s.sigma2 * s.omega(p); break;
      case PriorKind::normal_half_cauchy: v(c) = s.sigma2 * s.lambda; break;
    }
  }
  return v;
}

GaussianConditional xi_conditional(const ChainState& s, const Design& d, const PriorSpec& prior) {
  const Eigen::VectorXd v = prior_variances(s, d, prior);
  Eigen::MatrixXd q = d.xtx / s.sigma2;
  q.diagonal() += v.cwiseInverse();
  const Eigen::LLT<Eigen::MatrixXd> llt(q);
  if (llt.info() != Eigen::Success) throw std::runtime_error("ability precision matrix is not positive definite");
  GaussianConditional g;
  g.mean = llt.solve(d.xty / s.sigma2 + s.mu * v.cwiseInverse());
  g.covariance = llt.solve(Eigen::MatrixXd::Identity(q.rows(), q.cols()));
  return g;
}

void gibbs_step(ChainState& s, const Design& d, const PriorSpec& prior, Rng& rng, SamplerDiagnostics& diag) {
  update_xi(s, d, prior, rng);
  update_mu(s, d, prior, rng);
  update_sigma2(s, d, prior, rng, diag);
  switch (prior.kind) {
    case PriorKind::laplace:
      update_omega(s, d, prior, rng, diag);
      break;
    case PriorKind::scaled_laplace:
      update_omega(s, d, prior, rng, diag);
      update_lambda_gamma(s, d, prior, rng);
      break;
    case PriorKind::normal_half_cauchy:
      update_lambda_slice(s, d, prior, rng, diag);
      break;
  }
  ++diag.iterations;
}

double sample_inverse_gaussian(double mean, double shape, Rng& rng) {
  if (!(mean > 0.0) || !(shape > 0.0)) throw InvalidInput("inverse Gaussian parameters must be positive");
  if (!std::isfinite(mean)) return std::numeric_limits<double>::infinity();
  const double z = standard_normal(rng);
  const double y = z * z;
  const double my = mean * y;
  const double x = mean + mean * my / (2.0 * shape) - mean / (2.0 * shape) * std::sqrt(4.0 * shape * my + my * my);
  return uniform01(rng) <= mean / (mean + x) ? x : mean * mean / x;
}

std::vector<double> split_rhat(const std::vector<Eigen::MatrixXd>& chains) {
  if (chains.empty()) return {};
  const Index params = chains.front().cols();
  Index n = chains.front().rows();
  for (const auto& c : chains) {
    if (c.cols() != params) throw InvalidInput("chains disagree on the number of parameters");
    n = std::min(n, c.rows());
  }
  const Index half = n / 2;
  std::vector<double> out(static_cast<std::size_t>(params), std::numeric_limits<double>::quiet_NaN());
  if (half < 2) return out;
  const double h = static_cast<double>(half);
  const double m = static_cast<double>(2 * chains.size());
  for (Index j = 0; j < params; ++j) {
    std::vector<double> means;
    std::vector<double> vars;
    for (const auto& c : chains)
      for (Index start : {Index{0}, n - half}) {
        const auto seg = c.col(j).segment(start, half);
        const double mu = seg.mean();
        means.push_back(mu);
        vars.push_back((seg.array() - mu).square().sum() / (h - 1.0));
      }
    const double grand = std::accumulate(means.begin(), means.end(), 0.0) / m;
    double b = 0.0;
    for (double mu : means) b += (mu - grand) * (mu - grand);
    b *= h / (m - 1.0);
    const double w = std::accumulate(vars.begin(), vars.end(), 0.0) / m;
    if (!(w > 0.0)) continue;
    const double var_plus = (h - 1.0) / h * w + b / h;
    out[static_cast<std::size_t>(j)] = std::sqrt(var_plus / w);
  }
  return out;
}

SamplerOutput run_chains(const SamplerConfig& config, std::span<const Encounter> encounters, Index players,
                         const PriorSpec& prior, std::vector<std::string> ids) {
  config.validate();
  prior.validate();
  if (ids.empty())
    for (Index p = 0; p < players; ++p) ids.push_back(std::to_string(p));
  const Index reference = reference_player(encounters, players, ids);
  const Design design = build_design(encounters, players, reference);

  struct ChainResult {
    Eigen::MatrixXd xi;
    Eigen::MatrixXd params;  // mu, sigma2, lambda
    SamplerDiagnostics diagnostics;
  };
  std::vector<ChainResult> results(static_cast<std::size_t>(config.chains));
  parallel_for(config.chains, config.workers, [&](std::ptrdiff_t begin, std::ptrdiff_t end) {
    for (std::ptrdiff_t c = begin; c < end; ++c) {
      auto& r = results[static_cast<std::size_t>(c)];
      Rng rng = chain_rng(config.seed, static_cast<std::uint64_t>(c));
      ChainState state = initial_state(design, prior, rng);
      const int kept = config.kept_in_chain(static_cast<int>(c));
      r.xi.resize(kept, players);
      r.params.resize(kept, 3);
      for (int i = 0; i < config.burn_in; ++i) gibbs_step(state, design, prior, rng, r.diagnostics);
      for (int k = 0; k < kept; ++k) {
        for (int i = 0; i < config.thin; ++i) gibbs_step(state, design, prior, rng, r.diagnostics);
        r.xi.row(k) = state.xi.transpose();
        r.params.row(k) << state.mu, state.sigma2, state.lambda;
      }
    }
  });

  Eigen::MatrixXd all(config.target_draws, players);
  Eigen::MatrixXd params(config.target_draws, 3);
  SamplerDiagnostics diagnostics;
  std::vector<Eigen::MatrixXd> per_chain;
  Index row = 0;
  for (auto& r : results) {
    all.middleRows(row, r.xi.rows()) = r.xi;
    params.middleRows(row, r.params.rows()) = r.params;
    row += r.xi.rows();
    diagnostics += r.diagnostics;
    per_chain.push_back(std::move(r.xi));
  }
  all.col(reference).setZero();

  SamplerOutput out{DrawsXd(std::move(all), std::move(ids)), params.col(0), params.col(1), params.col(2),
                    reference, split_rhat(per_chain), diagnostics, design.rank_deficient()};
  return out;
}

}  // namespace bayesrank
