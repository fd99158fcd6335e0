#include <doctest.h>

#include <bayesrank/model.hpp>

#include <Eigen/LU>
#include <cmath>
#include <numeric>
#include <random>

using namespace bayesrank;

namespace {

Encounter enc(Lineup a, Lineup b, int diff) { return {a, b, diff}; }

/// Random encounters between disjoint random lineups of size 5.
std::vector<Encounter> random_encounters(std::mt19937_64& rng, Index players, int n) {
  std::vector<Index> pool(static_cast<std::size_t>(players));
  std::iota(pool.begin(), pool.end(), Index{0});
  std::vector<Encounter> out;
  for (int i = 0; i < n; ++i) {
    std::shuffle(pool.begin(), pool.end(), rng);
    Encounter e;
    for (int k = 0; k < kLineupSize; ++k) {
      e.lineup_a[static_cast<std::size_t>(k)] = pool[static_cast<std::size_t>(k)];
      e.lineup_b[static_cast<std::size_t>(k)] = pool[static_cast<std::size_t>(k + kLineupSize)];
    }
    out.push_back(e);
  }
  return out;
}

/// Dense design including every player, built without the library.
Eigen::MatrixXd dense_full_design(const std::vector<Encounter>& es, Index players) {
  Eigen::MatrixXd x = Eigen::MatrixXd::Zero(static_cast<Index>(es.size()), players);
  for (std::size_t i = 0; i < es.size(); ++i) {
    for (Index p : es[i].lineup_a) x(static_cast<Index>(i), p) += 1.0;
    for (Index p : es[i].lineup_b) x(static_cast<Index>(i), p) -= 1.0;
  }
  return x;
}

struct Synthetic {
  std::vector<Encounter> encounters;
  Eigen::VectorXd truth;
};

Synthetic synthetic(std::uint64_t seed, Index players, int n, double sd_ability, double sd_noise) {
  std::mt19937_64 rng(seed);
  Synthetic s;
  s.encounters = random_encounters(rng, players, n);
  std::normal_distribution<double> z(0.0, 1.0);
  s.truth.resize(players);
  for (Index p = 0; p < players; ++p) s.truth(p) = sd_ability * z(rng);
  const Eigen::MatrixXd x = dense_full_design(s.encounters, players);
  const Eigen::VectorXd mean = x * s.truth;
  for (int i = 0; i < n; ++i) s.encounters[static_cast<std::size_t>(i)].diff = static_cast<int>(std::lround(mean(i) + sd_noise * z(rng)));
  return s;
}

}  // namespace

TEST_CASE("design: signed incidence with the reference column dropped") {
  const std::vector<Encounter> es{enc({0, 1, 2, 3, 4}, {5, 6, 7, 8, 9}, 3), enc({5, 1, 2, 3, 4}, {0, 6, 7, 8, 10}, -2)};
  const Design d = build_design(es, 11, 0);
  CHECK(d.free_players() == 10);
  CHECK(d.encounters() == 2);
  CHECK(d.free_column[0] == -1);
  const Eigen::MatrixXd x(d.x);
  // Row 0: reference in lineup a, so only four +1 entries remain.
  CHECK(x.row(0).sum() == doctest::Approx(4 - 5));
  CHECK((x.row(0).array() == 1.0).count() == 4);
  CHECK((x.row(1).array() == -1.0).count() == 4);
  CHECK(d.y(0) == 3);
  CHECK(d.y(1) == -2);

  Eigen::VectorXd xi = Eigen::VectorXd::LinSpaced(11, 0.0, 10.0);
  const Eigen::VectorXd mean = d.mean(xi);
  CHECK(mean(0) == doctest::Approx((1 + 2 + 3 + 4) - (5 + 6 + 7 + 8 + 9)));
  CHECK(mean(1) == doctest::Approx((5 + 1 + 2 + 3 + 4) - (6 + 7 + 8 + 10)));

  CHECK_THROWS_AS(build_design(std::vector<Encounter>{enc({0, 1, 2, 3, 4}, {4, 6, 7, 8, 9}, 0)}, 11, 0), InvalidInput);
  CHECK_THROWS_AS(build_design(std::vector<Encounter>{enc({0, 1, 2, 3, 4}, {5, 6, 7, 8, 11}, 0)}, 11, 0), InvalidInput);
  CHECK_THROWS_AS(build_design(es, 11, 11), InvalidInput);
}

TEST_CASE("design: rank deficiency is reported") {
  const std::vector<Encounter> es{enc({0, 1, 2, 3, 4}, {5, 6, 7, 8, 9}, 3)};
  CHECK(build_design(es, 10, 0).rank_deficient());
  std::mt19937_64 rng(3);
  CHECK_FALSE(build_design(random_encounters(rng, 12, 200), 12, 0).rank_deficient());
}

TEST_CASE("reference player: most appearances, ties by id") {
  const std::vector<Encounter> es{enc({0, 1, 2, 3, 4}, {5, 6, 7, 8, 9}, 0), enc({3, 1, 2, 0, 4}, {5, 6, 7, 8, 10}, 0),
                                  enc({3, 1, 2, 0, 11}, {5, 6, 7, 8, 10}, 0)};
  // 0,1,2,3,5,6,7,8 all appear three times.
  CHECK(reference_player(es, 12) == 0);
  std::vector<std::string> ids{"z", "y", "x", "b", "c", "w", "v", "u", "d", "e", "f", "g"};
  CHECK(reference_player(es, 12, ids) == 3);
  CHECK(reference_player(std::vector<Encounter>{}, 4) == 0);
}

TEST_CASE("xi conditional equals the dense closed form") {
  std::mt19937_64 rng(11);
  const Index players = 10;
  const auto es = random_encounters(rng, players, 40);
  std::vector<Encounter> data = es;
  std::normal_distribution<double> z(0.0, 4.0);
  for (auto& e : data) e.diff = static_cast<int>(std::lround(z(rng)));
  const Index ref = reference_player(data, players);
  const Design d = build_design(data, players, ref);

  for (int k = 1; k <= 3; ++k) {
    const PriorSpec prior = PriorSpec::numbered(k);
    ChainState s;
    s.xi = Eigen::VectorXd::Zero(players);
    s.mu = 0.7;
    s.sigma2 = 13.0;
    s.lambda = 0.4;
    s.omega = (Eigen::VectorXd::Random(players).array() + 1.5).matrix();

    // Oracle: drop the reference column by hand and solve densely.
    const Eigen::MatrixXd full = dense_full_design(data, players);
    Eigen::MatrixXd x(full.rows(), players - 1);
    Eigen::VectorXd v(players - 1);
    for (Index p = 0, c = 0; p < players; ++p) {
      if (p == ref) continue;
      x.col(c) = full.col(p);
      v(c) = k == 1 ? s.omega(p) : k == 2 ? s.sigma2 * s.omega(p) : s.sigma2 * s.lambda;
      ++c;
    }
    Eigen::VectorXd y(static_cast<Index>(data.size()));
    for (std::size_t i = 0; i < data.size(); ++i) y(static_cast<Index>(i)) = data[i].diff;
    Eigen::MatrixXd precision = x.transpose() * x / s.sigma2;
    precision += v.cwiseInverse().asDiagonal();
    const Eigen::MatrixXd cov = precision.fullPivLu().inverse();
    const Eigen::VectorXd mean = cov * (x.transpose() * y / s.sigma2 + s.mu * v.cwiseInverse());

    const GaussianConditional g = xi_conditional(s, d, prior);
    CHECK((g.mean - mean).norm() / mean.norm() < 1e-8);
    CHECK((g.covariance - cov).norm() / cov.norm() < 1e-8);
  }
}

TEST_CASE("inverse Gaussian sampler moments") {
  Rng rng(5);
  for (auto [m, shape] : {std::pair{1.0, 1.0}, std::pair{2.5, 0.3}, std::pair{0.2, 8.0}}) {
    const int n = 200000;
    double sum = 0.0;
    double sq = 0.0;
    for (int i = 0; i < n; ++i) {
      const double v = sample_inverse_gaussian(m, shape, rng);
      sum += v;
      sq += v * v;
    }
    const double mean = sum / n;
    const double var = sq / n - mean * mean;
    const double true_var = m * m * m / shape;
    CHECK(std::abs(mean - m) < 5.0 * std::sqrt(true_var / n));
    CHECK(var == doctest::Approx(true_var).epsilon(0.1));
  }
  CHECK_THROWS_AS(sample_inverse_gaussian(0.0, 1.0, rng), InvalidInput);
}

TEST_CASE("no data: prior 1 marginals are recovered") {
  // xi - mu ~ Laplace(0, 3) and mu ~ Normal(0, 9): E|xi - mu| = 3,
  // Var(xi) = 18 + 9 = 27, Var(mu) = 9.
  const Design d = build_design(std::vector<Encounter>{}, 3, 0);
  const PriorSpec prior = PriorSpec::numbered(1);
  Rng rng = chain_rng(17, 0);
  ChainState s = initial_state(d, prior, rng);
  SamplerDiagnostics diag;
  const int steps = 200000;
  double abs_dev = 0.0, xi_sum = 0.0, xi_sq = 0.0, mu_sum = 0.0, mu_sq = 0.0;
  for (int i = 0; i < 1000; ++i) gibbs_step(s, d, prior, rng, diag);
  for (int i = 0; i < steps; ++i) {
    gibbs_step(s, d, prior, rng, diag);
    CHECK_MESSAGE(s.xi(0) == 0.0, "reference must stay pinned");
    for (Index p = 1; p < 3; ++p) {
      abs_dev += std::abs(s.xi(p) - s.mu);
      xi_sum += s.xi(p);
      xi_sq += s.xi(p) * s.xi(p);
    }
    mu_sum += s.mu;
    mu_sq += s.mu * s.mu;
  }
  const double n = 2.0 * steps;
  CHECK(abs_dev / n == doctest::Approx(3.0).epsilon(0.05));
  CHECK(std::abs(xi_sum / n) < 0.5);
  CHECK(xi_sq / n - (xi_sum / n) * (xi_sum / n) == doctest::Approx(27.0).epsilon(0.1));
  CHECK(std::abs(mu_sum / steps) < 0.5);
  CHECK(mu_sq / steps - (mu_sum / steps) * (mu_sum / steps) == doctest::Approx(9.0).epsilon(0.1));
  CHECK(diag.iterations == steps + 1000);
}

TEST_CASE("split R-hat") {
  std::vector<Eigen::MatrixXd> chains(2, Eigen::MatrixXd(4, 1));
  chains[0] << 1, 2, 3, 4;
  chains[1] << 5, 6, 7, 8;
  // Halves 1.5, 3.5, 5.5, 7.5; B = 2/3 * 20, W = 0.5.
  const double expected = std::sqrt((0.5 * 0.5 + (40.0 / 3.0) / 2.0) / 0.5);
  CHECK(split_rhat(chains)[0] == doctest::Approx(expected).epsilon(1e-12));

  std::mt19937_64 rng(2);
  std::normal_distribution<double> z(0.0, 1.0);
  std::vector<Eigen::MatrixXd> iid(4, Eigen::MatrixXd(2000, 2));
  for (auto& c : iid) c = c.unaryExpr([&](double) { return z(rng); });
  for (double r : split_rhat(iid)) CHECK(r < 1.01);

  std::vector<Eigen::MatrixXd> constant(2, Eigen::MatrixXd::Zero(10, 1));
  CHECK(std::isnan(split_rhat(constant)[0]));
}

TEST_CASE("run_chains: shape, pinning, reproducibility, limits") {
  const Synthetic s = synthetic(8, 12, 120, 2.0, 5.0);
  SamplerConfig cfg;
  cfg.chains = 2;
  cfg.burn_in = 0;
  cfg.thin = 1;
  cfg.target_draws = 10;
  cfg.seed = 99;
  const auto out = run_chains(cfg, s.encounters, 12, PriorSpec::numbered(3));
  CHECK(out.players.draws() == 10);
  CHECK(out.players.entities() == 12);
  CHECK(out.mu.size() == 10);
  CHECK((out.players.column(out.reference).array() == 0.0).all());
  CHECK(out.diagnostics.iterations == 10);

  cfg.target_draws = 11;
  cfg.chains = 3;
  cfg.thin = 2;
  CHECK(cfg.kept_in_chain(0) == 4);
  CHECK(cfg.kept_in_chain(2) == 3);
  for (int k = 1; k <= 3; ++k) {
    cfg.workers = 1;
    const auto a = run_chains(cfg, s.encounters, 12, PriorSpec::numbered(k));
    cfg.workers = 3;
    const auto b = run_chains(cfg, s.encounters, 12, PriorSpec::numbered(k));
    CHECK(a.players.values() == b.players.values());
    CHECK(a.sigma2 == b.sigma2);
    CHECK((a.sigma2.array() > 0).all());
    CHECK((a.lambda.array() > 0).all());
  }
  cfg.seed = 100;
  const auto c = run_chains(cfg, s.encounters, 12, PriorSpec::numbered(3));
  cfg.seed = 99;
  CHECK_FALSE(c.players.values() == run_chains(cfg, s.encounters, 12, PriorSpec::numbered(3)).players.values());

  cfg.max_iterations = 5;
  try {
    run_chains(cfg, s.encounters, 12, PriorSpec::numbered(3));
    FAIL("expected target-unreachable error");
  } catch (const InvalidInput& e) {
    CHECK(std::string(e.what()).find("require 8 iterations") != std::string::npos);
  }
  cfg.max_iterations = 0;
  cfg.chains = 0;
  CHECK_THROWS_AS(run_chains(cfg, s.encounters, 12, PriorSpec::numbered(3)), InvalidInput);
  CHECK_THROWS_AS(PriorSpec::numbered(4), InvalidInput);
}

TEST_CASE("generative recovery and convergence on L=20, N=2000") {
  const Index players = 20;
  const Synthetic s = synthetic(2024, players, 2000, 2.0, 8.0);
  SamplerConfig cfg;
  cfg.chains = 4;
  cfg.burn_in = 300;
  cfg.thin = 2;
  cfg.target_draws = 2000;
  cfg.seed = 7;
  for (int k = 1; k <= 3; ++k) {
    const auto out = run_chains(cfg, s.encounters, players, PriorSpec::numbered(k));
    const Eigen::VectorXd truth = s.truth.array() - s.truth(out.reference);
    const auto& v = out.players.values();
    const Eigen::VectorXd mean = v.colwise().mean();
    int covered = 0;
    for (Index p = 0; p < players; ++p) {
      if (p == out.reference) {
        ++covered;
        continue;
      }
      const double sd = std::sqrt((v.col(p).array() - mean(p)).square().sum() / (v.rows() - 1));
      covered += std::abs(mean(p) - truth(p)) <= 3.0 * sd;
      CHECK(out.rhat[static_cast<std::size_t>(p)] < 1.1);
    }
    CHECK_MESSAGE(covered >= 19, "prior " << k << " covered " << covered);
    CHECK(std::isnan(out.rhat[static_cast<std::size_t>(out.reference)]));
    CHECK_FALSE(out.rank_deficient);
  }
}

TEST_CASE("lineup draws") {
  Eigen::MatrixXd v(3, 7);
  v << 0, 1, 2, 3, 4, 5, 6,  //
      0, -1, 0, 0, 0, 2, 1,  //
      0, 0, 0, 0, 0, 0, 0;
  v.col(2).setZero();
  v.col(3).setZero();
  v.col(4).setZero();
  v.col(6).setZero();
  const DrawsXd players(v, {"A_p0", "A_p1", "A_p2", "A_p3", "A_p4", "B_p5", "B_p6"});
  const auto lineups = lineup_draws(players, {Lineup{0, 2, 3, 4, 6}, Lineup{5, 1, 2, 3, 4}});
  CHECK((lineups.column(0).array() == 0.0).all());
  CHECK(lineups.column(1)(0) == doctest::Approx(6.0));
  CHECK(lineups.column(1)(1) == doctest::Approx(1.0));
  CHECK(lineups.id(1) == "A_p1|A_p2|A_p3|A_p4|B_p5");

  // Linearity against random draws.
  Eigen::MatrixXd r = Eigen::MatrixXd::Random(50, 7);
  const DrawsXd rp(r);
  const auto lr = lineup_draws(rp, {Lineup{6, 5, 4, 3, 2}});
  CHECK((lr.column(0) - r.rightCols(5).rowwise().sum()).cwiseAbs().maxCoeff() < 1e-12);
  CHECK_THROWS_AS(lineup_draws(rp, {Lineup{0, 1, 2, 3, 7}}), InvalidInput);
}

TEST_CASE("lineups sharing players covary more than disjoint lineups") {
  std::mt19937_64 rng(31);
  std::normal_distribution<double> z(0.0, 1.0);
  int wins = 0;
  const int replicates = 400;
  for (int rep = 0; rep < replicates; ++rep) {
    Eigen::MatrixXd x(300, 15);
    x = x.unaryExpr([&](double) { return z(rng); });
    const auto l = lineup_draws(DrawsXd(x), {Lineup{0, 1, 2, 3, 4}, Lineup{0, 1, 5, 6, 7}, Lineup{8, 9, 10, 11, 12}});
    auto cov = [&](Index a, Index b) {
      const auto& m = l.values();
      return ((m.col(a).array() - m.col(a).mean()) * (m.col(b).array() - m.col(b).mean())).sum() / (m.rows() - 1);
    };
    wins += cov(0, 1) >= cov(0, 2);
  }
  CHECK(wins >= 0.95 * replicates);
}
