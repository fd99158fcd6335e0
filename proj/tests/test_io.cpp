#include <doctest.h>

#include <bayesrank/io.hpp>
#include <bayesrank/reward.hpp>

#include <algorithm>
#include <random>
#include <set>
#include <sstream>

#include "helpers.hpp"
#include "oracle.hpp"

using namespace bayesrank;

namespace {

const char* kHeader =
    "encounter_id,team_a,team_b,player_a1,player_a2,player_a3,player_a4,player_a5,"
    "player_b1,player_b2,player_b3,player_b4,player_b5,points_a,points_b\n";

EncounterTable parse(const std::string& body) {
  std::istringstream in(kHeader + body);
  return parse_encounters(in);
}

long error_line(const std::string& body) {
  try {
    parse(body);
  } catch (const ParseError& e) {
    return e.line();
  }
  return -1;
}

/// Random league: `teams` teams of `squad` players; intra- and inter-team encounters.
std::vector<EncounterRecord> random_records(std::mt19937_64& rng, int teams, int squad, int n) {
  std::uniform_int_distribution<int> team(0, teams - 1), pts(0, 12);
  std::vector<EncounterRecord> out;
  for (int i = 0; i < n; ++i) {
    EncounterRecord r;
    r.encounter_id = "e" + std::to_string(i);
    const int ta = team(rng);
    const int tb = team(rng);
    r.team_a = "T" + std::to_string(ta);
    r.team_b = "T" + std::to_string(tb);
    std::vector<int> pool(static_cast<std::size_t>(squad));
    std::iota(pool.begin(), pool.end(), 0);
    std::shuffle(pool.begin(), pool.end(), rng);
    for (std::size_t k = 0; k < kLineupSize; ++k) r.players_a[k] = "p" + std::to_string(pool[k]);
    if (ta == tb) {
      for (std::size_t k = 0; k < kLineupSize; ++k) r.players_b[k] = "p" + std::to_string(pool[k + kLineupSize]);
    } else {
      std::shuffle(pool.begin(), pool.end(), rng);
      for (std::size_t k = 0; k < kLineupSize; ++k) r.players_b[k] = "p" + std::to_string(pool[k]);
    }
    r.points_a = pts(rng);
    r.points_b = pts(rng);
    out.push_back(r);
  }
  return out;
}

std::string row(const std::string& id, const std::string& ta, const std::string& tb, int pa, int pb,
                const std::string& a1 = "a1", const std::string& b1 = "b1") {
  return id + "," + ta + "," + tb + "," + a1 + ",a2,a3,a4,a5," + b1 + ",b2,b3,b4,b5," + std::to_string(pa) + "," +
         std::to_string(pb) + "\n";
}

}  // namespace

TEST_CASE("parse: one row") {
  const auto t = parse(row("g1", "BOS", "LAL", 10, 7));
  REQUIRE(t.size() == 1);
  CHECK(t.registry.players() == 10);
  CHECK(t.registry.lineups() == 2);
  CHECK(t.encounters[0].diff == 3);
  CHECK(t.registry.player(0).key == "BOS_a1");
  CHECK(t.registry.player(5).key == "LAL_b1");
  CHECK(t.registry.total_appearances() == 10);
  CHECK(t.registry.lineup_ids()[0] == "BOS_a1|BOS_a2|BOS_a3|BOS_a4|BOS_a5");
  CHECK(t.reference() == 0);  // all tied at one appearance; smallest key is BOS_a1
}

TEST_CASE("parse: movers split by team, counts and reference") {
  const auto t = parse(row("g1", "BOS", "LAL", 1, 0) + row("g2", "NYK", "LAL", 0, 2, "a1") +
                       "\r\n" + row("g3", "NYK", "BOS", 3, 3, "a1", "x"));
  CHECK(t.registry.find_player("BOS_a1").has_value());
  CHECK(t.registry.find_player("NYK_a1").has_value());
  CHECK(*t.registry.find_player("BOS_a1") != *t.registry.find_player("NYK_a1"));
  CHECK(t.registry.total_appearances() == 30);
  CHECK(t.registry.teams() == std::vector<std::string>{"BOS", "LAL", "NYK"});
  // NYK_a2..a5 appear twice, as do LAL_b1..b5; LAL_b1 sorts first.
  CHECK(t.registry.player(t.reference()).key == "LAL_b1");
}

TEST_CASE("parse: errors carry line numbers") {
  CHECK(error_line(row("g1", "A", "B", 1, 1) + "g2,A,B,x\n") == 3);
  CHECK(error_line(row("g1", "A", "B", 1, 1) + row("g2", "A", "B", -1, 1)) == 3);
  CHECK(error_line(row("g1", "A", "B", 1, 1, "a2")) == 2);           // duplicate in lineup a
  CHECK(error_line(row("g1", "A", "A", 1, 1, "a1", "a1")) == 2);     // overlapping lineups
  CHECK(error_line(row("g1", "", "B", 1, 1)) == 2);
  CHECK(error_line(row("g1", "A", "B", 1, 1) + "\n" + row("g3", "A", "A", 1, 1, "a1", "a1")) == 4);
  std::istringstream bad_header("id,team_a\n");
  CHECK_THROWS_AS(parse_encounters(bad_header), ParseError);
  std::istringstream empty("");
  CHECK_THROWS_AS(parse_encounters(empty), ParseError);
}

TEST_CASE("parse and write round-trip") {
  std::mt19937_64 rng(4);
  const auto records = random_records(rng, 6, 12, 100);
  std::ostringstream out;
  write_encounters(out, records);
  std::istringstream in(out.str());
  const auto t = parse_encounters(in);
  CHECK(t.records == records);
  std::ostringstream again;
  write_encounters(again, t.records);
  CHECK(again.str() == out.str());
  CHECK(t.registry.total_appearances() == 10 * static_cast<long>(records.size()));
  for (std::size_t i = 0; i < records.size(); ++i)
    CHECK(t.encounters[i].diff == records[i].points_a - records[i].points_b);
  // Lineup indices refer to the right players.
  for (std::size_t i = 0; i < t.size(); ++i) {
    Lineup a = t.encounters[i].lineup_a;
    std::sort(a.begin(), a.end());
    CHECK(t.registry.lineup(t.lineups[i][0]) == a);
  }
}

TEST_CASE("subset by teams matches a naive filter") {
  std::mt19937_64 rng(9);
  const auto records = random_records(rng, 30, 10, 600);
  const auto t = index_encounters(records);
  CHECK(subset_teams(t, t.registry.teams()).records == t.records);

  std::vector<std::string> playoff;
  for (int i = 0; i < 16; ++i) playoff.push_back("T" + std::to_string(i * 2 % 30 + (i >= 15)));
  const auto s = subset_teams(t, playoff);
  const std::set<std::string> set(playoff.begin(), playoff.end());
  std::size_t naive = 0;
  std::set<std::string> naive_players;
  for (const auto& r : records) {
    if (!set.count(r.team_a) || !set.count(r.team_b)) continue;
    ++naive;
    for (const auto& p : r.players_a) naive_players.insert(r.team_a + "_" + p);
    for (const auto& p : r.players_b) naive_players.insert(r.team_b + "_" + p);
  }
  CHECK(s.size() == naive);
  CHECK(static_cast<std::size_t>(s.registry.players()) == naive_players.size());
  CHECK(s.registry.total_appearances() == 10 * static_cast<long>(naive));

  const auto one = subset_teams(t, {"T3"});
  for (const auto& r : one.records) CHECK((r.team_a == "T3" && r.team_b == "T3"));
  CHECK_THROWS_AS(subset_teams(t, {"NOPE"}), InvalidInput);
}

TEST_CASE("draws files and projection") {
  Eigen::MatrixXd v = Eigen::MatrixXd::Random(7, 3);
  v(0, 0) = 1.0 / 3.0;
  v(1, 1) = -1e-300;
  const DrawsXd d(v, {"A_x", "B_y", "C_z"});
  std::ostringstream out;
  write_draws(out, d);
  std::istringstream in(out.str());
  const auto back = parse_draws(in);
  CHECK(back.ids() == d.ids());
  CHECK(back.values() == d.values());

  const auto p = project_draws(d, {"C_z", "A_x"});
  CHECK(p.ids() == std::vector<std::string>{"C_z", "A_x"});
  CHECK(p.column(0) == d.column(2));
  CHECK_THROWS_AS(project_draws(d, {"Q"}), InvalidInput);
  CHECK_THROWS_AS(project_draws(d, {"A_x", "A_x"}), InvalidInput);

  std::istringstream ragged("a,b\n1,2\n3\n");
  try {
    parse_draws(ragged);
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.line() == 3);
  }
  std::istringstream nan("a\nnan\n");
  CHECK_THROWS_AS(parse_draws(nan), ParseError);
}

TEST_CASE("statement report") {
  SUBCASE("empty statement") {
    GlobalStatement st;
    st.complete = true;
    const auto r = parse_statement_report(statement_report(st, {}));
    CHECK(r.members.empty());
    CHECK(r.prob == 1.0);
    CHECK(r.cost == 0.0);
  }
  SUBCASE("tie diagnostics") {
    Eigen::MatrixXd v(4, 2);
    v << 0, 1, 1, 1, 0, 1, 1, 0;
    const DrawsXd d(v, {"a", "b"});
    const auto counts = count_pairwise(d, 1);
    const auto st = build_statement(d, counts, {0.5, 0.0, 0.0, 0.0}, 1);
    const auto text = statement_report(st, d.ids(), &counts);
    CHECK(text.find("\"tied_pairs\": 1") != std::string::npos);
    CHECK(text.find("\"tied_comparisons\": 1") != std::string::npos);
  }
  SUBCASE("oracle instances round-trip") {
    std::mt19937_64 rng(12);
    for (int rep = 0; rep < 60; ++rep) {
      const auto x = oracle::random_table(rng, 6, 40);
      const auto d = testing_support::to_draws(x);
      const auto counts = count_pairwise(d, 1);
      const oracle::RAction ra{{1, 5}, {1, 4}, {1, 3}, {1, 4}};
      auto st = build_statement(d, counts, testing_support::to_action(ra), 1);
      score(st, RewardConfig::defaults());
      const auto text = statement_report(st, d.ids(), &counts);
      const auto r = parse_statement_report(text);
      const auto o = oracle::statement(x, ra);
      REQUIRE(r.members.size() == o.members.size());
      CHECK(r.prob == doctest::Approx(static_cast<double>(o.global_count) / static_cast<double>(x.size())));
      CHECK(r.cost == doctest::Approx(o.cost));
      CHECK(r.action.q == doctest::Approx(0.25));
      for (std::size_t i = 0; i < r.members.size(); ++i) {
        const auto& sets = o.sets[static_cast<std::size_t>(o.members[i])];
        CHECK(r.members[i].id == std::to_string(o.members[i]));
        CHECK(r.members[i].below.size() == sets.below.size());
        CHECK(r.members[i].above.size() == sets.above.size());
        std::vector<std::string> below;
        for (int b : sets.below) below.push_back(std::to_string(b));
        CHECK(r.members[i].below == below);
      }
    }
  }
  CHECK_THROWS_AS(parse_statement_report("{"), ParseError);
  CHECK_THROWS_AS(parse_statement_report("{}"), ParseError);
}

TEST_CASE("graph export") {
  CHECK(export_graph(rankings_from_edges({}), {}) == "digraph ranking {\n}\n");
  const auto chain = rankings_from_edges({{0, 1}, {1, 2}, {0, 2}});
  const auto dot = export_graph(chain, {"x", "y", "z\"q"});
  CHECK(dot == "digraph ranking {\n  \"x\";\n  \"y\";\n  \"z\\\"q\";\n  \"x\" -> \"y\";\n  \"y\" -> \"z\\\"q\";\n}\n");

  // Oracle: Hasse diagram from the Floyd-Warshall closure.
  std::mt19937_64 rng(21);
  for (int rep = 0; rep < 40; ++rep) {
    const int n = 7;
    std::vector<int> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<std::pair<int, int>> edges;
    std::vector<OrderEdge> lib_edges;
    std::bernoulli_distribution coin(0.3);
    for (int i = 0; i < n; ++i)
      for (int j = i + 1; j < n; ++j)
        if (coin(rng)) {
          edges.emplace_back(perm[static_cast<std::size_t>(i)], perm[static_cast<std::size_t>(j)]);
          lib_edges.emplace_back(perm[static_cast<std::size_t>(i)], perm[static_cast<std::size_t>(j)]);
        }
    const auto r = oracle::closure(n, edges);
    std::set<std::string> expected;
    std::vector<std::string> ids;
    for (int i = 0; i < n; ++i) ids.push_back("n" + std::to_string(i));
    for (int a = 0; a < n; ++a)
      for (int b = 0; b < n; ++b) {
        if (!r[a][b]) continue;
        bool covered = false;
        for (int c = 0; c < n; ++c) covered = covered || (r[a][c] && r[c][b]);
        if (!covered) expected.insert("  \"n" + std::to_string(a) + "\" -> \"n" + std::to_string(b) + "\";");
      }
    std::set<std::string> got;
    std::istringstream lines(export_graph(rankings_from_edges(lib_edges), ids));
    for (std::string line; std::getline(lines, line);)
      if (line.find("->") != std::string::npos) got.insert(line);
    CHECK(got == expected);
  }
  RankingGraph cyclic;
  cyclic.nodes = {0, 1};
  cyclic.edges = {{0, 1}, {1, 0}};
  CHECK_THROWS_AS(export_graph(cyclic, {"a", "b"}), CycleError);
}

TEST_CASE("caterpillar quartiles") {
  Eigen::MatrixXd v(5, 3);
  v << 2, 9, 1,  //
      2, 8, 2,   //
      2, 7, 3,   //
      2, 6, 4,   //
      2, 5, 5;
  const auto rows = caterpillar(DrawsXd(v, {"c", "b", "a"}));
  REQUIRE(rows.size() == 3);
  CHECK(rows[0].id == "c");
  CHECK(rows[0].q1 == 2.0);
  CHECK(rows[0].q3 == 2.0);
  CHECK(rows[1].id == "a");
  CHECK(rows[1].q1 == 2.0);
  CHECK(rows[1].median == 3.0);
  CHECK(rows[2].id == "b");

  // Independent percentile: position p(n-1) on the multiset order.
  auto reference = [](std::multiset<double> s, double p) {
    const double pos = p * static_cast<double>(s.size() - 1);
    const auto k = static_cast<long>(pos);
    auto it = std::next(s.begin(), k);
    const double lo = *it;
    const double hi = std::next(it) == s.end() ? lo : *std::next(it);
    return lo * (1.0 - (pos - static_cast<double>(k))) + hi * (pos - static_cast<double>(k));
  };
  std::mt19937_64 rng(5);
  std::normal_distribution<double> z;
  for (int n : {1, 2, 3, 10, 101, 1000}) {
    Eigen::MatrixXd r(n, 4);
    r = r.unaryExpr([&](double) { return z(rng); });
    const DrawsXd d(r);
    for (const auto& q : caterpillar(d)) {
      const auto col = r.col(std::stoi(q.id));
      const std::multiset<double> s(col.begin(), col.end());
      CHECK(q.q1 == doctest::Approx(reference(s, 0.25)).epsilon(1e-12));
      CHECK(q.median == doctest::Approx(reference(s, 0.5)).epsilon(1e-12));
      CHECK(q.q3 == doctest::Approx(reference(s, 0.75)).epsilon(1e-12));
    }
  }
  std::ostringstream out;
  write_caterpillar(out, rows);
  CHECK(out.str().rfind("id,q1,median,q3\nc,2,2,2\n", 0) == 0);
}
