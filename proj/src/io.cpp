#include "bayesrank/io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <set>
#include <sstream>

#include <json.hpp>

namespace bayesrank {

namespace {

using json = nlohmann::json;

std::vector<std::string> split_csv(std::string line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
  std::vector<std::string> out;
  std::size_t start = 0;
  for (;;) {
    const auto comma = line.find(',', start);
    out.push_back(line.substr(start, comma == std::string::npos ? std::string::npos : comma - start));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

bool blank(const std::string& line) {
  return std::all_of(line.begin(), line.end(), [](unsigned char c) { return std::isspace(c); });
}

int parse_points(const std::string& field, const char* column) {
  int v = 0;
  const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
  if (ec != std::errc() || ptr != field.data() + field.size() || v < 0)
    throw InvalidInput(std::string(column) + " must be a non-negative integer, got '" + field + "'");
  return v;
}

double parse_double(const std::string& field) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
  if (ec != std::errc() || ptr != field.data() + field.size()) throw InvalidInput("not a number: '" + field + "'");
  if (!std::isfinite(v)) throw InvalidInput("non-finite value '" + field + "'");
  return v;
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InvalidInput("cannot open '" + path.string() + "' for reading");
  return in;
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw InvalidInput("cannot open '" + path.string() + "' for writing");
  return out;
}

/// Registers one record; throws InvalidInput on duplicate players.
void add_record(EncounterTable& table, EncounterRecord record) {
  auto check_field = [](const std::string& v, const char* what) {
    if (v.empty()) throw InvalidInput(std::string("empty ") + what);
  };
  check_field(record.encounter_id, "encounter_id");
  check_field(record.team_a, "team_a");
  check_field(record.team_b, "team_b");

  std::set<std::string> side_a;
  for (const auto& name : record.players_a) {
    check_field(name, "player name");
    if (!side_a.insert(player_key(record.team_a, name)).second)
      throw InvalidInput("duplicate player '" + name + "' in lineup a of encounter '" + record.encounter_id + "'");
  }
  std::set<std::string> side_b;
  for (const auto& name : record.players_b) {
    check_field(name, "player name");
    const auto key = player_key(record.team_b, name);
    if (!side_b.insert(key).second)
      throw InvalidInput("duplicate player '" + name + "' in lineup b of encounter '" + record.encounter_id + "'");
    if (side_a.count(key))
      throw InvalidInput("overlapping lineups in encounter '" + record.encounter_id + "': '" + key + "' plays both sides");
  }

  Encounter e;
  for (int k = 0; k < kLineupSize; ++k) {
    const auto i = static_cast<std::size_t>(k);
    e.lineup_a[i] = table.registry.add_player(record.team_a, record.players_a[i]);
  }
  for (int k = 0; k < kLineupSize; ++k) {
    const auto i = static_cast<std::size_t>(k);
    e.lineup_b[i] = table.registry.add_player(record.team_b, record.players_b[i]);
  }
  e.diff = record.points_a - record.points_b;
  table.lineups.push_back({table.registry.add_lineup(e.lineup_a), table.registry.add_lineup(e.lineup_b)});
  table.encounters.push_back(e);
  table.records.push_back(std::move(record));
}

}  // namespace

const std::vector<std::string>& encounter_columns() {
  static const std::vector<std::string> columns{
      "encounter_id", "team_a",    "team_b",    "player_a1", "player_a2", "player_a3", "player_a4", "player_a5",
      "player_b1",    "player_b2", "player_b3", "player_b4", "player_b5", "points_a",  "points_b"};
  return columns;
}

std::string player_key(const std::string& team, const std::string& name) { return team + "_" + name; }

std::string lineup_key(std::array<std::string, kLineupSize> keys) {
  std::sort(keys.begin(), keys.end());
  std::string out;
  for (const auto& k : keys) {
    if (!out.empty()) out += '|';
    out += k;
  }
  return out;
}

Index Registry::add_player(const std::string& team, const std::string& name) {
  const auto key = player_key(team, name);
  auto [it, inserted] = player_index_.try_emplace(key, players());
  if (inserted) players_.push_back({key, team, name, 0});
  ++players_[static_cast<std::size_t>(it->second)].appearances;
  return it->second;
}

std::string Registry::lineup_key_of(const Lineup& players) const {
  std::array<std::string, kLineupSize> keys;
  for (int k = 0; k < kLineupSize; ++k) keys[static_cast<std::size_t>(k)] = player(players[static_cast<std::size_t>(k)]).key;
  return lineup_key(keys);
}

Index Registry::add_lineup(const Lineup& players) {
  auto [it, inserted] = lineup_index_.try_emplace(lineup_key_of(players), lineups());
  if (inserted) {
    Lineup sorted = players;
    std::sort(sorted.begin(), sorted.end());
    lineups_.push_back(sorted);
  }
  return it->second;
}

std::optional<Index> Registry::find_player(const std::string& key) const {
  const auto it = player_index_.find(key);
  return it == player_index_.end() ? std::nullopt : std::optional<Index>(it->second);
}

std::optional<Index> Registry::find_lineup(const std::string& key) const {
  const auto it = lineup_index_.find(key);
  return it == lineup_index_.end() ? std::nullopt : std::optional<Index>(it->second);
}

std::vector<std::string> Registry::player_ids() const {
  std::vector<std::string> ids;
  for (const auto& p : players_) ids.push_back(p.key);
  return ids;
}

std::vector<std::string> Registry::lineup_ids() const {
  std::vector<std::string> ids;
  for (const auto& l : lineups_) ids.push_back(lineup_key_of(l));
  return ids;
}

std::vector<Index> Registry::team_players(const std::string& team) const {
  std::vector<Index> out;
  for (Index i = 0; i < players(); ++i)
    if (players_[static_cast<std::size_t>(i)].team == team) out.push_back(i);
  return out;
}

std::vector<std::string> Registry::teams() const {
  std::set<std::string> t;
  for (const auto& p : players_) t.insert(p.team);
  return {t.begin(), t.end()};
}

long Registry::total_appearances() const {
  long n = 0;
  for (const auto& p : players_) n += p.appearances;
  return n;
}

Index EncounterTable::reference() const {
  return reference_player(encounters, registry.players(), registry.player_ids());
}

EncounterTable index_encounters(std::vector<EncounterRecord> records) {
  EncounterTable table;
  for (auto& r : records) add_record(table, std::move(r));
  return table;
}

EncounterTable parse_encounters(std::istream& in) {
  std::string line;
  long number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (!blank(line)) break;
  }
  if (number == 0 || blank(line)) throw ParseError("empty encounter file");
  if (split_csv(line) != encounter_columns()) {
    std::string expected;
    for (const auto& c : encounter_columns()) expected += (expected.empty() ? "" : ",") + c;
    throw ParseError("header must be '" + expected + "'", number);
  }
  EncounterTable table;
  while (std::getline(in, line)) {
    ++number;
    if (blank(line)) continue;
    try {
      const auto f = split_csv(line);
      if (f.size() != encounter_columns().size())
        throw InvalidInput("expected " + std::to_string(encounter_columns().size()) + " fields, found " +
                           std::to_string(f.size()));
      EncounterRecord r;
      r.encounter_id = f[0];
      r.team_a = f[1];
      r.team_b = f[2];
      for (std::size_t k = 0; k < kLineupSize; ++k) {
        r.players_a[k] = f[3 + k];
        r.players_b[k] = f[8 + k];
      }
      r.points_a = parse_points(f[13], "points_a");
      r.points_b = parse_points(f[14], "points_b");
      add_record(table, std::move(r));
    } catch (const InvalidInput& e) {
      throw ParseError(e.what(), number);
    }
  }
  return table;
}

EncounterTable read_encounters(const std::filesystem::path& path) {
  auto in = open_in(path);
  return parse_encounters(in);
}

void write_encounters(std::ostream& out, const std::vector<EncounterRecord>& records) {
  const auto& cols = encounter_columns();
  for (std::size_t i = 0; i < cols.size(); ++i) out << (i ? "," : "") << cols[i];
  out << '\n';
  for (const auto& r : records) {
    out << r.encounter_id << ',' << r.team_a << ',' << r.team_b;
    for (const auto& p : r.players_a) out << ',' << p;
    for (const auto& p : r.players_b) out << ',' << p;
    out << ',' << r.points_a << ',' << r.points_b << '\n';
  }
}

void write_encounters(const std::filesystem::path& path, const std::vector<EncounterRecord>& records) {
  auto out = open_out(path);
  write_encounters(out, records);
}

EncounterTable subset_teams(const EncounterTable& table, const std::vector<std::string>& teams) {
  const auto known = table.registry.teams();
  std::set<std::string> wanted;
  for (const auto& t : teams) {
    if (!std::binary_search(known.begin(), known.end(), t)) throw InvalidInput("unknown team '" + t + "'");
    wanted.insert(t);
  }
  std::vector<EncounterRecord> kept;
  for (const auto& r : table.records)
    if (wanted.count(r.team_a) && wanted.count(r.team_b)) kept.push_back(r);
  return index_encounters(std::move(kept));
}

DrawsXd project_draws(const DrawsXd& draws, const std::vector<std::string>& ids) {
  if (ids.empty()) throw InvalidInput("no entities selected");
  std::map<std::string, Index> index;
  for (Index l = 0; l < draws.entities(); ++l) index.emplace(draws.id(l), l);
  DrawsXd::Matrix v(draws.draws(), static_cast<Index>(ids.size()));
  std::set<std::string> seen;
  for (std::size_t j = 0; j < ids.size(); ++j) {
    const auto it = index.find(ids[j]);
    if (it == index.end()) throw InvalidInput("unknown entity '" + ids[j] + "'");
    if (!seen.insert(ids[j]).second) throw InvalidInput("entity '" + ids[j] + "' selected twice");
    v.col(static_cast<Index>(j)) = draws.column(it->second);
  }
  return DrawsXd(std::move(v), ids);
}

void write_draws(std::ostream& out, const DrawsXd& draws) {
  for (Index l = 0; l < draws.entities(); ++l) {
    if (draws.id(l).find_first_of(",\n\r") != std::string::npos)
      throw InvalidInput("entity id '" + draws.id(l) + "' cannot be written to CSV");
    out << (l ? "," : "") << draws.id(l);
  }
  out << '\n';
  for (Index i = 0; i < draws.draws(); ++i) {
    for (Index l = 0; l < draws.entities(); ++l) out << (l ? "," : "") << format_double(draws.values()(i, l));
    out << '\n';
  }
}

void write_draws(const std::filesystem::path& path, const DrawsXd& draws) {
  auto out = open_out(path);
  write_draws(out, draws);
}

DrawsXd parse_draws(std::istream& in) {
  std::string line;
  long number = 0;
  std::vector<std::string> ids;
  while (std::getline(in, line)) {
    ++number;
    if (blank(line)) continue;
    ids = split_csv(line);
    break;
  }
  if (ids.empty()) throw ParseError("empty draws file");
  std::vector<double> values;
  Index rows = 0;
  while (std::getline(in, line)) {
    ++number;
    if (blank(line)) continue;
    const auto f = split_csv(line);
    if (f.size() != ids.size())
      throw ParseError("expected " + std::to_string(ids.size()) + " values, found " + std::to_string(f.size()), number);
    try {
      for (const auto& v : f) values.push_back(parse_double(v));
    } catch (const InvalidInput& e) {
      throw ParseError(e.what(), number);
    }
    ++rows;
  }
  if (rows == 0) throw ParseError("draws file has no rows");
  const Index cols = static_cast<Index>(ids.size());
  DrawsXd::Matrix m = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
      values.data(), rows, cols);
  try {
    return DrawsXd(std::move(m), std::move(ids));
  } catch (const InvalidInput& e) {
    throw ParseError(e.what(), 1);
  }
}

DrawsXd read_draws(const std::filesystem::path& path) {
  auto in = open_in(path);
  return parse_draws(in);
}

void write_columns(std::ostream& out, const std::vector<std::string>& names,
                   const std::vector<const Eigen::VectorXd*>& columns) {
  if (names.size() != columns.size() || columns.empty()) throw InvalidInput("column names do not match columns");
  const Index n = columns.front()->size();
  for (const auto* c : columns)
    if (c->size() != n) throw InvalidInput("columns differ in length");
  for (std::size_t j = 0; j < names.size(); ++j) out << (j ? "," : "") << names[j];
  out << '\n';
  for (Index i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < columns.size(); ++j) out << (j ? "," : "") << format_double((*columns[j])(i));
    out << '\n';
  }
}

std::string statement_report(const GlobalStatement& st, const std::vector<std::string>& ids,
                             const ComparisonCounts* counts) {
  if (static_cast<Index>(ids.size()) != st.entities) throw InvalidInput("id count does not match the statement");
  auto name = [&](Index l) { return ids[static_cast<std::size_t>(l)]; };
  json doc;
  doc["action"] = {{"alpha", st.action.alpha}, {"t", st.action.t}, {"gamma", st.action.gamma}, {"q", st.action.q}};
  doc["prob"] = st.prob();
  doc["cost"] = st.cost;
  doc["reward"] = st.reward;
  doc["draws"] = st.draws;
  doc["entities"] = st.entities;
  doc["complete"] = st.complete;
  doc["required_successes"] = st.required_successes();
  json members = json::array();
  for (const auto& local : st.locals) {
    json m;
    m["id"] = name(local.sets.entity);
    json below = json::array();
    for (Index o : local.sets.below) below.push_back(name(o));
    json above = json::array();
    for (Index o : local.sets.above) above.push_back(name(o));
    m["below"] = below;
    m["above"] = above;
    m["n_below"] = local.sets.below.size();
    m["n_above"] = local.sets.above.size();
    m["allowed_failures"] = local.allowed_failures();
    m["prob"] = local.draws() > 0 ? local.prob() : 1.0;
    members.push_back(std::move(m));
  }
  doc["members"] = std::move(members);
  if (counts) {
    Index tied_members = 0;
    for (const auto& local : st.locals) {
      bool tied = false;
      for (const auto* set : {&local.sets.below, &local.sets.above})
        for (Index o : *set) tied = tied || counts->ties(local.sets.entity, o) > 0;
      tied_members += tied;
    }
    doc["ties"] = {{"tied_pairs", counts->tied_pairs()},
                   {"tied_comparisons", counts->tied_comparisons()},
                   {"members_with_tied_comparisons", tied_members}};
  }
  return doc.dump(2) + "\n";
}

StatementReport parse_statement_report(const std::string& text) {
  try {
    const json doc = json::parse(text);
    StatementReport r;
    const auto& a = doc.at("action");
    r.action = {a.at("alpha").get<double>(), a.at("t").get<double>(), a.at("gamma").get<double>(),
                a.at("q").get<double>()};
    r.prob = doc.at("prob").get<double>();
    r.cost = doc.at("cost").get<double>();
    r.reward = doc.at("reward").get<double>();
    r.draws = doc.at("draws").get<Index>();
    r.entities = doc.at("entities").get<Index>();
    for (const auto& m : doc.at("members")) {
      ReportMember rm;
      rm.id = m.at("id").get<std::string>();
      rm.below = m.at("below").get<std::vector<std::string>>();
      rm.above = m.at("above").get<std::vector<std::string>>();
      rm.prob = m.at("prob").get<double>();
      r.members.push_back(std::move(rm));
    }
    return r;
  } catch (const json::exception& e) {
    throw ParseError(std::string("invalid statement report: ") + e.what());
  }
}

namespace {
std::string dot_quote(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"' || c == '\\') out += '\\';
    out += c;
  }
  return out + "\"";
}
}  // namespace

std::string export_graph(const RankingGraph& graph, const std::vector<std::string>& ids) {
  auto name = [&](Index l) {
    if (l < 0 || static_cast<std::size_t>(l) >= ids.size()) throw InvalidInput("graph node without an id");
    return dot_quote(ids[static_cast<std::size_t>(l)]);
  };
  if (!find_cycle(graph.edges).empty()) throw CycleError("ranking graph is cyclic");
  std::ostringstream out;
  out << "digraph ranking {\n";
  for (Index v : graph.nodes) out << "  " << name(v) << ";\n";
  for (const auto& [worse, better] : graph.edges) out << "  " << name(worse) << " -> " << name(better) << ";\n";
  out << "}\n";
  return out.str();
}

double quantile(const std::vector<double>& sorted, double p) {
  if (sorted.empty()) throw InvalidInput("quantile of an empty sample");
  if (!(p >= 0.0 && p <= 1.0)) throw InvalidInput("quantile probability must lie in [0, 1]");
  const double h = (static_cast<double>(sorted.size()) - 1.0) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

std::vector<QuartileRow> caterpillar(const DrawsXd& draws) {
  std::vector<QuartileRow> rows;
  for (Index l = 0; l < draws.entities(); ++l) {
    std::vector<double> v(draws.column(l).begin(), draws.column(l).end());
    std::sort(v.begin(), v.end());
    rows.push_back({draws.id(l), quantile(v, 0.25), quantile(v, 0.5), quantile(v, 0.75)});
  }
  std::sort(rows.begin(), rows.end(), [](const QuartileRow& a, const QuartileRow& b) {
    return a.median != b.median ? a.median < b.median : a.id < b.id;
  });
  return rows;
}

void write_caterpillar(std::ostream& out, const std::vector<QuartileRow>& rows) {
  out << "id,q1,median,q3\n";
  for (const auto& r : rows)
    out << r.id << ',' << format_double(r.q1) << ',' << format_double(r.median) << ',' << format_double(r.q3) << '\n';
}

}  // namespace bayesrank
