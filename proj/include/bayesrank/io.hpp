#pragma once

// Encounter files, the player/lineup registry, draws files and exports.

#include <array>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "bayesrank/draws.hpp"
#include "bayesrank/model.hpp"
#include "bayesrank/rankings.hpp"
#include "bayesrank/statements.hpp"

namespace bayesrank {

/// One row of an encounter file. Player names are unqualified.
struct EncounterRecord {
  std::string encounter_id;
  std::string team_a;
  std::string team_b;
  std::array<std::string, kLineupSize> players_a;
  std::array<std::string, kLineupSize> players_b;
  int points_a = 0;
  int points_b = 0;

  bool operator==(const EncounterRecord&) const = default;
};

/// Column names of the encounter CSV, in order.
const std::vector<std::string>& encounter_columns();

/// "TEAM_Name": players who change teams get one key per team.
std::string player_key(const std::string& team, const std::string& name);

/// Sorted player keys joined with '|'.
std::string lineup_key(std::array<std::string, kLineupSize> player_keys);

struct PlayerEntry {
  std::string key;
  std::string team;
  std::string name;
  long appearances = 0;
};

/// Dense indices for players and lineups, assigned in order of first appearance.
class Registry {
 public:
  Index add_player(const std::string& team, const std::string& name);
  Index add_lineup(const Lineup& players);

  Index players() const noexcept { return static_cast<Index>(players_.size()); }
  Index lineups() const noexcept { return static_cast<Index>(lineups_.size()); }
  const PlayerEntry& player(Index i) const { return players_.at(static_cast<std::size_t>(i)); }
  const Lineup& lineup(Index j) const { return lineups_.at(static_cast<std::size_t>(j)); }
  std::optional<Index> find_player(const std::string& key) const;
  std::optional<Index> find_lineup(const std::string& key) const;

  std::vector<std::string> player_ids() const;
  std::vector<std::string> lineup_ids() const;
  const std::vector<Lineup>& lineup_list() const noexcept { return lineups_; }
  /// Player indices of a team, ascending.
  std::vector<Index> team_players(const std::string& team) const;
  std::vector<std::string> teams() const;
  long total_appearances() const;

 private:
  std::string lineup_key_of(const Lineup& players) const;

  std::vector<PlayerEntry> players_;
  std::map<std::string, Index> player_index_;
  std::vector<Lineup> lineups_;
  std::map<std::string, Index> lineup_index_;
};

struct EncounterTable {
  std::vector<EncounterRecord> records;
  std::vector<Encounter> encounters;       ///< same order as records
  std::vector<std::array<Index, 2>> lineups;  ///< registry lineup index of sides a and b
  Registry registry;

  std::size_t size() const noexcept { return records.size(); }
  /// Reference candidate: most frequent player, ties by key.
  Index reference() const;
};

/// Validates records and indexes them. Throws InvalidInput naming the
/// record on duplicate players or overlapping lineups.
EncounterTable index_encounters(std::vector<EncounterRecord> records);

/// Throws ParseError carrying the 1-based line number.
EncounterTable parse_encounters(std::istream& in);
EncounterTable read_encounters(const std::filesystem::path& path);
void write_encounters(std::ostream& out, const std::vector<EncounterRecord>& records);
void write_encounters(const std::filesystem::path& path, const std::vector<EncounterRecord>& records);

/// Encounters whose two teams are both listed. Unknown teams are an error.
EncounterTable subset_teams(const EncounterTable& table, const std::vector<std::string>& teams);

/// Columns of `draws` for the listed ids, in the listed order. Unknown or
/// repeated ids are an error.
DrawsXd project_draws(const DrawsXd& draws, const std::vector<std::string>& ids);

/// Draws as CSV: a header of entity ids, then one row per draw, full precision.
void write_draws(std::ostream& out, const DrawsXd& draws);
void write_draws(const std::filesystem::path& path, const DrawsXd& draws);
DrawsXd parse_draws(std::istream& in);
DrawsXd read_draws(const std::filesystem::path& path);

/// Named columns of equal length as CSV.
void write_columns(std::ostream& out, const std::vector<std::string>& names,
                   const std::vector<const Eigen::VectorXd*>& columns);

/// JSON document describing a scored statement. `counts` adds tie diagnostics.
std::string statement_report(const GlobalStatement& statement, const std::vector<std::string>& ids,
                             const ComparisonCounts* counts = nullptr);

struct ReportMember {
  std::string id;
  std::vector<std::string> below;
  std::vector<std::string> above;
  double prob = 0.0;
};

struct StatementReport {
  Action action;
  double prob = 1.0;
  double cost = 0.0;
  double reward = 0.0;
  Index draws = 0;
  Index entities = 0;
  std::vector<ReportMember> members;
};

StatementReport parse_statement_report(const std::string& json_text);

/// DOT digraph of the Hasse diagram; an edge a -> b means b is better.
std::string export_graph(const RankingGraph& graph, const std::vector<std::string>& ids);

/// Type-7 sample quantile of ascending `sorted` at probability p.
double quantile(const std::vector<double>& sorted, double p);

struct QuartileRow {
  std::string id;
  double q1 = 0.0;
  double median = 0.0;
  double q3 = 0.0;
};

/// Per-entity quartiles sorted by median (ties by id).
std::vector<QuartileRow> caterpillar(const DrawsXd& draws);
void write_caterpillar(std::ostream& out, const std::vector<QuartileRow>& rows);

}  // namespace bayesrank
