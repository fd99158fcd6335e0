#include "bayesrank/reward.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace bayesrank {

double apply(SizeTransform h, double x) {
  switch (h) {
    case SizeTransform::identity:
      return x;
    case SizeTransform::log1p:
      return std::log1p(x);
  }
  return x;
}

std::vector<double> uniform_grid(double lo, double hi, int points) {
  if (points < 1) throw InvalidInput("grid needs at least one point");
  if (points == 1) return {lo};
  std::vector<double> grid(static_cast<std::size_t>(points));
  for (int i = 0; i < points; ++i) grid[static_cast<std::size_t>(i)] = lo + (hi - lo) * i / (points - 1);
  grid.back() = hi;
  return grid;
}

RewardConfig RewardConfig::defaults() {
  RewardConfig config;
  config.alpha_grid = uniform_grid(config.box[0].lo, config.box[0].hi, 21);
  return config;
}

void RewardConfig::validate() const {
  static constexpr const char* names[] = {"alpha", "t", "gamma", "q"};
  for (std::size_t c = 0; c < 4; ++c) {
    const auto& iv = box[c];
    if (!(iv.lo >= 0.0 && iv.hi <= 1.0 && iv.lo <= iv.hi))
      throw InvalidInput(std::string("search interval for ") + names[c] + " must satisfy 0 <= lo <= hi <= 1");
  }
  if (epsilon && !(*epsilon > 0.0 && *epsilon < 1.0)) throw InvalidInput("epsilon must lie in (0, 1)");
  if (!(delta_min > 0.0 && delta_min <= delta0 && delta0 <= 1.0))
    throw InvalidInput("step sizes must satisfy 0 < delta_min <= delta0 <= 1");
  for (std::size_t k = 0; k < alpha_grid.size(); ++k) {
    if (!box[0].contains(alpha_grid[k])) throw InvalidInput("alpha grid value outside the search box");
    if (k > 0 && !(alpha_grid[k] > alpha_grid[k - 1])) throw InvalidInput("alpha grid must be increasing");
  }
}

std::vector<double> StatementEvaluator::effective_grid(const RewardConfig& config) {
  return config.alpha_grid.empty() ? uniform_grid(config.box[0].lo, config.box[0].hi, 21) : config.alpha_grid;
}

namespace {

double snap_to(const std::vector<double>& grid, double alpha) {
  auto it = std::lower_bound(grid.begin(), grid.end(), alpha);
  if (it == grid.end()) return grid.back();
  if (it == grid.begin()) return *it;
  const double hi = *it;
  const double lo = *(it - 1);
  return (hi - alpha < alpha - lo) ? hi : lo;
}

}  // namespace

std::vector<Action> default_starts(const RewardConfig& config) {
  const auto grid = StatementEvaluator::effective_grid(config);
  std::vector<Action> starts;
  for (int mask = 0; mask < 16; ++mask) {
    auto pick = [&](int c) { return (mask >> c) & 1 ? config.box[static_cast<std::size_t>(c)].hi
                                                     : config.box[static_cast<std::size_t>(c)].lo; };
    starts.push_back({snap_to(grid, pick(0)), pick(1), pick(2), pick(3)});
  }
  auto mid = [&](int c) {
    const auto& iv = config.box[static_cast<std::size_t>(c)];
    return 0.5 * (iv.lo + iv.hi);
  };
  starts.push_back({snap_to(grid, mid(0)), mid(1), mid(2), mid(3)});
  std::sort(starts.begin(), starts.end());
  starts.erase(std::unique(starts.begin(), starts.end()), starts.end());
  return starts;
}

double cost(const GlobalStatement& statement, SizeTransform h) {
  if (statement.members.empty()) return 0.0;
  double local_terms = 0.0;
  for (const auto& local : statement.locals) {
    const Index n = local.sets.size();
    local_terms += apply(h, static_cast<double>(n)) - apply(h, static_cast<double>(local.allowed_failures()));
  }
  const auto g = static_cast<double>(statement.members.size());
  return (apply(h, g) - apply(h, static_cast<double>(statement.allowed_failures()))) * local_terms;
}

namespace {

double floored_reward(double cost_value, double prob, const RewardConfig& config, Index hold_count, Index draws) {
  if (config.epsilon && !fraction::at_least(hold_count, draws, 1.0 - *config.epsilon)) return 0.0;
  return cost_value * prob;
}

}  // namespace

double reward(const GlobalStatement& statement, const RewardConfig& config) {
  if (!statement.complete) throw InvalidInput("statement has no global probability yet");
  return floored_reward(cost(statement, config.h), statement.prob(), config, statement.hold_count, statement.draws);
}

GlobalStatement& score(GlobalStatement& statement, const RewardConfig& config) {
  statement.cost = cost(statement, config.h);
  statement.reward = reward(statement, config);
  return statement;
}

// --- FailureTable ----------------------------------------------------------

LocalSets FailureTable::sets(std::size_t k, Index l) const {
  LocalSets sets;
  sets.entity = l;
  sets.alpha = alpha_grid_.at(k);
  const auto& entries = entries_[static_cast<std::size_t>(l)];
  const auto n = static_cast<std::size_t>(statement_count(k, l));
  for (std::size_t e = 0; e < n; ++e) (entries[e].above ? sets.above : sets.below).push_back(entries[e].other);
  std::sort(sets.below.begin(), sets.below.end());
  std::sort(sets.above.begin(), sets.above.end());
  return sets;
}

// --- StatementEvaluator ----------------------------------------------------

StatementEvaluator::StatementEvaluator(std::shared_ptr<const FailureTable> table, RewardConfig config,
                                       unsigned workers)
    : table_(std::move(table)), config_(std::move(config)), workers_(workers) {
  config_.alpha_grid = table_->alpha_grid();
  config_.validate();
}

std::size_t StatementEvaluator::alpha_index(double alpha) const {
  const auto& grid = table_->alpha_grid();
  const double snapped = snap_to(grid, alpha);
  return static_cast<std::size_t>(std::lower_bound(grid.begin(), grid.end(), snapped) - grid.begin());
}

Action StatementEvaluator::snap(Action a) const {
  a.alpha = table_->alpha_grid()[alpha_index(a.alpha)];
  return a;
}

std::pair<std::int32_t, std::vector<std::int32_t>> StatementEvaluator::local_key(std::size_t k, double t) {
  const Index n = table_->entities();
  std::vector<std::int32_t> allowed(static_cast<std::size_t>(n));
  for (Index l = 0; l < n; ++l)
    allowed[static_cast<std::size_t>(l)] = static_cast<std::int32_t>(fraction::floor_of(t, table_->statement_count(k, l)));
  auto key = std::make_pair(k, allowed);
  auto [it, inserted] = local_ids_.try_emplace(std::move(key), static_cast<std::int32_t>(local_ids_.size()));
  return {it->second, std::move(allowed)};
}

std::shared_ptr<const StatementEvaluator::LocalLevel> StatementEvaluator::local_level(
    std::size_t k, std::int32_t key_id, const std::vector<std::int32_t>& allowed) {
  if (auto it = local_cache_.find(key_id); it != local_cache_.end()) return it->second;

  const Index n = table_->entities();
  const Index m = table_->draws();
  auto level = std::make_shared<LocalLevel>();
  level->hold_count.assign(static_cast<std::size_t>(n), m);
  level->holds.resize(static_cast<std::size_t>(n));
  parallel_for(n, workers_, [&](std::ptrdiff_t begin, std::ptrdiff_t end) {
    for (Index l = begin; l < end; ++l) {
      auto& holds = level->holds[static_cast<std::size_t>(l)];
      const std::uint16_t* failures = table_->failures(k, l);
      if (failures == nullptr) {
        holds = DrawMask(m, true);
        continue;
      }
      const auto limit = static_cast<std::uint16_t>(allowed[static_cast<std::size_t>(l)]);
      holds = DrawMask(m);
      for (Index i = 0; i < m; ++i)
        if (failures[i] <= limit) holds.set(i);
      level->hold_count[static_cast<std::size_t>(l)] = holds.count();
    }
  });

  // Keep the cached masks within a fixed memory budget.
  constexpr std::size_t kBudgetBytes = std::size_t{256} << 20;
  const std::size_t bytes = static_cast<std::size_t>(n) * static_cast<std::size_t>((m + 63) / 64) * 8 + 1;
  const std::size_t capacity = std::max<std::size_t>(4, kBudgetBytes / bytes);
  while (local_fifo_.size() >= capacity) {
    local_cache_.erase(local_fifo_.front());
    local_fifo_.erase(local_fifo_.begin());
  }
  local_fifo_.push_back(key_id);
  local_cache_.emplace(key_id, level);
  return level;
}

StatementEvaluator::Evaluation StatementEvaluator::evaluate(const Action& a) {
  ++evaluations_;
  detail::check_level(a.t, "t");
  detail::check_level(a.gamma, "gamma");
  detail::check_level(a.q, "q");
  const std::size_t k = alpha_index(a.alpha);
  const Index m = table_->draws();
  const Index n = table_->entities();

  // Smallest hold count that meets the 1 - gamma bar.
  Index min_holds = std::max<Index>(0, static_cast<Index>(std::floor((1.0 - a.gamma) * static_cast<double>(m))) - 1);
  while (!fraction::at_least(min_holds, m, 1.0 - a.gamma)) ++min_holds;

  auto [key_id, allowed] = local_key(k, a.t);
  auto& global = global_cache_[{key_id, min_holds}];
  if (!global) {
    const auto local = local_level(k, key_id, allowed);
    auto level = std::make_shared<GlobalLevel>();
    std::vector<std::int32_t> successes(static_cast<std::size_t>(m), 0);
    std::int32_t always = 0;
    for (Index l = 0; l < n; ++l) {
      const auto ul = static_cast<std::size_t>(l);
      if (local->hold_count[ul] < min_holds) continue;
      ++level->members;
      const Index size = table_->statement_count(k, l);
      level->local_terms += apply(config_.h, static_cast<double>(size)) - apply(config_.h, static_cast<double>(allowed[ul]));
      if (local->hold_count[ul] == m) {
        ++always;
        continue;
      }
      const auto& words = local->holds[ul].words();
      for (Index i = 0; i < m; ++i) successes[static_cast<std::size_t>(i)] += (words[static_cast<std::size_t>(i >> 6)] >> (i & 63)) & 1u;
    }
    level->at_least.assign(static_cast<std::size_t>(level->members) + 2, 0);
    for (auto s : successes) ++level->at_least[static_cast<std::size_t>(s + always)];
    for (Index s = level->members; s-- > 0;)
      level->at_least[static_cast<std::size_t>(s)] += level->at_least[static_cast<std::size_t>(s + 1)];
    global = std::move(level);
  }
  return {global, fraction::floor_of(a.q, global->members)};
}

double StatementEvaluator::reward_of(const Evaluation& e) const {
  const Index m = table_->draws();
  const auto& g = *e.global;
  if (g.members == 0) return floored_reward(0.0, 1.0, config_, m, m);
  const Index holds = g.at_least[static_cast<std::size_t>(g.members - e.allowed_global_failures)];
  const double c = (apply(config_.h, static_cast<double>(g.members)) -
                    apply(config_.h, static_cast<double>(e.allowed_global_failures))) *
                   g.local_terms;
  return floored_reward(c, static_cast<double>(holds) / static_cast<double>(m), config_, holds, m);
}

double StatementEvaluator::reward(const Action& a) { return reward_of(evaluate(a)); }

double StatementEvaluator::probability(const Action& a) {
  const auto e = evaluate(a);
  if (e.global->members == 0) return 1.0;
  return static_cast<double>(e.global->at_least[static_cast<std::size_t>(e.global->members - e.allowed_global_failures)]) /
         static_cast<double>(table_->draws());
}

GlobalStatement StatementEvaluator::statement(const Action& action) {
  const Action a = snap(action);
  const std::size_t k = alpha_index(a.alpha);
  const Index m = table_->draws();
  const Index n = table_->entities();
  auto [key_id, allowed] = local_key(k, a.t);
  const auto local = local_level(k, key_id, allowed);

  GlobalStatement g;
  g.action = Action{a.alpha, a.t, a.gamma, 0.0};
  g.entities = n;
  g.draws = m;
  for (Index l = 0; l < n; ++l) {
    const auto ul = static_cast<std::size_t>(l);
    if (!fraction::at_least(local->hold_count[ul], m, 1.0 - a.gamma)) continue;
    LocalStatement ls;
    ls.sets = table_->sets(k, l);
    ls.t = a.t;
    ls.holds = local->holds[ul];
    ls.hold_count = local->hold_count[ul];
    g.members.push_back(l);
    g.locals.push_back(std::move(ls));
  }
  g = global_probability(std::move(g), a.q);
  score(g, config_);
  return g;
}

// --- search ------------------------------------------------------------------

namespace {

void check_start(const StatementEvaluator& evaluator, const Action& start) {
  const auto& box = evaluator.config().box;
  const double coords[] = {start.alpha, start.t, start.gamma, start.q};
  for (std::size_t c = 0; c < 4; ++c)
    if (!box[c].contains(coords[c])) throw InvalidInput("start action lies outside the search box");
  if (std::abs(evaluator.snap(start).alpha - start.alpha) > 1e-12)
    throw InvalidInput("start alpha is not on the alpha grid");
}

}  // namespace

SearchResult pattern_search(StatementEvaluator& evaluator, const Action& start) {
  check_start(evaluator, start);
  const auto& config = evaluator.config();
  const auto& box = config.box;

  SearchResult result;
  result.action = evaluator.snap(start);
  result.reward = evaluator.reward(result.action);
  double delta = config.delta0;

  for (;;) {
    ++result.iterations;
    const double here[] = {result.action.alpha, result.action.t, result.action.gamma, result.action.q};
    std::array<std::array<double, 3>, 4> options{};
    for (std::size_t c = 0; c < 4; ++c) {
      const double step = delta * box[c].width();
      for (int o = 0; o < 3; ++o)
        options[c][static_cast<std::size_t>(o)] = std::clamp(here[c] + (o - 1) * step, box[c].lo, box[c].hi);
    }

    bool improved = false;
    Action best_action = result.action;
    double best_reward = result.reward;
    for (int combo = 0; combo < 81; ++combo) {
      int rest = combo;
      std::array<double, 4> v{};
      for (std::size_t c = 0; c < 4; ++c) {
        v[c] = options[c][static_cast<std::size_t>(rest % 3)];
        rest /= 3;
      }
      const Action candidate = evaluator.snap(Action{v[0], v[1], v[2], v[3]});
      const double r = evaluator.reward(candidate);
      if (r > best_reward || (improved && r == best_reward && candidate < best_action)) {
        best_reward = r;
        best_action = candidate;
        improved = r > result.reward;
      }
    }

    if (improved) {
      result.action = best_action;
      result.reward = best_reward;
      continue;
    }
    if (delta / 2.0 < config.delta_min) break;
    delta /= 2.0;
  }
  result.statement = evaluator.statement(result.action);
  return result;
}

SearchResult optimize(StatementEvaluator& evaluator) {
  const auto& config = evaluator.config();
  const auto starts = config.starts.empty() ? default_starts(config) : config.starts;
  if (starts.empty()) throw InvalidInput("optimizer needs at least one start");
  std::optional<SearchResult> best;
  for (const auto& start : starts) {
    auto result = pattern_search(evaluator, start);
    if (!best || result.reward > best->reward || (result.reward == best->reward && result.action < best->action))
      best = std::move(result);
  }
  return std::move(*best);
}

}  // namespace bayesrank
