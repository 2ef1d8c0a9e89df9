#include "parley/games.hpp"

#include <cmath>

#include "parley/rng.hpp"

namespace parley {

std::string to_string(GameKind kind) {
  switch (kind) {
    case GameKind::PrisonersDilemma: return "prisoners_dilemma";
    case GameKind::Chicken: return "chicken";
    case GameKind::StagHunt: return "stag_hunt";
    case GameKind::BattleOfSexes: return "battle_of_sexes";
    case GameKind::MatchingPennies: return "matching_pennies";
  }
  return "unknown";
}

std::optional<GameKind> game_kind_from_string(const std::string& name) {
  if (name == "prisoners_dilemma") return GameKind::PrisonersDilemma;
  if (name == "chicken") return GameKind::Chicken;
  if (name == "stag_hunt") return GameKind::StagHunt;
  if (name == "battle_of_sexes") return GameKind::BattleOfSexes;
  if (name == "matching_pennies") return GameKind::MatchingPennies;
  return std::nullopt;
}

NormalFormGame::NormalFormGame(
    GameKind kind, std::array<std::vector<std::string>, 2> action_labels,
    std::vector<std::vector<std::array<double, 2>>> payoffs)
    : kind_(kind), labels_(std::move(action_labels)), payoffs_(std::move(payoffs)) {
  if (labels_[kRow].empty() || labels_[kCol].empty() ||
      payoffs_.size() != labels_[kRow].size()) {
    throw IndexOutOfRange("payoff tensor shape does not match action labels");
  }
  for (const auto& row : payoffs_) {
    if (row.size() != labels_[kCol].size()) {
      throw IndexOutOfRange("payoff tensor shape does not match action labels");
    }
  }
}

int NormalFormGame::num_actions(int player) const {
  return static_cast<int>(labels_.at(player).size());
}

const std::vector<std::string>& NormalFormGame::action_labels(int player) const {
  return labels_.at(player);
}

const std::string& NormalFormGame::action_label(int player, int action) const {
  const auto& l = labels_.at(player);
  if (action < 0 || action >= static_cast<int>(l.size())) {
    throw IndexOutOfRange("action index out of range");
  }
  return l[action];
}

std::optional<int> NormalFormGame::action_index(int player, const std::string& label) const {
  const auto& l = labels_.at(player);
  for (std::size_t i = 0; i < l.size(); ++i) {
    if (l[i] == label) return static_cast<int>(i);
  }
  return std::nullopt;
}

std::array<double, 2> NormalFormGame::payoff(const JointAction& joint) const {
  if (joint.row < 0 || joint.row >= num_actions(kRow) || joint.col < 0 ||
      joint.col >= num_actions(kCol)) {
    throw IndexOutOfRange("joint action out of range");
  }
  return payoffs_[joint.row][joint.col];
}

double NormalFormGame::payoff(const JointAction& joint, int player) const {
  return payoff(joint).at(player);
}

namespace {

void check_ordering(GameKind kind, const PayoffParams& p) {
  if (kind == GameKind::MatchingPennies) {
    if (!(p.a > 0.0)) {
      throw OrderingViolation("matching pennies requires a > 0");
    }
    return;
  }
  if (!(0.0 <= p.a && p.a < p.b && p.b < p.c && p.c < p.d)) {
    throw OrderingViolation("payoff params must satisfy 0 <= a < b < c < d");
  }
}

using Cell = std::array<double, 2>;
using Tensor = std::vector<std::vector<Cell>>;

}  // namespace

NormalFormGame make_classic_game(GameKind kind, const PayoffParams& p) {
  check_ordering(kind, p);
  switch (kind) {
    case GameKind::PrisonersDilemma: {
      Tensor t = {{Cell{p.c, p.c}, Cell{p.a, p.d}},
                  {Cell{p.d, p.a}, Cell{p.b, p.b}}};
      return NormalFormGame(kind, {{{"Cooperate", "Defect"}, {"Cooperate", "Defect"}}},
                            std::move(t));
    }
    case GameKind::Chicken: {
      Tensor t = {{Cell{p.c, p.c}, Cell{p.b, p.d}},
                  {Cell{p.d, p.b}, Cell{p.a, p.a}}};
      return NormalFormGame(kind, {{{"Swerve", "Stay"}, {"Swerve", "Stay"}}},
                            std::move(t));
    }
    case GameKind::StagHunt: {
      Tensor t = {{Cell{p.d, p.d}, Cell{p.a, p.b}},
                  {Cell{p.b, p.a}, Cell{p.c, p.c}}};
      return NormalFormGame(kind, {{{"Stag", "Hare"}, {"Stag", "Hare"}}}, std::move(t));
    }
    case GameKind::BattleOfSexes: {
      Tensor t = {{Cell{p.c, p.b}, Cell{p.a, p.a}},
                  {Cell{p.a, p.a}, Cell{p.b, p.c}}};
      return NormalFormGame(kind, {{{"Boxing", "Ballet"}, {"Boxing", "Ballet"}}},
                            std::move(t));
    }
    case GameKind::MatchingPennies: {
      Tensor t = {{Cell{p.a, -p.a}, Cell{-p.a, p.a}},
                  {Cell{-p.a, p.a}, Cell{p.a, -p.a}}};
      return NormalFormGame(kind, {{{"Head", "Tail"}, {"Head", "Tail"}}}, std::move(t));
    }
  }
  throw OrderingViolation("unknown game kind");
}

std::array<double, 2> payoff(const NormalFormGame& game, const JointAction& joint) {
  return game.payoff(joint);
}

RepetitionSpec RepetitionSpec::single() { return RepetitionSpec{}; }

RepetitionSpec RepetitionSpec::fixed(int n) {
  RepetitionSpec s;
  s.mode = Mode::FixedCount;
  s.n = n;
  return s;
}

RepetitionSpec RepetitionSpec::stochastic(int lo, int hi) {
  RepetitionSpec s;
  s.mode = Mode::StochasticCount;
  s.lo = lo;
  s.hi = hi;
  return s;
}

int sample_repetitions(const RepetitionSpec& spec, std::uint64_t rng_seed) {
  switch (spec.mode) {
    case RepetitionSpec::Mode::Single:
      return 1;
    case RepetitionSpec::Mode::FixedCount:
      if (spec.n < 1) throw ConfigInvalid("FixedCount requires n >= 1");
      return spec.n;
    case RepetitionSpec::Mode::StochasticCount: {
      if (spec.lo < 1 || spec.lo > spec.hi) {
        throw ConfigInvalid("StochasticCount requires 1 <= lo <= hi");
      }
      Rng rng(mix_seed(rng_seed, 0x5e9));
      return static_cast<int>(rng.uniform_int(spec.lo, spec.hi));
    }
  }
  return 1;
}

void WoAConfig::validate() const {
  if (!(value[0] > 0.0 && value[1] > 0.0)) throw ConfigInvalid("WoA values must be > 0");
  if (!(cost[0] > 0.0 && cost[1] > 0.0)) throw ConfigInvalid("WoA costs must be > 0");
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw ConfigInvalid("gamma must be in [0, 1]");
  if (terminal_t < 1) throw ConfigInvalid("terminal_t must be >= 1");
  if (evolving) {
    if (evolving->state_dim < 1) throw ConfigInvalid("state_dim must be >= 1");
    for (int p = 0; p < 2; ++p) {
      if (!evolving->cost_weights[p].empty() &&
          static_cast<int>(evolving->cost_weights[p].size()) != evolving->state_dim) {
        throw ConfigInvalid("cost_weights dimension must equal state_dim");
      }
    }
  }
}

std::string to_string(WoADecision d) {
  return d == WoADecision::Continue ? "Continue" : "Surrender";
}

std::string to_string(WoAOutcomeClass c) {
  switch (c) {
    case WoAOutcomeClass::Concession: return "concession";
    case WoAOutcomeClass::AsymmetricResolution: return "asymmetric_resolution";
    case WoAOutcomeClass::MutualSurrender: return "mutual_surrender";
  }
  return "unknown";
}

double woa_loss(const WoAConfig& config, int player, int periods) {
  if (periods < 1) throw InvalidPeriod("loss is defined for t >= 1");
  if (!config.is_classic()) {
    throw UnsupportedVariant("closed-form loss applies to the classic variant only");
  }
  const double c = config.cost.at(player);
  const double g = config.gamma;
  if (g == 1.0) return c * static_cast<double>(periods);
  return c * (1.0 - std::pow(g, periods)) / (1.0 - g);
}

WoAState woa_initial_state(const WoAConfig& config) {
  config.validate();
  WoAState s;
  if (config.evolving) {
    s.theta.assign(static_cast<std::size_t>(config.evolving->state_dim), 0.0);
  }
  return s;
}

namespace {

// Period cost for the evolving variant given the advanced state.
double evolving_period_cost(const WoAConfig& config, int player,
                            const std::vector<double>& theta) {
  const auto& spec = *config.evolving;
  double mod = 0.0;
  const auto& w = spec.cost_weights[player];
  for (std::size_t i = 0; i < theta.size() && i < w.size(); ++i) {
    mod += w[i] * theta[i];
  }
  return std::max(kWoACostFloor, config.cost.at(player) * (1.0 + mod));
}

WoAOutcomeClass classify(int period, bool both) {
  if (both) return WoAOutcomeClass::MutualSurrender;
  return period == 1 ? WoAOutcomeClass::Concession
                     : WoAOutcomeClass::AsymmetricResolution;
}

}  // namespace

std::pair<WoAState, std::optional<WoAOutcome>> woa_step(
    const WoAState& state, const WoAConfig& config,
    std::array<WoADecision, 2> decisions, std::uint64_t rng_seed) {
  if (state.terminal()) throw SteppedTerminalGame("war already resolved");
  if (state.t > config.terminal_t) throw SteppedTerminalGame("past terminal period");

  WoAState next = state;

  // Advance the public state and recompute this period's costs before
  // accumulation; the classic variant uses the constant per-period cost.
  std::array<double, 2> period_cost{config.cost[0], config.cost[1]};
  if (config.evolving) {
    const auto& spec = *config.evolving;
    Rng rng(mix_seed(rng_seed, static_cast<std::uint64_t>(state.t)));
    for (auto& component : next.theta) {
      component = spec.transition_coeff * component + spec.noise_scale * rng.gaussian();
    }
    period_cost = {evolving_period_cost(config, kRow, next.theta),
                   evolving_period_cost(config, kCol, next.theta)};
  }
  const double discount = std::pow(config.gamma, state.t - 1);
  next.accumulated_loss[kRow] += discount * period_cost[kRow];
  next.accumulated_loss[kCol] += discount * period_cost[kCol];

  const bool row_quits = decisions[kRow] == WoADecision::Surrender;
  const bool col_quits = decisions[kCol] == WoADecision::Surrender;
  const bool at_terminal = state.t == config.terminal_t;

  auto resolve = [&](bool row_s, bool col_s, bool forced) {
    WoAOutcome out;
    out.period = state.t;
    out.surrendered = {row_s, col_s};
    out.forced = forced;
    if (row_s && col_s) {
      out.cls = WoAOutcomeClass::MutualSurrender;
      out.payoffs = {-next.accumulated_loss[kRow], -next.accumulated_loss[kCol]};
    } else {
      const int loser = row_s ? kRow : kCol;
      const int winner = opponent_of(loser);
      out.cls = classify(state.t, false);
      const double prize = config.prize_reading == PrizeReading::WinnerValue
                               ? config.value[winner]
                               : config.value[loser];
      out.payoffs[loser] = -next.accumulated_loss[loser];
      out.payoffs[winner] = prize - next.accumulated_loss[winner];
    }
    next.surrendered = {row_s, col_s};
    return out;
  };

  if (row_quits || col_quits) {
    return {next, resolve(row_quits, col_quits, false)};
  }
  if (at_terminal) {
    return {next, resolve(true, true, true)};
  }
  next.t = state.t + 1;
  return {next, std::nullopt};
}

}  // namespace parley
