#include "parley/equilibrium.hpp"

#include <algorithm>
#include <cmath>

namespace parley {

std::string to_string(SolutionConcept target) {
  switch (target) {
    case SolutionConcept::PureNash: return "pure_nash";
    case SolutionConcept::MixedNash: return "mixed_nash";
    case SolutionConcept::ParetoEfficient: return "pareto_efficient";
    case SolutionConcept::SocialWelfareMax: return "social_welfare_max";
    case SolutionConcept::SPE: return "spe";
  }
  return "unknown";
}

std::optional<SolutionConcept> solution_concept_from_string(const std::string& name) {
  if (name == "pure_nash") return SolutionConcept::PureNash;
  if (name == "mixed_nash") return SolutionConcept::MixedNash;
  if (name == "pareto_efficient") return SolutionConcept::ParetoEfficient;
  if (name == "social_welfare_max") return SolutionConcept::SocialWelfareMax;
  if (name == "spe") return SolutionConcept::SPE;
  return std::nullopt;
}

MixedProfile MixedProfile::degenerate(const NormalFormGame& game,
                                      const JointAction& joint) {
  MixedProfile p;
  p.row_probs.assign(static_cast<std::size_t>(game.num_actions(kRow)), 0.0);
  p.col_probs.assign(static_cast<std::size_t>(game.num_actions(kCol)), 0.0);
  p.row_probs.at(static_cast<std::size_t>(joint.row)) = 1.0;
  p.col_probs.at(static_cast<std::size_t>(joint.col)) = 1.0;
  return p;
}

bool MixedProfile::is_degenerate(double tol) const {
  auto pure = [tol](const std::vector<double>& v) {
    return std::any_of(v.begin(), v.end(),
                       [tol](double p) { return std::abs(p - 1.0) <= tol; });
  };
  return pure(row_probs) && pure(col_probs);
}

double expected_payoff(const NormalFormGame& game, const MixedProfile& profile,
                       int player) {
  double total = 0.0;
  for (int r = 0; r < game.num_actions(kRow); ++r) {
    for (int c = 0; c < game.num_actions(kCol); ++c) {
      const double w = profile.row_probs.at(r) * profile.col_probs.at(c);
      if (w != 0.0) total += w * game.payoff(JointAction{r, c}, player);
    }
  }
  return total;
}

std::vector<JointAction> pure_nash(const NormalFormGame& game) {
  std::vector<JointAction> out;
  for (int r = 0; r < game.num_actions(kRow); ++r) {
    for (int c = 0; c < game.num_actions(kCol); ++c) {
      const JointAction cell{r, c};
      bool stable = true;
      for (int rr = 0; rr < game.num_actions(kRow) && stable; ++rr) {
        if (game.payoff(JointAction{rr, c}, kRow) > game.payoff(cell, kRow)) {
          stable = false;
        }
      }
      for (int cc = 0; cc < game.num_actions(kCol) && stable; ++cc) {
        if (game.payoff(JointAction{r, cc}, kCol) > game.payoff(cell, kCol)) {
          stable = false;
        }
      }
      if (stable) out.push_back(cell);
    }
  }
  return out;
}

std::vector<MixedProfile> mixed_nash_2x2(const NormalFormGame& game) {
  if (game.num_actions(kRow) != 2 || game.num_actions(kCol) != 2) {
    throw IndexOutOfRange("mixed_nash_2x2 requires a 2x2 game");
  }
  auto R = [&](int r, int c) { return game.payoff(JointAction{r, c}, kRow); };
  auto C = [&](int r, int c) { return game.payoff(JointAction{r, c}, kCol); };

  const bool row_flat = R(0, 0) == R(1, 0) && R(0, 1) == R(1, 1);
  const bool col_flat = C(0, 0) == C(0, 1) && C(1, 0) == C(1, 1);
  if (row_flat || col_flat) {
    throw DegenerateGame("a player is indifferent between all actions");
  }

  std::vector<MixedProfile> out;
  for (const auto& cell : pure_nash(game)) {
    out.push_back(MixedProfile::degenerate(game, cell));
  }

  // Interior solution: each player mixes to make the opponent indifferent.
  const double q_den = (R(0, 0) - R(1, 0)) + (R(1, 1) - R(0, 1));
  const double p_den = (C(0, 0) - C(0, 1)) + (C(1, 1) - C(1, 0));
  if (q_den != 0.0 && p_den != 0.0) {
    const double q = (R(1, 1) - R(0, 1)) / q_den;
    const double p = (C(1, 1) - C(1, 0)) / p_den;
    if (p > 0.0 && p < 1.0 && q > 0.0 && q < 1.0) {
      MixedProfile interior;
      interior.row_probs = {p, 1.0 - p};
      interior.col_probs = {q, 1.0 - q};
      out.push_back(std::move(interior));
    }
  }
  return out;
}

bool is_nash(const NormalFormGame& game, const MixedProfile& profile, double tol) {
  for (int player : {kRow, kCol}) {
    const double realized = expected_payoff(game, profile, player);
    const int n = game.num_actions(player);
    for (int a = 0; a < n; ++a) {
      MixedProfile deviation = profile;
      auto& own = player == kRow ? deviation.row_probs : deviation.col_probs;
      std::fill(own.begin(), own.end(), 0.0);
      own.at(static_cast<std::size_t>(a)) = 1.0;
      if (expected_payoff(game, deviation, player) > realized + tol) return false;
    }
  }
  return true;
}

namespace {

bool pareto_dominates(const std::array<double, 2>& lhs,
                      const std::array<double, 2>& rhs) {
  return lhs[0] >= rhs[0] && lhs[1] >= rhs[1] &&
         (lhs[0] > rhs[0] || lhs[1] > rhs[1]);
}

}  // namespace

std::vector<JointAction> pareto_frontier(const NormalFormGame& game) {
  std::vector<JointAction> out;
  for (int r = 0; r < game.num_actions(kRow); ++r) {
    for (int c = 0; c < game.num_actions(kCol); ++c) {
      const JointAction cell{r, c};
      bool dominated = false;
      for (int rr = 0; rr < game.num_actions(kRow) && !dominated; ++rr) {
        for (int cc = 0; cc < game.num_actions(kCol) && !dominated; ++cc) {
          dominated = pareto_dominates(game.payoff(JointAction{rr, cc}),
                                       game.payoff(cell));
        }
      }
      if (!dominated) out.push_back(cell);
    }
  }
  return out;
}

double social_welfare(const NormalFormGame& game, const JointAction& joint) {
  const auto pair = game.payoff(joint);
  return pair[0] + pair[1];
}

std::vector<int> best_response(const NormalFormGame& game, int player,
                               int opponent_action) {
  const int opp = opponent_of(player);
  if (opponent_action < 0 || opponent_action >= game.num_actions(opp)) {
    throw IndexOutOfRange("opponent action out of range");
  }
  auto value = [&](int a) {
    const JointAction joint = player == kRow
                                  ? JointAction{a, opponent_action}
                                  : JointAction{opponent_action, a};
    return game.payoff(joint, player);
  };
  double best = value(0);
  for (int a = 1; a < game.num_actions(player); ++a) best = std::max(best, value(a));
  std::vector<int> out;
  for (int a = 0; a < game.num_actions(player); ++a) {
    if (value(a) == best) out.push_back(a);
  }
  return out;
}

double regret(const NormalFormGame& game, const MixedProfile& profile, int player) {
  const double realized = expected_payoff(game, profile, player);
  double best = realized;
  for (int a = 0; a < game.num_actions(player); ++a) {
    MixedProfile deviation = profile;
    auto& own = player == kRow ? deviation.row_probs : deviation.col_probs;
    std::fill(own.begin(), own.end(), 0.0);
    own.at(static_cast<std::size_t>(a)) = 1.0;
    best = std::max(best, expected_payoff(game, deviation, player));
  }
  return std::max(0.0, best - realized);
}

WoADecision WoAPolicy::decision(int player, int t) const {
  if (t < 1 || t > static_cast<int>(by_period.size())) {
    throw InvalidPeriod("policy period out of range");
  }
  return by_period[static_cast<std::size_t>(t - 1)].at(player);
}

int WoAPolicy::resolution_period() const {
  for (std::size_t i = 0; i < by_period.size(); ++i) {
    if (by_period[i][kRow] == WoADecision::Surrender ||
        by_period[i][kCol] == WoADecision::Surrender) {
      return static_cast<int>(i + 1);
    }
  }
  return static_cast<int>(by_period.size());
}

WoAPolicy woa_spe_truncated(const WoAConfig& config) {
  config.validate();
  if (!config.is_classic()) {
    throw UnsupportedVariant("backward induction covers the classic variant only");
  }
  const int T = config.terminal_t;
  WoAPolicy policy;
  policy.selection_rule = "pareto_then_lowest_index";
  policy.by_period.assign(static_cast<std::size_t>(T),
                          {WoADecision::Continue, WoADecision::Continue});
  policy.by_period.back() = {WoADecision::Surrender, WoADecision::Surrender};

  // Value of the subgame entered when both players are still in at period
  // t+1; seeded with the forced terminal outcome.
  std::array<double, 2> continuation{-woa_loss(config, kRow, T),
                                     -woa_loss(config, kCol, T)};

  for (int t = T - 1; t >= 1; --t) {
    const std::array<double, 2> loss{woa_loss(config, kRow, t),
                                     woa_loss(config, kCol, t)};
    // Stage cells indexed [row decision][col decision], Continue = 0.
    std::array<std::array<std::array<double, 2>, 2>, 2> cell;
    cell[0][0] = continuation;
    cell[0][1] = {config.value[kRow] - loss[kRow], -loss[kCol]};
    cell[1][0] = {-loss[kRow], config.value[kCol] - loss[kCol]};
    cell[1][1] = {-loss[kRow], -loss[kCol]};

    std::vector<std::array<int, 2>> stage_ne;
    for (int r = 0; r < 2; ++r) {
      for (int c = 0; c < 2; ++c) {
        const bool row_ok = cell[r][c][kRow] >= cell[1 - r][c][kRow] - kDefaultTol;
        const bool col_ok = cell[r][c][kCol] >= cell[r][1 - c][kCol] - kDefaultTol;
        if (row_ok && col_ok) stage_ne.push_back({r, c});
      }
    }
    if (stage_ne.empty()) {
      throw DegenerateGame("no pure stage equilibrium during backward induction");
    }

    std::vector<std::array<int, 2>> undominated;
    for (const auto& a : stage_ne) {
      bool dominated = false;
      for (const auto& b : stage_ne) {
        if (pareto_dominates(cell[b[0]][b[1]], cell[a[0]][a[1]])) {
          dominated = true;
          break;
        }
      }
      if (!dominated) undominated.push_back(a);
    }
    const auto pick = *std::min_element(undominated.begin(), undominated.end());

    policy.by_period[static_cast<std::size_t>(t - 1)] = {
        pick[0] == 0 ? WoADecision::Continue : WoADecision::Surrender,
        pick[1] == 0 ? WoADecision::Continue : WoADecision::Surrender};
    continuation = cell[pick[0]][pick[1]];
  }
  return policy;
}

}  // namespace parley
