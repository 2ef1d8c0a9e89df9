#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "parley/games.hpp"

namespace parley {

inline constexpr double kDefaultTol = 1e-9;

// Solution concepts an agent can be steered toward or scored against.
enum class SolutionConcept {
  PureNash,
  MixedNash,
  ParetoEfficient,
  SocialWelfareMax,
  SPE,
};

std::string to_string(SolutionConcept target);
std::optional<SolutionConcept> solution_concept_from_string(const std::string& name);

// A (possibly degenerate) mixed strategy profile for a 2-player game.
struct MixedProfile {
  std::vector<double> row_probs;
  std::vector<double> col_probs;

  static MixedProfile degenerate(const NormalFormGame& game, const JointAction& joint);
  bool is_degenerate(double tol = kDefaultTol) const;
};

// Expected payoff to `player` when both sides mix independently.
double expected_payoff(const NormalFormGame& game, const MixedProfile& profile,
                       int player);

// All pure-strategy Nash cells, row-major order. Ties count as best responses.
std::vector<JointAction> pure_nash(const NormalFormGame& game);

// All equilibria of a 2x2 game: pure equilibria as degenerate profiles plus
// the interior indifference solution when it lies strictly inside (0,1)^2.
// Throws DegenerateGame when one player is indifferent everywhere.
std::vector<MixedProfile> mixed_nash_2x2(const NormalFormGame& game);

// True iff no unilateral pure deviation improves a player's expected payoff
// by more than tol.
bool is_nash(const NormalFormGame& game, const MixedProfile& profile,
             double tol = kDefaultTol);

// Cells not strictly Pareto-dominated by any other cell, row-major order.
std::vector<JointAction> pareto_frontier(const NormalFormGame& game);

// Sum of both players' payoffs at the cell.
double social_welfare(const NormalFormGame& game, const JointAction& joint);

// Argmax set of `player`'s actions against a fixed opponent action.
std::vector<int> best_response(const NormalFormGame& game, int player,
                               int opponent_action);

// Best achievable expected payoff against the opponent's marginal minus the
// realized expected payoff. Never negative.
double regret(const NormalFormGame& game, const MixedProfile& profile, int player);

// Subgame-perfect policy for the truncated War of Attrition. by_period[t-1]
// holds both players' decisions for period t; the terminal period is the
// forced mutual surrender, not a strategic choice.
struct WoAPolicy {
  std::vector<std::array<WoADecision, 2>> by_period;
  std::string selection_rule;

  WoADecision decision(int player, int t) const;
  // First period at which some player surrenders under the policy.
  int resolution_period() const;
};

// Backward induction over the finite horizon. Simultaneous stage games with
// several equilibria are resolved by dropping Pareto-dominated stage
// equilibria and then taking the lowest (row, col) index pair, Continue
// ordering before Surrender. Classic variant only.
WoAPolicy woa_spe_truncated(const WoAConfig& config);

}  // namespace parley
