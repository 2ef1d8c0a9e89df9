#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "parley/errors.hpp"

namespace parley {

inline constexpr int kRow = 0;
inline constexpr int kCol = 1;
inline constexpr int kNumPlayers = 2;

inline int opponent_of(int player) { return 1 - player; }

// ---------------------------------------------------------------------------
// Classic 2x2 matrix games
// ---------------------------------------------------------------------------

enum class GameKind {
  PrisonersDilemma,
  Chicken,
  StagHunt,
  BattleOfSexes,
  MatchingPennies,
};

std::string to_string(GameKind kind);
std::optional<GameKind> game_kind_from_string(const std::string& name);

// Payoff levels for the generalized templates. Every kind except Matching
// Pennies requires 0 <= a < b < c < d (strict); Matching Pennies uses only a,
// which must be positive.
struct PayoffParams {
  double a = 0.0;
  double b = 1.0;
  double c = 2.0;
  double d = 3.0;

  friend bool operator==(const PayoffParams&, const PayoffParams&) = default;
};

struct JointAction {
  int row = 0;
  int col = 0;

  friend bool operator==(const JointAction&, const JointAction&) = default;
  friend auto operator<=>(const JointAction&, const JointAction&) = default;
};

// A 2-player matrix game: per-player ordered action labels plus a
// row x col x player payoff tensor. Instances are immutable once built.
class NormalFormGame {
 public:
  // Direct construction from an explicit tensor. `payoffs[r][c][p]` is the
  // payoff to player p when row plays r and col plays c.
  NormalFormGame(GameKind kind,
                 std::array<std::vector<std::string>, 2> action_labels,
                 std::vector<std::vector<std::array<double, 2>>> payoffs);

  GameKind kind() const { return kind_; }

  int num_actions(int player) const;
  const std::vector<std::string>& action_labels(int player) const;
  const std::string& action_label(int player, int action) const;

  // Index of a label for the given player, or nullopt when unknown.
  std::optional<int> action_index(int player, const std::string& label) const;

  // Payoff pair (row player first) at a joint action. Throws IndexOutOfRange.
  std::array<double, 2> payoff(const JointAction& joint) const;
  double payoff(const JointAction& joint, int player) const;

 private:
  GameKind kind_;
  std::array<std::vector<std::string>, 2> labels_;
  std::vector<std::vector<std::array<double, 2>>> payoffs_;
};

// Builds one of the five classic games from its generalized template.
// Throws OrderingViolation when the params violate the kind's constraint.
NormalFormGame make_classic_game(GameKind kind, const PayoffParams& params);

// Payoff lookup as a free operation.
std::array<double, 2> payoff(const NormalFormGame& game, const JointAction& joint);

// ---------------------------------------------------------------------------
// Repetition
// ---------------------------------------------------------------------------

struct RepetitionSpec {
  enum class Mode { Single, FixedCount, StochasticCount };

  Mode mode = Mode::Single;
  int n = 1;        // FixedCount
  int lo = 1;       // StochasticCount, inclusive
  int hi = 1;

  static RepetitionSpec single();
  static RepetitionSpec fixed(int n);
  static RepetitionSpec stochastic(int lo, int hi);
};

// Number of game iterations for one world. FixedCount returns n; Stochastic
// draws uniformly over [lo, hi]; deterministic for a fixed seed.
int sample_repetitions(const RepetitionSpec& spec, std::uint64_t rng_seed);

// ---------------------------------------------------------------------------
// War of Attrition
// ---------------------------------------------------------------------------

enum class WoADecision { Continue, Surrender };

std::string to_string(WoADecision d);

// Which value enters the winner's prize. The classic description can be read
// two ways; WinnerValue (the winner nets its own value minus its own loss) is
// the default, SurrendererValue awards the surrendering player's value
// instead. Both subtract the winner's own accumulated loss.
enum class PrizeReading { WinnerValue, SurrendererValue };

// Stochastic-state variant parameters: theta follows a first-order
// autoregression theta' = transition_coeff * theta + noise, and each player's
// period cost is max(cost_floor, cost_i * (1 + dot(cost_weights_i, theta))).
struct EvolvingSpec {
  int state_dim = 1;
  double transition_coeff = 0.9;
  double noise_scale = 0.1;
  std::array<std::vector<double>, 2> cost_weights;
};

inline constexpr double kWoACostFloor = 0.01;

struct WoAConfig {
  std::array<double, 2> value{5.0, 5.0};  // prize V_i, must be > 0
  std::array<double, 2> cost{2.0, 2.0};   // per-period cost c_i, must be > 0
  double gamma = 0.5;                     // discount factor in [0, 1]
  int terminal_t = 30;                    // forced mutual surrender period
  std::optional<EvolvingSpec> evolving;   // nullopt selects the classic model
  PrizeReading prize_reading = PrizeReading::WinnerValue;

  bool is_classic() const { return !evolving.has_value(); }
  void validate() const;  // throws ConfigInvalid
};

struct WoAState {
  int t = 1;                                   // current period, 1-based
  std::vector<double> theta;                   // public state, Evolving only
  std::array<bool, 2> surrendered{false, false};
  std::array<double, 2> accumulated_loss{0.0, 0.0};

  bool terminal() const { return surrendered[0] || surrendered[1]; }
};

enum class WoAOutcomeClass {
  Concession,            // exactly one player surrenders in the first period
  AsymmetricResolution,  // exactly one player surrenders at t >= 2
  MutualSurrender,       // both surrender, voluntarily or by the terminal rule
};

std::string to_string(WoAOutcomeClass c);

struct WoAOutcome {
  int period = 0;
  WoAOutcomeClass cls = WoAOutcomeClass::MutualSurrender;
  std::array<double, 2> payoffs{0.0, 0.0};
  std::array<bool, 2> surrendered{false, false};
  bool forced = false;  // terminal-period forced mutual surrender

  friend bool operator==(const WoAOutcome&, const WoAOutcome&) = default;
};

// Accumulated loss of `player` after enduring `periods` periods in the
// classic model: c_i * (1 + gamma + ... + gamma^(periods-1)).
// Throws InvalidPeriod for periods < 1.
double woa_loss(const WoAConfig& config, int player, int periods);

WoAState woa_initial_state(const WoAConfig& config);

// Advances one period. Exactly one surrender ends the war with the
// surrenderer at -L_s(t) and the winner at prize - L_w(t); both surrendering
// costs each player its own accumulated loss; both continuing at the terminal
// period forces mutual surrender. The Evolving variant advances theta and
// recomputes the period cost before accumulating. Throws SteppedTerminalGame
// when called on a finished war.
std::pair<WoAState, std::optional<WoAOutcome>> woa_step(
    const WoAState& state, const WoAConfig& config,
    std::array<WoADecision, 2> decisions, std::uint64_t rng_seed);

}  // namespace parley
