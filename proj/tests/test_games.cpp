#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <map>

#include "oracles.hpp"
#include "parley/games.hpp"
#include "parley/rng.hpp"

using namespace parley;

namespace {

PayoffParams params(double a, double b, double c, double d) {
  PayoffParams p;
  p.a = a;
  p.b = b;
  p.c = c;
  p.d = d;
  return p;
}

// Independent statement of the generalized matrices, one lambda per kind.
std::array<double, 2> template_cell(GameKind kind, const PayoffParams& p, int r,
                                    int c) {
  switch (kind) {
    case GameKind::PrisonersDilemma: {
      const std::array<std::array<std::array<double, 2>, 2>, 2> m{
          {{{{p.c, p.c}, {p.a, p.d}}}, {{{p.d, p.a}, {p.b, p.b}}}}};
      return m[r][c];
    }
    case GameKind::Chicken: {
      const std::array<std::array<std::array<double, 2>, 2>, 2> m{
          {{{{p.c, p.c}, {p.b, p.d}}}, {{{p.d, p.b}, {p.a, p.a}}}}};
      return m[r][c];
    }
    case GameKind::StagHunt: {
      const std::array<std::array<std::array<double, 2>, 2>, 2> m{
          {{{{p.d, p.d}, {p.a, p.b}}}, {{{p.b, p.a}, {p.c, p.c}}}}};
      return m[r][c];
    }
    case GameKind::BattleOfSexes: {
      const std::array<std::array<std::array<double, 2>, 2>, 2> m{
          {{{{p.c, p.b}, {p.a, p.a}}}, {{{p.a, p.a}, {p.b, p.c}}}}};
      return m[r][c];
    }
    case GameKind::MatchingPennies: {
      const std::array<std::array<std::array<double, 2>, 2>, 2> m{
          {{{{p.a, -p.a}, {-p.a, p.a}}}, {{{-p.a, p.a}, {p.a, -p.a}}}}};
      return m[r][c];
    }
  }
  return {0, 0};
}

const GameKind kAllKinds[] = {GameKind::PrisonersDilemma, GameKind::Chicken,
                              GameKind::StagHunt, GameKind::BattleOfSexes,
                              GameKind::MatchingPennies};

PayoffParams random_valid_params(Rng& rng) {
  const double a = rng.uniform01() * 4.0;
  const double b = a + 0.1 + rng.uniform01() * 3.0;
  const double c = b + 0.1 + rng.uniform01() * 3.0;
  const double d = c + 0.1 + rng.uniform01() * 3.0;
  return params(a, b, c, d);
}

}  // namespace

TEST_CASE("classic templates instantiate exactly") {
  const auto p = params(0, 1, 2, 3);

  const auto pd = make_classic_game(GameKind::PrisonersDilemma, p);
  CHECK(pd.payoff(JointAction{0, 0}) == std::array<double, 2>{2, 2});
  CHECK(pd.payoff(JointAction{0, 1}) == std::array<double, 2>{0, 3});
  CHECK(pd.payoff(JointAction{1, 0}) == std::array<double, 2>{3, 0});
  CHECK(pd.payoff(JointAction{1, 1}) == std::array<double, 2>{1, 1});

  const auto chicken = make_classic_game(GameKind::Chicken, p);
  CHECK(chicken.payoff(JointAction{1, 1}) == std::array<double, 2>{0, 0});
  CHECK(chicken.payoff(JointAction{0, 1}) == std::array<double, 2>{1, 3});

  PayoffParams mp_p;
  mp_p.a = 1;
  const auto mp = make_classic_game(GameKind::MatchingPennies, mp_p);
  CHECK(mp.payoff(JointAction{0, 1}) == std::array<double, 2>{-1, 1});
  CHECK(mp.payoff(JointAction{0, 0}) == std::array<double, 2>{1, -1});
}

TEST_CASE("every tensor entry matches the template for random params") {
  Rng rng(0xc0ffee);
  for (int draw = 0; draw < 100; ++draw) {
    const auto p = random_valid_params(rng);
    for (GameKind kind : kAllKinds) {
      const auto g = make_classic_game(kind, p);
      for (int r = 0; r < 2; ++r) {
        for (int c = 0; c < 2; ++c) {
          CHECK(g.payoff(JointAction{r, c}) == template_cell(kind, p, r, c));
        }
      }
    }
  }
}

TEST_CASE("matching pennies is zero sum for every cell") {
  Rng rng(7);
  for (int draw = 0; draw < 50; ++draw) {
    PayoffParams p;
    p.a = 0.01 + rng.uniform01() * 10.0;
    const auto g = make_classic_game(GameKind::MatchingPennies, p);
    for (int r = 0; r < 2; ++r) {
      for (int c = 0; c < 2; ++c) {
        const auto pay = g.payoff(JointAction{r, c});
        CHECK(pay[0] + pay[1] == doctest::Approx(0.0));
      }
    }
  }
}

TEST_CASE("ordering violations are rejected") {
  CHECK_THROWS_AS(make_classic_game(GameKind::PrisonersDilemma, params(1, 1, 2, 3)),
                  OrderingViolation);
  CHECK_THROWS_AS(make_classic_game(GameKind::Chicken, params(-1, 1, 2, 3)),
                  OrderingViolation);
  CHECK_THROWS_AS(make_classic_game(GameKind::StagHunt, params(0, 2, 1, 3)),
                  OrderingViolation);
  CHECK_THROWS_AS(make_classic_game(GameKind::BattleOfSexes, params(0, 1, 3, 3)),
                  OrderingViolation);
  PayoffParams mp_zero;
  mp_zero.a = 0;
  CHECK_THROWS_AS(make_classic_game(GameKind::MatchingPennies, mp_zero),
                  OrderingViolation);
}

TEST_CASE("action labels and lookup") {
  const auto p = params(0, 1, 2, 3);
  const auto pd = make_classic_game(GameKind::PrisonersDilemma, p);
  CHECK(pd.action_label(kRow, 0) == "Cooperate");
  CHECK(pd.action_label(kCol, 1) == "Defect");
  CHECK(pd.action_index(kRow, "Defect") == 1);
  CHECK_FALSE(pd.action_index(kRow, "Stay").has_value());
  CHECK_THROWS_AS(pd.action_label(kRow, 2), IndexOutOfRange);
  CHECK_THROWS_AS(pd.payoff(JointAction{2, 0}), IndexOutOfRange);
  CHECK_THROWS_AS(pd.payoff(JointAction{0, -1}), IndexOutOfRange);

  CHECK(make_classic_game(GameKind::Chicken, p).action_label(kRow, 0) == "Swerve");
  CHECK(make_classic_game(GameKind::StagHunt, p).action_label(kRow, 0) == "Stag");
  CHECK(make_classic_game(GameKind::BattleOfSexes, p).action_label(kCol, 0) ==
        "Boxing");
  PayoffParams mp_p;
  mp_p.a = 1;
  CHECK(make_classic_game(GameKind::MatchingPennies, mp_p).action_label(kRow, 0) ==
        "Head");
}

TEST_CASE("game kind names round trip") {
  for (GameKind kind : kAllKinds) {
    CHECK(game_kind_from_string(to_string(kind)) == kind);
  }
  CHECK_FALSE(game_kind_from_string("poker").has_value());
}

TEST_CASE("sample_repetitions fixed and degenerate modes") {
  CHECK(sample_repetitions(RepetitionSpec::single(), 42) == 1);
  CHECK(sample_repetitions(RepetitionSpec::fixed(5), 42) == 5);
  CHECK(sample_repetitions(RepetitionSpec::stochastic(4, 4), 123) == 4);
  CHECK_THROWS_AS(sample_repetitions(RepetitionSpec::fixed(0), 1), ConfigInvalid);
  CHECK_THROWS_AS(sample_repetitions(RepetitionSpec::stochastic(6, 3), 1),
                  ConfigInvalid);
}

TEST_CASE("sample_repetitions is deterministic and uniform over the range") {
  const auto spec = RepetitionSpec::stochastic(3, 6);
  CHECK(sample_repetitions(spec, 99) == sample_repetitions(spec, 99));

  std::map<int, int> counts;
  const int draws = 10000;
  for (int seed = 0; seed < draws; ++seed) {
    const int n = sample_repetitions(spec, static_cast<std::uint64_t>(seed));
    REQUIRE(n >= 3);
    REQUIRE(n <= 6);
    counts[n]++;
  }
  REQUIRE(counts.size() == 4);
  for (const auto& [value, count] : counts) {
    const double freq = static_cast<double>(count) / draws;
    CHECK(freq >= 0.2);
    CHECK(freq <= 0.3);
  }
}

TEST_CASE("woa_loss closed form matches the term sum") {
  WoAConfig cfg;
  cfg.cost = {2.0, 2.0};
  cfg.gamma = 0.5;
  CHECK(woa_loss(cfg, kRow, 1) == doctest::Approx(2.0));
  CHECK(woa_loss(cfg, kRow, 3) == doctest::Approx(3.5));

  WoAConfig undiscounted = cfg;
  undiscounted.gamma = 1.0;
  CHECK(woa_loss(undiscounted, kRow, 4) == doctest::Approx(8.0));

  CHECK_THROWS_AS(woa_loss(cfg, kRow, 0), InvalidPeriod);

  for (double cost : {0.5, 2.0, 7.25}) {
    for (double gamma : {0.0, 0.3, 0.5, 0.9, 1.0}) {
      WoAConfig c;
      c.cost = {cost, cost};
      c.gamma = gamma;
      for (int t = 1; t <= 12; ++t) {
        CHECK(woa_loss(c, kRow, t) ==
              doctest::Approx(oracles::loss_sum(cost, gamma, t)).epsilon(1e-12));
      }
    }
  }
}

TEST_CASE("woa_loss grows monotonically and converges for gamma below one") {
  WoAConfig cfg;
  cfg.cost = {2.0, 2.0};
  cfg.gamma = 0.5;
  const double bound = cfg.cost[0] / (1.0 - cfg.gamma);
  double prev = 0.0;
  for (int t = 1; t <= 30; ++t) {
    const double loss = woa_loss(cfg, kRow, t);
    CHECK(loss > prev);
    CHECK(loss < bound + 1e-12);
    prev = loss;
  }
  CHECK(woa_loss(cfg, kRow, 30) == doctest::Approx(bound).epsilon(1e-6));
}

TEST_CASE("woa_step resolves a lone surrender") {
  WoAConfig cfg;
  cfg.validate();

  auto state = woa_initial_state(cfg);
  auto [s1, out1] = woa_step(state, cfg, {WoADecision::Continue, WoADecision::Continue}, 0);
  REQUIRE_FALSE(out1.has_value());
  CHECK(s1.t == 2);

  auto [s2, out2] = woa_step(s1, cfg, {WoADecision::Surrender, WoADecision::Continue}, 0);
  REQUIRE(out2.has_value());
  CHECK(out2->period == 2);
  CHECK(out2->payoffs[kRow] == doctest::Approx(-3.0));
  CHECK(out2->payoffs[kCol] == doctest::Approx(2.0));
  CHECK(out2->cls == WoAOutcomeClass::AsymmetricResolution);
  CHECK_FALSE(out2->forced);
  CHECK(s2.terminal());
  CHECK_THROWS_AS(
      woa_step(s2, cfg, {WoADecision::Continue, WoADecision::Continue}, 0),
      SteppedTerminalGame);
}

TEST_CASE("woa_step classifies first-period outcomes") {
  WoAConfig cfg;
  auto state = woa_initial_state(cfg);

  auto [s_both, out_both] =
      woa_step(state, cfg, {WoADecision::Surrender, WoADecision::Surrender}, 0);
  REQUIRE(out_both.has_value());
  CHECK(out_both->payoffs[kRow] == doctest::Approx(-2.0));
  CHECK(out_both->payoffs[kCol] == doctest::Approx(-2.0));
  CHECK(out_both->cls == WoAOutcomeClass::MutualSurrender);

  auto [s_one, out_one] =
      woa_step(state, cfg, {WoADecision::Continue, WoADecision::Surrender}, 0);
  REQUIRE(out_one.has_value());
  CHECK(out_one->cls == WoAOutcomeClass::Concession);
  CHECK(out_one->payoffs[kRow] == doctest::Approx(3.0));
  CHECK(out_one->payoffs[kCol] == doctest::Approx(-2.0));
}

TEST_CASE("woa_step forces mutual surrender at the terminal period") {
  WoAConfig cfg;
  cfg.terminal_t = 3;
  auto state = woa_initial_state(cfg);
  std::optional<WoAOutcome> outcome;
  for (int t = 1; t <= 3; ++t) {
    auto [next, out] =
        woa_step(state, cfg, {WoADecision::Continue, WoADecision::Continue}, 0);
    state = next;
    outcome = out;
    CHECK(state.accumulated_loss[kRow] ==
          doctest::Approx(oracles::loss_sum(cfg.cost[kRow], cfg.gamma, t)));
  }
  REQUIRE(outcome.has_value());
  CHECK(outcome->period == 3);
  CHECK(outcome->forced);
  CHECK(outcome->cls == WoAOutcomeClass::MutualSurrender);
  CHECK(outcome->payoffs[kRow] == doctest::Approx(-3.5));
  CHECK(outcome->payoffs[kCol] == doctest::Approx(-3.5));
}

TEST_CASE("woa prize reading flag switches whose value is won") {
  WoAConfig cfg;
  cfg.value = {5.0, 9.0};
  auto state = woa_initial_state(cfg);

  auto [s1, winner_reading] =
      woa_step(state, cfg, {WoADecision::Continue, WoADecision::Surrender}, 0);
  REQUIRE(winner_reading.has_value());
  CHECK(winner_reading->payoffs[kRow] == doctest::Approx(5.0 - 2.0));

  WoAConfig literal = cfg;
  literal.prize_reading = PrizeReading::SurrendererValue;
  auto [s2, literal_reading] =
      woa_step(state, literal, {WoADecision::Continue, WoADecision::Surrender}, 0);
  REQUIRE(literal_reading.has_value());
  CHECK(literal_reading->payoffs[kRow] == doctest::Approx(9.0 - 2.0));
}

TEST_CASE("evolving variant is deterministic and respects the cost floor") {
  WoAConfig cfg;
  EvolvingSpec spec;
  spec.state_dim = 2;
  spec.transition_coeff = 0.8;
  spec.noise_scale = 0.5;
  spec.cost_weights = {std::vector<double>{1.0, -1.0}, std::vector<double>{-50.0, -50.0}};
  cfg.evolving = spec;

  auto a = woa_initial_state(cfg);
  REQUIRE(a.theta.size() == 2);
  CHECK(a.theta[0] == 0.0);

  auto [a1, out_a] = woa_step(a, cfg, {WoADecision::Continue, WoADecision::Continue}, 77);
  auto [b1, out_b] = woa_step(a, cfg, {WoADecision::Continue, WoADecision::Continue}, 77);
  CHECK(a1.theta == b1.theta);
  CHECK(a1.accumulated_loss == b1.accumulated_loss);

  auto [c1, out_c] = woa_step(a, cfg, {WoADecision::Continue, WoADecision::Continue}, 78);
  CHECK(a1.theta != c1.theta);

  // Player 2's weights drive its cost far negative, so the floor binds.
  bool floor_applied = false;
  WoAState state = a;
  double prev_loss = 0.0;
  for (int t = 1; t <= 10; ++t) {
    auto [next, out] =
        woa_step(state, cfg, {WoADecision::Continue, WoADecision::Continue}, 77);
    const double period_cost =
        (next.accumulated_loss[kCol] - prev_loss) / std::pow(cfg.gamma, t - 1);
    CHECK(period_cost >= kWoACostFloor - 1e-9);
    if (period_cost == doctest::Approx(kWoACostFloor)) floor_applied = true;
    CHECK(next.accumulated_loss[kRow] >= state.accumulated_loss[kRow]);
    prev_loss = next.accumulated_loss[kCol];
    state = next;
    if (out.has_value()) break;
  }
  CHECK(floor_applied);
}

TEST_CASE("woa config validation") {
  WoAConfig bad_cost;
  bad_cost.cost = {0.0, 2.0};
  CHECK_THROWS_AS(bad_cost.validate(), ConfigInvalid);

  WoAConfig bad_gamma;
  bad_gamma.gamma = 1.5;
  CHECK_THROWS_AS(bad_gamma.validate(), ConfigInvalid);

  WoAConfig bad_terminal;
  bad_terminal.terminal_t = 0;
  CHECK_THROWS_AS(bad_terminal.validate(), ConfigInvalid);

  WoAConfig bad_weights;
  EvolvingSpec spec;
  spec.state_dim = 2;
  spec.cost_weights = {std::vector<double>{1.0}, std::vector<double>{}};
  bad_weights.evolving = spec;
  CHECK_THROWS_AS(bad_weights.validate(), ConfigInvalid);
}
