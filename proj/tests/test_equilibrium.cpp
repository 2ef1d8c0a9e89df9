#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>

#include "oracles.hpp"
#include "parley/equilibrium.hpp"
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

PayoffParams random_valid_params(Rng& rng) {
  PayoffParams p;
  p.a = rng.uniform01() * 4.0;
  p.b = p.a + 0.1 + rng.uniform01() * 3.0;
  p.c = p.b + 0.1 + rng.uniform01() * 3.0;
  p.d = p.c + 0.1 + rng.uniform01() * 3.0;
  return p;
}

const GameKind kAllKinds[] = {GameKind::PrisonersDilemma, GameKind::Chicken,
                              GameKind::StagHunt, GameKind::BattleOfSexes,
                              GameKind::MatchingPennies};

NormalFormGame build(GameKind kind, const PayoffParams& p) {
  if (kind == GameKind::MatchingPennies) {
    PayoffParams mp;
    mp.a = std::max(0.5, p.a);
    return make_classic_game(kind, mp);
  }
  return make_classic_game(kind, p);
}

bool same_cells(std::vector<JointAction> lhs, std::vector<JointAction> rhs) {
  std::sort(lhs.begin(), lhs.end());
  std::sort(rhs.begin(), rhs.end());
  return lhs == rhs;
}

}  // namespace

TEST_CASE("pure nash on the classic instantiations") {
  const auto p = params(0, 1, 2, 3);

  const auto pd_ne = pure_nash(make_classic_game(GameKind::PrisonersDilemma, p));
  REQUIRE(pd_ne.size() == 1);
  CHECK(pd_ne[0] == JointAction{1, 1});

  const auto chicken_ne = pure_nash(make_classic_game(GameKind::Chicken, p));
  REQUIRE(chicken_ne.size() == 2);
  CHECK(same_cells(chicken_ne, {JointAction{0, 1}, JointAction{1, 0}}));

  PayoffParams mp;
  mp.a = 1;
  CHECK(pure_nash(make_classic_game(GameKind::MatchingPennies, mp)).empty());
}

TEST_CASE("pure nash counts hold for all valid params") {
  Rng rng(2024);
  for (int draw = 0; draw < 100; ++draw) {
    const auto p = random_valid_params(rng);
    const auto expected_count = [](GameKind kind) {
      switch (kind) {
        case GameKind::PrisonersDilemma: return 1;
        case GameKind::Chicken:
        case GameKind::StagHunt:
        case GameKind::BattleOfSexes: return 2;
        case GameKind::MatchingPennies: return 0;
      }
      return -1;
    };
    for (GameKind kind : kAllKinds) {
      const auto g = build(kind, p);
      const auto ne = pure_nash(g);
      CHECK(static_cast<int>(ne.size()) == expected_count(kind));
      CHECK(same_cells(ne, oracles::pure_nash_bruteforce(g)));
    }
  }
}

TEST_CASE("pure nash cells pass is_nash and excluded cells fail it") {
  Rng rng(5150);
  for (int draw = 0; draw < 40; ++draw) {
    const auto p = random_valid_params(rng);
    for (GameKind kind : kAllKinds) {
      const auto g = build(kind, p);
      const auto ne = pure_nash(g);
      for (int r = 0; r < 2; ++r) {
        for (int c = 0; c < 2; ++c) {
          const JointAction cell{r, c};
          const bool in_set = std::find(ne.begin(), ne.end(), cell) != ne.end();
          CHECK(is_nash(g, MixedProfile::degenerate(g, cell)) == in_set);
        }
      }
    }
  }
}

TEST_CASE("mixed equilibria of the classic instantiations") {
  const auto p = params(0, 1, 2, 3);

  PayoffParams mp_p;
  mp_p.a = 1;
  const auto mp = make_classic_game(GameKind::MatchingPennies, mp_p);
  const auto mp_eq = mixed_nash_2x2(mp);
  REQUIRE(mp_eq.size() == 1);
  CHECK(mp_eq[0].row_probs[0] == doctest::Approx(0.5));
  CHECK(mp_eq[0].col_probs[0] == doctest::Approx(0.5));

  const auto chicken = make_classic_game(GameKind::Chicken, p);
  const auto chicken_eq = mixed_nash_2x2(chicken);
  REQUIRE(chicken_eq.size() == 3);
  const auto& interior = chicken_eq.back();
  CHECK_FALSE(interior.is_degenerate());
  CHECK(interior.row_probs[0] == doctest::Approx(0.5));
  CHECK(interior.col_probs[0] == doctest::Approx(0.5));

  const auto pd = make_classic_game(GameKind::PrisonersDilemma, p);
  const auto pd_eq = mixed_nash_2x2(pd);
  REQUIRE(pd_eq.size() == 1);
  CHECK(pd_eq[0].is_degenerate());
  CHECK(pd_eq[0].row_probs[1] == doctest::Approx(1.0));

  const auto bos = make_classic_game(GameKind::BattleOfSexes, p);
  const auto bos_eq = mixed_nash_2x2(bos);
  REQUIRE(bos_eq.size() == 3);
  CHECK(bos_eq.back().row_probs[0] == doctest::Approx(2.0 / 3.0));
  CHECK(bos_eq.back().col_probs[0] == doctest::Approx(1.0 / 3.0));
}

TEST_CASE("every reported equilibrium passes is_nash") {
  Rng rng(31337);
  for (int draw = 0; draw < 40; ++draw) {
    const auto p = random_valid_params(rng);
    for (GameKind kind : kAllKinds) {
      const auto g = build(kind, p);
      for (const auto& profile : mixed_nash_2x2(g)) {
        const double row_sum =
            profile.row_probs[0] + profile.row_probs[1];
        const double col_sum =
            profile.col_probs[0] + profile.col_probs[1];
        CHECK(row_sum == doctest::Approx(1.0).epsilon(1e-9));
        CHECK(col_sum == doctest::Approx(1.0).epsilon(1e-9));
        CHECK(profile.row_probs[0] >= 0.0);
        CHECK(profile.col_probs[0] >= 0.0);
        CHECK(is_nash(g, profile));
        CHECK(regret(g, profile, kRow) == doctest::Approx(0.0).epsilon(1e-9));
        CHECK(regret(g, profile, kCol) == doctest::Approx(0.0).epsilon(1e-9));
      }
    }
  }
}

TEST_CASE("degenerate games are reported, not solved") {
  using Cell = std::array<double, 2>;
  std::vector<std::vector<Cell>> flat = {{Cell{1, 0}, Cell{1, 2}},
                                         {Cell{1, 3}, Cell{1, 1}}};
  NormalFormGame g(GameKind::PrisonersDilemma, {{{"A", "B"}, {"A", "B"}}}, flat);
  CHECK_THROWS_AS(mixed_nash_2x2(g), DegenerateGame);
}

TEST_CASE("is_nash on hand-picked profiles") {
  const auto pd = make_classic_game(GameKind::PrisonersDilemma, params(0, 1, 2, 3));
  CHECK(is_nash(pd, MixedProfile::degenerate(pd, JointAction{1, 1})));
  CHECK_FALSE(is_nash(pd, MixedProfile::degenerate(pd, JointAction{0, 0})));

  PayoffParams mp_p;
  mp_p.a = 1;
  const auto mp = make_classic_game(GameKind::MatchingPennies, mp_p);
  MixedProfile uniform;
  uniform.row_probs = {0.5, 0.5};
  uniform.col_probs = {0.5, 0.5};
  CHECK(is_nash(mp, uniform));
}

TEST_CASE("pareto frontier matches the dominance oracle") {
  const auto p = params(0, 1, 2, 3);

  const auto pd = make_classic_game(GameKind::PrisonersDilemma, p);
  CHECK(same_cells(pareto_frontier(pd),
                   {JointAction{0, 0}, JointAction{0, 1}, JointAction{1, 0}}));

  const auto sh = make_classic_game(GameKind::StagHunt, p);
  CHECK(same_cells(pareto_frontier(sh), {JointAction{0, 0}}));

  PayoffParams mp_p;
  mp_p.a = 1;
  const auto mp = make_classic_game(GameKind::MatchingPennies, mp_p);
  CHECK(pareto_frontier(mp).size() == 4);

  Rng rng(99);
  for (int draw = 0; draw < 100; ++draw) {
    const auto q = random_valid_params(rng);
    for (GameKind kind : kAllKinds) {
      const auto g = build(kind, q);
      CHECK(same_cells(pareto_frontier(g), oracles::pareto_bruteforce(g)));
    }
  }
}

TEST_CASE("social welfare sums the cell") {
  const auto pd = make_classic_game(GameKind::PrisonersDilemma, params(0, 1, 2, 3));
  CHECK(social_welfare(pd, JointAction{0, 0}) == doctest::Approx(4.0));
  CHECK(social_welfare(pd, JointAction{1, 1}) == doctest::Approx(2.0));

  PayoffParams mp_p;
  mp_p.a = 1;
  const auto mp = make_classic_game(GameKind::MatchingPennies, mp_p);
  for (int r = 0; r < 2; ++r) {
    for (int c = 0; c < 2; ++c) {
      CHECK(social_welfare(mp, JointAction{r, c}) == doctest::Approx(0.0));
    }
  }
}

TEST_CASE("best responses match the payoff tables") {
  const auto p = params(0, 1, 2, 3);
  const auto pd = make_classic_game(GameKind::PrisonersDilemma, p);
  CHECK(best_response(pd, kRow, 0) == std::vector<int>{1});
  CHECK(best_response(pd, kCol, 1) == std::vector<int>{1});

  const auto chicken = make_classic_game(GameKind::Chicken, p);
  CHECK(best_response(chicken, kRow, 1) == std::vector<int>{0});

  const auto bos = make_classic_game(GameKind::BattleOfSexes, p);
  CHECK(best_response(bos, kRow, 1) == std::vector<int>{1});

  CHECK_THROWS_AS(best_response(pd, kRow, 2), IndexOutOfRange);

  using Cell = std::array<double, 2>;
  std::vector<std::vector<Cell>> tie = {{Cell{1, 0}, Cell{0, 2}},
                                        {Cell{1, 3}, Cell{2, 1}}};
  NormalFormGame g(GameKind::PrisonersDilemma, {{{"A", "B"}, {"A", "B"}}}, tie);
  CHECK(best_response(g, kRow, 0) == std::vector<int>{0, 1});
}

TEST_CASE("regret of a forced cooperative cell") {
  const auto pd = make_classic_game(GameKind::PrisonersDilemma, params(0, 1, 2, 3));
  CHECK(regret(pd, MixedProfile::degenerate(pd, JointAction{0, 0}), kRow) ==
        doctest::Approx(1.0));
}

TEST_CASE("regret is nonnegative and zero exactly at best responses") {
  Rng rng(4242);
  for (int draw = 0; draw < 60; ++draw) {
    const auto p = random_valid_params(rng);
    for (GameKind kind : kAllKinds) {
      const auto g = build(kind, p);
      MixedProfile profile;
      const double pr = rng.uniform01();
      const double pc = rng.uniform01();
      profile.row_probs = {pr, 1.0 - pr};
      profile.col_probs = {pc, 1.0 - pc};
      for (int player : {kRow, kCol}) {
        const double r = regret(g, profile, player);
        CHECK(r >= 0.0);
        // Zero regret must coincide with no profitable pure deviation.
        double best_gain = 0.0;
        const double realized = expected_payoff(g, profile, player);
        for (int a = 0; a < 2; ++a) {
          MixedProfile dev = profile;
          auto& own = player == kRow ? dev.row_probs : dev.col_probs;
          own = {a == 0 ? 1.0 : 0.0, a == 1 ? 1.0 : 0.0};
          best_gain = std::max(best_gain, expected_payoff(g, dev, player) - realized);
        }
        CHECK(r == doctest::Approx(best_gain).epsilon(1e-9));
      }
    }
  }
}

TEST_CASE("spe policy for the forced single-period war") {
  WoAConfig cfg;
  cfg.terminal_t = 1;
  const auto policy = woa_spe_truncated(cfg);
  REQUIRE(policy.by_period.size() == 1);
  CHECK(policy.by_period[0][kRow] == WoADecision::Surrender);
  CHECK(policy.by_period[0][kCol] == WoADecision::Surrender);
  CHECK(policy.selection_rule == "pareto_then_lowest_index");
  CHECK(policy.resolution_period() == 1);
}

TEST_CASE("spe policy for the three-period war") {
  WoAConfig cfg;
  cfg.terminal_t = 3;
  const auto policy = woa_spe_truncated(cfg);
  REQUIRE(policy.by_period.size() == 3);
  CHECK(policy.by_period[0] ==
        std::array<WoADecision, 2>{WoADecision::Continue, WoADecision::Surrender});
  CHECK(policy.by_period[1] ==
        std::array<WoADecision, 2>{WoADecision::Continue, WoADecision::Surrender});
  CHECK(policy.by_period[2] ==
        std::array<WoADecision, 2>{WoADecision::Surrender, WoADecision::Surrender});

  oracles::WoAStrategy row{0, 0, 1};
  oracles::WoAStrategy col{1, 1, 1};
  CHECK(oracles::woa_is_spe(cfg, row, col));
}

TEST_CASE("spe policy when the prize is below the first-period cost") {
  // With any positive prize, mutual surrender before the terminal period is
  // never stable: the opponent of a surrendering player always prefers to
  // stand and take the prize. The war therefore still resolves through a
  // lone surrender at t=1; the low prize only determines who concedes.
  WoAConfig cfg;
  cfg.value = {0.1, 0.1};
  cfg.terminal_t = 5;
  const auto policy = woa_spe_truncated(cfg);
  CHECK(policy.resolution_period() == 1);
  CHECK(policy.by_period[0] ==
        std::array<WoADecision, 2>{WoADecision::Continue, WoADecision::Surrender});

  oracles::WoAStrategy row(5, 0);
  oracles::WoAStrategy col(5, 1);
  row[4] = 1;
  CHECK(oracles::woa_is_spe(cfg, row, col));

  // Immediate mutual surrender is not subgame perfect even at this prize.
  oracles::WoAStrategy both(5, 1);
  CHECK_FALSE(oracles::woa_is_spe(cfg, both, both));
}

TEST_CASE("spe policy is subgame perfect across a parameter grid") {
  for (double value : {0.1, 1.0, 5.0, 10.0, 25.0}) {
    for (double cost : {0.5, 2.0, 3.0, 8.0}) {
      for (double gamma : {0.0, 0.5, 1.0}) {
        for (int terminal : {1, 2, 3, 4}) {
          WoAConfig cfg;
          cfg.value = {value, value};
          cfg.cost = {cost, cost};
          cfg.gamma = gamma;
          cfg.terminal_t = terminal;

          const auto policy = woa_spe_truncated(cfg);
          REQUIRE(static_cast<int>(policy.by_period.size()) == terminal);
          CHECK(policy.by_period.back() ==
                std::array<WoADecision, 2>{WoADecision::Surrender,
                                           WoADecision::Surrender});

          oracles::WoAStrategy row(terminal, 0);
          oracles::WoAStrategy col(terminal, 0);
          for (int t = 1; t <= terminal; ++t) {
            row[t - 1] = policy.decision(kRow, t) == WoADecision::Surrender;
            col[t - 1] = policy.decision(kCol, t) == WoADecision::Surrender;
          }
          const auto all = oracles::woa_enumerate_spe(cfg);
          REQUIRE_FALSE(all.empty());
          const bool member =
              std::any_of(all.begin(), all.end(), [&](const oracles::WoAProfile& pr) {
                return pr.row == row && pr.col == col;
              });
          CHECK(member);
        }
      }
    }
  }
}

TEST_CASE("spe rejects the evolving variant") {
  WoAConfig cfg;
  cfg.evolving = EvolvingSpec{};
  cfg.evolving->cost_weights = {std::vector<double>{0.5}, std::vector<double>{0.5}};
  CHECK_THROWS_AS(woa_spe_truncated(cfg), UnsupportedVariant);
}
