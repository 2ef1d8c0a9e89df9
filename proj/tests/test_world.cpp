#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <memory>
#include <string>
#include <vector>

#include "parley/world.hpp"

using namespace parley;

namespace {

std::array<std::unique_ptr<Backend>, 2> scripted_pair(ScriptedStrategy a,
                                                      ScriptedStrategy b,
                                                      std::vector<std::string> labels = {
                                                          "Cooperate", "Defect"}) {
  std::array<std::unique_ptr<Backend>, 2> backends;
  backends[0] = std::make_unique<ScriptedBackend>(std::move(a), labels);
  backends[1] = std::make_unique<ScriptedBackend>(std::move(b), labels);
  return backends;
}

int count_stage(const std::vector<Segment>& segments, StageTag stage) {
  return static_cast<int>(std::count_if(
      segments.begin(), segments.end(),
      [stage](const Segment& s) { return s.stage == stage; }));
}

int count_generated(const std::vector<Segment>& segments, StageTag stage) {
  return static_cast<int>(std::count_if(
      segments.begin(), segments.end(), [stage](const Segment& s) {
        return s.stage == stage && s.generated;
      }));
}

bool window_contains(const ContextWindow& window, const std::string& needle) {
  return window.render().find(needle) != std::string::npos;
}

WorldConfig pd_config() {
  WorldConfig config;
  config.game.kind = GameSpec::Kind::Matrix;
  config.game.matrix = GameKind::PrisonersDilemma;
  return config;
}

}  // namespace

TEST_CASE("disabled communication leaves no comm segments") {
  auto config = pd_config();
  config.comm = CommConfig::disabled(2);
  World world(config, scripted_pair(ScriptedStrategy::always(0),
                                    ScriptedStrategy::always(1)));
  const auto record = world.run_iteration();

  for (int i = 0; i < 2; ++i) {
    CHECK(count_stage(record.new_segments[i], StageTag::Comm) == 0);
  }
  CHECK(record.joint == JointAction{0, 1});
  CHECK(record.payoffs[0] == 0.0);
  CHECK(record.payoffs[1] == 3.0);
  CHECK(record.parse_ok[0]);
  CHECK(record.parse_ok[1]);
}

TEST_CASE("two simultaneous rounds bound sent and received segments") {
  auto config = pd_config();
  config.comm = CommConfig::complete(2, 2, CommConfig::Scheduling::Simultaneous);

  std::array<std::unique_ptr<Backend>, 2> backends;
  backends[0] = std::make_unique<FixedScriptBackend>(std::vector<std::string>{
      "thinking", "TO 1: hello one", "TO 1: hello two", "ACTION: Cooperate",
      "reflecting"});
  backends[1] = std::make_unique<FixedScriptBackend>(std::vector<std::string>{
      "thinking", "TO 0: hi back", "PASS", "ACTION: Defect", "reflecting"});

  World world(config, std::move(backends));
  const auto record = world.run_iteration();

  for (int i = 0; i < 2; ++i) {
    CHECK(count_generated(record.new_segments[i], StageTag::Comm) == 2);
  }
  // Received copies: player 0 got one message, player 1 got two.
  CHECK(count_stage(record.new_segments[0], StageTag::Comm) == 2 + 2 + 1);
  CHECK(count_stage(record.new_segments[1], StageTag::Comm) == 2 + 2 + 2);
  CHECK(window_contains(world.window(0), "FROM Player 1: hi back"));
  CHECK(window_contains(world.window(1), "FROM Player 0: hello one"));
  CHECK(window_contains(world.window(1), "FROM Player 0: hello two"));
  CHECK(record.comm_violations.empty());
}

TEST_CASE("messages respect the graph and privacy") {
  auto config = pd_config();
  config.comm = CommConfig::complete(2, 1, CommConfig::Scheduling::Simultaneous);
  config.comm.graph[0] = {};  // player 0 may not message anyone

  std::array<std::unique_ptr<Backend>, 2> backends;
  backends[0] = std::make_unique<FixedScriptBackend>(std::vector<std::string>{
      "thinking", "TO 1: forbidden whisper", "ACTION: Cooperate", "reflecting"});
  backends[1] = std::make_unique<FixedScriptBackend>(std::vector<std::string>{
      "thinking", "TO 0: permitted", "ACTION: Cooperate", "reflecting"});

  World world(config, std::move(backends));
  const auto record = world.run_iteration();

  REQUIRE(record.comm_violations.size() == 1);
  CHECK(record.comm_violations[0].sender == 0);
  CHECK(record.comm_violations[0].recipient == 1);
  CHECK_FALSE(window_contains(world.window(1), "forbidden whisper"));
  CHECK(window_contains(world.window(0), "FROM Player 1: permitted"));
  // The sender still keeps its own attempt in its generated segment.
  CHECK(window_contains(world.window(0), "TO 1: forbidden whisper"));
}

TEST_CASE("sequential speakers see earlier messages in the same round") {
  auto config = pd_config();
  config.comm = CommConfig::complete(2, 1, CommConfig::Scheduling::Sequential);
  config.comm.order = {0, 1};

  std::array<std::unique_ptr<Backend>, 2> backends;
  backends[0] = std::make_unique<FixedScriptBackend>(std::vector<std::string>{
      "thinking", "TO 1: opening offer", "ACTION: Cooperate", "reflecting"});
  backends[1] = std::make_unique<FixedScriptBackend>(std::vector<std::string>{
      "thinking", "TO 0: counter offer", "ACTION: Cooperate", "reflecting"});

  World world(config, std::move(backends));
  world.run_iteration();

  // Player 1's window held player 0's message before player 1 spoke: the
  // received segment must precede player 1's own generated comm segment.
  const auto& segments = world.window(1).segments();
  int received_at = -1, spoke_at = -1;
  for (int s = 0; s < static_cast<int>(segments.size()); ++s) {
    if (segments[s].stage != StageTag::Comm) continue;
    if (!segments[s].generated && segments[s].author == SegmentAuthor::player_id(0)) {
      received_at = s;
    }
    if (segments[s].generated) spoke_at = s;
  }
  REQUIRE(received_at >= 0);
  REQUIRE(spoke_at >= 0);
  CHECK(received_at < spoke_at);
}

TEST_CASE("stage ranks never decrease within an epoch") {
  auto config = pd_config();
  config.comm = CommConfig::complete(2, 1, CommConfig::Scheduling::Simultaneous);
  config.num_iterations = 3;
  config.memory_mode = MemoryMode::Cumulative;
  World world(config, scripted_pair(ScriptedStrategy::tit_for_tat(),
                                    ScriptedStrategy::grim_trigger()));
  world.run_all();

  for (int i = 0; i < 2; ++i) {
    int last_epoch = -1;
    int last_rank = -1;
    for (const auto& segment : world.window(i).segments()) {
      if (segment.iteration != last_epoch) {
        REQUIRE(segment.iteration > last_epoch);
        last_epoch = segment.iteration;
        last_rank = -1;
      }
      REQUIRE(stage_rank(segment.stage) >= last_rank);
      last_rank = stage_rank(segment.stage);
    }
  }
}

TEST_CASE("tit for tat against grim trigger cooperates throughout") {
  auto config = pd_config();
  config.num_iterations = 5;
  config.memory_mode = MemoryMode::Cumulative;
  World world(config, scripted_pair(ScriptedStrategy::tit_for_tat(),
                                    ScriptedStrategy::grim_trigger()));
  const auto records = world.run_all();
  REQUIRE(records.size() == 5);
  for (const auto& record : records) {
    CHECK(record.joint == JointAction{0, 0});
    CHECK(record.payoffs[0] == 2.0);
    CHECK(record.payoffs[1] == 2.0);
  }
}

TEST_CASE("tit for tat punishes a defector one iteration later") {
  auto config = pd_config();
  config.num_iterations = 3;
  config.memory_mode = MemoryMode::Cumulative;
  World world(config, scripted_pair(ScriptedStrategy::always(1),
                                    ScriptedStrategy::tit_for_tat()));
  const auto records = world.run_all();
  CHECK(records[0].joint == JointAction{1, 0});
  CHECK(records[1].joint == JointAction{1, 1});
  CHECK(records[2].joint == JointAction{1, 1});
}

TEST_CASE("identical seeds reproduce byte-identical transcripts") {
  auto config = pd_config();
  config.num_iterations = 4;
  config.memory_mode = MemoryMode::RagRecall;
  config.comm = CommConfig::complete(2, 1, CommConfig::Scheduling::Simultaneous);
  config.seed = 99;

  auto make = [&] {
    return World(config, scripted_pair(ScriptedStrategy::uniform_random(5),
                                       ScriptedStrategy::mixed({0.4, 0.6}, 9)));
  };
  auto a = make();
  auto b = make();
  const auto ra = a.run_all();
  const auto rb = b.run_all();

  for (int i = 0; i < 2; ++i) {
    CHECK(a.window(i).render() == b.window(i).render());
  }
  REQUIRE(ra.size() == rb.size());
  for (std::size_t k = 0; k < ra.size(); ++k) {
    CHECK(ra[k].joint == rb[k].joint);
    CHECK(ra[k].payoffs == rb[k].payoffs);
    CHECK(ra[k].window_tokens == rb[k].window_tokens);
    CHECK(ra[k].summaries == rb[k].summaries);
  }
}

TEST_CASE("memory modes shape token growth") {
  auto base = pd_config();
  base.num_iterations = 5;
  base.comm = CommConfig::complete(2, 1, CommConfig::Scheduling::Simultaneous);

  auto run_mode = [&](MemoryMode mode) {
    auto config = base;
    config.memory_mode = mode;
    World world(config, scripted_pair(ScriptedStrategy::always(1),
                                      ScriptedStrategy::always(1)));
    return world.run_all();
  };

  const auto reflex = run_mode(MemoryMode::Reflex);
  const auto cumulative = run_mode(MemoryMode::Cumulative);
  const auto recall = run_mode(MemoryMode::RagRecall);

  for (std::size_t k = 1; k < reflex.size(); ++k) {
    CHECK(reflex[k].window_tokens == reflex[0].window_tokens);
    CHECK(cumulative[k].window_tokens[0] > cumulative[k - 1].window_tokens[0]);
    CHECK(cumulative[k].window_tokens[1] > cumulative[k - 1].window_tokens[1]);
  }

  // Recall windows grow until the retrieval budget saturates, then plateau.
  CHECK(recall[3].window_tokens == recall[4].window_tokens);
  CHECK(recall[4].window_tokens[0] < cumulative[4].window_tokens[0]);
  CHECK(recall[4].window_tokens[0] > reflex[4].window_tokens[0]);
}

TEST_CASE("recall mode stores summaries and surfaces them") {
  auto config = pd_config();
  config.num_iterations = 3;
  config.memory_mode = MemoryMode::RagRecall;
  World world(config, scripted_pair(ScriptedStrategy::always(0),
                                    ScriptedStrategy::always(1)));
  const auto records = world.run_all();

  for (const auto& record : records) {
    CHECK(record.summaries[0].find("SUMMARY iteration=") == 0);
    CHECK(record.summaries[0].find("own=Cooperate") != std::string::npos);
    CHECK(record.summaries[0].find("opponent=Defect") != std::string::npos);
    CHECK(record.summaries[1].find("own=Defect") != std::string::npos);
  }
  CHECK(world.memory().partition_size(0, 0) == 3);
  CHECK(world.memory().partition_size(1, 0) == 3);

  // Iteration 0 has no memories yet; later iterations do.
  CHECK(records[0].new_segments[0][0].text.find("# Memory") == std::string::npos);
  CHECK(records[1].new_segments[0][0].text.find("# Memory") != std::string::npos);
  CHECK(records[1].new_segments[0][0].text.find("SUMMARY iteration=0") !=
        std::string::npos);
}

TEST_CASE("full transcript mode stores chunks of the whole iteration") {
  auto config = pd_config();
  config.num_iterations = 2;
  config.memory_mode = MemoryMode::RagFull;
  World world(config, scripted_pair(ScriptedStrategy::always(0),
                                    ScriptedStrategy::always(0)));
  world.run_all();
  CHECK(world.memory().partition_size(0, 0) > 2);
  // No recall stage in full mode: nothing was asked at Recall.
  for (const auto& segment : world.window(0).segments()) {
    CHECK(segment.stage != StageTag::Recall);
  }
}

TEST_CASE("parse failures retry once then fall back to a forfeit") {
  auto config = pd_config();
  std::array<std::unique_ptr<Backend>, 2> backends;
  backends[0] = std::make_unique<FixedScriptBackend>(std::vector<std::string>{
      "thinking", "mumble", "ACTION: Defect", "reflecting"});
  backends[1] = std::make_unique<FixedScriptBackend>(std::vector<std::string>{
      "thinking", "mumble", "more mumble", "reflecting"});

  World world(config, std::move(backends));
  const auto record = world.run_iteration();

  // Player 0 recovered on the retry.
  CHECK(record.parse_ok[0]);
  CHECK_FALSE(record.forfeited[0]);
  // Player 1 never parsed: forfeit resolves to action index 0.
  CHECK_FALSE(record.parse_ok[1]);
  CHECK(record.forfeited[1]);
  CHECK(record.joint == JointAction{1, 0});
  CHECK(window_contains(world.window(0), "could not be parsed"));
}

TEST_CASE("backend exhaustion surfaces as a backend failure") {
  auto config = pd_config();
  std::array<std::unique_ptr<Backend>, 2> backends;
  backends[0] = std::make_unique<FixedScriptBackend>(std::vector<std::string>{"only"});
  backends[1] = std::make_unique<FixedScriptBackend>(std::vector<std::string>{
      "thinking", "ACTION: Cooperate", "reflecting"});
  World world(config, std::move(backends));
  CHECK_THROWS_AS(world.run_iteration(), BackendFailure);
}

TEST_CASE("war of attrition plays periods with reflections until resolution") {
  WorldConfig config;
  config.game.kind = GameSpec::Kind::WoA;

  std::array<std::unique_ptr<Backend>, 2> backends;
  backends[0] = std::make_unique<ScriptedBackend>(ScriptedStrategy::woa_threshold(2),
                                                  std::vector<std::string>{});
  backends[1] = std::make_unique<ScriptedBackend>(ScriptedStrategy::woa_threshold(5),
                                                  std::vector<std::string>{});

  World world(config, std::move(backends));
  const auto record = world.run_iteration();

  REQUIRE(record.woa.has_value());
  CHECK(record.woa->period == 2);
  CHECK(record.woa->cls == WoAOutcomeClass::AsymmetricResolution);
  CHECK(record.payoffs[0] == -3.0);
  CHECK(record.payoffs[1] == 2.0);
  REQUIRE(record.woa_decisions.size() == 2);
  CHECK(record.woa_decisions[0] ==
        std::array<WoADecision, 2>{WoADecision::Continue, WoADecision::Continue});
  CHECK(record.woa_decisions[1] ==
        std::array<WoADecision, 2>{WoADecision::Surrender, WoADecision::Continue});

  // One reflection per period per player.
  for (int i = 0; i < 2; ++i) {
    CHECK(count_generated(record.new_segments[i], StageTag::Reflection) == 2);
  }
  CHECK(window_contains(world.window(0), "RESULT: asymmetric_resolution at period 2"));
}

TEST_CASE("mechanism rules surface in rendered system prompts") {
  auto config = pd_config();
  config.num_iterations = 2;
  World world(config, scripted_pair(ScriptedStrategy::always(0),
                                    ScriptedStrategy::always(0)));
  world.prompt_spec(0).mechanism_rules = "A tax of 1 applies to mutual defection.";
  world.prompt_spec(1).mechanism_rules = "A tax of 1 applies to mutual defection.";

  const auto record = world.run_iteration();
  CHECK(record.new_segments[0][0].text.find("# Mechanism Rules") != std::string::npos);
  CHECK(record.new_segments[0][0].text.find("tax of 1") != std::string::npos);
}

TEST_CASE("cumulative mode announces rule changes as system updates") {
  auto config = pd_config();
  config.num_iterations = 3;
  config.memory_mode = MemoryMode::Cumulative;
  World world(config, scripted_pair(ScriptedStrategy::always(0),
                                    ScriptedStrategy::always(0)));

  world.run_iteration();
  world.prompt_spec(0).mechanism_rules = "New rule: defection is taxed.";
  world.prompt_spec(1).mechanism_rules = "New rule: defection is taxed.";
  const auto second = world.run_iteration();
  const auto third = world.run_iteration();

  CHECK(count_stage(second.new_segments[0], StageTag::System) == 1);
  CHECK(second.new_segments[0][0].text.find("SYSTEM UPDATE") != std::string::npos);
  CHECK(second.new_segments[0][0].text.find("defection is taxed") != std::string::npos);
  // No repeated announcement once the rules are stable.
  CHECK(count_stage(third.new_segments[0], StageTag::System) == 0);
}

TEST_CASE("comm config changes take effect at the next iteration") {
  auto config = pd_config();
  config.num_iterations = 2;
  config.comm = CommConfig::complete(2, 1, CommConfig::Scheduling::Simultaneous);
  World world(config, scripted_pair(ScriptedStrategy::always(0),
                                    ScriptedStrategy::always(0)));

  const auto first = world.run_iteration();
  CHECK(count_stage(first.new_segments[0], StageTag::Comm) > 0);

  world.comm().rounds = 0;
  const auto second = world.run_iteration();
  CHECK(count_stage(second.new_segments[0], StageTag::Comm) == 0);
}

TEST_CASE("world config validation") {
  auto config = pd_config();
  config.num_iterations = 0;
  CHECK_THROWS_AS(WorldConfig{config}.validate(), ConfigInvalid);

  config = pd_config();
  config.chunk_max_tokens = 4;
  config.chunk_overlap_tokens = 4;
  CHECK_THROWS_AS(config.validate(), ConfigInvalid);

  config = pd_config();
  config.embed_dim = 0;
  CHECK_THROWS_AS(config.validate(), ConfigInvalid);

  config = pd_config();
  std::array<std::unique_ptr<Backend>, 2> backends;
  backends[0] = std::make_unique<FixedScriptBackend>(std::vector<std::string>{"x"});
  CHECK_THROWS_AS(World(config, std::move(backends)), ConfigInvalid);
}
