#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mock_endpoint.hpp"
#include "parley/agents.hpp"
#include "parley/games.hpp"
#include "parley/protocol.hpp"

using namespace parley;

namespace {

const std::vector<std::string> kPdLabels = {"Cooperate", "Defect"};

ContextWindow window_with_outcomes(const std::vector<OutcomeNote>& notes) {
  ContextWindow window(0);
  window.append(StageTag::System, SegmentAuthor::designer(), "You play a matrix game.",
                false, 0);
  int iteration = 0;
  for (const auto& note : notes) {
    window.append(StageTag::Reflection, SegmentAuthor::environment(),
                  format_outcome_note(note), false, iteration++);
  }
  return window;
}

}  // namespace

TEST_CASE("tit for tat opens with cooperation and then mirrors") {
  ScriptedBackend agent(ScriptedStrategy::tit_for_tat(), kPdLabels);

  const auto empty = window_with_outcomes({});
  CHECK(agent.respond(empty, StageTag::Action) == "ACTION: Cooperate");

  const auto betrayed =
      window_with_outcomes({OutcomeNote{"Cooperate", "Defect", 0.0}});
  CHECK(agent.respond(betrayed, StageTag::Action) == "ACTION: Defect");

  const auto forgiven = window_with_outcomes({
      OutcomeNote{"Cooperate", "Defect", 0.0},
      OutcomeNote{"Defect", "Cooperate", 3.0},
  });
  CHECK(agent.respond(forgiven, StageTag::Action) == "ACTION: Cooperate");
}

TEST_CASE("grim trigger never forgives") {
  ScriptedBackend agent(ScriptedStrategy::grim_trigger(), kPdLabels);

  CHECK(agent.respond(window_with_outcomes({}), StageTag::Action) ==
        "ACTION: Cooperate");

  const auto history = window_with_outcomes({
      OutcomeNote{"Cooperate", "Cooperate", 2.0},
      OutcomeNote{"Cooperate", "Defect", 0.0},
      OutcomeNote{"Defect", "Cooperate", 3.0},
      OutcomeNote{"Defect", "Cooperate", 3.0},
  });
  CHECK(agent.respond(history, StageTag::Action) == "ACTION: Defect");
}

TEST_CASE("tit for tat versus grim trigger stays cooperative") {
  const auto game = make_classic_game(GameKind::PrisonersDilemma, {});
  ScriptedBackend tft(ScriptedStrategy::tit_for_tat(), kPdLabels);
  ScriptedBackend grim(ScriptedStrategy::grim_trigger(), kPdLabels);

  ContextWindow w0(0);
  ContextWindow w1(1);
  w0.append(StageTag::System, SegmentAuthor::designer(), "play", false, 0);
  w1.append(StageTag::System, SegmentAuthor::designer(), "play", false, 0);

  const auto rules = ParseRules::for_game(game);
  for (int iteration = 0; iteration < 5; ++iteration) {
    const auto a0 = parse_action(tft.respond(w0, StageTag::Action), rules);
    const auto a1 = parse_action(grim.respond(w1, StageTag::Action), rules);
    CHECK(a0.label == "Cooperate");
    CHECK(a1.label == "Cooperate");

    const JointAction joint{game.action_index(kRow, a0.label).value(),
                            game.action_index(kCol, a1.label).value()};
    const auto pay = game.payoff(joint);
    w0.append(StageTag::Reflection, SegmentAuthor::environment(),
              format_outcome_note({a0.label, a1.label, pay[kRow]}), false, iteration);
    w1.append(StageTag::Reflection, SegmentAuthor::environment(),
              format_outcome_note({a1.label, a0.label, pay[kCol]}), false, iteration);
  }
}

TEST_CASE("always action and stage templates") {
  ScriptedBackend agent(ScriptedStrategy::always(1), kPdLabels);
  ContextWindow window(0);
  window.append(StageTag::System, SegmentAuthor::designer(), "play", false, 0);

  CHECK(agent.respond(window, StageTag::Action) == "ACTION: Defect");
  CHECK(agent.respond(window, StageTag::Comm) == "PASS");
  CHECK_FALSE(agent.respond(window, StageTag::Thinking).empty());
  CHECK_FALSE(agent.respond(window, StageTag::Reflection).empty());
  CHECK_FALSE(agent.respond(window, StageTag::Recall).empty());
  CHECK_THROWS_AS(agent.respond(window, StageTag::System), ConfigInvalid);

  // Responding never mutates the window.
  CHECK(window.segments().size() == 1);

  CHECK_THROWS_AS(ScriptedBackend(ScriptedStrategy::always(7), kPdLabels),
                  IndexOutOfRange);
  CHECK_THROWS_AS(ScriptedBackend(ScriptedStrategy::tit_for_tat(), {}), ConfigInvalid);
}

TEST_CASE("uniform random is deterministic under a seed") {
  ScriptedBackend a(ScriptedStrategy::uniform_random(42), kPdLabels);
  ScriptedBackend b(ScriptedStrategy::uniform_random(42), kPdLabels);
  ScriptedBackend c(ScriptedStrategy::uniform_random(43), kPdLabels);
  ContextWindow window(0);
  window.append(StageTag::System, SegmentAuthor::designer(), "play", false, 0);

  std::vector<std::string> seq_a, seq_b, seq_c;
  for (int i = 0; i < 100; ++i) {
    seq_a.push_back(a.respond(window, StageTag::Action));
    seq_b.push_back(b.respond(window, StageTag::Action));
    seq_c.push_back(c.respond(window, StageTag::Action));
  }
  CHECK(seq_a == seq_b);
  CHECK(seq_a != seq_c);
}

TEST_CASE("mixed sampler frequencies match the distribution") {
  const std::vector<double> probs = {0.3, 0.7};
  ScriptedBackend agent(ScriptedStrategy::mixed(probs, 7), kPdLabels);
  ContextWindow window(0);
  window.append(StageTag::System, SegmentAuthor::designer(), "play", false, 0);

  std::map<std::string, int> counts;
  const int draws = 10000;
  for (int i = 0; i < draws; ++i) {
    ++counts[agent.respond(window, StageTag::Action)];
  }
  CHECK(std::abs(counts["ACTION: Cooperate"] / double(draws) - 0.3) <= 0.02);
  CHECK(std::abs(counts["ACTION: Defect"] / double(draws) - 0.7) <= 0.02);

  CHECK_THROWS_AS(ScriptedStrategy::mixed({0.5, 0.2}, 1).validate(), ConfigInvalid);
  CHECK_THROWS_AS(ScriptedStrategy::mixed({-0.1, 1.1}, 1).validate(), ConfigInvalid);
  CHECK_THROWS_AS(ScriptedBackend(ScriptedStrategy::mixed({1.0}, 1), kPdLabels),
                  ConfigInvalid);
}

TEST_CASE("threshold rule surrenders exactly at its trigger") {
  WoAState state;
  state.t = 1;
  CHECK(scripted_woa(ScriptedStrategy::woa_threshold(1), state) ==
        WoADecision::Surrender);
  CHECK(scripted_woa(ScriptedStrategy::woa_threshold(2), state) ==
        WoADecision::Continue);

  const auto never = ScriptedStrategy::woa_threshold(31);
  for (int t = 1; t <= 30; ++t) {
    state.t = t;
    CHECK(scripted_woa(never, state) == WoADecision::Continue);
  }

  CHECK_THROWS_AS(scripted_woa(ScriptedStrategy::tit_for_tat(), state), ConfigInvalid);
  CHECK_THROWS_AS(ScriptedStrategy::woa_threshold(0).validate(), ConfigInvalid);
}

TEST_CASE("two thresholds fight until the lower one yields") {
  WoAConfig config;
  config.validate();
  const auto eager = ScriptedStrategy::woa_threshold(2);
  const auto patient = ScriptedStrategy::woa_threshold(5);

  auto state = woa_initial_state(config);
  std::optional<WoAOutcome> outcome;
  while (!outcome) {
    const std::array<WoADecision, 2> decisions = {scripted_woa(eager, state),
                                                  scripted_woa(patient, state)};
    auto [next, done] = woa_step(state, config, decisions, 0);
    state = next;
    outcome = done;
  }
  CHECK(outcome->period == 2);
  CHECK(outcome->surrendered[kRow]);
  CHECK_FALSE(outcome->surrendered[kCol]);
  CHECK(outcome->cls == WoAOutcomeClass::AsymmetricResolution);
}

TEST_CASE("threshold backend reads the period from environment notes") {
  ScriptedBackend agent(ScriptedStrategy::woa_threshold(3), {});
  ContextWindow window(0);
  window.append(StageTag::System, SegmentAuthor::designer(), "war of attrition",
                false, 0);
  CHECK(agent.respond(window, StageTag::Action) == "ACTION: Continue");

  window.append(StageTag::Thinking, SegmentAuthor::environment(),
                format_period_note(2), false, 1);
  CHECK(current_period(window) == 2);
  CHECK(agent.respond(window, StageTag::Action) == "ACTION: Continue");

  window.append(StageTag::Thinking, SegmentAuthor::environment(),
                format_period_note(3), false, 2);
  CHECK(agent.respond(window, StageTag::Action) == "ACTION: Surrender");
}

TEST_CASE("outcome notes round trip through the context") {
  const OutcomeNote note{"Stag", "Hare", -1.5};
  const auto text = format_outcome_note(note);
  CHECK(text == "OUTCOME: you=Stag opponent=Hare payoff=-1.5");

  ContextWindow window(0);
  window.append(StageTag::System, SegmentAuthor::designer(), "play", false, 0);
  window.append(StageTag::Reflection, SegmentAuthor::environment(), text, false, 0);
  // Player-authored text mentioning outcomes is not treated as ground truth.
  window.append(StageTag::Reflection, SegmentAuthor::player_id(0),
                "OUTCOME: you=Hare opponent=Hare payoff=9", true, 0);

  const auto notes = parse_outcome_notes(window);
  REQUIRE(notes.size() == 1);
  CHECK(notes[0] == note);
}

TEST_CASE("fixed scripts replay and then run dry") {
  FixedScriptBackend backend({"first", "second"});
  ContextWindow window(0);
  CHECK(backend.remaining() == 2);
  CHECK(backend.respond(window, StageTag::Thinking) == "first");
  CHECK(backend.respond(window, StageTag::Action) == "second");
  CHECK(backend.remaining() == 0);
  CHECK_THROWS_AS(backend.respond(window, StageTag::Action), ExhaustedScript);
}

TEST_CASE("window maps to a chat transcript with merged roles") {
  ContextWindow window(0);
  window.append(StageTag::System, SegmentAuthor::designer(), "Be player zero.",
                false, 0);
  window.append(StageTag::Thinking, SegmentAuthor::player_id(0), "I ponder.", true, 0);
  window.append(StageTag::Comm, SegmentAuthor::player_id(1), "FROM player_1: hi",
                false, 0);
  window.append(StageTag::Comm, SegmentAuthor::environment(), "Respond now.", false, 0);

  const auto turns = window_to_transcript(window, false);
  REQUIRE(turns.size() == 3);
  CHECK(turns[0].role == "system");
  CHECK(turns[1].role == "assistant");
  CHECK(turns[2].role == "user");
  CHECK(turns[2].content == "FROM player_1: hi\n\nRespond now.");

  const auto folded = window_to_transcript(window, true);
  REQUIRE(folded.size() == 3);
  CHECK(folded[0].role == "user");
  CHECK(folded[0].content == "Be player zero.");
  CHECK(folded[1].role == "assistant");
  CHECK(folded[2].role == "user");

  // Folding a transcript that opens with system+user merges them.
  const auto merged = fold_system_turns(
      {{"system", "You are careful."}, {"user", "Begin."}, {"assistant", "ok"}});
  REQUIRE(merged.size() == 2);
  CHECK(merged[0].role == "user");
  CHECK(merged[0].content == "You are careful.\n\nBegin.");
  for (const auto& turn : merged) CHECK(turn.role != "system");
}

TEST_CASE("chat requests round trip through a mock endpoint") {
  mock::Endpoint endpoint;
  endpoint.push_reply(200, mock::Endpoint::completion_body("ACTION: Cooperate"));

  RemoteSpec spec;
  spec.endpoint_url = endpoint.url("/v1/chat/completions");
  spec.model_name = "test-model";
  spec.temperature = 0.0;
  spec.retry_base_delay_seconds = 0.0;
  spec.api_key = "sekrit";

  const auto reply = chat_request(spec, {{"system", "be brief"}, {"user", "act"}});
  CHECK(reply == "ACTION: Cooperate");

  const auto seen = endpoint.requests();
  REQUIRE(seen.size() == 1);
  CHECK(seen[0].path == "/v1/chat/completions");
  CHECK(seen[0].get_header_value("Authorization") == "Bearer sekrit");

  const auto body = nlohmann::json::parse(seen[0].body);
  CHECK(body["model"] == "test-model");
  CHECK(body["temperature"] == 0.0);
  REQUIRE(body["messages"].size() == 2);
  CHECK(body["messages"][0]["role"] == "system");
  CHECK(body["messages"][1]["content"] == "act");
}

TEST_CASE("rate limits retry and then succeed") {
  mock::Endpoint endpoint;
  endpoint.push_reply(429, "slow down");
  endpoint.push_reply(429, "slow down");
  endpoint.push_reply(200, mock::Endpoint::completion_body("fine"));

  RemoteSpec spec;
  spec.endpoint_url = endpoint.url("/v1/chat/completions");
  spec.model_name = "test-model";
  spec.max_retries = 3;
  spec.retry_base_delay_seconds = 0.0;

  CHECK(chat_request(spec, {{"user", "hello"}}) == "fine");
  CHECK(endpoint.request_count() == 3);
}

TEST_CASE("client errors other than rate limits never retry") {
  mock::Endpoint endpoint;
  endpoint.push_reply(400, "bad request");

  RemoteSpec spec;
  spec.endpoint_url = endpoint.url("/v1/chat/completions");
  spec.model_name = "test-model";
  spec.max_retries = 5;
  spec.retry_base_delay_seconds = 0.0;

  try {
    chat_request(spec, {{"user", "hello"}});
    FAIL("expected HttpError");
  } catch (const HttpError& e) {
    CHECK(e.status() == 400);
  }
  CHECK(endpoint.request_count() == 1);
}

TEST_CASE("server errors exhaust retries then raise") {
  mock::Endpoint endpoint;
  for (int i = 0; i < 3; ++i) endpoint.push_reply(503, "down");

  RemoteSpec spec;
  spec.endpoint_url = endpoint.url("/v1/chat/completions");
  spec.model_name = "test-model";
  spec.max_retries = 2;
  spec.retry_base_delay_seconds = 0.0;

  try {
    chat_request(spec, {{"user", "hello"}});
    FAIL("expected HttpError");
  } catch (const HttpError& e) {
    CHECK(e.status() == 503);
  }
  CHECK(endpoint.request_count() == 3);
}

TEST_CASE("malformed completion bodies are rejected") {
  mock::Endpoint endpoint;
  endpoint.push_reply(200, "not json at all");
  endpoint.push_reply(200, R"({"choices":[]})");
  endpoint.push_reply(200, R"({"choices":[{"message":{}}]})");

  RemoteSpec spec;
  spec.endpoint_url = endpoint.url("/v1/chat/completions");
  spec.model_name = "test-model";
  spec.retry_base_delay_seconds = 0.0;

  for (int i = 0; i < 3; ++i) {
    CHECK_THROWS_AS(chat_request(spec, {{"user", "x"}}), MalformedResponse);
  }
}

TEST_CASE("no system role mode serializes zero system turns") {
  mock::Endpoint endpoint;
  endpoint.push_reply(200, mock::Endpoint::completion_body("ok"));

  RemoteSpec spec;
  spec.endpoint_url = endpoint.url("/v1/chat/completions");
  spec.model_name = "test-model";
  spec.no_system_role = true;
  spec.retry_base_delay_seconds = 0.0;

  chat_request(spec, {{"system", "rules"}, {"user", "go"}});
  const auto body = nlohmann::json::parse(endpoint.requests()[0].body);
  REQUIRE(body["messages"].size() == 1);
  CHECK(body["messages"][0]["role"] == "user");
  const std::string content = body["messages"][0]["content"];
  CHECK(content.find("rules") != std::string::npos);
  CHECK(content.find("go") != std::string::npos);
}

TEST_CASE("remote backend answers from a window") {
  mock::Endpoint endpoint;
  endpoint.push_reply(200, mock::Endpoint::completion_body("ACTION: Defect"));

  RemoteSpec spec;
  spec.endpoint_url = endpoint.url("/v1/chat/completions");
  spec.model_name = "test-model";
  spec.retry_base_delay_seconds = 0.0;

  RemoteBackend backend(spec);
  CHECK(backend.name() == "remote:test-model");

  ContextWindow window(0);
  window.append(StageTag::System, SegmentAuthor::designer(), "play", false, 0);
  window.append(StageTag::Thinking, SegmentAuthor::environment(), "Decide.", false, 0);
  CHECK(backend.respond(window, StageTag::Action) == "ACTION: Defect");
}

TEST_CASE("unreachable endpoints raise a timeout") {
  RemoteSpec spec;
  // Reserved TEST-NET address: nothing listens there.
  spec.endpoint_url = "http://127.0.0.1:1/v1/chat/completions";
  spec.model_name = "test-model";
  spec.max_retries = 1;
  spec.retry_base_delay_seconds = 0.0;
  spec.timeout_seconds = 0.25;

  CHECK_THROWS_AS(chat_request(spec, {{"user", "x"}}), Timeout);
}

TEST_CASE("backend factory builds each kind") {
  BackendSpec scripted;
  scripted.kind = BackendSpec::Kind::Scripted;
  scripted.strategy = ScriptedStrategy::tit_for_tat();
  const auto agent = make_backend(scripted, kPdLabels);
  CHECK(agent->name() == "scripted:tit_for_tat");

  BackendSpec fixed;
  fixed.kind = BackendSpec::Kind::FixedScript;
  fixed.script = {"one"};
  CHECK(make_backend(fixed)->name() == "fixed_script");

  BackendSpec remote;
  remote.kind = BackendSpec::Kind::Remote;
  remote.remote.endpoint_url = "http://127.0.0.1:9/v1/chat/completions";
  remote.remote.model_name = "m";
  CHECK(make_backend(remote)->name() == "remote:m");

  BackendSpec empty_script;
  empty_script.kind = BackendSpec::Kind::FixedScript;
  CHECK_THROWS_AS(make_backend(empty_script), ConfigInvalid);

  BackendSpec bad_remote;
  bad_remote.kind = BackendSpec::Kind::Remote;
  bad_remote.remote.model_name = "m";
  CHECK_THROWS_AS(make_backend(bad_remote), ConfigInvalid);

  BackendSpec bad_temp;
  bad_temp.kind = BackendSpec::Kind::Remote;
  bad_temp.remote.endpoint_url = "http://localhost/v1";
  bad_temp.remote.model_name = "m";
  bad_temp.remote.temperature = -0.5;
  CHECK_THROWS_AS(make_backend(bad_temp), ConfigInvalid);
}
