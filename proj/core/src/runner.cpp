#include "parley/runner.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <future>
#include <map>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "parley/alignment.hpp"
#include "parley/errors.hpp"
#include "parley/memory.hpp"
#include "parley/rng.hpp"

namespace parley {

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

std::uint64_t fnv1a64(std::string_view text) {
  std::uint64_t hash = 1469598103934665603ull;
  for (const char c : text) {
    hash ^= static_cast<unsigned char>(c);
    hash *= 1099511628211ull;
  }
  return hash;
}

std::string hex16(std::uint64_t value) {
  static const char* digits = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[static_cast<std::size_t>(i)] = digits[value & 0xf];
    value >>= 4;
  }
  return out;
}

int parse_int_value(const std::string& text, const std::string& what) {
  std::size_t used = 0;
  long long value = 0;
  try {
    value = std::stoll(text, &used);
  } catch (const std::exception&) {
    throw ConfigInvalid(what + " expects an integer, got '" + text + "'");
  }
  if (used != text.size()) {
    throw ConfigInvalid(what + " expects an integer, got '" + text + "'");
  }
  return static_cast<int>(value);
}

double parse_double_value(const std::string& text, const std::string& what) {
  if (text.empty()) throw ConfigInvalid(what + " expects a number");
  char* end = nullptr;
  const double value = std::strtod(text.c_str(), &end);
  if (end != text.c_str() + text.size()) {
    throw ConfigInvalid(what + " expects a number, got '" + text + "'");
  }
  return value;
}

// ---------------------------------------------------------------------------
// Config grammar
// ---------------------------------------------------------------------------

void check_keys(const json& obj, const std::set<std::string>& allowed,
                const std::string& where) {
  if (!obj.is_object()) throw ConfigInvalid(where + " must be an object");
  for (const auto& item : obj.items()) {
    if (!allowed.count(item.key())) {
      throw ConfigInvalid("unknown key '" + item.key() + "' in " + where);
    }
  }
}

json params_to_json(const PayoffParams& params) {
  return json{{"a", params.a}, {"b", params.b}, {"c", params.c}, {"d", params.d}};
}

PayoffParams params_from_json(const json& obj) {
  check_keys(obj, {"a", "b", "c", "d"}, "game.params");
  PayoffParams params;
  params.a = obj.value("a", params.a);
  params.b = obj.value("b", params.b);
  params.c = obj.value("c", params.c);
  params.d = obj.value("d", params.d);
  return params;
}

std::string to_string(PrizeReading reading) {
  return reading == PrizeReading::WinnerValue ? "winner_value" : "surrenderer_value";
}

json woa_to_json(const WoAConfig& woa) {
  json obj{{"value", woa.value},
           {"cost", woa.cost},
           {"gamma", woa.gamma},
           {"terminal_t", woa.terminal_t},
           {"prize_reading", to_string(woa.prize_reading)}};
  if (woa.evolving) {
    obj["evolving"] = json{{"state_dim", woa.evolving->state_dim},
                           {"transition_coeff", woa.evolving->transition_coeff},
                           {"noise_scale", woa.evolving->noise_scale},
                           {"cost_weights", woa.evolving->cost_weights}};
  }
  return obj;
}

WoAConfig woa_from_json(const json& obj) {
  check_keys(obj, {"value", "cost", "gamma", "terminal_t", "prize_reading", "evolving"},
             "game.woa");
  WoAConfig woa;
  if (obj.contains("value")) woa.value = obj.at("value").get<std::array<double, 2>>();
  if (obj.contains("cost")) woa.cost = obj.at("cost").get<std::array<double, 2>>();
  woa.gamma = obj.value("gamma", woa.gamma);
  woa.terminal_t = obj.value("terminal_t", woa.terminal_t);
  if (obj.contains("prize_reading")) {
    const auto name = obj.at("prize_reading").get<std::string>();
    if (name == "winner_value") {
      woa.prize_reading = PrizeReading::WinnerValue;
    } else if (name == "surrenderer_value") {
      woa.prize_reading = PrizeReading::SurrendererValue;
    } else {
      throw ConfigInvalid("unknown prize reading '" + name + "'");
    }
  }
  if (obj.contains("evolving")) {
    const auto& ev = obj.at("evolving");
    check_keys(ev, {"state_dim", "transition_coeff", "noise_scale", "cost_weights"},
               "game.woa.evolving");
    EvolvingSpec spec;
    spec.state_dim = ev.value("state_dim", spec.state_dim);
    spec.transition_coeff = ev.value("transition_coeff", spec.transition_coeff);
    spec.noise_scale = ev.value("noise_scale", spec.noise_scale);
    if (ev.contains("cost_weights")) {
      spec.cost_weights =
          ev.at("cost_weights").get<std::array<std::vector<double>, 2>>();
    }
    woa.evolving = std::move(spec);
  }
  return woa;
}

json game_to_json(const GameSpec& game) {
  if (game.kind == GameSpec::Kind::Matrix) {
    return json{{"kind", "matrix"},
                {"matrix", to_string(game.matrix)},
                {"params", params_to_json(game.params)}};
  }
  return json{{"kind", "woa"}, {"woa", woa_to_json(game.woa)}};
}

GameSpec game_from_json(const json& obj) {
  check_keys(obj, {"kind", "matrix", "params", "woa"}, "game");
  GameSpec game;
  const auto kind = obj.value("kind", std::string("matrix"));
  if (kind == "matrix") {
    game.kind = GameSpec::Kind::Matrix;
    if (obj.contains("woa")) {
      throw ConfigInvalid("matrix game cannot carry a woa block");
    }
    if (obj.contains("matrix")) {
      const auto name = obj.at("matrix").get<std::string>();
      const auto matrix = game_kind_from_string(name);
      if (!matrix) throw ConfigInvalid("unknown matrix game '" + name + "'");
      game.matrix = *matrix;
    }
    if (obj.contains("params")) game.params = params_from_json(obj.at("params"));
  } else if (kind == "woa") {
    game.kind = GameSpec::Kind::WoA;
    if (obj.contains("matrix") || obj.contains("params")) {
      throw ConfigInvalid("woa game cannot carry matrix keys");
    }
    if (obj.contains("woa")) game.woa = woa_from_json(obj.at("woa"));
  } else {
    throw ConfigInvalid("unknown game kind '" + kind + "'");
  }
  return game;
}

json comm_to_json(const CommConfig& comm) {
  return json{{"rounds", comm.rounds},
              {"scheduling", comm.scheduling == CommConfig::Scheduling::Simultaneous
                                 ? "simultaneous"
                                 : "sequential"},
              {"order", comm.order},
              {"graph", comm.graph}};
}

CommConfig comm_from_json(const json& obj) {
  check_keys(obj, {"rounds", "scheduling", "order", "graph"}, "comm");
  CommConfig comm = CommConfig::disabled(kNumPlayers);
  comm.rounds = obj.value("rounds", comm.rounds);
  if (obj.contains("scheduling")) {
    const auto name = obj.at("scheduling").get<std::string>();
    if (name == "simultaneous") {
      comm.scheduling = CommConfig::Scheduling::Simultaneous;
    } else if (name == "sequential") {
      comm.scheduling = CommConfig::Scheduling::Sequential;
    } else {
      throw ConfigInvalid("unknown comm scheduling '" + name + "'");
    }
  }
  if (obj.contains("order")) comm.order = obj.at("order").get<std::vector<int>>();
  if (obj.contains("graph")) {
    const auto& graph = obj.at("graph");
    if (graph.is_string()) {
      const auto name = graph.get<std::string>();
      if (name == "complete") {
        comm.graph = CommConfig::complete(kNumPlayers, std::max(comm.rounds, 0)).graph;
      } else if (name == "none") {
        comm.graph = CommConfig::disabled(kNumPlayers).graph;
      } else {
        throw ConfigInvalid("unknown comm graph '" + name + "'");
      }
    } else {
      comm.graph = graph.get<std::vector<std::vector<int>>>();
    }
  }
  return comm;
}

json strategy_to_json(const ScriptedStrategy& strategy) {
  json obj{{"kind", to_string(strategy.kind)}};
  switch (strategy.kind) {
    case ScriptedStrategy::Kind::AlwaysAction:
      obj["action"] = strategy.action_index;
      break;
    case ScriptedStrategy::Kind::UniformRandom:
      obj["seed"] = strategy.seed;
      break;
    case ScriptedStrategy::Kind::MixedSampler:
      obj["probs"] = strategy.probs;
      obj["seed"] = strategy.seed;
      break;
    case ScriptedStrategy::Kind::WoAThreshold:
      obj["surrender_at_t"] = strategy.surrender_at_t;
      break;
    default:
      break;
  }
  return obj;
}

ScriptedStrategy strategy_from_json(const json& obj) {
  if (!obj.is_object() || !obj.contains("kind")) {
    throw ConfigInvalid("strategy needs a kind");
  }
  const auto name = obj.at("kind").get<std::string>();
  ScriptedStrategy strategy;
  if (name == "always_action") {
    check_keys(obj, {"kind", "action"}, "strategy");
    strategy = ScriptedStrategy::always(obj.value("action", 0));
  } else if (name == "tit_for_tat") {
    check_keys(obj, {"kind"}, "strategy");
    strategy = ScriptedStrategy::tit_for_tat();
  } else if (name == "grim_trigger") {
    check_keys(obj, {"kind"}, "strategy");
    strategy = ScriptedStrategy::grim_trigger();
  } else if (name == "uniform_random") {
    check_keys(obj, {"kind", "seed"}, "strategy");
    strategy = ScriptedStrategy::uniform_random(obj.value("seed", 0ull));
  } else if (name == "mixed_sampler") {
    check_keys(obj, {"kind", "probs", "seed"}, "strategy");
    strategy = ScriptedStrategy::mixed(
        obj.value("probs", std::vector<double>{}), obj.value("seed", 0ull));
  } else if (name == "woa_threshold") {
    check_keys(obj, {"kind", "surrender_at_t"}, "strategy");
    strategy = ScriptedStrategy::woa_threshold(obj.value("surrender_at_t", 1));
  } else {
    throw ConfigInvalid("unknown strategy kind '" + name + "'");
  }
  return strategy;
}

json remote_to_json(const RemoteSpec& remote) {
  return json{{"endpoint_url", remote.endpoint_url},
              {"model_name", remote.model_name},
              {"temperature", remote.temperature},
              {"max_tokens", remote.max_tokens},
              {"timeout_seconds", remote.timeout_seconds},
              {"max_retries", remote.max_retries},
              {"retry_base_delay_seconds", remote.retry_base_delay_seconds},
              {"no_system_role", remote.no_system_role},
              {"api_key", remote.api_key},
              {"max_in_flight", remote.max_in_flight}};
}

RemoteSpec remote_from_json(const json& obj) {
  check_keys(obj,
             {"endpoint_url", "model_name", "temperature", "max_tokens",
              "timeout_seconds", "max_retries", "retry_base_delay_seconds",
              "no_system_role", "api_key", "max_in_flight"},
             "remote backend");
  RemoteSpec remote;
  remote.endpoint_url = obj.value("endpoint_url", remote.endpoint_url);
  remote.model_name = obj.value("model_name", remote.model_name);
  remote.temperature = obj.value("temperature", remote.temperature);
  remote.max_tokens = obj.value("max_tokens", remote.max_tokens);
  remote.timeout_seconds = obj.value("timeout_seconds", remote.timeout_seconds);
  remote.max_retries = obj.value("max_retries", remote.max_retries);
  remote.retry_base_delay_seconds =
      obj.value("retry_base_delay_seconds", remote.retry_base_delay_seconds);
  remote.no_system_role = obj.value("no_system_role", remote.no_system_role);
  remote.api_key = obj.value("api_key", remote.api_key);
  remote.max_in_flight = obj.value("max_in_flight", remote.max_in_flight);
  return remote;
}

json backend_to_json(const BackendSpec& spec) {
  switch (spec.kind) {
    case BackendSpec::Kind::Scripted:
      return json{{"kind", "scripted"}, {"strategy", strategy_to_json(spec.strategy)}};
    case BackendSpec::Kind::FixedScript:
      return json{{"kind", "fixed_script"}, {"script", spec.script}};
    case BackendSpec::Kind::Remote:
      return json{{"kind", "remote"}, {"remote", remote_to_json(spec.remote)}};
  }
  throw ConfigInvalid("unknown backend kind");
}

BackendSpec backend_from_json(const json& obj, const std::string& where) {
  if (!obj.is_object()) throw ConfigInvalid(where + " must be an object");
  const auto kind = obj.value("kind", std::string("scripted"));
  BackendSpec spec;
  if (kind == "scripted") {
    check_keys(obj, {"kind", "strategy"}, where);
    spec.kind = BackendSpec::Kind::Scripted;
    if (obj.contains("strategy")) spec.strategy = strategy_from_json(obj.at("strategy"));
  } else if (kind == "fixed_script") {
    check_keys(obj, {"kind", "script"}, where);
    spec.kind = BackendSpec::Kind::FixedScript;
    spec.script = obj.value("script", std::vector<std::string>{});
  } else if (kind == "remote") {
    check_keys(obj, {"kind", "remote"}, where);
    spec.kind = BackendSpec::Kind::Remote;
    if (obj.contains("remote")) spec.remote = remote_from_json(obj.at("remote"));
  } else {
    throw ConfigInvalid("unknown backend kind '" + kind + "' in " + where);
  }
  return spec;
}

json constraints_to_json(const MechanismConstraints& constraints) {
  return json{{"max_rules_per_run", constraints.max_rules_per_run},
              {"max_rule_tokens", constraints.max_rule_tokens},
              {"min_rounds", constraints.min_rounds},
              {"max_rounds", constraints.max_rounds},
              {"graph_edits_allowed", constraints.graph_edits_allowed}};
}

MechanismConstraints constraints_from_json(const json& obj) {
  check_keys(obj,
             {"max_rules_per_run", "max_rule_tokens", "min_rounds", "max_rounds",
              "graph_edits_allowed"},
             "mechanism.constraints");
  MechanismConstraints constraints;
  constraints.max_rules_per_run =
      obj.value("max_rules_per_run", constraints.max_rules_per_run);
  constraints.max_rule_tokens = obj.value("max_rule_tokens", constraints.max_rule_tokens);
  constraints.min_rounds = obj.value("min_rounds", constraints.min_rounds);
  constraints.max_rounds = obj.value("max_rounds", constraints.max_rounds);
  constraints.graph_edits_allowed =
      obj.value("graph_edits_allowed", constraints.graph_edits_allowed);
  return constraints;
}

json memory_to_json(const ExperimentConfig& config) {
  json obj{{"mode", to_string(config.memory_mode)}};
  if (config.memory_mode != MemoryMode::Reflex) {
    obj["k_system"] = config.k_system;
    obj["k_action"] = config.k_action;
    obj["chunk_max_tokens"] = config.chunk_max_tokens;
    obj["chunk_overlap_tokens"] = config.chunk_overlap_tokens;
    obj["embed_dim"] = config.embed_dim;
  }
  return obj;
}

void memory_from_json(const json& obj, ExperimentConfig& config) {
  check_keys(obj,
             {"mode", "k_system", "k_action", "chunk_max_tokens",
              "chunk_overlap_tokens", "embed_dim"},
             "memory");
  if (obj.contains("mode")) {
    const auto name = obj.at("mode").get<std::string>();
    const auto mode = memory_mode_from_string(name);
    if (!mode) throw ConfigInvalid("unknown memory mode '" + name + "'");
    config.memory_mode = *mode;
  }
  if (config.memory_mode == MemoryMode::Reflex) {
    for (const char* knob : {"k_system", "k_action", "chunk_max_tokens",
                             "chunk_overlap_tokens", "embed_dim"}) {
      if (obj.contains(knob)) {
        throw ConfigInvalid(std::string("memory mode reflex forbids retrieval knob '") +
                            knob + "'");
      }
    }
    return;
  }
  config.k_system = obj.value("k_system", config.k_system);
  config.k_action = obj.value("k_action", config.k_action);
  config.chunk_max_tokens = obj.value("chunk_max_tokens", config.chunk_max_tokens);
  config.chunk_overlap_tokens =
      obj.value("chunk_overlap_tokens", config.chunk_overlap_tokens);
  config.embed_dim = obj.value("embed_dim", config.embed_dim);
}

json config_to_json(const ExperimentConfig& config) {
  json players = json::array();
  for (const auto& player : config.players) players.push_back(backend_to_json(player));

  json targets = json::array();
  for (const auto& target : config.targets) {
    targets.push_back(target ? json(to_string(*target)) : json(nullptr));
  }

  json mechanism{{"enabled", config.mechanism.enabled}};
  if (config.mechanism.enabled) {
    mechanism["designer"] = backend_to_json(config.mechanism.designer);
    mechanism["constraints"] = constraints_to_json(config.mechanism.constraints);
  }

  return json{{"name", config.name},
              {"seed", config.seed},
              {"worlds", config.worlds},
              {"iterations", config.iterations},
              {"game", game_to_json(config.game)},
              {"comm", comm_to_json(config.comm)},
              {"memory", memory_to_json(config)},
              {"mask_task_context", config.mask_task_context},
              {"players", players},
              {"targets", targets},
              {"guidance", json{config.guidance[0], config.guidance[1]}},
              {"mechanism", mechanism}};
}

ExperimentConfig config_from_json(const json& root) {
  check_keys(root,
             {"name", "seed", "worlds", "iterations", "output_dir", "game", "comm",
              "memory", "mask_task_context", "players", "targets", "guidance",
              "mechanism"},
             "config");
  ExperimentConfig config;
  config.name = root.value("name", config.name);
  config.seed = root.value("seed", config.seed);
  config.worlds = root.value("worlds", config.worlds);
  config.iterations = root.value("iterations", config.iterations);
  config.output_dir = root.value("output_dir", config.output_dir);
  if (root.contains("game")) config.game = game_from_json(root.at("game"));
  if (root.contains("comm")) config.comm = comm_from_json(root.at("comm"));
  if (root.contains("memory")) memory_from_json(root.at("memory"), config);
  config.mask_task_context = root.value("mask_task_context", config.mask_task_context);
  if (root.contains("players")) {
    const auto& players = root.at("players");
    if (!players.is_array() || players.size() != kNumPlayers) {
      throw ConfigInvalid("players must list exactly two backends");
    }
    for (int p = 0; p < kNumPlayers; ++p) {
      config.players[static_cast<std::size_t>(p)] = backend_from_json(
          players[static_cast<std::size_t>(p)], "players[" + std::to_string(p) + "]");
    }
  }
  if (root.contains("targets")) {
    const auto& targets = root.at("targets");
    if (!targets.is_array() || targets.size() != kNumPlayers) {
      throw ConfigInvalid("targets must list exactly two entries");
    }
    for (int p = 0; p < kNumPlayers; ++p) {
      const auto& entry = targets[static_cast<std::size_t>(p)];
      if (entry.is_null()) continue;
      const auto name = entry.get<std::string>();
      const auto target = solution_concept_from_string(name);
      if (!target) throw ConfigInvalid("unknown target concept '" + name + "'");
      config.targets[static_cast<std::size_t>(p)] = *target;
    }
  }
  if (root.contains("guidance")) {
    const auto& guidance = root.at("guidance");
    if (!guidance.is_array() || guidance.size() != kNumPlayers) {
      throw ConfigInvalid("guidance must list exactly two entries");
    }
    for (int p = 0; p < kNumPlayers; ++p) {
      config.guidance[static_cast<std::size_t>(p)] =
          guidance[static_cast<std::size_t>(p)].get<std::string>();
    }
  }
  if (root.contains("mechanism")) {
    const auto& mechanism = root.at("mechanism");
    check_keys(mechanism, {"enabled", "designer", "constraints"}, "mechanism");
    config.mechanism.enabled = mechanism.value("enabled", false);
    if (mechanism.contains("designer")) {
      config.mechanism.designer =
          backend_from_json(mechanism.at("designer"), "mechanism.designer");
    }
    if (mechanism.contains("constraints")) {
      config.mechanism.constraints = constraints_from_json(mechanism.at("constraints"));
    }
  }
  config.validate();
  return config;
}

// ---------------------------------------------------------------------------
// World execution
// ---------------------------------------------------------------------------

WorldConfig world_config_for(const ExperimentConfig& config, int world_id) {
  WorldConfig wc;
  wc.game = config.game;
  wc.num_iterations = config.iterations;
  wc.comm = config.comm;
  wc.memory_mode = config.memory_mode;
  wc.mask_task_context = config.mask_task_context;
  wc.targets = config.targets;
  wc.guidance = config.guidance;
  wc.k_system = config.k_system;
  wc.k_action = config.k_action;
  wc.chunk_max_tokens = config.chunk_max_tokens;
  wc.chunk_overlap_tokens = config.chunk_overlap_tokens;
  wc.embed_dim = config.embed_dim;
  wc.seed = mix_seed(config.seed, static_cast<std::uint64_t>(world_id));
  wc.world_id = world_id;
  return wc;
}

std::array<std::vector<std::string>, kNumPlayers> seat_labels(const GameSpec& game) {
  if (game.kind == GameSpec::Kind::Matrix) {
    const auto g = make_classic_game(game.matrix, game.params);
    return {g.action_labels(kRow), g.action_labels(kCol)};
  }
  const std::vector<std::string> woa{"Continue", "Surrender"};
  return {woa, woa};
}

// Sampling strategies get a per-world, per-seat salt so worlds explore
// independently while the whole batch stays a pure function of the config.
BackendSpec salt_spec(BackendSpec spec, std::uint64_t base_seed, int world_id, int seat) {
  if (spec.kind == BackendSpec::Kind::Scripted &&
      (spec.strategy.kind == ScriptedStrategy::Kind::UniformRandom ||
       spec.strategy.kind == ScriptedStrategy::Kind::MixedSampler)) {
    spec.strategy.seed = mix_seed(mix_seed(base_seed, spec.strategy.seed),
                                  static_cast<std::uint64_t>(2 * world_id + seat));
  }
  return spec;
}

// Lets several worlds drive one long-lived backend (remote endpoints cap
// their own in-flight requests, so sharing keeps the cap global).
class SharedBackend : public Backend {
 public:
  explicit SharedBackend(std::shared_ptr<Backend> inner) : inner_(std::move(inner)) {}

  std::string name() const override { return inner_->name(); }
  std::string respond(const ContextWindow& context, StageTag stage) override {
    return inner_->respond(context, stage);
  }

 private:
  std::shared_ptr<Backend> inner_;
};

struct WorldOutcome {
  int world_id = 0;
  std::vector<IterationRecord> records;
  std::vector<int> interventions;  // applied after each iteration
  std::vector<std::pair<int, std::string>> designer_turns;
  std::string error;
};

using BackendFactory =
    std::function<std::array<std::unique_ptr<Backend>, kNumPlayers>(int)>;
using DesignerFactory = std::function<std::unique_ptr<Designer>(int)>;

WorldOutcome execute_world(const ExperimentConfig& config, int world_id,
                           const BackendFactory& make_backends,
                           const DesignerFactory& make_designer) {
  WorldOutcome outcome;
  outcome.world_id = world_id;
  try {
    World world(world_config_for(config, world_id), make_backends(world_id));
    auto designer = make_designer(world_id);
    for (int it = 0; it < config.iterations; ++it) {
      auto record = world.run_iteration();
      int applied = 0;
      if (designer && it + 1 < config.iterations) {
        const auto report = designer->intervene(world);
        applied = static_cast<int>(report.applied.size());
        outcome.designer_turns.emplace_back(it, report.raw_response);
      }
      outcome.interventions.push_back(applied);
      outcome.records.push_back(std::move(record));
    }
  } catch (const Error& e) {
    outcome.records.clear();
    outcome.interventions.clear();
    outcome.designer_turns.clear();
    outcome.error = e.what();
  }
  return outcome;
}

std::vector<WorldOutcome> execute_worlds(const ExperimentConfig& config,
                                         const std::vector<int>& world_ids,
                                         const BackendFactory& make_backends,
                                         const DesignerFactory& make_designer) {
  std::vector<std::future<WorldOutcome>> futures;
  futures.reserve(world_ids.size());
  for (const int w : world_ids) {
    futures.push_back(std::async(std::launch::async, [&, w] {
      return execute_world(config, w, make_backends, make_designer);
    }));
  }
  std::vector<WorldOutcome> outcomes;
  outcomes.reserve(futures.size());
  for (auto& future : futures) outcomes.push_back(future.get());
  return outcomes;
}

// ---------------------------------------------------------------------------
// Aggregation
// ---------------------------------------------------------------------------

RunMetrics aggregate(const ExperimentConfig& config,
                     const std::vector<WorldOutcome>& outcomes) {
  RunMetrics metrics;
  metrics.config_digest = config_hash(config);

  for (const auto& outcome : outcomes) {
    if (!outcome.error.empty()) {
      metrics.failed_worlds.push_back(outcome.world_id);
      metrics.failures.push_back("world " + std::to_string(outcome.world_id) + ": " +
                                 outcome.error);
      continue;
    }
    for (std::size_t i = 0; i < outcome.records.size(); ++i) {
      const auto& record = outcome.records[i];
      IterationMetric metric;
      metric.world_id = outcome.world_id;
      metric.iteration = record.iteration;
      metric.joint = record.joint;
      metric.payoffs = record.payoffs;
      metric.window_tokens = record.window_tokens;
      metric.parse_ok = record.parse_ok;
      metric.interventions = outcome.interventions[i];
      metric.woa = record.woa;
      metrics.records.push_back(std::move(metric));
    }
  }

  const auto total = static_cast<double>(metrics.records.size());

  if (config.game.kind == GameSpec::Kind::Matrix) {
    const auto game = make_classic_game(config.game.matrix, config.game.params);
    for (int r = 0; r < game.num_actions(kRow); ++r) {
      for (int c = 0; c < game.num_actions(kCol); ++c) {
        FrequencyRow row;
        row.joint = game.action_label(kRow, r) + "|" + game.action_label(kCol, c);
        for (const auto& record : metrics.records) {
          if (record.joint == JointAction{r, c}) ++row.count;
        }
        row.frequency = total > 0 ? row.count / total : 0.0;
        metrics.joint_frequencies.push_back(std::move(row));
      }
    }

    std::vector<SolutionConcept> targets;
    for (const auto& target : config.targets) {
      if (target && std::find(targets.begin(), targets.end(), *target) == targets.end()) {
        targets.push_back(*target);
      }
    }
    if (!targets.empty() && total > 0) {
      int hits = 0;
      for (const auto& record : metrics.records) {
        const auto profile = MixedProfile::degenerate(game, record.joint);
        if (in_target_set(game, profile, targets)) ++hits;
      }
      metrics.p_target = hits / total;
    }
  } else {
    const char* classes[] = {"concession", "asymmetric_resolution", "mutual_surrender"};
    const WoAOutcomeClass kinds[] = {WoAOutcomeClass::Concession,
                                     WoAOutcomeClass::AsymmetricResolution,
                                     WoAOutcomeClass::MutualSurrender};
    for (int k = 0; k < 3; ++k) {
      for (int t = 1; t <= config.game.woa.terminal_t; ++t) {
        WoAHistogramRow row;
        row.outcome = classes[k];
        row.period = t;
        for (const auto& record : metrics.records) {
          if (record.woa && record.woa->cls == kinds[k] && record.woa->period == t) {
            ++row.count;
          }
        }
        metrics.woa_histogram.push_back(std::move(row));
      }
    }
  }

  if (total > 0) {
    double welfare = 0.0;
    for (const auto& record : metrics.records) {
      welfare += record.payoffs[0] + record.payoffs[1];
    }
    metrics.mean_social_welfare = welfare / total;
  }

  for (int it = 0; it < config.iterations; ++it) {
    TokenPoint point;
    point.iteration = it;
    int n = 0;
    for (const auto& record : metrics.records) {
      if (record.iteration != it) continue;
      point.mean_tokens[0] += record.window_tokens[0];
      point.mean_tokens[1] += record.window_tokens[1];
      ++n;
    }
    if (n == 0) continue;
    point.mean_tokens[0] /= n;
    point.mean_tokens[1] /= n;
    metrics.token_series.push_back(point);
  }

  return metrics;
}

// ---------------------------------------------------------------------------
// Artifacts
// ---------------------------------------------------------------------------

json metric_to_json(const IterationMetric& metric) {
  json obj{{"world", metric.world_id},
           {"iteration", metric.iteration},
           {"joint", json{{"row", metric.joint.row}, {"col", metric.joint.col}}},
           {"payoffs", metric.payoffs},
           {"window_tokens", metric.window_tokens},
           {"parse_ok", metric.parse_ok},
           {"interventions", metric.interventions}};
  if (metric.woa) {
    obj["woa"] = json{{"period", metric.woa->period},
                      {"class", to_string(metric.woa->cls)},
                      {"payoffs", metric.woa->payoffs},
                      {"surrendered", metric.woa->surrendered},
                      {"forced", metric.woa->forced}};
  }
  return obj;
}

json metrics_to_json(const RunMetrics& metrics) {
  json frequencies = json::array();
  for (const auto& row : metrics.joint_frequencies) {
    frequencies.push_back(json{{"joint", row.joint},
                               {"count", row.count},
                               {"frequency", row.frequency}});
  }
  json histogram = json::array();
  for (const auto& row : metrics.woa_histogram) {
    histogram.push_back(
        json{{"outcome", row.outcome}, {"period", row.period}, {"count", row.count}});
  }
  json series = json::array();
  for (const auto& point : metrics.token_series) {
    series.push_back(json{{"iteration", point.iteration},
                          {"p0_mean_tokens", point.mean_tokens[0]},
                          {"p1_mean_tokens", point.mean_tokens[1]}});
  }
  json records = json::array();
  for (const auto& metric : metrics.records) records.push_back(metric_to_json(metric));

  return json{{"config", metrics.config_digest},
              {"p_target", metrics.p_target},
              {"mean_social_welfare", metrics.mean_social_welfare},
              {"joint_frequencies", frequencies},
              {"woa_histogram", histogram},
              {"token_series", series},
              {"records", records},
              {"failed_worlds", metrics.failed_worlds},
              {"failures", metrics.failures}};
}

void write_text_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc | std::ios::binary);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out << text;
  if (!out) throw IoError("failed while writing '" + path.string() + "'");
}

void write_artifacts(const ExperimentConfig& config,
                     const std::vector<WorldOutcome>& outcomes, RunMetrics& metrics) {
  const fs::path run_dir =
      fs::path(config.output_dir) / (config.name + "-" + metrics.config_digest);
  std::error_code ec;
  fs::create_directories(run_dir, ec);
  if (ec) throw IoError("cannot create run directory '" + run_dir.string() + "'");

  const auto config_path = run_dir / "config.json";
  write_text_file(config_path, serialize_experiment_config(config) + "\n");
  metrics.artifacts.push_back(config_path.string());

  std::ostringstream transcripts;
  for (const auto& outcome : outcomes) {
    if (!outcome.error.empty()) continue;
    for (std::size_t i = 0; i < outcome.records.size(); ++i) {
      const auto& record = outcome.records[i];
      for (int p = 0; p < kNumPlayers; ++p) {
        for (const auto& segment : record.new_segments[static_cast<std::size_t>(p)]) {
          transcripts << json{{"world", outcome.world_id},
                              {"iteration", record.iteration},
                              {"player", p},
                              {"stage", to_string(segment.stage)},
                              {"author", segment.author.describe()},
                              {"round", segment.round},
                              {"generated", segment.generated},
                              {"env_private", segment.env_private},
                              {"text", segment.text}}
                                 .dump()
                      << "\n";
        }
      }
      for (const auto& [iteration, raw] : outcome.designer_turns) {
        if (iteration != record.iteration) continue;
        transcripts << json{{"world", outcome.world_id},
                            {"iteration", iteration},
                            {"player", -1},
                            {"stage", to_string(StageTag::Action)},
                            {"author", "designer"},
                            {"round", -1},
                            {"generated", true},
                            {"env_private", false},
                            {"text", raw}}
                               .dump()
                    << "\n";
      }
    }
  }
  const auto transcripts_path = run_dir / "transcripts.jsonl";
  write_text_file(transcripts_path, transcripts.str());
  metrics.artifacts.push_back(transcripts_path.string());

  const auto metrics_path = run_dir / "metrics.json";
  write_text_file(metrics_path, metrics_to_json(metrics).dump(2) + "\n");
  metrics.artifacts.push_back(metrics_path.string());

  for (auto& path : emit_plots(metrics, run_dir.string())) {
    metrics.artifacts.push_back(std::move(path));
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// Config surface
// ---------------------------------------------------------------------------

void ExperimentConfig::validate() const {
  if (name.empty()) throw ConfigInvalid("experiment name is empty");
  if (worlds < 1) throw ConfigInvalid("worlds must be at least 1");
  if (iterations < 1) throw ConfigInvalid("iterations must be at least 1");
  for (const auto& player : players) player.validate();
  if (mechanism.enabled) {
    mechanism.constraints.validate();
    mechanism.designer.validate();
  }
  // The per-world view enforces everything else (game, comm, knobs).
  world_config_for(*this, 0).validate();
}

ExperimentConfig parse_experiment_config(const std::string& json_text) {
  json root;
  try {
    root = json::parse(json_text);
  } catch (const json::exception& e) {
    throw ConfigInvalid(std::string("config is not valid JSON: ") + e.what());
  }
  try {
    return config_from_json(root);
  } catch (const json::exception& e) {
    throw ConfigInvalid(std::string("malformed config: ") + e.what());
  }
}

ExperimentConfig load_experiment_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "' for reading");
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse_experiment_config(buffer.str());
}

std::string serialize_experiment_config(const ExperimentConfig& config) {
  return config_to_json(config).dump(2);
}

std::string config_hash(const ExperimentConfig& config) {
  return hex16(fnv1a64(serialize_experiment_config(config)));
}

void apply_remote_overrides(ExperimentConfig& config, const std::string& endpoint_url,
                            const std::string& api_key) {
  const auto fill = [&](BackendSpec& spec) {
    if (spec.kind != BackendSpec::Kind::Remote) return;
    if (spec.remote.endpoint_url.empty()) spec.remote.endpoint_url = endpoint_url;
    if (spec.remote.api_key.empty()) spec.remote.api_key = api_key;
  };
  for (auto& player : config.players) fill(player);
  fill(config.mechanism.designer);
}

BackendSpec parse_backend_spec(const std::string& json_text) {
  json obj;
  try {
    obj = json::parse(json_text);
  } catch (const json::exception& e) {
    throw ConfigInvalid(std::string("player spec is not valid JSON: ") + e.what());
  }
  auto spec = backend_from_json(obj, "player");
  spec.validate();
  return spec;
}

// ---------------------------------------------------------------------------
// Experiments
// ---------------------------------------------------------------------------

RunMetrics run_experiment(const ExperimentConfig& config) {
  config.validate();
  const auto labels = seat_labels(config.game);

  std::array<std::shared_ptr<Backend>, kNumPlayers> shared_remotes{};
  for (int seat = 0; seat < kNumPlayers; ++seat) {
    const auto& spec = config.players[static_cast<std::size_t>(seat)];
    if (spec.kind == BackendSpec::Kind::Remote) {
      shared_remotes[static_cast<std::size_t>(seat)] =
          std::make_shared<RemoteBackend>(spec.remote);
    }
  }
  std::shared_ptr<Backend> shared_designer;
  if (config.mechanism.enabled &&
      config.mechanism.designer.kind == BackendSpec::Kind::Remote) {
    shared_designer = std::make_shared<RemoteBackend>(config.mechanism.designer.remote);
  }

  const BackendFactory make_backends = [&](int world_id) {
    std::array<std::unique_ptr<Backend>, kNumPlayers> backends;
    for (int seat = 0; seat < kNumPlayers; ++seat) {
      const auto s = static_cast<std::size_t>(seat);
      if (shared_remotes[s]) {
        backends[s] = std::make_unique<SharedBackend>(shared_remotes[s]);
      } else {
        backends[s] =
            make_backend(salt_spec(config.players[s], config.seed, world_id, seat),
                         labels[s], labels[static_cast<std::size_t>(1 - seat)]);
      }
    }
    return backends;
  };

  const DesignerFactory make_designer = [&](int) -> std::unique_ptr<Designer> {
    if (!config.mechanism.enabled) return nullptr;
    std::unique_ptr<Backend> backend =
        shared_designer ? std::make_unique<SharedBackend>(shared_designer)
                        : make_backend(config.mechanism.designer);
    return std::make_unique<Designer>(std::move(backend), config.mechanism.constraints);
  };

  std::vector<int> world_ids(static_cast<std::size_t>(config.worlds));
  for (int w = 0; w < config.worlds; ++w) world_ids[static_cast<std::size_t>(w)] = w;

  const auto outcomes = execute_worlds(config, world_ids, make_backends, make_designer);
  auto metrics = aggregate(config, outcomes);
  if (!config.output_dir.empty()) write_artifacts(config, outcomes, metrics);
  return metrics;
}

std::vector<CrossPlayCell> cross_play(const ExperimentConfig& config,
                                      const std::vector<BackendSpec>& pool,
                                      Pairing pairing) {
  if (pool.empty()) throw ConfigInvalid("cross-play pool is empty");

  std::vector<CrossPlayCell> cells;
  const auto run_pair = [&](int i, int j) {
    ExperimentConfig derived = config;
    derived.players[0] = pool[static_cast<std::size_t>(i)];
    derived.players[1] = j >= 0 ? pool[static_cast<std::size_t>(j)] : config.players[1];
    derived.name = config.name + "-p" + std::to_string(i) +
                   (j >= 0 ? "v" + std::to_string(j) : "vbase");
    CrossPlayCell cell;
    cell.seat0 = i;
    cell.seat1 = j;
    cell.metrics = run_experiment(derived);
    cells.push_back(std::move(cell));
  };

  if (pairing == Pairing::WithinPool) {
    for (std::size_t i = 0; i < pool.size(); ++i) {
      for (std::size_t j = 0; j < pool.size(); ++j) {
        run_pair(static_cast<int>(i), static_cast<int>(j));
      }
    }
  } else {
    for (std::size_t i = 0; i < pool.size(); ++i) {
      run_pair(static_cast<int>(i), -1);
    }
  }
  return cells;
}

std::vector<SweepPoint> sweep(const ExperimentConfig& config, const std::string& axis,
                              const std::vector<std::string>& values) {
  const auto apply_axis = [&](ExperimentConfig& derived, const std::string& value) {
    if (axis == "comm.rounds") {
      derived.comm.rounds = parse_int_value(value, axis);
    } else if (axis == "iterations") {
      derived.iterations = parse_int_value(value, axis);
    } else if (axis == "worlds") {
      derived.worlds = parse_int_value(value, axis);
    } else if (axis == "memory.mode") {
      const auto mode = memory_mode_from_string(value);
      if (!mode) throw ConfigInvalid("unknown memory mode '" + value + "'");
      derived.memory_mode = *mode;
    } else if (axis == "game.params.a") {
      derived.game.params.a = parse_double_value(value, axis);
    } else if (axis == "game.params.b") {
      derived.game.params.b = parse_double_value(value, axis);
    } else if (axis == "game.params.c") {
      derived.game.params.c = parse_double_value(value, axis);
    } else if (axis == "game.params.d") {
      derived.game.params.d = parse_double_value(value, axis);
    } else if (axis == "game.woa.gamma") {
      derived.game.woa.gamma = parse_double_value(value, axis);
    } else if (axis == "game.woa.terminal_t") {
      derived.game.woa.terminal_t = parse_int_value(value, axis);
    } else {
      throw ConfigInvalid("'" + axis + "' is not a sweepable axis");
    }
  };

  const auto slug = [](std::string text) {
    for (auto& c : text) {
      if (!std::isalnum(static_cast<unsigned char>(c))) c = '-';
    }
    return text;
  };

  std::vector<SweepPoint> points;
  for (const auto& value : values) {
    ExperimentConfig derived = config;
    apply_axis(derived, value);
    derived.name = config.name + "-" + slug(axis) + "-" + slug(value);
    SweepPoint point;
    point.value = value;
    point.metrics = run_experiment(derived);
    points.push_back(std::move(point));
  }
  return points;
}

// ---------------------------------------------------------------------------
// Plot tables
// ---------------------------------------------------------------------------

std::vector<std::string> emit_plots(const RunMetrics& metrics, const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create plot directory '" + dir + "'");

  std::vector<std::string> written;

  std::ostringstream freq;
  freq << "joint,frequency,count\n";
  for (const auto& row : metrics.joint_frequencies) {
    freq << row.joint << "," << row.frequency << "," << row.count << "\n";
  }
  const auto freq_path = fs::path(dir) / "strategy_frequencies.csv";
  write_text_file(freq_path, freq.str());
  written.push_back(freq_path.string());

  std::ostringstream histogram;
  histogram << "outcome,period,count\n";
  for (const auto& row : metrics.woa_histogram) {
    histogram << row.outcome << "," << row.period << "," << row.count << "\n";
  }
  const auto histogram_path = fs::path(dir) / "woa_histogram.csv";
  write_text_file(histogram_path, histogram.str());
  written.push_back(histogram_path.string());

  std::ostringstream series;
  series << "iteration,p0_mean_tokens,p1_mean_tokens\n";
  for (const auto& point : metrics.token_series) {
    series << point.iteration << "," << point.mean_tokens[0] << ","
           << point.mean_tokens[1] << "\n";
  }
  const auto series_path = fs::path(dir) / "token_series.csv";
  write_text_file(series_path, series.str());
  written.push_back(series_path.string());

  return written;
}

std::string render_frequency_grid(
    const std::vector<std::pair<std::string, const RunMetrics*>>& conditions) {
  std::ostringstream out;
  out << "joint";
  for (const auto& [name, metrics] : conditions) {
    (void)metrics;
    out << "," << name;
  }
  out << "\n";

  const RunMetrics* reference = nullptr;
  for (const auto& [name, metrics] : conditions) {
    if (metrics && !metrics->joint_frequencies.empty()) {
      reference = metrics;
      break;
    }
  }
  if (!reference) return out.str();

  for (const auto& row : reference->joint_frequencies) {
    out << row.joint;
    for (const auto& [name, metrics] : conditions) {
      double value = 0.0;
      if (metrics) {
        for (const auto& candidate : metrics->joint_frequencies) {
          if (candidate.joint == row.joint) {
            value = candidate.frequency;
            break;
          }
        }
      }
      out << "," << value;
    }
    out << "\n";
  }
  return out.str();
}

// ---------------------------------------------------------------------------
// Replay
// ---------------------------------------------------------------------------

RunMetrics replay(const std::string& run_dir) {
  auto config = load_experiment_config((fs::path(run_dir) / "config.json").string());
  config.output_dir.clear();

  std::ifstream in(fs::path(run_dir) / "transcripts.jsonl", std::ios::binary);
  if (!in) throw IoError("cannot open '" + run_dir + "/transcripts.jsonl' for reading");

  std::map<int, std::array<std::vector<std::string>, kNumPlayers>> scripts;
  std::map<int, std::vector<std::string>> designer_scripts;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    json entry;
    try {
      entry = json::parse(line);
      const int world = entry.at("world").get<int>();
      const int player = entry.at("player").get<int>();
      if (player < 0) {
        designer_scripts[world].push_back(entry.at("text").get<std::string>());
        scripts.try_emplace(world);
      } else if (entry.at("generated").get<bool>()) {
        scripts[world][static_cast<std::size_t>(player)].push_back(
            entry.at("text").get<std::string>());
      } else {
        scripts.try_emplace(world);
      }
    } catch (const json::exception& e) {
      throw IoError(std::string("malformed transcript line: ") + e.what());
    }
  }

  const BackendFactory make_backends = [&](int world_id) {
    std::array<std::unique_ptr<Backend>, kNumPlayers> backends;
    for (int seat = 0; seat < kNumPlayers; ++seat) {
      backends[static_cast<std::size_t>(seat)] = std::make_unique<FixedScriptBackend>(
          scripts.at(world_id)[static_cast<std::size_t>(seat)]);
    }
    return backends;
  };
  const DesignerFactory make_designer = [&](int world_id) -> std::unique_ptr<Designer> {
    const auto it = designer_scripts.find(world_id);
    if (!config.mechanism.enabled || it == designer_scripts.end() ||
        it->second.empty()) {
      return nullptr;
    }
    return std::make_unique<Designer>(std::make_unique<FixedScriptBackend>(it->second),
                                      config.mechanism.constraints);
  };

  std::vector<int> world_ids;
  for (const auto& [world, _] : scripts) world_ids.push_back(world);

  const auto outcomes = execute_worlds(config, world_ids, make_backends, make_designer);
  return aggregate(config, outcomes);
}

}  // namespace parley
