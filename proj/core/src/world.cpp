#include "parley/world.hpp"

#include <algorithm>
#include <sstream>

namespace parley {

namespace {

constexpr const char* kThinkCue =
    "Think privately about the situation and your next move.";
constexpr const char* kReflectCue =
    "Reflect briefly on this outcome and your strategy.";
constexpr const char* kRecallCue =
    "Give one short strategic note about this iteration for your records.";

std::string default_role(const std::string& name) {
  return "You are " + name +
         ", one of two strategic players in this environment. Play to maximize "
         "your own long-run payoff and follow every formatting instruction "
         "exactly.";
}

ParseRules seat_rules(const NormalFormGame& game, int seat) {
  ParseRules rules;
  rules.admissible_actions = game.action_labels(seat);
  std::string labels;
  for (const auto& label : rules.admissible_actions) {
    if (!labels.empty()) labels += " or ";
    labels += label;
  }
  rules.format_instruction =
      "State your final choice on its own line as ACTION: " + labels + ".";
  return rules;
}

std::string first_line(const std::string& text) {
  const auto newline = text.find('\n');
  std::string line = newline == std::string::npos ? text : text.substr(0, newline);
  std::size_t begin = 0;
  std::size_t end = line.size();
  while (begin < end && std::isspace(static_cast<unsigned char>(line[begin]))) ++begin;
  while (end > begin && std::isspace(static_cast<unsigned char>(line[end - 1]))) --end;
  line = line.substr(begin, end - begin);
  return line.empty() ? "none" : line;
}

std::string format_number(double value) {
  std::ostringstream out;
  out << value;
  return out.str();
}

WorldConfig validated(WorldConfig config) {
  config.validate();
  return config;
}

}  // namespace

std::string to_string(MemoryMode mode) {
  switch (mode) {
    case MemoryMode::Reflex: return "reflex";
    case MemoryMode::RagFull: return "rag_full";
    case MemoryMode::RagRecall: return "rag_recall";
    case MemoryMode::Cumulative: return "cumulative";
  }
  throw ConfigInvalid("unknown memory mode");
}

std::optional<MemoryMode> memory_mode_from_string(const std::string& name) {
  if (name == "reflex") return MemoryMode::Reflex;
  if (name == "rag_full") return MemoryMode::RagFull;
  if (name == "rag_recall") return MemoryMode::RagRecall;
  if (name == "cumulative") return MemoryMode::Cumulative;
  return std::nullopt;
}

void GameSpec::validate() const {
  switch (kind) {
    case Kind::Matrix:
      make_classic_game(matrix, params);
      return;
    case Kind::WoA:
      woa.validate();
      return;
  }
  throw ConfigInvalid("unknown game kind");
}

void WorldConfig::validate() const {
  game.validate();
  if (num_iterations < 1) throw ConfigInvalid("num_iterations must be positive");
  comm.validate(kNumPlayers);
  if (k_system < 0 || k_action < 0) {
    throw ConfigInvalid("retrieval budgets must be nonnegative");
  }
  if (chunk_overlap_tokens < 0 || chunk_max_tokens <= chunk_overlap_tokens) {
    throw ConfigInvalid("chunk window must exceed its overlap");
  }
  if (embed_dim < 1) throw ConfigInvalid("embed_dim must be positive");
}

World::World(WorldConfig config, std::array<std::unique_ptr<Backend>, kNumPlayers> backends)
    : config_(validated(std::move(config))),
      backends_(std::move(backends)),
      windows_{{ContextWindow(0), ContextWindow(1)}},
      embedder_(config_.embed_dim),
      store_(config_.embed_dim) {
  for (int i = 0; i < kNumPlayers; ++i) {
    if (!backends_[static_cast<std::size_t>(i)]) {
      throw ConfigInvalid("player " + std::to_string(i) + " has no backend");
    }
    player_names_[static_cast<std::size_t>(i)] = "Player " + std::to_string(i);
  }

  if (config_.game.kind == GameSpec::Kind::Matrix) {
    game_.emplace(make_classic_game(config_.game.matrix, config_.game.params));
    for (int i = 0; i < kNumPlayers; ++i) {
      rules_[static_cast<std::size_t>(i)] = seat_rules(*game_, i);
    }
  } else {
    for (auto& rules : rules_) rules = ParseRules::for_woa();
  }

  for (int i = 0; i < kNumPlayers; ++i) {
    auto& spec = prompt_specs_[static_cast<std::size_t>(i)];
    const auto& override_role = config_.role_definitions[static_cast<std::size_t>(i)];
    spec.role_definition =
        override_role.empty()
            ? default_role(player_names_[static_cast<std::size_t>(i)])
            : override_role;
    const auto& rules = rules_[static_cast<std::size_t>(i)];
    std::string task =
        config_.game.kind == GameSpec::Kind::Matrix
            ? describe_matrix_task(*game_, i, rules, config_.mask_task_context)
            : describe_woa_task(config_.game.woa, i, rules, config_.mask_task_context);
    spec.task_context = TaskContext{std::move(task), config_.mask_task_context};
    spec.multi_agent.target = config_.targets[static_cast<std::size_t>(i)];
    spec.multi_agent.guidance = config_.guidance[static_cast<std::size_t>(i)];
  }
}

const ContextWindow& World::window(int player) const {
  if (player < 0 || player >= kNumPlayers) throw IndexOutOfRange("player id");
  return windows_[static_cast<std::size_t>(player)];
}

SystemPromptSpec& World::prompt_spec(int player) {
  if (player < 0 || player >= kNumPlayers) throw IndexOutOfRange("player id");
  return prompt_specs_[static_cast<std::size_t>(player)];
}

const NormalFormGame* World::matrix_game() const {
  return game_.has_value() ? &*game_ : nullptr;
}

std::string World::ask(int player, StageTag stage, IterationRecord&, int round) {
  auto& backend = *backends_[static_cast<std::size_t>(player)];
  std::string text;
  try {
    text = backend.respond(windows_[static_cast<std::size_t>(player)], stage);
  } catch (const Error& e) {
    throw BackendFailure("player " + std::to_string(player) + " backend '" +
                         backend.name() + "' failed at the " + to_string(stage) +
                         " stage: " + e.what());
  }
  windows_[static_cast<std::size_t>(player)].append(
      stage, SegmentAuthor::player_id(player), text, true, epoch_, round);
  return text;
}

void World::append_env(int player, StageTag stage, std::string text, int round,
                       bool env_private) {
  windows_[static_cast<std::size_t>(player)].append(stage, SegmentAuthor::environment(),
                                                    std::move(text), false, epoch_,
                                                    round, env_private);
}

std::string World::retrieval_block(int player, const std::string& query, int k) {
  if (k < 1 || store_.partition_size(player, config_.world_id) == 0) return "";
  const auto hits = store_.retrieve(player, config_.world_id, query, k, embedder_);
  std::string block;
  for (const auto& hit : hits) {
    if (!block.empty()) block += "\n";
    block += "- " + hit.record.chunk.text;
  }
  return block;
}

void World::store_chunks(int player, const std::string& text, StageTag stage) {
  const auto chunks = chunk_text(text, config_.chunk_max_tokens,
                                 config_.chunk_overlap_tokens,
                                 ChunkSource{stage, epoch_});
  for (const auto& chunk : chunks) {
    store_.insert(player, config_.world_id, chunk, embedder_);
  }
}

void World::begin_iteration() {
  ++epoch_;
  const bool first = iteration_ == 0;
  const bool rag = config_.memory_mode == MemoryMode::RagFull ||
                   config_.memory_mode == MemoryMode::RagRecall;
  const bool task_private =
      config_.game.kind == GameSpec::Kind::WoA &&
      (config_.game.woa.value[0] != config_.game.woa.value[1] ||
       config_.game.woa.evolving.has_value());

  for (int i = 0; i < kNumPlayers; ++i) {
    auto& window = windows_[static_cast<std::size_t>(i)];
    auto& spec = prompt_specs_[static_cast<std::size_t>(i)];
    auto& last_rules = last_rules_[static_cast<std::size_t>(i)];

    if (!first && config_.memory_mode != MemoryMode::Cumulative) window.reset();
    iteration_start_[static_cast<std::size_t>(i)] = window.segments().size();

    if (first || config_.memory_mode != MemoryMode::Cumulative) {
      if (rag) {
        SystemPromptSpec base = spec;
        base.memory_context.clear();
        spec.memory_context =
            retrieval_block(i, build_system_prompt(base), config_.k_system);
      }
      window.append(StageTag::System, SegmentAuthor::designer(),
                    build_system_prompt(spec), false, epoch_, -1, task_private);
      last_rules = spec.mechanism_rules;
    } else if (spec.mechanism_rules != last_rules) {
      window.append(StageTag::System, SegmentAuthor::environment(),
                    "SYSTEM UPDATE\n\n# Mechanism Rules\n" + spec.mechanism_rules,
                    false, epoch_);
      last_rules = spec.mechanism_rules;
    }
  }
}

void World::run_comm_stage(IterationRecord& record) {
  const auto& comm = config_.comm;
  if (comm.rounds <= 0) return;
  comm.validate(kNumPlayers);

  for (int round = 0; round < comm.rounds; ++round) {
    const std::string cue = "Communication round " + std::to_string(round + 1) +
                            " of " + std::to_string(comm.rounds) +
                            ". Send lines like 'TO <player>: <message>', or reply "
                            "PASS to stay silent.";

    auto speak = [&](int player) {
      append_env(player, StageTag::Comm, cue, round);
      const auto text = ask(player, StageTag::Comm, record, round);
      auto parsed = parse_comm(text, player, round,
                               {player_names_.begin(), player_names_.end()});
      for (auto& diag : parsed.diagnostics) {
        record.comm_diagnostics.push_back(player_names_[static_cast<std::size_t>(player)] +
                                          ": " + diag);
      }
      return parsed.messages;
    };

    auto deliver = [&](const RouteResult& routed) {
      for (const auto& violation : routed.violations) {
        record.comm_violations.push_back(violation);
      }
      for (int r = 0; r < kNumPlayers; ++r) {
        for (const auto& message : routed.inbox[static_cast<std::size_t>(r)]) {
          windows_[static_cast<std::size_t>(r)].append(
              StageTag::Comm, SegmentAuthor::player_id(message.sender),
              "FROM " + player_names_[static_cast<std::size_t>(message.sender)] +
                  ": " + message.text,
              false, epoch_, round);
        }
      }
    };

    if (comm.scheduling == CommConfig::Scheduling::Simultaneous) {
      std::vector<Message> outgoing;
      for (int i = 0; i < kNumPlayers; ++i) {
        auto messages = speak(i);
        outgoing.insert(outgoing.end(), messages.begin(), messages.end());
      }
      deliver(route_messages(outgoing, comm, round, kNumPlayers));
    } else {
      for (int speaker : comm.order) {
        deliver(route_messages(speak(speaker), comm, round, kNumPlayers));
      }
    }
  }
}

std::string World::resolve_action(int player, IterationRecord& record) {
  const auto& rules = rules_[static_cast<std::size_t>(player)];
  const bool rag = config_.memory_mode == MemoryMode::RagFull ||
                   config_.memory_mode == MemoryMode::RagRecall;

  if (rag && config_.k_action > 0) {
    const auto& window = windows_[static_cast<std::size_t>(player)];
    std::string query;
    for (std::size_t s = iteration_start_[static_cast<std::size_t>(player)];
         s < window.segments().size(); ++s) {
      if (!query.empty()) query += "\n";
      query += window.segments()[s].text;
    }
    const auto block = retrieval_block(player, query, config_.k_action);
    if (!block.empty()) append_env(player, StageTag::Action, "MEMORY:\n" + block);
  }

  append_env(player, StageTag::Action,
             "Choose your action now. " + rules.format_instruction);

  std::optional<ActionParse> parsed;
  const auto text = ask(player, StageTag::Action, record);
  try {
    parsed = parse_action(text, rules);
  } catch (const UnparseableNoDefault&) {
  }

  if (!parsed.has_value() || !parsed->parse_ok) {
    append_env(player, StageTag::Action,
               "Your previous reply could not be parsed. " + rules.format_instruction);
    const auto retry = ask(player, StageTag::Action, record);
    try {
      const auto second = parse_action(retry, rules);
      if (!parsed.has_value() || second.parse_ok) parsed = second;
    } catch (const UnparseableNoDefault&) {
    }
  }

  if (parsed.has_value()) {
    record.parse_ok[static_cast<std::size_t>(player)] = parsed->parse_ok;
    return parsed->label;
  }
  record.parse_ok[static_cast<std::size_t>(player)] = false;
  record.forfeited[static_cast<std::size_t>(player)] = true;
  return rules.admissible_actions[0];
}

void World::finish_iteration(IterationRecord& record) {
  const bool repeated = config_.num_iterations > 1;

  for (int i = 0; i < kNumPlayers; ++i) {
    auto& window = windows_[static_cast<std::size_t>(i)];

    if (repeated && config_.memory_mode == MemoryMode::RagRecall) {
      append_env(i, StageTag::Recall, kRecallCue);
      const auto note = ask(i, StageTag::Recall, record);

      std::string own, opp;
      if (game_.has_value()) {
        const int own_idx = i == kRow ? record.joint.row : record.joint.col;
        const int opp_idx = i == kRow ? record.joint.col : record.joint.row;
        own = game_->action_label(i, own_idx);
        opp = game_->action_label(opponent_of(i), opp_idx);
      } else {
        const auto& last = record.woa_decisions.back();
        own = to_string(last[static_cast<std::size_t>(i)]);
        opp = to_string(last[static_cast<std::size_t>(opponent_of(i))]);
      }
      const std::string summary =
          "SUMMARY iteration=" + std::to_string(record.iteration) + ": own=" + own +
          " opponent=" + opp +
          " payoff=" + format_number(record.payoffs[static_cast<std::size_t>(i)]) +
          " note=" + first_line(note);
      record.summaries[static_cast<std::size_t>(i)] = summary;
      store_chunks(i, summary, StageTag::Recall);
    } else if (repeated && config_.memory_mode == MemoryMode::RagFull) {
      std::string full;
      for (std::size_t s = iteration_start_[static_cast<std::size_t>(i)];
           s < window.segments().size(); ++s) {
        if (!full.empty()) full += "\n\n";
        full += window.segments()[s].text;
      }
      store_chunks(i, full, StageTag::Recall);
    }

    record.window_tokens[static_cast<std::size_t>(i)] = window.total_tokens();
    record.new_segments[static_cast<std::size_t>(i)].assign(
        window.segments().begin() +
            static_cast<std::ptrdiff_t>(iteration_start_[static_cast<std::size_t>(i)]),
        window.segments().end());
  }
  ++iteration_;
}

IterationRecord World::matrix_iteration() {
  IterationRecord record;
  record.iteration = iteration_;
  begin_iteration();

  for (int i = 0; i < kNumPlayers; ++i) {
    append_env(i, StageTag::Thinking, kThinkCue);
    ask(i, StageTag::Thinking, record);
  }

  run_comm_stage(record);

  std::array<std::string, kNumPlayers> labels;
  for (int i = 0; i < kNumPlayers; ++i) {
    labels[static_cast<std::size_t>(i)] = resolve_action(i, record);
  }
  record.joint = JointAction{game_->action_index(kRow, labels[kRow]).value(),
                             game_->action_index(kCol, labels[kCol]).value()};
  record.payoffs = game_->payoff(record.joint);

  for (int i = 0; i < kNumPlayers; ++i) {
    OutcomeNote note{labels[static_cast<std::size_t>(i)],
                     labels[static_cast<std::size_t>(opponent_of(i))],
                     record.payoffs[static_cast<std::size_t>(i)]};
    append_env(i, StageTag::Reflection,
               format_outcome_note(note) + "\n" + kReflectCue);
    ask(i, StageTag::Reflection, record);
  }

  finish_iteration(record);
  return record;
}

IterationRecord World::woa_iteration() {
  const auto& woa = config_.game.woa;
  IterationRecord record;
  record.iteration = iteration_;
  begin_iteration();

  auto state = woa_initial_state(woa);
  std::optional<WoAOutcome> outcome;

  while (!outcome.has_value()) {
    if (state.t > 1) ++epoch_;

    for (int i = 0; i < kNumPlayers; ++i) {
      append_env(i, StageTag::Thinking,
                 format_period_note(state.t) + " your_total_cost=" +
                     format_number(state.accumulated_loss[static_cast<std::size_t>(i)]) +
                     "\n" + kThinkCue);
      ask(i, StageTag::Thinking, record);
    }

    run_comm_stage(record);

    std::array<WoADecision, kNumPlayers> decisions{};
    for (int i = 0; i < kNumPlayers; ++i) {
      const auto label = resolve_action(i, record);
      decisions[static_cast<std::size_t>(i)] =
          label == "Surrender" ? WoADecision::Surrender : WoADecision::Continue;
    }
    record.woa_decisions.push_back(decisions);

    const auto step_seed =
        mix_seed(config_.seed, 0x77 + static_cast<std::uint64_t>(record.iteration));
    auto [next, done] = woa_step(state, woa, decisions, step_seed);

    for (int i = 0; i < kNumPlayers; ++i) {
      std::string note;
      if (done.has_value()) {
        OutcomeNote summary{to_string(decisions[static_cast<std::size_t>(i)]),
                            to_string(decisions[static_cast<std::size_t>(opponent_of(i))]),
                            done->payoffs[static_cast<std::size_t>(i)]};
        note = format_outcome_note(summary) + "\nRESULT: " + to_string(done->cls) +
               " at period " + std::to_string(done->period);
        if (done->forced) note += " (forced at the horizon)";
      } else {
        note = "Both players continued this period. Your accumulated loss is now " +
               format_number(next.accumulated_loss[static_cast<std::size_t>(i)]) + ".";
      }
      append_env(i, StageTag::Reflection, note + "\n" + kReflectCue);
      ask(i, StageTag::Reflection, record);
    }

    state = next;
    outcome = done;
  }

  record.woa = outcome;
  record.payoffs = outcome->payoffs;
  record.joint =
      JointAction{record.woa_decisions.back()[kRow] == WoADecision::Surrender ? 1 : 0,
                  record.woa_decisions.back()[kCol] == WoADecision::Surrender ? 1 : 0};

  finish_iteration(record);
  return record;
}

IterationRecord World::run_iteration() {
  if (iteration_ >= config_.num_iterations) {
    throw ConfigInvalid("world already ran its configured iterations");
  }
  return config_.game.kind == GameSpec::Kind::Matrix ? matrix_iteration()
                                                     : woa_iteration();
}

std::vector<IterationRecord> World::run_all() {
  std::vector<IterationRecord> records;
  records.reserve(static_cast<std::size_t>(config_.num_iterations));
  while (iteration_ < config_.num_iterations) {
    records.push_back(run_iteration());
  }
  return records;
}

}  // namespace parley
