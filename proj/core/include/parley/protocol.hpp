#pragma once

#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "parley/equilibrium.hpp"
#include "parley/games.hpp"
#include "parley/tokenizer.hpp"

namespace parley {

// Stages of one game iteration, in execution order.
enum class StageTag { System, Thinking, Comm, Action, Reflection, Recall };

std::string to_string(StageTag stage);
std::optional<StageTag> stage_tag_from_string(const std::string& name);
int stage_rank(StageTag stage);

struct SegmentAuthor {
  enum class Kind { Player, Designer, Environment };

  Kind kind = Kind::Environment;
  int player = -1;

  static SegmentAuthor player_id(int id) { return {Kind::Player, id}; }
  static SegmentAuthor designer() { return {Kind::Designer, -1}; }
  static SegmentAuthor environment() { return {Kind::Environment, -1}; }

  std::string describe() const;
  friend bool operator==(const SegmentAuthor&, const SegmentAuthor&) = default;
};

struct Segment {
  StageTag stage = StageTag::System;
  SegmentAuthor author;
  std::string text;
  int token_count = 0;
  bool generated = false;  // true iff produced by this window's own backend
  int iteration = 0;
  int round = -1;            // communication round, -1 outside the Comm stage
  bool env_private = false;  // hidden from designer-facing digests
};

// One player's accumulated prompt context. Segments arrive in stage order
// within an iteration; token counts come from the pluggable tokenizer.
class ContextWindow {
 public:
  explicit ContextWindow(int player_id, Tokenizer tokenizer = default_tokenizer());

  int player_id() const { return player_id_; }
  const std::vector<Segment>& segments() const { return segments_; }
  int total_tokens() const { return total_tokens_; }

  const Segment& append(StageTag stage, SegmentAuthor author, std::string text,
                        bool generated, int iteration, int round = -1,
                        bool env_private = false);

  // Flattened text of every segment, oldest first, used as the prompt body.
  std::string render() const;

  // Drops all accumulated segments (memoryless reset between iterations).
  void reset();

 private:
  int player_id_;
  Tokenizer tokenizer_;
  std::vector<Segment> segments_;
  int total_tokens_ = 0;
  int last_iteration_ = -1;
  int last_rank_ = -1;
};

// ---------------------------------------------------------------------------
// System prompt assembly
// ---------------------------------------------------------------------------

struct TaskContext {
  std::string text;
  bool masked = false;
};

struct MultiAgentContext {
  std::optional<SolutionConcept> target;
  std::string guidance;
};

struct SystemPromptSpec {
  std::string role_definition;
  TaskContext task_context;
  MultiAgentContext multi_agent;
  std::string memory_context;
  std::string mechanism_rules;
};

// Renders the fixed section order Role, Task, Multi-Agent, Memory (plus
// Mechanism Rules when present). Empty sections are elided; output is
// deterministic in the spec.
std::string build_system_prompt(const SystemPromptSpec& spec);

struct ParseRules {
  std::vector<std::string> admissible_actions;
  std::string format_instruction;
  std::optional<std::string> default_action;

  void validate() const;  // throws ConfigInvalid
  static ParseRules for_game(const NormalFormGame& game);
  static ParseRules for_woa();
};

// Task descriptions whose masked form keeps action labels and format
// instructions but drops payoff numbers and rule explanations. `seat` is the
// described player's side, so payoff pairs read (you, opponent).
std::string describe_matrix_task(const NormalFormGame& game, int seat,
                                 const ParseRules& rules, bool masked);
std::string describe_woa_task(const WoAConfig& config, int seat,
                              const ParseRules& rules, bool masked);

// ---------------------------------------------------------------------------
// Communication
// ---------------------------------------------------------------------------

struct CommConfig {
  enum class Scheduling { Simultaneous, Sequential };

  int rounds = 0;
  Scheduling scheduling = Scheduling::Simultaneous;
  std::vector<int> order;                // Sequential speaking order
  std::vector<std::vector<int>> graph;   // graph[p] lists permitted targets

  bool allows(int sender, int recipient) const;
  void validate(int num_players) const;  // throws ConfigInvalid

  static CommConfig disabled(int num_players);
  static CommConfig complete(int num_players, int rounds,
                             Scheduling scheduling = Scheduling::Simultaneous);
};

struct Message {
  int sender = 0;
  std::vector<int> recipients;
  int round = 0;
  std::string text;
};

// A dropped delivery attempt to a non-permitted recipient.
struct GraphViolation {
  int sender = 0;
  int recipient = 0;
  int round = 0;
  std::string text;
};

struct RouteResult {
  std::vector<std::vector<Message>> inbox;  // indexed by player
  std::vector<GraphViolation> violations;
};

// Delivers round messages into per-player inboxes, dropping and recording
// graph violations. Inboxes preserve message order.
RouteResult route_messages(const std::vector<Message>& messages,
                           const CommConfig& comm, int round, int num_players);

struct CommParse {
  std::vector<Message> messages;
  bool abstained = false;
  std::vector<std::string> diagnostics;
};

// Parses a backend's communication-stage output. Grammar, one directive per
// line: "TO <target>: <text>" with target a player index, a player name, or
// ALL; a lone "PASS" (or no directives at all) is abstention. Targets the
// sender itself or unknown names produce diagnostics, not messages.
CommParse parse_comm(const std::string& text, int sender, int round,
                     const std::vector<std::string>& player_names);

// ---------------------------------------------------------------------------
// Action parsing
// ---------------------------------------------------------------------------

struct ActionParse {
  std::string label;
  bool parse_ok = false;
};

// Extracts the action from a backend response: the last "ACTION:" line wins
// when it names exactly one admissible label; otherwise a whole-text scan
// must find exactly one distinct admissible label. Ambiguity or absence falls
// back to default_action with parse_ok=false, or UnparseableNoDefault.
ActionParse parse_action(const std::string& response, const ParseRules& rules);

// Token count under the default approximate tokenizer.
int count_tokens(std::string_view text);

// ---------------------------------------------------------------------------
// Prompt templates
// ---------------------------------------------------------------------------

// Substitutes {{name}} placeholders. A placeholder with no binding throws
// ConfigInvalid; unused bindings are ignored.
std::string render_template(const std::string& tmpl,
                            const std::map<std::string, std::string>& values);

std::string load_text_file(const std::string& path);  // throws IoError

}  // namespace parley
