#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <semaphore>
#include <string>
#include <vector>

#include "parley/errors.hpp"
#include "parley/games.hpp"
#include "parley/protocol.hpp"
#include "parley/rng.hpp"

namespace parley {

// ---------------------------------------------------------------------------
// Chat transcript wire types
// ---------------------------------------------------------------------------

struct ChatTurn {
  std::string role;  // "system" | "user" | "assistant"
  std::string content;

  bool operator==(const ChatTurn&) const = default;
};

struct RemoteSpec {
  std::string endpoint_url;  // e.g. "http://127.0.0.1:8080/v1/chat/completions"
  std::string model_name;
  double temperature = 0.7;
  int max_tokens = 512;
  double timeout_seconds = 60.0;
  int max_retries = 3;
  // Exponential backoff starts here and doubles per retry. Zero keeps tests
  // fast.
  double retry_base_delay_seconds = 0.5;
  // Some serving stacks reject a system role; the system turn is then folded
  // into the first user turn.
  bool no_system_role = false;
  std::string api_key;
  int max_in_flight = 4;

  void validate() const;
};

// Serializes the transcript to the chat-completions wire format and returns
// the completion text. Retries (with exponential backoff) only on 429, 5xx
// and transport failures; any other 4xx raises immediately.
std::string chat_request(const RemoteSpec& spec, const std::vector<ChatTurn>& transcript);

// Rewrites the transcript so it carries no system turns: system content is
// folded into the first user turn, and adjacent same-role turns are merged.
std::vector<ChatTurn> fold_system_turns(const std::vector<ChatTurn>& transcript);

// Maps a context window onto a chat transcript: System-stage segments become
// the system turn, segments generated by the window's owner become assistant
// turns, and everything else (environment text, received messages) becomes
// user turns. Adjacent same-role turns are merged.
std::vector<ChatTurn> window_to_transcript(const ContextWindow& window,
                                           bool no_system_role);

// ---------------------------------------------------------------------------
// Scripted strategies
// ---------------------------------------------------------------------------

struct ScriptedStrategy {
  enum class Kind {
    AlwaysAction,
    TitForTat,
    GrimTrigger,
    UniformRandom,
    MixedSampler,
    WoAThreshold,
  };

  Kind kind = Kind::TitForTat;
  int action_index = 0;              // AlwaysAction
  std::uint64_t seed = 0;            // UniformRandom, MixedSampler
  std::vector<double> probs;         // MixedSampler
  int surrender_at_t = 1;            // WoAThreshold

  static ScriptedStrategy always(int index);
  static ScriptedStrategy tit_for_tat();
  static ScriptedStrategy grim_trigger();
  static ScriptedStrategy uniform_random(std::uint64_t seed);
  static ScriptedStrategy mixed(std::vector<double> probs, std::uint64_t seed);
  static ScriptedStrategy woa_threshold(int surrender_at_t);

  void validate() const;
};

std::string to_string(ScriptedStrategy::Kind kind);

// Pure threshold rule: Surrender exactly when the current period has reached
// the strategy's trigger.
WoADecision scripted_woa(const ScriptedStrategy& strategy, const WoAState& state);

// ---------------------------------------------------------------------------
// Environment notes
//
// The world loop reports results through environment-authored segments. The
// formats below are the shared grammar between the world (which writes them)
// and scripted agents (which read their own history back out of them).
// ---------------------------------------------------------------------------

struct OutcomeNote {
  std::string own_label;
  std::string opponent_label;
  double payoff = 0.0;

  bool operator==(const OutcomeNote&) const = default;
};

// "OUTCOME: you=<label> opponent=<label> payoff=<value>"
std::string format_outcome_note(const OutcomeNote& note);

// Extracts every outcome note from environment-authored segments, oldest
// first. Malformed lines are skipped.
std::vector<OutcomeNote> parse_outcome_notes(const ContextWindow& window);

// "STATE: period=<t>" with optional extra prose after it.
std::string format_period_note(int period);

// Latest period mentioned by an environment segment; 1 when none exists.
int current_period(const ContextWindow& window);

// ---------------------------------------------------------------------------
// Backends
// ---------------------------------------------------------------------------

class Backend {
 public:
  virtual ~Backend() = default;

  virtual std::string name() const = 0;

  // Produces the player's response for one stage. Never mutates the context.
  virtual std::string respond(const ContextWindow& context, StageTag stage) = 0;
};

class ScriptedBackend : public Backend {
 public:
  // own_labels are this seat's admissible actions in index order; the
  // opponent's labels default to the same set.
  ScriptedBackend(ScriptedStrategy strategy, std::vector<std::string> own_labels,
                  std::vector<std::string> opponent_labels = {});

  std::string name() const override;
  std::string respond(const ContextWindow& context, StageTag stage) override;

 private:
  int choose_action(const ContextWindow& context);

  ScriptedStrategy strategy_;
  std::vector<std::string> own_labels_;
  std::vector<std::string> opponent_labels_;
  Rng rng_;
};

class FixedScriptBackend : public Backend {
 public:
  explicit FixedScriptBackend(std::vector<std::string> responses);

  std::string name() const override { return "fixed_script"; }
  std::string respond(const ContextWindow& context, StageTag stage) override;

  std::size_t remaining() const { return responses_.size() - next_; }

 private:
  std::vector<std::string> responses_;
  std::size_t next_ = 0;
};

class RemoteBackend : public Backend {
 public:
  explicit RemoteBackend(RemoteSpec spec);

  std::string name() const override { return "remote:" + spec_.model_name; }
  std::string respond(const ContextWindow& context, StageTag stage) override;

  const RemoteSpec& spec() const { return spec_; }

 private:
  RemoteSpec spec_;
  // Caps concurrent requests; each call to a fresh connection is otherwise
  // independent, so worlds may share one remote backend across threads.
  std::counting_semaphore<256> gate_;
};

// ---------------------------------------------------------------------------
// Backend configuration
// ---------------------------------------------------------------------------

struct BackendSpec {
  enum class Kind { Remote, Scripted, FixedScript };

  Kind kind = Kind::Scripted;
  RemoteSpec remote;
  ScriptedStrategy strategy;
  std::vector<std::string> script;

  void validate() const;
};

// action_labels seed scripted backends with the seat's admissible actions;
// remote and fixed-script backends ignore them.
std::unique_ptr<Backend> make_backend(const BackendSpec& spec,
                                      const std::vector<std::string>& action_labels = {},
                                      const std::vector<std::string>& opponent_labels = {});

}  // namespace parley
