#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "parley/agents.hpp"
#include "parley/protocol.hpp"
#include "parley/world.hpp"

namespace parley {

// A single constrained change the designer may propose: a rule appended to
// every player's system prompt, or an edit to the communication protocol.
struct Intervention {
  enum class Kind { GlobalRule, SetCommRounds, SetCommGraph };

  Kind kind = Kind::GlobalRule;
  std::string rule_text;
  int rounds = 0;
  std::vector<std::pair<int, int>> edges;

  // Content hash; identical proposals share an id, which makes application
  // idempotent.
  std::uint64_t id() const;
  bool validated() const { return validated_; }

  friend bool operator==(const Intervention& a, const Intervention& b) {
    return a.kind == b.kind && a.rule_text == b.rule_text && a.rounds == b.rounds &&
           a.edges == b.edges;
  }

 private:
  friend struct Verdict;
  bool validated_ = false;
};

std::string to_string(const Intervention& intervention);

struct MechanismConstraints {
  int max_rules_per_run = 3;
  int max_rule_tokens = 64;
  int min_rounds = 0;
  int max_rounds = 4;
  bool graph_edits_allowed = true;

  void validate() const;  // throws ConfigInvalid
};

struct Verdict {
  bool accepted = false;
  std::string reason;  // empty on accept

  static Verdict accept(Intervention& intervention) {
    intervention.validated_ = true;
    return {true, ""};
  }
  static Verdict reject(std::string reason) { return {false, std::move(reason)}; }
};

struct ParsedInterventions {
  std::vector<Intervention> interventions;
  std::vector<std::string> diagnostics;  // individually rejected directive lines
};

// Extracts RULE:/COMM_ROUNDS:/COMM_GRAPH: directives from a designer reply.
// Directive-shaped lines with an unknown head are rejected with a diagnostic;
// free prose is ignored.
ParsedInterventions parse_intervention(const std::string& text);

// Accepts iff the intervention is feasible under the constraints. Rule
// proposals past the per-run budget are rejected via rules_already_applied.
Verdict validate(Intervention& intervention, const MechanismConstraints& constraints,
                 int rules_already_applied = 0);

// Mutates the protocol config or the players' prompt specs. A repeated
// intervention id is a no-op; returns whether anything changed. Throws
// NotValidated for interventions that never passed validate().
bool apply(const Intervention& intervention, CommConfig& comm,
           const std::vector<SystemPromptSpec*>& prompt_specs);

// Designer-facing view of a run: a system prompt with its own role
// definition, then a digest of every player's transcript. Segments marked
// private to the environment never appear; masked runs also hide payoff
// values that leak through outcome notes.
ContextWindow build_designer_context(const std::vector<const ContextWindow*>& players,
                                     const GameSpec& game, bool mask_task_context,
                                     const MechanismConstraints& constraints);

struct DesignerReport {
  std::string raw_response;
  ParsedInterventions parsed;
  std::vector<Verdict> verdicts;       // one per parsed intervention
  std::vector<Intervention> applied;   // the subset that changed the config
};

// One designer per world. Each intervene() call digests the players'
// windows, asks the designer backend, and applies every accepted proposal to
// the world's comm config and prompt specs.
class Designer {
 public:
  Designer(std::unique_ptr<Backend> backend, MechanismConstraints constraints);

  DesignerReport intervene(World& world);

  const MechanismConstraints& constraints() const { return constraints_; }
  int rules_applied() const { return rules_applied_; }
  const std::vector<DesignerReport>& history() const { return history_; }

 private:
  std::unique_ptr<Backend> backend_;
  MechanismConstraints constraints_;
  int rules_applied_ = 0;
  std::vector<DesignerReport> history_;
};

}  // namespace parley
