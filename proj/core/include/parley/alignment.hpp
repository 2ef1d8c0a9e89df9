#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "parley/equilibrium.hpp"
#include "parley/games.hpp"
#include "parley/protocol.hpp"

namespace parley {

// ---------------------------------------------------------------------------
// Q/A correctness items
// ---------------------------------------------------------------------------

// One graded question about the game, asked from the seat owner's
// perspective. The ground truth is always recomputed from the recorded game
// config, never taken from a transcript.
struct QAItem {
  enum class Template { OpponentPayoff, OwnPayoff, InverseAction };

  Template form = Template::OpponentPayoff;
  GameKind game = GameKind::PrisonersDilemma;
  PayoffParams params{};
  int seat = 0;
  int own_action = 0;
  // Payoff templates: the opponent action the question conditions on.
  // InverseAction: the action the question asks for.
  int opp_action = 0;
  std::string player_context;
  std::string question;
  std::string ground_truth;
  int reward_correct = 1;
  int reward_incorrect = -1;

  friend bool operator==(const QAItem&, const QAItem&) = default;
};

std::string to_string(QAItem::Template form);
std::optional<QAItem::Template> qa_template_from_string(const std::string& name);

// Whole-token containment after normalization: lowercase, number words
// (zero through twenty) mapped to digits, numeric tokens canonicalized. The
// same predicate backs answer grading and the leakage check.
bool contains_answer(const std::string& text, const std::string& answer);

// Samples instantiated question templates whose answers do not leak into the
// transcript; leaking instantiations are discarded and resampled. Throws
// ExhaustedTemplates when no instantiation survives the leakage check.
std::vector<QAItem> gen_qa_items(GameKind kind, const PayoffParams& params,
                                 const ContextWindow& transcript, int n,
                                 std::uint64_t rng_seed);

// Recomputes the answer from the item's recorded config (self-verification).
std::string recompute_ground_truth(const QAItem& item);

// +1 when the normalized answer contains the ground truth, else -1.
int grade_answer(const QAItem& item, const std::string& answer);

// ---------------------------------------------------------------------------
// Action supervision
// ---------------------------------------------------------------------------

struct ActionSupervisionItem {
  GameKind game = GameKind::PrisonersDilemma;
  PayoffParams params{};
  int seat = 0;
  SolutionConcept target = SolutionConcept::PureNash;
  int conditioned_opponent_action = 0;
  std::string context_prefix;  // never contains Action-stage segments
  std::string question;
  std::vector<int> target_actions;
  std::vector<std::string> target_labels;

  friend bool operator==(const ActionSupervisionItem&,
                         const ActionSupervisionItem&) = default;
};

// One item per decision point and conditioned opponent action. Targets are
// the best responses, narrowed to the target concept's cells when both
// agree. Throws UnachievableConcept when the concept has no profile in this
// game (or names no pure action at all).
std::vector<ActionSupervisionItem> gen_action_supervision(GameKind kind,
                                                          const PayoffParams& params,
                                                          const ContextWindow& transcript,
                                                          SolutionConcept target);

// +1 iff the response parses without fallback AND some line is exactly
// "ACTION: <label>" for the parsed label.
int check_format(const std::string& response, const ParseRules& rules);

// ---------------------------------------------------------------------------
// Evaluator feedback
// ---------------------------------------------------------------------------

struct Evaluator {
  enum class Kind { Centralized, Team };

  Kind kind = Kind::Centralized;
  int peer = -1;  // judging player, Team only

  friend bool operator==(const Evaluator&, const Evaluator&) = default;
};

struct FeedbackScore {
  Evaluator evaluator{};
  int subject = 0;
  double raw = 0.0;
  double normalized = 0.0;
  int batch = 0;

  friend bool operator==(const FeedbackScore&, const FeedbackScore&) = default;
};

// Affine min-max map of the batch onto [-1, 1]; a constant batch maps to all
// zeros. Raw scores must lie in [0, 10].
std::vector<double> normalize_feedback(const std::vector<double>& raw);
void normalize_feedback(std::vector<FeedbackScore>& batch);

// Prompts asking an evaluator to rate one player's behavior on a 0-10 scale.
ContextWindow build_centralized_eval_context(
    const std::vector<const ContextWindow*>& players, int subject);
ContextWindow build_team_eval_context(const ContextWindow& peer, int subject);

// Last "SCORE: <0-10>" line of an evaluator reply; nullopt when absent or
// out of range.
std::optional<double> parse_score(const std::string& text);

// ---------------------------------------------------------------------------
// Joint strategy preferences
// ---------------------------------------------------------------------------

struct PreferencePair {
  enum class Label { A, B, TieBrokenA, TieBrokenB, Arbitrary };

  MixedProfile profile_a;
  MixedProfile profile_b;
  std::vector<SolutionConcept> targets;
  int designated_player = 0;
  Label label = Label::Arbitrary;
  // 0 when profile_a is (tie-broken or arbitrarily) preferred, else 1.
  int preferred = 0;
};

std::string to_string(PreferencePair::Label label);
std::optional<PreferencePair::Label> preference_label_from_string(
    const std::string& name);

// Membership of a profile in the union of the target concepts.
bool in_target_set(const NormalFormGame& game, const MixedProfile& profile,
                   const std::vector<SolutionConcept>& targets,
                   double tol = kDefaultTol);

// Three-level preference: target membership dominates; ties break on
// (stability, designated player's payoff) where stability is the negated
// maximum unilateral deviation gain; remaining ties are labeled Arbitrary
// and resolved by a lexicographic rule over action indices.
PreferencePair joint_prefer(const MixedProfile& a, const MixedProfile& b,
                            const NormalFormGame& game,
                            const std::vector<SolutionConcept>& targets,
                            int designated_player, double tol = kDefaultTol);

// Profiles outside the target set: every non-member pure cell (row-major)
// first, then perturbed mixed profiles failing the equilibrium check. Throws
// EmptyComplement when every pure cell belongs to the target set.
std::vector<MixedProfile> gen_negative_samples(const NormalFormGame& game,
                                               const std::vector<SolutionConcept>& targets,
                                               int n, std::uint64_t rng_seed);

// ---------------------------------------------------------------------------
// Dataset export
// ---------------------------------------------------------------------------

struct DatasetMeta {
  std::string kind;
  GameKind game = GameKind::PrisonersDilemma;
  PayoffParams params{};
  std::uint64_t seed = 0;
  int version = 1;
};

// One serialized JSON-lines record plus its kind tag.
struct DatasetRecord {
  std::string kind;
  std::string json;

  friend bool operator==(const DatasetRecord&, const DatasetRecord&) = default;
};

DatasetRecord to_record(const QAItem& item);
DatasetRecord to_record(const ActionSupervisionItem& item);
DatasetRecord to_record(const FeedbackScore& score);
DatasetRecord to_record(const PreferencePair& pair);
DatasetRecord to_record(const MixedProfile& profile);

QAItem qa_from_record(const DatasetRecord& record);
ActionSupervisionItem action_supervision_from_record(const DatasetRecord& record);
FeedbackScore feedback_from_record(const DatasetRecord& record);
PreferencePair preference_from_record(const DatasetRecord& record);
MixedProfile profile_from_record(const DatasetRecord& record);

// Writes a schema header line followed by one line per record. Every record
// must carry the declared kind; mixing kinds is rejected.
void export_dataset(const std::vector<DatasetRecord>& records, const std::string& kind,
                    const DatasetMeta& meta, const std::string& path);

// Appends records to an existing shard after checking its header declares
// the same kind.
void append_dataset(const std::vector<DatasetRecord>& records, const std::string& kind,
                    const std::string& path);

struct Dataset {
  DatasetMeta meta;
  std::vector<DatasetRecord> records;
};

Dataset import_dataset(const std::string& path);

}  // namespace parley
