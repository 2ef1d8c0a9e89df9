#include "parley/alignment.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>

#include <nlohmann/json.hpp>

#include "parley/errors.hpp"
#include "parley/rng.hpp"

namespace parley {

namespace {

using nlohmann::json;

std::string lowercase(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

std::string trim(std::string_view s) {
  std::size_t b = 0;
  std::size_t e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

std::vector<std::string> split_lines(const std::string& text) {
  std::vector<std::string> lines;
  std::string current;
  for (char c : text) {
    if (c == '\n') {
      lines.push_back(current);
      current.clear();
    } else if (c != '\r') {
      current.push_back(c);
    }
  }
  lines.push_back(current);
  return lines;
}

std::string format_number(double value) {
  std::ostringstream out;
  out << value;
  return out.str();
}

const std::map<std::string, std::string>& number_words() {
  static const std::map<std::string, std::string> table{
      {"zero", "0"},     {"one", "1"},       {"two", "2"},      {"three", "3"},
      {"four", "4"},     {"five", "5"},      {"six", "6"},      {"seven", "7"},
      {"eight", "8"},    {"nine", "9"},      {"ten", "10"},     {"eleven", "11"},
      {"twelve", "12"},  {"thirteen", "13"}, {"fourteen", "14"},
      {"fifteen", "15"}, {"sixteen", "16"},  {"seventeen", "17"},
      {"eighteen", "18"},{"nineteen", "19"}, {"twenty", "20"}};
  return table;
}

// Lowercased words with number words and numeric literals canonicalized, so
// "Zero", "0" and "0.0" all compare equal.
std::vector<std::string> normalized_tokens(const std::string& text) {
  std::vector<std::string> tokens;
  std::size_t i = 0;
  while (i < text.size()) {
    const unsigned char c = static_cast<unsigned char>(text[i]);
    const bool signed_number =
        (text[i] == '-' || text[i] == '+') && i + 1 < text.size() &&
        std::isdigit(static_cast<unsigned char>(text[i + 1]));
    if (std::isdigit(c) || signed_number) {
      std::size_t j = i + (signed_number ? 1 : 0);
      while (j < text.size() && std::isdigit(static_cast<unsigned char>(text[j]))) ++j;
      if (j + 1 < text.size() && text[j] == '.' &&
          std::isdigit(static_cast<unsigned char>(text[j + 1]))) {
        ++j;
        while (j < text.size() && std::isdigit(static_cast<unsigned char>(text[j]))) {
          ++j;
        }
      }
      const std::string literal = text.substr(i, j - i);
      tokens.push_back(format_number(std::strtod(literal.c_str(), nullptr)));
      i = j;
    } else if (std::isalpha(c)) {
      std::size_t j = i;
      while (j < text.size() &&
             (std::isalpha(static_cast<unsigned char>(text[j])) || text[j] == '\'')) {
        ++j;
      }
      std::string word = lowercase(text.substr(i, j - i));
      const auto it = number_words().find(word);
      tokens.push_back(it != number_words().end() ? it->second : std::move(word));
      i = j;
    } else {
      ++i;
    }
  }
  return tokens;
}

bool contains_tokens(const std::vector<std::string>& haystack,
                     const std::vector<std::string>& needle) {
  if (needle.empty() || needle.size() > haystack.size()) return false;
  for (std::size_t i = 0; i + needle.size() <= haystack.size(); ++i) {
    if (std::equal(needle.begin(), needle.end(), haystack.begin() + i)) return true;
  }
  return false;
}

std::string opponent_name(int seat) { return seat == 0 ? "Player B" : "Player A"; }

JointAction seat_joint(int seat, int own, int opp) {
  return seat == kRow ? JointAction{own, opp} : JointAction{opp, own};
}

int require_player_seat(const ContextWindow& transcript) {
  const int seat = transcript.player_id();
  if (seat < 0 || seat >= kNumPlayers) {
    throw ConfigInvalid("transcript window does not belong to a player seat");
  }
  return seat;
}

std::string compose_question(const QAItem& item) {
  const std::string opp = opponent_name(item.seat);
  std::ostringstream out;
  switch (item.form) {
    case QAItem::Template::OpponentPayoff:
      out << "If " << opp << " chose action " << item.opp_action
          << " and I chose action " << item.own_action << ", what payoff will "
          << opp << " receive?";
      break;
    case QAItem::Template::OwnPayoff:
      out << "If " << opp << " chose action " << item.opp_action
          << " and I chose action " << item.own_action
          << ", what payoff will I receive?";
      break;
    case QAItem::Template::InverseAction: {
      const auto game = make_classic_game(item.game, item.params);
      const double reward = game.payoff(
          seat_joint(item.seat, item.own_action, item.opp_action),
          opponent_of(item.seat));
      out << "If " << opp << " received a reward of " << format_number(reward)
          << " and I chose action " << item.own_action << ", what action did " << opp
          << " choose?";
      break;
    }
  }
  return out.str();
}

double expected_welfare(const NormalFormGame& game, const MixedProfile& profile) {
  return expected_payoff(game, profile, 0) + expected_payoff(game, profile, 1);
}

double max_pure_welfare(const NormalFormGame& game) {
  double best = -std::numeric_limits<double>::infinity();
  for (int r = 0; r < game.num_actions(kRow); ++r) {
    for (int c = 0; c < game.num_actions(kCol); ++c) {
      best = std::max(best, social_welfare(game, JointAction{r, c}));
    }
  }
  return best;
}

std::optional<JointAction> degenerate_cell(const MixedProfile& profile, double tol) {
  if (!profile.is_degenerate(tol)) return std::nullopt;
  const auto argmax = [](const std::vector<double>& probs) {
    return static_cast<int>(std::max_element(probs.begin(), probs.end()) -
                            probs.begin());
  };
  return JointAction{argmax(profile.row_probs), argmax(profile.col_probs)};
}

// The concept's cells, used to narrow best responses and to classify pure
// profiles. Throws UnachievableConcept when the game admits none.
std::vector<JointAction> concept_cells(const NormalFormGame& game,
                                       SolutionConcept target) {
  switch (target) {
    case SolutionConcept::PureNash:
    case SolutionConcept::SPE: {
      auto cells = pure_nash(game);
      if (cells.empty()) {
        throw UnachievableConcept(to_string(target) +
                                  " names no pure profile in this game");
      }
      return cells;
    }
    case SolutionConcept::ParetoEfficient: return pareto_frontier(game);
    case SolutionConcept::SocialWelfareMax: {
      const double best = max_pure_welfare(game);
      std::vector<JointAction> cells;
      for (int r = 0; r < game.num_actions(kRow); ++r) {
        for (int c = 0; c < game.num_actions(kCol); ++c) {
          if (social_welfare(game, JointAction{r, c}) >= best - kDefaultTol) {
            cells.push_back(JointAction{r, c});
          }
        }
      }
      return cells;
    }
    case SolutionConcept::MixedNash: {
      const auto equilibria = mixed_nash_2x2(game);
      if (equilibria.empty()) {
        throw UnachievableConcept("no mixed equilibrium in this game");
      }
      std::vector<JointAction> cells;
      for (int r = 0; r < game.num_actions(kRow); ++r) {
        for (int c = 0; c < game.num_actions(kCol); ++c) {
          for (const auto& eq : equilibria) {
            if (eq.row_probs[static_cast<std::size_t>(r)] > kDefaultTol &&
                eq.col_probs[static_cast<std::size_t>(c)] > kDefaultTol) {
              cells.push_back(JointAction{r, c});
              break;
            }
          }
        }
      }
      return cells;
    }
  }
  throw ConfigInvalid("unknown solution concept");
}

json params_to_json(const PayoffParams& params) {
  return json{{"a", params.a}, {"b", params.b}, {"c", params.c}, {"d", params.d}};
}

PayoffParams params_from_json(const json& obj) {
  PayoffParams params;
  params.a = obj.at("a").get<double>();
  params.b = obj.at("b").get<double>();
  params.c = obj.at("c").get<double>();
  params.d = obj.at("d").get<double>();
  return params;
}

GameKind game_from_json(const json& obj) {
  const auto kind = game_kind_from_string(obj.get<std::string>());
  if (!kind) throw ConfigInvalid("unknown game kind in record");
  return *kind;
}

json profile_to_json(const MixedProfile& profile) {
  return json{{"row", profile.row_probs}, {"col", profile.col_probs}};
}

MixedProfile profile_from_json(const json& obj) {
  MixedProfile profile;
  profile.row_probs = obj.at("row").get<std::vector<double>>();
  profile.col_probs = obj.at("col").get<std::vector<double>>();
  return profile;
}

json parse_record_json(const DatasetRecord& record, const std::string& expected_kind) {
  if (record.kind != expected_kind) {
    throw ConfigInvalid("record kind '" + record.kind + "', expected '" +
                        expected_kind + "'");
  }
  try {
    return json::parse(record.json);
  } catch (const json::exception& e) {
    throw ConfigInvalid(std::string("record is not valid JSON: ") + e.what());
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// Q/A items
// ---------------------------------------------------------------------------

std::string to_string(QAItem::Template form) {
  switch (form) {
    case QAItem::Template::OpponentPayoff: return "opponent_payoff";
    case QAItem::Template::OwnPayoff: return "own_payoff";
    case QAItem::Template::InverseAction: return "inverse_action";
  }
  return "unknown";
}

std::optional<QAItem::Template> qa_template_from_string(const std::string& name) {
  if (name == "opponent_payoff") return QAItem::Template::OpponentPayoff;
  if (name == "own_payoff") return QAItem::Template::OwnPayoff;
  if (name == "inverse_action") return QAItem::Template::InverseAction;
  return std::nullopt;
}

bool contains_answer(const std::string& text, const std::string& answer) {
  return contains_tokens(normalized_tokens(text), normalized_tokens(answer));
}

std::string recompute_ground_truth(const QAItem& item) {
  const auto game = make_classic_game(item.game, item.params);
  const auto joint = seat_joint(item.seat, item.own_action, item.opp_action);
  switch (item.form) {
    case QAItem::Template::OpponentPayoff:
      return format_number(game.payoff(joint, opponent_of(item.seat)));
    case QAItem::Template::OwnPayoff:
      return format_number(game.payoff(joint, item.seat));
    case QAItem::Template::InverseAction:
      return "action " + std::to_string(item.opp_action);
  }
  throw ConfigInvalid("unknown question template");
}

std::vector<QAItem> gen_qa_items(GameKind kind, const PayoffParams& params,
                                 const ContextWindow& transcript, int n,
                                 std::uint64_t rng_seed) {
  if (n < 1) throw ConfigInvalid("must request at least one item");
  const auto game = make_classic_game(kind, params);
  const int seat = require_player_seat(transcript);
  const std::string context = transcript.render();

  std::vector<QAItem> pool;
  auto consider = [&](QAItem item) {
    item.game = kind;
    item.params = params;
    item.seat = seat;
    item.player_context = context;
    item.ground_truth = recompute_ground_truth(item);
    item.question = compose_question(item);
    if (contains_answer(context, item.ground_truth)) return;  // leaks: discard
    pool.push_back(std::move(item));
  };

  for (int own = 0; own < game.num_actions(seat); ++own) {
    for (int opp = 0; opp < game.num_actions(opponent_of(seat)); ++opp) {
      for (const auto form :
           {QAItem::Template::OpponentPayoff, QAItem::Template::OwnPayoff}) {
        QAItem item;
        item.form = form;
        item.own_action = own;
        item.opp_action = opp;
        consider(std::move(item));
      }
    }
  }

  // Inverse questions need the observed reward to identify the opponent's
  // action uniquely under the conditioning.
  for (int own = 0; own < game.num_actions(seat); ++own) {
    const double r0 = game.payoff(seat_joint(seat, own, 0), opponent_of(seat));
    const double r1 = game.payoff(seat_joint(seat, own, 1), opponent_of(seat));
    if (r0 == r1) continue;
    for (int opp = 0; opp < game.num_actions(opponent_of(seat)); ++opp) {
      QAItem item;
      item.form = QAItem::Template::InverseAction;
      item.own_action = own;
      item.opp_action = opp;
      consider(std::move(item));
    }
  }

  if (pool.empty()) {
    throw ExhaustedTemplates("every question instantiation leaks into the transcript");
  }

  Rng rng(mix_seed(rng_seed, 0x51));
  std::vector<QAItem> items;
  items.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    items.push_back(pool[static_cast<std::size_t>(
        rng.uniform_int(0, static_cast<int>(pool.size()) - 1))]);
  }
  return items;
}

int grade_answer(const QAItem& item, const std::string& answer) {
  return contains_answer(answer, item.ground_truth) ? item.reward_correct
                                                    : item.reward_incorrect;
}

// ---------------------------------------------------------------------------
// Action supervision
// ---------------------------------------------------------------------------

std::vector<ActionSupervisionItem> gen_action_supervision(
    GameKind kind, const PayoffParams& params, const ContextWindow& transcript,
    SolutionConcept target) {
  const auto game = make_classic_game(kind, params);
  const int seat = require_player_seat(transcript);
  const auto cells = concept_cells(game, target);

  const auto& segments = transcript.segments();
  std::vector<std::size_t> decision_points;
  for (std::size_t i = 0; i < segments.size(); ++i) {
    if (segments[i].stage == StageTag::Action && segments[i].generated) {
      decision_points.push_back(i);
    }
  }
  if (decision_points.empty()) decision_points.push_back(segments.size());

  std::vector<ActionSupervisionItem> items;
  for (const auto point : decision_points) {
    std::string prefix;
    for (std::size_t i = 0; i < point; ++i) {
      if (segments[i].stage == StageTag::Action) continue;
      if (!prefix.empty()) prefix += "\n\n";
      prefix += segments[i].text;
    }

    for (int opp = 0; opp < game.num_actions(opponent_of(seat)); ++opp) {
      const auto br = best_response(game, seat, opp);
      std::vector<int> narrowed;
      for (const int action : br) {
        const auto joint = seat_joint(seat, action, opp);
        if (std::find(cells.begin(), cells.end(), joint) != cells.end()) {
          narrowed.push_back(action);
        }
      }
      ActionSupervisionItem item;
      item.game = kind;
      item.params = params;
      item.seat = seat;
      item.target = target;
      item.conditioned_opponent_action = opp;
      item.context_prefix = prefix;
      item.question = "If " + opponent_name(seat) + " chose action " +
                      std::to_string(opp) + ", what should your action be?";
      item.target_actions = narrowed.empty() ? br : narrowed;
      for (const int action : item.target_actions) {
        item.target_labels.push_back(game.action_label(seat, action));
      }
      items.push_back(std::move(item));
    }
  }
  return items;
}

int check_format(const std::string& response, const ParseRules& rules) {
  ActionParse parsed;
  try {
    parsed = parse_action(response, rules);
  } catch (const UnparseableNoDefault&) {
    return -1;
  }
  if (!parsed.parse_ok) return -1;

  const std::string want = "ACTION: " + parsed.label;
  for (const auto& raw : split_lines(response)) {
    if (trim(raw) == want) return 1;
  }
  return -1;
}

// ---------------------------------------------------------------------------
// Evaluator feedback
// ---------------------------------------------------------------------------

std::vector<double> normalize_feedback(const std::vector<double>& raw) {
  if (raw.empty()) throw ConfigInvalid("feedback batch is empty");
  double lo = raw[0];
  double hi = raw[0];
  for (const double v : raw) {
    if (v < 0.0 || v > 10.0) {
      throw ConfigInvalid("raw score " + format_number(v) + " outside [0, 10]");
    }
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  std::vector<double> out;
  out.reserve(raw.size());
  for (const double v : raw) {
    out.push_back(hi == lo ? 0.0 : 2.0 * (v - lo) / (hi - lo) - 1.0);
  }
  return out;
}

void normalize_feedback(std::vector<FeedbackScore>& batch) {
  std::vector<double> raw;
  raw.reserve(batch.size());
  for (const auto& score : batch) raw.push_back(score.raw);
  const auto normalized = normalize_feedback(raw);
  for (std::size_t i = 0; i < batch.size(); ++i) {
    batch[i].normalized = normalized[i];
  }
}

ContextWindow build_centralized_eval_context(
    const std::vector<const ContextWindow*>& players, int subject) {
  if (players.empty()) throw ConfigInvalid("evaluator needs player windows");
  if (subject < 0 || subject >= kNumPlayers) {
    throw ConfigInvalid("evaluation subject is not a player");
  }

  SystemPromptSpec spec;
  spec.role_definition =
      "You are a centralized evaluator reviewing a finished multi-agent game. "
      "You see every player's full context window. Judge behavior, not luck.";
  spec.task_context.text =
      "Give one broad assessment of the named player's overall behavior.";

  ContextWindow window(-1);
  window.append(StageTag::System, SegmentAuthor::environment(),
                build_system_prompt(spec), false, 0);

  std::ostringstream body;
  for (const auto* player : players) {
    body << "## Player " << player->player_id() << "\n\n";
    bool any = false;
    for (const auto& segment : player->segments()) {
      if (segment.env_private) continue;
      if (any) body << "\n\n";
      body << segment.text;
      any = true;
    }
    if (!any) body << "(no activity)";
    body << "\n\n";
  }
  body << "Evaluate Player " << subject
       << "'s overall behavior on a scale of 0-10. Reply on one line as "
          "SCORE: <0-10>.";
  window.append(StageTag::Thinking, SegmentAuthor::environment(), body.str(), false, 0);
  return window;
}

ContextWindow build_team_eval_context(const ContextWindow& peer, int subject) {
  if (subject < 0 || subject >= kNumPlayers) {
    throw ConfigInvalid("evaluation subject is not a player");
  }
  if (subject == peer.player_id()) {
    throw ConfigInvalid("a player does not grade itself");
  }

  SystemPromptSpec spec;
  spec.role_definition =
      "You are Player " + std::to_string(peer.player_id()) +
      ", asked to judge a fellow player from your own seat. Use only what "
      "your context shows.";

  ContextWindow window(peer.player_id());
  window.append(StageTag::System, SegmentAuthor::environment(),
                build_system_prompt(spec), false, 0);

  std::ostringstream body;
  bool any = false;
  for (const auto& segment : peer.segments()) {
    if (segment.env_private) continue;
    if (any) body << "\n\n";
    body << segment.text;
    any = true;
  }
  if (!any) body << "(no activity)";
  body << "\n\nEvaluate Player " << subject
       << "'s overall behavior on a scale of 0-10. Reply on one line as "
          "SCORE: <0-10>.";
  window.append(StageTag::Thinking, SegmentAuthor::environment(), body.str(), false, 0);
  return window;
}

std::optional<double> parse_score(const std::string& text) {
  std::optional<double> found;
  for (const auto& raw : split_lines(text)) {
    const std::string line = trim(raw);
    if (line.rfind("SCORE:", 0) != 0) continue;
    const std::string body = trim(line.substr(6));
    if (body.empty()) continue;
    char* end = nullptr;
    const double value = std::strtod(body.c_str(), &end);
    if (end != body.c_str() + body.size()) continue;
    if (value < 0.0 || value > 10.0) continue;
    found = value;
  }
  return found;
}

// ---------------------------------------------------------------------------
// Joint strategy preferences
// ---------------------------------------------------------------------------

std::string to_string(PreferencePair::Label label) {
  switch (label) {
    case PreferencePair::Label::A: return "a";
    case PreferencePair::Label::B: return "b";
    case PreferencePair::Label::TieBrokenA: return "tie_broken_a";
    case PreferencePair::Label::TieBrokenB: return "tie_broken_b";
    case PreferencePair::Label::Arbitrary: return "arbitrary";
  }
  return "unknown";
}

std::optional<PreferencePair::Label> preference_label_from_string(
    const std::string& name) {
  if (name == "a") return PreferencePair::Label::A;
  if (name == "b") return PreferencePair::Label::B;
  if (name == "tie_broken_a") return PreferencePair::Label::TieBrokenA;
  if (name == "tie_broken_b") return PreferencePair::Label::TieBrokenB;
  if (name == "arbitrary") return PreferencePair::Label::Arbitrary;
  return std::nullopt;
}

bool in_target_set(const NormalFormGame& game, const MixedProfile& profile,
                   const std::vector<SolutionConcept>& targets, double tol) {
  for (const auto target : targets) {
    switch (target) {
      case SolutionConcept::PureNash:
      case SolutionConcept::SPE: {
        const auto cell = degenerate_cell(profile, tol);
        if (!cell) break;
        const auto cells = pure_nash(game);
        if (std::find(cells.begin(), cells.end(), *cell) != cells.end()) return true;
        break;
      }
      case SolutionConcept::MixedNash:
        if (is_nash(game, profile, tol)) return true;
        break;
      case SolutionConcept::ParetoEfficient: {
        const auto cell = degenerate_cell(profile, tol);
        if (!cell) break;
        const auto cells = pareto_frontier(game);
        if (std::find(cells.begin(), cells.end(), *cell) != cells.end()) return true;
        break;
      }
      case SolutionConcept::SocialWelfareMax:
        if (expected_welfare(game, profile) >= max_pure_welfare(game) - tol) {
          return true;
        }
        break;
    }
  }
  return false;
}

PreferencePair joint_prefer(const MixedProfile& a, const MixedProfile& b,
                            const NormalFormGame& game,
                            const std::vector<SolutionConcept>& targets,
                            int designated_player, double tol) {
  if (designated_player < 0 || designated_player >= kNumPlayers) {
    throw ConfigInvalid("designated player out of range");
  }

  PreferencePair pair;
  pair.profile_a = a;
  pair.profile_b = b;
  pair.targets = targets;
  pair.designated_player = designated_player;

  const bool a_in = in_target_set(game, a, targets, tol);
  const bool b_in = in_target_set(game, b, targets, tol);
  if (a_in != b_in) {
    pair.label = a_in ? PreferencePair::Label::A : PreferencePair::Label::B;
    pair.preferred = a_in ? 0 : 1;
    return pair;
  }

  const auto stability = [&](const MixedProfile& p) {
    return -std::max(regret(game, p, 0), regret(game, p, 1));
  };
  const double stability_gap = stability(a) - stability(b);
  if (std::abs(stability_gap) > tol) {
    pair.label = stability_gap > 0 ? PreferencePair::Label::TieBrokenA
                                   : PreferencePair::Label::TieBrokenB;
    pair.preferred = stability_gap > 0 ? 0 : 1;
    return pair;
  }

  const double payoff_gap = expected_payoff(game, a, designated_player) -
                            expected_payoff(game, b, designated_player);
  if (std::abs(payoff_gap) > tol) {
    pair.label = payoff_gap > 0 ? PreferencePair::Label::TieBrokenA
                                : PreferencePair::Label::TieBrokenB;
    pair.preferred = payoff_gap > 0 ? 0 : 1;
    return pair;
  }

  // Full tie: prefer the profile weighting lower action indices more.
  pair.label = PreferencePair::Label::Arbitrary;
  pair.preferred = 0;
  const auto lex = [&](const std::vector<double>& pa, const std::vector<double>& pb) {
    for (std::size_t i = 0; i < std::min(pa.size(), pb.size()); ++i) {
      if (std::abs(pa[i] - pb[i]) > tol) return pa[i] > pb[i] ? 0 : 1;
    }
    return -1;
  };
  const int row_cmp = lex(a.row_probs, b.row_probs);
  if (row_cmp >= 0) {
    pair.preferred = row_cmp;
  } else {
    const int col_cmp = lex(a.col_probs, b.col_probs);
    if (col_cmp >= 0) pair.preferred = col_cmp;
  }
  return pair;
}

std::vector<MixedProfile> gen_negative_samples(const NormalFormGame& game,
                                               const std::vector<SolutionConcept>& targets,
                                               int n, std::uint64_t rng_seed) {
  if (n < 1) throw ConfigInvalid("must request at least one sample");
  if (targets.empty()) throw ConfigInvalid("no target concepts given");

  std::vector<MixedProfile> complement;
  for (int r = 0; r < game.num_actions(kRow); ++r) {
    for (int c = 0; c < game.num_actions(kCol); ++c) {
      const auto profile = MixedProfile::degenerate(game, JointAction{r, c});
      if (!in_target_set(game, profile, targets)) complement.push_back(profile);
    }
  }
  if (complement.empty()) {
    throw EmptyComplement("every pure cell satisfies the target concepts");
  }

  std::vector<MixedProfile> samples;
  for (const auto& profile : complement) {
    if (static_cast<int>(samples.size()) >= n) break;
    samples.push_back(profile);
  }

  Rng rng(mix_seed(rng_seed, 0x9e));
  int attempts = 0;
  const int max_attempts = 200 * n;
  while (static_cast<int>(samples.size()) < n && attempts++ < max_attempts) {
    const double p = rng.uniform01();
    const double q = rng.uniform01();
    MixedProfile profile{{p, 1.0 - p}, {q, 1.0 - q}};
    if (is_nash(game, profile)) continue;
    if (in_target_set(game, profile, targets)) continue;
    const auto same = [&](const MixedProfile& other) {
      return other.row_probs == profile.row_probs &&
             other.col_probs == profile.col_probs;
    };
    if (std::any_of(samples.begin(), samples.end(), same)) continue;
    samples.push_back(std::move(profile));
  }
  return samples;
}

// ---------------------------------------------------------------------------
// Dataset export
// ---------------------------------------------------------------------------

DatasetRecord to_record(const QAItem& item) {
  json obj{{"kind", "qa"},
           {"template", to_string(item.form)},
           {"game", to_string(item.game)},
           {"params", params_to_json(item.params)},
           {"seat", item.seat},
           {"own_action", item.own_action},
           {"opp_action", item.opp_action},
           {"player_context", item.player_context},
           {"question", item.question},
           {"ground_truth", item.ground_truth},
           {"reward_correct", item.reward_correct},
           {"reward_incorrect", item.reward_incorrect}};
  return {"qa", obj.dump()};
}

DatasetRecord to_record(const ActionSupervisionItem& item) {
  json obj{{"kind", "action_supervision"},
           {"game", to_string(item.game)},
           {"params", params_to_json(item.params)},
           {"seat", item.seat},
           {"target", to_string(item.target)},
           {"conditioned_opponent_action", item.conditioned_opponent_action},
           {"context_prefix", item.context_prefix},
           {"question", item.question},
           {"target_actions", item.target_actions},
           {"target_labels", item.target_labels}};
  return {"action_supervision", obj.dump()};
}

DatasetRecord to_record(const FeedbackScore& score) {
  json obj{{"kind", "feedback"},
           {"evaluator",
            score.evaluator.kind == Evaluator::Kind::Centralized ? "centralized"
                                                                 : "team"},
           {"peer", score.evaluator.peer},
           {"subject", score.subject},
           {"raw", score.raw},
           {"normalized", score.normalized},
           {"batch", score.batch}};
  return {"feedback", obj.dump()};
}

DatasetRecord to_record(const PreferencePair& pair) {
  json targets = json::array();
  for (const auto target : pair.targets) targets.push_back(to_string(target));
  json obj{{"kind", "preference"},
           {"profile_a", profile_to_json(pair.profile_a)},
           {"profile_b", profile_to_json(pair.profile_b)},
           {"targets", targets},
           {"designated_player", pair.designated_player},
           {"label", to_string(pair.label)},
           {"preferred", pair.preferred}};
  return {"preference", obj.dump()};
}

DatasetRecord to_record(const MixedProfile& profile) {
  json obj{{"kind", "profile"},
           {"row", profile.row_probs},
           {"col", profile.col_probs}};
  return {"profile", obj.dump()};
}

QAItem qa_from_record(const DatasetRecord& record) {
  const auto obj = parse_record_json(record, "qa");
  try {
    QAItem item;
    const auto form = qa_template_from_string(obj.at("template").get<std::string>());
    if (!form) throw ConfigInvalid("unknown question template in record");
    item.form = *form;
    item.game = game_from_json(obj.at("game"));
    item.params = params_from_json(obj.at("params"));
    item.seat = obj.at("seat").get<int>();
    item.own_action = obj.at("own_action").get<int>();
    item.opp_action = obj.at("opp_action").get<int>();
    item.player_context = obj.at("player_context").get<std::string>();
    item.question = obj.at("question").get<std::string>();
    item.ground_truth = obj.at("ground_truth").get<std::string>();
    item.reward_correct = obj.at("reward_correct").get<int>();
    item.reward_incorrect = obj.at("reward_incorrect").get<int>();
    return item;
  } catch (const json::exception& e) {
    throw ConfigInvalid(std::string("malformed qa record: ") + e.what());
  }
}

ActionSupervisionItem action_supervision_from_record(const DatasetRecord& record) {
  const auto obj = parse_record_json(record, "action_supervision");
  try {
    ActionSupervisionItem item;
    item.game = game_from_json(obj.at("game"));
    item.params = params_from_json(obj.at("params"));
    item.seat = obj.at("seat").get<int>();
    const auto target = solution_concept_from_string(obj.at("target").get<std::string>());
    if (!target) throw ConfigInvalid("unknown target concept in record");
    item.target = *target;
    item.conditioned_opponent_action = obj.at("conditioned_opponent_action").get<int>();
    item.context_prefix = obj.at("context_prefix").get<std::string>();
    item.question = obj.at("question").get<std::string>();
    item.target_actions = obj.at("target_actions").get<std::vector<int>>();
    item.target_labels = obj.at("target_labels").get<std::vector<std::string>>();
    return item;
  } catch (const json::exception& e) {
    throw ConfigInvalid(std::string("malformed action record: ") + e.what());
  }
}

FeedbackScore feedback_from_record(const DatasetRecord& record) {
  const auto obj = parse_record_json(record, "feedback");
  try {
    FeedbackScore score;
    score.evaluator.kind = obj.at("evaluator").get<std::string>() == "centralized"
                               ? Evaluator::Kind::Centralized
                               : Evaluator::Kind::Team;
    score.evaluator.peer = obj.at("peer").get<int>();
    score.subject = obj.at("subject").get<int>();
    score.raw = obj.at("raw").get<double>();
    score.normalized = obj.at("normalized").get<double>();
    score.batch = obj.at("batch").get<int>();
    return score;
  } catch (const json::exception& e) {
    throw ConfigInvalid(std::string("malformed feedback record: ") + e.what());
  }
}

PreferencePair preference_from_record(const DatasetRecord& record) {
  const auto obj = parse_record_json(record, "preference");
  try {
    PreferencePair pair;
    pair.profile_a = profile_from_json(obj.at("profile_a"));
    pair.profile_b = profile_from_json(obj.at("profile_b"));
    for (const auto& name : obj.at("targets")) {
      const auto target = solution_concept_from_string(name.get<std::string>());
      if (!target) throw ConfigInvalid("unknown target concept in record");
      pair.targets.push_back(*target);
    }
    pair.designated_player = obj.at("designated_player").get<int>();
    const auto label = preference_label_from_string(obj.at("label").get<std::string>());
    if (!label) throw ConfigInvalid("unknown preference label in record");
    pair.label = *label;
    pair.preferred = obj.at("preferred").get<int>();
    return pair;
  } catch (const json::exception& e) {
    throw ConfigInvalid(std::string("malformed preference record: ") + e.what());
  }
}

MixedProfile profile_from_record(const DatasetRecord& record) {
  const auto obj = parse_record_json(record, "profile");
  try {
    return profile_from_json(obj);
  } catch (const json::exception& e) {
    throw ConfigInvalid(std::string("malformed profile record: ") + e.what());
  }
}

void export_dataset(const std::vector<DatasetRecord>& records, const std::string& kind,
                    const DatasetMeta& meta, const std::string& path) {
  if (kind.empty()) throw ConfigInvalid("dataset kind is empty");
  for (const auto& record : records) {
    if (record.kind != kind) {
      throw ConfigInvalid("dataset of kind '" + kind + "' cannot hold a '" +
                          record.kind + "' record");
    }
  }

  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path + "' for writing");

  json header{{"record", "header"},
              {"kind", kind},
              {"game", to_string(meta.game)},
              {"params", params_to_json(meta.params)},
              {"seed", meta.seed},
              {"version", meta.version}};
  out << header.dump() << "\n";
  for (const auto& record : records) out << record.json << "\n";
  if (!out) throw IoError("failed while writing '" + path + "'");
}

void append_dataset(const std::vector<DatasetRecord>& records, const std::string& kind,
                    const std::string& path) {
  for (const auto& record : records) {
    if (record.kind != kind) {
      throw ConfigInvalid("dataset of kind '" + kind + "' cannot hold a '" +
                          record.kind + "' record");
    }
  }

  {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open '" + path + "' for reading");
    std::string line;
    if (!std::getline(in, line)) throw IoError("'" + path + "' is empty");
    std::string declared;
    try {
      const auto header = json::parse(line);
      if (header.value("record", "") != "header") {
        throw IoError("'" + path + "' is missing its schema header");
      }
      declared = header.at("kind").get<std::string>();
    } catch (const json::exception& e) {
      throw IoError("malformed header in '" + path + "': " + e.what());
    }
    if (declared != kind) {
      throw ConfigInvalid("shard '" + path + "' holds '" + declared +
                          "' records, not '" + kind + "'");
    }
  }

  std::ofstream out(path, std::ios::app);
  if (!out) throw IoError("cannot open '" + path + "' for appending");
  for (const auto& record : records) out << record.json << "\n";
  if (!out) throw IoError("failed while writing '" + path + "'");
}

Dataset import_dataset(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "' for reading");

  Dataset dataset;
  std::string line;
  if (!std::getline(in, line)) throw IoError("'" + path + "' is empty");
  try {
    const auto header = json::parse(line);
    if (header.value("record", "") != "header") {
      throw IoError("'" + path + "' is missing its schema header");
    }
    dataset.meta.kind = header.at("kind").get<std::string>();
    dataset.meta.game = game_from_json(header.at("game"));
    dataset.meta.params = params_from_json(header.at("params"));
    dataset.meta.seed = header.at("seed").get<std::uint64_t>();
    dataset.meta.version = header.at("version").get<int>();
  } catch (const json::exception& e) {
    throw IoError("malformed header in '" + path + "': " + e.what());
  }

  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    dataset.records.push_back(DatasetRecord{dataset.meta.kind, line});
  }
  return dataset;
}

}  // namespace parley
