#include "parley/protocol.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

#include "parley/errors.hpp"

namespace parley {

namespace {

bool is_word_char(unsigned char c) {
  return std::isalnum(c) != 0 || c == '_' || c == '\'';
}

std::string lowercase(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
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

// Case-insensitive whole-word containment of `label` in `text`.
bool contains_label(const std::string& lower_text, const std::string& lower_label) {
  if (lower_label.empty()) return false;
  std::size_t pos = 0;
  while ((pos = lower_text.find(lower_label, pos)) != std::string::npos) {
    const bool left_ok =
        pos == 0 || !is_word_char(static_cast<unsigned char>(lower_text[pos - 1]));
    const std::size_t end = pos + lower_label.size();
    const bool right_ok =
        end >= lower_text.size() ||
        !is_word_char(static_cast<unsigned char>(lower_text[end]));
    if (left_ok && right_ok) return true;
    ++pos;
  }
  return false;
}

std::string format_number(double v) {
  std::ostringstream os;
  os << v;
  return os.str();
}

}  // namespace

std::string to_string(StageTag stage) {
  switch (stage) {
    case StageTag::System: return "system";
    case StageTag::Thinking: return "thinking";
    case StageTag::Comm: return "comm";
    case StageTag::Action: return "action";
    case StageTag::Reflection: return "reflection";
    case StageTag::Recall: return "recall";
  }
  return "unknown";
}

std::optional<StageTag> stage_tag_from_string(const std::string& name) {
  if (name == "system") return StageTag::System;
  if (name == "thinking") return StageTag::Thinking;
  if (name == "comm") return StageTag::Comm;
  if (name == "action") return StageTag::Action;
  if (name == "reflection") return StageTag::Reflection;
  if (name == "recall") return StageTag::Recall;
  return std::nullopt;
}

int stage_rank(StageTag stage) { return static_cast<int>(stage); }

std::string SegmentAuthor::describe() const {
  switch (kind) {
    case Kind::Player: return "player_" + std::to_string(player);
    case Kind::Designer: return "designer";
    case Kind::Environment: return "environment";
  }
  return "unknown";
}

ContextWindow::ContextWindow(int player_id, Tokenizer tokenizer)
    : player_id_(player_id), tokenizer_(std::move(tokenizer)) {
  if (!tokenizer_) throw ConfigInvalid("context window needs a tokenizer");
}

const Segment& ContextWindow::append(StageTag stage, SegmentAuthor author,
                                     std::string text, bool generated,
                                     int iteration, int round, bool env_private) {
  if (iteration < last_iteration_) {
    throw OrderingViolation("segment iteration moved backwards");
  }
  if (iteration == last_iteration_ && stage_rank(stage) < last_rank_) {
    throw OrderingViolation("segment stage out of order within iteration");
  }
  Segment seg;
  seg.stage = stage;
  seg.author = author;
  seg.token_count = tokenizer_(text);
  seg.text = std::move(text);
  seg.generated = generated;
  seg.iteration = iteration;
  seg.round = round;
  seg.env_private = env_private;
  total_tokens_ += seg.token_count;
  last_iteration_ = iteration;
  last_rank_ = stage_rank(stage);
  segments_.push_back(std::move(seg));
  return segments_.back();
}

std::string ContextWindow::render() const {
  std::string out;
  for (const auto& seg : segments_) {
    if (!out.empty()) out += "\n\n";
    out += seg.text;
  }
  return out;
}

void ContextWindow::reset() {
  segments_.clear();
  total_tokens_ = 0;
  last_iteration_ = -1;
  last_rank_ = -1;
}

namespace {

std::string concept_phrase(SolutionConcept target) {
  switch (target) {
    case SolutionConcept::PureNash: return "a pure Nash equilibrium";
    case SolutionConcept::MixedNash: return "a mixed Nash equilibrium";
    case SolutionConcept::ParetoEfficient: return "a Pareto efficient outcome";
    case SolutionConcept::SocialWelfareMax: return "the social welfare maximum";
    case SolutionConcept::SPE: return "a subgame perfect equilibrium";
  }
  return "an equilibrium";
}

}  // namespace

std::string build_system_prompt(const SystemPromptSpec& spec) {
  std::vector<std::pair<std::string, std::string>> sections;
  sections.emplace_back("# Role", spec.role_definition);
  sections.emplace_back("# Task", spec.task_context.text);

  std::string multi;
  if (spec.multi_agent.target.has_value()) {
    multi = "Aim for " + concept_phrase(*spec.multi_agent.target) + ".";
  }
  if (!spec.multi_agent.guidance.empty()) {
    if (!multi.empty()) multi += "\n";
    multi += spec.multi_agent.guidance;
  }
  sections.emplace_back("# Multi-Agent Context", multi);
  sections.emplace_back("# Memory", spec.memory_context);
  sections.emplace_back("# Mechanism Rules", spec.mechanism_rules);

  std::string out;
  for (const auto& [header, body] : sections) {
    if (body.empty()) continue;
    if (!out.empty()) out += "\n\n";
    out += header;
    out += "\n";
    out += body;
  }
  return out;
}

void ParseRules::validate() const {
  if (admissible_actions.empty()) {
    throw ConfigInvalid("parse rules need at least one admissible action");
  }
  for (const auto& a : admissible_actions) {
    if (trim(a).empty()) throw ConfigInvalid("admissible action label is blank");
  }
  if (default_action.has_value()) {
    const bool known =
        std::find(admissible_actions.begin(), admissible_actions.end(),
                  *default_action) != admissible_actions.end();
    if (!known) throw ConfigInvalid("default action is not admissible");
  }
}

ParseRules ParseRules::for_game(const NormalFormGame& game) {
  ParseRules rules;
  rules.admissible_actions = game.action_labels(kRow);
  std::string labels;
  for (const auto& l : rules.admissible_actions) {
    if (!labels.empty()) labels += " or ";
    labels += l;
  }
  rules.format_instruction =
      "State your final choice on its own line as ACTION: " + labels + ".";
  return rules;
}

ParseRules ParseRules::for_woa() {
  ParseRules rules;
  rules.admissible_actions = {"Continue", "Surrender"};
  rules.default_action = "Continue";
  rules.format_instruction =
      "State your final choice on its own line as ACTION: Continue or Surrender.";
  return rules;
}

std::string describe_matrix_task(const NormalFormGame& game, int seat,
                                 const ParseRules& rules, bool masked) {
  const int opp = opponent_of(seat);
  std::ostringstream os;
  if (masked) {
    os << "You are playing a two-player game against one opponent.\n";
  } else {
    os << "You are playing a two-player simultaneous-move game against one "
          "opponent. Both of you pick an action at the same time and the "
          "joint choice decides both payoffs.\n";
  }
  os << "Your actions: ";
  const auto& own = game.action_labels(seat);
  for (std::size_t i = 0; i < own.size(); ++i) {
    if (i) os << ", ";
    os << own[i];
  }
  os << ".\n";
  if (!masked) {
    os << "Payoffs (you, opponent):\n";
    const auto& theirs = game.action_labels(opp);
    for (std::size_t a = 0; a < own.size(); ++a) {
      for (std::size_t b = 0; b < theirs.size(); ++b) {
        const JointAction joint = seat == kRow
                                      ? JointAction{static_cast<int>(a),
                                                    static_cast<int>(b)}
                                      : JointAction{static_cast<int>(b),
                                                    static_cast<int>(a)};
        os << "  You " << own[a] << ", opponent " << theirs[b] << ": you "
           << format_number(game.payoff(joint, seat)) << ", opponent "
           << format_number(game.payoff(joint, opp)) << ".\n";
      }
    }
  }
  os << rules.format_instruction;
  return os.str();
}

std::string describe_woa_task(const WoAConfig& config, int seat,
                              const ParseRules& rules, bool masked) {
  std::ostringstream os;
  if (masked) {
    os << "You are in a standoff against one opponent. Each period you choose "
          "Continue or Surrender.\n";
  } else {
    os << "You are in a war of attrition against one opponent. Each period "
          "both of you choose Continue or Surrender at the same time. "
          "Continuing costs you "
       << format_number(config.cost[seat]) << " per period, discounted by "
       << format_number(config.gamma)
       << " each period. If your opponent surrenders first you win a prize of "
       << format_number(config.value[seat])
       << " minus your accumulated cost. If you surrender you pay only your "
          "accumulated cost. At period "
       << config.terminal_t
       << " the war ends in forced mutual surrender and both sides pay their "
          "accumulated cost.\n";
  }
  os << rules.format_instruction;
  return os.str();
}

bool CommConfig::allows(int sender, int recipient) const {
  if (sender < 0 || sender >= static_cast<int>(graph.size())) return false;
  const auto& targets = graph[static_cast<std::size_t>(sender)];
  return std::find(targets.begin(), targets.end(), recipient) != targets.end();
}

void CommConfig::validate(int num_players) const {
  if (rounds < 0) throw ConfigInvalid("comm rounds must be nonnegative");
  if (static_cast<int>(graph.size()) != num_players) {
    throw ConfigInvalid("comm graph must have one adjacency list per player");
  }
  for (const auto& targets : graph) {
    for (int t : targets) {
      if (t < 0 || t >= num_players) {
        throw ConfigInvalid("comm graph edge references an unknown player");
      }
    }
  }
  if (scheduling == Scheduling::Sequential) {
    std::vector<int> sorted = order;
    std::sort(sorted.begin(), sorted.end());
    std::vector<int> expected(static_cast<std::size_t>(num_players));
    for (int i = 0; i < num_players; ++i) expected[static_cast<std::size_t>(i)] = i;
    if (sorted != expected) {
      throw ConfigInvalid("sequential order must be a permutation of the players");
    }
  }
}

CommConfig CommConfig::disabled(int num_players) {
  CommConfig c;
  c.rounds = 0;
  c.graph.assign(static_cast<std::size_t>(num_players), {});
  return c;
}

CommConfig CommConfig::complete(int num_players, int rounds, Scheduling scheduling) {
  CommConfig c;
  c.rounds = rounds;
  c.scheduling = scheduling;
  c.graph.assign(static_cast<std::size_t>(num_players), {});
  for (int p = 0; p < num_players; ++p) {
    for (int q = 0; q < num_players; ++q) {
      if (p != q) c.graph[static_cast<std::size_t>(p)].push_back(q);
    }
  }
  if (scheduling == Scheduling::Sequential) {
    for (int p = 0; p < num_players; ++p) c.order.push_back(p);
  }
  return c;
}

RouteResult route_messages(const std::vector<Message>& messages,
                           const CommConfig& comm, int round, int num_players) {
  RouteResult result;
  result.inbox.resize(static_cast<std::size_t>(num_players));
  for (const auto& m : messages) {
    if (m.round != round) {
      throw ConfigInvalid("message routed under a different round");
    }
    for (int r : m.recipients) {
      if (r >= 0 && r < num_players && comm.allows(m.sender, r)) {
        result.inbox[static_cast<std::size_t>(r)].push_back(m);
      } else {
        result.violations.push_back(GraphViolation{m.sender, r, round, m.text});
      }
    }
  }
  return result;
}

CommParse parse_comm(const std::string& text, int sender, int round,
                     const std::vector<std::string>& player_names) {
  CommParse out;
  const int num_players = static_cast<int>(player_names.size());

  auto resolve_target = [&](const std::string& raw) -> std::optional<int> {
    const std::string token = lowercase(trim(raw));
    if (token.empty()) return std::nullopt;
    if (token == "all") return -1;
    for (int p = 0; p < num_players; ++p) {
      const std::string name = lowercase(player_names[static_cast<std::size_t>(p)]);
      if (token == name) return p;
      const auto space = name.rfind(' ');
      if (space != std::string::npos && token == name.substr(space + 1)) return p;
    }
    for (int p = 0; p < num_players; ++p) {
      if (token == std::to_string(p)) return p;
    }
    return std::nullopt;
  };

  for (const auto& raw_line : split_lines(text)) {
    const std::string line = trim(raw_line);
    if (line.empty()) continue;
    const std::string lower = lowercase(line);
    if (lower == "pass" || lower == "pass.") continue;
    if (lower.rfind("to ", 0) != 0) continue;
    const auto colon = line.find(':');
    if (colon == std::string::npos) {
      out.diagnostics.push_back("directive without ':' ignored: " + line);
      continue;
    }
    const std::string target_raw = line.substr(3, colon - 3);
    const std::string body = trim(line.substr(colon + 1));
    const auto target = resolve_target(target_raw);
    if (!target.has_value()) {
      out.diagnostics.push_back("unknown recipient '" + trim(target_raw) + "'");
      continue;
    }
    Message m;
    m.sender = sender;
    m.round = round;
    m.text = body;
    if (*target == -1) {
      for (int p = 0; p < num_players; ++p) {
        if (p != sender) m.recipients.push_back(p);
      }
      if (m.recipients.empty()) {
        out.diagnostics.push_back("broadcast with no other players ignored");
        continue;
      }
    } else if (*target == sender) {
      out.diagnostics.push_back("message to self ignored");
      continue;
    } else {
      m.recipients.push_back(*target);
    }
    out.messages.push_back(std::move(m));
  }
  out.abstained = out.messages.empty();
  return out;
}

ActionParse parse_action(const std::string& response, const ParseRules& rules) {
  rules.validate();

  std::vector<std::string> lower_labels;
  lower_labels.reserve(rules.admissible_actions.size());
  for (const auto& l : rules.admissible_actions) lower_labels.push_back(lowercase(l));

  // Distinct admissible labels present in a piece of text.
  auto labels_in = [&](const std::string& lower_text) {
    std::vector<std::size_t> found;
    for (std::size_t i = 0; i < lower_labels.size(); ++i) {
      if (contains_label(lower_text, lower_labels[i])) found.push_back(i);
    }
    return found;
  };

  std::optional<std::string> designated;
  for (const auto& raw_line : split_lines(response)) {
    const std::string line = trim(raw_line);
    const std::string lower = lowercase(line);
    if (lower.rfind("action", 0) != 0) continue;
    std::size_t pos = 6;
    while (pos < lower.size() && lower[pos] == ' ') ++pos;
    if (pos < lower.size() && lower[pos] == ':') designated = lower;
  }

  if (designated.has_value()) {
    const auto found = labels_in(*designated);
    if (found.size() == 1) return {rules.admissible_actions[found[0]], true};
  } else {
    const auto found = labels_in(lowercase(response));
    if (found.size() == 1) return {rules.admissible_actions[found[0]], true};
  }

  if (rules.default_action.has_value()) return {*rules.default_action, false};
  throw UnparseableNoDefault("no unique admissible action in response");
}

int count_tokens(std::string_view text) { return approx_token_count(text); }

std::string render_template(const std::string& tmpl,
                            const std::map<std::string, std::string>& values) {
  std::string out;
  std::size_t pos = 0;
  while (pos < tmpl.size()) {
    const auto open = tmpl.find("{{", pos);
    if (open == std::string::npos) {
      out.append(tmpl, pos, std::string::npos);
      break;
    }
    out.append(tmpl, pos, open - pos);
    const auto close = tmpl.find("}}", open + 2);
    if (close == std::string::npos) {
      throw ConfigInvalid("unterminated template placeholder");
    }
    const std::string name = trim(tmpl.substr(open + 2, close - open - 2));
    const auto it = values.find(name);
    if (it == values.end()) {
      throw ConfigInvalid("unbound template placeholder '" + name + "'");
    }
    out += it->second;
    pos = close + 2;
  }
  return out;
}

std::string load_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::ostringstream os;
  os << in.rdbuf();
  if (in.bad()) throw IoError("read failed for " + path);
  return os.str();
}

}  // namespace parley
