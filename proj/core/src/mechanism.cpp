#include "parley/mechanism.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <sstream>
#include <string_view>

#include "parley/errors.hpp"
#include "parley/tokenizer.hpp"

namespace parley {

namespace {

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
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

std::string edges_to_string(const std::vector<std::pair<int, int>>& edges) {
  if (edges.empty()) return "none";
  std::ostringstream out;
  for (std::size_t i = 0; i < edges.size(); ++i) {
    if (i > 0) out << ", ";
    out << edges[i].first << "->" << edges[i].second;
  }
  return out.str();
}

std::optional<int> parse_int(std::string_view s) {
  int value = 0;
  const char* begin = s.data();
  const char* end = begin + s.size();
  const auto [ptr, ec] = std::from_chars(begin, end, value);
  if (ec != std::errc{} || ptr != end) return std::nullopt;
  return value;
}

// Directive heads are short ALL_CAPS identifiers followed by a colon.
std::optional<std::pair<std::string, std::string>> split_directive(
    const std::string& line) {
  const auto colon = line.find(':');
  if (colon == std::string::npos || colon == 0) return std::nullopt;
  const std::string head = line.substr(0, colon);
  if (head.size() > 24) return std::nullopt;
  for (char c : head) {
    if (!(std::isupper(static_cast<unsigned char>(c)) || c == '_')) return std::nullopt;
  }
  return std::make_pair(head, trim(line.substr(colon + 1)));
}

std::optional<std::vector<std::pair<int, int>>> parse_edges(const std::string& body) {
  std::vector<std::pair<int, int>> edges;
  if (body.empty() || body == "none") return edges;

  std::size_t start = 0;
  while (start <= body.size()) {
    auto comma = body.find(',', start);
    if (comma == std::string::npos) comma = body.size();
    const std::string token = trim(body.substr(start, comma - start));
    start = comma + 1;
    if (token.empty()) return std::nullopt;

    const auto arrow = token.find("->");
    if (arrow == std::string::npos) return std::nullopt;
    const auto from = parse_int(trim(token.substr(0, arrow)));
    const auto to = parse_int(trim(token.substr(arrow + 2)));
    if (!from || !to) return std::nullopt;
    edges.emplace_back(*from, *to);
    if (comma == body.size()) break;
  }
  return edges;
}

// In masked runs payoff values leak into transcripts only through outcome
// notes; blank them before the designer sees the digest.
std::string hide_payoff_values(std::string text) {
  static constexpr std::string_view kField = "payoff=";
  std::size_t pos = 0;
  while ((pos = text.find(kField, pos)) != std::string::npos) {
    const std::size_t value_begin = pos + kField.size();
    std::size_t value_end = value_begin;
    while (value_end < text.size()) {
      const char c = text[value_end];
      if (std::isdigit(static_cast<unsigned char>(c)) || c == '-' || c == '.' ||
          c == '+') {
        ++value_end;
      } else {
        break;
      }
    }
    text.replace(value_begin, value_end - value_begin, "(hidden)");
    pos = value_begin;
  }
  return text;
}

std::string flatten(const std::string& text) {
  std::string out;
  out.reserve(text.size());
  bool pending_break = false;
  for (char c : text) {
    if (c == '\n') {
      pending_break = true;
      continue;
    }
    if (pending_break && !out.empty()) out += " / ";
    pending_break = false;
    out.push_back(c);
  }
  return out;
}

std::string designer_task_description(const GameSpec& game, bool masked) {
  std::ostringstream out;
  if (game.kind == GameSpec::Kind::Matrix) {
    const auto matrix = make_classic_game(game.matrix, game.params);
    out << "The players face a simultaneous-move matrix game. Player 0 picks "
        << matrix.action_label(kRow, 0) << " or " << matrix.action_label(kRow, 1)
        << "; Player 1 picks " << matrix.action_label(kCol, 0) << " or "
        << matrix.action_label(kCol, 1) << ".";
    if (masked) {
      out << " Payoffs are withheld for this run.";
      return out.str();
    }
    out << " Payoffs (Player 0, Player 1):";
    for (int r = 0; r < matrix.num_actions(kRow); ++r) {
      for (int c = 0; c < matrix.num_actions(kCol); ++c) {
        const auto pay = matrix.payoff(JointAction{r, c});
        out << "\n- " << matrix.action_label(kRow, r) << " vs "
            << matrix.action_label(kCol, c) << ": " << format_number(pay[0]) << ", "
            << format_number(pay[1]);
      }
    }
    return out.str();
  }

  out << "The players are locked in a war of attrition: each period both choose "
         "Continue or Surrender, and whoever outlasts the other takes the prize.";
  const bool values_private =
      game.woa.value[0] != game.woa.value[1] || game.woa.evolving.has_value();
  if (masked || values_private) {
    out << " Prize values are private to the players.";
  } else {
    out << " The prize is worth " << format_number(game.woa.value[0])
        << " to each player; waiting costs " << format_number(game.woa.cost[0])
        << " and " << format_number(game.woa.cost[1])
        << " per period, discounted by " << format_number(game.woa.gamma) << ".";
  }
  out << " The war is cut off after period " << game.woa.terminal_t << ".";
  return out.str();
}

std::string digest_window(const ContextWindow& window, bool masked) {
  std::ostringstream out;
  out << "## Player " << window.player_id();
  bool any = false;
  for (const auto& segment : window.segments()) {
    if (segment.env_private) continue;
    std::string text = flatten(segment.text);
    if (masked) text = hide_payoff_values(std::move(text));
    out << "\n- [" << to_string(segment.stage) << "] " << segment.author.describe()
        << ": " << text;
    any = true;
  }
  if (!any) out << "\n- (no activity yet)";
  return out.str();
}

}  // namespace

std::uint64_t Intervention::id() const {
  switch (kind) {
    case Kind::GlobalRule: return fnv1a("rule\x1f" + rule_text);
    case Kind::SetCommRounds: return fnv1a("rounds\x1f" + std::to_string(rounds));
    case Kind::SetCommGraph: return fnv1a("graph\x1f" + edges_to_string(edges));
  }
  return 0;
}

std::string to_string(const Intervention& intervention) {
  switch (intervention.kind) {
    case Intervention::Kind::GlobalRule: return "RULE: " + intervention.rule_text;
    case Intervention::Kind::SetCommRounds:
      return "COMM_ROUNDS: " + std::to_string(intervention.rounds);
    case Intervention::Kind::SetCommGraph:
      return "COMM_GRAPH: " + edges_to_string(intervention.edges);
  }
  return "";
}

void MechanismConstraints::validate() const {
  if (max_rules_per_run < 0 || max_rule_tokens < 0 || min_rounds < 0 || max_rounds < 0) {
    throw ConfigInvalid("mechanism bounds must be nonnegative");
  }
  if (min_rounds > max_rounds) {
    throw ConfigInvalid("min_rounds exceeds max_rounds");
  }
}

ParsedInterventions parse_intervention(const std::string& text) {
  ParsedInterventions result;
  for (const auto& raw : split_lines(text)) {
    const std::string line = trim(raw);
    if (line.empty()) continue;
    const auto directive = split_directive(line);
    if (!directive) continue;
    const auto& [head, body] = *directive;

    if (head == "RULE") {
      if (body.empty()) {
        result.diagnostics.push_back("RULE directive with empty text");
        continue;
      }
      Intervention iv;
      iv.kind = Intervention::Kind::GlobalRule;
      iv.rule_text = body;
      result.interventions.push_back(std::move(iv));
    } else if (head == "COMM_ROUNDS") {
      const auto n = parse_int(body);
      if (!n) {
        result.diagnostics.push_back("COMM_ROUNDS expects an integer, got '" + body +
                                     "'");
        continue;
      }
      Intervention iv;
      iv.kind = Intervention::Kind::SetCommRounds;
      iv.rounds = *n;
      result.interventions.push_back(std::move(iv));
    } else if (head == "COMM_GRAPH") {
      auto edges = parse_edges(body);
      if (!edges) {
        result.diagnostics.push_back("COMM_GRAPH expects edges like 0->1, got '" +
                                     body + "'");
        continue;
      }
      Intervention iv;
      iv.kind = Intervention::Kind::SetCommGraph;
      iv.edges = std::move(*edges);
      result.interventions.push_back(std::move(iv));
    } else {
      result.diagnostics.push_back("unrecognized directive '" + head + "'");
    }
  }
  return result;
}

Verdict validate(Intervention& intervention, const MechanismConstraints& constraints,
                 int rules_already_applied) {
  constraints.validate();
  switch (intervention.kind) {
    case Intervention::Kind::GlobalRule: {
      if (trim(intervention.rule_text).empty()) {
        return Verdict::reject("EmptyRule: rule text is blank");
      }
      const int tokens = approx_token_count(intervention.rule_text);
      if (tokens > constraints.max_rule_tokens) {
        return Verdict::reject("TooLong: rule is " + std::to_string(tokens) +
                               " tokens, limit " +
                               std::to_string(constraints.max_rule_tokens));
      }
      if (rules_already_applied >= constraints.max_rules_per_run) {
        return Verdict::reject("TooManyRules: run already carries " +
                               std::to_string(rules_already_applied) + " of " +
                               std::to_string(constraints.max_rules_per_run));
      }
      return Verdict::accept(intervention);
    }
    case Intervention::Kind::SetCommRounds: {
      if (intervention.rounds < constraints.min_rounds ||
          intervention.rounds > constraints.max_rounds) {
        return Verdict::reject(
            "OutOfBounds: rounds " + std::to_string(intervention.rounds) +
            " outside [" + std::to_string(constraints.min_rounds) + ", " +
            std::to_string(constraints.max_rounds) + "]");
      }
      return Verdict::accept(intervention);
    }
    case Intervention::Kind::SetCommGraph: {
      if (!constraints.graph_edits_allowed) {
        return Verdict::reject("GraphEditsDisabled: this run forbids graph changes");
      }
      for (const auto& [from, to] : intervention.edges) {
        if (from < 0 || from >= kNumPlayers || to < 0 || to >= kNumPlayers ||
            from == to) {
          return Verdict::reject("InvalidPlayer: edge " + std::to_string(from) +
                                 "->" + std::to_string(to));
        }
      }
      return Verdict::accept(intervention);
    }
  }
  return Verdict::reject("unknown intervention kind");
}

bool apply(const Intervention& intervention, CommConfig& comm,
           const std::vector<SystemPromptSpec*>& prompt_specs) {
  if (!intervention.validated()) {
    throw NotValidated("intervention '" + to_string(intervention) +
                       "' was never validated");
  }

  switch (intervention.kind) {
    case Intervention::Kind::GlobalRule: {
      bool changed = false;
      for (auto* spec : prompt_specs) {
        const auto lines = split_lines(spec->mechanism_rules);
        if (std::find(lines.begin(), lines.end(), intervention.rule_text) !=
            lines.end()) {
          continue;
        }
        if (!spec->mechanism_rules.empty()) spec->mechanism_rules += "\n";
        spec->mechanism_rules += intervention.rule_text;
        changed = true;
      }
      return changed;
    }
    case Intervention::Kind::SetCommRounds: {
      if (comm.rounds == intervention.rounds) return false;
      comm.rounds = intervention.rounds;
      return true;
    }
    case Intervention::Kind::SetCommGraph: {
      std::vector<std::vector<int>> graph(kNumPlayers);
      for (const auto& [from, to] : intervention.edges) {
        auto& targets = graph[static_cast<std::size_t>(from)];
        if (std::find(targets.begin(), targets.end(), to) == targets.end()) {
          targets.push_back(to);
        }
      }
      for (auto& targets : graph) std::sort(targets.begin(), targets.end());
      if (comm.graph == graph) return false;
      comm.graph = std::move(graph);
      return true;
    }
  }
  return false;
}

ContextWindow build_designer_context(const std::vector<const ContextWindow*>& players,
                                     const GameSpec& game, bool mask_task_context,
                                     const MechanismConstraints& constraints) {
  if (players.empty()) {
    throw ConfigInvalid("designer context needs at least one player window");
  }
  constraints.validate();

  SystemPromptSpec spec;
  spec.role_definition =
      "You are the mechanism designer overseeing this game. You are not a "
      "player. You read every player's transcript and may adjust the rules "
      "within strict limits. Intervene as little as possible, and only to "
      "steer play toward feasible, desirable outcomes.";
  spec.task_context.text = designer_task_description(game, mask_task_context);
  spec.task_context.masked = mask_task_context;
  std::ostringstream multi;
  multi << players.size()
        << " players act independently. You may impose a global rule that is "
           "appended to every player's system prompt, change the number of "
           "communication rounds, or rewire who may message whom.";
  spec.multi_agent.guidance = multi.str();

  ContextWindow window(-1);
  window.append(StageTag::System, SegmentAuthor::environment(),
                build_system_prompt(spec), false, 0);

  std::ostringstream digest;
  digest << "# Transcript Digest\n";
  for (const auto* player : players) {
    digest << "\n" << digest_window(*player, mask_task_context) << "\n";
  }
  digest << "\n# Instructions\n\n"
         << "Reply with at most " << constraints.max_rules_per_run
         << " directives, one per line:\n"
         << "RULE: <text appended to every player's system prompt, at most "
         << constraints.max_rule_tokens << " tokens>\n"
         << "COMM_ROUNDS: <integer between " << constraints.min_rounds << " and "
         << constraints.max_rounds << ">";
  if (constraints.graph_edits_allowed) {
    digest << "\nCOMM_GRAPH: <directed edges like 0->1, 1->0, or none>";
  }
  digest << "\nWrite NONE to leave the game unchanged.";
  window.append(StageTag::Thinking, SegmentAuthor::environment(), digest.str(), false,
                0);
  return window;
}

Designer::Designer(std::unique_ptr<Backend> backend, MechanismConstraints constraints)
    : backend_(std::move(backend)), constraints_(constraints) {
  if (!backend_) throw ConfigInvalid("designer needs a backend");
  constraints_.validate();
}

DesignerReport Designer::intervene(World& world) {
  std::vector<const ContextWindow*> players;
  players.reserve(kNumPlayers);
  for (int i = 0; i < kNumPlayers; ++i) players.push_back(&world.window(i));

  const auto context = build_designer_context(
      players, world.config().game, world.config().mask_task_context, constraints_);

  DesignerReport report;
  try {
    report.raw_response = backend_->respond(context, StageTag::Action);
  } catch (const BackendFailure&) {
    throw;
  } catch (const Error& e) {
    throw BackendFailure(std::string("designer backend '") + backend_->name() +
                         "' failed: " + e.what());
  }

  report.parsed = parse_intervention(report.raw_response);

  std::vector<SystemPromptSpec*> specs;
  specs.reserve(kNumPlayers);
  for (int i = 0; i < kNumPlayers; ++i) specs.push_back(&world.prompt_spec(i));

  for (auto& intervention : report.parsed.interventions) {
    const auto verdict = validate(intervention, constraints_, rules_applied_);
    report.verdicts.push_back(verdict);
    if (!verdict.accepted) continue;
    if (apply(intervention, world.comm(), specs)) {
      if (intervention.kind == Intervention::Kind::GlobalRule) ++rules_applied_;
      report.applied.push_back(intervention);
    }
  }

  history_.push_back(report);
  return report;
}

}  // namespace parley
