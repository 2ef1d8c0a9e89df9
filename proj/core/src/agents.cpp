#include "parley/agents.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <sstream>
#include <thread>

#include <httplib.h>
#include <nlohmann/json.hpp>

namespace parley {

namespace {

using nlohmann::json;

struct SplitUrl {
  std::string base;
  std::string path;
};

SplitUrl split_endpoint(const std::string& url) {
  const auto scheme = url.find("://");
  const auto path_start =
      url.find('/', scheme == std::string::npos ? 0 : scheme + 3);
  if (path_start == std::string::npos) return {url, "/"};
  return {url.substr(0, path_start), url.substr(path_start)};
}

std::string join_turns(const std::string& a, const std::string& b) {
  if (a.empty()) return b;
  if (b.empty()) return a;
  return a + "\n\n" + b;
}

std::vector<ChatTurn> merge_adjacent(const std::vector<ChatTurn>& turns) {
  std::vector<ChatTurn> merged;
  for (const auto& turn : turns) {
    if (!merged.empty() && merged.back().role == turn.role) {
      merged.back().content = join_turns(merged.back().content, turn.content);
    } else {
      merged.push_back(turn);
    }
  }
  return merged;
}

}  // namespace

// ---------------------------------------------------------------------------
// Remote transport
// ---------------------------------------------------------------------------

// endpoint_url and api_key may stay empty here: they can be filled later from
// the environment. Binding a backend to an empty endpoint is what fails.
void RemoteSpec::validate() const {
  if (model_name.empty()) throw ConfigInvalid("remote model_name is empty");
  if (temperature < 0.0) throw ConfigInvalid("temperature must be nonnegative");
  if (max_tokens < 1) throw ConfigInvalid("max_tokens must be positive");
  if (timeout_seconds <= 0.0) throw ConfigInvalid("timeout must be positive");
  if (max_retries < 0) throw ConfigInvalid("max_retries must be nonnegative");
  if (retry_base_delay_seconds < 0.0) {
    throw ConfigInvalid("retry_base_delay_seconds must be nonnegative");
  }
  if (max_in_flight < 1 || max_in_flight > 256) {
    throw ConfigInvalid("max_in_flight must be in [1, 256]");
  }
}

std::vector<ChatTurn> fold_system_turns(const std::vector<ChatTurn>& transcript) {
  std::vector<ChatTurn> folded;
  folded.reserve(transcript.size());
  for (const auto& turn : transcript) {
    if (turn.role == "system") {
      folded.push_back(ChatTurn{"user", turn.content});
    } else {
      folded.push_back(turn);
    }
  }
  return merge_adjacent(folded);
}

std::string chat_request(const RemoteSpec& spec, const std::vector<ChatTurn>& transcript) {
  spec.validate();

  auto turns = spec.no_system_role ? fold_system_turns(transcript) : transcript;
  json body;
  body["model"] = spec.model_name;
  body["temperature"] = spec.temperature;
  body["max_tokens"] = spec.max_tokens;
  body["messages"] = json::array();
  for (const auto& turn : turns) {
    body["messages"].push_back({{"role", turn.role}, {"content", turn.content}});
  }
  const std::string payload = body.dump();

  const auto target = split_endpoint(spec.endpoint_url);
  httplib::Headers headers;
  if (!spec.api_key.empty()) {
    headers.emplace("Authorization", "Bearer " + spec.api_key);
  }

  int last_status = 0;
  std::string last_detail;
  for (int attempt = 0; attempt <= spec.max_retries; ++attempt) {
    if (attempt > 0) {
      const double delay =
          spec.retry_base_delay_seconds * std::pow(2.0, attempt - 1);
      if (delay > 0.0) {
        std::this_thread::sleep_for(std::chrono::duration<double>(delay));
      }
    }

    httplib::Client client(target.base);
    const auto seconds = static_cast<time_t>(spec.timeout_seconds);
    const auto micros = static_cast<time_t>(
        (spec.timeout_seconds - static_cast<double>(seconds)) * 1e6);
    client.set_connection_timeout(seconds, micros);
    client.set_read_timeout(seconds, micros);
    client.set_write_timeout(seconds, micros);

    auto res = client.Post(target.path, headers, payload, "application/json");
    if (!res) {
      last_status = 0;
      last_detail = httplib::to_string(res.error());
      continue;
    }
    if (res->status == 200) {
      json parsed;
      try {
        parsed = json::parse(res->body);
      } catch (const json::exception&) {
        throw MalformedResponse("completion body is not valid JSON");
      }
      if (!parsed.contains("choices") || !parsed["choices"].is_array() ||
          parsed["choices"].empty()) {
        throw MalformedResponse("completion has no choices");
      }
      const auto& message = parsed["choices"][0];
      if (!message.contains("message") || !message["message"].contains("content") ||
          !message["message"]["content"].is_string()) {
        throw MalformedResponse("completion choice has no message content");
      }
      return message["message"]["content"].get<std::string>();
    }
    if (res->status == 429 || res->status >= 500) {
      last_status = res->status;
      last_detail = res->body;
      continue;
    }
    throw HttpError(res->status, "chat endpoint rejected the request");
  }

  if (last_status > 0) {
    throw HttpError(last_status, "chat endpoint kept failing after retries");
  }
  throw Timeout("chat endpoint unreachable: " + last_detail);
}

std::vector<ChatTurn> window_to_transcript(const ContextWindow& window,
                                           bool no_system_role) {
  std::vector<ChatTurn> turns;
  const auto owner = SegmentAuthor::player_id(window.player_id());
  for (const auto& segment : window.segments()) {
    std::string role;
    if (segment.stage == StageTag::System) {
      role = "system";
    } else if (segment.generated && segment.author == owner) {
      role = "assistant";
    } else {
      role = "user";
    }
    turns.push_back(ChatTurn{role, segment.text});
  }
  if (no_system_role) return fold_system_turns(turns);
  return merge_adjacent(turns);
}

// ---------------------------------------------------------------------------
// Scripted strategies
// ---------------------------------------------------------------------------

ScriptedStrategy ScriptedStrategy::always(int index) {
  ScriptedStrategy s;
  s.kind = Kind::AlwaysAction;
  s.action_index = index;
  return s;
}

ScriptedStrategy ScriptedStrategy::tit_for_tat() {
  ScriptedStrategy s;
  s.kind = Kind::TitForTat;
  return s;
}

ScriptedStrategy ScriptedStrategy::grim_trigger() {
  ScriptedStrategy s;
  s.kind = Kind::GrimTrigger;
  return s;
}

ScriptedStrategy ScriptedStrategy::uniform_random(std::uint64_t seed) {
  ScriptedStrategy s;
  s.kind = Kind::UniformRandom;
  s.seed = seed;
  return s;
}

ScriptedStrategy ScriptedStrategy::mixed(std::vector<double> probs, std::uint64_t seed) {
  ScriptedStrategy s;
  s.kind = Kind::MixedSampler;
  s.probs = std::move(probs);
  s.seed = seed;
  return s;
}

ScriptedStrategy ScriptedStrategy::woa_threshold(int surrender_at_t) {
  ScriptedStrategy s;
  s.kind = Kind::WoAThreshold;
  s.surrender_at_t = surrender_at_t;
  return s;
}

void ScriptedStrategy::validate() const {
  if (kind == Kind::AlwaysAction && action_index < 0) {
    throw ConfigInvalid("AlwaysAction index must be nonnegative");
  }
  if (kind == Kind::MixedSampler) {
    if (probs.empty()) throw ConfigInvalid("MixedSampler needs probabilities");
    double sum = 0.0;
    for (double p : probs) {
      if (p < 0.0) throw ConfigInvalid("MixedSampler probabilities must be nonnegative");
      sum += p;
    }
    if (std::abs(sum - 1.0) > 1e-9) {
      throw ConfigInvalid("MixedSampler probabilities must sum to 1");
    }
  }
  if (kind == Kind::WoAThreshold && surrender_at_t < 1) {
    throw ConfigInvalid("WoAThreshold trigger must be at least 1");
  }
}

std::string to_string(ScriptedStrategy::Kind kind) {
  switch (kind) {
    case ScriptedStrategy::Kind::AlwaysAction: return "always_action";
    case ScriptedStrategy::Kind::TitForTat: return "tit_for_tat";
    case ScriptedStrategy::Kind::GrimTrigger: return "grim_trigger";
    case ScriptedStrategy::Kind::UniformRandom: return "uniform_random";
    case ScriptedStrategy::Kind::MixedSampler: return "mixed_sampler";
    case ScriptedStrategy::Kind::WoAThreshold: return "woa_threshold";
  }
  throw ConfigInvalid("unknown scripted strategy kind");
}

WoADecision scripted_woa(const ScriptedStrategy& strategy, const WoAState& state) {
  if (strategy.kind != ScriptedStrategy::Kind::WoAThreshold) {
    throw ConfigInvalid("scripted_woa requires a WoAThreshold strategy");
  }
  strategy.validate();
  return state.t >= strategy.surrender_at_t ? WoADecision::Surrender
                                            : WoADecision::Continue;
}

// ---------------------------------------------------------------------------
// Environment notes
// ---------------------------------------------------------------------------

std::string format_outcome_note(const OutcomeNote& note) {
  std::ostringstream out;
  out << "OUTCOME: you=" << note.own_label << " opponent=" << note.opponent_label
      << " payoff=" << note.payoff;
  return out.str();
}

namespace {

std::string strip(const std::string& text) {
  std::size_t begin = 0;
  std::size_t end = text.size();
  while (begin < end && std::isspace(static_cast<unsigned char>(text[begin]))) ++begin;
  while (end > begin && std::isspace(static_cast<unsigned char>(text[end - 1]))) --end;
  return text.substr(begin, end - begin);
}

std::optional<OutcomeNote> parse_outcome_line(const std::string& line) {
  const std::string head = "OUTCOME:";
  if (line.rfind(head, 0) != 0) return std::nullopt;
  const auto you = line.find("you=");
  const auto opp = line.find(" opponent=", you == std::string::npos ? 0 : you);
  const auto pay = line.find(" payoff=", opp == std::string::npos ? 0 : opp);
  if (you == std::string::npos || opp == std::string::npos || pay == std::string::npos) {
    return std::nullopt;
  }
  OutcomeNote note;
  note.own_label = strip(line.substr(you + 4, opp - (you + 4)));
  note.opponent_label = strip(line.substr(opp + 10, pay - (opp + 10)));
  const std::string value = strip(line.substr(pay + 8));
  char* tail = nullptr;
  note.payoff = std::strtod(value.c_str(), &tail);
  if (tail == value.c_str()) return std::nullopt;
  return note;
}

}  // namespace

std::vector<OutcomeNote> parse_outcome_notes(const ContextWindow& window) {
  std::vector<OutcomeNote> notes;
  for (const auto& segment : window.segments()) {
    if (segment.author.kind != SegmentAuthor::Kind::Environment) continue;
    std::istringstream lines(segment.text);
    std::string line;
    while (std::getline(lines, line)) {
      if (auto note = parse_outcome_line(strip(line))) notes.push_back(*note);
    }
  }
  return notes;
}

std::string format_period_note(int period) {
  return "STATE: period=" + std::to_string(period);
}

int current_period(const ContextWindow& window) {
  int period = 1;
  const std::string marker = "period=";
  for (const auto& segment : window.segments()) {
    if (segment.author.kind != SegmentAuthor::Kind::Environment) continue;
    std::size_t pos = 0;
    while ((pos = segment.text.find(marker, pos)) != std::string::npos) {
      pos += marker.size();
      std::size_t end = pos;
      while (end < segment.text.size() &&
             std::isdigit(static_cast<unsigned char>(segment.text[end]))) {
        ++end;
      }
      if (end > pos) period = std::stoi(segment.text.substr(pos, end - pos));
      pos = end;
    }
  }
  return period;
}

// ---------------------------------------------------------------------------
// Scripted backend
// ---------------------------------------------------------------------------

ScriptedBackend::ScriptedBackend(ScriptedStrategy strategy,
                                 std::vector<std::string> own_labels,
                                 std::vector<std::string> opponent_labels)
    : strategy_(std::move(strategy)),
      own_labels_(std::move(own_labels)),
      opponent_labels_(std::move(opponent_labels)),
      rng_(mix_seed(strategy_.seed, 0xa9)) {
  strategy_.validate();
  if (own_labels_.empty()) {
    if (strategy_.kind != ScriptedStrategy::Kind::WoAThreshold) {
      throw ConfigInvalid("scripted backend needs the seat's action labels");
    }
    own_labels_ = {"Continue", "Surrender"};
  }
  if (opponent_labels_.empty()) opponent_labels_ = own_labels_;
  if (strategy_.kind == ScriptedStrategy::Kind::AlwaysAction &&
      strategy_.action_index >= static_cast<int>(own_labels_.size())) {
    throw IndexOutOfRange("AlwaysAction index exceeds the label set");
  }
  if (strategy_.kind == ScriptedStrategy::Kind::MixedSampler &&
      strategy_.probs.size() != own_labels_.size()) {
    throw ConfigInvalid("MixedSampler needs one probability per action");
  }
}

std::string ScriptedBackend::name() const {
  return "scripted:" + to_string(strategy_.kind);
}

int ScriptedBackend::choose_action(const ContextWindow& context) {
  const int n = static_cast<int>(own_labels_.size());
  switch (strategy_.kind) {
    case ScriptedStrategy::Kind::AlwaysAction:
      return strategy_.action_index;
    case ScriptedStrategy::Kind::TitForTat: {
      const auto notes = parse_outcome_notes(context);
      if (notes.empty()) return 0;
      const auto& last = notes.back().opponent_label;
      for (int i = 0; i < static_cast<int>(opponent_labels_.size()); ++i) {
        if (opponent_labels_[static_cast<std::size_t>(i)] == last) {
          return std::min(i, n - 1);
        }
      }
      return 0;
    }
    case ScriptedStrategy::Kind::GrimTrigger: {
      for (const auto& note : parse_outcome_notes(context)) {
        if (note.opponent_label != opponent_labels_[0]) return std::min(1, n - 1);
      }
      return 0;
    }
    case ScriptedStrategy::Kind::UniformRandom:
      return static_cast<int>(rng_.uniform_int(0, n - 1));
    case ScriptedStrategy::Kind::MixedSampler:
      return static_cast<int>(rng_.sample_index(strategy_.probs));
    case ScriptedStrategy::Kind::WoAThreshold: {
      WoAState state;
      state.t = current_period(context);
      return scripted_woa(strategy_, state) == WoADecision::Surrender ? 1 : 0;
    }
  }
  throw ConfigInvalid("unknown scripted strategy kind");
}

std::string ScriptedBackend::respond(const ContextWindow& context, StageTag stage) {
  switch (stage) {
    case StageTag::System:
      throw ConfigInvalid("scripted backends do not respond at the system stage");
    case StageTag::Thinking:
      return "I play a fixed policy; no further deliberation is needed.";
    case StageTag::Comm:
      return "PASS";
    case StageTag::Action:
      return "ACTION: " + own_labels_[static_cast<std::size_t>(choose_action(context))];
    case StageTag::Reflection:
      return "The fixed policy stays unchanged.";
    case StageTag::Recall:
      return "No stored memories are needed for a fixed policy.";
  }
  throw ConfigInvalid("unknown stage");
}

// ---------------------------------------------------------------------------
// Fixed script backend
// ---------------------------------------------------------------------------

FixedScriptBackend::FixedScriptBackend(std::vector<std::string> responses)
    : responses_(std::move(responses)) {}

std::string FixedScriptBackend::respond(const ContextWindow&, StageTag) {
  if (next_ >= responses_.size()) {
    throw ExhaustedScript("fixed script has no response left (consumed " +
                          std::to_string(next_) + ")");
  }
  return responses_[next_++];
}

// ---------------------------------------------------------------------------
// Remote backend
// ---------------------------------------------------------------------------

namespace {

int validated_in_flight_cap(const RemoteSpec& spec) {
  spec.validate();
  return spec.max_in_flight;
}

}  // namespace

RemoteBackend::RemoteBackend(RemoteSpec spec)
    : spec_(std::move(spec)), gate_(validated_in_flight_cap(spec_)) {
  if (spec_.endpoint_url.empty()) {
    throw ConfigInvalid("remote backend '" + spec_.model_name +
                        "' has no endpoint_url; pin one in the config or "
                        "supply an endpoint override");
  }
}

std::string RemoteBackend::respond(const ContextWindow& context, StageTag) {
  gate_.acquire();
  struct Release {
    std::counting_semaphore<256>& gate;
    ~Release() { gate.release(); }
  } release{gate_};
  return chat_request(spec_, window_to_transcript(context, spec_.no_system_role));
}

// ---------------------------------------------------------------------------
// Factory
// ---------------------------------------------------------------------------

void BackendSpec::validate() const {
  switch (kind) {
    case Kind::Remote:
      remote.validate();
      return;
    case Kind::Scripted:
      strategy.validate();
      return;
    case Kind::FixedScript:
      if (script.empty()) throw ConfigInvalid("fixed script has no responses");
      return;
  }
  throw ConfigInvalid("unknown backend kind");
}

std::unique_ptr<Backend> make_backend(const BackendSpec& spec,
                                      const std::vector<std::string>& action_labels,
                                      const std::vector<std::string>& opponent_labels) {
  spec.validate();
  switch (spec.kind) {
    case BackendSpec::Kind::Remote:
      return std::make_unique<RemoteBackend>(spec.remote);
    case BackendSpec::Kind::Scripted:
      return std::make_unique<ScriptedBackend>(spec.strategy, action_labels,
                                               opponent_labels);
    case BackendSpec::Kind::FixedScript:
      return std::make_unique<FixedScriptBackend>(spec.script);
  }
  throw ConfigInvalid("unknown backend kind");
}

}  // namespace parley
