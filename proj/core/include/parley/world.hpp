#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "parley/agents.hpp"
#include "parley/equilibrium.hpp"
#include "parley/games.hpp"
#include "parley/memory.hpp"
#include "parley/protocol.hpp"

namespace parley {

// How a player's context survives from one game iteration to the next.
enum class MemoryMode { Reflex, RagFull, RagRecall, Cumulative };

std::string to_string(MemoryMode mode);
std::optional<MemoryMode> memory_mode_from_string(const std::string& name);

struct GameSpec {
  enum class Kind { Matrix, WoA };

  Kind kind = Kind::Matrix;
  GameKind matrix = GameKind::PrisonersDilemma;
  PayoffParams params{};
  WoAConfig woa{};

  void validate() const;
};

struct WorldConfig {
  GameSpec game{};
  int num_iterations = 1;
  CommConfig comm = CommConfig::disabled(kNumPlayers);
  MemoryMode memory_mode = MemoryMode::Reflex;
  bool mask_task_context = false;
  std::array<std::optional<SolutionConcept>, kNumPlayers> targets{};
  std::array<std::string, kNumPlayers> guidance{};

  // Retrieval budgets: records pulled into the system prompt and extra
  // records pulled right before action selection.
  int k_system = 3;
  int k_action = 2;
  int chunk_max_tokens = 64;
  int chunk_overlap_tokens = 8;
  int embed_dim = 64;

  std::uint64_t seed = 0;
  int world_id = 0;

  // Empty entries fall back to the built-in role text.
  std::array<std::string, kNumPlayers> role_definitions{};

  void validate() const;
};

struct IterationRecord {
  int iteration = 0;
  JointAction joint{};
  std::array<double, kNumPlayers> payoffs{};
  std::array<bool, kNumPlayers> parse_ok{true, true};
  std::array<bool, kNumPlayers> forfeited{false, false};
  std::vector<GraphViolation> comm_violations;
  std::vector<std::string> comm_diagnostics;
  std::array<int, kNumPlayers> window_tokens{};
  // Every segment appended to each player's window during this iteration.
  std::array<std::vector<Segment>, kNumPlayers> new_segments;
  std::array<std::string, kNumPlayers> summaries;

  // Dynamic-game extras.
  std::optional<WoAOutcome> woa;
  std::vector<std::array<WoADecision, kNumPlayers>> woa_decisions;
};

// One isolated game instance: two player windows, their backends, a private
// memory store, and the stage loop Thinking -> Comm -> Action -> Reflection
// -> Recall.
class World {
 public:
  World(WorldConfig config, std::array<std::unique_ptr<Backend>, kNumPlayers> backends);

  IterationRecord run_iteration();
  std::vector<IterationRecord> run_all();

  const WorldConfig& config() const { return config_; }
  const ContextWindow& window(int player) const;
  const MemoryStore& memory() const { return store_; }
  int iterations_done() const { return iteration_; }

  // Mechanism hooks: mutations take effect at the next iteration boundary.
  CommConfig& comm() { return config_.comm; }
  SystemPromptSpec& prompt_spec(int player);

  // Null for dynamic games.
  const NormalFormGame* matrix_game() const;

 private:
  std::string ask(int player, StageTag stage, IterationRecord& record, int round = -1);
  void append_env(int player, StageTag stage, std::string text, int round = -1,
                  bool env_private = false);
  void begin_iteration();
  void run_comm_stage(IterationRecord& record);
  std::string resolve_action(int player, IterationRecord& record);
  void finish_iteration(IterationRecord& record);
  std::string retrieval_block(int player, const std::string& query, int k);
  void store_chunks(int player, const std::string& text, StageTag stage);

  IterationRecord matrix_iteration();
  IterationRecord woa_iteration();

  WorldConfig config_;
  std::array<std::unique_ptr<Backend>, kNumPlayers> backends_;
  std::optional<NormalFormGame> game_;
  std::array<ParseRules, kNumPlayers> rules_;
  std::array<SystemPromptSpec, kNumPlayers> prompt_specs_;
  std::array<ContextWindow, kNumPlayers> windows_;
  std::array<std::string, kNumPlayers> player_names_;
  std::array<std::string, kNumPlayers> last_rules_;
  std::array<std::size_t, kNumPlayers> iteration_start_{0, 0};
  HashEmbedder embedder_;
  MemoryStore store_;
  int iteration_ = 0;
  int epoch_ = -1;
};

}  // namespace parley
