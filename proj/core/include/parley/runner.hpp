#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "parley/agents.hpp"
#include "parley/equilibrium.hpp"
#include "parley/games.hpp"
#include "parley/mechanism.hpp"
#include "parley/protocol.hpp"
#include "parley/world.hpp"

namespace parley {

// ---------------------------------------------------------------------------
// Experiment configuration
// ---------------------------------------------------------------------------

struct MechanismSpec {
  bool enabled = false;
  BackendSpec designer{};
  MechanismConstraints constraints{};
};

// A batch of isolated worlds sharing one declarative setup. Scripted runs
// are fully determined by `seed`: world w derives its own seed (and the
// salt for any sampling strategy) from mix_seed(seed, w).
struct ExperimentConfig {
  std::string name = "experiment";
  GameSpec game{};
  int worlds = 16;
  int iterations = 50;
  CommConfig comm = CommConfig::disabled(kNumPlayers);
  MemoryMode memory_mode = MemoryMode::Reflex;
  bool mask_task_context = false;
  std::array<BackendSpec, kNumPlayers> players{};
  std::array<std::optional<SolutionConcept>, kNumPlayers> targets{};
  std::array<std::string, kNumPlayers> guidance{};

  // Retrieval knobs; the config grammar rejects them under Reflex.
  int k_system = 3;
  int k_action = 2;
  int chunk_max_tokens = 64;
  int chunk_overlap_tokens = 8;
  int embed_dim = 64;

  MechanismSpec mechanism{};
  std::uint64_t seed = 0;

  // Empty: compute metrics only. Otherwise a run directory named
  // "<name>-<config hash>" is created underneath and artifacts are written.
  std::string output_dir;

  void validate() const;
};

// Parses the JSON config grammar (see README). Rejects unknown keys, a
// "memory" block carrying retrieval knobs when mode is "reflex", and
// anything the struct validators reject.
ExperimentConfig parse_experiment_config(const std::string& json_text);
ExperimentConfig load_experiment_config(const std::string& path);

// Canonical JSON for hashing and artifact provenance; parses back to an
// equivalent config.
std::string serialize_experiment_config(const ExperimentConfig& config);

// 16 hex digits over the canonical serialization.
std::string config_hash(const ExperimentConfig& config);

// Fills empty remote endpoint/api-key fields on every remote backend spec
// (players and designer). Empty arguments change nothing.
void apply_remote_overrides(ExperimentConfig& config, const std::string& endpoint_url,
                            const std::string& api_key);

// Parses one player-spec object from the config grammar, e.g.
// {"kind": "scripted", "strategy": {"kind": "tit_for_tat"}}.
BackendSpec parse_backend_spec(const std::string& json_text);

// ---------------------------------------------------------------------------
// Metrics
// ---------------------------------------------------------------------------

struct IterationMetric {
  int world_id = 0;
  int iteration = 0;
  JointAction joint{};
  std::array<double, kNumPlayers> payoffs{};
  std::array<int, kNumPlayers> window_tokens{};
  std::array<bool, kNumPlayers> parse_ok{true, true};
  int interventions = 0;  // designer directives applied after this iteration
  std::optional<WoAOutcome> woa;

  friend bool operator==(const IterationMetric&, const IterationMetric&) = default;
};

struct WoAHistogramRow {
  std::string outcome;
  int period = 0;
  int count = 0;

  friend bool operator==(const WoAHistogramRow&, const WoAHistogramRow&) = default;
};

struct TokenPoint {
  int iteration = 0;
  std::array<double, kNumPlayers> mean_tokens{};

  friend bool operator==(const TokenPoint&, const TokenPoint&) = default;
};

struct FrequencyRow {
  std::string joint;  // "<row label>|<col label>"
  int count = 0;
  double frequency = 0.0;

  friend bool operator==(const FrequencyRow&, const FrequencyRow&) = default;
};

struct RunMetrics {
  std::string config_digest;
  std::vector<IterationMetric> records;

  // Matrix runs: one row per joint action cell, row-major, zero rows kept.
  // Frequencies sum to 1 within 1e-9 when any record exists, and each count
  // equals the raw event count across records.
  std::vector<FrequencyRow> joint_frequencies;

  // Probability that the realized joint action lies in the union of the
  // players' configured target concepts; 0 when no target is set.
  double p_target = 0.0;
  double mean_social_welfare = 0.0;

  // WoA runs: count per (outcome class, period), periods 1..terminal_t.
  std::vector<WoAHistogramRow> woa_histogram;

  // Mean window tokens per player after each iteration, across worlds.
  std::vector<TokenPoint> token_series;

  std::vector<int> failed_worlds;
  std::vector<std::string> failures;
  std::vector<std::string> artifacts;  // files written, in write order
};

// Spawns `worlds` isolated instances and aggregates their records. A world
// that throws is recorded under failures and skipped by the aggregates;
// remaining worlds are unaffected.
RunMetrics run_experiment(const ExperimentConfig& config);

// ---------------------------------------------------------------------------
// Cross-play
// ---------------------------------------------------------------------------

enum class Pairing {
  WithinPool,  // every ordered pool pair, self-pairs included
  CrossPool,   // each pool member in seat 0 against the config's seat-1 backend
};

struct CrossPlayCell {
  int seat0 = 0;   // pool index
  int seat1 = -1;  // pool index, or -1 for the config's own seat-1 backend
  RunMetrics metrics;
};

std::vector<CrossPlayCell> cross_play(const ExperimentConfig& config,
                                      const std::vector<BackendSpec>& pool,
                                      Pairing pairing);

// ---------------------------------------------------------------------------
// Sweeps
// ---------------------------------------------------------------------------

struct SweepPoint {
  std::string value;
  RunMetrics metrics;
};

// Reruns the experiment once per value with shared seeds. Sweepable axes:
// "comm.rounds", "iterations", "worlds", "memory.mode", "game.params.a".."d",
// "game.woa.gamma", "game.woa.terminal_t".
std::vector<SweepPoint> sweep(const ExperimentConfig& config, const std::string& axis,
                              const std::vector<std::string>& values);

// ---------------------------------------------------------------------------
// Plot-ready tables
// ---------------------------------------------------------------------------

// Writes strategy_frequencies.csv, woa_histogram.csv and token_series.csv
// under dir; returns the paths in write order. Columns are fixed and rows
// deterministic, so equal metrics yield byte-equal files.
std::vector<std::string> emit_plots(const RunMetrics& metrics, const std::string& dir);

// One frequency grid over several conditions: rows are joint cells, one
// column per condition, in the given order.
std::string render_frequency_grid(
    const std::vector<std::pair<std::string, const RunMetrics*>>& conditions);

// ---------------------------------------------------------------------------
// Replay
// ---------------------------------------------------------------------------

// Reruns a recorded run directory by feeding every generated response back
// through fixed scripts. Scripted-run replays reproduce the recorded
// metrics exactly. Failed worlds in the recording are skipped.
RunMetrics replay(const std::string& run_dir);

}  // namespace parley
