// Command-line front end: run experiments from declarative configs, sweep
// axes, cross-play strategy pools, export alignment datasets, and replay
// recorded runs.

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "parley/agents.hpp"
#include "parley/alignment.hpp"
#include "parley/errors.hpp"
#include "parley/games.hpp"
#include "parley/runner.hpp"
#include "parley/world.hpp"

namespace {

namespace fs = std::filesystem;
using namespace parley;

std::string env_or_empty(const char* name) {
  const char* value = std::getenv(name);
  return value ? value : "";
}

struct CommonFlags {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string output_dir;
  std::string endpoint;
  std::string api_key;
};

void add_common_flags(CLI::App& cmd, CommonFlags& flags) {
  cmd.add_option("-c,--config", flags.config_path, "experiment config file")
      ->required()
      ->check(CLI::ExistingFile);
  cmd.add_option("-s,--seed", flags.seed, "override the config seed");
  cmd.add_option("-o,--output-dir", flags.output_dir,
                 "override the config output directory");
  cmd.add_option("--endpoint", flags.endpoint,
                 "endpoint URL for remote backends with none pinned "
                 "(default: $PARLEY_ENDPOINT)");
  cmd.add_option("--api-key", flags.api_key,
                 "auth token for remote backends with none pinned "
                 "(default: $PARLEY_API_KEY)");
}

ExperimentConfig load_config(const CommonFlags& flags) {
  auto config = load_experiment_config(flags.config_path);
  if (flags.seed) config.seed = *flags.seed;
  if (!flags.output_dir.empty()) config.output_dir = flags.output_dir;
  const auto endpoint =
      flags.endpoint.empty() ? env_or_empty("PARLEY_ENDPOINT") : flags.endpoint;
  const auto api_key =
      flags.api_key.empty() ? env_or_empty("PARLEY_API_KEY") : flags.api_key;
  apply_remote_overrides(config, endpoint, api_key);
  return config;
}

void print_frequencies(const RunMetrics& metrics, const std::string& indent) {
  auto rows = metrics.joint_frequencies;
  std::stable_sort(rows.begin(), rows.end(),
                   [](const auto& a, const auto& b) { return a.count > b.count; });
  for (const auto& row : rows) {
    if (row.count == 0) continue;
    std::cout << indent << row.joint << "  " << row.count << "  ("
              << std::setprecision(4) << row.frequency << ")\n";
  }
}

void print_metrics(const RunMetrics& metrics) {
  std::cout << "config " << metrics.config_digest << "\n"
            << "records " << metrics.records.size();
  if (!metrics.failed_worlds.empty()) {
    std::cout << "  failed worlds " << metrics.failed_worlds.size();
  }
  std::cout << "\n";
  if (!metrics.joint_frequencies.empty()) {
    std::cout << "joint action counts:\n";
    print_frequencies(metrics, "  ");
  }
  for (const auto& row : metrics.woa_histogram) {
    if (row.count > 0) {
      std::cout << "  " << row.outcome << " t=" << row.period << "  " << row.count
                << "\n";
    }
  }
  std::cout << std::setprecision(6) << "p_target " << metrics.p_target
            << "  mean_welfare " << metrics.mean_social_welfare << "\n";
  for (const auto& failure : metrics.failures) {
    std::cerr << "warning: " << failure << "\n";
  }
  if (!metrics.artifacts.empty()) {
    std::cout << "wrote:\n";
    for (const auto& path : metrics.artifacts) std::cout << "  " << path << "\n";
  }
}

int cmd_run(const CommonFlags& flags) {
  const auto config = load_config(flags);
  const auto metrics = run_experiment(config);
  print_metrics(metrics);
  return metrics.records.empty() && !metrics.failures.empty() ? 1 : 0;
}

int cmd_sweep(const CommonFlags& flags, const std::string& axis,
              const std::vector<std::string>& values, const std::string& grid_path) {
  const auto config = load_config(flags);
  const auto points = sweep(config, axis, values);
  for (const auto& point : points) {
    std::cout << "== " << axis << " = " << point.value << " ==\n";
    print_metrics(point.metrics);
  }
  if (!grid_path.empty()) {
    std::vector<std::pair<std::string, const RunMetrics*>> conditions;
    conditions.reserve(points.size());
    for (const auto& point : points) {
      conditions.emplace_back(point.value, &point.metrics);
    }
    std::ofstream out(grid_path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + grid_path);
    out << render_frequency_grid(conditions);
    std::cout << "wrote:\n  " << grid_path << "\n";
  }
  return 0;
}

int cmd_crossplay(const CommonFlags& flags, const std::string& pairing_name,
                  const std::string& pool_path) {
  const auto config = load_config(flags);

  std::vector<BackendSpec> pool;
  if (pool_path.empty()) {
    pool.assign(config.players.begin(), config.players.end());
  } else {
    std::ifstream in(pool_path, std::ios::binary);
    if (!in) throw IoError("cannot read " + pool_path);
    std::stringstream buffer;
    buffer << in.rdbuf();
    nlohmann::json arr;
    try {
      arr = nlohmann::json::parse(buffer.str());
    } catch (const nlohmann::json::exception& e) {
      throw ConfigInvalid(std::string("pool file is not valid JSON: ") + e.what());
    }
    if (!arr.is_array() || arr.empty()) {
      throw ConfigInvalid("pool file must hold a non-empty array of player specs");
    }
    for (const auto& entry : arr) pool.push_back(parse_backend_spec(entry.dump()));
  }

  const auto pairing =
      pairing_name == "within" ? Pairing::WithinPool : Pairing::CrossPool;
  const auto cells = cross_play(config, pool, pairing);
  for (const auto& cell : cells) {
    std::cout << "== pool[" << cell.seat0 << "] vs "
              << (cell.seat1 < 0 ? std::string("config seat 1")
                                 : "pool[" + std::to_string(cell.seat1) + "]")
              << " ==\n";
    print_metrics(cell.metrics);
  }
  return 0;
}

// Plays the config's backends through one world and mines the resulting
// transcripts for supervision items.
int cmd_export_alignment(const CommonFlags& flags, const std::string& out_dir,
                         int count, int negatives) {
  const auto config = load_config(flags);
  if (config.game.kind != GameSpec::Kind::Matrix) {
    throw ConfigInvalid("export-alignment needs a matrix game config");
  }

  WorldConfig wc;
  wc.game = config.game;
  wc.num_iterations = config.iterations;
  wc.comm = config.comm;
  wc.memory_mode = config.memory_mode;
  wc.mask_task_context = config.mask_task_context;
  wc.targets = config.targets;
  wc.guidance = config.guidance;
  wc.k_system = config.k_system;
  wc.k_action = config.k_action;
  wc.chunk_max_tokens = config.chunk_max_tokens;
  wc.chunk_overlap_tokens = config.chunk_overlap_tokens;
  wc.embed_dim = config.embed_dim;
  wc.seed = config.seed;

  const auto game = make_classic_game(config.game.matrix, config.game.params);
  std::array<std::unique_ptr<Backend>, kNumPlayers> backends;
  for (int s = 0; s < kNumPlayers; ++s) {
    backends[static_cast<std::size_t>(s)] = make_backend(
        config.players[static_cast<std::size_t>(s)], game.action_labels(s),
        game.action_labels(1 - s));
  }
  World world(wc, std::move(backends));
  world.run_all();

  std::vector<SolutionConcept> targets;
  for (const auto& target : config.targets) {
    if (target && std::find(targets.begin(), targets.end(), *target) == targets.end()) {
      targets.push_back(*target);
    }
  }
  if (targets.empty()) targets.push_back(SolutionConcept::PureNash);

  fs::create_directories(out_dir);
  DatasetMeta meta;
  meta.game = config.game.matrix;
  meta.params = config.game.params;
  meta.seed = config.seed;

  const auto shard = [&](const std::string& kind,
                         const std::vector<DatasetRecord>& records) {
    const auto path = (fs::path(out_dir) / (kind + ".jsonl")).string();
    meta.kind = kind;
    export_dataset(records, kind, meta, path);
    std::cout << "  " << path << "  " << records.size() << " records\n";
  };

  std::vector<DatasetRecord> qa;
  std::vector<DatasetRecord> supervision;
  std::vector<DatasetRecord> preferences;
  for (int seat = 0; seat < kNumPlayers; ++seat) {
    const auto& window = world.window(seat);
    for (const auto& item :
         gen_qa_items(config.game.matrix, config.game.params, window, count,
                      mix_seed(config.seed, 1000 + static_cast<std::uint64_t>(seat)))) {
      qa.push_back(to_record(item));
    }
    const auto seat_target = config.targets[static_cast<std::size_t>(seat)].value_or(
        SolutionConcept::PureNash);
    for (const auto& item : gen_action_supervision(config.game.matrix,
                                                   config.game.params, window,
                                                   seat_target)) {
      supervision.push_back(to_record(item));
    }
    for (int i = 0; i < 4; ++i) {
      for (int j = 0; j < 4; ++j) {
        if (i == j) continue;
        const auto a = MixedProfile::degenerate(game, {i / 2, i % 2});
        const auto b = MixedProfile::degenerate(game, {j / 2, j % 2});
        preferences.push_back(to_record(joint_prefer(a, b, game, targets, seat)));
      }
    }
  }
  std::vector<DatasetRecord> profiles;
  for (const auto& profile : gen_negative_samples(game, targets, negatives,
                                                  mix_seed(config.seed, 2000))) {
    profiles.push_back(to_record(profile));
  }

  std::cout << "wrote:\n";
  shard("qa", qa);
  shard("action_supervision", supervision);
  shard("preference", preferences);
  shard("profile", profiles);
  return 0;
}

int cmd_replay(const std::string& run_dir) {
  const auto metrics = replay(run_dir);
  print_metrics(metrics);

  const auto scratch = fs::path(run_dir) / "replay_check";
  fs::create_directories(scratch);
  const auto fresh = emit_plots(metrics, scratch.string());

  const auto slurp = [](const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    std::stringstream buffer;
    buffer << in.rdbuf();
    return buffer.str();
  };
  bool all_match = true;
  for (const auto& path : fresh) {
    const auto name = fs::path(path).filename();
    const auto recorded = fs::path(run_dir) / name;
    if (!fs::exists(recorded) || slurp(recorded) != slurp(path)) {
      std::cerr << "mismatch: " << name.string() << "\n";
      all_match = false;
    }
  }
  fs::remove_all(scratch);
  if (all_match) {
    std::cout << "replay reproduces the recorded tables\n";
    return 0;
  }
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"multi-agent game experiments"};
  app.require_subcommand(1);

  CommonFlags run_flags;
  auto* run_cmd = app.add_subcommand("run", "run one experiment");
  add_common_flags(*run_cmd, run_flags);

  CommonFlags sweep_flags;
  std::string axis;
  std::vector<std::string> values;
  std::string grid_path;
  auto* sweep_cmd = app.add_subcommand("sweep", "rerun across one config axis");
  add_common_flags(*sweep_cmd, sweep_flags);
  sweep_cmd->add_option("-a,--axis", axis, "axis, e.g. comm.rounds or memory.mode")
      ->required();
  sweep_cmd->add_option("-v,--values", values, "axis values")
      ->required()
      ->delimiter(',');
  sweep_cmd->add_option("--grid", grid_path,
                        "also write a joint-frequency grid CSV here");

  CommonFlags cross_flags;
  std::string pairing = "within";
  std::string pool_path;
  auto* cross_cmd = app.add_subcommand("crossplay", "pair strategies from a pool");
  add_common_flags(*cross_cmd, cross_flags);
  cross_cmd->add_option("-p,--pairing", pairing, "within or cross")
      ->check(CLI::IsMember({"within", "cross"}));
  cross_cmd->add_option("--pool", pool_path,
                        "JSON array of player specs (default: the config's players)")
      ->check(CLI::ExistingFile);

  CommonFlags export_flags;
  std::string export_dir = "alignment";
  int count = 100;
  int negatives = 16;
  auto* export_cmd =
      app.add_subcommand("export-alignment", "mine training datasets from a run");
  add_common_flags(*export_cmd, export_flags);
  export_cmd->add_option("--out", export_dir, "dataset directory");
  export_cmd->add_option("--count", count, "QA items per seat")
      ->check(CLI::PositiveNumber);
  export_cmd->add_option("--negatives", negatives, "off-target profile samples")
      ->check(CLI::PositiveNumber);

  std::string run_dir;
  auto* replay_cmd =
      app.add_subcommand("replay", "re-drive a recorded run through its transcripts");
  replay_cmd->add_option("-r,--run-dir", run_dir, "run directory")
      ->required()
      ->check(CLI::ExistingDirectory);

  CLI11_PARSE(app, argc, argv);

  try {
    if (run_cmd->parsed()) return cmd_run(run_flags);
    if (sweep_cmd->parsed()) return cmd_sweep(sweep_flags, axis, values, grid_path);
    if (cross_cmd->parsed()) return cmd_crossplay(cross_flags, pairing, pool_path);
    if (export_cmd->parsed()) {
      return cmd_export_alignment(export_flags, export_dir, count, negatives);
    }
    if (replay_cmd->parsed()) return cmd_replay(run_dir);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
