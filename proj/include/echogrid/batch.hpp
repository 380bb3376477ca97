#pragma once

// Seed batches and crossover cohorts of scripted-agent sessions.

#include "echogrid/analysis.hpp"
#include "echogrid/simulation.hpp"

#include <json.hpp>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace echogrid::batch {

using nlohmann::json;

/// "3", "0..9" (inclusive), or a comma-separated mix of both. Throws
/// std::invalid_argument on malformed or empty input.
std::vector<std::uint64_t> parse_seed_list(std::string_view text);

struct RunSpec {
  std::string participant;
  Group group = Group::G2D3D;
  int session = 1;
  Mode mode = Mode::TwoD;
  TaskKind task = TaskKind::Localization;
  int course = 0;             // 1..3 for navigation
  std::uint64_t seed = 0;     // layout seed handed to the task generator
  std::uint64_t base_seed = 0;
  AgentKind agent = AgentKind::Sweep;
};

AgentKind default_agent(TaskKind task);

/// One run per seed; navigation runs use the seed as course 1 layout.
std::vector<RunSpec> plan_batch(TaskKind task, Mode mode, AgentKind agent, std::span<const std::uint64_t> seeds);

struct CrossoverOptions {
  int participants = 16;
  std::uint64_t base_seed = 0;
  bool localization = true;
  bool navigation = true;
  std::optional<AgentKind> localization_agent;
  std::optional<AgentKind> navigation_agent;
};

/// Participant i (zero-based, named p01, p02, ...) joins group 2D3D when i is
/// even and 3D2D when odd. Both sessions reuse the same layouts: table seed
/// base + i, course c seed course_seed(base + i, c).
std::vector<RunSpec> plan_crossover(const CrossoverOptions& options);

struct RunOutcome {
  RunSpec spec;
  SessionLog log;
  analysis::Metrics metrics;
};

RunOutcome run(const RunSpec& spec, const SimConfig& config = {});
std::vector<RunOutcome> run_all(std::span<const RunSpec> specs, const SimConfig& config = {});

/// `<participant>-s<session>-<task>[-c<course>].jsonl`, or `<task>-<seed>.jsonl`
/// for anonymous runs.
std::string log_file_name(const RunSpec& spec);

/// One row per run, RFC 4180, nine significant digits.
std::string summary_csv(std::span<const RunOutcome> outcomes);
json summary_json(std::span<const RunOutcome> outcomes);

/// Flat dataset for the stats tool. Localization metrics: "mean_error_m",
/// "time_s" (factor1 = mode, factor2 = group). Navigation metrics:
/// "course_time_s", "missed" (factor1 = mode, factor2 = course).
std::vector<analysis::Record> dataset(std::span<const RunOutcome> outcomes, TaskKind task, std::string_view metric);

/// Simulation and grid settings from a JSON config document. Unknown keys
/// throw DataError.
SimConfig sim_config_from_json(const json& doc);

}  // namespace echogrid::batch
