#pragma once
// JSON configuration covering the whole stack, episode orchestration, and
// trace replay. A config document has sections layout / sim / driver /
// primitives / idm / mobil / planning; every key is optional (defaults apply)
// but unknown keys and malformed values are rejected so typos cannot pass
// silently.

#include <cstdint>
#include <string>

#include "json.hpp"
#include "mergesim/experiments.hpp"
#include "mergesim/simulator.hpp"

namespace mergesim {

struct AppConfig {
  SimConfig sim;        // layout + driver model + engine knobs
  PlannerSpec planner;  // planning section
};

// Throw std::runtime_error with a path-annotated message on any violation.
AppConfig app_config_from_json(const nlohmann::json& doc);
AppConfig load_app_config(const std::string& path);

// Full canonical form: every field, suitable for embedding in a trace and
// exact round-tripping (app_config_from_json(to_json(c)) == c field-wise).
nlohmann::json to_json(const AppConfig& cfg);

struct EpisodeOutcome {
  EpisodeResult result;
  std::uint64_t digest = 0;
  long trace_lines = 0;
};

// Writes the meta line, runs one full episode, returns metrics + digest.
EpisodeOutcome run_episode(const AppConfig& cfg, TraceWriter* writer,
                           SampleSink* sink = nullptr);

struct ReplayReport {
  bool ok = false;
  std::uint64_t original_digest = 0;
  std::uint64_t replay_digest = 0;
  long original_lines = 0;
  long replay_lines = 0;
};

// Re-runs the episode embedded in a trace and compares digests bit-exactly.
ReplayReport replay_trace(const std::string& path);

}  // namespace mergesim
