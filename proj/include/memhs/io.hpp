#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "memhs/graph.hpp"
#include "memhs/hand_eye.hpp"
#include "memhs/optimizer.hpp"
#include "memhs/simulator.hpp"

namespace memhs {

using Json = nlohmann::ordered_json;

inline constexpr std::string_view kToolVersion = "0.1.0";

std::string sha256_hex(std::string_view bytes);
std::string read_file(const std::filesystem::path& path);
/// Writes to a sibling temporary file, then renames over `path`.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);

/// Shortest decimal form that parses back to the same double.
std::string format_double(double v);

/// Row-major 16 numbers. On ingestion, rotations off SO(3) by more than
/// 1e-12 are projected back; blocks off by more than 1e-3 are rejected.
Json transform_to_json(const Transform& t);
Transform transform_from_json(const Json& j, const std::string& where);

struct SystemDescription {
  CalibrationGraph graph;
  double probe_scale_mm = 100.0;
  SolverConfig solver;
};

/// Strict schema: unknown fields are rejected with the offending path.
SystemDescription parse_system(const Json& j);
Json system_to_json(const SystemDescription& s);

struct Plan {
  std::string system_digest;
  SpanningTree tree;
  std::vector<DirectedEdge> sequence;
  std::vector<CalibrationLoop> loops;
};

Json plan_to_json(const CalibrationGraph& g, const Plan& plan);
Plan parse_plan(const CalibrationGraph& g, const Json& j);

/// First line {"system_digest": ...}, then one record per line.
std::string measurements_to_jsonl(std::string_view system_digest, const std::vector<MeasurementRecord>& records);
struct MeasurementFile {
  std::string system_digest;
  std::vector<MeasurementRecord> records;
};
MeasurementFile parse_measurements(std::string_view text);

/// Estimates of unknown edges, canonical direction.
Json estimates_to_json(const CalibrationGraph& g, std::string_view system_digest, std::string_view stage,
                       const EstimateMap& estimates);
struct EstimateFile {
  std::string system_digest;
  std::string stage;
  EstimateMap estimates;
};
EstimateFile parse_estimates(const CalibrationGraph& g, const Json& j);

std::string trace_to_csv(const ConvergenceTrace& trace);
std::string error_report_to_csv(const ErrorReport& report);

/// Pretty-printed JSON with a trailing newline.
std::string dump_json(const Json& j);
Json parse_json(std::string_view text, const std::string& what);

}  // namespace memhs
