#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "memhs/graph.hpp"
#include "memhs/hand_eye.hpp"
#include "memhs/optimizer.hpp"
#include "memhs/se3.hpp"

namespace memhs {

struct NoiseSpec {
  double sigma_trans = 0.0;  // mm
  double sigma_rot = 0.0;    // rad

  /// Rotation noise tied to translation noise at 1 mrad per mm.
  static NoiseSpec from_translation(double sigma_mm) { return {sigma_mm, sigma_mm / 1000.0}; }
};

/// Vertex eta by kind. Edge noise is scaled by sqrt(max eta) of its endpoints.
struct NoisePresets {
  double robot_base = 0.25;
  double robot_flange = 0.25;
  double eye_in_hand = 1.0;
  double eye_to_hand = 0.5;

  double eta(VertexKind kind) const;
};

/// Synthetic cell. Vertices are R1..Rn (bases), H1..Hn (flanges), E1..Ee
/// (eye-in-hand camera Ej rides on robot j) and C1..Cc (fixed cameras).
struct GroundTruthSystem {
  CalibrationGraph graph;
  std::map<EdgeIndex, Transform> true_transforms;  // every unknown edge, canonical direction
  std::uint64_t seed = 0;

  int robots = 0;
  int eye_in_hand = 0;
  int eye_to_hand = 0;
  std::vector<Transform> base_poses;  // world <- base
  std::vector<Transform> eih_mounts;  // flange <- camera
  std::vector<Transform> eth_poses;   // world <- camera
  std::vector<double> edge_noise_scale;  // per edge, multiplies the NoiseSpec
};

/// One system configuration: base <- flange for every robot.
struct Configuration {
  std::vector<Transform> flange_poses;
};

/// Throws InvalidCounts.
GroundTruthSystem generate_system(int robots, int eye_in_hand, int eye_to_hand, double workspace_extent_mm,
                                  std::uint64_t seed, const NoisePresets& presets = {});

/// Splits `cameras` into eye-in-hand and eye-to-hand by a fair coin per
/// camera (eye-in-hand capped at one per robot).
GroundTruthSystem generate_system_with_cameras(int robots, int cameras, double workspace_extent_mm,
                                               std::uint64_t seed, const NoisePresets& presets = {});

std::vector<Configuration> sample_configurations(const GroundTruthSystem& system, int n_configs, std::uint64_t seed);

/// World poses of every vertex, indexed like graph.vertices().
std::vector<Transform> world_poses(const GroundTruthSystem& system, const Configuration& config);

/// ^from T_to of edge e at one configuration.
Transform edge_truth(const GroundTruthSystem& system, const Configuration& config, EdgeIndex e);

/// One noisy record per measured edge per configuration, configurations from
/// sample_configurations(system, n_configs, seed). Sets n on measured edges.
std::vector<MeasurementRecord> sample_measurements(GroundTruthSystem& system, int n_configs, const NoiseSpec& noise,
                                                   std::uint64_t seed);

/// Scales the noise of one measured edge.
void contaminate_edge(GroundTruthSystem& system, EdgeIndex e, double factor);

/// Randomized Prim: each step adds a uniformly chosen frontier edge.
SpanningTree random_spanning_tree(const CalibrationGraph& g, const VertexId& root, std::uint64_t seed);

/// Path length cap shared by the random and all-loops baselines.
inline constexpr std::size_t kMaxBaselinePathEdges = 6;

/// One loop per unknown edge through the shortest path under uniformly random
/// edge costs (forbidden edges and the edge itself pruned, at most
/// kMaxBaselinePathEdges edges, at least one measured edge), deduplicated.
std::vector<CalibrationLoop> random_loop_set(const CalibrationGraph& g, const SpanningTree& tree, std::uint64_t seed);

/// For every unknown edge, loops through up to `per_edge` distinct pruned
/// simple paths of at most kMaxBaselinePathEdges edges, drawn by randomized
/// depth-first search, deduplicated. Stands in for the full set of capped
/// paths, which grows exponentially with the cap.
std::vector<CalibrationLoop> all_loops_set(const CalibrationGraph& g, std::uint64_t seed, std::size_t per_edge = 10);

struct EdgeError {
  EdgeIndex edge = 0;
  VertexId from;
  VertexId to;
  Vec3 rotation = Vec3::Zero();  // log(R_est R_true^T)
  double rotation_angle = 0.0;
  Vec3 translation = Vec3::Zero();  // t_est - t_true
  double translation_norm = 0.0;
};

struct ErrorReport {
  std::vector<EdgeError> edges;
  double mean_translation_error = 0.0;  // mm
  double mean_rotation_error = 0.0;     // rad
};

/// Throws MissingEstimate.
ErrorReport evaluate_errors(const CalibrationGraph& g, const EstimateMap& estimates,
                            const std::map<EdgeIndex, Transform>& truth);

enum class Strategy { Optimal, RandomPath, AllLoops };

std::string_view to_string(Strategy s);
Strategy strategy_from_string(std::string_view s);

/// Plan, initialize and optimize on one measurement set.
struct PipelineResult {
  SpanningTree tree;
  std::vector<CalibrationLoop> loops;
  EstimateMap initial;
  EstimateMap refined;
  ConvergenceTrace trace;
};

PipelineResult run_pipeline(const CalibrationGraph& g, const MeasurementSet& measurements, Strategy strategy,
                            std::uint64_t plan_seed, const SolverConfig& solver = {},
                            const std::vector<Point>& probes = default_probe_points());

struct SeedOutcome {
  std::uint64_t seed = 0;
  std::optional<ErrorReport> report;
  std::string failure;
};

struct ExperimentResult {
  std::vector<SeedOutcome> seeds;
  double mean_error = 0.0;  // mean over successful seeds
  double max_error = 0.0;
  std::size_t failures = 0;
};

/// Full pipeline per seed on a copy of `system`. Failures are recorded per
/// seed without aborting the others.
ExperimentResult run_experiment(const GroundTruthSystem& system, Strategy strategy, const NoiseSpec& noise,
                                int n_configs, const std::vector<std::uint64_t>& seeds,
                                const SolverConfig& solver = {});

}  // namespace memhs
