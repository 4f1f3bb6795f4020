#pragma once

#include <map>
#include <span>
#include <vector>

#include "memhs/graph.hpp"
#include "memhs/se3.hpp"

namespace memhs {

/// Relative motions observed on both sides of an unknown X: A X = X B.
struct MotionPair {
  Transform a;
  Transform b;
};

/// One observed transform ^from T_to at one system configuration.
struct MeasurementRecord {
  int config = 0;
  VertexId from;
  VertexId to;
  Transform observed;
};

/// Records indexed by edge and configuration, stored in canonical direction.
class MeasurementSet {
 public:
  MeasurementSet() = default;
  /// Throws InvalidRecord for records on unknown, forbidden or missing edges,
  /// negative configuration ids or duplicates.
  MeasurementSet(const CalibrationGraph& g, std::span<const MeasurementRecord> records);

  bool has(EdgeIndex e) const { return samples_.contains(e); }
  const std::map<int, Transform>& samples(EdgeIndex e) const;
  /// The value of a step at one configuration, in traversal direction.
  std::optional<Transform> value(EdgeIndex e, int config, bool forward) const;
  std::size_t count(EdgeIndex e) const { return has(e) ? samples_.at(e).size() : 0; }
  /// Configuration ids where every listed edge has a record.
  std::vector<int> common_configs(std::span<const EdgeIndex> edges) const;
  const std::map<EdgeIndex, std::map<int, Transform>>& all() const { return samples_; }

 private:
  std::map<EdgeIndex, std::map<int, Transform>> samples_;
};

/// Sets n on every measured edge to its record count.
void update_measurement_counts(CalibrationGraph& g, const MeasurementSet& m);

struct HandEyeSolution {
  Transform x;
  double rotation_residual = 0.0;     // rms of |log R_A - R_X log R_B| (rad)
  double translation_residual = 0.0;  // rms of the stacked translation system (mm)
};

/// Minimum angle (rad) between two rotation axes for the motion to be
/// considered non-degenerate.
inline constexpr double kParallelAxisThreshold = 1e-3;

/// Solves A X = X B in one stage: R_X aligns the so(3) logs of A to those of
/// B, then t_X is the linear least-squares solution of
/// (R_A - I) t_X = R_X t_B - t_A. Throws TooFewPairs, DegenerateMotion.
HandEyeSolution solve_ax_xb(std::span<const MotionPair> pairs);

/// Pose of camera 2 in camera 1 from both cameras' views of one target.
Transform relative_pose_shared_target(const Transform& t_cam1_target, const Transform& t_cam2_target);

/// Several target placements, fused by tangent-space averaging.
Transform relative_pose_shared_target(std::span<const std::pair<Transform, Transform>> placements);

/// Tangent-space mean: log-mean about the first sample, then one refit about
/// that mean.
Transform tangent_mean(std::span<const Transform> samples);

using EstimateMap = std::map<EdgeIndex, Transform>;

/// Initial estimates for every unknown edge. Unknown tree edges are solved in
/// calibration-sequence order by hand-eye or shared-target calibration over a
/// cycle through already-known data; non-tree unknown edges are composed
/// through the tree at a reference configuration.
/// Throws InsufficientData, DegenerateMotion (with the edge named).
EstimateMap initialize_tree(const CalibrationGraph& g, const SpanningTree& tree, const MeasurementSet& measurements);

}  // namespace memhs
