#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "memhs/se3.hpp"

namespace memhs {

enum class VertexKind { RobotBase, RobotFlange, EyeInHandCamera, EyeToHandCamera };

enum class EdgeKind {
  MeasuredKinematic,  // robot forward kinematics, varies with configuration
  MeasuredVision,     // camera observation, one sample per configuration
  UnknownConstant,    // rigid transform to be calibrated
  Forbidden,          // cannot be measured; never used for planning
};

std::string_view to_string(VertexKind kind);
std::string_view to_string(EdgeKind kind);
VertexKind vertex_kind_from_string(std::string_view s);
EdgeKind edge_kind_from_string(std::string_view s);

inline bool is_camera(VertexKind k) {
  return k == VertexKind::EyeInHandCamera || k == VertexKind::EyeToHandCamera;
}
inline bool is_measured(EdgeKind k) {
  return k == EdgeKind::MeasuredKinematic || k == EdgeKind::MeasuredVision;
}

using VertexId = std::string;
using EdgeIndex = std::size_t;

struct Vertex {
  VertexId id;
  VertexKind kind = VertexKind::RobotBase;
  double eta = 1.0;  // measurement-noise magnitude, > 0
};

/// Undirected edge stored with a canonical direction from -> to. `estimate`,
/// when set, is ^from T_to.
struct Edge {
  VertexId from;
  VertexId to;
  EdgeKind kind = EdgeKind::Forbidden;
  int n = 0;
  double d = 0.0;
  double phi = 1.0;
  std::optional<Transform> estimate;
};

/// Phi = 1 / (ln(n (1/eta_i + 1/eta_j + d) + 1) + 1).
double edge_weight(double eta_i, double eta_j, int n, double d);

/// Largest eigenvalue of a symmetric PSD covariance, clamped below by 1e-12.
double eta_from_covariance(const Mat3& cov);

/// Sum of 1/Phi over the loop's edges.
double loop_weight(std::span<const double> phis);

/// The complete graph of frames with weighted edges. Vertices keep insertion
/// order; at most one edge per unordered vertex pair.
class CalibrationGraph {
 public:
  void add_vertex(Vertex v);
  /// Adds an edge; phi is derived from the endpoint etas, n and d.
  EdgeIndex add_edge(const VertexId& from, const VertexId& to, EdgeKind kind, int n = 0, double d = 0.0);

  /// Updates the measurement count of a measured edge and recomputes phi.
  void set_measurement_count(EdgeIndex e, int n);
  /// Changes a vertex eta and recomputes phi on every incident edge.
  void set_eta(const VertexId& id, double eta);
  void set_estimate(EdgeIndex e, const Transform& t);

  const std::vector<Vertex>& vertices() const { return vertices_; }
  const std::vector<Edge>& edges() const { return edges_; }
  const Edge& edge(EdgeIndex e) const { return edges_.at(e); }
  const Vertex& vertex(const VertexId& id) const;
  bool has_vertex(const VertexId& id) const { return vertex_index_.contains(id); }
  std::size_t vertex_index(const VertexId& id) const;

  std::optional<EdgeIndex> find_edge(const VertexId& a, const VertexId& b) const;
  /// Edge indices incident to `id`, in edge insertion order.
  const std::vector<EdgeIndex>& incident(const VertexId& id) const;
  const VertexId& other_end(EdgeIndex e, const VertexId& id) const;

  std::vector<EdgeIndex> edges_of_kind(EdgeKind kind) const;

 private:
  void recompute_phi(EdgeIndex e);

  std::vector<Vertex> vertices_;
  std::vector<Edge> edges_;
  std::map<VertexId, std::size_t> vertex_index_;
  std::map<std::pair<VertexId, VertexId>, EdgeIndex> edge_index_;
  std::vector<std::vector<EdgeIndex>> incident_;
};

struct SpanningTree {
  VertexId root;
  std::vector<EdgeIndex> edges;  // v - 1 entries, in insertion order

  bool contains(EdgeIndex e) const;
};

/// An edge traversed in a chosen direction. forward == true means the
/// canonical from -> to direction.
struct DirectedEdge {
  EdgeIndex edge = 0;
  bool forward = true;
};

enum class StepRole { Measured, Unknown };

struct LoopStep {
  EdgeIndex edge = 0;
  bool forward = true;
  StepRole role = StepRole::Measured;
};

/// Simple cycle of directed steps; omega = sum of 1/Phi over its edges.
struct CalibrationLoop {
  std::vector<LoopStep> steps;
  double omega = 0.0;

  /// Sorted edge indices, used as identity for deduplication.
  std::vector<EdgeIndex> edge_set() const;
  /// Vertex sequence v0 -> v1 -> ... -> v0 (first vertex repeated at the end).
  std::vector<VertexId> vertex_sequence(const CalibrationGraph& g) const;
};

/// Source/target vertex of a directed traversal.
const VertexId& tail(const CalibrationGraph& g, EdgeIndex e, bool forward);
const VertexId& head(const CalibrationGraph& g, EdgeIndex e, bool forward);

/// Builds a loop from an ordered list of directed edges, assigning roles from
/// edge kinds and computing omega.
CalibrationLoop make_loop(const CalibrationGraph& g, std::span<const DirectedEdge> steps);

}  // namespace memhs
