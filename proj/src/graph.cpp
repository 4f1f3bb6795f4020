#include "memhs/graph.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Eigenvalues>

#include "memhs/error.hpp"

namespace memhs {

std::string_view to_string(VertexKind kind) {
  switch (kind) {
    case VertexKind::RobotBase: return "robot_base";
    case VertexKind::RobotFlange: return "robot_flange";
    case VertexKind::EyeInHandCamera: return "eye_in_hand_camera";
    case VertexKind::EyeToHandCamera: return "eye_to_hand_camera";
  }
  return "?";
}

std::string_view to_string(EdgeKind kind) {
  switch (kind) {
    case EdgeKind::MeasuredKinematic: return "measured_kinematic";
    case EdgeKind::MeasuredVision: return "measured_vision";
    case EdgeKind::UnknownConstant: return "unknown_constant";
    case EdgeKind::Forbidden: return "forbidden";
  }
  return "?";
}

VertexKind vertex_kind_from_string(std::string_view s) {
  for (auto k : {VertexKind::RobotBase, VertexKind::RobotFlange, VertexKind::EyeInHandCamera,
                 VertexKind::EyeToHandCamera}) {
    if (to_string(k) == s) return k;
  }
  throw Error(ErrorCode::Schema, "unknown vertex kind '" + std::string(s) + "'");
}

EdgeKind edge_kind_from_string(std::string_view s) {
  for (auto k : {EdgeKind::MeasuredKinematic, EdgeKind::MeasuredVision, EdgeKind::UnknownConstant,
                 EdgeKind::Forbidden}) {
    if (to_string(k) == s) return k;
  }
  throw Error(ErrorCode::Schema, "unknown edge kind '" + std::string(s) + "'");
}

double edge_weight(double eta_i, double eta_j, int n, double d) {
  if (!(eta_i > 0.0) || !(eta_j > 0.0)) {
    throw Error(ErrorCode::NonPositiveEta, "vertex weights must be positive");
  }
  if (n < 0 || d < 0.0) throw Error(ErrorCode::InvalidEdge, "n and d must be nonnegative");
  return 1.0 / (std::log(n * (1.0 / eta_i + 1.0 / eta_j + d) + 1.0) + 1.0);
}

double eta_from_covariance(const Mat3& cov) {
  if ((cov - cov.transpose()).cwiseAbs().maxCoeff() > 1e-9) {
    throw Error(ErrorCode::NotSymmetric, "covariance matrix is not symmetric");
  }
  Eigen::SelfAdjointEigenSolver<Mat3> solver(cov, Eigen::EigenvaluesOnly);
  return std::max(solver.eigenvalues().maxCoeff(), 1e-12);
}

double loop_weight(std::span<const double> phis) {
  double sum = 0.0;
  for (double phi : phis) sum += 1.0 / phi;
  return sum;
}

void CalibrationGraph::add_vertex(Vertex v) {
  if (!(v.eta > 0.0)) {
    throw Error(ErrorCode::NonPositiveEta, "vertex '" + v.id + "' has non-positive eta");
  }
  if (vertex_index_.contains(v.id)) throw Error(ErrorCode::DuplicateVertex, "vertex '" + v.id + "'");
  vertex_index_.emplace(v.id, vertices_.size());
  vertices_.push_back(std::move(v));
  incident_.emplace_back();
}

EdgeIndex CalibrationGraph::add_edge(const VertexId& from, const VertexId& to, EdgeKind kind, int n, double d) {
  const std::size_t a = vertex_index(from);
  const std::size_t b = vertex_index(to);
  if (a == b) throw Error(ErrorCode::InvalidEdge, "self edge on '" + from + "'");
  if (find_edge(from, to)) throw Error(ErrorCode::InvalidEdge, "duplicate edge " + from + "-" + to);
  if ((kind == EdgeKind::UnknownConstant || kind == EdgeKind::Forbidden) && n != 0) {
    throw Error(ErrorCode::InvalidEdge, "edge " + from + "-" + to + " cannot carry measurements");
  }
  if (n < 0 || !(d >= 0.0)) throw Error(ErrorCode::InvalidEdge, "edge " + from + "-" + to + ": n and d must be >= 0");
  const EdgeIndex e = edges_.size();
  edges_.push_back(Edge{from, to, kind, n, d, 1.0, std::nullopt});
  recompute_phi(e);
  edge_index_.emplace(std::minmax(from, to), e);
  incident_[a].push_back(e);
  incident_[b].push_back(e);
  return e;
}

void CalibrationGraph::recompute_phi(EdgeIndex e) {
  Edge& edge = edges_[e];
  edge.phi = edge_weight(vertex(edge.from).eta, vertex(edge.to).eta, edge.n, edge.d);
}

void CalibrationGraph::set_measurement_count(EdgeIndex e, int n) {
  Edge& edge = edges_.at(e);
  if (!is_measured(edge.kind) && n != 0) {
    throw Error(ErrorCode::InvalidEdge, "edge " + edge.from + "-" + edge.to + " cannot carry measurements");
  }
  edge.n = n;
  recompute_phi(e);
}

void CalibrationGraph::set_eta(const VertexId& id, double eta) {
  if (!(eta > 0.0)) throw Error(ErrorCode::NonPositiveEta, "vertex '" + id + "' has non-positive eta");
  vertices_[vertex_index(id)].eta = eta;
  for (EdgeIndex e : incident(id)) recompute_phi(e);
}

void CalibrationGraph::set_estimate(EdgeIndex e, const Transform& t) {
  Edge& edge = edges_.at(e);
  if (edge.kind == EdgeKind::Forbidden) {
    throw Error(ErrorCode::InvalidEdge, "forbidden edge " + edge.from + "-" + edge.to + " cannot carry an estimate");
  }
  edge.estimate = t;
}

const Vertex& CalibrationGraph::vertex(const VertexId& id) const { return vertices_[vertex_index(id)]; }

std::size_t CalibrationGraph::vertex_index(const VertexId& id) const {
  auto it = vertex_index_.find(id);
  if (it == vertex_index_.end()) throw Error(ErrorCode::UnknownVertex, "vertex '" + id + "'");
  return it->second;
}

std::optional<EdgeIndex> CalibrationGraph::find_edge(const VertexId& a, const VertexId& b) const {
  auto it = edge_index_.find(std::minmax(a, b));
  if (it == edge_index_.end()) return std::nullopt;
  return it->second;
}

const std::vector<EdgeIndex>& CalibrationGraph::incident(const VertexId& id) const {
  return incident_[vertex_index(id)];
}

const VertexId& CalibrationGraph::other_end(EdgeIndex e, const VertexId& id) const {
  const Edge& edge = edges_.at(e);
  return edge.from == id ? edge.to : edge.from;
}

std::vector<EdgeIndex> CalibrationGraph::edges_of_kind(EdgeKind kind) const {
  std::vector<EdgeIndex> out;
  for (EdgeIndex e = 0; e < edges_.size(); ++e) {
    if (edges_[e].kind == kind) out.push_back(e);
  }
  return out;
}

bool SpanningTree::contains(EdgeIndex e) const { return std::find(edges.begin(), edges.end(), e) != edges.end(); }

std::vector<EdgeIndex> CalibrationLoop::edge_set() const {
  std::vector<EdgeIndex> out;
  out.reserve(steps.size());
  for (const auto& s : steps) out.push_back(s.edge);
  std::sort(out.begin(), out.end());
  return out;
}

const VertexId& tail(const CalibrationGraph& g, EdgeIndex e, bool forward) {
  return forward ? g.edge(e).from : g.edge(e).to;
}

const VertexId& head(const CalibrationGraph& g, EdgeIndex e, bool forward) {
  return forward ? g.edge(e).to : g.edge(e).from;
}

std::vector<VertexId> CalibrationLoop::vertex_sequence(const CalibrationGraph& g) const {
  std::vector<VertexId> out;
  if (steps.empty()) return out;
  out.push_back(tail(g, steps.front().edge, steps.front().forward));
  for (const auto& s : steps) out.push_back(head(g, s.edge, s.forward));
  return out;
}

CalibrationLoop make_loop(const CalibrationGraph& g, std::span<const DirectedEdge> steps) {
  CalibrationLoop loop;
  std::vector<double> phis;
  for (const auto& s : steps) {
    const Edge& e = g.edge(s.edge);
    if (e.kind == EdgeKind::Forbidden) {
      throw Error(ErrorCode::InvalidEdge, "loop uses forbidden edge " + e.from + "-" + e.to);
    }
    loop.steps.push_back({s.edge, s.forward, e.kind == EdgeKind::UnknownConstant ? StepRole::Unknown : StepRole::Measured});
    phis.push_back(e.phi);
  }
  for (std::size_t i = 0; i < steps.size(); ++i) {
    const auto& a = steps[i];
    const auto& b = steps[(i + 1) % steps.size()];
    if (head(g, a.edge, a.forward) != tail(g, b.edge, b.forward)) {
      throw Error(ErrorCode::InvalidEdge, "loop steps do not chain into a cycle");
    }
  }
  loop.omega = loop_weight(phis);
  return loop;
}

}  // namespace memhs
