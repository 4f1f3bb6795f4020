#include "memhs/hand_eye.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <queue>
#include <set>
#include <tuple>

#include <Eigen/QR>
#include <Eigen/LU>
#include <Eigen/SVD>

#include "memhs/error.hpp"
#include "memhs/planner.hpp"

namespace memhs {

MeasurementSet::MeasurementSet(const CalibrationGraph& g, std::span<const MeasurementRecord> records) {
  for (const auto& r : records) {
    if (!g.has_vertex(r.from) || !g.has_vertex(r.to)) {
      throw Error(ErrorCode::InvalidRecord, "record " + r.from + "->" + r.to + " names an unknown vertex");
    }
    if (r.config < 0) throw Error(ErrorCode::InvalidRecord, "negative configuration id");
    const auto e = g.find_edge(r.from, r.to);
    if (!e || !is_measured(g.edge(*e).kind)) {
      throw Error(ErrorCode::InvalidRecord, "record " + r.from + "->" + r.to + " is not on a measured edge");
    }
    const Transform value = g.edge(*e).from == r.from ? r.observed : r.observed.inverse();
    auto [it, inserted] = samples_[*e].emplace(r.config, value);
    if (!inserted) {
      throw Error(ErrorCode::InvalidRecord,
                  "duplicate record for " + r.from + "->" + r.to + " at configuration " + std::to_string(r.config));
    }
  }
}

const std::map<int, Transform>& MeasurementSet::samples(EdgeIndex e) const {
  static const std::map<int, Transform> kEmpty;
  auto it = samples_.find(e);
  return it == samples_.end() ? kEmpty : it->second;
}

std::optional<Transform> MeasurementSet::value(EdgeIndex e, int config, bool forward) const {
  auto it = samples_.find(e);
  if (it == samples_.end()) return std::nullopt;
  auto jt = it->second.find(config);
  if (jt == it->second.end()) return std::nullopt;
  return forward ? jt->second : jt->second.inverse();
}

std::vector<int> MeasurementSet::common_configs(std::span<const EdgeIndex> edges) const {
  std::vector<int> out;
  if (edges.empty()) return out;
  for (const auto& [config, t] : samples(edges.front())) {
    const bool everywhere = std::all_of(edges.begin() + 1, edges.end(), [&](EdgeIndex e) {
      return samples(e).contains(config);
    });
    if (everywhere) out.push_back(config);
  }
  return out;
}

void update_measurement_counts(CalibrationGraph& g, const MeasurementSet& m) {
  for (EdgeIndex e = 0; e < g.edges().size(); ++e) {
    if (is_measured(g.edge(e).kind)) g.set_measurement_count(e, static_cast<int>(m.count(e)));
  }
}

namespace {

double line_angle(const Vec3& a, const Vec3& b) {
  const double c = std::min(1.0, std::abs(a.normalized().dot(b.normalized())));
  return std::acos(c);
}

}  // namespace

HandEyeSolution solve_ax_xb(std::span<const MotionPair> pairs) {
  if (pairs.size() < 2) throw Error(ErrorCode::TooFewPairs, "hand-eye calibration needs at least 2 motion pairs");

  // Pairs whose rotation axis is defined and whose log is unambiguous.
  std::vector<Vec3> alpha, beta;
  for (const auto& p : pairs) {
    const double angle_a = rotation_angle(p.a.rotation());
    const double angle_b = rotation_angle(p.b.rotation());
    if (angle_a < kSmallAngle || angle_b < kSmallAngle) continue;
    if (std::max(angle_a, angle_b) > std::numbers::pi - kParallelAxisThreshold) continue;
    alpha.push_back(log_so3(p.a.rotation()));
    beta.push_back(log_so3(p.b.rotation()));
  }
  bool spread = false;
  for (std::size_t i = 0; i < alpha.size() && !spread; ++i) {
    for (std::size_t j = i + 1; j < alpha.size() && !spread; ++j) {
      spread = line_angle(alpha[i], alpha[j]) > kParallelAxisThreshold;
    }
  }
  if (!spread) {
    throw Error(ErrorCode::DegenerateMotion, "rotation axes of all motions are parallel");
  }

  Mat3 h = Mat3::Zero();
  for (std::size_t i = 0; i < alpha.size(); ++i) h += beta[i] * alpha[i].transpose();
  Eigen::JacobiSVD<Mat3> svd(h, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 d = Mat3::Identity();
  d(2, 2) = (svd.matrixV() * svd.matrixU().transpose()).determinant() < 0.0 ? -1.0 : 1.0;
  const Mat3 rx = svd.matrixV() * d * svd.matrixU().transpose();

  double rot_sq = 0.0;
  for (std::size_t i = 0; i < alpha.size(); ++i) rot_sq += (alpha[i] - rx * beta[i]).squaredNorm();

  const auto m = static_cast<Eigen::Index>(pairs.size());
  Eigen::MatrixXd lhs(3 * m, 3);
  Eigen::VectorXd rhs(3 * m);
  for (Eigen::Index i = 0; i < m; ++i) {
    const auto& p = pairs[static_cast<std::size_t>(i)];
    lhs.block<3, 3>(3 * i, 0) = p.a.rotation() - Mat3::Identity();
    rhs.segment<3>(3 * i) = rx * p.b.translation() - p.a.translation();
  }
  const Vec3 tx = lhs.colPivHouseholderQr().solve(rhs);

  HandEyeSolution out;
  out.x = Transform(rx, tx);
  out.rotation_residual = std::sqrt(rot_sq / static_cast<double>(alpha.size()));
  out.translation_residual = std::sqrt((lhs * tx - rhs).squaredNorm() / static_cast<double>(m));
  return out;
}

Transform relative_pose_shared_target(const Transform& t_cam1_target, const Transform& t_cam2_target) {
  return t_cam1_target * t_cam2_target.inverse();
}

Transform relative_pose_shared_target(std::span<const std::pair<Transform, Transform>> placements) {
  std::vector<Transform> samples;
  samples.reserve(placements.size());
  for (const auto& [a, b] : placements) samples.push_back(relative_pose_shared_target(a, b));
  return tangent_mean(samples);
}

Transform tangent_mean(std::span<const Transform> samples) {
  if (samples.empty()) throw Error(ErrorCode::InsufficientData, "mean of an empty set");
  Transform mean = samples.front();
  for (int pass = 0; pass < 2; ++pass) {
    const Transform inv = mean.inverse();
    Vec6 acc = Vec6::Zero();
    for (const auto& s : samples) acc += log_map(inv * s).vector();
    mean = mean * exp_map(Twist::from_vector(acc / static_cast<double>(samples.size())));
  }
  return mean;
}

namespace {

std::string edge_name(const CalibrationGraph& g, EdgeIndex e) { return g.edge(e).from + "-" + g.edge(e).to; }

/// Cycle completion found for an unknown edge: a path from v back to u whose
/// steps are measured or already estimated, plus at most one other
/// not-yet-estimated unknown.
struct CompletionPath {
  std::vector<DirectedEdge> steps;
  std::optional<std::size_t> free_step;
};

std::optional<CompletionPath> find_completion(const CalibrationGraph& g, EdgeIndex target, const VertexId& source,
                                              const VertexId& sink, const MeasurementSet& m,
                                              const EstimateMap& estimates, int max_free) {
  const std::size_t n = g.vertices().size();
  const std::size_t layers = static_cast<std::size_t>(max_free) + 1;
  constexpr double kInf = std::numeric_limits<double>::infinity();
  std::vector<double> dist(n * layers, kInf);
  std::vector<std::optional<std::pair<std::size_t, DirectedEdge>>> via(n * layers);
  std::vector<bool> done(n * layers, false);

  using Entry = std::tuple<double, VertexId, std::size_t>;
  std::priority_queue<Entry, std::vector<Entry>, std::greater<>> queue;
  const std::size_t s0 = g.vertex_index(source) * layers;
  dist[s0] = 0.0;
  queue.push({0.0, source, 0});
  std::optional<std::size_t> reached;

  while (!queue.empty()) {
    auto [d, v, k] = queue.top();
    queue.pop();
    const std::size_t state = g.vertex_index(v) * layers + k;
    if (done[state]) continue;
    done[state] = true;
    if (v == sink) {
      reached = state;
      break;
    }
    for (EdgeIndex e : g.incident(v)) {
      if (e == target) continue;
      const Edge& edge = g.edge(e);
      std::size_t nk = k;
      if (edge.kind == EdgeKind::Forbidden) continue;
      if (is_measured(edge.kind) && !m.has(e)) continue;
      if (edge.kind == EdgeKind::UnknownConstant && !estimates.contains(e)) ++nk;
      if (nk >= layers) continue;
      const VertexId& w = g.other_end(e, v);
      const std::size_t next = g.vertex_index(w) * layers + nk;
      const double nd = d + edge.phi;
      if (nd < dist[next]) {
        dist[next] = nd;
        via[next] = {state, DirectedEdge{e, edge.from == v}};
        queue.push({nd, w, nk});
      }
    }
  }
  if (!reached) return std::nullopt;

  CompletionPath out;
  for (std::size_t state = *reached; state != s0;) {
    const auto& [prev, step] = *via[state];
    out.steps.push_back(step);
    state = prev;
  }
  std::reverse(out.steps.begin(), out.steps.end());
  for (std::size_t i = 0; i < out.steps.size(); ++i) {
    const EdgeIndex e = out.steps[i].edge;
    if (g.edge(e).kind == EdgeKind::UnknownConstant && !estimates.contains(e)) out.free_step = i;
  }
  return out;
}

Transform known_value(const CalibrationGraph& g, const DirectedEdge& step, int config, const MeasurementSet& m,
                      const EstimateMap& estimates) {
  if (g.edge(step.edge).kind == EdgeKind::UnknownConstant) {
    const Transform& x = estimates.at(step.edge);
    return step.forward ? x : x.inverse();
  }
  return *m.value(step.edge, config, step.forward);
}

Transform product(const CalibrationGraph& g, std::span<const DirectedEdge> steps, int config,
                  const MeasurementSet& m, const EstimateMap& estimates) {
  Transform t;
  for (const auto& s : steps) t = t * known_value(g, s, config, m, estimates);
  return t;
}

std::vector<EdgeIndex> measured_edges(const CalibrationGraph& g, std::span<const DirectedEdge> steps) {
  std::vector<EdgeIndex> out;
  for (const auto& s : steps) {
    if (is_measured(g.edge(s.edge).kind)) out.push_back(s.edge);
  }
  return out;
}

bool is_hand_eye_pair(VertexKind a, VertexKind b) {
  auto robot_side = [](VertexKind k) { return k == VertexKind::RobotBase || k == VertexKind::RobotFlange; };
  return (robot_side(a) && is_camera(b)) || (robot_side(b) && is_camera(a));
}

/// Estimates ^u T_v for a tree edge from a completion path v -> ... -> u.
Transform solve_tree_edge(const CalibrationGraph& g, EdgeIndex target, const CompletionPath& path,
                          bool hand_eye, const MeasurementSet& m, const EstimateMap& estimates) {
  std::span<const DirectedEdge> steps(path.steps);
  const auto measured = measured_edges(g, steps);
  const auto configs = m.common_configs(measured);

  if (!hand_eye && !path.free_step) {
    // Shared target: the first vertex after v is seen from both sides.
    if (configs.empty() && !measured.empty()) {
      throw Error(ErrorCode::InsufficientData, "edge " + edge_name(g, target) + " has no usable configuration");
    }
    std::vector<std::pair<Transform, Transform>> placements;
    const std::vector<int> use = measured.empty() ? std::vector<int>{0} : configs;
    for (int c : use) {
      const Transform v_target = product(g, steps.first(1), c, m, estimates);
      const Transform u_target = product(g, steps.subspan(1), c, m, estimates).inverse();
      placements.emplace_back(u_target, v_target);
    }
    return relative_pose_shared_target(placements);
  }

  // X M2 Y M1 = I with Y either the free unknown or the identity placed
  // before the last step.
  const std::size_t split = path.free_step.value_or(steps.size() - 1);
  const std::size_t m1_begin = path.free_step ? split + 1 : split;
  const auto m2 = steps.first(split);
  const auto m1 = steps.subspan(m1_begin);
  if (configs.size() < 3) {
    throw Error(ErrorCode::InsufficientData, "edge " + edge_name(g, target) + " has " +
                                                 std::to_string(configs.size() > 0 ? configs.size() - 1 : 0) +
                                                 " usable configuration pairs");
  }
  std::vector<MotionPair> pairs;
  for (std::size_t i = 0; i + 1 < configs.size(); ++i) {
    const Transform n0 = product(g, m1, configs[i], m, estimates).inverse();
    const Transform n1 = product(g, m1, configs[i + 1], m, estimates).inverse();
    const Transform b0 = product(g, m2, configs[i], m, estimates);
    const Transform b1 = product(g, m2, configs[i + 1], m, estimates);
    pairs.push_back({n0 * n1.inverse(), b0 * b1.inverse()});
  }
  try {
    return solve_ax_xb(pairs).x;
  } catch (const Error& err) {
    throw Error(err.code(), "edge " + edge_name(g, target) + ": " + err.what());
  }
}

}  // namespace

EstimateMap initialize_tree(const CalibrationGraph& g, const SpanningTree& tree, const MeasurementSet& measurements) {
  EstimateMap estimates;

  for (const auto& step : calibration_sequence(g, tree)) {
    const Edge& edge = g.edge(step.edge);
    if (is_measured(edge.kind)) {
      if (!measurements.has(step.edge)) {
        throw Error(ErrorCode::InsufficientData, "tree edge " + edge_name(g, step.edge) + " has no measurements");
      }
      continue;
    }
    if (edge.kind != EdgeKind::UnknownConstant) continue;

    const VertexKind from_kind = g.vertex(edge.from).kind;
    const VertexKind to_kind = g.vertex(edge.to).kind;
    const bool hand_eye = is_hand_eye_pair(from_kind, to_kind);
    // Solve for X = ^u T_v; on hand-eye edges u is the robot side.
    const bool flip = hand_eye && is_camera(from_kind);
    const VertexId& u = flip ? edge.to : edge.from;
    const VertexId& v = flip ? edge.from : edge.to;
    const int max_free = is_camera(from_kind) && is_camera(to_kind) ? 0 : 1;

    auto path = find_completion(g, step.edge, v, u, measurements, estimates, max_free);
    if (!path) {
      throw Error(ErrorCode::InsufficientData, "no measured cycle reaches tree edge " + edge_name(g, step.edge));
    }
    const Transform x = solve_tree_edge(g, step.edge, *path, hand_eye, measurements, estimates);
    estimates[step.edge] = flip ? x.inverse() : x;
  }

  for (EdgeIndex e : g.edges_of_kind(EdgeKind::UnknownConstant)) {
    if (estimates.contains(e)) continue;
    const Edge& edge = g.edge(e);
    auto path = shortest_path(g, edge.from, edge.to, [&](EdgeIndex i) { return tree.contains(i); });
    if (!path) throw Error(ErrorCode::InsufficientData, "tree does not connect " + edge_name(g, e));
    const auto measured = measured_edges(g, path->steps);
    const auto configs = measurements.common_configs(measured);
    if (!measured.empty() && configs.empty()) {
      throw Error(ErrorCode::InsufficientData, "no configuration measures the tree path of " + edge_name(g, e));
    }
    const int reference = measured.empty() ? 0 : configs.front();
    estimates[e] = product(g, path->steps, reference, measurements, estimates);
  }
  return estimates;
}

}  // namespace memhs
