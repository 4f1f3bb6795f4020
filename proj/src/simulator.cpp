#include "memhs/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <set>

#include "memhs/error.hpp"
#include "memhs/planner.hpp"

namespace memhs {

double NoisePresets::eta(VertexKind kind) const {
  switch (kind) {
    case VertexKind::RobotBase: return robot_base;
    case VertexKind::RobotFlange: return robot_flange;
    case VertexKind::EyeInHandCamera: return eye_in_hand;
    case VertexKind::EyeToHandCamera: return eye_to_hand;
  }
  return 1.0;
}

namespace {

std::mt19937_64 make_rng(std::uint64_t seed, std::uint32_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), stream};
  return std::mt19937_64(seq);
}

double uniform(std::mt19937_64& rng, double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }

Vec3 random_unit(std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  for (;;) {
    Vec3 v(n(rng), n(rng), n(rng));
    if (v.norm() > 1e-6) return v.normalized();
  }
}

/// Rotation by a uniform angle in [0, max_angle] about a uniform axis.
Mat3 random_rotation(std::mt19937_64& rng, double max_angle) {
  const Vec3 axis = random_unit(rng);
  return exp_so3(axis * uniform(rng, 0.0, max_angle));
}

Mat3 rot_x(double a) { return exp_so3(Vec3(a, 0, 0)); }
Mat3 rot_z(double a) { return exp_so3(Vec3(0, 0, a)); }

enum class Role { Base, Flange, EyeInHand, EyeToHand };

struct Unit {
  Role role;
  int index;  // robot index for Base/Flange/EyeInHand, camera index for EyeToHand
};

EdgeKind classify(const Unit& a, const Unit& b) {
  auto pair_is = [&](Role x, Role y) { return (a.role == x && b.role == y) || (a.role == y && b.role == x); };
  const bool same_robot = a.index == b.index;
  if (pair_is(Role::Base, Role::Flange)) return same_robot ? EdgeKind::MeasuredKinematic : EdgeKind::Forbidden;
  if (pair_is(Role::Flange, Role::EyeInHand)) return same_robot ? EdgeKind::UnknownConstant : EdgeKind::Forbidden;
  if (pair_is(Role::Base, Role::EyeInHand)) return same_robot ? EdgeKind::Forbidden : EdgeKind::MeasuredVision;
  if (pair_is(Role::Base, Role::EyeToHand)) return EdgeKind::MeasuredVision;
  if (pair_is(Role::EyeInHand, Role::EyeInHand)) return EdgeKind::MeasuredVision;
  if (pair_is(Role::EyeInHand, Role::EyeToHand)) return EdgeKind::MeasuredVision;
  if (pair_is(Role::EyeToHand, Role::EyeToHand)) return EdgeKind::UnknownConstant;
  return EdgeKind::Forbidden;  // base-base, flange-flange, flange-fixed camera
}

std::vector<Unit> units_of(const GroundTruthSystem& s) {
  std::vector<Unit> units;
  for (int i = 0; i < s.robots; ++i) units.push_back({Role::Base, i});
  for (int i = 0; i < s.robots; ++i) units.push_back({Role::Flange, i});
  for (int j = 0; j < s.eye_in_hand; ++j) units.push_back({Role::EyeInHand, j});
  for (int k = 0; k < s.eye_to_hand; ++k) units.push_back({Role::EyeToHand, k});
  return units;
}

}  // namespace

GroundTruthSystem generate_system(int robots, int eye_in_hand, int eye_to_hand, double workspace_extent_mm,
                                  std::uint64_t seed, const NoisePresets& presets) {
  if (robots < 1 || eye_in_hand < 0 || eye_to_hand < 0 || eye_in_hand > robots || eye_in_hand + eye_to_hand < 1 ||
      !(workspace_extent_mm > 0.0)) {
    throw Error(ErrorCode::InvalidCounts, "need >= 1 robot, >= 1 camera, at most one eye-in-hand camera per robot "
                                          "and a positive workspace extent");
  }
  GroundTruthSystem s;
  s.seed = seed;
  s.robots = robots;
  s.eye_in_hand = eye_in_hand;
  s.eye_to_hand = eye_to_hand;

  auto rng = make_rng(seed, 0);
  const double half = workspace_extent_mm / 2.0;
  for (int i = 0; i < robots; ++i) {
    const Vec3 t(uniform(rng, -half, half), uniform(rng, -half, half), uniform(rng, 0.0, 50.0));
    const Mat3 r = rot_z(uniform(rng, -std::numbers::pi, std::numbers::pi)) * random_rotation(rng, 0.05);
    s.base_poses.emplace_back(r, t);
  }
  for (int j = 0; j < eye_in_hand; ++j) {
    const Vec3 t = random_unit(rng) * uniform(rng, 60.0, 140.0);
    s.eih_mounts.emplace_back(random_rotation(rng, 0.5), t);
  }
  for (int k = 0; k < eye_to_hand; ++k) {
    const Vec3 t(uniform(rng, -half, half), uniform(rng, -half, half), uniform(rng, 1000.0, 1500.0));
    s.eth_poses.emplace_back(rot_x(std::numbers::pi) * random_rotation(rng, 0.5), t);
  }

  auto add = [&](const std::string& prefix, int count, VertexKind kind) {
    for (int i = 0; i < count; ++i) s.graph.add_vertex({prefix + std::to_string(i + 1), kind, presets.eta(kind)});
  };
  add("R", robots, VertexKind::RobotBase);
  add("H", robots, VertexKind::RobotFlange);
  add("E", eye_in_hand, VertexKind::EyeInHandCamera);
  add("C", eye_to_hand, VertexKind::EyeToHandCamera);

  const auto units = units_of(s);
  const auto& vertices = s.graph.vertices();
  for (std::size_t a = 0; a < vertices.size(); ++a) {
    for (std::size_t b = a + 1; b < vertices.size(); ++b) {
      s.graph.add_edge(vertices[a].id, vertices[b].id, classify(units[a], units[b]));
      s.edge_noise_scale.push_back(std::sqrt(std::max(vertices[a].eta, vertices[b].eta)));
    }
  }

  const Configuration rest{std::vector<Transform>(static_cast<std::size_t>(robots))};
  for (EdgeIndex e : s.graph.edges_of_kind(EdgeKind::UnknownConstant)) s.true_transforms[e] = edge_truth(s, rest, e);
  return s;
}

GroundTruthSystem generate_system_with_cameras(int robots, int cameras, double workspace_extent_mm,
                                               std::uint64_t seed, const NoisePresets& presets) {
  if (cameras < 1) throw Error(ErrorCode::InvalidCounts, "need at least one camera");
  auto rng = make_rng(seed, 3);
  std::bernoulli_distribution coin(0.5);
  int eih = 0;
  for (int c = 0; c < cameras; ++c) {
    if (coin(rng)) ++eih;
  }
  eih = std::min(eih, robots);
  return generate_system(robots, eih, cameras - eih, workspace_extent_mm, seed, presets);
}

std::vector<Configuration> sample_configurations(const GroundTruthSystem& system, int n_configs, std::uint64_t seed) {
  auto rng = make_rng(seed, 1);
  std::vector<Configuration> configs(static_cast<std::size_t>(std::max(n_configs, 0)));
  for (auto& c : configs) {
    for (int i = 0; i < system.robots; ++i) {
      const double reach = uniform(rng, 300.0, 700.0);
      const double azimuth = uniform(rng, -std::numbers::pi, std::numbers::pi);
      const Vec3 t(reach * std::cos(azimuth), reach * std::sin(azimuth), uniform(rng, 100.0, 600.0));
      c.flange_poses.emplace_back(rot_x(std::numbers::pi) * random_rotation(rng, 1.0), t);
    }
  }
  return configs;
}

std::vector<Transform> world_poses(const GroundTruthSystem& s, const Configuration& config) {
  std::vector<Transform> out;
  out.reserve(s.graph.vertices().size());
  for (int i = 0; i < s.robots; ++i) out.push_back(s.base_poses[i]);
  for (int i = 0; i < s.robots; ++i) out.push_back(s.base_poses[i] * config.flange_poses[i]);
  for (int j = 0; j < s.eye_in_hand; ++j) out.push_back(out[static_cast<std::size_t>(s.robots + j)] * s.eih_mounts[j]);
  for (int k = 0; k < s.eye_to_hand; ++k) out.push_back(s.eth_poses[k]);
  return out;
}

Transform edge_truth(const GroundTruthSystem& s, const Configuration& config, EdgeIndex e) {
  const auto world = world_poses(s, config);
  const Edge& edge = s.graph.edge(e);
  return world[s.graph.vertex_index(edge.from)].inverse() * world[s.graph.vertex_index(edge.to)];
}

std::vector<MeasurementRecord> sample_measurements(GroundTruthSystem& system, int n_configs, const NoiseSpec& noise,
                                                   std::uint64_t seed) {
  const auto configs = sample_configurations(system, n_configs, seed);
  auto rng = make_rng(seed, 2);
  std::normal_distribution<double> normal(0.0, 1.0);
  const auto measured = [&] {
    std::vector<EdgeIndex> out;
    for (EdgeIndex e = 0; e < system.graph.edges().size(); ++e) {
      if (is_measured(system.graph.edge(e).kind)) out.push_back(e);
    }
    return out;
  }();

  std::vector<MeasurementRecord> records;
  records.reserve(configs.size() * measured.size());
  for (std::size_t c = 0; c < configs.size(); ++c) {
    const auto world = world_poses(system, configs[c]);
    for (EdgeIndex e : measured) {
      const Edge& edge = system.graph.edge(e);
      Transform t = world[system.graph.vertex_index(edge.from)].inverse() * world[system.graph.vertex_index(edge.to)];
      const double scale = system.edge_noise_scale[e];
      Twist xi;
      for (int a = 0; a < 3; ++a) xi.rho[a] = normal(rng) * noise.sigma_trans * scale;
      for (int a = 0; a < 3; ++a) xi.phi[a] = normal(rng) * noise.sigma_rot * scale;
      if (noise.sigma_trans > 0.0 || noise.sigma_rot > 0.0) t = t * exp_map(xi);
      records.push_back({static_cast<int>(c), edge.from, edge.to, t});
    }
  }
  for (EdgeIndex e : measured) system.graph.set_measurement_count(e, static_cast<int>(configs.size()));
  return records;
}

void contaminate_edge(GroundTruthSystem& system, EdgeIndex e, double factor) {
  if (!is_measured(system.graph.edge(e).kind)) {
    throw Error(ErrorCode::InvalidEdge, "only measured edges carry measurement noise");
  }
  system.edge_noise_scale.at(e) *= factor;
}

SpanningTree random_spanning_tree(const CalibrationGraph& g, const VertexId& root, std::uint64_t seed) {
  auto rng = make_rng(seed, 4);
  std::vector<bool> visited(g.vertices().size(), false);
  visited[g.vertex_index(root)] = true;
  SpanningTree tree{root, {}};
  for (std::size_t added = 1; added < g.vertices().size(); ++added) {
    std::vector<EdgeIndex> frontier;
    for (EdgeIndex e = 0; e < g.edges().size(); ++e) {
      const Edge& edge = g.edge(e);
      if (edge.kind == EdgeKind::Forbidden) continue;
      if (visited[g.vertex_index(edge.from)] != visited[g.vertex_index(edge.to)]) frontier.push_back(e);
    }
    if (frontier.empty()) {
      throw Error(ErrorCode::Disconnected, "non-forbidden edges do not connect every vertex to '" + root + "'");
    }
    const EdgeIndex pick = frontier[std::uniform_int_distribution<std::size_t>(0, frontier.size() - 1)(rng)];
    visited[g.vertex_index(g.edge(pick).from)] = true;
    visited[g.vertex_index(g.edge(pick).to)] = true;
    tree.edges.push_back(pick);
  }
  return tree;
}

namespace {

/// Randomized depth-first search for a simple path of at most
/// kMaxBaselinePathEdges edges containing at least one measured edge.
bool random_path(const CalibrationGraph& g, EdgeIndex target, const VertexId& v, const VertexId& sink,
                 std::vector<bool>& on_path, std::vector<DirectedEdge>& steps, bool has_measured,
                 std::mt19937_64& rng) {
  if (v == sink) return has_measured;
  if (steps.size() == kMaxBaselinePathEdges) return false;
  std::vector<EdgeIndex> next;
  for (EdgeIndex e : g.incident(v)) {
    if (e == target || g.edge(e).kind == EdgeKind::Forbidden) continue;
    if (on_path[g.vertex_index(g.other_end(e, v))]) continue;
    next.push_back(e);
  }
  std::shuffle(next.begin(), next.end(), rng);
  for (EdgeIndex e : next) {
    const VertexId& w = g.other_end(e, v);
    on_path[g.vertex_index(w)] = true;
    steps.push_back({e, g.edge(e).from == v});
    if (random_path(g, target, w, sink, on_path, steps, has_measured || is_measured(g.edge(e).kind), rng)) {
      return true;
    }
    steps.pop_back();
    on_path[g.vertex_index(w)] = false;
  }
  return false;
}

bool has_measured_step(const CalibrationGraph& g, const std::vector<DirectedEdge>& steps) {
  return std::any_of(steps.begin(), steps.end(), [&](const DirectedEdge& s) { return is_measured(g.edge(s.edge).kind); });
}

CalibrationLoop close_loop(const CalibrationGraph& g, EdgeIndex target, std::vector<DirectedEdge> path) {
  path.push_back({target, false});
  return make_loop(g, path);
}

std::string edge_label(const CalibrationGraph& g, EdgeIndex e) { return g.edge(e).from + "-" + g.edge(e).to; }

}  // namespace

std::vector<CalibrationLoop> random_loop_set(const CalibrationGraph& g, const SpanningTree& tree, std::uint64_t seed) {
  constexpr int kAttempts = 100;
  auto rng = make_rng(seed, 5);
  std::vector<double> cost(g.edges().size());
  std::vector<CalibrationLoop> loops;
  for (EdgeIndex target : unknown_edge_order(g, tree)) {
    const Edge& t = g.edge(target);
    std::optional<Path> path;
    for (int attempt = 0; attempt < kAttempts && !path; ++attempt) {
      for (double& c : cost) c = std::uniform_real_distribution<double>(1e-3, 1.0)(rng);
      path = shortest_path(g, t.from, t.to, [&](EdgeIndex e) { return e != target; },
                           [&](EdgeIndex e) { return cost[e]; });
      if (path && (path->steps.size() > kMaxBaselinePathEdges || !has_measured_step(g, path->steps))) path.reset();
    }
    if (!path) throw Error(ErrorCode::UncoverableEdge, "no random loop covers " + edge_label(g, target));
    add_unique_loop(loops, close_loop(g, target, path->steps));
  }
  return loops;
}

std::vector<CalibrationLoop> all_loops_set(const CalibrationGraph& g, std::uint64_t seed, std::size_t per_edge) {
  auto rng = make_rng(seed, 6);
  std::vector<CalibrationLoop> loops;
  for (EdgeIndex target : g.edges_of_kind(EdgeKind::UnknownConstant)) {
    const Edge& t = g.edge(target);
    std::set<std::vector<std::pair<EdgeIndex, bool>>> seen;
    const std::size_t attempts = 10 * per_edge;
    for (std::size_t attempt = 0; attempt < attempts && seen.size() < per_edge; ++attempt) {
      std::vector<bool> on_path(g.vertices().size(), false);
      on_path[g.vertex_index(t.from)] = true;
      std::vector<DirectedEdge> steps;
      if (!random_path(g, target, t.from, t.to, on_path, steps, false, rng)) break;
      std::vector<std::pair<EdgeIndex, bool>> key;
      for (const auto& s : steps) key.emplace_back(s.edge, s.forward);
      if (!seen.insert(key).second) continue;
      add_unique_loop(loops, close_loop(g, target, std::move(steps)));
    }
    if (seen.empty()) throw Error(ErrorCode::UncoverableEdge, "no capped loop covers " + edge_label(g, target));
  }
  return loops;
}

ErrorReport evaluate_errors(const CalibrationGraph& g, const EstimateMap& estimates,
                            const std::map<EdgeIndex, Transform>& truth) {
  ErrorReport report;
  for (const auto& [e, t_true] : truth) {
    auto it = estimates.find(e);
    if (it == estimates.end()) throw Error(ErrorCode::MissingEstimate, "no estimate for " + edge_label(g, e));
    EdgeError err;
    err.edge = e;
    err.from = g.edge(e).from;
    err.to = g.edge(e).to;
    err.rotation = log_so3(it->second.rotation() * t_true.rotation().transpose());
    err.rotation_angle = err.rotation.norm();
    err.translation = it->second.translation() - t_true.translation();
    err.translation_norm = err.translation.norm();
    report.mean_translation_error += err.translation_norm;
    report.mean_rotation_error += err.rotation_angle;
    report.edges.push_back(std::move(err));
  }
  if (!report.edges.empty()) {
    report.mean_translation_error /= static_cast<double>(report.edges.size());
    report.mean_rotation_error /= static_cast<double>(report.edges.size());
  }
  return report;
}

std::string_view to_string(Strategy s) {
  switch (s) {
    case Strategy::Optimal: return "optimal";
    case Strategy::RandomPath: return "random_path";
    case Strategy::AllLoops: return "all_loops";
  }
  return "?";
}

Strategy strategy_from_string(std::string_view s) {
  for (auto k : {Strategy::Optimal, Strategy::RandomPath, Strategy::AllLoops}) {
    if (to_string(k) == s) return k;
  }
  throw Error(ErrorCode::Schema, "unknown strategy '" + std::string(s) + "'");
}

PipelineResult run_pipeline(const CalibrationGraph& g, const MeasurementSet& measurements, Strategy strategy,
                            std::uint64_t plan_seed, const SolverConfig& solver, const std::vector<Point>& probes) {
  PipelineResult out;
  const VertexId& root = g.vertices().front().id;
  switch (strategy) {
    case Strategy::Optimal:
      out.tree = minimum_spanning_tree(g, root);
      out.loops = build_loop_set(g, out.tree);
      break;
    case Strategy::RandomPath:
      out.tree = random_spanning_tree(g, root, plan_seed);
      out.loops = random_loop_set(g, out.tree, plan_seed);
      break;
    case Strategy::AllLoops:
      out.tree = minimum_spanning_tree(g, root);
      out.loops = all_loops_set(g, plan_seed);
      break;
  }
  out.initial = initialize_tree(g, out.tree, measurements);
  const auto problem = build_problem(g, out.loops, measurements, out.initial, probes);
  auto result = optimize(problem, solver);
  out.refined = out.initial;
  for (std::size_t u = 0; u < problem.unknown_edges.size(); ++u) out.refined[problem.unknown_edges[u]] = result.unknowns[u];
  out.trace = std::move(result.trace);
  return out;
}

ExperimentResult run_experiment(const GroundTruthSystem& system, Strategy strategy, const NoiseSpec& noise,
                                int n_configs, const std::vector<std::uint64_t>& seeds, const SolverConfig& solver) {
  ExperimentResult result;
  double sum = 0.0;
  std::size_t ok = 0;
  for (std::uint64_t seed : seeds) {
    SeedOutcome outcome;
    outcome.seed = seed;
    try {
      GroundTruthSystem copy = system;
      const auto records = sample_measurements(copy, n_configs, noise, seed);
      const MeasurementSet measurements(copy.graph, records);
      const auto run = run_pipeline(copy.graph, measurements, strategy, seed, solver);
      outcome.report = evaluate_errors(copy.graph, run.refined, copy.true_transforms);
      sum += outcome.report->mean_translation_error;
      result.max_error = std::max(result.max_error, outcome.report->mean_translation_error);
      ++ok;
    } catch (const Error& err) {
      outcome.failure = err.what();
      ++result.failures;
    }
    result.seeds.push_back(std::move(outcome));
  }
  result.mean_error = ok == 0 ? 0.0 : sum / static_cast<double>(ok);
  return result;
}

}  // namespace memhs
