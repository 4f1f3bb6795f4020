#include <algorithm>
#include <cmath>
#include <functional>
#include <set>

#include <gtest/gtest.h>

#include "memhs/error.hpp"
#include "memhs/planner.hpp"
#include "memhs/simulator.hpp"

namespace memhs {
namespace {

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error thrown";
  return ErrorCode::Io;
}

bool same(const Transform& a, const Transform& b) { return a.matrix() == b.matrix(); }

TEST(GenerateSystem, SmallCellTopology) {
  const GroundTruthSystem sys = generate_system(3, 3, 2, 2000.0, 7);
  const auto& g = sys.graph;
  EXPECT_EQ(g.vertices().size(), 11u);
  EXPECT_EQ(sys.robots, 3);
  EXPECT_EQ(sys.eye_in_hand, 3);
  EXPECT_EQ(sys.eye_to_hand, 2);
  EXPECT_EQ(g.edges().size(), 11u * 10u / 2u);
  // Three flange-camera mounts and one camera-camera pair are unknown.
  EXPECT_EQ(g.edges_of_kind(EdgeKind::UnknownConstant).size(), 4u);
  EXPECT_EQ(sys.true_transforms.size(), 4u);
  EXPECT_EQ(g.edge(*g.find_edge("R1", "R2")).kind, EdgeKind::Forbidden);
  EXPECT_EQ(g.edge(*g.find_edge("H1", "C1")).kind, EdgeKind::Forbidden);
  EXPECT_EQ(g.edge(*g.find_edge("R1", "H1")).kind, EdgeKind::MeasuredKinematic);
  EXPECT_EQ(g.edge(*g.find_edge("R1", "H2")).kind, EdgeKind::Forbidden);
  EXPECT_EQ(g.edge(*g.find_edge("H1", "E1")).kind, EdgeKind::UnknownConstant);
  EXPECT_EQ(g.edge(*g.find_edge("R1", "C2")).kind, EdgeKind::MeasuredVision);
  EXPECT_EQ(g.edge(*g.find_edge("C1", "C2")).kind, EdgeKind::UnknownConstant);
  for (const auto& v : g.vertices()) EXPECT_GT(v.eta, 0.0);
}

TEST(GenerateSystem, Deterministic) {
  const GroundTruthSystem a = generate_system(4, 2, 3, 1500.0, 99);
  const GroundTruthSystem b = generate_system(4, 2, 3, 1500.0, 99);
  const GroundTruthSystem c = generate_system(4, 2, 3, 1500.0, 100);
  for (std::size_t i = 0; i < a.base_poses.size(); ++i) EXPECT_TRUE(same(a.base_poses[i], b.base_poses[i]));
  for (const auto& [e, t] : a.true_transforms) EXPECT_TRUE(same(t, b.true_transforms.at(e)));
  EXPECT_FALSE(same(a.base_poses[0], c.base_poses[0]));
}

TEST(GenerateSystem, BasesInsideWorkspace) {
  const GroundTruthSystem sys = generate_system(25, 12, 13, 2000.0, 3);
  for (const auto& b : sys.base_poses) {
    EXPECT_TRUE(b.is_valid());
    EXPECT_LE(b.translation().cwiseAbs().maxCoeff(), 2000.0);
  }
  EXPECT_EQ(sys.graph.vertices().size(), 25u + 25u + 12u + 13u);
}

TEST(GenerateSystem, InvalidCounts) {
  EXPECT_EQ(code_of([] { generate_system(0, 0, 1, 2000.0, 1); }), ErrorCode::InvalidCounts);
  EXPECT_EQ(code_of([] { generate_system(2, 3, 1, 2000.0, 1); }), ErrorCode::InvalidCounts);
  EXPECT_EQ(code_of([] { generate_system(2, 0, 0, 2000.0, 1); }), ErrorCode::InvalidCounts);
  EXPECT_EQ(code_of([] { generate_system(2, 1, -1, 2000.0, 1); }), ErrorCode::InvalidCounts);
  EXPECT_EQ(code_of([] { generate_system(2, 1, 1, 0.0, 1); }), ErrorCode::InvalidCounts);
  EXPECT_EQ(code_of([] { generate_system_with_cameras(2, 0, 2000.0, 1); }), ErrorCode::InvalidCounts);
}

TEST(GenerateSystem, CameraSplit) {
  const GroundTruthSystem sys = generate_system_with_cameras(10, 10, 2000.0, 5);
  EXPECT_EQ(sys.eye_in_hand + sys.eye_to_hand, 10);
  EXPECT_LE(sys.eye_in_hand, 10);
  const GroundTruthSystem few = generate_system_with_cameras(1, 6, 2000.0, 5);
  EXPECT_LE(few.eye_in_hand, 1);
  EXPECT_EQ(few.eye_in_hand + few.eye_to_hand, 6);
}

TEST(GroundTruth, EveryCycleIsIdentity) {
  const GroundTruthSystem sys = generate_system(4, 3, 3, 2000.0, 21);
  const auto& g = sys.graph;
  const auto config = sample_configurations(sys, 2, 8).at(1);
  const auto& vs = g.vertices();
  int checked = 0;
  for (std::size_t a = 0; a < vs.size(); ++a) {
    for (std::size_t b = a + 1; b < vs.size(); ++b) {
      for (std::size_t c = b + 1; c < vs.size(); ++c) {
        const auto ab = g.find_edge(vs[a].id, vs[b].id);
        const auto bc = g.find_edge(vs[b].id, vs[c].id);
        const auto ca = g.find_edge(vs[c].id, vs[a].id);
        auto dir = [&](EdgeIndex e, const VertexId& from) {
          const Transform t = edge_truth(sys, config, e);
          return g.edge(e).from == from ? t : t.inverse();
        };
        const Transform p = dir(*ab, vs[a].id) * dir(*bc, vs[b].id) * dir(*ca, vs[c].id);
        EXPECT_LT((p.rotation() - Mat3::Identity()).cwiseAbs().maxCoeff(), 1e-12);
        EXPECT_LT(p.translation().norm(), 1e-12 * 1e4);
        ++checked;
      }
    }
  }
  EXPECT_GT(checked, 100);
}

TEST(SampleMeasurements, ZeroNoiseEqualsTruth) {
  GroundTruthSystem sys = generate_system(3, 3, 2, 2000.0, 7);
  const auto records = sample_measurements(sys, 5, NoiseSpec{}, 4);
  const auto configs = sample_configurations(sys, 5, 4);
  const auto& g = sys.graph;
  std::size_t measured = 0;
  for (const auto& e : g.edges()) measured += is_measured(e.kind);
  EXPECT_EQ(records.size(), 5 * measured);
  for (const auto& r : records) {
    const EdgeIndex e = *g.find_edge(r.from, r.to);
    EXPECT_EQ(r.from, g.edge(e).from);
    EXPECT_TRUE(same(r.observed, edge_truth(sys, configs.at(static_cast<std::size_t>(r.config)), e)));
  }
  for (EdgeIndex e = 0; e < g.edges().size(); ++e) EXPECT_EQ(g.edge(e).n, is_measured(g.edge(e).kind) ? 5 : 0);
}

TEST(SampleMeasurements, Deterministic) {
  GroundTruthSystem a = generate_system(3, 3, 2, 2000.0, 7);
  GroundTruthSystem b = generate_system(3, 3, 2, 2000.0, 7);
  const auto ra = sample_measurements(a, 4, NoiseSpec::from_translation(1.0), 11);
  const auto rb = sample_measurements(b, 4, NoiseSpec::from_translation(1.0), 11);
  const auto rc = sample_measurements(b, 4, NoiseSpec::from_translation(1.0), 12);
  ASSERT_EQ(ra.size(), rb.size());
  for (std::size_t i = 0; i < ra.size(); ++i) {
    EXPECT_EQ(ra[i].config, rb[i].config);
    EXPECT_EQ(ra[i].from, rb[i].from);
    EXPECT_TRUE(same(ra[i].observed, rb[i].observed));
  }
  EXPECT_FALSE(same(ra[0].observed, rc[0].observed));
}

// Noise on one unit-scale edge: per-component std and log-mean bias.
TEST(SampleMeasurements, NoiseStatistics) {
  GroundTruthSystem sys = generate_system(1, 1, 1, 2000.0, 2);
  const int n = 10000;
  const auto records = sample_measurements(sys, n, NoiseSpec::from_translation(1.0), 3);
  const auto configs = sample_configurations(sys, n, 3);
  const auto& g = sys.graph;
  const EdgeIndex ec = *g.find_edge("E1", "C1");
  ASSERT_NEAR(sys.edge_noise_scale.at(ec), 1.0, 1e-15);
  Vec3 sum = Vec3::Zero(), sq = Vec3::Zero();
  std::vector<Transform> errors;
  for (const auto& r : records) {
    if (*g.find_edge(r.from, r.to) != ec) continue;
    const Transform err = edge_truth(sys, configs.at(static_cast<std::size_t>(r.config)), ec).inverse() * r.observed;
    const Vec3 rho = log_map(err).rho;
    sum += rho;
    sq += rho.cwiseProduct(rho);
    errors.push_back(err);
  }
  ASSERT_EQ(errors.size(), static_cast<std::size_t>(n));
  const Vec3 mean = sum / n;
  const Vec3 var = sq / n - mean.cwiseProduct(mean);
  for (int i = 0; i < 3; ++i) EXPECT_NEAR(std::sqrt(var[i]), 1.0, 0.05);
  EXPECT_LT(tangent_mean(errors).translation().norm(), 3.0 / std::sqrt(static_cast<double>(n)));
}

TEST(ContaminateEdge, ScalesNoise) {
  GroundTruthSystem sys = generate_system(3, 3, 2, 2000.0, 7);
  const EdgeIndex e = *sys.graph.find_edge("E1", "C1");
  const double before = sys.edge_noise_scale.at(e);
  contaminate_edge(sys, e, 100.0);
  EXPECT_DOUBLE_EQ(sys.edge_noise_scale.at(e), 100.0 * before);
  EXPECT_EQ(code_of([&] { contaminate_edge(sys, *sys.graph.find_edge("H1", "E1"), 2.0); }), ErrorCode::InvalidEdge);
}

void expect_spanning(const CalibrationGraph& g, const SpanningTree& t) {
  ASSERT_EQ(t.edges.size(), g.vertices().size() - 1);
  std::set<VertexId> reached{t.root};
  for (EdgeIndex e : t.edges) {
    EXPECT_NE(g.edge(e).kind, EdgeKind::Forbidden);
    reached.insert(g.edge(e).from);
    reached.insert(g.edge(e).to);
  }
  EXPECT_EQ(reached.size(), g.vertices().size());
}

TEST(RandomTree, SpansAndVaries) {
  const GroundTruthSystem sys = generate_system(5, 3, 4, 2000.0, 4);
  const auto& g = sys.graph;
  const SpanningTree a = random_spanning_tree(g, "R1", 1);
  const SpanningTree b = random_spanning_tree(g, "R1", 1);
  const SpanningTree c = random_spanning_tree(g, "R1", 2);
  expect_spanning(g, a);
  expect_spanning(g, c);
  EXPECT_EQ(a.edges, b.edges);
  EXPECT_NE(a.edges, c.edges);
}

void expect_valid_loops(const CalibrationGraph& g, const std::vector<CalibrationLoop>& loops, std::size_t max_edges) {
  std::set<EdgeIndex> covered;
  std::set<std::vector<EdgeIndex>> distinct;
  for (const auto& loop : loops) {
    EXPECT_LE(loop.steps.size(), max_edges);
    EXPECT_TRUE(distinct.insert(loop.edge_set()).second);
    bool measured = false;
    for (const auto& s : loop.steps) {
      EXPECT_NE(g.edge(s.edge).kind, EdgeKind::Forbidden);
      measured |= s.role == StepRole::Measured;
      if (s.role == StepRole::Unknown) covered.insert(s.edge);
    }
    EXPECT_TRUE(measured);
    const auto vs = loop.vertex_sequence(g);
    EXPECT_EQ(std::set<VertexId>(vs.begin(), vs.end()).size(), vs.size() - 1);
  }
  for (EdgeIndex e : g.edges_of_kind(EdgeKind::UnknownConstant)) EXPECT_TRUE(covered.contains(e));
}

TEST(RandomLoops, ValidAndDeterministic) {
  const GroundTruthSystem sys = generate_system(5, 3, 4, 2000.0, 4);
  const auto& g = sys.graph;
  const SpanningTree t = random_spanning_tree(g, "R1", 3);
  const auto a = random_loop_set(g, t, 3);
  expect_valid_loops(g, a, kMaxBaselinePathEdges + 1);
  const auto b = random_loop_set(g, t, 3);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i].edge_set(), b[i].edge_set());
}

TEST(AllLoops, SeveralDistinctLoopsPerEdge) {
  const GroundTruthSystem sys = generate_system(5, 3, 4, 2000.0, 4);
  const auto& g = sys.graph;
  const auto loops = all_loops_set(g, 5);
  expect_valid_loops(g, loops, kMaxBaselinePathEdges + 1);
  const std::size_t unknowns = g.edges_of_kind(EdgeKind::UnknownConstant).size();
  EXPECT_GT(loops.size(), 2 * unknowns);
  EXPECT_LE(loops.size(), 10 * unknowns);
}

TEST(EvaluateErrors, ZeroForTruth) {
  const GroundTruthSystem sys = generate_system(3, 3, 2, 2000.0, 7);
  const auto report = evaluate_errors(sys.graph, sys.true_transforms, sys.true_transforms);
  EXPECT_EQ(report.edges.size(), 4u);
  EXPECT_EQ(report.mean_translation_error, 0.0);
  EXPECT_LT(report.mean_rotation_error, 1e-15);
}

TEST(EvaluateErrors, TranslationOffsetRow) {
  const GroundTruthSystem sys = generate_system(3, 3, 2, 2000.0, 7);
  auto est = sys.true_transforms;
  const EdgeIndex e = est.begin()->first;
  const Vec3 offset(3.822, -1.744, -2.7905);
  est[e] = Transform(est[e].rotation(), est[e].translation() + offset);
  const auto report = evaluate_errors(sys.graph, est, sys.true_transforms);
  const auto& row = report.edges.front();
  EXPECT_EQ(row.edge, e);
  EXPECT_LT((row.translation - offset).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_NEAR(row.translation_norm, offset.norm(), 1e-12);
  EXPECT_LT(row.rotation_angle, 1e-15);
  EXPECT_NEAR(report.mean_translation_error, offset.norm() / 4.0, 1e-12);
}

TEST(EvaluateErrors, RotationAboutZ) {
  const GroundTruthSystem sys = generate_system(3, 3, 2, 2000.0, 7);
  auto est = sys.true_transforms;
  const EdgeIndex e = std::prev(est.end())->first;
  est[e] = Transform(exp_so3(Vec3(0, 0, 0.01)) * est[e].rotation(), est[e].translation());
  const auto report = evaluate_errors(sys.graph, est, sys.true_transforms);
  const auto& row = report.edges.back();
  EXPECT_NEAR(row.rotation_angle, 0.01, 1e-9);
  EXPECT_NEAR(row.rotation.z(), 0.01, 1e-9);
  EXPECT_EQ(row.translation_norm, 0.0);
}

TEST(EvaluateErrors, MissingEstimate) {
  const GroundTruthSystem sys = generate_system(3, 3, 2, 2000.0, 7);
  auto est = sys.true_transforms;
  est.erase(est.begin());
  EXPECT_EQ(code_of([&] { evaluate_errors(sys.graph, est, sys.true_transforms); }), ErrorCode::MissingEstimate);
}

TEST(Strategy, Names) {
  for (Strategy s : {Strategy::Optimal, Strategy::RandomPath, Strategy::AllLoops}) {
    EXPECT_EQ(strategy_from_string(to_string(s)), s);
  }
  EXPECT_EQ(to_string(Strategy::RandomPath), "random_path");
  EXPECT_THROW(strategy_from_string("best"), Error);
}

TEST(Experiment, NoiselessStrategiesAreExact) {
  const GroundTruthSystem sys = generate_system(4, 2, 3, 2000.0, 5);
  for (Strategy s : {Strategy::Optimal, Strategy::RandomPath, Strategy::AllLoops}) {
    const auto result = run_experiment(sys, s, NoiseSpec{}, 20, {1, 2});
    EXPECT_EQ(result.failures, 0u) << to_string(s);
    EXPECT_LT(result.max_error, 1e-6) << to_string(s);
  }
}

TEST(Experiment, ErrorGrowsWithNoise) {
  const GroundTruthSystem sys = generate_system(3, 3, 2, 2000.0, 7);
  double prev = 0.0;
  for (double sigma : {0.1, 1.0, 10.0, 100.0}) {
    const auto result = run_experiment(sys, Strategy::Optimal, NoiseSpec::from_translation(sigma), 30, {1, 2, 3});
    EXPECT_EQ(result.failures, 0u);
    EXPECT_GT(result.mean_error, prev) << sigma;
    prev = result.mean_error;
  }
}

TEST(Experiment, DoesNotMutateSystem) {
  const GroundTruthSystem sys = generate_system(3, 3, 2, 2000.0, 7);
  run_experiment(sys, Strategy::Optimal, NoiseSpec::from_translation(1.0), 10, {1});
  for (const auto& e : sys.graph.edges()) EXPECT_EQ(e.n, 0);
}

}  // namespace
}  // namespace memhs
