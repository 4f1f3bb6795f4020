#include <cmath>
#include <filesystem>
#include <functional>
#include <limits>
#include <random>

#include <unistd.h>

#include <gtest/gtest.h>

#include "memhs/error.hpp"
#include "memhs/io.hpp"
#include "memhs/planner.hpp"

namespace memhs {
namespace {

namespace fs = std::filesystem;

std::string error_of(const std::function<void()>& f, ErrorCode expected) {
  try {
    f();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), expected) << e.what();
    return e.what();
  }
  ADD_FAILURE() << "no error thrown";
  return {};
}

const char* kSystem = R"({
  "vertices": [
    {"id": "R1", "kind": "robot_base", "eta": 0.25},
    {"id": "H1", "kind": "robot_flange", "eta": 0.25},
    {"id": "E1", "kind": "eye_in_hand_camera", "covariance": [[1, 0, 0], [0, 2, 0], [0, 0, 0.5]]},
    {"id": "C1", "kind": "eye_to_hand_camera", "eta": 0.5}
  ],
  "edges": [
    {"from": "R1", "to": "H1", "kind": "measured_kinematic", "n": 10},
    {"from": "H1", "to": "E1", "kind": "unknown_constant"},
    {"from": "E1", "to": "C1", "kind": "measured_vision", "d": 0.5, "n": 10},
    {"from": "R1", "to": "C1", "kind": "unknown_constant"},
    {"from": "R1", "to": "E1", "kind": "forbidden"},
    {"from": "H1", "to": "C1", "kind": "forbidden"}
  ],
  "defaults": {"probe_scale_mm": 50, "solver": {"max_iterations": 40}}
})";

TEST(Sha256, KnownVector) {
  EXPECT_EQ(sha256_hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  EXPECT_EQ(sha256_hex(""), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
}

TEST(FormatDouble, RoundTrips) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-1e4, 1e4);
  for (int i = 0; i < 1000; ++i) {
    const double v = u(rng) / 3.0;
    EXPECT_EQ(std::stod(format_double(v)), v);
  }
  EXPECT_EQ(format_double(0.1), "0.1");
  EXPECT_EQ(format_double(3.0), "3");
}

TEST(TransformJson, RoundTripIsExact) {
  const Transform t = exp_map(Twist(Vec3(1.0 / 3.0, 2, -7), Vec3(0.3, -0.2, 0.1)));
  const Json j = parse_json(dump_json(transform_to_json(t)), "t");
  EXPECT_EQ(transform_from_json(j, "t").matrix(), t.matrix());
}

TEST(TransformJson, ProjectsRotationOnIngestion) {
  Json j = transform_to_json(exp_map(Twist(Vec3(1, 2, 3), Vec3(0.3, 0.2, 0.1))));
  j[0] = j[0].get<double>() + 1e-5;
  EXPECT_TRUE(transform_from_json(j, "t").is_valid(1e-12));
}

TEST(TransformJson, RejectsMalformed) {
  error_of([] { transform_from_json(Json::array({1, 2, 3}), "x.T"); }, ErrorCode::Schema);
  Json j = transform_to_json(Transform::identity());
  j[12] = 0.5;
  error_of([&] { transform_from_json(j, "x.T"); }, ErrorCode::Schema);
}

TEST(ParseSystem, ReadsAllFields) {
  const SystemDescription s = parse_system(parse_json(kSystem, "system"));
  const auto& g = s.graph;
  EXPECT_EQ(g.vertices().size(), 4u);
  EXPECT_EQ(g.vertex("E1").kind, VertexKind::EyeInHandCamera);
  EXPECT_DOUBLE_EQ(g.vertex("E1").eta, 2.0);
  const Edge& ec = g.edge(*g.find_edge("E1", "C1"));
  EXPECT_EQ(ec.n, 10);
  EXPECT_EQ(ec.d, 0.5);
  EXPECT_DOUBLE_EQ(ec.phi, edge_weight(2.0, 0.5, 10, 0.5));
  EXPECT_EQ(s.probe_scale_mm, 50.0);
  EXPECT_EQ(s.solver.max_iterations, 40);
  EXPECT_EQ(s.solver.epsilon, SolverConfig{}.epsilon);
}

TEST(ParseSystem, RoundTrip) {
  const SystemDescription s = parse_system(parse_json(kSystem, "system"));
  const std::string once = dump_json(system_to_json(s));
  const std::string twice = dump_json(system_to_json(parse_system(parse_json(once, "system"))));
  EXPECT_EQ(once, twice);
}

TEST(ParseSystem, ErrorsNameTheField) {
  auto with = [](const std::function<void(Json&)>& edit) {
    Json j = parse_json(kSystem, "system");
    edit(j);
    return j;
  };
  std::string msg = error_of([&] { parse_system(with([](Json& j) { j["vertices"][0]["eta"] = -1; })); },
                             ErrorCode::Schema);
  EXPECT_NE(msg.find("vertices[0].eta"), std::string::npos) << msg;
  EXPECT_NE(msg.find("R1"), std::string::npos) << msg;

  msg = error_of([&] { parse_system(with([](Json& j) { j["edges"][1]["weight"] = 2; })); }, ErrorCode::Schema);
  EXPECT_NE(msg.find("edges[1].weight"), std::string::npos) << msg;

  msg = error_of([&] { parse_system(with([](Json& j) { j["extra"] = true; })); }, ErrorCode::Schema);
  EXPECT_NE(msg.find("extra"), std::string::npos) << msg;

  msg = error_of([&] { parse_system(with([](Json& j) { j["vertices"][3]["covariance"] = Json::array(); })); },
                 ErrorCode::Schema);
  EXPECT_NE(msg.find("vertices[3]"), std::string::npos) << msg;

  msg = error_of([&] { parse_system(with([](Json& j) { j["edges"][0]["to"] = "Q"; })); }, ErrorCode::Schema);
  EXPECT_NE(msg.find("edges[0]"), std::string::npos) << msg;

  msg = error_of([&] { parse_system(with([](Json& j) { j["edges"][1]["n"] = 3; })); }, ErrorCode::Schema);
  EXPECT_NE(msg.find("edges[1]"), std::string::npos) << msg;

  msg = error_of(
      [&] { parse_system(with([](Json& j) { j["vertices"][2]["covariance"][0][1] = 0.3; })); }, ErrorCode::Schema);
  EXPECT_NE(msg.find("E1"), std::string::npos) << msg;

  error_of([&] { parse_system(with([](Json& j) { j["vertices"][1]["kind"] = "gripper"; })); }, ErrorCode::Schema);
  error_of([&] { parse_system(with([](Json& j) { j["defaults"]["solver"]["epsilon"] = 0; })); }, ErrorCode::Schema);
}

TEST(ParseJson, SyntaxError) { error_of([] { parse_json("{\"a\": ", "file.json"); }, ErrorCode::Schema); }

TEST(Plan, RoundTrip) {
  const SystemDescription s = parse_system(parse_json(kSystem, "system"));
  const auto& g = s.graph;
  Plan plan;
  plan.system_digest = "abc";
  plan.tree = minimum_spanning_tree(g, "R1");
  plan.sequence = calibration_sequence(g, plan.tree);
  plan.loops = build_loop_set(g, plan.tree);
  const std::string text = dump_json(plan_to_json(g, plan));
  const Plan back = parse_plan(g, parse_json(text, "plan"));
  EXPECT_EQ(back.system_digest, "abc");
  EXPECT_EQ(back.tree.root, "R1");
  EXPECT_EQ(back.tree.edges, plan.tree.edges);
  ASSERT_EQ(back.loops.size(), plan.loops.size());
  for (std::size_t k = 0; k < plan.loops.size(); ++k) {
    EXPECT_EQ(back.loops[k].vertex_sequence(g), plan.loops[k].vertex_sequence(g));
    EXPECT_EQ(back.loops[k].omega, plan.loops[k].omega);
  }
  EXPECT_EQ(dump_json(plan_to_json(g, back)), text);
}

TEST(Plan, RejectsForeignEdges) {
  const SystemDescription s = parse_system(parse_json(kSystem, "system"));
  const auto& g = s.graph;
  Plan plan{"d", minimum_spanning_tree(g, "R1"), {}, {}};
  Json j = plan_to_json(g, plan);
  j["tree"][0]["to"] = "NOPE";
  error_of([&] { parse_plan(g, j); }, ErrorCode::Schema);
}

TEST(Measurements, RoundTrip) {
  std::vector<MeasurementRecord> records;
  records.push_back({0, "R1", "H1", exp_map(Twist(Vec3(1, 2, 3), Vec3(0.1, 0.2, 0.3)))});
  records.push_back({7, "C1", "E1", exp_map(Twist(Vec3(-4, 5.5, 0.25), Vec3(-0.3, 0.0, 1.3)))});
  const std::string text = measurements_to_jsonl("digest", records);
  EXPECT_EQ(text.substr(0, text.find('\n')), R"({"system_digest":"digest"})");
  const auto file = parse_measurements(text);
  EXPECT_EQ(file.system_digest, "digest");
  ASSERT_EQ(file.records.size(), 2u);
  EXPECT_EQ(file.records[1].config, 7);
  EXPECT_EQ(file.records[1].from, "C1");
  EXPECT_EQ(file.records[1].observed.matrix(), records[1].observed.matrix());
  EXPECT_EQ(measurements_to_jsonl("digest", file.records), text);
}

TEST(Measurements, Malformed) {
  error_of([] { parse_measurements(""); }, ErrorCode::Schema);
  std::string msg = error_of(
      [] { parse_measurements("{\"system_digest\":\"x\"}\n{\"config\":0,\"from\":\"A\",\"to\":\"B\"}\n"); },
      ErrorCode::Schema);
  EXPECT_NE(msg.find("line 2"), std::string::npos) << msg;
  error_of([] { parse_measurements("{\"system_digest\":\"x\"}\n{\"config\":1.5,\"from\":\"A\",\"to\":\"B\",\"T\":[]}"); },
           ErrorCode::Schema);
}

TEST(Estimates, RoundTripAndReverseDirection) {
  const SystemDescription s = parse_system(parse_json(kSystem, "system"));
  const auto& g = s.graph;
  const EdgeIndex he = *g.find_edge("H1", "E1");
  const EdgeIndex rc = *g.find_edge("R1", "C1");
  const Transform x = exp_map(Twist(Vec3(10, 20, 30), Vec3(0.5, -0.1, 0.2)));
  const EstimateMap est{{he, x}, {rc, x.inverse()}};
  const Json j = estimates_to_json(g, "d", "init", est);
  const auto back = parse_estimates(g, parse_json(dump_json(j), "est"));
  EXPECT_EQ(back.stage, "init");
  EXPECT_EQ(back.estimates.at(he).matrix(), x.matrix());

  Json flipped = j;
  flipped["estimates"][0]["from"] = "E1";
  flipped["estimates"][0]["to"] = "H1";
  flipped["estimates"][0]["T"] = transform_to_json(x.inverse());
  EXPECT_TRUE(parse_estimates(g, flipped).estimates.at(he).matrix().isApprox(x.matrix(), 1e-12));

  Json measured = j;
  measured["estimates"][0]["from"] = "R1";
  measured["estimates"][0]["to"] = "H1";
  error_of([&] { parse_estimates(g, measured); }, ErrorCode::Schema);
}

TEST(Csv, TraceAndReport) {
  const ConvergenceTrace trace{{0, 1.5, 0.0, 10.0}, {1, 0.25, 0.125, 2.0}};
  EXPECT_EQ(trace_to_csv(trace), "iteration,mean_closed_loop_error_mm,step_inf_norm\n0,1.5,0\n1,0.25,0.125\n");

  ErrorReport report;
  EdgeError e;
  e.from = "A";
  e.to = "B";
  e.translation = Vec3(3.822, -1.744, -2.7905);
  e.translation_norm = 1.0;
  report.edges.push_back(e);
  report.mean_translation_error = 1.0;
  const std::string csv = error_report_to_csv(report);
  EXPECT_NE(csv.find("A,B,0,0,0,0,3.822,-1.744,-2.7905,1\n"), std::string::npos) << csv;
  EXPECT_EQ(csv.substr(csv.rfind("mean")), "mean,,,,,0,,,,1\n");
}

TEST(Files, AtomicWriteLeavesNoTemporary) {
  const fs::path dir = fs::temp_directory_path() / ("memhs_io_" + std::to_string(::getpid()));
  fs::create_directories(dir);
  const fs::path p = dir / "out.json";
  write_file_atomic(p, "first");
  write_file_atomic(p, "second");
  EXPECT_EQ(read_file(p), "second");
  std::size_t files = 0;
  for ([[maybe_unused]] const auto& entry : fs::directory_iterator(dir)) ++files;
  EXPECT_EQ(files, 1u);
  fs::remove_all(dir);
  error_of([&] { read_file(dir / "missing"); }, ErrorCode::Io);
}

}  // namespace
}  // namespace memhs
