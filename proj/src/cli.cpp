#include "memhs/cli.hpp"

#include <chrono>
#include <ctime>
#include <filesystem>
#include <optional>

#include "CLI11.hpp"

#include "memhs/io.hpp"
#include "memhs/planner.hpp"
#include "memhs/simulator.hpp"

namespace memhs {

int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::Disconnected:
    case ErrorCode::NoLoop:
    case ErrorCode::UncoverableEdge:
      return kExitPlanning;
    case ErrorCode::InsufficientData:
    case ErrorCode::DegenerateMotion:
    case ErrorCode::TooFewPairs:
      return kExitCalibration;
    case ErrorCode::NonFiniteResidual:
    case ErrorCode::SingularNormalEquations:
      return kExitSolver;
    default:
      return kExitInput;
  }
}

namespace {

namespace fs = std::filesystem;

struct Options {
  std::string system, plan, measurements, estimates, truth, out, root, strategy;
  std::uint64_t seed = 1;
  std::optional<double> tol;
  std::optional<int> max_iters;
  double noise_mm = 0.0;
  int configs = 30;
  int robots = 3;
  std::optional<int> eih, eth, cameras;
  int trials = 1;
};

struct Loaded {
  SystemDescription desc;
  std::string digest;
};

Loaded load_system(const std::string& path) {
  const std::string text = read_file(path);
  return {parse_system(parse_json(text, path)), sha256_hex(text)};
}

void check_digest(const std::string& what, const std::string& referenced, const std::string& actual) {
  if (referenced != actual) {
    throw Error(ErrorCode::DigestMismatch,
                what + " references system digest " + referenced + " but the system file digest is " + actual);
  }
}

std::string utc_now() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

/// Collects digests and outputs for the run manifest.
class Manifest {
 public:
  Manifest(std::string command, std::optional<std::uint64_t> seed)
      : command_(std::move(command)), seed_(seed), started_(utc_now()) {}

  void input(const std::string& name, const std::string& path) {
    inputs_[name] = {{"path", path}, {"sha256", sha256_hex(read_file(path))}};
  }
  void output(const fs::path& path) { outputs_.push_back(path.string()); }

  void write(const fs::path& path) const {
    Json j{{"tool", "memhs_calib"},
           {"version", kToolVersion},
           {"command", command_},
           {"seed", seed_ ? Json(*seed_) : Json(nullptr)},
           {"inputs", inputs_},
           {"outputs", outputs_},
           {"started_at", started_},
           {"finished_at", utc_now()}};
    write_file_atomic(path, dump_json(j));
  }

 private:
  std::string command_;
  std::optional<std::uint64_t> seed_;
  std::string started_;
  Json inputs_ = Json::object();
  Json outputs_ = Json::array();
};

fs::path with_suffix(const fs::path& out, const std::string& suffix) {
  fs::path p = out;
  p.replace_extension();
  p += suffix;
  return p;
}

fs::path manifest_path(const fs::path& out) { return with_suffix(out, ".manifest.json"); }

void require(const std::string& value, const std::string& flag) {
  if (value.empty()) throw Error(ErrorCode::Schema, "missing required flag " + flag);
}

std::string loop_name(const CalibrationGraph& g, const CalibrationLoop& loop) {
  std::string name;
  for (const auto& v : loop.vertex_sequence(g)) name += (name.empty() ? "" : " -> ") + v;
  return name;
}

int cmd_plan(const Options& o, std::ostream& out) {
  require(o.system, "--system");
  require(o.out, "--out");
  Manifest manifest("plan", std::nullopt);
  manifest.input("system", o.system);
  const auto [desc, digest] = load_system(o.system);
  const auto& g = desc.graph;
  if (g.vertices().empty()) throw Error(ErrorCode::Schema, "system.vertices: empty");
  const VertexId root = o.root.empty() ? g.vertices().front().id : o.root;
  if (!g.has_vertex(root)) throw Error(ErrorCode::Schema, "--root: unknown vertex " + root);

  Plan plan;
  plan.system_digest = digest;
  plan.tree = minimum_spanning_tree(g, root);
  plan.sequence = calibration_sequence(g, plan.tree);
  plan.loops = build_loop_set(g, plan.tree);
  write_file_atomic(o.out, dump_json(plan_to_json(g, plan)));
  manifest.output(o.out);
  manifest.write(manifest_path(o.out));

  out << "Calibration order from root " << root << ":\n";
  int i = 0;
  for (const auto& s : plan.sequence) {
    const Edge& e = g.edge(s.edge);
    out << "  " << ++i << ". " << (e.kind == EdgeKind::UnknownConstant ? "calibrate " : "measure   ")
        << tail(g, s.edge, s.forward) << " -> " << head(g, s.edge, s.forward) << "  (" << to_string(e.kind)
        << ", phi " << format_double(e.phi) << ")\n";
  }
  bool header = false;
  for (EdgeIndex e : g.edges_of_kind(EdgeKind::UnknownConstant)) {
    if (plan.tree.contains(e)) continue;
    if (!header) out << "Unknown edges composed through the tree:\n";
    header = true;
    out << "  calibrate " << g.edge(e).from << " -> " << g.edge(e).to << "\n";
  }
  out << "Closed loops for refinement:\n";
  i = 0;
  for (const auto& loop : plan.loops) {
    out << "  L" << ++i << ". " << loop_name(g, loop) << "  (omega " << format_double(loop.omega) << ")\n";
  }
  return kExitOk;
}

struct Inputs {
  SystemDescription desc;
  std::string digest;
  Plan plan;
  MeasurementSet measurements;
};

Inputs load_inputs(const Options& o, Manifest& manifest) {
  require(o.system, "--system");
  require(o.plan, "--plan");
  require(o.measurements, "--measurements");
  manifest.input("system", o.system);
  manifest.input("plan", o.plan);
  manifest.input("measurements", o.measurements);
  auto [desc, digest] = load_system(o.system);
  Plan plan = parse_plan(desc.graph, parse_json(read_file(o.plan), o.plan));
  check_digest("plan " + o.plan, plan.system_digest, digest);
  const auto file = parse_measurements(read_file(o.measurements));
  check_digest("measurements " + o.measurements, file.system_digest, digest);
  MeasurementSet m(desc.graph, file.records);
  return {std::move(desc), std::move(digest), std::move(plan), std::move(m)};
}

int cmd_init(const Options& o, std::ostream& out) {
  require(o.out, "--out");
  Manifest manifest("init", std::nullopt);
  const auto in = load_inputs(o, manifest);
  const auto estimates = initialize_tree(in.desc.graph, in.plan.tree, in.measurements);
  write_file_atomic(o.out, dump_json(estimates_to_json(in.desc.graph, in.digest, "init", estimates)));
  manifest.output(o.out);
  manifest.write(manifest_path(o.out));
  out << "Initialized " << estimates.size() << " unknown edges -> " << o.out << "\n";
  return kExitOk;
}

int cmd_optimize(const Options& o, std::ostream& out) {
  require(o.out, "--out");
  Manifest manifest("optimize", std::nullopt);
  const auto in = load_inputs(o, manifest);
  const auto& g = in.desc.graph;

  EstimateMap initial;
  if (!o.estimates.empty()) {
    manifest.input("estimates", o.estimates);
    auto file = parse_estimates(g, parse_json(read_file(o.estimates), o.estimates));
    check_digest("estimates " + o.estimates, file.system_digest, in.digest);
    initial = std::move(file.estimates);
  } else {
    initial = initialize_tree(g, in.plan.tree, in.measurements);
  }

  SolverConfig solver = in.desc.solver;
  if (o.tol) {
    if (!(*o.tol > 0.0)) throw Error(ErrorCode::Schema, "--tol must be positive");
    solver.epsilon = *o.tol;
  }
  if (o.max_iters) {
    if (*o.max_iters < 0) throw Error(ErrorCode::Schema, "--max-iters must be nonnegative");
    solver.max_iterations = *o.max_iters;
  }

  auto problem = build_problem(g, in.plan.loops, in.measurements, initial, default_probe_points(in.desc.probe_scale_mm));
  const auto before = closed_loop_error(problem);
  const auto result = optimize(problem, solver);
  EstimateMap refined = initial;
  for (std::size_t u = 0; u < problem.unknown_edges.size(); ++u) refined[problem.unknown_edges[u]] = result.unknowns[u];
  problem.unknowns = result.unknowns;
  const auto after = closed_loop_error(problem);

  const fs::path trace_path = with_suffix(o.out, ".trace.csv");
  const fs::path summary_path = with_suffix(o.out, ".summary.csv");
  write_file_atomic(o.out, dump_json(estimates_to_json(g, in.digest, "optimized", refined)));
  write_file_atomic(trace_path, trace_to_csv(result.trace));
  std::string summary = "loop,vertices,before_mm,after_mm\n";
  for (std::size_t k = 0; k < in.plan.loops.size(); ++k) {
    summary += "L" + std::to_string(k + 1) + "," + loop_name(g, in.plan.loops[k]) + "," +
               format_double(before.per_loop[k]) + "," + format_double(after.per_loop[k]) + "\n";
  }
  summary += "overall,," + format_double(before.overall) + "," + format_double(after.overall) + "\n";
  write_file_atomic(summary_path, summary);
  manifest.output(o.out);
  manifest.output(trace_path);
  manifest.output(summary_path);
  manifest.write(manifest_path(o.out));

  out << "Mean closed-loop error: " << format_double(before.overall) << " mm -> " << format_double(after.overall)
      << " mm after " << result.trace.size() - 1 << " iterations\n";
  return kExitOk;
}

GroundTruthSystem simulated_system(const Options& o) {
  if (o.cameras && (o.eih || o.eth)) throw Error(ErrorCode::Schema, "--cameras cannot be combined with --eih/--eth");
  if (o.noise_mm < 0.0) throw Error(ErrorCode::Schema, "--noise-mm must be nonnegative");
  if (o.configs < 2) throw Error(ErrorCode::Schema, "--configs must be at least 2");
  try {
    if (o.cameras) return generate_system_with_cameras(o.robots, *o.cameras, 2000.0, o.seed);
    return generate_system(o.robots, o.eih.value_or(3), o.eth.value_or(2), 2000.0, o.seed);
  } catch (const Error& e) {
    throw Error(ErrorCode::Schema, e.what());
  }
}

int cmd_simulate(const Options& o, std::ostream& out) {
  require(o.out, "--out");
  Manifest manifest("simulate", o.seed);
  GroundTruthSystem system = simulated_system(o);
  const auto records = sample_measurements(system, o.configs, NoiseSpec::from_translation(o.noise_mm), o.seed);

  const fs::path dir = o.out;
  SystemDescription desc{system.graph, 100.0, SolverConfig{}};
  const std::string system_text = dump_json(system_to_json(desc));
  const std::string digest = sha256_hex(system_text);
  write_file_atomic(dir / "system.json", system_text);
  write_file_atomic(dir / "truth.json", dump_json(estimates_to_json(system.graph, digest, "truth", system.true_transforms)));
  write_file_atomic(dir / "measurements.jsonl", measurements_to_jsonl(digest, records));
  for (const char* name : {"system.json", "truth.json", "measurements.jsonl"}) manifest.output(dir / name);
  manifest.write(dir / "manifest.json");

  out << "Simulated " << system.robots << " robots, " << system.eye_in_hand << " eye-in-hand and "
      << system.eye_to_hand << " eye-to-hand cameras, " << o.configs << " configurations, " << records.size()
      << " records -> " << dir.string() << "\n";
  return kExitOk;
}

int cmd_evaluate(const Options& o, std::ostream& out) {
  const bool file_mode = !o.estimates.empty() || !o.truth.empty();
  const bool experiment_mode = !o.strategy.empty();
  if (file_mode == experiment_mode) {
    throw Error(ErrorCode::Schema, "evaluate needs either --estimates with --truth, or --strategy");
  }
  std::string csv;
  Manifest manifest("evaluate", experiment_mode ? std::optional(o.seed) : std::nullopt);
  if (file_mode) {
    require(o.estimates, "--estimates");
    require(o.truth, "--truth");
    require(o.system, "--system");
    manifest.input("system", o.system);
    manifest.input("estimates", o.estimates);
    manifest.input("truth", o.truth);
    const auto [desc, digest] = load_system(o.system);
    const auto est = parse_estimates(desc.graph, parse_json(read_file(o.estimates), o.estimates));
    const auto truth = parse_estimates(desc.graph, parse_json(read_file(o.truth), o.truth));
    check_digest("estimates " + o.estimates, est.system_digest, digest);
    check_digest("truth " + o.truth, truth.system_digest, digest);
    const auto report = evaluate_errors(desc.graph, est.estimates, truth.estimates);
    csv = error_report_to_csv(report);
    out << "Mean translation error " << format_double(report.mean_translation_error) << " mm, mean rotation error "
        << format_double(report.mean_rotation_error) << " rad over " << report.edges.size() << " edges\n";
  } else {
    if (o.trials < 1) throw Error(ErrorCode::Schema, "--trials must be at least 1");
    const Strategy strategy = strategy_from_string(o.strategy);
    const GroundTruthSystem system = simulated_system(o);
    std::vector<std::uint64_t> seeds;
    for (int t = 0; t < o.trials; ++t) seeds.push_back(o.seed + static_cast<std::uint64_t>(t));
    const auto result = run_experiment(system, strategy, NoiseSpec::from_translation(o.noise_mm), o.configs, seeds);
    csv = "seed,strategy,noise_mm,mean_translation_error_mm,mean_rotation_error_rad,status\n";
    for (const auto& s : result.seeds) {
      csv += std::to_string(s.seed) + "," + o.strategy + "," + format_double(o.noise_mm) + ",";
      if (s.report) {
        csv += format_double(s.report->mean_translation_error) + "," + format_double(s.report->mean_rotation_error) +
               ",ok\n";
      } else {
        csv += ",,\"" + s.failure + "\"\n";
      }
    }
    csv += "mean," + o.strategy + "," + format_double(o.noise_mm) + "," + format_double(result.mean_error) + ",,\n";
    csv += "max," + o.strategy + "," + format_double(o.noise_mm) + "," + format_double(result.max_error) + ",,\n";
    out << "Strategy " << o.strategy << ": mean translation error " << format_double(result.mean_error)
        << " mm over " << result.seeds.size() - result.failures << " of " << result.seeds.size() << " seeds\n";
  }
  if (o.out.empty()) {
    out << csv;
  } else {
    write_file_atomic(o.out, csv);
    manifest.output(o.out);
    manifest.write(manifest_path(o.out));
  }
  return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  Options o;
  CLI::App app{"Multi-eye multi-hand robot cell calibration"};
  app.require_subcommand(1);

  auto add_system = [&](CLI::App* c) { c->add_option("--system", o.system, "System description JSON"); };
  auto add_inputs = [&](CLI::App* c) {
    add_system(c);
    c->add_option("--plan", o.plan, "Plan JSON from the plan command");
    c->add_option("--measurements", o.measurements, "Measurement JSON-lines file");
  };
  auto add_sim = [&](CLI::App* c) {
    c->add_option("--robots", o.robots, "Number of robots");
    c->add_option("--eih", o.eih, "Eye-in-hand cameras");
    c->add_option("--eth", o.eth, "Eye-to-hand cameras");
    c->add_option("--cameras", o.cameras, "Total cameras, split at random");
    c->add_option("--configs", o.configs, "Configurations to sample");
    c->add_option("--noise-mm", o.noise_mm, "Translation noise sigma in mm");
    c->add_option("--seed", o.seed, "Random seed");
  };

  auto* plan = app.add_subcommand("plan", "Spanning tree, calibration order and loop set");
  add_system(plan);
  plan->add_option("--root", o.root, "Root vertex id (default: first vertex)");
  plan->add_option("--out", o.out, "Output plan JSON");

  auto* init = app.add_subcommand("init", "Initial estimates of the unknown edges");
  add_inputs(init);
  init->add_option("--out", o.out, "Output estimates JSON");

  auto* opt = app.add_subcommand("optimize", "Closed-loop refinement");
  add_inputs(opt);
  opt->add_option("--estimates", o.estimates, "Initial estimates (default: run init)");
  opt->add_option("--tol", o.tol, "Step termination threshold");
  opt->add_option("--max-iters", o.max_iters, "Iteration limit");
  opt->add_option("--out", o.out, "Output estimates JSON");

  auto* sim = app.add_subcommand("simulate", "Synthetic dataset");
  add_sim(sim);
  sim->add_option("--out", o.out, "Output directory");

  auto* eval = app.add_subcommand("evaluate", "Error report against ground truth");
  add_system(eval);
  add_sim(eval);
  eval->add_option("--estimates", o.estimates, "Estimates JSON");
  eval->add_option("--truth", o.truth, "Truth JSON");
  eval->add_option("--strategy", o.strategy, "optimal | random_path | all_loops");
  eval->add_option("--trials", o.trials, "Seeds to run, starting at --seed");
  eval->add_option("--out", o.out, "Output CSV (default: stdout)");

  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kExitInput;
  }

  try {
    if (plan->parsed()) return cmd_plan(o, out);
    if (init->parsed()) return cmd_init(o, out);
    if (opt->parsed()) return cmd_optimize(o, out);
    if (sim->parsed()) return cmd_simulate(o, out);
    return cmd_evaluate(o, out);
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitInput;
  }
}

}  // namespace memhs
