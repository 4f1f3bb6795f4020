#include "memhs/io.hpp"

#include <array>
#include <charconv>
#include <fstream>
#include <set>
#include <sstream>

#include <openssl/evp.h>

#include "memhs/error.hpp"

namespace memhs {

std::string sha256_hex(std::string_view bytes) {
  std::array<unsigned char, EVP_MAX_MD_SIZE> digest{};
  unsigned int length = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest.data(), &length, EVP_sha256(), nullptr) != 1) {
    throw Error(ErrorCode::Io, "SHA-256 computation failed");
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < length; ++i) {
    out.push_back(kHex[digest[i] >> 4]);
    out.push_back(kHex[digest[i] & 0xf]);
  }
  return out;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file_atomic(const std::filesystem::path& path, std::string_view content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::Io, "cannot write " + tmp.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw Error(ErrorCode::Io, "short write to " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw Error(ErrorCode::Io, "cannot rename " + tmp.string() + ": " + ec.message());
}

std::string format_double(double v) {
  std::array<char, 32> buf{};
  auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), end);
}

std::string dump_json(const Json& j) { return j.dump(2) + "\n"; }

Json parse_json(std::string_view text, const std::string& what) {
  try {
    return Json::parse(text);
  } catch (const Json::parse_error& e) {
    throw Error(ErrorCode::Schema, what + ": " + e.what());
  }
}

namespace {

void require_object(const Json& j, const std::string& where) {
  if (!j.is_object()) throw Error(ErrorCode::Schema, where + ": expected an object");
}

void allow_only(const Json& j, const std::string& where, std::initializer_list<std::string_view> keys) {
  require_object(j, where);
  for (const auto& [key, value] : j.items()) {
    if (std::find(keys.begin(), keys.end(), key) == keys.end()) {
      throw Error(ErrorCode::Schema, where + "." + key + ": unknown field");
    }
  }
}

const Json& field(const Json& j, const std::string& where, const std::string& key) {
  if (!j.contains(key)) throw Error(ErrorCode::Schema, where + "." + key + ": missing");
  return j.at(key);
}

std::string string_field(const Json& j, const std::string& where, const std::string& key) {
  const Json& v = field(j, where, key);
  if (!v.is_string()) throw Error(ErrorCode::Schema, where + "." + key + ": expected a string");
  return v.get<std::string>();
}

double number(const Json& v, const std::string& where) {
  if (!v.is_number()) throw Error(ErrorCode::Schema, where + ": expected a number");
  return v.get<double>();
}

int integer(const Json& v, const std::string& where) {
  if (!v.is_number_integer()) throw Error(ErrorCode::Schema, where + ": expected an integer");
  return v.get<int>();
}

const Json& array_field(const Json& j, const std::string& where, const std::string& key) {
  const Json& v = field(j, where, key);
  if (!v.is_array()) throw Error(ErrorCode::Schema, where + "." + key + ": expected an array");
  return v;
}

EdgeIndex edge_between(const CalibrationGraph& g, const VertexId& a, const VertexId& b, const std::string& where) {
  if (!g.has_vertex(a) || !g.has_vertex(b)) {
    throw Error(ErrorCode::Schema, where + ": unknown vertex in " + a + "-" + b);
  }
  auto e = g.find_edge(a, b);
  if (!e) throw Error(ErrorCode::Schema, where + ": no edge " + a + "-" + b);
  return *e;
}

Json directed_to_json(const CalibrationGraph& g, EdgeIndex e, bool forward) {
  return Json{{"from", tail(g, e, forward)}, {"to", head(g, e, forward)}};
}

DirectedEdge directed_from_json(const CalibrationGraph& g, const Json& j, const std::string& where) {
  const auto from = string_field(j, where, "from");
  const auto to = string_field(j, where, "to");
  const EdgeIndex e = edge_between(g, from, to, where);
  return {e, g.edge(e).from == from};
}

}  // namespace

Json transform_to_json(const Transform& t) {
  Json arr = Json::array();
  for (double v : t.to_row_major()) arr.push_back(v);
  return arr;
}

Transform transform_from_json(const Json& j, const std::string& where) {
  if (!j.is_array() || j.size() != 16) throw Error(ErrorCode::Schema, where + ": expected 16 numbers");
  std::array<double, 16> values{};
  for (std::size_t i = 0; i < 16; ++i) values[i] = number(j[i], where + "[" + std::to_string(i) + "]");
  const Transform raw = Transform::from_row_major(values);
  if (raw.is_valid(1e-12)) return raw;
  if (!raw.is_valid(1e-3)) throw Error(ErrorCode::Schema, where + ": rotation block is not a rotation");
  return {nearest_rotation(raw.rotation()), raw.translation()};
}

SystemDescription parse_system(const Json& j) {
  allow_only(j, "system", {"vertices", "edges", "defaults"});
  SystemDescription s;

  const Json& vertices = array_field(j, "system", "vertices");
  for (std::size_t i = 0; i < vertices.size(); ++i) {
    const std::string where = "vertices[" + std::to_string(i) + "]";
    const Json& v = vertices[i];
    allow_only(v, where, {"id", "kind", "eta", "covariance"});
    Vertex vertex;
    vertex.id = string_field(v, where, "id");
    vertex.kind = vertex_kind_from_string(string_field(v, where, "kind"));
    const bool has_eta = v.contains("eta");
    const bool has_cov = v.contains("covariance");
    if (has_eta == has_cov) throw Error(ErrorCode::Schema, where + ": exactly one of eta or covariance is required");
    if (has_eta) {
      vertex.eta = number(v.at("eta"), where + ".eta");
      if (!(vertex.eta > 0.0)) {
        throw Error(ErrorCode::Schema, where + ".eta: vertex '" + vertex.id + "' has non-positive eta");
      }
    } else {
      const Json& c = v.at("covariance");
      if (!c.is_array() || c.size() != 3) throw Error(ErrorCode::Schema, where + ".covariance: expected 3x3 array");
      Mat3 cov;
      for (int r = 0; r < 3; ++r) {
        if (!c[r].is_array() || c[r].size() != 3) {
          throw Error(ErrorCode::Schema, where + ".covariance: expected 3x3 array");
        }
        for (int k = 0; k < 3; ++k) cov(r, k) = number(c[r][k], where + ".covariance");
      }
      try {
        vertex.eta = eta_from_covariance(cov);
      } catch (const Error& e) {
        throw Error(ErrorCode::Schema, where + ".covariance: vertex '" + vertex.id + "': " + e.what());
      }
    }
    try {
      s.graph.add_vertex(vertex);
    } catch (const Error& e) {
      throw Error(ErrorCode::Schema, where + ": " + e.what());
    }
  }

  const Json& edges = array_field(j, "system", "edges");
  for (std::size_t i = 0; i < edges.size(); ++i) {
    const std::string where = "edges[" + std::to_string(i) + "]";
    const Json& e = edges[i];
    allow_only(e, where, {"from", "to", "kind", "d", "n"});
    const auto from = string_field(e, where, "from");
    const auto to = string_field(e, where, "to");
    const EdgeKind kind = edge_kind_from_string(string_field(e, where, "kind"));
    const double d = e.contains("d") ? number(e.at("d"), where + ".d") : 0.0;
    const int n = e.contains("n") ? integer(e.at("n"), where + ".n") : 0;
    if (!s.graph.has_vertex(from) || !s.graph.has_vertex(to)) {
      throw Error(ErrorCode::Schema, where + ": unknown vertex in " + from + "-" + to);
    }
    try {
      s.graph.add_edge(from, to, kind, n, d);
    } catch (const Error& err) {
      throw Error(ErrorCode::Schema, where + ": " + err.what());
    }
  }

  if (j.contains("defaults")) {
    const Json& d = j.at("defaults");
    allow_only(d, "defaults", {"probe_scale_mm", "solver"});
    if (d.contains("probe_scale_mm")) {
      s.probe_scale_mm = number(d.at("probe_scale_mm"), "defaults.probe_scale_mm");
      if (!(s.probe_scale_mm > 0.0)) throw Error(ErrorCode::Schema, "defaults.probe_scale_mm: must be positive");
    }
    if (d.contains("solver")) {
      const Json& sv = d.at("solver");
      allow_only(sv, "defaults.solver", {"epsilon", "max_iterations", "step_halving_limit"});
      if (sv.contains("epsilon")) s.solver.epsilon = number(sv.at("epsilon"), "defaults.solver.epsilon");
      if (sv.contains("max_iterations")) {
        s.solver.max_iterations = integer(sv.at("max_iterations"), "defaults.solver.max_iterations");
      }
      if (sv.contains("step_halving_limit")) {
        s.solver.step_halving_limit = integer(sv.at("step_halving_limit"), "defaults.solver.step_halving_limit");
      }
      if (!(s.solver.epsilon > 0.0)) throw Error(ErrorCode::Schema, "defaults.solver.epsilon: must be positive");
      if (s.solver.max_iterations < 0 || s.solver.step_halving_limit < 0) {
        throw Error(ErrorCode::Schema, "defaults.solver: iteration limits must be nonnegative");
      }
    }
  }
  return s;
}

Json system_to_json(const SystemDescription& s) {
  Json vertices = Json::array();
  for (const auto& v : s.graph.vertices()) {
    vertices.push_back({{"id", v.id}, {"kind", to_string(v.kind)}, {"eta", v.eta}});
  }
  Json edges = Json::array();
  for (const auto& e : s.graph.edges()) {
    Json je{{"from", e.from}, {"to", e.to}, {"kind", to_string(e.kind)}, {"d", e.d}};
    if (e.n != 0) je["n"] = e.n;
    edges.push_back(std::move(je));
  }
  Json solver{{"epsilon", s.solver.epsilon},
              {"max_iterations", s.solver.max_iterations},
              {"step_halving_limit", s.solver.step_halving_limit}};
  return Json{{"vertices", std::move(vertices)},
              {"edges", std::move(edges)},
              {"defaults", {{"probe_scale_mm", s.probe_scale_mm}, {"solver", std::move(solver)}}}};
}

Json plan_to_json(const CalibrationGraph& g, const Plan& plan) {
  Json tree = Json::array();
  for (EdgeIndex e : plan.tree.edges) {
    const Edge& edge = g.edge(e);
    tree.push_back({{"from", edge.from}, {"to", edge.to}, {"kind", to_string(edge.kind)}, {"phi", edge.phi}});
  }
  Json sequence = Json::array();
  for (const auto& s : plan.sequence) sequence.push_back(directed_to_json(g, s.edge, s.forward));
  Json loops = Json::array();
  for (const auto& loop : plan.loops) {
    Json steps = Json::array();
    for (const auto& s : loop.steps) {
      Json js = directed_to_json(g, s.edge, s.forward);
      js["role"] = s.role == StepRole::Unknown ? "unknown" : "measured";
      steps.push_back(std::move(js));
    }
    loops.push_back({{"omega", loop.omega}, {"steps", std::move(steps)}});
  }
  return Json{{"system_digest", plan.system_digest},
              {"root", plan.tree.root},
              {"tree", std::move(tree)},
              {"sequence", std::move(sequence)},
              {"loops", std::move(loops)}};
}

Plan parse_plan(const CalibrationGraph& g, const Json& j) {
  allow_only(j, "plan", {"system_digest", "root", "tree", "sequence", "loops"});
  Plan plan;
  plan.system_digest = string_field(j, "plan", "system_digest");
  plan.tree.root = string_field(j, "plan", "root");
  if (!g.has_vertex(plan.tree.root)) throw Error(ErrorCode::Schema, "plan.root: unknown vertex " + plan.tree.root);
  const Json& tree = array_field(j, "plan", "tree");
  for (std::size_t i = 0; i < tree.size(); ++i) {
    const std::string where = "plan.tree[" + std::to_string(i) + "]";
    allow_only(tree[i], where, {"from", "to", "kind", "phi"});
    plan.tree.edges.push_back(directed_from_json(g, tree[i], where).edge);
  }
  if (plan.tree.edges.size() + 1 != g.vertices().size()) {
    throw Error(ErrorCode::Schema, "plan.tree: expected " + std::to_string(g.vertices().size() - 1) + " edges");
  }
  const Json& sequence = array_field(j, "plan", "sequence");
  for (std::size_t i = 0; i < sequence.size(); ++i) {
    const std::string where = "plan.sequence[" + std::to_string(i) + "]";
    allow_only(sequence[i], where, {"from", "to"});
    plan.sequence.push_back(directed_from_json(g, sequence[i], where));
  }
  const Json& loops = array_field(j, "plan", "loops");
  for (std::size_t i = 0; i < loops.size(); ++i) {
    const std::string where = "plan.loops[" + std::to_string(i) + "]";
    allow_only(loops[i], where, {"omega", "steps"});
    const Json& steps = array_field(loops[i], where, "steps");
    std::vector<DirectedEdge> directed;
    for (std::size_t k = 0; k < steps.size(); ++k) {
      const std::string ws = where + ".steps[" + std::to_string(k) + "]";
      allow_only(steps[k], ws, {"from", "to", "role"});
      directed.push_back(directed_from_json(g, steps[k], ws));
    }
    try {
      plan.loops.push_back(make_loop(g, directed));
    } catch (const Error& e) {
      throw Error(ErrorCode::Schema, where + ": " + e.what());
    }
  }
  return plan;
}

std::string measurements_to_jsonl(std::string_view system_digest, const std::vector<MeasurementRecord>& records) {
  std::string out = Json{{"system_digest", system_digest}}.dump() + "\n";
  for (const auto& r : records) {
    out += Json{{"config", r.config}, {"from", r.from}, {"to", r.to}, {"T", transform_to_json(r.observed)}}.dump();
    out += "\n";
  }
  return out;
}

MeasurementFile parse_measurements(std::string_view text) {
  MeasurementFile file;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  bool header = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = "measurements line " + std::to_string(line_no);
    const Json j = parse_json(line, where);
    if (!header) {
      allow_only(j, where, {"system_digest"});
      file.system_digest = string_field(j, where, "system_digest");
      header = true;
      continue;
    }
    allow_only(j, where, {"config", "from", "to", "T"});
    MeasurementRecord r;
    r.config = integer(field(j, where, "config"), where + ".config");
    r.from = string_field(j, where, "from");
    r.to = string_field(j, where, "to");
    r.observed = transform_from_json(field(j, where, "T"), where + ".T");
    file.records.push_back(std::move(r));
  }
  if (!header) throw Error(ErrorCode::Schema, "measurements: missing system_digest header line");
  return file;
}

Json estimates_to_json(const CalibrationGraph& g, std::string_view system_digest, std::string_view stage,
                       const EstimateMap& estimates) {
  Json list = Json::array();
  for (const auto& [e, t] : estimates) {
    list.push_back({{"from", g.edge(e).from}, {"to", g.edge(e).to}, {"T", transform_to_json(t)}});
  }
  return Json{{"system_digest", system_digest}, {"stage", stage}, {"estimates", std::move(list)}};
}

EstimateFile parse_estimates(const CalibrationGraph& g, const Json& j) {
  allow_only(j, "estimates", {"system_digest", "stage", "estimates"});
  EstimateFile file;
  file.system_digest = string_field(j, "estimates", "system_digest");
  file.stage = string_field(j, "estimates", "stage");
  const Json& list = array_field(j, "estimates", "estimates");
  for (std::size_t i = 0; i < list.size(); ++i) {
    const std::string where = "estimates[" + std::to_string(i) + "]";
    allow_only(list[i], where, {"from", "to", "T"});
    const DirectedEdge d = directed_from_json(g, list[i], where);
    if (g.edge(d.edge).kind != EdgeKind::UnknownConstant) {
      throw Error(ErrorCode::Schema, where + ": " + g.edge(d.edge).from + "-" + g.edge(d.edge).to +
                                         " is not an unknown edge");
    }
    const Transform t = transform_from_json(field(list[i], where, "T"), where + ".T");
    file.estimates[d.edge] = d.forward ? t : t.inverse();
  }
  return file;
}

std::string trace_to_csv(const ConvergenceTrace& trace) {
  std::string out = "iteration,mean_closed_loop_error_mm,step_inf_norm\n";
  for (const auto& row : trace) {
    out += std::to_string(row.iteration) + "," + format_double(row.mean_closed_loop_error_mm) + "," +
           format_double(row.step_inf_norm) + "\n";
  }
  return out;
}

std::string error_report_to_csv(const ErrorReport& report) {
  std::string out =
      "from,to,rot_x_rad,rot_y_rad,rot_z_rad,rot_angle_rad,trans_x_mm,trans_y_mm,trans_z_mm,trans_norm_mm\n";
  for (const auto& e : report.edges) {
    out += e.from + "," + e.to;
    for (int a = 0; a < 3; ++a) out += "," + format_double(e.rotation[a]);
    out += "," + format_double(e.rotation_angle);
    for (int a = 0; a < 3; ++a) out += "," + format_double(e.translation[a]);
    out += "," + format_double(e.translation_norm) + "\n";
  }
  out += "mean,,,,," + format_double(report.mean_rotation_error) + ",,,," +
         format_double(report.mean_translation_error) + "\n";
  return out;
}

}  // namespace memhs
