#include "memhs/planner.hpp"

#include <algorithm>
#include <limits>
#include <queue>
#include <set>
#include <tuple>

#include "memhs/error.hpp"

namespace memhs {

SpanningTree minimum_spanning_tree(const CalibrationGraph& g, const VertexId& root) {
  const auto& vertices = g.vertices();
  std::vector<bool> visited(vertices.size(), false);
  visited[g.vertex_index(root)] = true;
  SpanningTree tree{root, {}};

  for (std::size_t added = 1; added < vertices.size(); ++added) {
    std::optional<EdgeIndex> best;
    for (EdgeIndex e = 0; e < g.edges().size(); ++e) {
      const Edge& edge = g.edge(e);
      if (edge.kind == EdgeKind::Forbidden) continue;
      if (visited[g.vertex_index(edge.from)] == visited[g.vertex_index(edge.to)]) continue;
      if (!best) {
        best = e;
        continue;
      }
      const Edge& b = g.edge(*best);
      if (std::tie(edge.phi, edge.from, edge.to) < std::tie(b.phi, b.from, b.to)) best = e;
    }
    if (!best) {
      throw Error(ErrorCode::Disconnected, "non-forbidden edges do not connect every vertex to '" + root + "'");
    }
    visited[g.vertex_index(g.edge(*best).from)] = true;
    visited[g.vertex_index(g.edge(*best).to)] = true;
    tree.edges.push_back(*best);
  }
  return tree;
}

std::vector<DirectedEdge> calibration_sequence(const CalibrationGraph& g, const SpanningTree& tree) {
  std::vector<DirectedEdge> order;
  std::set<EdgeIndex> remaining(tree.edges.begin(), tree.edges.end());

  std::vector<bool> seen(g.vertices().size(), false);
  seen[g.vertex_index(tree.root)] = true;

  auto children_of = [&](const VertexId& v) {
    std::vector<std::pair<double, std::pair<VertexId, EdgeIndex>>> kids;
    for (EdgeIndex e : g.incident(v)) {
      if (!remaining.contains(e)) continue;
      const VertexId& other = g.other_end(e, v);
      if (seen[g.vertex_index(other)]) continue;
      kids.push_back({g.edge(e).phi, {other, e}});
    }
    std::sort(kids.begin(), kids.end());
    return kids;
  };

  struct Frame {
    VertexId vertex;
    std::vector<std::pair<double, std::pair<VertexId, EdgeIndex>>> kids;
    std::size_t next = 0;
  };
  std::vector<Frame> frames;
  frames.push_back({tree.root, children_of(tree.root), 0});
  while (!frames.empty()) {
    Frame& top = frames.back();
    if (top.next == top.kids.size()) {
      frames.pop_back();
      continue;
    }
    const auto& [phi, kid] = top.kids[top.next++];
    const auto& [child, e] = kid;
    if (seen[g.vertex_index(child)]) continue;
    seen[g.vertex_index(child)] = true;
    order.push_back({e, g.edge(e).from == top.vertex});
    VertexId child_id = child;
    frames.push_back({child_id, children_of(child_id), 0});
  }
  return order;
}

std::optional<Path> shortest_path(const CalibrationGraph& g, const VertexId& source, const VertexId& target,
                                  const EdgeFilter& allow, const EdgeCost& cost) {
  const std::size_t n = g.vertices().size();
  constexpr double kInf = std::numeric_limits<double>::infinity();
  std::vector<double> dist(n, kInf);
  std::vector<std::optional<DirectedEdge>> via(n);
  std::vector<bool> done(n, false);

  using Entry = std::pair<double, VertexId>;
  std::priority_queue<Entry, std::vector<Entry>, std::greater<>> queue;
  dist[g.vertex_index(source)] = 0.0;
  queue.push({0.0, source});

  while (!queue.empty()) {
    auto [d, v] = queue.top();
    queue.pop();
    const std::size_t vi = g.vertex_index(v);
    if (done[vi]) continue;
    done[vi] = true;
    if (v == target) break;
    for (EdgeIndex e : g.incident(v)) {
      const Edge& edge = g.edge(e);
      if (edge.kind == EdgeKind::Forbidden || !allow(e)) continue;
      const VertexId& w = g.other_end(e, v);
      const std::size_t wi = g.vertex_index(w);
      const double nd = d + (cost ? cost(e) : edge.phi);
      if (nd < dist[wi]) {
        dist[wi] = nd;
        via[wi] = DirectedEdge{e, edge.from == v};
        queue.push({nd, w});
      }
    }
  }

  const std::size_t ti = g.vertex_index(target);
  if (!done[ti] || dist[ti] == kInf) return std::nullopt;
  Path path;
  path.cost = dist[ti];
  for (VertexId v = target; v != source;) {
    const DirectedEdge step = *via[g.vertex_index(v)];
    path.steps.push_back(step);
    v = tail(g, step.edge, step.forward);
  }
  std::reverse(path.steps.begin(), path.steps.end());
  return path;
}

CalibrationLoop find_optimal_loop(const CalibrationGraph& g, EdgeIndex target) {
  const Edge& t = g.edge(target);
  if (t.kind != EdgeKind::UnknownConstant) {
    throw Error(ErrorCode::InvalidEdge, "loop target " + t.from + "-" + t.to + " is not an unknown edge");
  }
  auto path = shortest_path(g, t.from, t.to, [target](EdgeIndex e) { return e != target; });
  if (!path) throw Error(ErrorCode::NoLoop, "no path closes a loop over " + t.from + "-" + t.to);

  std::vector<DirectedEdge> steps = path->steps;
  steps.push_back({target, false});
  CalibrationLoop loop = make_loop(g, steps);
  const bool has_measured = std::any_of(loop.steps.begin(), loop.steps.end(),
                                        [](const LoopStep& s) { return s.role == StepRole::Measured; });
  if (!has_measured) {
    throw Error(ErrorCode::NoLoop, "cheapest loop over " + t.from + "-" + t.to + " has no measured edge");
  }
  return loop;
}

bool add_unique_loop(std::vector<CalibrationLoop>& loops, CalibrationLoop loop) {
  const auto key = loop.edge_set();
  for (const auto& existing : loops) {
    if (existing.edge_set() == key) return false;
  }
  loops.push_back(std::move(loop));
  return true;
}

std::vector<EdgeIndex> unknown_edge_order(const CalibrationGraph& g, const SpanningTree& tree) {
  std::vector<EdgeIndex> order;
  for (const auto& step : calibration_sequence(g, tree)) {
    if (g.edge(step.edge).kind == EdgeKind::UnknownConstant) order.push_back(step.edge);
  }
  for (EdgeIndex e : g.edges_of_kind(EdgeKind::UnknownConstant)) {
    if (std::find(order.begin(), order.end(), e) == order.end()) order.push_back(e);
  }
  return order;
}

std::vector<CalibrationLoop> build_loop_set(const CalibrationGraph& g, const SpanningTree& tree) {
  std::vector<CalibrationLoop> loops;
  for (EdgeIndex e : unknown_edge_order(g, tree)) {
    CalibrationLoop loop;
    try {
      loop = find_optimal_loop(g, e);
    } catch (const Error& err) {
      throw Error(ErrorCode::UncoverableEdge, "edge " + g.edge(e).from + "-" + g.edge(e).to + ": " + err.what());
    }
    add_unique_loop(loops, std::move(loop));
  }
  return loops;
}

}  // namespace memhs
