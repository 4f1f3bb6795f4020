#pragma once

#include <functional>
#include <optional>
#include <vector>

#include "memhs/graph.hpp"

namespace memhs {

/// Prim's algorithm over Phi on the non-forbidden subgraph. Ties are broken
/// by (Phi, from-id, to-id). Throws Disconnected.
SpanningTree minimum_spanning_tree(const CalibrationGraph& g, const VertexId& root);

/// Depth-first preorder of tree edges, each oriented away from the root.
/// Children are visited by ascending Phi, then vertex id.
std::vector<DirectedEdge> calibration_sequence(const CalibrationGraph& g, const SpanningTree& tree);

/// Edges usable by a path search.
using EdgeFilter = std::function<bool(EdgeIndex)>;

struct Path {
  std::vector<DirectedEdge> steps;
  double cost = 0.0;
};

/// Per-edge traversal cost; Phi when not supplied.
using EdgeCost = std::function<double(EdgeIndex)>;

/// Dijkstra restricted to edges accepted by `allow`. Path::cost is the sum
/// of the costs used.
std::optional<Path> shortest_path(const CalibrationGraph& g, const VertexId& source, const VertexId& target,
                                  const EdgeFilter& allow, const EdgeCost& cost = {});

/// Cheapest cycle through an unknown edge: the direct edge and all forbidden
/// edges are pruned, then the endpoints are joined by the Phi-shortest path.
/// The loop starts at target.from, follows the path and closes over the
/// target edge. Throws NoLoop.
CalibrationLoop find_optimal_loop(const CalibrationGraph& g, EdgeIndex target);

/// One optimal loop per unknown edge, deduplicated by edge set. Unknown tree
/// edges are processed in calibration-sequence order, the rest by index.
/// Throws UncoverableEdge.
std::vector<CalibrationLoop> build_loop_set(const CalibrationGraph& g, const SpanningTree& tree);

/// Appends `loop` unless a loop with the same edge set is already present.
bool add_unique_loop(std::vector<CalibrationLoop>& loops, CalibrationLoop loop);

/// Unknown edges in the order build_loop_set processes them.
std::vector<EdgeIndex> unknown_edge_order(const CalibrationGraph& g, const SpanningTree& tree);

}  // namespace memhs
