#pragma once

#include <span>
#include <vector>

#include <Eigen/Core>

#include "memhs/graph.hpp"
#include "memhs/hand_eye.hpp"
#include "memhs/se3.hpp"

namespace memhs {

/// One step of a loop as seen by the solver. For unknown steps `slot` indexes
/// OptimizationProblem::unknowns; for measured steps it indexes the snapshot
/// vectors of the loop.
struct ProblemStep {
  bool unknown = false;
  std::size_t slot = 0;
  bool forward = true;
};

struct ProblemLoop {
  std::vector<ProblemStep> steps;
  double omega = 1.0;
  /// One entry per snapshot; each holds the measured step values in
  /// traversal direction, in step order.
  std::vector<std::vector<Transform>> snapshots;
  std::vector<int> configs;  // configuration id of each snapshot
};

struct OptimizationProblem {
  std::vector<ProblemLoop> loops;
  std::vector<Point> probe_points;
  std::vector<EdgeIndex> unknown_edges;  // parallel to `unknowns`
  std::vector<Transform> unknowns;       // canonical direction ^from T_to

  std::size_t dimension() const { return 6 * unknowns.size(); }
  std::size_t residual_size() const;
};

struct SolverConfig {
  double epsilon = 1e-10;
  int max_iterations = 100;
  int step_halving_limit = 8;
};

struct TraceRow {
  int iteration = 0;
  double mean_closed_loop_error_mm = 0.0;
  double step_inf_norm = 0.0;
  double cost = 0.0;  // sum of weighted squared residuals
};

using ConvergenceTrace = std::vector<TraceRow>;

struct OptimizationResult {
  std::vector<Transform> unknowns;
  ConvergenceTrace trace;
};

/// Probe tetrad {0, s e_x, s e_y, s e_z}.
std::vector<Point> default_probe_points(double scale_mm = 100.0);

/// Collects the unknowns of `loops` (in first-appearance order) with their
/// estimates and one snapshot per configuration where every measured step of
/// a loop has a record. Throws MissingEstimate, InsufficientData.
OptimizationProblem build_problem(const CalibrationGraph& g, std::span<const CalibrationLoop> loops,
                                  const MeasurementSet& measurements, const EstimateMap& estimates,
                                  std::vector<Point> probe_points);

/// Stacked sqrt(omega) * (T p - p) in (loop, snapshot, point) order.
Eigen::VectorXd loop_residual(const OptimizationProblem& problem);

/// Dense Jacobian of loop_residual with respect to left perturbations of the
/// unknowns, columns [rho; phi] per unknown.
Eigen::MatrixXd analytic_jacobian(const OptimizationProblem& problem);

/// Solves (H + lambda I) x = -g by Cholesky, escalating lambda from
/// 1e-12 trace/dim by x10 up to 1e-3 trace/dim. Throws SingularNormalEquations.
Eigen::VectorXd solve_normal_equations(const Eigen::MatrixXd& h, const Eigen::VectorXd& g);

Eigen::VectorXd gauss_newton_step(const Eigen::MatrixXd& jacobian, const Eigen::VectorXd& residual);

/// Applies X_u <- exp(delta_u) X_u to every unknown.
std::vector<Transform> apply_update(std::span<const Transform> unknowns, const Eigen::VectorXd& delta);

/// Gauss-Newton with step halving. Only steps that do not increase the cost
/// are accepted; the trace starts with the initial state as iteration 0.
/// Throws SingularNormalEquations, NonFiniteResidual.
OptimizationResult optimize(const OptimizationProblem& problem, const SolverConfig& config = {});

struct ClosedLoopError {
  std::vector<double> per_loop;  // mean over snapshots and probe points
  double overall = 0.0;          // mean over all loops and snapshots
};

/// Unweighted mean of |T p - p| in mm.
ClosedLoopError closed_loop_error(const OptimizationProblem& problem);

}  // namespace memhs
