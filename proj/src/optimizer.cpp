#include "memhs/optimizer.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include <Eigen/Cholesky>

#include "memhs/error.hpp"

namespace memhs {

std::size_t OptimizationProblem::residual_size() const {
  std::size_t rows = 0;
  for (const auto& loop : loops) rows += 3 * loop.snapshots.size() * probe_points.size();
  return rows;
}

std::vector<Point> default_probe_points(double scale_mm) {
  return {Point::Zero(), Point(scale_mm, 0, 0), Point(0, scale_mm, 0), Point(0, 0, scale_mm)};
}

OptimizationProblem build_problem(const CalibrationGraph& g, std::span<const CalibrationLoop> loops,
                                  const MeasurementSet& measurements, const EstimateMap& estimates,
                                  std::vector<Point> probe_points) {
  OptimizationProblem problem;
  problem.probe_points = std::move(probe_points);
  std::map<EdgeIndex, std::size_t> slot_of;

  for (const auto& loop : loops) {
    ProblemLoop pl;
    pl.omega = loop.omega;
    std::vector<EdgeIndex> measured;
    std::vector<bool> measured_forward;
    for (const auto& step : loop.steps) {
      const Edge& edge = g.edge(step.edge);
      if (edge.kind == EdgeKind::UnknownConstant) {
        auto it = slot_of.find(step.edge);
        if (it == slot_of.end()) {
          auto est = estimates.find(step.edge);
          if (est == estimates.end()) {
            throw Error(ErrorCode::MissingEstimate, "no estimate for unknown edge " + edge.from + "-" + edge.to);
          }
          it = slot_of.emplace(step.edge, problem.unknowns.size()).first;
          problem.unknown_edges.push_back(step.edge);
          problem.unknowns.push_back(est->second);
        }
        pl.steps.push_back({true, it->second, step.forward});
      } else {
        pl.steps.push_back({false, measured.size(), step.forward});
        measured.push_back(step.edge);
        measured_forward.push_back(step.forward);
      }
    }
    for (int config : measurements.common_configs(measured)) {
      std::vector<Transform> snapshot;
      for (std::size_t i = 0; i < measured.size(); ++i) {
        snapshot.push_back(*measurements.value(measured[i], config, measured_forward[i]));
      }
      pl.snapshots.push_back(std::move(snapshot));
      pl.configs.push_back(config);
    }
    if (pl.snapshots.empty()) {
      const auto seq = loop.vertex_sequence(g);
      std::string name;
      for (const auto& v : seq) name += (name.empty() ? "" : "->") + v;
      throw Error(ErrorCode::InsufficientData, "loop " + name + " has no configuration measuring all its edges");
    }
    problem.loops.push_back(std::move(pl));
  }
  return problem;
}

namespace {

Transform step_value(const ProblemStep& step, const std::vector<Transform>& snapshot,
                     std::span<const Transform> unknowns) {
  if (!step.unknown) return snapshot[step.slot];
  return step.forward ? unknowns[step.slot] : unknowns[step.slot].inverse();
}

Transform loop_product(const ProblemLoop& loop, const std::vector<Transform>& snapshot,
                       std::span<const Transform> unknowns) {
  Transform t;
  for (const auto& step : loop.steps) t = t * step_value(step, snapshot, unknowns);
  return t;
}

using Block = Eigen::Matrix<double, 3, 6>;

/// Visits every (loop, snapshot, point) term with its residual and the
/// Jacobian blocks of the unknowns in that loop.
template <typename Visitor>
void for_each_term(const OptimizationProblem& problem, std::span<const Transform> unknowns, Visitor&& visit) {
  std::vector<std::pair<std::size_t, Block>> blocks;
  std::vector<Transform> prefix, suffix;
  for (std::size_t k = 0; k < problem.loops.size(); ++k) {
    const ProblemLoop& loop = problem.loops[k];
    const double w = std::sqrt(loop.omega);
    const std::size_t m = loop.steps.size();
    for (const auto& snapshot : loop.snapshots) {
      std::vector<Transform> values;
      values.reserve(m);
      for (const auto& step : loop.steps) values.push_back(step_value(step, snapshot, unknowns));
      // prefix[i] = product of steps before i, suffix[i] = product after i.
      prefix.assign(m + 1, Transform());
      suffix.assign(m + 1, Transform());
      for (std::size_t i = 0; i < m; ++i) prefix[i + 1] = prefix[i] * values[i];
      for (std::size_t i = m; i-- > 0;) suffix[i] = values[i] * suffix[i + 1];
      const Transform& total = prefix[m];

      for (const Point& p : problem.probe_points) {
        const Vec3 r = w * (total * p - p);
        blocks.clear();
        for (std::size_t i = 0; i < m; ++i) {
          const ProblemStep& step = loop.steps[i];
          if (!step.unknown) continue;
          const Mat3& rb = prefix[i].rotation();
          Block b;
          if (step.forward) {
            const Vec3 q = suffix[i] * p;
            b << rb, -rb * skew(q);
          } else {
            const Mat3 rr = rb * values[i].rotation();
            const Vec3 q = suffix[i + 1] * p;
            b << -rr, rr * skew(q);
          }
          blocks.emplace_back(step.slot, w * b);
        }
        visit(k, r, blocks);
      }
    }
  }
}

double total_cost(const OptimizationProblem& problem, std::span<const Transform> unknowns) {
  double cost = 0.0;
  for (const auto& loop : problem.loops) {
    for (const auto& snapshot : loop.snapshots) {
      const Transform t = loop_product(loop, snapshot, unknowns);
      for (const Point& p : problem.probe_points) cost += loop.omega * (t * p - p).squaredNorm();
    }
  }
  return cost;
}

ClosedLoopError closed_loop_error(const OptimizationProblem& problem, std::span<const Transform> unknowns) {
  ClosedLoopError out;
  double sum = 0.0;
  std::size_t count = 0;
  const double points = static_cast<double>(std::max<std::size_t>(problem.probe_points.size(), 1));
  for (const auto& loop : problem.loops) {
    double loop_sum = 0.0;
    for (const auto& snapshot : loop.snapshots) {
      const Transform t = loop_product(loop, snapshot, unknowns);
      double e = 0.0;
      for (const Point& p : problem.probe_points) e += (t * p - p).norm();
      loop_sum += e / points;
    }
    out.per_loop.push_back(loop.snapshots.empty() ? 0.0 : loop_sum / static_cast<double>(loop.snapshots.size()));
    sum += loop_sum;
    count += loop.snapshots.size();
  }
  out.overall = count == 0 ? 0.0 : sum / static_cast<double>(count);
  return out;
}

}  // namespace

Eigen::VectorXd loop_residual(const OptimizationProblem& problem) {
  Eigen::VectorXd r(static_cast<Eigen::Index>(problem.residual_size()));
  Eigen::Index row = 0;
  for_each_term(problem, problem.unknowns, [&](std::size_t, const Vec3& res, const auto&) {
    r.segment<3>(row) = res;
    row += 3;
  });
  return r;
}

Eigen::MatrixXd analytic_jacobian(const OptimizationProblem& problem) {
  Eigen::MatrixXd j = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(problem.residual_size()),
                                            static_cast<Eigen::Index>(problem.dimension()));
  Eigen::Index row = 0;
  for_each_term(problem, problem.unknowns, [&](std::size_t, const Vec3&, const auto& blocks) {
    for (const auto& [slot, b] : blocks) j.block<3, 6>(row, static_cast<Eigen::Index>(6 * slot)) += b;
    row += 3;
  });
  return j;
}

Eigen::VectorXd solve_normal_equations(const Eigen::MatrixXd& h, const Eigen::VectorXd& g) {
  const auto dim = h.rows();
  if (dim == 0) return Eigen::VectorXd();
  const double scale = std::max(h.trace() / static_cast<double>(dim), 1e-300);
  for (double factor = 1e-12; factor <= 1e-3 * (1.0 + 1e-9); factor *= 10.0) {
    Eigen::MatrixXd damped = h;
    damped.diagonal().array() += factor * scale;
    Eigen::LLT<Eigen::MatrixXd> llt(damped);
    if (llt.info() != Eigen::Success) continue;
    Eigen::VectorXd x = llt.solve(-g);
    if (x.allFinite()) return x;
  }
  throw Error(ErrorCode::SingularNormalEquations, "normal equations are singular even with maximal damping");
}

Eigen::VectorXd gauss_newton_step(const Eigen::MatrixXd& jacobian, const Eigen::VectorXd& residual) {
  return solve_normal_equations(jacobian.transpose() * jacobian, jacobian.transpose() * residual);
}

std::vector<Transform> apply_update(std::span<const Transform> unknowns, const Eigen::VectorXd& delta) {
  std::vector<Transform> out;
  out.reserve(unknowns.size());
  for (std::size_t u = 0; u < unknowns.size(); ++u) {
    const Vec6 d = delta.segment<6>(static_cast<Eigen::Index>(6 * u));
    out.push_back(exp_map(Twist::from_vector(d)) * unknowns[u]);
  }
  return out;
}

OptimizationResult optimize(const OptimizationProblem& problem, const SolverConfig& config) {
  OptimizationResult result;
  result.unknowns = problem.unknowns;
  const auto dim = static_cast<Eigen::Index>(problem.dimension());

  double cost = total_cost(problem, result.unknowns);
  if (!std::isfinite(cost)) throw Error(ErrorCode::NonFiniteResidual, "initial residual is not finite");
  result.trace.push_back({0, closed_loop_error(problem, result.unknowns).overall, 0.0, cost});

  for (int iter = 1; iter <= config.max_iterations && dim > 0; ++iter) {
    Eigen::MatrixXd h = Eigen::MatrixXd::Zero(dim, dim);
    Eigen::VectorXd g = Eigen::VectorXd::Zero(dim);
    for_each_term(problem, result.unknowns, [&](std::size_t, const Vec3& r, const auto& blocks) {
      for (const auto& [a, ba] : blocks) {
        const auto ia = static_cast<Eigen::Index>(6 * a);
        g.segment<6>(ia) += ba.transpose() * r;
        for (const auto& [b, bb] : blocks) {
          h.block<6, 6>(ia, static_cast<Eigen::Index>(6 * b)) += ba.transpose() * bb;
        }
      }
    });
    if (!g.allFinite() || !h.allFinite()) throw Error(ErrorCode::NonFiniteResidual, "non-finite normal equations");

    Eigen::VectorXd delta = solve_normal_equations(h, g);
    const double full_norm = delta.lpNorm<Eigen::Infinity>();

    bool accepted = false;
    for (int halving = 0; halving <= config.step_halving_limit; ++halving) {
      auto candidate = apply_update(result.unknowns, delta);
      const double c = total_cost(problem, candidate);
      if (std::isfinite(c) && c <= cost) {
        result.unknowns = std::move(candidate);
        cost = c;
        accepted = true;
        break;
      }
      delta *= 0.5;
    }
    if (!accepted) break;
    result.trace.push_back(
        {iter, closed_loop_error(problem, result.unknowns).overall, delta.lpNorm<Eigen::Infinity>(), cost});
    if (full_norm <= config.epsilon) break;
  }
  return result;
}

ClosedLoopError closed_loop_error(const OptimizationProblem& problem) {
  return closed_loop_error(problem, problem.unknowns);
}

}  // namespace memhs
