#include "ccpaloc/powerflow.hpp"

#include <cmath>

namespace ccpaloc {

namespace {

Eigen::VectorXd balance_at_slack(const GridCase& grid, Eigen::VectorXd p) {
  const int slack = grid.slack_pos();
  p(slack) = 0.0;
  p(slack) = -p.sum();
  return p;
}

}  // namespace

InjectionVector base_injections(const GridCase& grid) {
  Eigen::VectorXd p = Eigen::VectorXd::Zero(grid.n_buses());
  for (const Gen& g : grid.gens) p(grid.bus_pos(g.bus)) += g.gen_p;
  for (int i = 0; i < grid.n_buses(); ++i) p(i) -= grid.buses[i].load_p;
  return InjectionVector{balance_at_slack(grid, std::move(p))};
}

InjectionVector sample_injections(const GridCase& grid, double load_lo, double load_hi, Rng& rng) {
  Eigen::VectorXd p = Eigen::VectorXd::Zero(grid.n_buses());
  for (const Gen& g : grid.gens) p(grid.bus_pos(g.bus)) += g.gen_p;
  for (int i = 0; i < grid.n_buses(); ++i) {
    // One draw per bus regardless of load so the stream layout is stable.
    const double factor = rng.uniform(load_lo, load_hi);
    p(i) -= factor * grid.buses[i].load_p;
  }
  return InjectionVector{balance_at_slack(grid, std::move(p))};
}

InjectionVector sample_injections_global(const GridCase& grid, double load_lo, double load_hi,
                                         Rng& rng) {
  const double factor = rng.uniform(load_lo, load_hi);
  Eigen::VectorXd p = Eigen::VectorXd::Zero(grid.n_buses());
  for (const Gen& g : grid.gens) p(grid.bus_pos(g.bus)) += g.gen_p;
  for (int i = 0; i < grid.n_buses(); ++i) p(i) -= factor * grid.buses[i].load_p;
  return InjectionVector{balance_at_slack(grid, std::move(p))};
}

StateVector solve_dc(const GridCase& grid, const InjectionVector& inj) {
  const int n = grid.n_buses();
  if (inj.p.size() != n) fail(ErrorCode::ShapeMismatch, "injection length != bus count");
  if (!grid.connected()) fail(ErrorCode::SingularSystem, "grid is islanded");
  const double imbalance = inj.p.sum();
  if (std::abs(imbalance) > 1e-8 * std::max(1.0, inj.p.cwiseAbs().maxCoeff()))
    fail(ErrorCode::UnbalancedInjections, "injections sum to " + std::to_string(imbalance));

  const IncidencePair inc = build_incidence(grid);
  Eigen::VectorXd d(inc.reduced.cols());
  for (int c = 0; c < d.size(); ++c)
    d(c) = 1.0 / grid.branch_by_index(inc.col_branch_indices[c]).reactance;

  const Eigen::MatrixXd b_red = inc.reduced * d.asDiagonal() * inc.reduced.transpose();
  const int slack = grid.slack_pos();
  Eigen::VectorXd p_red(n - 1);
  int r = 0;
  for (int i = 0; i < n; ++i) {
    if (i == slack) continue;
    p_red(r++) = inj.p(i);
  }

  Eigen::LDLT<Eigen::MatrixXd> ldlt(b_red);
  if (ldlt.info() != Eigen::Success) fail(ErrorCode::SingularSystem, "nodal matrix factorization failed");
  Eigen::VectorXd theta = ldlt.solve(p_red);
  const double rel_res = (b_red * theta - p_red).norm() / std::max(1.0, p_red.norm());
  if (!(rel_res < 1e-10)) fail(ErrorCode::SingularSystem, "solver residual " + std::to_string(rel_res));
  return StateVector{std::move(theta), grid.slack_bus_id()};
}

Eigen::VectorXd full_angles(const GridCase& grid, const StateVector& state) {
  const int n = grid.n_buses();
  const int slack = grid.slack_pos();
  if (state.theta.size() != n - 1) fail(ErrorCode::ShapeMismatch, "state length != N-1");
  Eigen::VectorXd angles(n);
  int r = 0;
  for (int i = 0; i < n; ++i) angles(i) = (i == slack) ? 0.0 : state.theta(r++);
  return angles;
}

Eigen::VectorXd branch_flows(const GridCase& grid, const StateVector& state) {
  const Eigen::VectorXd angles = full_angles(grid, state);
  Eigen::VectorXd flows = Eigen::VectorXd::Zero(grid.n_branches());
  for (int i = 0; i < grid.n_branches(); ++i) {
    const Branch& br = grid.branches[i];
    if (!br.in_service) continue;
    flows(i) = (angles(grid.bus_pos(br.from_bus)) - angles(grid.bus_pos(br.to_bus))) / br.reactance;
  }
  return flows;
}

Eigen::VectorXd measure(const MeasurementModel& model, const StateVector& state, bool noisy,
                        Rng* rng) {
  if (state.theta.size() != model.n()) fail(ErrorCode::ShapeMismatch, "state length != model n");
  Eigen::VectorXd z = model.H * state.theta;
  if (noisy) {
    if (rng == nullptr) fail(ErrorCode::InvalidConfig, "noisy measurement needs an rng");
    for (int i = 0; i < z.size(); ++i) z(i) += model.sigma(i) * rng->normal();
  }
  return z;
}

GridCase apply_outage(const GridCase& grid, const std::vector<int>& line_indices) {
  GridCase out = grid;
  for (int index : line_indices) {
    Branch& br = out.branches[static_cast<std::size_t>(out.branch_pos(index))];
    if (!br.in_service)
      fail(ErrorCode::InvalidOutage, "branch " + std::to_string(index) + " is already out of service");
    br.in_service = false;
  }
  if (!out.connected())
    fail(ErrorCode::IslandingOutage, "outage disconnects the grid");
  return out;
}

}  // namespace ccpaloc
