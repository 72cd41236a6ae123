#pragma once

#include <Eigen/Dense>
#include <vector>

#include "ccpaloc/case_model.hpp"
#include "ccpaloc/rng.hpp"

namespace ccpaloc {

/// Bus power injections in p.u., ordered like GridCase::buses. Balanced:
/// the slack entry absorbs whatever the other buses do not.
struct InjectionVector {
  Eigen::VectorXd p;  // length N
};

/// Injections at the case's base loads and generation.
InjectionVector base_injections(const GridCase& grid);

/// Injections with every bus load scaled by an i.i.d. uniform factor in
/// [load_lo, load_hi]; the slack bus rebalances the total.
InjectionVector sample_injections(const GridCase& grid, double load_lo, double load_hi, Rng& rng);

/// Injections with one uniform factor in [load_lo, load_hi] applied to every
/// load, the usual way load levels are swept in case studies.
InjectionVector sample_injections_global(const GridCase& grid, double load_lo, double load_hi,
                                         Rng& rng);

/// Voltage phase angles of the non-slack buses (bus order), slack fixed at 0.
struct StateVector {
  Eigen::VectorXd theta;  // length N-1, radians
  int slack_bus_id = 0;
};

StateVector solve_dc(const GridCase& grid, const InjectionVector& inj);

/// Angles for all N buses (slack entry zero), bus order.
Eigen::VectorXd full_angles(const GridCase& grid, const StateVector& state);

/// Directed flows (theta_from - theta_to) / x for every branch, 1-based order;
/// exactly zero for out-of-service branches.
Eigen::VectorXd branch_flows(const GridCase& grid, const StateVector& state);

/// z = H theta, plus per-channel Gaussian noise when noisy. rng may be null
/// for the noiseless path.
Eigen::VectorXd measure(const MeasurementModel& model, const StateVector& state, bool noisy,
                        Rng* rng);

/// New grid with the listed branches (1-based indices) switched out. Refuses
/// outages of unknown or already-out branches and outages that island the grid.
GridCase apply_outage(const GridCase& grid, const std::vector<int>& line_indices);

}  // namespace ccpaloc
