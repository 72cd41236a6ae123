#pragma once

#include <Eigen/Dense>
#include <map>
#include <vector>

#include "ccpaloc/case_model.hpp"
#include "ccpaloc/rng.hpp"

namespace ccpaloc {

/// D-FACTS device placement: the complement of a spanning tree, so every
/// alternative path around any line crosses at least one device.
struct DfactsPlan {
  std::vector<int> dfacts_lines;   // L_D, 1-based branch indices, sorted
  std::vector<int> spanning_tree;  // 1-based branch indices, |.| = N-1, sorted
};

/// Minimum spanning tree under reactance weights (ties broken by branch
/// index); D-FACTS go on every line not in the tree.
DfactsPlan place_dfacts(const GridCase& grid);

/// Smallest principal angle between the column spaces of H and H', radians in
/// [0, pi/2]. Zero iff the spaces share a direction. Note: whenever the
/// perturbed lines do not cover a spanning tree, states with zero flow on all
/// perturbed lines map identically under H and H', so the spaces intersect
/// and this angle is exactly zero; with the tree-complement placement above it
/// is therefore always degenerate and candidates tie at rounding level.
double spa(const Eigen::MatrixXd& h, const Eigen::MatrixXd& h_prime);

/// Largest principal angle between the column spaces; a non-degenerate
/// measure of how far the perturbation rotates the model.
double spa_largest(const Eigen::MatrixXd& h, const Eigen::MatrixXd& h_prime);

/// Reactance perturbation restricted to the D-FACTS lines.
struct Perturbation {
  std::map<int, double> delta_x;  // 1-based branch index -> delta (p.u.)
  double eta = 0.0;               // max relative magnitude, |delta| <= eta * x
  double gamma = 0.0;             // achieved smallest principal angle
  double gamma_largest = 0.0;     // achieved largest principal angle
};

/// Random search: n_candidates perturbations with entries uniform in
/// +-eta*x_l on the D-FACTS lines; returns the one with the largest smallest
/// principal angle against the unperturbed model. Candidates whose smallest
/// angles agree within 1e-6 rad (always the case under the degenerate
/// placement) are ranked by the largest principal angle instead. Optionally
/// reports every candidate's smallest angle.
Perturbation select_perturbation(const GridCase& grid, const DfactsPlan& plan, double eta,
                                 int n_candidates, Rng& rng,
                                 std::vector<double>* candidate_gammas = nullptr);

/// New grid with x_l + delta_x_l on the perturbed lines.
GridCase apply_mtd(const GridCase& grid, const Perturbation& perturbation);

}  // namespace ccpaloc
