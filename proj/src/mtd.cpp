#include "ccpaloc/mtd.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace ccpaloc {

namespace {

struct UnionFind {
  std::vector<int> parent;
  explicit UnionFind(int n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
  int find(int x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  }
  bool unite(int a, int b) {
    a = find(a);
    b = find(b);
    if (a == b) return false;
    parent[a] = b;
    return true;
  }
};

}  // namespace

DfactsPlan place_dfacts(const GridCase& grid) {
  if (!grid.connected()) fail(ErrorCode::DisconnectedGrid, "cannot plan on an islanded grid");

  std::vector<int> order = grid.in_service_positions();
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    const Branch& ba = grid.branches[a];
    const Branch& bb = grid.branches[b];
    if (ba.reactance != bb.reactance) return ba.reactance < bb.reactance;
    return ba.index < bb.index;
  });

  UnionFind uf(grid.n_buses());
  DfactsPlan plan;
  for (int pos : order) {
    const Branch& br = grid.branches[pos];
    if (uf.unite(grid.bus_pos(br.from_bus), grid.bus_pos(br.to_bus)))
      plan.spanning_tree.push_back(br.index);
    else
      plan.dfacts_lines.push_back(br.index);
  }
  std::sort(plan.spanning_tree.begin(), plan.spanning_tree.end());
  std::sort(plan.dfacts_lines.begin(), plan.dfacts_lines.end());
  return plan;
}

namespace {

Eigen::VectorXd principal_cosines(const Eigen::MatrixXd& h, const Eigen::MatrixXd& h_prime) {
  if (h.rows() != h_prime.rows() || h.cols() != h_prime.cols())
    fail(ErrorCode::ShapeMismatch, "principal angle needs same-shape matrices");
  const auto orthonormal = [](const Eigen::MatrixXd& a) {
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(a);
    if (qr.rank() < a.cols()) fail(ErrorCode::RankDeficient, "matrix is column rank deficient");
    Eigen::HouseholderQR<Eigen::MatrixXd> hqr(a);
    return Eigen::MatrixXd(hqr.householderQ() * Eigen::MatrixXd::Identity(a.rows(), a.cols()));
  };
  const Eigen::MatrixXd q1 = orthonormal(h);
  const Eigen::MatrixXd q2 = orthonormal(h_prime);
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(q1.transpose() * q2);
  return svd.singularValues();
}

}  // namespace

double spa(const Eigen::MatrixXd& h, const Eigen::MatrixXd& h_prime) {
  const double cos_gamma = std::min(1.0, principal_cosines(h, h_prime).maxCoeff());
  return std::acos(cos_gamma);
}

double spa_largest(const Eigen::MatrixXd& h, const Eigen::MatrixXd& h_prime) {
  const double cos_gamma =
      std::min(1.0, std::max(-1.0, principal_cosines(h, h_prime).minCoeff()));
  return std::acos(cos_gamma);
}

Perturbation select_perturbation(const GridCase& grid, const DfactsPlan& plan, double eta,
                                 int n_candidates, Rng& rng,
                                 std::vector<double>* candidate_gammas) {
  if (n_candidates < 1) fail(ErrorCode::InvalidConfig, "need at least one candidate");
  if (!(eta >= 0.0 && eta < 1.0)) fail(ErrorCode::InvalidConfig, "eta must be in [0, 1)");

  const Eigen::MatrixXd h = build_measurement_model(grid).H;
  if (candidate_gammas) candidate_gammas->clear();

  // Candidates whose smallest angles agree within this tolerance are ranked
  // by the largest principal angle; see the header note on the degeneracy.
  constexpr double kGammaTie = 1e-6;

  Perturbation best;
  best.eta = eta;
  best.gamma = -1.0;
  best.gamma_largest = -1.0;
  for (int j = 0; j < n_candidates; ++j) {
    Perturbation cand;
    cand.eta = eta;
    for (int index : plan.dfacts_lines) {
      const double x = grid.branch_by_index(index).reactance;
      cand.delta_x[index] = rng.uniform(-eta * x, eta * x);
    }
    const Eigen::MatrixXd h_prime = build_measurement_model(apply_mtd(grid, cand)).H;
    cand.gamma = spa(h, h_prime);
    cand.gamma_largest = spa_largest(h, h_prime);
    if (candidate_gammas) candidate_gammas->push_back(cand.gamma);
    const bool wins = cand.gamma > best.gamma + kGammaTie ||
                      (cand.gamma > best.gamma - kGammaTie && cand.gamma_largest > best.gamma_largest);
    if (wins) best = std::move(cand);
  }
  return best;
}

GridCase apply_mtd(const GridCase& grid, const Perturbation& perturbation) {
  GridCase out = grid;
  for (const auto& [index, delta] : perturbation.delta_x) {
    Branch& br = out.branches[out.branch_pos(index)];
    if (std::abs(delta) > perturbation.eta * br.reactance * (1.0 + 1e-12))
      fail(ErrorCode::InvalidConfig, "perturbation on branch " + std::to_string(index) +
                                         " exceeds eta bound");
    br.reactance += delta;
    if (!(br.reactance > 0))
      fail(ErrorCode::NonpositiveReactance, "perturbation drives branch " + std::to_string(index) +
                                                " reactance nonpositive");
  }
  return out;
}

}  // namespace ccpaloc
