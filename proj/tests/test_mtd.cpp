#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "ccpaloc/attacks.hpp"
#include "ccpaloc/estimation.hpp"
#include "ccpaloc/mtd.hpp"
#include "test_util.hpp"

using namespace ccpaloc;

namespace {

bool is_spanning_tree(const GridCase& grid, const std::vector<int>& lines) {
  if (static_cast<int>(lines.size()) != grid.n_buses() - 1) return false;
  std::vector<int> parent(static_cast<std::size_t>(grid.n_buses()));
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](int x) {
    while (parent[static_cast<std::size_t>(x)] != x) x = parent[static_cast<std::size_t>(x)];
    return x;
  };
  for (int index : lines) {
    const Branch& br = grid.branch_by_index(index);
    const int a = find(grid.bus_pos(br.from_bus));
    const int b = find(grid.bus_pos(br.to_bus));
    if (a == b) return false;  // cycle
    parent[static_cast<std::size_t>(a)] = b;
  }
  return true;
}

}  // namespace

TEST_CASE("ieee14 placement puts devices on the seven chord lines") {
  const GridCase grid = test_util::load_ieee14();
  const DfactsPlan plan = place_dfacts(grid);
  CHECK(plan.dfacts_lines.size() == 7);  // L - (N-1) = 20 - 13
  CHECK(plan.spanning_tree.size() == 13);
  CHECK(is_spanning_tree(grid, plan.spanning_tree));

  // Deterministic minimum spanning tree under reactance weights.
  CHECK(plan.dfacts_lines == std::vector<int>{2, 3, 4, 9, 10, 12, 20});

  std::set<int> all;
  all.insert(plan.dfacts_lines.begin(), plan.dfacts_lines.end());
  all.insert(plan.spanning_tree.begin(), plan.spanning_tree.end());
  CHECK(all.size() == 20);
}

TEST_CASE("tree-shaped grids need no devices") {
  GridCase grid;
  grid.base_mva = 100.0;
  grid.buses = {{1, true, 0.0}, {2, false, 0.1}, {3, false, 0.1}, {4, false, 0.1}};
  grid.branches = {{1, 1, 2, 0.1, true}, {2, 2, 3, 0.2, true}, {3, 3, 4, 0.3, true}};
  grid.validate();
  const DfactsPlan plan = place_dfacts(grid);
  CHECK(plan.dfacts_lines.empty());
  CHECK(plan.spanning_tree == std::vector<int>{1, 2, 3});
}

TEST_CASE("triangle placement picks the largest-reactance line") {
  const DfactsPlan plan = place_dfacts(test_util::make_triangle(0.1, 0.2, 0.3));
  CHECK(plan.dfacts_lines == std::vector<int>{3});
}

TEST_CASE("plan invariants hold on random connected grids") {
  Rng rng(77);
  for (int round = 0; round < 20; ++round) {
    const GridCase grid =
        test_util::make_random_connected_grid(rng.uniform_int(3, 14), rng.uniform_int(0, 8), rng);
    const DfactsPlan plan = place_dfacts(grid);
    CHECK(static_cast<int>(plan.spanning_tree.size()) == grid.n_buses() - 1);
    CHECK(plan.dfacts_lines.size() + plan.spanning_tree.size() ==
          static_cast<std::size_t>(grid.n_branches()));
    CHECK(is_spanning_tree(grid, plan.spanning_tree));
    std::set<int> overlap;
    std::set_intersection(plan.dfacts_lines.begin(), plan.dfacts_lines.end(),
                          plan.spanning_tree.begin(), plan.spanning_tree.end(),
                          std::inserter(overlap, overlap.begin()));
    CHECK(overlap.empty());
  }
}

TEST_CASE("identical and equivalent column spaces have zero angle") {
  const GridCase grid = test_util::load_ieee14();
  const Eigen::MatrixXd h = build_measurement_model(grid).H;
  CHECK(spa(h, h) < 1e-7);

  Rng rng(78);
  Eigen::MatrixXd mix(13, 13);
  for (int i = 0; i < 13; ++i)
    for (int j = 0; j < 13; ++j) mix(i, j) = rng.uniform(-1.0, 1.0);
  mix += 5.0 * Eigen::MatrixXd::Identity(13, 13);  // comfortably invertible
  CHECK(spa(h, h * mix) < 1e-6);
}

TEST_CASE("two-plane toy matches the hand-computed angles") {
  const double alpha = 0.3, beta = 0.7;
  Eigen::MatrixXd u = Eigen::MatrixXd::Zero(6, 2);
  u(0, 0) = 1.0;
  u(1, 1) = 1.0;
  Eigen::MatrixXd v = Eigen::MatrixXd::Zero(6, 2);
  v(0, 0) = std::cos(alpha);
  v(2, 0) = std::sin(alpha);
  v(1, 1) = std::cos(beta);
  v(3, 1) = std::sin(beta);
  CHECK(spa(u, v) == doctest::Approx(alpha).epsilon(1e-9));
  CHECK(spa_largest(u, v) == doctest::Approx(beta).epsilon(1e-9));
}

TEST_CASE("principal angles are symmetric, bounded, and scale-invariant") {
  Rng rng(79);
  for (int round = 0; round < 10; ++round) {
    Eigen::MatrixXd a(10, 3), b(10, 3);
    for (int i = 0; i < 10; ++i)
      for (int j = 0; j < 3; ++j) {
        a(i, j) = rng.uniform(-1.0, 1.0);
        b(i, j) = rng.uniform(-1.0, 1.0);
      }
    const double ab = spa(a, b);
    CHECK(std::abs(ab - spa(b, a)) < 1e-10);
    CHECK(ab >= 0.0);
    CHECK(ab <= std::acos(-1.0) / 2.0 + 1e-12);

    Eigen::VectorXd scale(3);
    for (int j = 0; j < 3; ++j) scale(j) = (j % 2 ? -1.0 : 1.0) * rng.uniform(0.1, 5.0);
    CHECK(std::abs(spa(a, b * scale.asDiagonal()) - ab) < 1e-9);
    CHECK(std::abs(spa(a * scale.asDiagonal(), b) - ab) < 1e-9);
  }
}

TEST_CASE("rank-deficient inputs are rejected") {
  Eigen::MatrixXd a(5, 2);
  a.col(0) << 1, 2, 3, 4, 5;
  a.col(1) = 3.0 * a.col(0);
  CHECK_THROWS_AS(spa(a, a), Error);
  Eigen::MatrixXd b(5, 3);
  CHECK_THROWS_AS(spa(a, b), Error);
}

TEST_CASE("zero-eta search returns the identity perturbation") {
  const GridCase grid = test_util::load_ieee14();
  const DfactsPlan plan = place_dfacts(grid);
  Rng rng(80);
  const Perturbation pert = select_perturbation(grid, plan, 0.0, 5, rng);
  CHECK(pert.gamma < 1e-7);
  for (const auto& [line, delta] : pert.delta_x) CHECK(delta == 0.0);
  CHECK(apply_mtd(grid, pert).fingerprint() == grid.fingerprint());
}

TEST_CASE("search returns the best candidate it evaluated") {
  const GridCase grid = test_util::load_ieee14();
  const DfactsPlan plan = place_dfacts(grid);
  Rng rng(81);
  std::vector<double> gammas;
  const Perturbation pert = select_perturbation(grid, plan, 0.2, 40, rng, &gammas);
  REQUIRE(gammas.size() == 40);
  // Within the documented tie tolerance of the maximum.
  CHECK(pert.gamma >= *std::max_element(gammas.begin(), gammas.end()) - 1e-6);
  for (const auto& [line, delta] : pert.delta_x) {
    const double x = grid.branch_by_index(line).reactance;
    CHECK(std::abs(delta) <= 0.2 * x);
    CHECK(x + delta > 0.0);
  }
  CHECK(pert.delta_x.size() == 7);
}

TEST_CASE("the smallest angle is structurally zero unless enough lines move") {
  // The stacked flow maps [D A^T, D' A^T] have at most L independent rows, so
  // whenever L < 2(N-1) the two column spaces intersect and the smallest
  // principal angle is exactly zero, no matter which lines are perturbed.
  // IEEE-14 has L = 20 < 26: every candidate collapses. The largest angle
  // stays informative.
  const GridCase grid = test_util::load_ieee14();
  const DfactsPlan plan = place_dfacts(grid);
  Rng rng(82);
  std::vector<double> gammas;
  const Perturbation pert = select_perturbation(grid, plan, 0.2, 30, rng, &gammas);
  for (double g : gammas) CHECK(g < 1e-6);
  CHECK(pert.gamma_largest > 1e-3);

  // A complete graph on four buses has L = 6 = 2(N-1). Perturbing every line
  // separates the spaces; perturbing only a spanning tree does not.
  GridCase k4;
  k4.base_mva = 100.0;
  k4.buses = {{1, true, 0.0}, {2, false, 0.1}, {3, false, 0.1}, {4, false, 0.1}};
  k4.branches = {{1, 1, 2, 0.1, true},  {2, 1, 3, 0.15, true}, {3, 1, 4, 0.2, true},
                 {4, 2, 3, 0.25, true}, {5, 2, 4, 0.3, true},  {6, 3, 4, 0.35, true}};
  k4.validate();
  const Eigen::MatrixXd h4 = build_measurement_model(k4).H;

  Perturbation all_lines;
  all_lines.eta = 0.2;
  all_lines.delta_x = {{1, 0.01}, {2, -0.02}, {3, 0.025}, {4, 0.03}, {5, -0.04}, {6, 0.05}};
  CHECK(spa(h4, build_measurement_model(apply_mtd(k4, all_lines)).H) > 1e-4);

  Perturbation tree_only;
  tree_only.eta = 0.2;
  tree_only.delta_x = {{1, 0.01}, {2, -0.02}, {3, 0.025}};
  CHECK(spa(h4, build_measurement_model(apply_mtd(k4, tree_only)).H) < 1e-6);
}

TEST_CASE("applying a perturbation changes exactly the perturbed reactances") {
  const GridCase grid = test_util::load_ieee14();
  Perturbation pert;
  pert.eta = 0.2;
  pert.delta_x = {{2, 0.01}, {9, -0.05}};
  const GridCase moved = apply_mtd(grid, pert);
  CHECK(moved.branch_by_index(2).reactance ==
        doctest::Approx(grid.branch_by_index(2).reactance + 0.01).epsilon(1e-15));
  CHECK(moved.branch_by_index(9).reactance ==
        doctest::Approx(grid.branch_by_index(9).reactance - 0.05).epsilon(1e-15));
  for (int l = 1; l <= 20; ++l) {
    if (l == 2 || l == 9) continue;
    CHECK(moved.branch_by_index(l).reactance == grid.branch_by_index(l).reactance);
  }

  // Model rows outside the perturbed lines' flow rows and their endpoint
  // injection rows are untouched.
  const Eigen::MatrixXd delta =
      build_measurement_model(moved).H - build_measurement_model(grid).H;
  std::set<int> allowed;
  for (int line : {2, 9}) {
    const Branch& br = grid.branch_by_index(line);
    allowed.insert(grid.bus_pos(br.from_bus));
    allowed.insert(grid.bus_pos(br.to_bus));
    allowed.insert(14 + line - 1);
    allowed.insert(14 + 20 + line - 1);
  }
  for (int r = 0; r < delta.rows(); ++r) {
    if (!allowed.count(r))
      CHECK(delta.row(r).cwiseAbs().maxCoeff() == 0.0);
    }
  CHECK(delta.row(14 + 1).cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("perturbations that violate their own bounds are rejected") {
  const GridCase grid = test_util::load_ieee14();
  Perturbation outside;
  outside.eta = 0.1;
  outside.delta_x = {{2, 0.5 * grid.branch_by_index(2).reactance}};
  CHECK_THROWS_AS(apply_mtd(grid, outside), Error);

  Perturbation nonpositive;
  nonpositive.eta = 1.0;
  nonpositive.delta_x = {{2, -grid.branch_by_index(2).reactance}};
  CHECK_THROWS_AS(apply_mtd(grid, nonpositive), Error);
  try {
    apply_mtd(grid, nonpositive);
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::NonpositiveReactance);
  }
}

TEST_CASE("attack exposure grows with the subspace rotation") {
  const GridCase base = test_util::load_ieee14();
  const DfactsPlan plan = place_dfacts(base);
  const MeasurementModel base_model = build_measurement_model(base);
  Rng rng(84);

  std::vector<double> rotation, exposure;
  for (int cand = 0; cand < 16; ++cand) {
    Perturbation pert;
    pert.eta = 0.2;
    for (int index : plan.dfacts_lines) {
      const double x = base.branch_by_index(index).reactance;
      pert.delta_x[index] = rng.uniform(-0.2 * x, 0.2 * x);
    }
    const GridCase truth = apply_mtd(base, pert);
    const MeasurementModel truth_model = build_measurement_model(truth);
    rotation.push_back(spa_largest(base_model.H, truth_model.H));

    Rng scen_rng(4242);  // same scenario batch for every candidate
    double mean_residual = 0.0;
    const int scenarios = 40;
    for (int k = 0; k < scenarios; ++k) {
      const InjectionVector loads = sample_injections(truth, 0.8, 1.2, scen_rng);
      AttackScenario scenario;
      scenario.attacker_view = base;
      scenario.outage_lines = {1 + scen_rng.uniform_int(0, 12)};
      scenario.variant = Variant::Full;
      const ObservedSample sample =
          observe(truth, scenario, loads, false, 0.01, scen_rng, true);
      mean_residual += estimate(truth_model, sample.z).residual_norm;
    }
    exposure.push_back(mean_residual / scenarios);
  }

  // Spearman rank correlation between rotation and exposure.
  auto ranks = [](const std::vector<double>& v) {
    std::vector<int> idx(v.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](int a, int b) { return v[static_cast<std::size_t>(a)] < v[static_cast<std::size_t>(b)]; });
    std::vector<double> r(v.size());
    for (std::size_t i = 0; i < idx.size(); ++i) r[static_cast<std::size_t>(idx[i])] = static_cast<double>(i);
    return r;
  };
  const std::vector<double> ra = ranks(rotation), rb = ranks(exposure);
  double num = 0.0;
  const double n = static_cast<double>(ra.size());
  for (std::size_t i = 0; i < ra.size(); ++i) {
    const double d = ra[i] - rb[i];
    num += d * d;
  }
  const double spearman = 1.0 - 6.0 * num / (n * (n * n - 1.0));
  CHECK(spearman > 0.4);
}

TEST_CASE("mean full-attack residual under MTD exceeds the clean noise floor") {
  const GridCase base = test_util::load_ieee14();
  const DfactsPlan plan = place_dfacts(base);
  Rng rng(85);
  const Perturbation pert = select_perturbation(base, plan, 0.2, 60, rng);
  const GridCase truth = apply_mtd(base, pert);
  const MeasurementModel truth_model = build_measurement_model(truth);

  double attacked = 0.0, clean = 0.0;
  const int trials = 400;
  for (int k = 0; k < trials; ++k) {
    const InjectionVector loads = sample_injections(truth, 0.8, 1.2, rng);
    AttackScenario scenario;
    scenario.attacker_view = base;
    scenario.outage_lines = {1 + rng.uniform_int(0, 12)};
    scenario.variant = Variant::Full;
    const ObservedSample sample = observe(truth, scenario, loads, true, 0.01, rng, true);
    attacked += estimate(truth_model, sample.z).residual_norm;
    const StateVector state = solve_dc(truth, loads);
    const Eigen::VectorXd z = measure(truth_model, state, true, &rng);
    clean += estimate(truth_model, z).residual_norm;
  }
  CHECK(attacked / trials > clean / trials);
}
