#include <doctest.h>

#include <cmath>

#include "ccpaloc/attacks.hpp"
#include "ccpaloc/estimation.hpp"
#include "ccpaloc/mtd.hpp"
#include "test_util.hpp"

using namespace ccpaloc;

namespace {

AttackScenario make_scenario(const GridCase& view, std::vector<int> outage, Variant variant,
                             Eigen::VectorXd c = {}) {
  AttackScenario s;
  s.attacker_view = view;
  s.outage_lines = std::move(outage);
  s.variant = variant;
  s.c = std::move(c);
  return s;
}

// True grid with a fixed reactance perturbation on two non-outaged lines,
// standing in for a defender that has reconfigured.
GridCase perturbed_ieee14(const GridCase& base) {
  Perturbation pert;
  pert.eta = 0.2;
  pert.delta_x = {{2, 0.15 * base.branch_by_index(2).reactance},
                  {10, -0.12 * base.branch_by_index(10).reactance}};
  return apply_mtd(base, pert);
}

}  // namespace

TEST_CASE("post-physical measurements with no outage reproduce the clean state") {
  const GridCase grid = test_util::load_ieee14();
  const InjectionVector loads = base_injections(grid);
  const MeasurementModel model = build_measurement_model(grid);
  const StateVector state = solve_dc(grid, loads);
  const PostOutage post = post_physical_measurements(grid, {}, loads);
  CHECK((post.z_p - model.H * state.theta).cwiseAbs().maxCoeff() == 0.0);
  CHECK((post.theta_p.theta - state.theta).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("triangle outage leaves the hand-solved radial flows") {
  const GridCase grid = test_util::make_triangle(0.1, 0.2, 0.3);
  const InjectionVector loads = base_injections(grid);  // (1.0, -0.4, -0.6)
  const PostOutage post = post_physical_measurements(grid, {2}, loads);
  Eigen::VectorXd expected(9);
  expected << 1.0, -0.4, -0.6,  // injections
      0.4, 0.0, 0.6,            // flows, the open line carries nothing
      -0.4, 0.0, -0.6;          // reverse flows
  CHECK((post.z_p - expected).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("measurement-change identity holds for every single-line outage") {
  const GridCase grid = test_util::load_ieee14();
  const MeasurementModel model = build_measurement_model(grid);
  Rng rng(31);
  for (int line = 1; line <= grid.n_branches(); ++line) {
    if (line == 14) continue;  // bridge
    const InjectionVector loads = sample_injections(grid, 0.8, 1.2, rng);
    const StateVector state = solve_dc(grid, loads);
    const Eigen::VectorXd z = model.H * state.theta;
    const PostOutage post = post_physical_measurements(grid, {line}, loads);
    const MeasurementModel model_p = build_measurement_model(apply_outage(grid, {line}));
    const Eigen::VectorXd delta_theta = post.theta_p.theta - state.theta;
    const Eigen::VectorXd reconstructed =
        z + model.H * delta_theta + (model_p.H - model.H) * post.theta_p.theta;
    CHECK((post.z_p - reconstructed).cwiseAbs().maxCoeff() < 1e-9);
  }
}

TEST_CASE("partial attack cancels the model-change term only") {
  const GridCase grid = test_util::load_ieee14();
  const MeasurementModel model = build_measurement_model(grid);
  const InjectionVector loads = base_injections(grid);

  // No outage: nothing to mask.
  const AttackScenario idle = make_scenario(grid, {}, Variant::Partial);
  CHECK(build_partial(idle, loads).cwiseAbs().maxCoeff() == 0.0);

  Rng rng(32);
  const AttackScenario scenario = make_scenario(grid, {3, 7}, Variant::Partial);
  const ObservedSample sample = observe(grid, scenario, loads, false, 0.01, rng, false);

  const StateVector state = solve_dc(grid, loads);
  const Eigen::VectorXd z = model.H * state.theta;
  const StateVector theta_p = solve_dc(apply_outage(grid, {3, 7}), loads);
  const Eigen::VectorXd expected = z + model.H * (theta_p.theta - state.theta);
  CHECK((sample.z - expected).cwiseAbs().maxCoeff() < 1e-9);

  // Stealthy against the residual test.
  CHECK(estimate(model, sample.z).residual_norm < 1e-9);

  // Labels follow the outage set.
  CHECK(sample.y[2] == 1);
  CHECK(sample.y[6] == 1);
  int positives = 0;
  for (auto v : sample.y) positives += v;
  CHECK(positives == 2);
}

TEST_CASE("extra attack reduces to partial when the distortion is zero") {
  const GridCase grid = test_util::load_ieee14();
  const InjectionVector loads = base_injections(grid);
  const auto partial = make_scenario(grid, {5}, Variant::Partial);
  const auto extra = make_scenario(grid, {5}, Variant::Extra, Eigen::VectorXd::Zero(13));
  CHECK((build_partial(partial, loads) - build_extra(extra, loads)).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("extra attack distorts the estimate by exactly c and stays stealthy") {
  const GridCase grid = test_util::load_ieee14();
  const MeasurementModel model = build_measurement_model(grid);
  const InjectionVector loads = base_injections(grid);
  Rng rng(33);
  const Eigen::VectorXd c = sample_distortion(13, 4, 0.1, rng);
  const AttackScenario scenario = make_scenario(grid, {5}, Variant::Extra, c);
  const ObservedSample sample = observe(grid, scenario, loads, false, 0.01, rng, false);

  const EstimationResult est = estimate(model, sample.z);
  CHECK(est.residual_norm < 1e-9);
  const StateVector theta_p = solve_dc(apply_outage(grid, {5}), loads);
  CHECK((est.theta_hat - (theta_p.theta + c)).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("full attack replays the pre-outage measurements without MTD") {
  const GridCase grid = test_util::load_ieee14();
  const MeasurementModel model = build_measurement_model(grid);
  const InjectionVector loads = base_injections(grid);
  const StateVector state = solve_dc(grid, loads);
  const Eigen::VectorXd z = model.H * state.theta;

  Rng rng(34);
  const AttackScenario scenario = make_scenario(grid, {3, 16}, Variant::Full);
  const ObservedSample sample = observe(grid, scenario, loads, false, 0.01, rng, false);
  CHECK((sample.z - z).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(estimate(model, sample.z).residual_norm < 1e-9);
}

TEST_CASE("full attack under stealthy noise alarms at the calibration rate") {
  const GridCase grid = test_util::load_ieee14();
  const MeasurementModel model = build_measurement_model(grid);
  Rng rng(35);
  const BddConfig bdd = calibrate_threshold(grid, model, 0.05, 2000, rng);
  int alarms = 0;
  const int trials = 1000;
  for (int k = 0; k < trials; ++k) {
    const InjectionVector loads = sample_injections(grid, 0.8, 1.2, rng);
    const AttackScenario scenario = make_scenario(grid, {1 + (k % 13)}, Variant::Full);
    if (scenario.outage_lines[0] == 14 % 14) {}  // lines 1..13 only, all non-bridge
    const ObservedSample sample = observe(grid, scenario, loads, true, 0.01, rng, false);
    if (detect(estimate(model, sample.z), bdd)) ++alarms;
  }
  CHECK(alarms > 0.02 * trials);
  CHECK(alarms < 0.09 * trials);
}

TEST_CASE("with MTD the full attack follows the stale-replay identity") {
  const GridCase base = test_util::load_ieee14();
  const GridCase truth = perturbed_ieee14(base);
  const InjectionVector loads = base_injections(base);
  Rng rng(36);
  const AttackScenario scenario = make_scenario(base, {5, 11}, Variant::Full);
  const ObservedSample sample = observe(truth, scenario, loads, false, 0.01, rng, true);
  CHECK(sample.meta.mtd_active);

  // Independent reconstruction: true post-outage measurements plus the stale
  // pre/post difference computed on the attacker's grid.
  const PostOutage true_post = post_physical_measurements(truth, {5, 11}, loads);
  const MeasurementModel stale = build_measurement_model(base);
  const Eigen::VectorXd z_stale = stale.H * solve_dc(base, loads).theta;
  const PostOutage stale_post = post_physical_measurements(base, {5, 11}, loads);
  const Eigen::VectorXd expected = true_post.z_p + z_stale - stale_post.z_p;
  CHECK((sample.z - expected).cwiseAbs().maxCoeff() < 1e-12);

  // The mismatch is visible to the residual test even without noise.
  const MeasurementModel truth_model = build_measurement_model(truth);
  CHECK(estimate(truth_model, sample.z).residual_norm > 1e-4);
}

TEST_CASE("with MTD the extra attack expands term by term") {
  const GridCase base = test_util::load_ieee14();
  const GridCase truth = perturbed_ieee14(base);
  const InjectionVector loads = base_injections(base);
  Rng rng(37);
  const Eigen::VectorXd c = sample_distortion(13, 4, 0.1, rng);
  const AttackScenario scenario = make_scenario(base, {3}, Variant::Extra, c);
  const ObservedSample sample = observe(truth, scenario, loads, false, 0.01, rng, true);

  // All terms rebuilt independently on both grids.
  const MeasurementModel h_true = build_measurement_model(truth);
  const MeasurementModel h_stale = build_measurement_model(base);
  const StateVector theta_true = solve_dc(truth, loads);
  const Eigen::VectorXd z_true = h_true.H * theta_true.theta;
  const PostOutage post_true = post_physical_measurements(truth, {3}, loads);
  const MeasurementModel h_true_p = build_measurement_model(apply_outage(truth, {3}));
  const PostOutage post_stale = post_physical_measurements(base, {3}, loads);
  const MeasurementModel h_stale_p = build_measurement_model(apply_outage(base, {3}));

  const Eigen::VectorXd expected =
      z_true + h_true.H * (post_true.theta_p.theta - theta_true.theta) +
      h_stale.H * c +
      (h_true_p.H - h_true.H) * post_true.theta_p.theta -
      (h_stale_p.H - h_stale.H) * post_stale.theta_p.theta;
  CHECK((sample.z - expected).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("model change is local to the outaged lines") {
  const GridCase grid = test_util::load_ieee14();
  const MeasurementModel before = build_measurement_model(grid);
  const MeasurementModel after = build_measurement_model(apply_outage(grid, {3, 16}));
  const Eigen::MatrixXd delta = after.H - before.H;

  const int n_bus = grid.n_buses();
  const int n_line = grid.n_branches();
  std::vector<bool> row_may_change(static_cast<std::size_t>(before.m()), false);
  for (int line : {3, 16}) {
    const Branch& br = grid.branch_by_index(line);
    row_may_change[static_cast<std::size_t>(grid.bus_pos(br.from_bus))] = true;
    row_may_change[static_cast<std::size_t>(grid.bus_pos(br.to_bus))] = true;
    row_may_change[static_cast<std::size_t>(n_bus + line - 1)] = true;
    row_may_change[static_cast<std::size_t>(n_bus + n_line + line - 1)] = true;
  }
  for (int r = 0; r < before.m(); ++r) {
    if (!row_may_change[static_cast<std::size_t>(r)])
      CHECK(delta.row(r).cwiseAbs().maxCoeff() == 0.0);
  }
  CHECK(delta.row(n_bus + 3 - 1).cwiseAbs().maxCoeff() > 0.0);
  CHECK(delta.row(n_bus + 16 - 1).cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("stealth holds for all three variants without MTD") {
  const GridCase grid = test_util::load_ieee14();
  const MeasurementModel model = build_measurement_model(grid);
  Rng rng(38);
  for (int round = 0; round < 25; ++round) {
    const InjectionVector loads = sample_injections(grid, 0.8, 1.2, rng);
    const int line = 1 + rng.uniform_int(0, 12);
    for (Variant variant : {Variant::Partial, Variant::Extra, Variant::Full}) {
      AttackScenario scenario = make_scenario(grid, {line}, variant);
      if (variant == Variant::Extra) scenario.c = sample_distortion(13, 4, 0.1, rng);
      const ObservedSample sample = observe(grid, scenario, loads, false, 0.01, rng, false);
      CHECK(estimate(model, sample.z).residual_norm < 1e-9);
    }
  }
}

TEST_CASE("islanding outages are refused end to end") {
  const GridCase grid = test_util::load_ieee14();
  const InjectionVector loads = base_injections(grid);
  CHECK_THROWS_AS(post_physical_measurements(grid, {14}, loads), Error);
  Rng rng(39);
  const AttackScenario scenario = make_scenario(grid, {14}, Variant::Partial);
  CHECK_THROWS_AS(observe(grid, scenario, loads, false, 0.01, rng, false), Error);
}

TEST_CASE("scenario serialization round-trips") {
  const GridCase grid = test_util::make_triangle();
  Rng rng(40);
  AttackScenario scenario = make_scenario(grid, {1, 3}, Variant::Extra,
                                          sample_distortion(2, 2, 0.1, rng));
  const AttackScenario back = scenario_from_json(scenario_to_json(scenario));
  CHECK(back.outage_lines == scenario.outage_lines);
  CHECK(back.variant == scenario.variant);
  CHECK((back.c - scenario.c).cwiseAbs().maxCoeff() == 0.0);
  CHECK(back.attacker_view.fingerprint() == scenario.attacker_view.fingerprint());
  CHECK_THROWS_AS(scenario_from_json("{]"), Error);
}

TEST_CASE("distortion sampler respects its bounds") {
  Rng rng(41);
  for (int round = 0; round < 50; ++round) {
    const Eigen::VectorXd c = sample_distortion(13, 4, 0.1, rng);
    CHECK(c.cwiseAbs().maxCoeff() <= 0.1);
    const int nonzero = static_cast<int>((c.array() != 0.0).count());
    CHECK(nonzero >= 1);
    CHECK(nonzero <= 4);
  }
}
