#include "ccpaloc/attacks.hpp"

#include <algorithm>
#include <numeric>

#include <nlohmann/json.hpp>

namespace ccpaloc {

using nlohmann::json;

const char* to_string(Variant v) {
  switch (v) {
    case Variant::Partial: return "partial";
    case Variant::Extra: return "extra";
    case Variant::Full: return "full";
  }
  return "?";
}

Variant variant_from_string(const std::string& s) {
  if (s == "partial") return Variant::Partial;
  if (s == "extra") return Variant::Extra;
  if (s == "full") return Variant::Full;
  fail(ErrorCode::InvalidConfig, "unknown attack variant '" + s + "'");
}

std::string scenario_to_json(const AttackScenario& scenario) {
  json doc;
  doc["outage_lines"] = scenario.outage_lines;
  doc["variant"] = to_string(scenario.variant);
  doc["c"] = std::vector<double>(scenario.c.data(), scenario.c.data() + scenario.c.size());
  doc["attacker_view"] = json::parse(to_native(scenario.attacker_view));
  return doc.dump(2);
}

AttackScenario scenario_from_json(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    fail(ErrorCode::SchemaMismatch, std::string("invalid scenario JSON: ") + e.what());
  }
  try {
    AttackScenario s;
    s.outage_lines = doc.at("outage_lines").get<std::vector<int>>();
    s.variant = variant_from_string(doc.at("variant").get<std::string>());
    const auto c = doc.at("c").get<std::vector<double>>();
    s.c = Eigen::Map<const Eigen::VectorXd>(c.data(), static_cast<Eigen::Index>(c.size()));
    s.attacker_view = parse_native(doc.at("attacker_view").dump());
    return s;
  } catch (const json::exception& e) {
    fail(ErrorCode::SchemaMismatch, std::string("bad scenario schema: ") + e.what());
  }
}

PostOutage post_physical_measurements(const GridCase& grid, const std::vector<int>& outage,
                                      const InjectionVector& loads, double sigma) {
  const GridCase outaged = apply_outage(grid, outage);
  const MeasurementModel model_p = build_measurement_model(outaged, sigma);
  StateVector theta_p = solve_dc(outaged, loads);
  Eigen::VectorXd z_p = model_p.H * theta_p.theta;
  return PostOutage{std::move(z_p), std::move(theta_p)};
}

namespace {

// Model-change term dH theta_p on the attacker's grid; shared by the partial
// and extra constructions.
Eigen::VectorXd masking_vector(const AttackScenario& scenario, const InjectionVector& loads) {
  const MeasurementModel before = build_measurement_model(scenario.attacker_view);
  const GridCase outaged = apply_outage(scenario.attacker_view, scenario.outage_lines);
  const MeasurementModel after = build_measurement_model(outaged);
  const StateVector theta_p = solve_dc(outaged, loads);
  return -(after.H - before.H) * theta_p.theta;
}

}  // namespace

Eigen::VectorXd build_partial(const AttackScenario& scenario, const InjectionVector& loads) {
  return masking_vector(scenario, loads);
}

Eigen::VectorXd build_extra(const AttackScenario& scenario, const InjectionVector& loads) {
  const MeasurementModel model = build_measurement_model(scenario.attacker_view);
  if (scenario.c.size() != model.n())
    fail(ErrorCode::ShapeMismatch, "distortion length != N-1");
  return masking_vector(scenario, loads) + model.H * scenario.c;
}

Eigen::VectorXd build_full(const AttackScenario& scenario, const InjectionVector& loads) {
  const MeasurementModel model = build_measurement_model(scenario.attacker_view);
  const StateVector theta = solve_dc(scenario.attacker_view, loads);
  const Eigen::VectorXd z = model.H * theta.theta;
  const PostOutage post = post_physical_measurements(scenario.attacker_view, scenario.outage_lines, loads);
  return z - post.z_p;
}

Eigen::VectorXd build_attack(const AttackScenario& scenario, const InjectionVector& loads) {
  switch (scenario.variant) {
    case Variant::Partial: return build_partial(scenario, loads);
    case Variant::Extra: return build_extra(scenario, loads);
    case Variant::Full: return build_full(scenario, loads);
  }
  fail(ErrorCode::InvalidConfig, "bad variant");
}

Eigen::VectorXd sample_distortion(int n, int support_max, double magnitude, Rng& rng) {
  if (n < 1 || support_max < 1) fail(ErrorCode::InvalidConfig, "bad distortion parameters");
  const int support = rng.uniform_int(1, std::min(support_max, n));
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  // Partial Fisher-Yates: the first `support` entries are the support set.
  for (int i = 0; i < support; ++i) {
    const int j = rng.uniform_int(i, n - 1);
    std::swap(order[i], order[j]);
  }
  Eigen::VectorXd c = Eigen::VectorXd::Zero(n);
  for (int i = 0; i < support; ++i) c(order[i]) = rng.uniform(-magnitude, magnitude);
  return c;
}

ObservedSample observe(const GridCase& true_grid, const AttackScenario& scenario,
                       const InjectionVector& loads, bool noisy, double sigma, Rng& rng,
                       bool mtd_active, std::uint64_t seed_tag) {
  const PostOutage post = post_physical_measurements(true_grid, scenario.outage_lines, loads, sigma);
  Eigen::VectorXd z = post.z_p + build_attack(scenario, loads);
  if (noisy) {
    for (int i = 0; i < z.size(); ++i) z(i) += sigma * rng.normal();
  }
  ObservedSample sample;
  sample.z = std::move(z);
  sample.y.assign(static_cast<std::size_t>(true_grid.n_branches()), 0);
  for (int index : scenario.outage_lines) sample.y[static_cast<std::size_t>(index - 1)] = 1;
  sample.meta = SampleMeta{scenario.variant, mtd_active, seed_tag};
  return sample;
}

}  // namespace ccpaloc
