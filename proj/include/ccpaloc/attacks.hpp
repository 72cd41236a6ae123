#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "ccpaloc/case_model.hpp"
#include "ccpaloc/powerflow.hpp"
#include "ccpaloc/rng.hpp"

namespace ccpaloc {

/// The three coordinated attack variants, by how much of the physical
/// disturbance the injected false data hides:
///   Partial - cancels only the model-change term, leaving the state shift.
///   Extra   - Partial plus a stealthy random estimation distortion H c.
///   Full    - replays the pre-outage measurements exactly.
enum class Variant { Partial, Extra, Full };

const char* to_string(Variant v);
Variant variant_from_string(const std::string& s);

/// One attack instance. attacker_view is the grid the attacker believes in;
/// with moving-target defense active it is the stale pre-perturbation grid.
struct AttackScenario {
  std::vector<int> outage_lines;  // 1-based branch indices, non-islanding
  Variant variant = Variant::Partial;
  Eigen::VectorXd c;              // estimation distortion, length N-1 (Extra only)
  GridCase attacker_view;
};

std::string scenario_to_json(const AttackScenario& scenario);
AttackScenario scenario_from_json(const std::string& text);

struct PostOutage {
  Eigen::VectorXd z_p;   // noiseless post-outage measurements, length m
  StateVector theta_p;   // post-outage state
};

/// Solves the DC flow on the outaged grid and evaluates the post-outage
/// measurement model. `sigma` only parameterizes the model's noise channel
/// descriptor; z_p itself is noiseless.
PostOutage post_physical_measurements(const GridCase& grid, const std::vector<int>& outage,
                                      const InjectionVector& loads, double sigma = 0.01);

/// Attack vectors, all computed from attacker_view quantities only.
Eigen::VectorXd build_partial(const AttackScenario& scenario, const InjectionVector& loads);
Eigen::VectorXd build_extra(const AttackScenario& scenario, const InjectionVector& loads);
Eigen::VectorXd build_full(const AttackScenario& scenario, const InjectionVector& loads);
Eigen::VectorXd build_attack(const AttackScenario& scenario, const InjectionVector& loads);

/// Draws the sparse estimation distortion for an Extra attack: support size
/// uniform in {1..support_max}, entries uniform in [-magnitude, magnitude].
Eigen::VectorXd sample_distortion(int n, int support_max, double magnitude, Rng& rng);

struct SampleMeta {
  Variant variant = Variant::Partial;
  bool mtd_active = false;
  std::uint64_t seed = 0;
};

/// One labeled observation: measurements the operator records, and the
/// indicator of which lines are physically out.
struct ObservedSample {
  Eigen::VectorXd z;         // length m
  std::vector<std::uint8_t> y;  // length L, y_l = 1 iff line l in outage
  SampleMeta meta;
};

/// Defender-side observation: true post-outage measurements on true_grid plus
/// the attack vector built from the (possibly stale) attacker_view, plus
/// optional sensor noise. Noise is applied once, here.
ObservedSample observe(const GridCase& true_grid, const AttackScenario& scenario,
                       const InjectionVector& loads, bool noisy, double sigma, Rng& rng,
                       bool mtd_active, std::uint64_t seed_tag = 0);

}  // namespace ccpaloc
