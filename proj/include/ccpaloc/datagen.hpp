#pragma once

#include <Eigen/Dense>
#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ccpaloc/attacks.hpp"
#include "ccpaloc/case_model.hpp"

namespace ccpaloc {

/// Scenario sampling configuration. Every sample's randomness is derived from
/// (master_seed, sample index), so generation order does not matter.
struct GenConfig {
  int n_samples = 1000;
  std::array<double, 3> attack_mix{1.0, 0.0, 0.0};  // weights for partial/extra/full
  int max_outage = 2;
  double load_lo = 0.8;
  double load_hi = 1.2;
  bool per_bus_loads = false;  // default: one load factor per scenario
  bool noise = true;
  bool mtd_active = false;  // recorded in samples/manifest; the caller supplies the grids
  std::uint64_t master_seed = 0;
  double sigma = 0.01;       // sensor noise std, p.u.
  int c_support_max = 4;     // Extra distortion support bound
  double c_magnitude = 0.1;  // Extra distortion entry bound, radians

  nlohmann::json to_json() const;
  static GenConfig from_json(const nlohmann::json& doc);
};

struct Dataset {
  std::vector<ObservedSample> samples;
  nlohmann::json manifest;

  int m() const { return samples.empty() ? 0 : static_cast<int>(samples[0].z.size()); }
  int n_lines() const { return samples.empty() ? 0 : static_cast<int>(samples[0].y.size()); }

  /// Row-per-sample matrices: X is n_samples x m, Y is n_samples x L.
  void to_matrices(Eigen::MatrixXd& x, Eigen::MatrixXd& y) const;
};

/// Labeled attack observations. defender_grid is the grid measurements truly
/// come from (post-MTD when MTD is active); attacker_view is what the attack
/// vectors are computed from (the stale grid under MTD).
Dataset generate_dataset(const GridCase& defender_grid, const GridCase& attacker_view,
                         const GenConfig& cfg);
Dataset generate_dataset(const GridCase& grid, const GenConfig& cfg);

/// Task family for meta-learning: each task rescales every line reactance by
/// an i.i.d. uniform factor in [topo_lo, topo_hi] and generates a dataset on
/// that topology, with the unmodified base grid as the attacker view.
std::vector<Dataset> generate_meta_tasks(const GridCase& base_grid, int n_topologies,
                                         int n_per_topology, const GenConfig& cfg,
                                         double topo_lo = 0.8, double topo_hi = 1.2);

/// Dataset on disk: <prefix>.csv (header z_1..z_m,y_1..y_L) plus
/// <prefix>.manifest.json carrying the config, grid fingerprints and a
/// content hash of the CSV.
void save_dataset(const Dataset& ds, const std::string& prefix);
Dataset load_dataset(const std::string& prefix);

}  // namespace ccpaloc
