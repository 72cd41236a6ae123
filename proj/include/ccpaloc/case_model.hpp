#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "ccpaloc/error.hpp"

namespace ccpaloc {

struct Bus {
  int id = 0;
  bool is_slack = false;
  double load_p = 0.0;  // p.u.
};

struct Branch {
  int index = 0;  // 1-based, stable across outages
  int from_bus = 0;
  int to_bus = 0;
  double reactance = 0.0;  // p.u., > 0
  bool in_service = true;
};

struct Gen {
  int bus = 0;
  double gen_p = 0.0;  // p.u.
};

/// Grid description, per-unit on base_mva. Treated as immutable after
/// construction: topology changes (outages, reactance perturbations) return a
/// new GridCase, so instances can be shared freely across workers.
struct GridCase {
  double base_mva = 100.0;
  std::vector<Bus> buses;
  std::vector<Branch> branches;
  std::vector<Gen> gens;

  int n_buses() const { return static_cast<int>(buses.size()); }
  int n_branches() const { return static_cast<int>(branches.size()); }

  int slack_pos() const;
  int slack_bus_id() const { return buses[slack_pos()].id; }
  int bus_pos(int bus_id) const;          // throws DanglingBusReference
  int branch_pos(int index_1based) const; // throws InvalidOutage
  const Branch& branch_by_index(int index_1based) const { return branches[branch_pos(index_1based)]; }

  std::vector<int> in_service_positions() const;
  int n_in_service() const { return static_cast<int>(in_service_positions().size()); }

  /// Connectivity of the in-service branch graph.
  bool connected() const;
  /// Connectivity when the given branch positions are additionally removed.
  bool connected_without(const std::vector<int>& excluded_positions) const;
  /// 1-based indices of in-service branches whose removal disconnects the grid.
  std::vector<int> bridge_lines() const;

  /// Checks all structural invariants; throws on the first violation.
  void validate() const;

  /// Content hash over every field, hex string. Two grids with identical
  /// fields (bit-for-bit doubles) share a fingerprint.
  std::string fingerprint() const;
};

/// Parses either of the two accepted case formats, detected from the content:
/// a MATPOWER .m case (subset: baseMVA, bus, gen, branch) or the native JSON
/// format produced by to_native(). MW quantities are converted to p.u.
GridCase parse_case(const std::string& text);
GridCase parse_matpower(const std::string& text);
GridCase parse_native(const std::string& json_text);
std::string to_native(const GridCase& grid);
GridCase load_case_file(const std::string& path);

/// Branch-bus incidence over in-service branches: +1 at the from bus, -1 at
/// the to bus. `reduced` drops the slack row.
struct IncidencePair {
  Eigen::MatrixXd full;     // N x L_active
  Eigen::MatrixXd reduced;  // (N-1) x L_active
  std::vector<int> row_bus_ids;         // size N (full); reduced skips the slack entry
  std::vector<int> col_branch_indices;  // 1-based branch indices, size L_active
};
IncidencePair build_incidence(const GridCase& grid);

/// DC measurement model. Row ordering is fixed:
///   [bus injections (N rows); line flows (L rows); reverse line flows (L rows)]
/// where L counts every branch of the grid. Out-of-service branches keep their
/// rows (identically zero), so m = N + 2L is stable across outages and model
/// differences H_p - H are well-defined.
struct MeasurementModel {
  Eigen::MatrixXd H;        // m x n, n = N - 1 (slack angle fixed at zero)
  Eigen::VectorXd sigma;    // per-channel noise std, length m
  Eigen::VectorXd weights;  // diagonal of W = diag(sigma^-2)
  int n_buses = 0;
  int n_lines = 0;

  int m() const { return n_buses + 2 * n_lines; }
  int n() const { return n_buses - 1; }
};

MeasurementModel build_measurement_model(const GridCase& grid, double sigma = 0.01);
MeasurementModel build_measurement_model(const GridCase& grid, const Eigen::VectorXd& sigma);

/// FNV-1a 64-bit content hash, hex-encoded. Used for grid fingerprints and
/// dataset integrity checks.
std::string fnv1a_hex(const std::string& bytes);

}  // namespace ccpaloc
