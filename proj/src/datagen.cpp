#include "ccpaloc/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace ccpaloc {

using nlohmann::json;

json GenConfig::to_json() const {
  return json{{"n_samples", n_samples},
              {"attack_mix", attack_mix},
              {"max_outage", max_outage},
              {"load_lo", load_lo},
              {"load_hi", load_hi},
              {"per_bus_loads", per_bus_loads},
              {"noise", noise},
              {"mtd_active", mtd_active},
              {"master_seed", master_seed},
              {"sigma", sigma},
              {"c_support_max", c_support_max},
              {"c_magnitude", c_magnitude}};
}

GenConfig GenConfig::from_json(const json& doc) {
  GenConfig cfg;
  try {
    cfg.n_samples = doc.at("n_samples").get<int>();
    cfg.attack_mix = doc.at("attack_mix").get<std::array<double, 3>>();
    cfg.max_outage = doc.at("max_outage").get<int>();
    cfg.load_lo = doc.at("load_lo").get<double>();
    cfg.load_hi = doc.at("load_hi").get<double>();
    cfg.per_bus_loads = doc.at("per_bus_loads").get<bool>();
    cfg.noise = doc.at("noise").get<bool>();
    cfg.mtd_active = doc.at("mtd_active").get<bool>();
    cfg.master_seed = doc.at("master_seed").get<std::uint64_t>();
    cfg.sigma = doc.at("sigma").get<double>();
    cfg.c_support_max = doc.at("c_support_max").get<int>();
    cfg.c_magnitude = doc.at("c_magnitude").get<double>();
  } catch (const json::exception& e) {
    fail(ErrorCode::SchemaMismatch, std::string("bad generation config: ") + e.what());
  }
  return cfg;
}

namespace {

void check_config(const GenConfig& cfg) {
  if (cfg.n_samples < 0) fail(ErrorCode::InvalidConfig, "negative sample count");
  if (cfg.max_outage < 1) fail(ErrorCode::InvalidConfig, "max_outage must be >= 1");
  double mix_sum = 0.0;
  for (double w : cfg.attack_mix) {
    if (w < 0) fail(ErrorCode::InvalidConfig, "attack mix weights must be nonnegative");
    mix_sum += w;
  }
  if (!(mix_sum > 0)) fail(ErrorCode::InvalidConfig, "attack mix weights sum to zero");
  if (!(cfg.load_lo <= cfg.load_hi)) fail(ErrorCode::InvalidConfig, "bad load range");
  if (!(cfg.sigma > 0)) fail(ErrorCode::InvalidConfig, "sigma must be positive");
}

Variant pick_variant(const GenConfig& cfg, Rng& rng) {
  const double total = cfg.attack_mix[0] + cfg.attack_mix[1] + cfg.attack_mix[2];
  const double u = rng.uniform() * total;
  if (u < cfg.attack_mix[0]) return Variant::Partial;
  if (u < cfg.attack_mix[0] + cfg.attack_mix[1]) return Variant::Extra;
  return Variant::Full;
}

// Uniform outage set over non-bridge lines, rejecting sets that island the
// grid (possible for multi-line outages even when each line alone is safe).
std::vector<int> sample_outage(const GridCase& grid, const std::vector<int>& candidates,
                               int max_outage, Rng& rng) {
  if (candidates.empty())
    fail(ErrorCode::ExhaustedResampling, "no non-bridge lines available for outage sampling");
  const int max_attempts = 1000;
  for (int attempt = 0; attempt < max_attempts; ++attempt) {
    const int count = std::min(rng.uniform_int(1, max_outage),
                               static_cast<int>(candidates.size()));
    std::vector<int> pool = candidates;
    std::vector<int> chosen;
    for (int i = 0; i < count; ++i) {
      const int j = rng.uniform_int(i, static_cast<int>(pool.size()) - 1);
      std::swap(pool[static_cast<std::size_t>(i)], pool[static_cast<std::size_t>(j)]);
      chosen.push_back(pool[static_cast<std::size_t>(i)]);
    }
    std::vector<int> positions;
    for (int index : chosen) positions.push_back(grid.branch_pos(index));
    if (grid.connected_without(positions)) {
      std::sort(chosen.begin(), chosen.end());
      return chosen;
    }
  }
  fail(ErrorCode::ExhaustedResampling, "could not sample a non-islanding outage set");
}

}  // namespace

Dataset generate_dataset(const GridCase& defender_grid, const GridCase& attacker_view,
                         const GenConfig& cfg) {
  check_config(cfg);
  defender_grid.validate();
  attacker_view.validate();
  if (defender_grid.n_branches() != attacker_view.n_branches() ||
      defender_grid.n_buses() != attacker_view.n_buses())
    fail(ErrorCode::ShapeMismatch, "defender and attacker grids must share the topology");

  const std::vector<int> bridges = defender_grid.bridge_lines();
  std::vector<int> candidates;
  for (int pos : defender_grid.in_service_positions()) {
    const int index = defender_grid.branches[pos].index;
    if (std::find(bridges.begin(), bridges.end(), index) == bridges.end())
      candidates.push_back(index);
  }

  const MeasurementModel attacker_model = build_measurement_model(attacker_view, cfg.sigma);
  const int n_state = attacker_model.n();

  Dataset ds;
  ds.samples.reserve(static_cast<std::size_t>(cfg.n_samples));
  for (int k = 0; k < cfg.n_samples; ++k) {
    const std::uint64_t seed_k = Rng::derive(cfg.master_seed, static_cast<std::uint64_t>(k));
    Rng rng(seed_k);

    AttackScenario scenario;
    scenario.attacker_view = attacker_view;
    scenario.variant = pick_variant(cfg, rng);
    const InjectionVector loads =
        cfg.per_bus_loads ? sample_injections(defender_grid, cfg.load_lo, cfg.load_hi, rng)
                          : sample_injections_global(defender_grid, cfg.load_lo, cfg.load_hi, rng);
    scenario.outage_lines = sample_outage(defender_grid, candidates, cfg.max_outage, rng);
    if (scenario.variant == Variant::Extra)
      scenario.c = sample_distortion(n_state, cfg.c_support_max, cfg.c_magnitude, rng);

    ds.samples.push_back(observe(defender_grid, scenario, loads, cfg.noise, cfg.sigma, rng,
                                 cfg.mtd_active, seed_k));
  }

  ds.manifest = json{{"schema", "ccpaloc.dataset.v1"},
                     {"config", cfg.to_json()},
                     {"grid_fingerprint", defender_grid.fingerprint()},
                     {"attacker_fingerprint", attacker_view.fingerprint()},
                     {"topology_id", "base"},
                     {"n_samples", cfg.n_samples},
                     {"m", defender_grid.n_buses() + 2 * defender_grid.n_branches()},
                     {"n_lines", defender_grid.n_branches()}};
  return ds;
}

Dataset generate_dataset(const GridCase& grid, const GenConfig& cfg) {
  return generate_dataset(grid, grid, cfg);
}

std::vector<Dataset> generate_meta_tasks(const GridCase& base_grid, int n_topologies,
                                         int n_per_topology, const GenConfig& cfg,
                                         double topo_lo, double topo_hi) {
  if (n_topologies < 1 || n_per_topology < 1)
    fail(ErrorCode::InvalidConfig, "need at least one topology and one sample per topology");
  if (!(topo_lo <= topo_hi) || !(topo_lo > 0))
    fail(ErrorCode::InvalidConfig, "bad topology scaling range");
  base_grid.validate();

  std::vector<Dataset> tasks;
  tasks.reserve(static_cast<std::size_t>(n_topologies));
  for (int t = 0; t < n_topologies; ++t) {
    Rng topo_rng(Rng::derive(cfg.master_seed, 0x746F706FULL + static_cast<std::uint64_t>(t)));
    GridCase topo = base_grid;
    for (Branch& br : topo.branches) br.reactance *= topo_rng.uniform(topo_lo, topo_hi);

    GenConfig task_cfg = cfg;
    task_cfg.n_samples = n_per_topology;
    task_cfg.master_seed = Rng::derive(cfg.master_seed, 0x7461736BULL + static_cast<std::uint64_t>(t));
    task_cfg.mtd_active = true;  // attacker view is stale relative to the task topology

    Dataset ds = generate_dataset(topo, base_grid, task_cfg);
    ds.manifest["topology_id"] = "topo-" + std::to_string(t);
    tasks.push_back(std::move(ds));
  }
  return tasks;
}

void Dataset::to_matrices(Eigen::MatrixXd& x, Eigen::MatrixXd& y) const {
  const int rows = static_cast<int>(samples.size());
  x.resize(rows, m());
  y.resize(rows, n_lines());
  for (int i = 0; i < rows; ++i) {
    x.row(i) = samples[static_cast<std::size_t>(i)].z.transpose();
    for (int l = 0; l < n_lines(); ++l)
      y(i, l) = samples[static_cast<std::size_t>(i)].y[static_cast<std::size_t>(l)];
  }
}

namespace {

std::string dataset_csv(const Dataset& ds) {
  std::string out;
  const int m = ds.m();
  const int l = ds.n_lines();
  for (int i = 0; i < m; ++i) out += "z_" + std::to_string(i + 1) + ",";
  for (int i = 0; i < l; ++i) out += "y_" + std::to_string(i + 1) + (i + 1 < l ? "," : "\n");
  char buf[64];
  for (const ObservedSample& s : ds.samples) {
    for (int i = 0; i < m; ++i) {
      std::snprintf(buf, sizeof(buf), "%.17g,", s.z(i));
      out += buf;
    }
    for (int i = 0; i < l; ++i) {
      out += s.y[static_cast<std::size_t>(i)] ? '1' : '0';
      out += (i + 1 < l) ? ',' : '\n';
    }
  }
  return out;
}

}  // namespace

void save_dataset(const Dataset& ds, const std::string& prefix) {
  const std::string csv = dataset_csv(ds);
  json manifest = ds.manifest;
  manifest["data_hash"] = fnv1a_hex(csv);

  std::ofstream csv_out(prefix + ".csv", std::ios::binary);
  if (!csv_out) fail(ErrorCode::IoError, "cannot write " + prefix + ".csv");
  csv_out << csv;
  std::ofstream man_out(prefix + ".manifest.json", std::ios::binary);
  if (!man_out) fail(ErrorCode::IoError, "cannot write " + prefix + ".manifest.json");
  man_out << manifest.dump(2) << "\n";
}

Dataset load_dataset(const std::string& prefix) {
  std::ifstream man_in(prefix + ".manifest.json", std::ios::binary);
  if (!man_in) fail(ErrorCode::IoError, "cannot open " + prefix + ".manifest.json");
  json manifest;
  try {
    man_in >> manifest;
  } catch (const json::exception& e) {
    fail(ErrorCode::SchemaMismatch, std::string("bad manifest: ") + e.what());
  }
  if (!manifest.contains("schema") || manifest["schema"] != "ccpaloc.dataset.v1")
    fail(ErrorCode::SchemaMismatch, "unsupported dataset schema");

  std::ifstream csv_in(prefix + ".csv", std::ios::binary);
  if (!csv_in) fail(ErrorCode::IoError, "cannot open " + prefix + ".csv");
  std::ostringstream ss;
  ss << csv_in.rdbuf();
  const std::string csv = ss.str();
  if (!manifest.contains("data_hash") || manifest["data_hash"] != fnv1a_hex(csv))
    fail(ErrorCode::HashMismatch, "dataset content does not match its manifest hash");

  const int m = manifest.at("m").get<int>();
  const int l = manifest.at("n_lines").get<int>();
  const GenConfig cfg = GenConfig::from_json(manifest.at("config"));

  // The CSV stores (z, y) only. The variant tag is recoverable when the
  // config is single-variant, which is how experiment datasets are generated.
  Variant variant = Variant::Partial;
  bool variant_known = false;
  for (int v = 0; v < 3; ++v) {
    if (cfg.attack_mix[static_cast<std::size_t>(v)] > 0) {
      if (variant_known) {
        variant_known = false;
        break;
      }
      variant = static_cast<Variant>(v);
      variant_known = true;
    }
  }

  Dataset ds;
  ds.manifest = manifest;
  std::istringstream lines(csv);
  std::string line;
  if (!std::getline(lines, line)) fail(ErrorCode::SchemaMismatch, "empty dataset file");
  int row = 0;
  while (std::getline(lines, line)) {
    if (line.empty()) continue;
    ObservedSample s;
    s.z.resize(m);
    s.y.resize(static_cast<std::size_t>(l));
    std::istringstream fields(line);
    std::string field;
    for (int i = 0; i < m; ++i) {
      if (!std::getline(fields, field, ',')) fail(ErrorCode::SchemaMismatch, "short row");
      s.z(i) = std::stod(field);
    }
    for (int i = 0; i < l; ++i) {
      if (!std::getline(fields, field, ',')) fail(ErrorCode::SchemaMismatch, "short row");
      s.y[static_cast<std::size_t>(i)] = field == "1" ? 1 : 0;
    }
    if (variant_known) s.meta.variant = variant;
    s.meta.mtd_active = cfg.mtd_active;
    s.meta.seed = Rng::derive(cfg.master_seed, static_cast<std::uint64_t>(row));
    ++row;
    ds.samples.push_back(std::move(s));
  }
  if (row != manifest.at("n_samples").get<int>())
    fail(ErrorCode::SchemaMismatch, "row count does not match manifest");
  return ds;
}

}  // namespace ccpaloc
