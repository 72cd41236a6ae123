#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ccpaloc/attacks.hpp"
#include "ccpaloc/case_model.hpp"
#include "ccpaloc/meta.hpp"
#include "ccpaloc/mtd.hpp"
#include "ccpaloc/neuralnet.hpp"

namespace ccpaloc {

struct MetricCounts {
  long tp = 0, fp = 0, fn = 0, tn = 0;
};

/// Micro-averaged detection quality: TP/FP/FN/TN are counted over every
/// (sample, line) pair after thresholding, then turned into rates.
struct MetricsReport {
  double recall_pct = 0.0;
  double precision_pct = 0.0;
  MetricCounts counts;
  std::vector<MetricCounts> per_line;
  bool precision_degenerate = false;  // no positive predictions
  bool recall_degenerate = false;     // no positive labels
  nlohmann::json config_echo;
  std::vector<std::uint64_t> seeds;

  nlohmann::json to_json() const;
};

MetricsReport metrics(const Eigen::MatrixXd& probs, const Eigen::MatrixXd& labels,
                      double threshold);

/// The three defense postures compared in the study.
enum class Approach { Cnn, CnnMtd, CnnMamlMtd };
const char* to_string(Approach a);
Approach approach_from_string(const std::string& s);

/// Everything one experiment cell needs; also the CLI's run configuration.
struct ExperimentConfig {
  CnnArch arch;
  int n_train = 10000;
  int n_test = 1000;
  int max_outage = 2;
  double load_lo = 0.8;
  double load_hi = 1.2;
  bool per_bus_loads = false;
  double sigma = 0.01;   // estimator noise model; also the sensor std when noise is on
  bool noise = false;    // experiment datasets use simulator-exact measurements
  int c_support_max = 4;
  double c_magnitude = 0.1;
  double mtd_eta = 0.2;
  int mtd_candidates = 200;
  int meta_topologies = 100;
  int meta_per_topology = 1000;
  TrainConfig train;
  MetaConfig meta;
  int fine_tune_epochs = 0;  // 0: use train.epochs
  std::uint64_t seed = 1;

  nlohmann::json to_json() const;
  /// Strict: unknown keys are rejected; missing keys keep defaults.
  static ExperimentConfig from_json(const nlohmann::json& doc);
};

struct ExperimentResult {
  MetricsReport report;
  double mtd_gamma = 0.0;  // smallest principal angle of the applied perturbation
  std::vector<double> train_loss;
  nlohmann::json provenance;
};

/// Runs one full pipeline cell: MTD reconfiguration (when the approach uses
/// it), dataset generation, training or fine-tuning, and held-out evaluation.
/// Data and MTD seeds depend only on (config seed, variant), so approaches
/// are compared on identical data.
ExperimentResult run_experiment(const GridCase& base_grid, Approach approach, Variant variant,
                                const ExperimentConfig& cfg, const MetaInit* shared_init = nullptr);

/// Meta-pretraining for the given variant's task family, as used by the
/// CnnMamlMtd approach. Exposed so several cells can share one pretraining.
MetaInit build_meta_init(const GridCase& base_grid, Variant variant, const ExperimentConfig& cfg);

/// Aligned text table of experiment rows (approach, variant, recall, precision).
struct TableRow {
  std::string approach;
  std::string variant;
  double recall_pct = 0.0;
  double precision_pct = 0.0;
};
std::string format_results_table(const std::vector<TableRow>& rows);

}  // namespace ccpaloc
