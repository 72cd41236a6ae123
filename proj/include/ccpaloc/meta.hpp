#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ccpaloc/datagen.hpp"
#include "ccpaloc/neuralnet.hpp"

namespace ccpaloc {

struct MetaConfig {
  double inner_lr = 1e-2;
  double outer_lr = 1e-3;
  int inner_steps = 5;
  int meta_batch = 5;      // tasks per outer step
  int support_size = 200;
  int query_size = 800;
  int outer_iters = 2000;
  bool first_order = true;  // the only supported mode
  std::uint64_t seed = 0;

  void check() const;
  nlohmann::json to_json() const;
  static MetaConfig from_json(const nlohmann::json& doc);
};

/// One meta-learning task: labeled samples from a single topology.
struct TaskData {
  Eigen::MatrixXd x;  // n x m
  Eigen::MatrixXd y;  // n x L
  std::string topology_id;
};

TaskData task_from_dataset(const Dataset& ds);

/// Shared initialization produced by meta-pretraining.
struct MetaInit {
  CnnModel model;
  nlohmann::json provenance;
};

struct SupportQuerySplit {
  std::vector<int> support;
  std::vector<int> query;
};

/// First-order meta-gradient for one batch of tasks: adapt a copy of `init` on
/// each task's support rows with inner_steps of plain gradient descent, then
/// average the query-set BCE gradients evaluated at the adapted parameters.
/// With inner_steps = 0 this reduces to the pooled multi-task gradient.
Eigen::VectorXd meta_outer_gradient(const CnnModel& init, const std::vector<const TaskData*>& batch,
                                    const std::vector<SupportQuerySplit>& splits,
                                    const MetaConfig& cfg);

/// MAML pretraining across tasks; the outer loop runs Adam on the averaged
/// query gradients. Deterministic given cfg.seed.
MetaInit maml_pretrain(const std::vector<TaskData>& tasks, const CnnArch& arch,
                       const MetaConfig& cfg);

/// Supervised training that starts from the shared initialization (keeps its
/// input standardization). epochs = 0 returns the initialization unchanged.
CnnModel fine_tune(const MetaInit& init, const Eigen::MatrixXd& x, const Eigen::MatrixXd& y,
                   const TrainConfig& cfg, TrainResult* trace = nullptr);

void save_meta_init(const MetaInit& init, const std::string& path);
MetaInit load_meta_init(const std::string& path);

}  // namespace ccpaloc
