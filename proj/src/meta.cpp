#include "ccpaloc/meta.hpp"

#include <algorithm>
#include <numeric>

namespace ccpaloc {

using nlohmann::json;

void MetaConfig::check() const {
  if (!(inner_lr > 0) || !(outer_lr > 0)) fail(ErrorCode::InvalidConfig, "learning rates must be positive");
  if (inner_steps < 0) fail(ErrorCode::InvalidConfig, "inner_steps must be >= 0");
  if (meta_batch < 1) fail(ErrorCode::InvalidConfig, "meta_batch must be >= 1");
  if (support_size < 1 || query_size < 1) fail(ErrorCode::InvalidConfig, "split sizes must be >= 1");
  if (outer_iters < 0) fail(ErrorCode::InvalidConfig, "outer_iters must be >= 0");
  if (!first_order)
    fail(ErrorCode::InvalidConfig, "only first-order meta-gradients are supported");
}

json MetaConfig::to_json() const {
  return json{{"inner_lr", inner_lr},     {"outer_lr", outer_lr},
              {"inner_steps", inner_steps}, {"meta_batch", meta_batch},
              {"support_size", support_size}, {"query_size", query_size},
              {"outer_iters", outer_iters}, {"first_order", first_order},
              {"seed", seed}};
}

MetaConfig MetaConfig::from_json(const json& doc) {
  MetaConfig cfg;
  try {
    cfg.inner_lr = doc.at("inner_lr").get<double>();
    cfg.outer_lr = doc.at("outer_lr").get<double>();
    cfg.inner_steps = doc.at("inner_steps").get<int>();
    cfg.meta_batch = doc.at("meta_batch").get<int>();
    cfg.support_size = doc.at("support_size").get<int>();
    cfg.query_size = doc.at("query_size").get<int>();
    cfg.outer_iters = doc.at("outer_iters").get<int>();
    cfg.first_order = doc.at("first_order").get<bool>();
    cfg.seed = doc.at("seed").get<std::uint64_t>();
  } catch (const json::exception& e) {
    fail(ErrorCode::SchemaMismatch, std::string("bad meta config: ") + e.what());
  }
  cfg.check();
  return cfg;
}

TaskData task_from_dataset(const Dataset& ds) {
  TaskData task;
  ds.to_matrices(task.x, task.y);
  task.topology_id = ds.manifest.value("topology_id", "");
  return task;
}

namespace {

Eigen::MatrixXd gather_rows(const Eigen::MatrixXd& src, const std::vector<int>& rows) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), src.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = src.row(rows[i]);
  return out;
}

}  // namespace

Eigen::VectorXd meta_outer_gradient(const CnnModel& init, const std::vector<const TaskData*>& batch,
                                    const std::vector<SupportQuerySplit>& splits,
                                    const MetaConfig& cfg) {
  cfg.check();
  if (batch.empty() || batch.size() != splits.size())
    fail(ErrorCode::ShapeMismatch, "task batch and splits must align");

  Eigen::VectorXd grad_sum = Eigen::VectorXd::Zero(init.params.size());
  CnnWorkspace ws;
  for (std::size_t t = 0; t < batch.size(); ++t) {
    const TaskData& task = *batch[t];
    CnnModel adapted = init;
    if (cfg.inner_steps > 0) {
      const Eigen::MatrixXd xs = gather_rows(task.x, splits[t].support);
      const Eigen::MatrixXd ys = gather_rows(task.y, splits[t].support);
      for (int step = 0; step < cfg.inner_steps; ++step) {
        const CnnGradient g = cnn_loss_grad(adapted, xs, ys, 0.0, ws);
        adapted.params -= cfg.inner_lr * g.grad;
      }
    }
    const Eigen::MatrixXd xq = gather_rows(task.x, splits[t].query);
    const Eigen::MatrixXd yq = gather_rows(task.y, splits[t].query);
    // First-order step: the query gradient at the adapted parameters stands in
    // for the gradient with respect to the initialization.
    grad_sum += cnn_loss_grad(adapted, xq, yq, 0.0, ws).grad;
  }
  return grad_sum / static_cast<double>(batch.size());
}

MetaInit maml_pretrain(const std::vector<TaskData>& tasks, const CnnArch& arch,
                       const MetaConfig& cfg) {
  cfg.check();
  arch.check();
  if (tasks.size() < 2) fail(ErrorCode::InsufficientTaskData, "meta-pretraining needs >= 2 tasks");
  for (const TaskData& task : tasks) {
    if (static_cast<int>(task.x.rows()) < cfg.support_size + cfg.query_size)
      fail(ErrorCode::InsufficientTaskData,
           "task '" + task.topology_id + "' is smaller than support + query");
  }

  MetaInit init;
  init.model = make_cnn(arch, Rng::derive(cfg.seed, 0x1217ULL));

  // Fit the input standardization once, on rows pooled across tasks, and keep
  // it frozen through pretraining and later fine-tuning.
  {
    const int per_task = std::min<int>(256, static_cast<int>(tasks[0].x.rows()));
    const int use_tasks = static_cast<int>(std::min<std::size_t>(tasks.size(), 16));
    Eigen::MatrixXd pool(per_task * use_tasks, arch.input_len);
    for (int t = 0; t < use_tasks; ++t)
      pool.middleRows(static_cast<Eigen::Index>(t) * per_task, per_task) =
          tasks[static_cast<std::size_t>(t)].x.topRows(per_task);
    init.model.set_input_standardization(pool);
  }

  AdamState state = AdamState::zeros(init.model.params.size());
  std::vector<int> task_order(tasks.size());
  std::iota(task_order.begin(), task_order.end(), 0);

  for (int iter = 0; iter < cfg.outer_iters; ++iter) {
    Rng rng(Rng::derive(cfg.seed, 0x0172ULL + static_cast<std::uint64_t>(iter)));
    // Meta-batch: first `b` entries of a progressive shuffle.
    const int b = std::min<int>(cfg.meta_batch, static_cast<int>(tasks.size()));
    for (int i = 0; i < b; ++i) {
      const int j = rng.uniform_int(i, static_cast<int>(tasks.size()) - 1);
      std::swap(task_order[static_cast<std::size_t>(i)], task_order[static_cast<std::size_t>(j)]);
    }
    std::vector<const TaskData*> batch;
    std::vector<SupportQuerySplit> splits;
    for (int i = 0; i < b; ++i) {
      const TaskData& task = tasks[static_cast<std::size_t>(task_order[static_cast<std::size_t>(i)])];
      batch.push_back(&task);
      const int n = static_cast<int>(task.x.rows());
      std::vector<int> perm(static_cast<std::size_t>(n));
      std::iota(perm.begin(), perm.end(), 0);
      const int need = cfg.support_size + cfg.query_size;
      for (int p = 0; p < need; ++p) {
        const int j = rng.uniform_int(p, n - 1);
        std::swap(perm[static_cast<std::size_t>(p)], perm[static_cast<std::size_t>(j)]);
      }
      SupportQuerySplit split;
      split.support.assign(perm.begin(), perm.begin() + cfg.support_size);
      split.query.assign(perm.begin() + cfg.support_size, perm.begin() + need);
      splits.push_back(std::move(split));
    }
    const Eigen::VectorXd grad = meta_outer_gradient(init.model, batch, splits, cfg);
    adam_step(init.model.params, grad, state, cfg.outer_lr, 0.9, 0.999, 1e-8);
  }

  std::string family;
  for (const TaskData& task : tasks) family += task.topology_id + ";";
  init.provenance = json{{"meta_config", cfg.to_json()},
                         {"n_tasks", tasks.size()},
                         {"task_family", fnv1a_hex(family)}};
  return init;
}

CnnModel fine_tune(const MetaInit& init, const Eigen::MatrixXd& x, const Eigen::MatrixXd& y,
                   const TrainConfig& cfg, TrainResult* trace) {
  CnnModel model = init.model;
  if (cfg.epochs == 0) {
    if (trace) *trace = TrainResult{};
    return model;
  }
  TrainResult result = train(model, x, y, cfg);
  if (trace) *trace = std::move(result);
  return model;
}

void save_meta_init(const MetaInit& init, const std::string& path) {
  save_checkpoint(init.model, path, json{{"meta_provenance", init.provenance}});
}

MetaInit load_meta_init(const std::string& path) {
  MetaInit init;
  json extra;
  init.model = load_checkpoint(path, &extra);
  if (!extra.contains("meta_provenance"))
    fail(ErrorCode::SchemaMismatch, "checkpoint lacks meta provenance");
  init.provenance = extra["meta_provenance"];
  return init;
}

}  // namespace ccpaloc
