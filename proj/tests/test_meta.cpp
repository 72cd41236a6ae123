#include <doctest.h>

#include <cmath>

#include "ccpaloc/datagen.hpp"
#include "ccpaloc/meta.hpp"
#include "test_util.hpp"

using namespace ccpaloc;

namespace {

CnnArch toy_arch(int input_len, int n_out) {
  CnnArch arch;
  arch.input_len = input_len;
  arch.n_outputs = n_out;
  arch.channels = {8, 8, 8, 8};
  arch.kernels = {5, 3, 3, 3};
  return arch;
}

TaskData random_task(const CnnArch& arch, int n, Rng& rng) {
  TaskData task;
  task.x.resize(n, arch.input_len);
  task.y.resize(n, arch.n_outputs);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < arch.input_len; ++j) task.x(i, j) = rng.uniform(-1.0, 1.0);
    for (int j = 0; j < arch.n_outputs; ++j) task.y(i, j) = rng.uniform() < 0.3 ? 1.0 : 0.0;
  }
  task.topology_id = "random";
  return task;
}

SupportQuerySplit first_k_split(int support, int query) {
  SupportQuerySplit split;
  for (int i = 0; i < support; ++i) split.support.push_back(i);
  for (int i = 0; i < query; ++i) split.query.push_back(support + i);
  return split;
}

MetaConfig toy_meta(int inner_steps) {
  MetaConfig cfg;
  cfg.inner_steps = inner_steps;
  cfg.inner_lr = 0.05;
  cfg.outer_lr = 2e-3;
  cfg.meta_batch = 4;
  cfg.support_size = 40;
  cfg.query_size = 80;
  cfg.outer_iters = 120;
  cfg.seed = 17;
  return cfg;
}

// Tasks over randomized triangle topologies: 9 measurements, 3 lines.
std::vector<TaskData> triangle_tasks(int n_tasks, int n_per_task, std::uint64_t seed) {
  const GridCase base = test_util::make_triangle();
  GenConfig gen;
  gen.attack_mix = {1.0, 0.0, 0.0};
  gen.max_outage = 1;
  gen.master_seed = seed;
  const std::vector<Dataset> datasets = generate_meta_tasks(base, n_tasks, n_per_task, gen);
  std::vector<TaskData> tasks;
  for (const Dataset& ds : datasets) tasks.push_back(task_from_dataset(ds));
  return tasks;
}

}  // namespace

TEST_CASE("zero inner steps reduce to the pooled multi-task gradient") {
  const CnnArch arch = toy_arch(6, 3);
  const CnnModel init = make_cnn(arch, 1);
  Rng rng(2);
  const TaskData a = random_task(arch, 30, rng);
  const TaskData b = random_task(arch, 30, rng);
  const SupportQuerySplit split = first_k_split(10, 20);

  MetaConfig cfg = toy_meta(0);
  const Eigen::VectorXd meta_grad =
      meta_outer_gradient(init, {&a, &b}, {split, split}, cfg);

  auto rows = [](const Eigen::MatrixXd& m, const std::vector<int>& idx) {
    Eigen::MatrixXd out(static_cast<Eigen::Index>(idx.size()), m.cols());
    for (std::size_t i = 0; i < idx.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = m.row(idx[i]);
    return out;
  };
  CnnWorkspace ws;
  const Eigen::VectorXd ga =
      cnn_loss_grad(init, rows(a.x, split.query), rows(a.y, split.query), 0.0, ws).grad;
  const Eigen::VectorXd gb =
      cnn_loss_grad(init, rows(b.x, split.query), rows(b.y, split.query), 0.0, ws).grad;
  CHECK((meta_grad - 0.5 * (ga + gb)).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("identical tasks with identical splits average to the single task") {
  const CnnArch arch = toy_arch(6, 3);
  const CnnModel init = make_cnn(arch, 3);
  Rng rng(4);
  const TaskData a = random_task(arch, 40, rng);
  const SupportQuerySplit split = first_k_split(12, 20);
  MetaConfig cfg = toy_meta(3);
  const Eigen::VectorXd pair = meta_outer_gradient(init, {&a, &a}, {split, split}, cfg);
  const Eigen::VectorXd solo = meta_outer_gradient(init, {&a}, {split}, cfg);
  CHECK((pair - solo).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("inner adaptation actually changes the evaluation point") {
  const CnnArch arch = toy_arch(6, 3);
  const CnnModel init = make_cnn(arch, 5);
  Rng rng(6);
  const TaskData a = random_task(arch, 40, rng);
  const SupportQuerySplit split = first_k_split(15, 20);
  MetaConfig cfg = toy_meta(0);
  const Eigen::VectorXd without = meta_outer_gradient(init, {&a}, {split}, cfg);
  cfg.inner_steps = 4;
  const Eigen::VectorXd with = meta_outer_gradient(init, {&a}, {split}, cfg);
  CHECK((without - with).cwiseAbs().maxCoeff() > 1e-9);
}

TEST_CASE("pretraining is reproducible and records provenance") {
  const std::vector<TaskData> tasks = triangle_tasks(6, 80, 11);
  const CnnArch arch = toy_arch(9, 3);
  MetaConfig cfg = toy_meta(2);
  cfg.support_size = 20;
  cfg.query_size = 40;
  cfg.outer_iters = 30;
  const MetaInit a = maml_pretrain(tasks, arch, cfg);
  const MetaInit b = maml_pretrain(tasks, arch, cfg);
  CHECK((a.model.params - b.model.params).cwiseAbs().maxCoeff() == 0.0);
  CHECK(a.provenance.at("n_tasks") == 6);
  CHECK(a.provenance.at("task_family") == b.provenance.at("task_family"));
  CHECK_FALSE(a.model.has_identity_normalization());
}

TEST_CASE("meta-initialized models adapt faster on a held-out topology") {
  const std::vector<TaskData> tasks = triangle_tasks(8, 160, 21);
  const CnnArch arch = toy_arch(9, 3);
  MetaConfig cfg = toy_meta(3);
  cfg.outer_iters = 150;
  const MetaInit init = maml_pretrain(tasks, arch, cfg);

  // Fresh topology family member, never seen in pretraining.
  const std::vector<TaskData> held_out = triangle_tasks(9, 160, 4096);
  const TaskData& target = held_out.back();
  const SupportQuerySplit split = first_k_split(40, 100);

  auto rows = [](const Eigen::MatrixXd& m, const std::vector<int>& idx) {
    Eigen::MatrixXd out(static_cast<Eigen::Index>(idx.size()), m.cols());
    for (std::size_t i = 0; i < idx.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = m.row(idx[i]);
    return out;
  };
  const Eigen::MatrixXd xs = rows(target.x, split.support);
  const Eigen::MatrixXd ys = rows(target.y, split.support);
  const Eigen::MatrixXd xq = rows(target.x, split.query);
  const Eigen::MatrixXd yq = rows(target.y, split.query);

  CnnModel adapted = init.model;
  const double before = bce_loss(cnn_forward(adapted, xq), yq);
  CnnWorkspace ws;
  for (int step = 0; step < cfg.inner_steps; ++step) {
    const CnnGradient g = cnn_loss_grad(adapted, xs, ys, 0.0, ws);
    adapted.params -= cfg.inner_lr * g.grad;
  }
  const double after = bce_loss(cnn_forward(adapted, xq), yq);
  CHECK(after < before);
}

TEST_CASE("fine-tuning with zero epochs returns the initialization") {
  const std::vector<TaskData> tasks = triangle_tasks(4, 60, 31);
  const CnnArch arch = toy_arch(9, 3);
  MetaConfig cfg = toy_meta(1);
  cfg.support_size = 20;
  cfg.query_size = 30;
  cfg.outer_iters = 10;
  const MetaInit init = maml_pretrain(tasks, arch, cfg);

  TrainConfig ft;
  ft.epochs = 0;
  TrainResult trace;
  const CnnModel same = fine_tune(init, tasks[0].x, tasks[0].y, ft, &trace);
  CHECK((same.params - init.model.params).cwiseAbs().maxCoeff() == 0.0);
  CHECK((same.input_mean - init.model.input_mean).cwiseAbs().maxCoeff() == 0.0);
  CHECK(trace.epoch_loss.empty());

  ft.epochs = 3;
  ft.seed = 12;
  const CnnModel tuned_a = fine_tune(init, tasks[0].x, tasks[0].y, ft, nullptr);
  const CnnModel tuned_b = fine_tune(init, tasks[0].x, tasks[0].y, ft, nullptr);
  CHECK((tuned_a.params - tuned_b.params).cwiseAbs().maxCoeff() == 0.0);
  // The initialization's normalization travels with the fine-tuned model.
  CHECK((tuned_a.input_mean - init.model.input_mean).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("insufficient task data is rejected") {
  const std::vector<TaskData> tasks = triangle_tasks(2, 30, 41);
  const CnnArch arch = toy_arch(9, 3);
  MetaConfig cfg = toy_meta(1);

  CHECK_THROWS_AS(maml_pretrain({tasks[0]}, arch, cfg), Error);

  cfg.support_size = 25;
  cfg.query_size = 25;  // 50 > 30 rows per task
  try {
    maml_pretrain(tasks, arch, cfg);
    CHECK(false);
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::InsufficientTaskData);
  }
}

TEST_CASE("only first-order meta-gradients are supported") {
  MetaConfig cfg = toy_meta(1);
  cfg.first_order = false;
  CHECK_THROWS_AS(cfg.check(), Error);
  try {
    cfg.check();
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::InvalidConfig);
  }
}

TEST_CASE("meta-init checkpoints round-trip with provenance") {
  const std::vector<TaskData> tasks = triangle_tasks(3, 60, 51);
  const CnnArch arch = toy_arch(9, 3);
  MetaConfig cfg = toy_meta(1);
  cfg.support_size = 20;
  cfg.query_size = 30;
  cfg.outer_iters = 5;
  const MetaInit init = maml_pretrain(tasks, arch, cfg);
  save_meta_init(init, "/tmp/ccpaloc_meta_init.json");
  const MetaInit back = load_meta_init("/tmp/ccpaloc_meta_init.json");
  CHECK((back.model.params - init.model.params).cwiseAbs().maxCoeff() == 0.0);
  CHECK(back.provenance.at("task_family") == init.provenance.at("task_family"));

  // A plain checkpoint is not a meta-init.
  save_checkpoint(init.model, "/tmp/ccpaloc_plain_ckpt.json");
  CHECK_THROWS_AS(load_meta_init("/tmp/ccpaloc_plain_ckpt.json"), Error);
}
