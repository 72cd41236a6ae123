#include "ccpaloc/evaluation.hpp"

#include <chrono>
#include <cstdio>

#include "ccpaloc/datagen.hpp"

namespace ccpaloc {

using nlohmann::json;

json MetricsReport::to_json() const {
  json per_line_json = json::array();
  for (const MetricCounts& c : per_line)
    per_line_json.push_back({{"tp", c.tp}, {"fp", c.fp}, {"fn", c.fn}, {"tn", c.tn}});
  return json{{"recall_pct", recall_pct},
              {"precision_pct", precision_pct},
              {"tp", counts.tp},
              {"fp", counts.fp},
              {"fn", counts.fn},
              {"tn", counts.tn},
              {"per_line", per_line_json},
              {"precision_degenerate", precision_degenerate},
              {"recall_degenerate", recall_degenerate},
              {"config", config_echo},
              {"seeds", seeds}};
}

MetricsReport metrics(const Eigen::MatrixXd& probs, const Eigen::MatrixXd& labels,
                      double threshold) {
  if (probs.rows() != labels.rows() || probs.cols() != labels.cols())
    fail(ErrorCode::ShapeMismatch, "prediction and label shapes differ");

  MetricsReport report;
  report.per_line.resize(static_cast<std::size_t>(probs.cols()));
  for (Eigen::Index l = 0; l < probs.cols(); ++l) {
    const auto pred = probs.col(l).array() >= threshold;
    const auto truth = labels.col(l).array() > 0.5;
    MetricCounts& c = report.per_line[static_cast<std::size_t>(l)];
    c.tp = (pred && truth).count();
    c.fp = (pred && !truth).count();
    c.fn = (!pred && truth).count();
    c.tn = (!pred && !truth).count();
    report.counts.tp += c.tp;
    report.counts.fp += c.fp;
    report.counts.fn += c.fn;
    report.counts.tn += c.tn;
  }
  const long pred_pos = report.counts.tp + report.counts.fp;
  const long true_pos = report.counts.tp + report.counts.fn;
  report.precision_degenerate = pred_pos == 0;
  report.recall_degenerate = true_pos == 0;
  report.precision_pct =
      report.precision_degenerate ? 0.0 : 100.0 * report.counts.tp / static_cast<double>(pred_pos);
  report.recall_pct =
      report.recall_degenerate ? 0.0 : 100.0 * report.counts.tp / static_cast<double>(true_pos);
  return report;
}

const char* to_string(Approach a) {
  switch (a) {
    case Approach::Cnn: return "cnn";
    case Approach::CnnMtd: return "cnn+mtd";
    case Approach::CnnMamlMtd: return "cnn+maml+mtd";
  }
  return "?";
}

Approach approach_from_string(const std::string& s) {
  if (s == "cnn") return Approach::Cnn;
  if (s == "cnn+mtd") return Approach::CnnMtd;
  if (s == "cnn+maml+mtd") return Approach::CnnMamlMtd;
  fail(ErrorCode::InvalidConfig, "unknown approach '" + s + "'");
}

json ExperimentConfig::to_json() const {
  return json{{"arch", arch.to_json()},
              {"n_train", n_train},
              {"n_test", n_test},
              {"max_outage", max_outage},
              {"load_lo", load_lo},
              {"load_hi", load_hi},
              {"per_bus_loads", per_bus_loads},
              {"sigma", sigma},
              {"noise", noise},
              {"c_support_max", c_support_max},
              {"c_magnitude", c_magnitude},
              {"mtd_eta", mtd_eta},
              {"mtd_candidates", mtd_candidates},
              {"meta_topologies", meta_topologies},
              {"meta_per_topology", meta_per_topology},
              {"train", train.to_json()},
              {"meta", meta.to_json()},
              {"fine_tune_epochs", fine_tune_epochs},
              {"seed", seed}};
}

ExperimentConfig ExperimentConfig::from_json(const json& doc) {
  static const std::vector<std::string> known = {
      "arch", "n_train", "n_test", "max_outage", "load_lo", "load_hi", "per_bus_loads",
      "sigma", "noise",
      "c_support_max", "c_magnitude", "mtd_eta", "mtd_candidates", "meta_topologies",
      "meta_per_topology", "train", "meta", "fine_tune_epochs", "seed"};
  for (auto it = doc.begin(); it != doc.end(); ++it) {
    if (std::find(known.begin(), known.end(), it.key()) == known.end())
      fail(ErrorCode::InvalidConfig, "unknown config key '" + it.key() + "'");
  }
  ExperimentConfig cfg;
  try {
    if (doc.contains("arch")) cfg.arch = CnnArch::from_json(doc["arch"]);
    cfg.n_train = doc.value("n_train", cfg.n_train);
    cfg.n_test = doc.value("n_test", cfg.n_test);
    cfg.max_outage = doc.value("max_outage", cfg.max_outage);
    cfg.load_lo = doc.value("load_lo", cfg.load_lo);
    cfg.load_hi = doc.value("load_hi", cfg.load_hi);
    cfg.per_bus_loads = doc.value("per_bus_loads", cfg.per_bus_loads);
    cfg.sigma = doc.value("sigma", cfg.sigma);
    cfg.noise = doc.value("noise", cfg.noise);
    cfg.c_support_max = doc.value("c_support_max", cfg.c_support_max);
    cfg.c_magnitude = doc.value("c_magnitude", cfg.c_magnitude);
    cfg.mtd_eta = doc.value("mtd_eta", cfg.mtd_eta);
    cfg.mtd_candidates = doc.value("mtd_candidates", cfg.mtd_candidates);
    cfg.meta_topologies = doc.value("meta_topologies", cfg.meta_topologies);
    cfg.meta_per_topology = doc.value("meta_per_topology", cfg.meta_per_topology);
    if (doc.contains("train")) cfg.train = TrainConfig::from_json(doc["train"]);
    if (doc.contains("meta")) cfg.meta = MetaConfig::from_json(doc["meta"]);
    cfg.fine_tune_epochs = doc.value("fine_tune_epochs", cfg.fine_tune_epochs);
    cfg.seed = doc.value("seed", cfg.seed);
  } catch (const json::exception& e) {
    fail(ErrorCode::InvalidConfig, std::string("bad config: ") + e.what());
  }
  if (cfg.n_train < 1 || cfg.n_test < 1) fail(ErrorCode::InvalidConfig, "sample counts must be >= 1");
  if (cfg.fine_tune_epochs < 0) fail(ErrorCode::InvalidConfig, "fine_tune_epochs must be >= 0");
  cfg.train.check();
  cfg.meta.check();
  return cfg;
}

namespace {

constexpr std::uint64_t kTrainDataTag = 0xD474ULL;
constexpr std::uint64_t kTestDataTag = 0x7E57ULL;
constexpr std::uint64_t kModelTag = 0xC0DEULL;
constexpr std::uint64_t kMtdTag = 0x347DULL;
constexpr std::uint64_t kMetaSeedTag = 0x3E7AULL;
constexpr std::uint64_t kMetaDataTag = 0x3E7BULL;

std::uint64_t variant_tag(Variant v) { return static_cast<std::uint64_t>(v) + 1; }

GenConfig make_gen_config(const ExperimentConfig& cfg, Variant variant, bool mtd_active,
                          int n_samples, std::uint64_t master_seed) {
  GenConfig gen;
  gen.n_samples = n_samples;
  gen.attack_mix = {0.0, 0.0, 0.0};
  gen.attack_mix[static_cast<std::size_t>(variant)] = 1.0;
  gen.max_outage = cfg.max_outage;
  gen.load_lo = cfg.load_lo;
  gen.load_hi = cfg.load_hi;
  gen.per_bus_loads = cfg.per_bus_loads;
  gen.noise = cfg.noise;
  gen.mtd_active = mtd_active;
  gen.master_seed = master_seed;
  gen.sigma = cfg.sigma;
  gen.c_support_max = cfg.c_support_max;
  gen.c_magnitude = cfg.c_magnitude;
  return gen;
}

}  // namespace

MetaInit build_meta_init(const GridCase& base_grid, Variant variant, const ExperimentConfig& cfg) {
  const std::uint64_t data_seed = Rng::derive(cfg.seed, kMetaDataTag ^ variant_tag(variant));
  GenConfig gen = make_gen_config(cfg, variant, /*mtd_active=*/true, cfg.meta_per_topology, data_seed);
  const std::vector<Dataset> datasets =
      generate_meta_tasks(base_grid, cfg.meta_topologies, cfg.meta_per_topology, gen);
  std::vector<TaskData> tasks;
  tasks.reserve(datasets.size());
  for (const Dataset& ds : datasets) tasks.push_back(task_from_dataset(ds));

  MetaConfig meta = cfg.meta;
  meta.seed = Rng::derive(cfg.seed, kMetaSeedTag ^ variant_tag(variant));
  return maml_pretrain(tasks, cfg.arch, meta);
}

ExperimentResult run_experiment(const GridCase& base_grid, Approach approach, Variant variant,
                                const ExperimentConfig& cfg, const MetaInit* shared_init) {
  base_grid.validate();
  const auto t_start = std::chrono::steady_clock::now();

  GridCase defender = base_grid;
  double gamma = 0.0;
  const bool mtd = approach != Approach::Cnn;
  if (mtd) {
    const DfactsPlan plan = place_dfacts(base_grid);
    Rng mtd_rng(Rng::derive(cfg.seed, kMtdTag));
    const Perturbation pert =
        select_perturbation(base_grid, plan, cfg.mtd_eta, cfg.mtd_candidates, mtd_rng);
    defender = apply_mtd(base_grid, pert);
    gamma = pert.gamma;
  }

  // The attacker's knowledge is always the pre-MTD base grid; without MTD that
  // coincides with the defender's grid.
  const GenConfig gen_train = make_gen_config(
      cfg, variant, mtd, cfg.n_train, Rng::derive(cfg.seed, kTrainDataTag ^ variant_tag(variant)));
  const GenConfig gen_test = make_gen_config(
      cfg, variant, mtd, cfg.n_test, Rng::derive(cfg.seed, kTestDataTag ^ variant_tag(variant)));
  const Dataset train_ds = generate_dataset(defender, base_grid, gen_train);
  const Dataset test_ds = generate_dataset(defender, base_grid, gen_test);

  Eigen::MatrixXd x_train, y_train, x_test, y_test;
  train_ds.to_matrices(x_train, y_train);
  test_ds.to_matrices(x_test, y_test);

  const std::uint64_t model_seed =
      Rng::derive(cfg.seed, kModelTag ^ (variant_tag(variant) << 2) ^
                                static_cast<std::uint64_t>(approach));
  TrainConfig train_cfg = cfg.train;
  train_cfg.seed = model_seed;

  ExperimentResult result;
  CnnModel model;
  const auto t_data = std::chrono::steady_clock::now();
  if (approach == Approach::CnnMamlMtd) {
    MetaInit local_init;
    const MetaInit* init = shared_init;
    if (!init) {
      local_init = build_meta_init(base_grid, variant, cfg);
      init = &local_init;
    }
    if (cfg.fine_tune_epochs > 0) train_cfg.epochs = cfg.fine_tune_epochs;
    TrainResult trace;
    model = fine_tune(*init, x_train, y_train, train_cfg, &trace);
    result.train_loss = std::move(trace.epoch_loss);
  } else {
    model = make_cnn(cfg.arch, model_seed);
    TrainResult trace = train(model, x_train, y_train, train_cfg);
    result.train_loss = std::move(trace.epoch_loss);
  }
  const auto t_train = std::chrono::steady_clock::now();

  const Eigen::MatrixXd probs = cnn_forward(model, x_test);
  result.report = metrics(probs, y_test, train_cfg.threshold);
  result.report.config_echo = json{{"approach", to_string(approach)},
                                   {"variant", to_string(variant)},
                                   {"experiment", cfg.to_json()}};
  result.report.seeds = {cfg.seed, gen_train.master_seed, gen_test.master_seed, model_seed};
  result.mtd_gamma = gamma;

  const auto t_end = std::chrono::steady_clock::now();
  const auto ms = [](auto a, auto b) {
    return std::chrono::duration_cast<std::chrono::milliseconds>(b - a).count();
  };
  result.provenance = json{{"grid_fingerprint", base_grid.fingerprint()},
                           {"defender_fingerprint", defender.fingerprint()},
                           {"mtd_gamma", gamma},
                           {"timing_ms",
                            {{"data", ms(t_start, t_data)},
                             {"train", ms(t_data, t_train)},
                             {"eval", ms(t_train, t_end)}}}};
  return result;
}

std::string format_results_table(const std::vector<TableRow>& rows) {
  std::string out;
  char buf[128];
  std::snprintf(buf, sizeof(buf), "%-14s %-9s %12s %15s\n", "Approach", "Attack", "Recall (%)",
                "Precision (%)");
  out += buf;
  out += std::string(52, '-') + "\n";
  for (const TableRow& r : rows) {
    std::snprintf(buf, sizeof(buf), "%-14s %-9s %12.2f %15.2f\n", r.approach.c_str(),
                  r.variant.c_str(), r.recall_pct, r.precision_pct);
    out += buf;
  }
  return out;
}

}  // namespace ccpaloc
