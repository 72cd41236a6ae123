// Command-line front end: case inspection, dataset generation, MTD planning,
// training, meta-pretraining, fine-tuning, evaluation, and the full
// nine-cell comparison report.

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include <nlohmann/json.hpp>

#include "ccpaloc/datagen.hpp"
#include "ccpaloc/evaluation.hpp"

namespace {

using namespace ccpaloc;
using nlohmann::json;

int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidConfig:
      return 1;
    case ErrorCode::MalformedCase:
    case ErrorCode::NoSlack:
    case ErrorCode::MultipleSlack:
    case ErrorCode::NonpositiveReactance:
    case ErrorCode::DanglingBusReference:
    case ErrorCode::DisconnectedGrid:
    case ErrorCode::InvalidOutage:
    case ErrorCode::IslandingOutage:
    case ErrorCode::ExhaustedResampling:
    case ErrorCode::InsufficientTaskData:
    case ErrorCode::SchemaMismatch:
    case ErrorCode::HashMismatch:
    case ErrorCode::IoError:
      return 2;
    default:
      return 3;  // numerical failure
  }
}

void print_error(const Error& e) {
  json diag{{"error", to_string(e.code())}, {"message", e.what()}};
  std::cerr << diag.dump() << "\n";
}

std::string file_hash(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return "";
  std::ostringstream ss;
  ss << in.rdbuf();
  return fnv1a_hex(ss.str());
}

void write_provenance(const std::string& out_prefix, const std::string& command,
                      const json& config, const std::vector<std::string>& inputs,
                      const std::vector<std::string>& outputs) {
  json doc{{"command", command}, {"config", config}};
  json in_hashes = json::object(), out_hashes = json::object();
  for (const std::string& p : inputs) in_hashes[p] = file_hash(p);
  for (const std::string& p : outputs) out_hashes[p] = file_hash(p);
  doc["input_hashes"] = in_hashes;
  doc["output_hashes"] = out_hashes;
  std::ofstream out(out_prefix + ".provenance.json", std::ios::binary);
  if (!out) fail(ErrorCode::IoError, "cannot write provenance for " + out_prefix);
  out << doc.dump(2) << "\n";
}

ExperimentConfig load_experiment_config(const std::string& path) {
  if (path.empty()) return ExperimentConfig{};
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::IoError, "cannot open config " + path);
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    fail(ErrorCode::InvalidConfig, std::string("config is not valid JSON: ") + e.what());
  }
  return ExperimentConfig::from_json(doc);
}

std::string default_config_path() {
  const char* env = std::getenv("CCPALOC_CONFIG");
  return env ? env : "";
}

struct MtdChoice {
  GridCase defender;
  double gamma = 0.0;
  Perturbation perturbation;
  DfactsPlan plan;
};

MtdChoice choose_mtd(const GridCase& base, double eta, int candidates, std::uint64_t seed,
                     const std::vector<int>& dfacts_override) {
  MtdChoice choice;
  choice.plan = place_dfacts(base);
  if (!dfacts_override.empty()) {
    choice.plan.dfacts_lines = dfacts_override;
    choice.plan.spanning_tree.clear();
    for (const Branch& br : base.branches) {
      if (std::find(dfacts_override.begin(), dfacts_override.end(), br.index) ==
          dfacts_override.end())
        choice.plan.spanning_tree.push_back(br.index);
    }
  }
  Rng rng(seed);
  choice.perturbation = select_perturbation(base, choice.plan, eta, candidates, rng);
  choice.defender = apply_mtd(base, choice.perturbation);
  choice.gamma = choice.perturbation.gamma;
  return choice;
}

json perturbation_to_json(const Perturbation& pert) {
  json dx = json::object();
  for (const auto& [line, delta] : pert.delta_x) dx[std::to_string(line)] = delta;
  return json{{"delta_x", dx}, {"eta", pert.eta}, {"gamma", pert.gamma}};
}

// ---------------------------------------------------------------------------

int cmd_parse_case(const std::string& case_path, bool as_json) {
  const GridCase grid = load_case_file(case_path);
  const MeasurementModel model = build_measurement_model(grid);
  if (as_json) {
    std::cout << to_native(grid) << "\n";
    return 0;
  }
  std::printf("case: %s\n", case_path.c_str());
  std::printf("N=%d L=%d m=%d n=%d slack=%d\n", grid.n_buses(), grid.n_branches(), model.m(),
              model.n(), grid.slack_bus_id());
  const std::vector<int> bridges = grid.bridge_lines();
  std::printf("bridge lines:");
  for (int b : bridges) std::printf(" %d", b);
  std::printf("\nfingerprint: %s\n", grid.fingerprint().c_str());
  return 0;
}

int cmd_gen_data(const std::string& case_path, const std::string& variant_name, int n,
                 std::uint64_t seed, const std::string& out_prefix, bool mtd,
                 std::uint64_t mtd_seed, const ExperimentConfig& cfg) {
  const GridCase base = load_case_file(case_path);
  const Variant variant = variant_from_string(variant_name);

  GenConfig gen;
  gen.n_samples = n;
  gen.attack_mix = {0.0, 0.0, 0.0};
  gen.attack_mix[static_cast<std::size_t>(variant)] = 1.0;
  gen.max_outage = cfg.max_outage;
  gen.load_lo = cfg.load_lo;
  gen.load_hi = cfg.load_hi;
  gen.noise = cfg.noise;
  gen.mtd_active = mtd;
  gen.master_seed = seed;
  gen.sigma = cfg.sigma;
  gen.c_support_max = cfg.c_support_max;
  gen.c_magnitude = cfg.c_magnitude;

  Dataset ds;
  json mtd_json;
  if (mtd) {
    const MtdChoice choice = choose_mtd(base, cfg.mtd_eta, cfg.mtd_candidates, mtd_seed, {});
    ds = generate_dataset(choice.defender, base, gen);
    mtd_json = json{{"seed", mtd_seed}, {"perturbation", perturbation_to_json(choice.perturbation)}};
  } else {
    ds = generate_dataset(base, gen);
  }
  save_dataset(ds, out_prefix);
  json config = gen.to_json();
  config["mtd"] = mtd_json;
  write_provenance(out_prefix, "gen-data", config, {case_path},
                   {out_prefix + ".csv", out_prefix + ".manifest.json"});
  std::printf("wrote %s.csv (%d samples)\n", out_prefix.c_str(), n);
  return 0;
}

int cmd_mtd_plan(const std::string& case_path, double eta, int candidates, std::uint64_t seed,
                 const std::vector<int>& dfacts_override, const std::string& out_path) {
  const GridCase base = load_case_file(case_path);
  const MtdChoice choice = choose_mtd(base, eta, candidates, seed, dfacts_override);
  json doc{{"dfacts_lines", choice.plan.dfacts_lines},
           {"spanning_tree", choice.plan.spanning_tree},
           {"perturbation", perturbation_to_json(choice.perturbation)},
           {"gamma", choice.gamma},
           {"seed", seed}};
  if (out_path.empty()) {
    std::cout << doc.dump(2) << "\n";
  } else {
    std::ofstream out(out_path, std::ios::binary);
    if (!out) fail(ErrorCode::IoError, "cannot write " + out_path);
    out << doc.dump(2) << "\n";
    write_provenance(out_path, "mtd-plan", doc, {case_path}, {out_path});
  }
  return 0;
}

int cmd_train(const std::string& data_prefix, const std::string& out_path, TrainConfig train_cfg,
              const CnnArch& arch) {
  const Dataset ds = load_dataset(data_prefix);
  Eigen::MatrixXd x, y;
  ds.to_matrices(x, y);
  CnnArch used = arch;
  used.input_len = ds.m();
  used.n_outputs = ds.n_lines();
  CnnModel model = make_cnn(used, train_cfg.seed);
  const TrainResult result = train(model, x, y, train_cfg);
  json extra{{"train_config", train_cfg.to_json()},
             {"loss_curve", result.epoch_loss},
             {"data_manifest", ds.manifest}};
  save_checkpoint(model, out_path, extra);
  write_provenance(out_path, "train", extra, {data_prefix + ".csv"}, {out_path});
  std::printf("trained %d epochs, final loss %.6f, wrote %s\n", train_cfg.epochs,
              result.epoch_loss.empty() ? 0.0 : result.epoch_loss.back(), out_path.c_str());
  return 0;
}

int cmd_meta_train(const std::string& case_path, const std::string& variant_name,
                   const std::string& out_path, const ExperimentConfig& cfg) {
  const GridCase base = load_case_file(case_path);
  const MetaInit init = build_meta_init(base, variant_from_string(variant_name), cfg);
  save_meta_init(init, out_path);
  write_provenance(out_path, "meta-train",
                   json{{"experiment", cfg.to_json()}, {"variant", variant_name}}, {case_path},
                   {out_path});
  std::printf("meta-pretrained on %d topologies, wrote %s\n", cfg.meta_topologies,
              out_path.c_str());
  return 0;
}

int cmd_fine_tune(const std::string& init_path, const std::string& data_prefix,
                  const std::string& out_path, TrainConfig train_cfg) {
  const MetaInit init = load_meta_init(init_path);
  const Dataset ds = load_dataset(data_prefix);
  Eigen::MatrixXd x, y;
  ds.to_matrices(x, y);
  TrainResult trace;
  const CnnModel model = fine_tune(init, x, y, train_cfg, &trace);
  json extra{{"train_config", train_cfg.to_json()},
             {"loss_curve", trace.epoch_loss},
             {"initialized_from", init_path},
             {"data_manifest", ds.manifest}};
  save_checkpoint(model, out_path, extra);
  write_provenance(out_path, "fine-tune", extra, {init_path, data_prefix + ".csv"}, {out_path});
  std::printf("fine-tuned %d epochs, wrote %s\n", train_cfg.epochs, out_path.c_str());
  return 0;
}

int cmd_evaluate(const std::string& model_path, const std::string& data_prefix, double threshold,
                 const std::string& out_path) {
  const CnnModel model = load_checkpoint(model_path);
  const Dataset ds = load_dataset(data_prefix);
  Eigen::MatrixXd x, y;
  ds.to_matrices(x, y);
  const MetricsReport report = metrics(cnn_forward(model, x), y, threshold);
  const json doc = report.to_json();
  if (out_path.empty()) {
    std::cout << doc.dump(2) << "\n";
  } else {
    std::ofstream out(out_path, std::ios::binary);
    if (!out) fail(ErrorCode::IoError, "cannot write " + out_path);
    out << doc.dump(2) << "\n";
    write_provenance(out_path, "evaluate",
                     json{{"model", model_path}, {"data", data_prefix}, {"threshold", threshold}},
                     {model_path, data_prefix + ".csv"}, {out_path});
  }
  return 0;
}

int cmd_reproduce_table2(const std::string& case_path, bool fast, int n_seeds,
                         ExperimentConfig cfg, const std::string& out_path) {
  const GridCase base = load_case_file(case_path);
  if (fast) {
    cfg.n_train = 1000;
    cfg.n_test = 500;
    cfg.train.epochs = 20;
    cfg.meta_topologies = 10;
    cfg.meta_per_topology = 200;
    cfg.meta.outer_iters = 30;
    cfg.meta.meta_batch = 3;
    cfg.meta.inner_steps = 3;
    cfg.meta.support_size = 30;
    cfg.meta.query_size = 60;
    cfg.mtd_candidates = 50;
  }

  std::vector<TableRow> rows;
  json cells = json::array();
  for (Approach approach : {Approach::Cnn, Approach::CnnMtd, Approach::CnnMamlMtd}) {
    for (Variant variant : {Variant::Partial, Variant::Extra, Variant::Full}) {
      std::optional<MetaInit> init;
      if (approach == Approach::CnnMamlMtd) init = build_meta_init(base, variant, cfg);
      double recall = 0.0, precision = 0.0, gamma = 0.0;
      json seed_results = json::array();
      for (int s = 0; s < n_seeds; ++s) {
        ExperimentConfig run_cfg = cfg;
        run_cfg.seed = Rng::derive(cfg.seed, static_cast<std::uint64_t>(s));
        const ExperimentResult result = run_experiment(
            base, approach, variant, run_cfg, init ? &*init : nullptr);
        recall += result.report.recall_pct;
        precision += result.report.precision_pct;
        gamma = result.mtd_gamma;
        seed_results.push_back({{"seed", run_cfg.seed},
                                {"recall_pct", result.report.recall_pct},
                                {"precision_pct", result.report.precision_pct}});
      }
      recall /= n_seeds;
      precision /= n_seeds;
      rows.push_back(TableRow{to_string(approach), to_string(variant), recall, precision});
      cells.push_back({{"approach", to_string(approach)},
                       {"variant", to_string(variant)},
                       {"recall_pct", recall},
                       {"precision_pct", precision},
                       {"mtd_gamma", gamma},
                       {"runs", seed_results}});
      std::printf("[cell] %-14s %-8s recall %6.2f%% precision %6.2f%%\n", to_string(approach),
                  to_string(variant), recall, precision);
      std::fflush(stdout);
    }
  }
  std::cout << "\n" << format_results_table(rows);
  if (!out_path.empty()) {
    json doc{{"case", case_path},
             {"fast", fast},
             {"n_seeds", n_seeds},
             {"experiment", cfg.to_json()},
             {"cells", cells}};
    std::ofstream out(out_path, std::ios::binary);
    if (!out) fail(ErrorCode::IoError, "cannot write " + out_path);
    out << doc.dump(2) << "\n";
    write_provenance(out_path, "reproduce-table2", doc["experiment"], {case_path}, {out_path});
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"CCPA localization laboratory: DC grid simulation, moving-target defense, and "
               "CNN line-outage localization"};
  app.require_subcommand(1);
  app.fallthrough();  // global options may follow the subcommand

  std::string config_path = default_config_path();
  app.add_option("--config", config_path, "JSON experiment config (defaults + overrides)");

  // parse-case
  auto* parse_cmd = app.add_subcommand("parse-case", "Parse a case file and print a summary");
  std::string case_path;
  bool as_json = false;
  parse_cmd->add_option("case", case_path, "case file (.m or .json)")->required();
  parse_cmd->add_flag("--json", as_json, "emit the native JSON form");

  // gen-data
  auto* gen_cmd = app.add_subcommand("gen-data", "Generate a labeled attack dataset");
  std::string gen_case, gen_variant = "partial", gen_out = "dataset";
  int gen_n = 1000;
  std::uint64_t gen_seed = 1, gen_mtd_seed = 0;
  bool gen_mtd = false;
  gen_cmd->add_option("--case", gen_case)->required();
  gen_cmd->add_option("--variant", gen_variant, "partial|extra|full");
  gen_cmd->add_option("--n", gen_n);
  gen_cmd->add_option("--seed", gen_seed);
  gen_cmd->add_flag("--mtd", gen_mtd, "apply a reactance perturbation; attacks stay stale");
  gen_cmd->add_option("--mtd-seed", gen_mtd_seed, "perturbation search seed (default: derived)");
  gen_cmd->add_option("--out", gen_out, "output prefix");

  // mtd-plan
  auto* mtd_cmd = app.add_subcommand("mtd-plan", "Plan D-FACTS placement and pick a perturbation");
  std::string mtd_case, mtd_out, mtd_dfacts;
  double mtd_eta = 0.2;
  int mtd_candidates = 200;
  std::uint64_t mtd_seed = 1;
  mtd_cmd->add_option("--case", mtd_case)->required();
  mtd_cmd->add_option("--eta", mtd_eta, "max relative reactance change");
  mtd_cmd->add_option("--candidates", mtd_candidates);
  mtd_cmd->add_option("--seed", mtd_seed);
  mtd_cmd->add_option("--dfacts", mtd_dfacts, "comma-separated line list overriding the plan");
  mtd_cmd->add_option("--out", mtd_out);

  // train
  auto* train_cmd = app.add_subcommand("train", "Train a localization model on a dataset");
  std::string train_data, train_out = "model.json";
  TrainConfig train_cfg;
  train_cmd->add_option("--data", train_data, "dataset prefix")->required();
  train_cmd->add_option("--out", train_out);
  train_cmd->add_option("--epochs", train_cfg.epochs);
  train_cmd->add_option("--lr", train_cfg.lr);
  train_cmd->add_option("--batch", train_cfg.batch_size);
  train_cmd->add_option("--weight-decay", train_cfg.weight_decay);
  train_cmd->add_option("--seed", train_cfg.seed);
  train_cmd->add_option("--threshold", train_cfg.threshold);
  bool no_standardize = false;
  train_cmd->add_flag("--no-standardize", no_standardize);

  // meta-train
  auto* meta_cmd = app.add_subcommand("meta-train", "MAML pretraining across random topologies");
  std::string meta_case, meta_variant = "full", meta_out = "meta_init.json";
  meta_cmd->add_option("--case", meta_case)->required();
  meta_cmd->add_option("--variant", meta_variant, "partial|extra|full");
  meta_cmd->add_option("--out", meta_out);
  int meta_topologies = -1, meta_per_topology = -1, meta_outer_iters = -1;
  int meta_support = -1, meta_query = -1, meta_inner_steps = -1, meta_batch = -1;
  double meta_inner_lr = -1.0, meta_outer_lr = -1.0;
  std::uint64_t meta_seed = 0;
  bool meta_seed_set = false;
  meta_cmd->add_option("--topologies", meta_topologies);
  meta_cmd->add_option("--per-topology", meta_per_topology);
  meta_cmd->add_option("--outer-iters", meta_outer_iters);
  meta_cmd->add_option("--support", meta_support);
  meta_cmd->add_option("--query", meta_query);
  meta_cmd->add_option("--inner-steps", meta_inner_steps);
  meta_cmd->add_option("--meta-batch", meta_batch);
  meta_cmd->add_option("--inner-lr", meta_inner_lr);
  meta_cmd->add_option("--outer-lr", meta_outer_lr);
  meta_cmd->add_option("--seed", meta_seed)->each([&](const std::string&) { meta_seed_set = true; });

  // fine-tune
  auto* ft_cmd = app.add_subcommand("fine-tune", "Fine-tune a meta-initialized model");
  std::string ft_init, ft_data, ft_out = "model.json";
  TrainConfig ft_cfg;
  ft_cfg.epochs = 50;
  ft_cmd->add_option("--init", ft_init, "meta checkpoint")->required();
  ft_cmd->add_option("--data", ft_data, "dataset prefix")->required();
  ft_cmd->add_option("--out", ft_out);
  ft_cmd->add_option("--epochs", ft_cfg.epochs);
  ft_cmd->add_option("--lr", ft_cfg.lr);
  ft_cmd->add_option("--batch", ft_cfg.batch_size);
  ft_cmd->add_option("--seed", ft_cfg.seed);

  // evaluate
  auto* eval_cmd = app.add_subcommand("evaluate", "Score a model on a dataset");
  std::string eval_model, eval_data, eval_out;
  double eval_threshold = 0.5;
  eval_cmd->add_option("--model", eval_model)->required();
  eval_cmd->add_option("--data", eval_data)->required();
  eval_cmd->add_option("--threshold", eval_threshold);
  eval_cmd->add_option("--out", eval_out);

  // reproduce-table2
  auto* t2_cmd = app.add_subcommand("reproduce-table2",
                                    "Run all nine approach x attack cells and report");
  std::string t2_case, t2_out;
  bool t2_fast = false;
  int t2_seeds = 1;
  std::uint64_t t2_seed = 0;
  bool t2_seed_set = false;
  t2_cmd->add_option("--case", t2_case)->required();
  t2_cmd->add_flag("--fast", t2_fast, "reduced sizes for a quick smoke run");
  t2_cmd->add_option("--seeds", t2_seeds, "seeds averaged per cell");
  t2_cmd->add_option("--seed", t2_seed)->each([&](const std::string&) { t2_seed_set = true; });
  t2_cmd->add_option("--out", t2_out, "JSON report path");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    ExperimentConfig cfg = load_experiment_config(config_path);

    if (parse_cmd->parsed()) return cmd_parse_case(case_path, as_json);
    if (gen_cmd->parsed()) {
      if (!gen_cmd->count("--mtd-seed")) gen_mtd_seed = Rng::derive(gen_seed, 0x347DULL);
      return cmd_gen_data(gen_case, gen_variant, gen_n, gen_seed, gen_out, gen_mtd, gen_mtd_seed,
                          cfg);
    }
    if (mtd_cmd->parsed()) {
      std::vector<int> dfacts;
      if (!mtd_dfacts.empty()) {
        std::istringstream ss(mtd_dfacts);
        std::string tok;
        while (std::getline(ss, tok, ',')) dfacts.push_back(std::stoi(tok));
      }
      return cmd_mtd_plan(mtd_case, mtd_eta, mtd_candidates, mtd_seed, dfacts, mtd_out);
    }
    if (train_cmd->parsed()) {
      train_cfg.standardize_input = !no_standardize;
      return cmd_train(train_data, train_out, train_cfg, cfg.arch);
    }
    if (meta_cmd->parsed()) {
      if (meta_topologies > 0) cfg.meta_topologies = meta_topologies;
      if (meta_per_topology > 0) cfg.meta_per_topology = meta_per_topology;
      if (meta_outer_iters >= 0) cfg.meta.outer_iters = meta_outer_iters;
      if (meta_support > 0) cfg.meta.support_size = meta_support;
      if (meta_query > 0) cfg.meta.query_size = meta_query;
      if (meta_inner_steps >= 0) cfg.meta.inner_steps = meta_inner_steps;
      if (meta_batch > 0) cfg.meta.meta_batch = meta_batch;
      if (meta_inner_lr > 0) cfg.meta.inner_lr = meta_inner_lr;
      if (meta_outer_lr > 0) cfg.meta.outer_lr = meta_outer_lr;
      if (meta_seed_set) cfg.seed = meta_seed;
      // Splits larger than the per-topology budget cannot work; shrink to fit
      // when the caller did not pin them explicitly.
      if (meta_support < 0 && cfg.meta.support_size + cfg.meta.query_size > cfg.meta_per_topology) {
        cfg.meta.support_size = cfg.meta_per_topology / 5;
        cfg.meta.query_size = cfg.meta_per_topology - cfg.meta.support_size;
      }
      return cmd_meta_train(meta_case, meta_variant, meta_out, cfg);
    }
    if (ft_cmd->parsed()) return cmd_fine_tune(ft_init, ft_data, ft_out, ft_cfg);
    if (eval_cmd->parsed()) return cmd_evaluate(eval_model, eval_data, eval_threshold, eval_out);
    if (t2_cmd->parsed()) {
      if (t2_seed_set) cfg.seed = t2_seed;
      return cmd_reproduce_table2(t2_case, t2_fast, t2_seeds, cfg, t2_out);
    }
  } catch (const Error& e) {
    print_error(e);
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    json diag{{"error", "Unhandled"}, {"message", e.what()}};
    std::cerr << diag.dump() << "\n";
    return 3;
  }
  return 1;
}
