// oshealth: ingest archives, build metrics, run EFA and SEM.
//
//   oshealth ingest  --archives data/ --projects projects.csv --out out
//   oshealth metrics --ranks ranks.csv --out out
//   oshealth efa     --out out --cross-validate
//   oshealth sem     --model model.txt --out out
//   oshealth report  --out out
//
// Every option may also come from a key=value file given with --config;
// command-line flags win over the file.

#include <CLI11.hpp>

#include <iostream>

#include "oshealth/pipeline.hpp"

namespace pl = oshealth::pipeline;

int main(int argc, char** argv) {
  CLI::App app{"Open-source project health: metrics, factor analysis and structural models"};
  app.set_version_flag("--version", std::string(pl::kVersion));
  app.set_config("--config", "", "key=value configuration file");
  app.require_subcommand(1);

  pl::PipelineConfig cfg;
  std::string sim_kind = "efa";
  long sim_n = 384;

  app.add_option("--archives", cfg.archives, "archive files or directories")->delimiter(',');
  app.add_option("--projects", cfg.projects, "project list CSV");
  app.add_option("--overrides", cfg.overrides, "name=owner/repo overrides");
  app.add_option("--ranks", cfg.ranks, "repo_id,cmc_rank,alexa_rank CSV");
  app.add_option("--criticality", cfg.criticality, "criticality signal config");
  app.add_option("--as-of,--as_of", cfg.as_of, "reference time (ISO-8601)");
  app.add_option("--split", cfg.split, "training fraction for cross-validation")->capture_default_str();
  app.add_option("--seed", cfg.seed, "random seed")->capture_default_str();
  app.add_option("--factors", cfg.factors, "factor count or 'auto'")->capture_default_str();
  app.add_option("--cutoff", cfg.cutoff, "loading cutoff for indicator assignment")->capture_default_str();
  app.add_option("--out", cfg.out, "output directory")->capture_default_str();
  app.add_option("--store", cfg.store, "event store directory (default <out>/store)");
  app.add_option("--metrics", cfg.metrics, "metrics CSV (default <out>/metrics.csv)");
  app.add_option("--columns", cfg.columns, "EFA columns")->delimiter(',');
  app.add_option("--compare-drop,--compare_drop", cfg.compare_drop, "columns dropped for the BIC comparison")
      ->delimiter(',');
  app.add_option("--pa-sims,--pa_sims", cfg.pa_sims, "parallel analysis simulations")->capture_default_str();
  app.add_option("--pa-basis,--pa_basis", cfg.pa_basis, "full or reduced")
      ->check(CLI::IsMember({"full", "reduced"}))
      ->capture_default_str();
  app.add_flag("--cross-validate,--cross_validate", cfg.cross_validate, "train/test EFA");
  app.add_option("--model", cfg.model, "SEM model file");
  app.add_option("--compare-model,--compare_model", cfg.compare_model, "second SEM model to compare");
  app.add_flag("--sem-covariance,--sem_covariance", cfg.sem_covariance,
               "fit the covariance matrix instead of correlations");
  app.add_flag("--mentions-in-comments,--mentions_in_comments", cfg.mentions_in_comments,
               "also count mentions in comment bodies");
  app.add_option("--reference-top,--reference_top", cfg.reference_top,
                 "projects in the reference timezone distribution")
      ->capture_default_str();
  app.add_option("--threads", cfg.threads, "worker threads for simulations")->capture_default_str();

  auto* ingest = app.add_subcommand("ingest", "parse archives into the event store");
  auto* metrics = app.add_subcommand("metrics", "compute one metrics row per project");
  auto* efa = app.add_subcommand("efa", "parallel analysis and exploratory factor analysis");
  auto* sem = app.add_subcommand("sem", "fit a confirmatory or structural model");
  auto* report = app.add_subcommand("report", "summarise stage outputs");
  auto* simulate = app.add_subcommand("simulate", "write a synthetic metrics CSV");
  simulate->add_option("--kind", sim_kind, "efa or sem")->capture_default_str();
  simulate->add_option("-n,--rows", sim_n, "rows")->capture_default_str();
  for (auto* s : {ingest, metrics, efa, sem, report, simulate}) s->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  try {
    if (*ingest) pl::cmd_ingest(cfg);
    else if (*metrics) pl::cmd_metrics(cfg);
    else if (*efa) pl::cmd_efa(cfg);
    else if (*sem) pl::cmd_sem(cfg);
    else if (*report) std::cout << pl::cmd_report(cfg);
    else if (*simulate) pl::cmd_simulate(cfg, sim_kind, sim_n);
  } catch (const oshealth::ArgumentError& e) {
    pl::log(std::string("error: ") + e.what());
    return 1;
  } catch (const std::exception& e) {
    pl::log(std::string("internal error: ") + e.what());
    return 2;
  }
  return 0;
}
