#include <chrono>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "mmm/chain_io.hpp"
#include "mmm/dataset.hpp"
#include "mmm/diagnostics.hpp"
#include "mmm/errors.hpp"
#include "mmm/gibbs.hpp"
#include "mmm/simulate.hpp"
#include "mmm/spatiotemporal.hpp"

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitValidation = 3;
constexpr int kExitNumeric = 4;

struct SimulateArgs {
  std::string scenario = "1";
  int subjects = 1000;
  std::uint64_t seed = 0;
  std::string out;
};

struct FitArgs {
  std::string data, schema, out;
  int iterations = 5000;
  int burn_in = 1000;
  int thin = 1;
  std::uint64_t seed = 0;
  std::string variant = "plain";
  std::string retain = "lambda,theta,mu,sigma,spatial";
  bool resume = false;
  double nugget = 1e-6;
  double proposal_sd = 0.3;
  bool no_adapt = false;
};

struct ReportArgs {
  std::string archive, data, schema, out;
  bool admissibility = false;
  double c1 = 1.7;
  double c2 = 0.35;
  double threshold = 0.5;
  std::string rates;
  bool odds_ratios = false;
  double q_lo = 0.1;
  double q_hi = 0.9;
};

struct PredictArgs {
  std::string archive, data, schema, grid, out;
};

mmm::RetainSet parse_retain(const std::string& spec) {
  mmm::RetainSet retain;
  retain.lambda = retain.kernels = retain.mu = retain.sigma = retain.spatial = false;
  std::stringstream ss(spec);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item == "lambda") {
      retain.lambda = true;
    } else if (item == "theta") {
      retain.kernels = true;
    } else if (item == "mu") {
      retain.mu = true;
    } else if (item == "sigma") {
      retain.sigma = true;
    } else if (item == "spatial") {
      retain.spatial = true;
    } else if (!item.empty()) {
      throw mmm::ValidationError("unknown retain field '" + item + "'");
    }
  }
  return retain;
}

int run_simulate(const SimulateArgs& args) {
  const mmm::ScenarioId id = mmm::scenario_from_string(args.scenario);
  const mmm::ScenarioSpec spec = mmm::ScenarioSpec::defaults(id, args.subjects, args.seed);
  const mmm::SimulatedData data = mmm::generate(spec);
  mmm::write_simulation(data, spec, args.out);
  std::cout << "scenario " << args.scenario << ": wrote " << data.dataset.n() << " subjects x "
            << data.dataset.p() << " variables to " << args.out << "\n";
  return 0;
}

int run_fit(const FitArgs& args) {
  const auto started = std::chrono::steady_clock::now();
  const mmm::DatasetSchema schema = mmm::load_schema(args.schema);
  mmm::LoadedData loaded = mmm::load_dataset(args.data, schema);
  const mmm::Hyperparams hyper = mmm::default_hyperparams(loaded.dataset, loaded.partition);

  mmm::ChainConfig config;
  config.iterations = args.iterations;
  config.burn_in = args.burn_in;
  config.thin = args.thin;
  config.seed = args.seed;
  config.retain = parse_retain(args.retain);
  config.validate();

  const bool spatial = args.variant == "spatiotemporal";
  if (!spatial && args.variant != "plain") {
    throw mmm::ValidationError("unknown variant '" + args.variant + "'");
  }
  if (spatial && !loaded.covariates) {
    throw mmm::ValidationError(
        "spatiotemporal variant requires time and coordinate columns in the schema");
  }

  mmm::ArchiveManifest manifest;
  manifest.variant = spatial ? "spatiotemporal" : "plain";
  manifest.seed = config.seed;
  manifest.iterations = config.iterations;
  manifest.burn_in = config.burn_in;
  manifest.thin = config.thin;
  manifest.collapsed_mu_first = config.collapsed_mu_first;
  manifest.dataset_digest = mmm::dataset_digest(loaded.dataset);
  manifest.n = loaded.dataset.n();
  manifest.p = loaded.dataset.p();
  manifest.num_groups = loaded.partition.num_groups;
  manifest.levels = loaded.dataset.levels;
  manifest.nugget = args.nugget;

  mmm::ChainSamples samples;
  int first_sweep = 1;
  if (args.resume) {
    mmm::LoadedArchive previous = mmm::load_archive(args.out);
    if (previous.manifest.dataset_digest != manifest.dataset_digest) {
      throw mmm::ValidationError("resume: dataset digest does not match the archive");
    }
    if (previous.manifest.variant != manifest.variant) {
      throw mmm::ValidationError("resume: variant does not match the archive");
    }
    if (previous.manifest.seed != config.seed) {
      throw mmm::ValidationError("resume: seed does not match the archive");
    }
    if (previous.manifest.completed_iterations >= config.iterations) {
      throw mmm::ValidationError("resume: archive already has that many iterations");
    }
    samples = std::move(previous.samples);
    first_sweep = previous.manifest.completed_iterations + 1;
  } else {
    samples.meta.seed = config.seed;
    samples.meta.iterations = config.iterations;
    samples.meta.burn_in = config.burn_in;
    samples.meta.thin = config.thin;
    samples.meta.dataset_digest = manifest.dataset_digest;
  }
  samples.meta.iterations = config.iterations;

  if (spatial) {
    manifest.num_epochs = loaded.covariates->num_epochs();
    manifest.epoch_labels = loaded.covariates->epoch_labels;
    mmm::StConfig st_config = mmm::StConfig::defaults(loaded.partition.num_groups);
    st_config.nugget = args.nugget;
    st_config.proposal_sd = args.proposal_sd;
    st_config.adapt_proposals = !args.no_adapt;
    mmm::StState state =
        args.resume ? mmm::load_checkpoint_st(args.out)
                    : mmm::init_state_st(loaded.dataset, loaded.partition, hyper,
                                         *loaded.covariates, st_config, config.seed);
    mmm::advance_chain_st(loaded.dataset, loaded.partition, hyper, *loaded.covariates, st_config,
                          config, state, first_sweep, samples);
    manifest.completed_iterations = config.iterations;
    manifest.wall_time_sec =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    mmm::save_archive(args.out, samples, manifest);
    mmm::save_checkpoint(args.out, state.base, &state);
  } else {
    mmm::ChainState state = args.resume
                                ? mmm::load_checkpoint_plain(args.out)
                                : mmm::init_state(loaded.dataset, loaded.partition, hyper,
                                                  config.seed);
    mmm::advance_chain(loaded.dataset, loaded.partition, hyper, config, state, first_sweep,
                       samples);
    manifest.completed_iterations = config.iterations;
    manifest.wall_time_sec =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    mmm::save_archive(args.out, samples, manifest);
    mmm::save_checkpoint(args.out, state, nullptr);
  }

  const auto switches =
      mmm::label_switch_monitor(samples, loaded.partition, mmm::LabelSwitchOptions{});
  std::cout << "fit: " << samples.num_draws() << " retained draws in " << std::fixed
            << manifest.wall_time_sec << "s";
  for (const auto& report : switches) {
    if (report.flagged) {
      std::cout << "; WARNING: label switching suspected in group " << report.group + 1 << " ("
                << report.switch_count << " sign changes)";
    }
  }
  std::cout << "\n";
  return 0;
}

Eigen::VectorXd load_rates(const std::string& path, int n) {
  std::ifstream in(path);
  if (!in) throw mmm::ParseError("cannot open rates file " + path);
  std::vector<double> values;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (values.empty() && (line == "rate" || line == "rates")) continue;
    try {
      values.push_back(std::stod(line));
    } catch (const std::exception&) {
      throw mmm::ParseError("non-numeric rate '" + line + "'");
    }
  }
  if (int(values.size()) != n) {
    throw mmm::ValidationError("rates file has " + std::to_string(values.size()) +
                               " rows, expected " + std::to_string(n));
  }
  return Eigen::Map<Eigen::VectorXd>(values.data(), Eigen::Index(values.size()));
}

void write_rate_cell(std::ofstream& out, const mmm::RateCell& cell) {
  if (cell.present) {
    out << cell.median << ',' << cell.q_lo << ',' << cell.q_hi;
  } else {
    out << ",,";
  }
}

int run_report(const ReportArgs& args) {
  const mmm::DatasetSchema schema = mmm::load_schema(args.schema);
  const mmm::LoadedData loaded = mmm::load_dataset(args.data, schema);
  const mmm::LoadedArchive archive = mmm::load_archive(args.archive);
  std::filesystem::create_directories(args.out);
  const std::filesystem::path out_dir(args.out);

  const mmm::FitReport fit =
      mmm::l1_fit_report(archive.samples, loaded.dataset, loaded.partition);
  {
    std::ofstream out(out_dir / "marginal_l1.csv");
    out << "variable,name,l1\n";
    for (int j = 0; j < loaded.dataset.p(); ++j) {
      out << j + 1 << ',' << loaded.dataset.names[std::size_t(j)] << ',' << fit.marginal_l1[j]
          << "\n";
    }
  }
  {
    std::ofstream out(out_dir / "bivariate_l1.csv");
    out << "variable_a,variable_b,name_a,name_b,l1\n";
    for (const auto& pair : fit.bivariate_l1) {
      out << pair.j + 1 << ',' << pair.k + 1 << ',' << loaded.dataset.names[std::size_t(pair.j)]
          << ',' << loaded.dataset.names[std::size_t(pair.k)] << ',' << pair.l1 << "\n";
    }
  }

  nlohmann::json summary;
  summary["marginal_l1"] = {{"mean", fit.marginal_mean},
                            {"q10", fit.marginal_q10},
                            {"q90", fit.marginal_q90}};
  summary["bivariate_l1"] = {{"mean", fit.bivariate_mean},
                             {"q10", fit.bivariate_q10},
                             {"q90", fit.bivariate_q90}};

  const auto correlation = mmm::score_correlation_summary(
      archive.samples, loaded.covariates, args.q_lo, args.q_hi);
  summary["correlation"] = nlohmann::json::array();
  for (const auto& c : correlation) {
    summary["correlation"].push_back({{"epoch", c.epoch_label},
                                      {"mean", c.mean},
                                      {"sd", c.sd},
                                      {"q_lo", c.q_lo},
                                      {"q_hi", c.q_hi},
                                      {"interval_includes_zero", c.interval_includes_zero},
                                      {"separate_mm_viable", c.interval_includes_zero}});
  }

  const auto switches =
      mmm::label_switch_monitor(archive.samples, loaded.partition, mmm::LabelSwitchOptions{});
  summary["label_switching"] = nlohmann::json::array();
  for (const auto& s : switches) {
    summary["label_switching"].push_back({{"group", s.group + 1},
                                          {"anchor_variable", s.anchor_variable + 1},
                                          {"switch_count", s.switch_count},
                                          {"flagged", s.flagged}});
  }

  if (args.admissibility) {
    mmm::AdmissibilityRule rule;
    rule.c1 = args.c1;
    rule.c2 = args.c2;
    rule.posterior_threshold = args.threshold;
    const auto conditions = mmm::admissible_conditions(archive.samples, loaded.dataset, rule);
    std::ofstream out(out_dir / "admissibility.csv");
    out << "variable,name,level,profile,posterior_prob,admissible\n";
    for (const auto& c : conditions) {
      out << c.variable + 1 << ',' << loaded.dataset.names[std::size_t(c.variable)] << ','
          << c.level + 1 << ',' << c.profile + 1 << ',' << c.posterior_prob << ','
          << (c.admissible ? 1 : 0) << "\n";
    }
  }

  if (!args.rates.empty()) {
    const Eigen::VectorXd rates = load_rates(args.rates, loaded.dataset.n());
    mmm::TertileOptions options;
    options.q_lo = args.q_lo;
    options.q_hi = args.q_hi;
    const mmm::TertileRateTable table =
        mmm::tertile_rate_table(archive.samples, rates, options);
    std::ofstream out(out_dir / "rate_table.csv");
    out << "row_tertile,col_low_median,col_low_qlo,col_low_qhi,"
           "col_mid_median,col_mid_qlo,col_mid_qhi,"
           "col_high_median,col_high_qlo,col_high_qhi,"
           "row_marginal_median,row_marginal_qlo,row_marginal_qhi\n";
    const char* names[3] = {"low", "mid", "high"};
    for (int r = 0; r < 3; ++r) {
      out << names[r] << ',';
      for (int c = 0; c < 3; ++c) {
        write_rate_cell(out, table.cells[r][c]);
        out << ',';
      }
      write_rate_cell(out, table.row_marginal[r]);
      out << "\n";
    }
    out << "marginal,";
    for (int c = 0; c < 3; ++c) {
      write_rate_cell(out, table.col_marginal[c]);
      out << (c < 2 ? "," : ",,,\n");
    }
    summary["rate_table_double_gradient_violations"] =
        mmm::count_double_gradient_violations(table);
  }

  if (args.odds_ratios) {
    if (!loaded.covariates) {
      throw mmm::ValidationError("odds-ratio summary requires covariates in the schema");
    }
    const auto odds = mmm::score_odds_ratio_summary(archive.samples, *loaded.covariates);
    std::ofstream out(out_dir / "odds_ratios.csv");
    out << "epoch,mean,median,q10,q25,q75,q90\n";
    for (const auto& o : odds) {
      out << o.epoch_label << ',' << o.mean << ',' << o.median << ',' << o.q10 << ',' << o.q25
          << ',' << o.q75 << ',' << o.q90 << "\n";
    }
  }

  std::ofstream out(out_dir / "summary.json");
  out << summary.dump(2) << "\n";
  std::cout << "report: wrote " << out_dir.string() << "\n";
  return 0;
}

int run_predict(const PredictArgs& args) {
  const mmm::DatasetSchema schema = mmm::load_schema(args.schema);
  const mmm::LoadedData loaded = mmm::load_dataset(args.data, schema);
  if (!loaded.covariates) {
    throw mmm::ValidationError("predict-grid requires covariates in the schema");
  }
  const mmm::LoadedArchive archive = mmm::load_archive(args.archive);
  if (archive.manifest.variant != "spatiotemporal") {
    throw mmm::ValidationError("predict-grid requires a spatiotemporal archive");
  }
  if (archive.manifest.dataset_digest != mmm::dataset_digest(loaded.dataset)) {
    throw mmm::ValidationError("archive and dataset digests do not match");
  }

  std::ifstream in(args.grid);
  if (!in) throw mmm::ParseError("cannot open grid file " + args.grid);
  std::vector<double> xs, ys;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (first && line.find("x") != std::string::npos) {
      first = false;
      continue;
    }
    first = false;
    std::stringstream ss(line);
    std::string a, b;
    if (!std::getline(ss, a, ',') || !std::getline(ss, b, ',')) {
      throw mmm::ParseError("grid rows need x,y columns");
    }
    try {
      xs.push_back(std::stod(a));
      ys.push_back(std::stod(b));
    } catch (const std::exception&) {
      throw mmm::ParseError("non-numeric grid coordinate in '" + line + "'");
    }
  }
  Eigen::MatrixXd grid(Eigen::Index(xs.size()), 2);
  for (std::size_t i = 0; i < xs.size(); ++i) {
    grid(Eigen::Index(i), 0) = xs[i];
    grid(Eigen::Index(i), 1) = ys[i];
  }

  const auto rows = mmm::predict_zeta(grid, archive.samples, *loaded.covariates,
                                      archive.manifest.nugget);
  std::ofstream out(args.out);
  if (!out) throw mmm::ParseError("cannot write " + args.out);
  out << "epoch,group,x,y,mean,sd,prob_scale_mean\n";
  for (const auto& row : rows) {
    out << row.epoch_label << ',' << row.group << ',' << row.x << ',' << row.y << ','
        << row.mean << ',' << row.sd << ',' << row.prob_scale_mean << "\n";
  }
  std::cout << "predict-grid: wrote " << rows.size() << " rows to " << args.out << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bayesian multivariate mixed membership sampler"};
  app.require_subcommand(1);

  SimulateArgs sim;
  auto* simulate = app.add_subcommand("simulate", "Generate a synthetic scenario dataset");
  simulate->add_option("--scenario", sim.scenario, "Scenario id: 1, 2, 3, 4 or misspec");
  simulate->add_option("--n", sim.subjects, "Subject count");
  simulate->add_option("--seed", sim.seed, "RNG seed");
  simulate->add_option("--out", sim.out, "Output directory")->required();

  FitArgs fit;
  auto* fit_cmd = app.add_subcommand("fit", "Run the Gibbs sampler and write a chain archive");
  fit_cmd->add_option("--data", fit.data, "Dataset CSV")->required();
  fit_cmd->add_option("--schema", fit.schema, "Schema JSON")->required();
  fit_cmd->add_option("--out", fit.out, "Archive directory")->required();
  fit_cmd->add_option("--iterations", fit.iterations, "Total Gibbs sweeps");
  fit_cmd->add_option("--burn-in", fit.burn_in, "Discarded initial sweeps");
  fit_cmd->add_option("--thin", fit.thin, "Retain every thin-th sweep");
  fit_cmd->add_option("--seed", fit.seed, "RNG seed");
  fit_cmd->add_option("--variant", fit.variant, "plain or spatiotemporal");
  fit_cmd->add_option("--retain", fit.retain, "Comma list of retained fields");
  fit_cmd->add_flag("--resume", fit.resume, "Continue a checkpointed archive");
  fit_cmd->add_option("--nugget", fit.nugget, "GP nugget (spatiotemporal)");
  fit_cmd->add_option("--proposal-sd", fit.proposal_sd, "Length-scale proposal sd");
  fit_cmd->add_flag("--no-adapt", fit.no_adapt, "Disable burn-in proposal adaptation");

  ReportArgs rep;
  auto* report = app.add_subcommand("report", "Posterior-predictive and profile reports");
  report->add_option("--archive", rep.archive, "Chain archive directory")->required();
  report->add_option("--data", rep.data, "Dataset CSV")->required();
  report->add_option("--schema", rep.schema, "Schema JSON")->required();
  report->add_option("--out", rep.out, "Report output directory")->required();
  report->add_flag("--admissibility", rep.admissibility, "Emit the admissibility table");
  report->add_option("--c1", rep.c1, "Admissibility multiplier c1");
  report->add_option("--c2", rep.c2, "Admissibility relative excess c2");
  report->add_option("--threshold", rep.threshold, "Posterior probability threshold");
  report->add_option("--rates", rep.rates, "Per-subject outcome rates CSV");
  report->add_flag("--odds-ratios", rep.odds_ratios, "Emit per-epoch score odds ratios");
  report->add_option("--q-lo", rep.q_lo, "Lower report quantile");
  report->add_option("--q-hi", rep.q_hi, "Upper report quantile");

  PredictArgs pred;
  auto* predict = app.add_subcommand("predict-grid", "Spatial-effect predictions over a grid");
  predict->add_option("--archive", pred.archive, "Chain archive directory")->required();
  predict->add_option("--data", pred.data, "Dataset CSV")->required();
  predict->add_option("--schema", pred.schema, "Schema JSON")->required();
  predict->add_option("--grid", pred.grid, "Grid CSV with x,y columns")->required();
  predict->add_option("--out", pred.out, "Output CSV")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    if (simulate->parsed()) return run_simulate(sim);
    if (fit_cmd->parsed()) return run_fit(fit);
    if (report->parsed()) return run_report(rep);
    if (predict->parsed()) return run_predict(pred);
  } catch (const mmm::NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const mmm::ValidationError& e) {
    std::cerr << "validation error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const mmm::ParseError& e) {
    std::cerr << "parse error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return kExitUsage;
}
