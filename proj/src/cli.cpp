#include "qir/cli.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <optional>
#include <ostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "qir/csv.hpp"
#include "qir/errors.hpp"
#include "qir/inference.hpp"
#include "qir/model_io.hpp"
#include "qir/optim.hpp"
#include "qir/sim.hpp"
#include "qir/text.hpp"
#include "qir/tuning.hpp"

namespace qir::cli {

namespace fs = std::filesystem;

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Common {
  std::string family = "tukey";
  double grid_lo = 0.5;
  double grid_hi = 0.99;
  int grid_k = 10;
  std::string penalty = "scad";
  double shape = 0.0;
  std::uint64_t seed = 1;
  bool tail_scaling = false;
  bool intercept = true;
  std::string response = "y";
  int threads = 0;
};

void add_model_flags(CLI::App* app, Common& c) {
  app->add_option("--family", c.family, "tukey | gld | gaussian")->capture_default_str();
  app->add_option("--grid-lo", c.grid_lo, "lower end of the quantile range")->capture_default_str();
  app->add_option("--grid-hi", c.grid_hi, "upper end of the quantile range")->capture_default_str();
  app->add_option("--grid-k", c.grid_k, "number of grid levels")->capture_default_str();
  app->add_option("--penalty", c.penalty, "scad | mcp")->capture_default_str();
  app->add_option("--penalty-shape", c.shape, "SCAD a or MCP gamma (default 3.7 / 3)");
  app->add_option("--seed", c.seed, "random seed")->capture_default_str();
  app->add_flag("--tail-scaling", c.tail_scaling, "min-max scale covariates of the tail indices");
  app->add_flag("--intercept,!--no-intercept", c.intercept, "prepend an intercept column")->capture_default_str();
  app->add_option("--response", c.response, "response column name")->capture_default_str();
  app->add_option("--threads", c.threads, "worker threads (0 = runtime default)")->capture_default_str();
}

void require_file(const std::string& path, const char* what) {
  if (!fs::is_regular_file(path)) throw UsageError(std::string(what) + " '" + path + "' does not exist");
}

void require_parent(const std::string& path) {
  const fs::path parent = fs::path(path).parent_path();
  if (!parent.empty() && !fs::is_directory(parent)) {
    throw UsageError("output directory '" + parent.string() + "' does not exist");
  }
}

PenaltySpec penalty_from(const Common& c, double lambda) {
  if (c.penalty == "scad") return PenaltySpec::scad(lambda, c.shape > 0.0 ? c.shape : 3.7);
  if (c.penalty == "mcp") return PenaltySpec::mcp(lambda, c.shape > 0.0 ? c.shape : 3.0);
  throw UsageError("--penalty must be scad or mcp");
}

QuantileFamily family_from(const Common& c) {
  try {
    return parse_family(c.family);
  } catch (const DomainError& e) {
    throw UsageError(e.what());
  }
}

Dataset load_training(const std::string& path, const Common& c) {
  Dataset data = parse_dataset(path, {c.response, c.intercept, true});
  if (c.tail_scaling) data.tail_scaling = TailScaling::fit_min_max(data.X);
  return data;
}

std::vector<double> parse_list(const std::string& text, const char* flag) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw UsageError(std::string(flag) + ": '" + item + "' is not a number");
    }
  }
  if (out.empty()) throw UsageError(std::string(flag) + " needs at least one value");
  return out;
}

void write_json(const nlohmann::json& doc, const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot write '" + path.string() + "'");
  out << doc.dump(2) << '\n';
}

nlohmann::json covariance_to_json(const CovarianceEstimate& cov) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index i = 0; i < cov.sandwich.rows(); ++i) {
    std::vector<double> r(cov.sandwich.cols());
    for (Eigen::Index j = 0; j < cov.sandwich.cols(); ++j) r[j] = cov.sandwich(i, j);
    rows.push_back(r);
  }
  return {{"n", cov.n}, {"bandwidth", cov.bandwidth}, {"omega1_condition", cov.omega1_condition}, {"sandwich", rows}};
}

CovarianceEstimate covariance_from_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open '" + path.string() + "'");
  try {
    const auto doc = nlohmann::json::parse(in);
    CovarianceEstimate cov;
    cov.n = doc.at("n").get<Eigen::Index>();
    cov.bandwidth = doc.value("bandwidth", 0.0);
    const auto& rows = doc.at("sandwich");
    const auto m = static_cast<Eigen::Index>(rows.size());
    cov.sandwich.resize(m, m);
    for (Eigen::Index i = 0; i < m; ++i) {
      const auto r = rows.at(i).get<std::vector<double>>();
      if (static_cast<Eigen::Index>(r.size()) != m) throw ParseError("covariance matrix is not square");
      for (Eigen::Index j = 0; j < m; ++j) cov.sandwich(i, j) = r[j];
    }
    if (cov.n <= 0) throw ParseError("covariance file needs n > 0");
    return cov;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("malformed covariance file: " + std::string(e.what()));
  }
}

// ---------------------------------------------------------------------------

struct FitArgs {
  Common common;
  std::string data, out, covariance_out, report;
  std::optional<double> lambda;
  double tol = 1e-6;
  int max_iter = 10000;
};

int do_fit(const FitArgs& a, std::ostream& out) {
  require_file(a.data, "data file");
  require_parent(a.out);
  if (!a.covariance_out.empty()) require_parent(a.covariance_out);
  if (!a.report.empty()) require_parent(a.report);
  const QuantileFamily family = family_from(a.common);
  const LinkSet links = default_links(family);
  if (a.lambda && !(*a.lambda > 0.0)) throw UsageError("--lambda must be positive");
  if (a.lambda && !a.covariance_out.empty()) throw UsageError("covariance output is only available without --lambda");
  const PenaltySpec penalty = penalty_from(a.common, a.lambda.value_or(1.0));
  LevelGrid grid = [&] {
    try {
      return quantile_grid(a.common.grid_lo, a.common.grid_hi, a.common.grid_k);
    } catch (const DomainError& e) {
      throw UsageError(e.what());
    }
  }();

  const Dataset data = load_training(a.data, a.common);
  FitConfig config;
  config.tol = a.tol;
  config.max_iter = a.max_iter;
  const FitResult fit =
      a.lambda ? fit_regularized(family, links, data, grid, penalty, config) : fit_cqr(family, links, data, grid, config);
  const QirModel model = fitted_model(family, links, data, fit);
  save_model(model, a.out);

  nlohmann::json report = {{"n", data.n()},
                           {"p", data.p()},
                           {"family", std::string(family_name(family))},
                           {"grid", grid.taus()},
                           {"iterations", fit.n_iter},
                           {"converged", fit.converged},
                           {"final_loss", fit.final_loss},
                           {"loss_trace", fit.loss_trace}};
  if (a.lambda) {
    report["penalty"] = a.common.penalty;
    report["lambda"] = *a.lambda;
  }
  if (!a.covariance_out.empty()) {
    const CovarianceEstimate cov = estimate_sandwich(model, data, grid, default_bandwidth(data.n(), grid));
    write_json(covariance_to_json(cov), a.covariance_out);
  }
  if (!a.report.empty()) write_json(report, a.report);

  out << "n\t" << data.n() << "\np\t" << data.p() << "\niterations\t" << fit.n_iter << "\nconverged\t"
      << (fit.converged ? "yes" : "no") << "\nfinal_loss\t" << format_short(fit.final_loss) << '\n';
  for (int j = 0; j < model.d(); ++j) {
    out << "beta" << j + 1;
    for (double v : model.block(j)) out << '\t' << format_short(v);
    out << '\n';
  }
  return kExitOk;
}

struct PredictArgs {
  Common common;
  std::string model, data, covariance, delta_data, out;
  std::string taus = "0.991";
  double level = 0.95;
  std::string delta_source = "sample-average";
};

int do_predict(const PredictArgs& a, std::ostream& out) {
  require_file(a.model, "model file");
  require_file(a.data, "data file");
  if (!a.covariance.empty()) require_file(a.covariance, "covariance file");
  if (!a.out.empty()) require_parent(a.out);
  const std::vector<double> taus = parse_list(a.taus, "--tau");
  if (!(a.level > 0.0 && a.level < 1.0)) throw UsageError("--level must lie in (0,1)");
  DeltaSource source;
  if (a.delta_source == "query") {
    source = DeltaSource::QueryPoint;
  } else if (a.delta_source == "sample-average") {
    source = DeltaSource::SampleAverage;
    if (!a.covariance.empty() && a.delta_data.empty()) {
      throw UsageError("--delta-source sample-average needs --delta-data (the training CSV)");
    }
  } else {
    throw UsageError("--delta-source must be query or sample-average");
  }
  if (!a.delta_data.empty()) require_file(a.delta_data, "delta data file");

  const QirModel model = load_model(a.model);
  const Dataset data = parse_dataset(a.data, {a.common.response, a.common.intercept, false});
  if (data.p() != model.p()) {
    throw UsageError("data has " + std::to_string(data.p()) + " covariates, model expects " +
                     std::to_string(model.p()));
  }
  std::optional<CovarianceEstimate> cov;
  Dataset delta_rows;
  if (!a.covariance.empty()) {
    cov = covariance_from_json(a.covariance);
    if (source == DeltaSource::SampleAverage) {
      delta_rows = parse_dataset(a.delta_data, {a.common.response, a.common.intercept, false});
      if (delta_rows.p() != model.p()) throw UsageError("delta data does not match the model");
    }
  }

  std::ofstream file;
  if (!a.out.empty()) {
    file.open(a.out);
    if (!file) throw ParseError("cannot write '" + a.out + "'");
  }
  std::ostream& sink = a.out.empty() ? out : file;
  const auto fmt = a.out.empty() ? format_short : format_full;
  sink << "row\ttau\tquantile" << (cov ? "\tlower\tupper" : "") << '\n';
  for (Eigen::Index i = 0; i < data.n(); ++i) {
    for (double t : taus) {
      sink << i + 1 << '\t' << fmt(t) << '\t';
      if (cov) {
        const Interval ci = predict_quantile_ci(model, *cov, delta_rows, data.row(i), t, a.level, source);
        sink << fmt(ci.center) << '\t' << fmt(ci.lower) << '\t' << fmt(ci.upper);
      } else {
        sink << fmt(predict_quantile(model, data.row(i), t));
      }
      sink << '\n';
    }
  }
  return kExitOk;
}

struct TuneArgs {
  Common common;
  std::string data, out;
  std::string lambdas, tau_l, targets = "0.991,0.995";
  int folds = 5;
  int repeats = 5;
};

int do_tune(const TuneArgs& a, std::ostream& out) {
  require_file(a.data, "data file");
  if (!a.out.empty()) require_parent(a.out);
  const QuantileFamily family = family_from(a.common);
  TuneSpec spec;
  spec.tau_U = a.common.grid_hi;
  spec.K = a.common.grid_k;
  spec.lambdas = parse_list(a.lambdas, "--lambdas");
  spec.tau_L_candidates = a.tau_l.empty() ? std::vector<double>{a.common.grid_lo} : parse_list(a.tau_l, "--tau-l");
  spec.target_taus = parse_list(a.targets, "--targets");
  spec.folds = a.folds;
  spec.repeats = a.repeats;
  spec.seed = a.common.seed;
  spec.threads = a.common.threads;
  try {
    spec.validate();
  } catch (const DomainError& e) {
    throw UsageError(e.what());
  }
  const PenaltySpec shape = penalty_from(a.common, spec.lambdas.front());

  const Dataset data = load_training(a.data, a.common);
  const TuneResult result = cross_validate(data, spec, family, default_links(family), regularized_fitter(shape, {}));
  if (!a.out.empty()) {
    std::ofstream file(a.out);
    if (!file) throw ParseError("cannot write '" + a.out + "'");
    write_tuning_report(result, file);
  }
  const double n_train = static_cast<double>(data.n()) * (spec.folds - 1) / spec.folds;
  out << "tau_L\tlambda_star\tpe\n";
  for (size_t t = 0; t < spec.tau_L_candidates.size(); ++t) {
    out << format_short(spec.tau_L_candidates[t]) << '\t' << format_short(result.lambda_star[t]) << '\t'
        << format_short(result.pe_at_lambda_star[t]) << '\n';
  }
  out << "selected_tau_L\t" << format_short(result.tau_L_star) << "\nselected_lambda\t"
      << format_short(result.lambda_star_at_tau_L_star) << "\nrefit_lambda\t"
      << format_short(rescale_lambda(result.lambda_star_at_tau_L_star, n_train, static_cast<double>(data.n())))
      << '\n';
  return kExitOk;
}

struct SimulateArgs {
  std::string config, out;
  int replications = 0;
  int threads = 0;
};

int do_simulate(const SimulateArgs& a, std::ostream& out) {
  require_file(a.config, "config file");
  if (a.out.empty()) throw UsageError("--out is required");
  nlohmann::json doc;
  {
    std::ifstream in(a.config);
    try {
      doc = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
      throw ParseError("malformed config: " + std::string(e.what()));
    }
  }
  const std::string kind = doc.value("kind", "");
  ExperimentReport report;
  if (kind == "lowdim") {
    LowDimConfig c = lowdim_config_from_json(doc);
    if (a.replications > 0) c.replications = a.replications;
    c.threads = a.threads;
    report = run_lowdim_experiment(c);
  } else if (kind == "highdim") {
    HighDimConfig c = highdim_config_from_json(doc);
    if (a.replications > 0) c.replications = a.replications;
    c.threads = a.threads;
    report = run_highdim_experiment(c);
  } else {
    throw UsageError("config 'kind' must be lowdim or highdim");
  }
  for (const auto& path : write_report(report, a.out)) out << path.string() << '\n';
  return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Parametric quantile regression at extreme levels"};
  app.name("qir");
  app.require_subcommand(1, 1);

  FitArgs fit;
  auto* fit_cmd = app.add_subcommand("fit", "fit a model and write it as JSON");
  add_model_flags(fit_cmd, fit.common);
  fit_cmd->add_option("--data", fit.data, "training CSV")->required();
  fit_cmd->add_option("--out", fit.out, "model JSON path")->required();
  fit_cmd->add_option("--lambda", fit.lambda, "penalty level; omit for the unpenalized fit");
  fit_cmd->add_option("--covariance-out", fit.covariance_out, "write the sandwich covariance JSON");
  fit_cmd->add_option("--report", fit.report, "write a JSON fit report");
  fit_cmd->add_option("--tol", fit.tol, "parameter-change tolerance")->capture_default_str();
  fit_cmd->add_option("--max-iter", fit.max_iter, "iteration cap")->capture_default_str();

  PredictArgs pred;
  auto* pred_cmd = app.add_subcommand("predict", "predict conditional quantiles");
  pred_cmd->add_option("--model", pred.model, "model JSON")->required();
  pred_cmd->add_option("--data", pred.data, "covariate CSV (response column optional)")->required();
  pred_cmd->add_option("--tau", pred.taus, "comma-separated levels")->capture_default_str();
  pred_cmd->add_option("--covariance", pred.covariance, "covariance JSON from fit; adds interval columns");
  pred_cmd->add_option("--level", pred.level, "interval confidence level")->capture_default_str();
  pred_cmd->add_option("--delta-source", pred.delta_source, "sample-average | query")->capture_default_str();
  pred_cmd->add_option("--delta-data", pred.delta_data, "training CSV for the sample-average gradient");
  pred_cmd->add_flag("--intercept,!--no-intercept", pred.common.intercept, "prepend an intercept column");
  pred_cmd->add_option("--response", pred.common.response, "response column name (ignored if absent)");
  pred_cmd->add_option("--out", pred.out, "write predictions to this file at full precision");

  TuneArgs tune;
  auto* tune_cmd = app.add_subcommand("tune", "cross-validate lambda and the lower grid end");
  add_model_flags(tune_cmd, tune.common);
  tune_cmd->add_option("--data", tune.data, "training CSV")->required();
  tune_cmd->add_option("--lambdas", tune.lambdas, "comma-separated lambda grid")->required();
  tune_cmd->add_option("--tau-l", tune.tau_l, "comma-separated tau_L candidates (default --grid-lo)");
  tune_cmd->add_option("--targets", tune.targets, "comma-separated target levels for PE")->capture_default_str();
  tune_cmd->add_option("--folds", tune.folds, "folds")->capture_default_str();
  tune_cmd->add_option("--repeats", tune.repeats, "repeats")->capture_default_str();
  tune_cmd->add_option("--out", tune.out, "write the per-cell tuning report");

  SimulateArgs sim;
  auto* sim_cmd = app.add_subcommand("simulate", "run a Monte Carlo experiment from a JSON config");
  sim_cmd->add_option("--config", sim.config, "experiment config JSON")->required();
  sim_cmd->add_option("--out", sim.out, "report directory")->required();
  sim_cmd->add_option("--replications", sim.replications, "override the replication count");
  sim_cmd->add_option("--threads", sim.threads, "worker threads (0 = runtime default)");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return kExitUsage;
  }

  try {
    if (fit_cmd->parsed()) return do_fit(fit, out);
    if (pred_cmd->parsed()) return do_predict(pred, out);
    if (tune_cmd->parsed()) return do_tune(tune, out);
    return do_simulate(sim, out);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const DomainError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "numerical failure: " << e.what() << '\n';
    return kExitNumerical;
  }
}

}  // namespace qir::cli
