#include "qir/sim.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include <omp.h>

#include "qir/errors.hpp"
#include "qir/text.hpp"
#include "qir/tuning.hpp"

namespace qir {

namespace {

Eigen::VectorXd padded_beta0(Eigen::Index p) {
  if (p < 3) throw DomainError("the simulation design needs p >= 3");
  const double blocks[3][3] = {{1.0, 0.5, -1.0}, {1.0, 0.5, -1.0}, {1.0, -1.0, 1.0}};
  Eigen::VectorXd beta = Eigen::VectorXd::Zero(3 * p);
  for (int j = 0; j < 3; ++j) {
    for (int l = 0; l < 3; ++l) beta(j * p + l) = blocks[j][l];
  }
  return beta;
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

double mean_of(const std::vector<double>& v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

double sd_of(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

double median_of(std::vector<double> v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(v.begin(), v.end());
  const size_t m = v.size() / 2;
  return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

int worker_count(int requested) { return requested > 0 ? requested : omp_get_max_threads(); }

}  // namespace

SimScenario SimScenario::lowdim(Eigen::Index n, std::uint64_t seed) {
  SimScenario s;
  s.p = 3;
  s.beta0 = padded_beta0(3);
  s.n = n;
  s.seed = seed;
  return s;
}

SimScenario SimScenario::highdim(Eigen::Index p, Eigen::Index n, std::uint64_t seed) {
  SimScenario s;
  s.p = p;
  s.beta0 = padded_beta0(p);
  s.n = n;
  s.seed = seed;
  return s;
}

QirModel SimScenario::true_model(std::optional<TailScaling> scaling) const {
  return QirModel(family, links, p, beta0, std::move(scaling));
}

std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream, std::uint64_t index) {
  return splitmix64(splitmix64(splitmix64(master) ^ stream) ^ index);
}

Dataset generate_sample(const SimScenario& scenario) {
  if (scenario.n <= 0) throw DomainError("sample size must be positive");
  if (scenario.beta0.size() != scenario.family.dim() * scenario.p) {
    throw DomainError("true coefficients do not match p");
  }
  std::mt19937_64 gen(scenario.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);

  RowMatrix X(scenario.n, scenario.p);
  Eigen::VectorXd u(scenario.n);
  for (Eigen::Index i = 0; i < scenario.n; ++i) {
    X(i, 0) = 1.0;
    for (Eigen::Index l = 1; l < scenario.p; ++l) X(i, l) = normal(gen);
    double draw = unif(gen);
    while (draw <= 0.0) draw = unif(gen);
    u(i) = draw;
  }
  std::optional<TailScaling> scaling;
  if (scenario.tail_scaling) scaling = TailScaling::fit_min_max(X);
  const QirModel truth = scenario.true_model(scaling);

  Eigen::VectorXd y(scenario.n);
  for (Eigen::Index i = 0; i < scenario.n; ++i) {
    try {
      y(i) = predict_quantile(truth, {X.data() + i * scenario.p, static_cast<size_t>(scenario.p)}, u(i));
    } catch (const std::exception& e) {
      throw EvaluationError("cannot generate row " + std::to_string(i) + ": " + e.what(), i);
    }
  }
  return Dataset(std::move(y), std::move(X), std::move(scaling));
}

double true_quantile(const SimScenario& scenario, std::span<const double> x, double tau,
                     const std::optional<TailScaling>& scaling) {
  return predict_quantile(scenario.true_model(scaling), x, tau);
}

double pes(const QirModel& model, const SimScenario& scenario, std::span<const double> x, double tau_star) {
  const double diff = predict_quantile(model, x, tau_star) - true_quantile(scenario, x, tau_star, model.tail_scaling());
  return diff * diff;
}

SelectionMetrics selection_metrics(const Eigen::VectorXd& beta_hat, const Eigen::VectorXd& beta0, double zero_tol) {
  if (beta_hat.size() != beta0.size()) throw DomainError("coefficient vectors differ in length");
  int active = 0, inactive = 0, selected = 0, selected_inactive = 0, missed_active = 0;
  for (Eigen::Index l = 0; l < beta0.size(); ++l) {
    const bool is_active = std::abs(beta0(l)) > 0.0;
    const bool is_selected = std::abs(beta_hat(l)) > zero_tol;
    active += is_active;
    inactive += !is_active;
    selected += is_selected;
    selected_inactive += is_selected && !is_active;
    missed_active += is_active && !is_selected;
  }
  SelectionMetrics m;
  m.size = selected;
  m.hit_a = missed_active == 0;
  m.hit_i = selected_inactive == 0;
  m.hit_ai = m.hit_a && m.hit_i;
  m.fp_rate = inactive > 0 ? 100.0 * selected_inactive / inactive : 0.0;
  m.fn_rate = active > 0 ? 100.0 * missed_active / active : 0.0;
  return m;
}

// ---------------------------------------------------------------------------

void HighDimConfig::complete() {
  if (lambda_multipliers.empty()) {
    for (int k = 0; k < 8; ++k) lambda_multipliers.push_back(40.0 * std::pow(0.5, k));
  }
  std::sort(lambda_multipliers.begin(), lambda_multipliers.end(), std::greater<>());
  if (x_points.empty()) {
    std::vector<double> a(p, 0.0), b(p, 0.0);
    a[0] = 1.0, a[1] = 0.1, a[2] = -0.2;
    b[0] = 1.0;
    x_points = {a, b};
  }
}

namespace {

void fill_pes(ReplicationRecord& rec, const QirModel& model, const SimScenario& scenario,
              const std::vector<std::vector<double>>& xs, const std::vector<double>& taus) {
  rec.pes.clear();
  for (const auto& x : xs) {
    for (double t : taus) rec.pes.push_back(pes(model, scenario, x, t));
  }
}

void check_failures(const std::vector<CellAggregate>& cells) {
  for (const auto& cell : cells) {
    const int total = cell.completed + cell.failed;
    if (total > 0 && cell.failed * 5 > total) {
      throw ExperimentError("more than 20% of replications failed in a cell (" + std::to_string(cell.failed) +
                            " of " + std::to_string(total) + ")");
    }
  }
}

std::vector<double> true_values_for(const SimScenario& scenario, const std::vector<std::vector<double>>& xs,
                                    const std::vector<double>& taus) {
  std::vector<double> out;
  for (const auto& x : xs) {
    for (double t : taus) out.push_back(true_quantile(scenario, x, t));
  }
  return out;
}

}  // namespace

ExperimentReport run_lowdim_experiment(const LowDimConfig& config) {
  if (config.replications < 1) throw DomainError("need at least one replication");
  const int N = static_cast<int>(config.sample_sizes.size());
  const int G = static_cast<int>(config.ranges.size());
  const int R = config.replications;

  ExperimentReport report;
  report.kind = "lowdim";
  report.ranges = config.ranges;
  report.x_points = config.x_points;
  report.tau_stars = config.tau_stars;
  report.true_values = true_values_for(SimScenario::lowdim(1, 0), config.x_points, config.tau_stars);
  report.records.resize(static_cast<size_t>(N) * R * G);

  std::vector<LevelGrid> grids;
  for (const auto& range : config.ranges) grids.push_back(quantile_grid(range.tau_L, range.tau_U, config.K));

  const long tasks = static_cast<long>(N) * R;
#pragma omp parallel for schedule(dynamic) num_threads(worker_count(config.threads))
  for (long task = 0; task < tasks; ++task) {
    const int ni = static_cast<int>(task / R);
    const int r = static_cast<int>(task % R);
    const Eigen::Index n = config.sample_sizes[ni];
    SimScenario scenario = SimScenario::lowdim(n, derive_seed(config.master_seed, static_cast<std::uint64_t>(n), r));
    scenario.tail_scaling = config.tail_scaling;

    std::optional<Dataset> data;
    std::string gen_error;
    try {
      data = generate_sample(scenario);
    } catch (const std::exception& e) {
      gen_error = e.what();
    }
    for (int g = 0; g < G; ++g) {
      ReplicationRecord& rec = report.records[(static_cast<size_t>(ni) * R + r) * G + g];
      rec.n = n;
      rec.range = g;
      rec.replication = r;
      if (!data) {
        rec.failed = true;
        rec.error = gen_error;
        continue;
      }
      try {
        const FitResult fit = fit_cqr(scenario.family, scenario.links, *data, grids[g], config.fit);
        const QirModel model = fitted_model(scenario.family, scenario.links, *data, fit);
        rec.converged = fit.converged;
        rec.beta_hat = fit.beta_hat;
        rec.error_norm = (fit.beta_hat - scenario.beta0).norm();
        fill_pes(rec, model, scenario, config.x_points, config.tau_stars);
        if (config.inference) {
          const CovarianceEstimate cov =
              estimate_sandwich(model, *data, grids[g], default_bandwidth(data->n(), grids[g]));
          rec.sandwich = cov.sandwich;
          for (const auto& x : config.x_points) {
            for (double t : config.tau_stars) {
              const Interval ci = predict_quantile_ci(model, cov, *data, x, t, config.ci_level, config.delta_source);
              const double truth = true_quantile(scenario, x, t, model.tail_scaling());
              rec.ci_lower.push_back(ci.lower);
              rec.ci_upper.push_back(ci.upper);
              rec.covered.push_back(ci.lower <= truth && truth <= ci.upper);
            }
          }
        }
      } catch (const std::exception& e) {
        rec.failed = true;
        rec.error = e.what();
      }
    }
  }

  report.cells = aggregate_records(report, false, 3, 9.0);
  check_failures(report.cells);
  return report;
}

ExperimentReport run_highdim_experiment(HighDimConfig config) {
  config.complete();
  if (config.replications < 1) throw DomainError("need at least one replication");
  const int C = static_cast<int>(config.c_values.size());
  const int G = static_cast<int>(config.ranges.size());
  const int R = config.replications;
  const Eigen::VectorXd beta0 = padded_beta0(config.p);
  const double s = static_cast<double>((beta0.array() != 0.0).count());

  ExperimentReport report;
  report.kind = "highdim";
  report.ranges = config.ranges;
  report.x_points = config.x_points;
  report.tau_stars = config.tau_stars;
  report.true_values = true_values_for(SimScenario::highdim(config.p, 1, 0), config.x_points, config.tau_stars);
  report.records.resize(static_cast<size_t>(C) * R * G);

  std::vector<LevelGrid> grids;
  for (const auto& range : config.ranges) grids.push_back(quantile_grid(range.tau_L, range.tau_U, config.K));

  const long tasks = static_cast<long>(C) * R;
#pragma omp parallel for schedule(dynamic) num_threads(worker_count(config.threads))
  for (long task = 0; task < tasks; ++task) {
    const int ci = static_cast<int>(task / R);
    const int r = static_cast<int>(task % R);
    const double c = config.c_values[ci];
    const auto n = static_cast<Eigen::Index>(std::floor(c * s * std::log(static_cast<double>(config.p))));

    SimScenario scenario = SimScenario::highdim(config.p, n, derive_seed(config.master_seed, 1000 + ci, r));
    scenario.tail_scaling = config.tail_scaling;
    SimScenario validation_scenario = scenario;
    validation_scenario.n = config.validation_factor * n;
    validation_scenario.seed = derive_seed(config.master_seed, 2000 + ci, r);

    std::optional<Dataset> train, validation;
    std::string gen_error;
    try {
      train = generate_sample(scenario);
      validation = generate_sample(validation_scenario);
      validation->tail_scaling = train->tail_scaling;
    } catch (const std::exception& e) {
      gen_error = e.what();
    }
    const double rate = std::sqrt(std::log(static_cast<double>(config.p)) / static_cast<double>(n));

    for (int g = 0; g < G; ++g) {
      ReplicationRecord& rec = report.records[(static_cast<size_t>(ci) * R + r) * G + g];
      rec.n = n;
      rec.c = c;
      rec.range = g;
      rec.replication = r;
      if (!train) {
        rec.failed = true;
        rec.error = gen_error;
        continue;
      }
      try {
        FitConfig fit_config = config.fit;
        double best_loss = std::numeric_limits<double>::infinity();
        FitResult best;
        double best_lambda = 0.0;
        for (double mult : config.lambda_multipliers) {
          const PenaltySpec penalty = PenaltySpec::scad(mult * rate, config.scad_a);
          FitResult fit = fit_regularized(scenario.family, scenario.links, *train, grids[g], penalty, fit_config);
          fit_config.init = InitWarm{fit.beta_hat};
          const QirModel model = fitted_model(scenario.family, scenario.links, *train, fit);
          const double val = composite_loss(model, *validation, grids[g]) / static_cast<double>(validation->n());
          // Multipliers run from large to small, so ties keep the larger lambda.
          if (val < best_loss) {
            best_loss = val;
            best_lambda = penalty.lambda;
            best = std::move(fit);
          }
        }
        const QirModel model = fitted_model(scenario.family, scenario.links, *train, best);
        rec.lambda = best_lambda;
        rec.converged = best.converged;
        rec.beta_hat = best.beta_hat;
        rec.error_norm = (best.beta_hat - beta0).norm();
        rec.selection = selection_metrics(best.beta_hat, beta0, config.zero_tol);
        fill_pes(rec, model, scenario, config.x_points, config.tau_stars);
      } catch (const std::exception& e) {
        rec.failed = true;
        rec.error = e.what();
      }
    }
  }

  report.cells = aggregate_records(report, true, config.p, s);
  check_failures(report.cells);
  return report;
}

std::vector<CellAggregate> aggregate_records(const ExperimentReport& report, bool highdim, Eigen::Index p, double s) {
  std::vector<CellAggregate> cells;
  auto find_cell = [&](const ReplicationRecord& rec) -> CellAggregate& {
    for (auto& cell : cells) {
      if (cell.n == rec.n && cell.c == rec.c && cell.range == rec.range) return cell;
    }
    CellAggregate cell;
    cell.n = rec.n;
    cell.c = rec.c;
    cell.range = rec.range;
    cells.push_back(cell);
    return cells.back();
  };
  // Group in record order so the cell order is deterministic.
  std::vector<std::vector<const ReplicationRecord*>> members;
  for (const auto& rec : report.records) {
    const size_t before = cells.size();
    CellAggregate& cell = find_cell(rec);
    if (cells.size() > before) members.emplace_back();
    const size_t idx = static_cast<size_t>(&cell - cells.data());
    members[idx].push_back(&rec);
  }

  const size_t slots = report.x_points.size() * report.tau_stars.size();
  for (size_t ci = 0; ci < cells.size(); ++ci) {
    CellAggregate& cell = cells[ci];
    std::vector<std::vector<double>> pes_by_slot(slots);
    std::vector<double> sizes, fps, fns, errors;
    std::vector<int> covered(slots, 0);
    int hit_ai = 0, hit_a = 0, hit_i = 0;
    bool any_ci = false;
    for (const ReplicationRecord* rec : members[ci]) {
      if (rec->failed) {
        ++cell.failed;
        continue;
      }
      ++cell.completed;
      for (size_t k = 0; k < slots && k < rec->pes.size(); ++k) pes_by_slot[k].push_back(rec->pes[k]);
      errors.push_back(rec->error_norm);
      if (highdim) {
        sizes.push_back(rec->selection.size);
        fps.push_back(rec->selection.fp_rate);
        fns.push_back(rec->selection.fn_rate);
        hit_ai += rec->selection.hit_ai;
        hit_a += rec->selection.hit_a;
        hit_i += rec->selection.hit_i;
      }
      if (!rec->covered.empty()) {
        any_ci = true;
        for (size_t k = 0; k < slots; ++k) covered[k] += rec->covered[k];
      }
    }
    for (size_t k = 0; k < slots; ++k) {
      cell.pes_mean.push_back(mean_of(pes_by_slot[k]));
      cell.pes_sd.push_back(sd_of(pes_by_slot[k]));
    }
    cell.error_median = median_of(errors);
    cell.sqrt_rate = std::sqrt(s * std::log(static_cast<double>(p)) / static_cast<double>(cell.n));
    if (highdim && cell.completed > 0) {
      cell.size_mean = mean_of(sizes);
      cell.size_sd = sd_of(sizes);
      cell.p_ai = 100.0 * hit_ai / cell.completed;
      cell.p_a = 100.0 * hit_a / cell.completed;
      cell.p_i = 100.0 * hit_i / cell.completed;
      cell.fp_mean = mean_of(fps);
      cell.fp_sd = sd_of(fps);
      cell.fn_mean = mean_of(fns);
      cell.fn_sd = sd_of(fns);
    }
    if (any_ci) {
      for (size_t k = 0; k < slots; ++k) cell.coverage.push_back(100.0 * covered[k] / cell.completed);
    }
  }
  return cells;
}

// ---------------------------------------------------------------------------
// Config files

namespace {

std::vector<QuantileRange> ranges_from_json(const nlohmann::json& doc) {
  std::vector<QuantileRange> out;
  for (const auto& r : doc) out.push_back({r.at(0).get<double>(), r.at(1).get<double>()});
  return out;
}

void fit_from_json(const nlohmann::json& doc, FitConfig& fit) {
  if (!doc.contains("fit")) return;
  const auto& f = doc["fit"];
  fit.bls_a = f.value("bls_a", fit.bls_a);
  fit.bls_b = f.value("bls_b", fit.bls_b);
  fit.eta0 = f.value("eta0", fit.eta0);
  fit.max_iter = f.value("max_iter", fit.max_iter);
  fit.tol = f.value("tol", fit.tol);
  fit.objective_tol = f.value("objective_tol", fit.objective_tol);
}

}  // namespace

LowDimConfig lowdim_config_from_json(const nlohmann::json& doc) {
  LowDimConfig c;
  try {
    if (doc.contains("sample_sizes")) c.sample_sizes = doc["sample_sizes"].get<std::vector<Eigen::Index>>();
    if (doc.contains("ranges")) c.ranges = ranges_from_json(doc["ranges"]);
    c.K = doc.value("K", c.K);
    c.replications = doc.value("replications", c.replications);
    c.master_seed = doc.value("seed", c.master_seed);
    if (doc.contains("x_points")) c.x_points = doc["x_points"].get<std::vector<std::vector<double>>>();
    if (doc.contains("tau_stars")) c.tau_stars = doc["tau_stars"].get<std::vector<double>>();
    c.tail_scaling = doc.value("tail_scaling", c.tail_scaling);
    c.inference = doc.value("inference", c.inference);
    c.ci_level = doc.value("ci_level", c.ci_level);
    if (doc.contains("delta_source")) {
      const auto src = doc["delta_source"].get<std::string>();
      if (src == "query") {
        c.delta_source = DeltaSource::QueryPoint;
      } else if (src == "sample-average") {
        c.delta_source = DeltaSource::SampleAverage;
      } else {
        throw ParseError("delta_source must be 'query' or 'sample-average'");
      }
    }
    fit_from_json(doc, c.fit);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("malformed low-dimensional config: ") + e.what());
  }
  return c;
}

HighDimConfig highdim_config_from_json(const nlohmann::json& doc) {
  HighDimConfig c;
  try {
    c.p = doc.value("p", c.p);
    if (doc.contains("c_values")) c.c_values = doc["c_values"].get<std::vector<double>>();
    if (doc.contains("ranges")) c.ranges = ranges_from_json(doc["ranges"]);
    c.K = doc.value("K", c.K);
    c.replications = doc.value("replications", c.replications);
    c.master_seed = doc.value("seed", c.master_seed);
    if (doc.contains("lambda_multipliers")) c.lambda_multipliers = doc["lambda_multipliers"].get<std::vector<double>>();
    c.validation_factor = doc.value("validation_factor", c.validation_factor);
    c.zero_tol = doc.value("zero_tol", c.zero_tol);
    if (doc.contains("x_points")) c.x_points = doc["x_points"].get<std::vector<std::vector<double>>>();
    if (doc.contains("tau_stars")) c.tau_stars = doc["tau_stars"].get<std::vector<double>>();
    c.tail_scaling = doc.value("tail_scaling", c.tail_scaling);
    c.scad_a = doc.value("scad_a", c.scad_a);
    fit_from_json(doc, c.fit);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("malformed high-dimensional config: ") + e.what());
  }
  c.complete();
  return c;
}

// ---------------------------------------------------------------------------
// Report files

namespace {

std::string slot_name(const ExperimentReport& report, size_t x, size_t t) {
  return "x" + std::to_string(x + 1) + "_tau" + format_short(report.tau_stars[t]);
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot write '" + path.string() + "'");
  return out;
}

void write_pes_table(const ExperimentReport& report, const std::filesystem::path& path, bool by_c) {
  auto out = open_out(path);
  out << (by_c ? "c" : "n") << "\ttau_L\ttau_U";
  for (size_t x = 0; x < report.x_points.size(); ++x) {
    for (size_t t = 0; t < report.tau_stars.size(); ++t) {
      out << '\t' << slot_name(report, x, t) << "_mean\t" << slot_name(report, x, t) << "_sd";
    }
  }
  out << "\tcompleted\tfailed\n";
  out << "True\t\t";
  for (double v : report.true_values) out << '\t' << format_full(v) << '\t';
  out << "\t\t\n";
  for (const auto& cell : report.cells) {
    const auto& range = report.ranges[cell.range];
    out << (by_c ? format_full(cell.c) : std::to_string(cell.n)) << '\t' << format_full(range.tau_L) << '\t'
        << format_full(range.tau_U);
    for (size_t k = 0; k < cell.pes_mean.size(); ++k) {
      out << '\t' << format_full(cell.pes_mean[k]) << '\t' << format_full(cell.pes_sd[k]);
    }
    out << '\t' << cell.completed << '\t' << cell.failed << '\n';
  }
}

void write_records(const ExperimentReport& report, const std::filesystem::path& path) {
  auto out = open_out(path);
  out << "n\tc\trange\treplication\tfailed\tconverged\tlambda\terror_norm";
  for (size_t x = 0; x < report.x_points.size(); ++x) {
    for (size_t t = 0; t < report.tau_stars.size(); ++t) out << "\tpes_" << slot_name(report, x, t);
  }
  out << "\tbeta_hat\n";
  for (const auto& rec : report.records) {
    out << rec.n << '\t' << format_full(rec.c) << '\t' << rec.range << '\t' << rec.replication << '\t' << rec.failed
        << '\t' << rec.converged << '\t' << format_full(rec.lambda) << '\t' << format_full(rec.error_norm);
    const size_t slots = report.x_points.size() * report.tau_stars.size();
    for (size_t k = 0; k < slots; ++k) out << '\t' << (k < rec.pes.size() ? format_full(rec.pes[k]) : "NA");
    out << '\t';
    for (Eigen::Index l = 0; l < rec.beta_hat.size(); ++l) out << (l ? "," : "") << format_full(rec.beta_hat(l));
    out << '\n';
  }
}

}  // namespace

std::vector<std::filesystem::path> write_report(const ExperimentReport& report, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::vector<std::filesystem::path> written;
  const bool highdim = report.kind == "highdim";

  const auto table = dir / (highdim ? "table2.tsv" : "table1.tsv");
  write_pes_table(report, table, highdim);
  written.push_back(table);

  if (highdim) {
    const auto t3 = dir / "table3.tsv";
    auto out = open_out(t3);
    out << "tau_L\ttau_U\tc\tn\tsize_mean\tsize_sd\tP_AI\tP_A\tP_I\tFP_mean\tFP_sd\tFN_mean\tFN_sd\n";
    for (const auto& cell : report.cells) {
      const auto& range = report.ranges[cell.range];
      out << format_full(range.tau_L) << '\t' << format_full(range.tau_U) << '\t' << format_full(cell.c) << '\t'
          << cell.n << '\t' << format_full(cell.size_mean) << '\t' << format_full(cell.size_sd) << '\t'
          << format_full(cell.p_ai) << '\t' << format_full(cell.p_a) << '\t' << format_full(cell.p_i) << '\t'
          << format_full(cell.fp_mean) << '\t' << format_full(cell.fp_sd) << '\t' << format_full(cell.fn_mean)
          << '\t' << format_full(cell.fn_sd) << '\n';
    }
    written.push_back(t3);

    for (size_t g = 0; g < report.ranges.size(); ++g) {
      const auto fig = dir / ("figure2_tauL" + format_short(report.ranges[g].tau_L) + "_tauU" +
                              format_short(report.ranges[g].tau_U) + ".tsv");
      auto f = open_out(fig);
      f << "c\tn\terror_norm\tsqrt_rate\n";
      for (const auto& rec : report.records) {
        if (rec.range != static_cast<int>(g) || rec.failed) continue;
        f << format_full(rec.c) << '\t' << rec.n << '\t' << format_full(rec.error_norm) << '\t'
          << format_full(std::sqrt(9.0 * std::log(static_cast<double>(rec.beta_hat.size() / 3)) /
                                   static_cast<double>(rec.n)))
          << '\n';
      }
      written.push_back(fig);
    }
  }

  const bool any_coverage = std::any_of(report.cells.begin(), report.cells.end(),
                                        [](const CellAggregate& c) { return !c.coverage.empty(); });
  if (any_coverage) {
    const auto cov = dir / "coverage.tsv";
    auto out = open_out(cov);
    out << "n\ttau_L\ttau_U";
    for (size_t x = 0; x < report.x_points.size(); ++x) {
      for (size_t t = 0; t < report.tau_stars.size(); ++t) out << '\t' << slot_name(report, x, t);
    }
    out << '\n';
    for (const auto& cell : report.cells) {
      const auto& range = report.ranges[cell.range];
      out << cell.n << '\t' << format_full(range.tau_L) << '\t' << format_full(range.tau_U);
      for (double v : cell.coverage) out << '\t' << format_full(v);
      out << '\n';
    }
    written.push_back(cov);
  }

  const auto recs = dir / "replications.tsv";
  write_records(report, recs);
  written.push_back(recs);
  return written;
}

}  // namespace qir
