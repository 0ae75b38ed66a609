// Command line front end: fit, predict, simulate, sdreport.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "mshmm/config.hpp"
#include "mshmm/errors.hpp"
#include "mshmm/io.hpp"
#include "mshmm/predict.hpp"
#include "mshmm/qreml.hpp"
#include "mshmm/simulate.hpp"

using namespace mshmm;
namespace fs = std::filesystem;

namespace {

constexpr int kExitError = 1;

int exit_code(FitStatus s) {
  switch (s) {
    case FitStatus::converged:
      return 0;
    case FitStatus::inner_failure:
      return 2;
    default:
      return 3;
  }
}

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidInput("cannot read '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_csv_file(const std::string& path, const CsvTable& t) {
  if (path.empty() || path == "-") {
    write_csv(std::cout, t);
    return;
  }
  std::ofstream out(path);
  if (!out) throw InvalidInput("cannot write '" + path + "'");
  write_csv(out, t);
}

std::string g6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

void print_fit(const HmmModel& model, const PenaltyModel& pen, const FitResult& fit) {
  std::cout << "status: " << to_string(fit.status) << " (" << fit.message << ")\n";
  std::cout << "outer iterations: " << fit.trace.iterations.size() << ", inner iterations: " << fit.inner_iterations
            << "\n";
  std::cout << "log-likelihood: " << g6(fit.loglik) << "\n";
  if (fit.status == FitStatus::inner_failure) return;
  std::cout << "edf: " << g6(fit.edf) << "  AIC: " << g6(fit.aic) << "  BIC: " << g6(fit.bic) << "\n";
  if (pen.size() > 0) {
    std::cout << "smoothing parameters:\n";
    for (std::size_t j = 0; j < pen.size(); ++j) {
      const double l = fit.lambda(static_cast<Index>(j));
      std::cout << "  " << pen.block(j).label << "  lambda " << g6(l) << "  sigma2 " << g6(1.0 / l)
                << (fit.map.group[j] == LambdaMap::kFixed ? "  (fixed)" : "") << "\n";
    }
  }
  const EmissionParams ep = model.emissions(fit.theta);
  std::cout << "emission parameters:\n";
  for (std::size_t s = 0; s < model.spec().streams.size(); ++s) {
    const auto params = family_params(model.spec().streams[s].family);
    for (std::size_t p = 0; p < params.size(); ++p) {
      std::cout << "  " << model.spec().streams[s].name << "." << params[p].name << ":";
      for (int i = 0; i < model.states(); ++i) std::cout << " " << g6(ep.natural[s](static_cast<Index>(p), i));
      std::cout << "\n";
    }
  }
}

int run_fit(const std::string& config_path, const std::string& data_path, const std::string& out_dir, int threads) {
  const std::string text = read_text(config_path);
  const ModelConfig config = parse_config(text);
  IngestResult in = ingest_csv_file(data_path, ingest_spec(config));
  const HmmModel model(config.spec, in.table);
  const PenaltyModel pen = model.penalties();
  QremlOptions opt = config.qreml_options();
  opt.inner.threads = threads;
  const FitResult fit =
      qreml(model, pen, lambda_map(config, pen), initial_lambda(config, pen), initial_theta(config, model), opt);
  const int code = exit_code(fit.status);
  fs::create_directories(out_dir);
  write_json((fs::path(out_dir) / "result.json").string(), result_document(text, data_path, model, pen, fit, code));
  if (fit.theta.allFinite()) {
    const std::vector<int> states = model.viterbi(fit.theta);
    CsvTable t;
    t.header = {"track", "row", "state"};
    for (const auto& tr : in.table.tracks) {
      for (Index r = tr.begin; r < tr.end; ++r) {
        t.rows.push_back({tr.id, std::to_string(r + 1), std::to_string(states[static_cast<std::size_t>(r)])});
      }
    }
    write_csv_file((fs::path(out_dir) / "states.csv").string(), t);
  }
  print_fit(model, pen, fit);
  std::cout << "wrote " << (fs::path(out_dir) / "result.json").string() << "\n";
  return code;
}

int run_predict(const std::string& result_path, const std::string& grid, int draws, const std::string& cycle,
                std::uint64_t seed, double level, const std::string& out) {
  const LoadedResult r = load_result(result_path);
  const auto axes = parse_grid(grid);
  PredictOptions opt;
  opt.draws = draws;
  opt.cycle = cycle;
  opt.seed = seed;
  opt.level = level;
  write_csv_file(out, prediction_table(r.stored, axes, predict(r.stored, axes, opt)));
  return 0;
}

int run_simulate(const std::string& config_path, Index T, std::uint64_t seed, const std::string& theta,
                 const std::string& out_dir) {
  SimulatedData sim;
  std::string track_column;
  if (theta == "init" || theta == "random") {
    const ModelConfig config = load_config(config_path);
    track_column = config.track_column;
    sim = simulate_from_config(config, T, seed, theta == "random" ? ThetaSource::random : ThetaSource::init);
  } else {
    const LoadedResult r = load_result(theta);
    track_column = r.config.track_column;
    sim = simulate_from_result(r, T, seed);
  }
  fs::create_directories(out_dir);
  write_csv_file((fs::path(out_dir) / "data.csv").string(), observations_to_csv(sim.table, track_column));
  CsvTable s;
  s.header = {"track", "row", "state"};
  for (const auto& tr : sim.table.tracks) {
    for (Index r = tr.begin; r < tr.end; ++r) {
      s.rows.push_back({tr.id, std::to_string(r + 1), std::to_string(sim.states[static_cast<std::size_t>(r)])});
    }
  }
  write_csv_file((fs::path(out_dir) / "states.csv").string(), s);
  std::ofstream th(fs::path(out_dir) / "theta.json");
  th << to_json(sim.theta).dump() << "\n";
  std::cout << "wrote " << T << " rows to " << (fs::path(out_dir) / "data.csv").string() << "\n";
  return 0;
}

int run_sdreport(const std::string& result_path, double rel_step, int threads) {
  LoadedResult r = load_result(result_path);
  const HmmModel model = rebuild_model(r);
  const double ll = model.loglik(r.stored.theta);
  if (std::abs(ll - r.loglik) > 1e-8 * std::max(1.0, std::abs(r.loglik))) {
    throw InvalidInput("sdreport: data no longer reproduce the stored log-likelihood (" + g6(ll) + " vs " +
                       g6(r.loglik) + ")");
  }
  const FitResult fit = fit_from_result(r);
  if (!fit.converged()) throw InvalidInput("sdreport: the stored fit did not converge");
  const PenaltyModel pen = model.penalties();
  QremlOptions opt = r.config.qreml_options();
  opt.inner.threads = threads;
  const OuterCovariance cov = sdreport_outer(model, pen, fit, opt, rel_step);
  nlohmann::json rep;
  rep["rel_step"] = rel_step;
  rep["invertible"] = cov.invertible;
  rep["message"] = cov.message;
  rep["refits"] = cov.refits;
  rep["hessian"] = to_json(cov.hessian);
  rep["cov_lambda"] = to_json(cov.cov_lambda);
  std::cout << "label  lambda  se(lambda)  sigma2  se(sigma2)\n";
  for (std::size_t j = 0; j < pen.size(); ++j) {
    const int g = fit.map.group[j];
    nlohmann::json& e = r.doc["lambda"][j];
    const double l = fit.lambda(static_cast<Index>(j));
    const double se = g == LambdaMap::kFixed ? std::nan("") : cov.se_lambda(g);
    const double se2 = g == LambdaMap::kFixed ? std::nan("") : cov.se_sigma2(g);
    e["se_lambda"] = std::isfinite(se) ? nlohmann::json(se) : nlohmann::json(nullptr);
    e["se_sigma2"] = std::isfinite(se2) ? nlohmann::json(se2) : nlohmann::json(nullptr);
    std::cout << pen.block(j).label << "  " << g6(l) << "  " << g6(se) << "  " << g6(1.0 / l) << "  " << g6(se2)
              << "\n";
  }
  if (!cov.invertible) std::cout << "note: " << cov.message << "\n";
  r.doc["sdreport"] = rep;
  write_json(result_path, r.doc);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Markov-switching models with penalized smooth transition effects"};
  app.require_subcommand(1);

  std::string config, data, out_dir = "out", result, grid, cycle, out_file = "-", theta = "init";
  int draws = 1000, threads = 1;
  long long T = 0;
  std::uint64_t seed = 1;
  double level = 0.95, rel_step = 1e-4;

  CLI::App* fit = app.add_subcommand("fit", "Fit a model; writes result.json and decoded states");
  fit->add_option("config", config, "Model configuration")->required()->check(CLI::ExistingFile);
  fit->add_option("data", data, "Data CSV")->required()->check(CLI::ExistingFile);
  fit->add_option("--out", out_dir, "Output directory")->capture_default_str();
  fit->add_option("--threads", threads, "Threads for Hessian evaluation")->capture_default_str();

  CLI::App* pred = app.add_subcommand("predict", "Predictions with pointwise intervals on a covariate grid");
  pred->add_option("result", result, "Result document")->required()->check(CLI::ExistingFile);
  pred->add_option("--grid", grid, "Grid, e.g. 'tday=0:24:49, doy=180'")->required();
  pred->add_option("--draws", draws, "Posterior draws (0: no intervals)")->capture_default_str();
  pred->add_option("--cycle", cycle, "Grid axis forming one period for periodic stationary probabilities");
  pred->add_option("--seed", seed, "Seed for posterior draws")->capture_default_str();
  pred->add_option("--level", level, "Interval level")->capture_default_str();
  pred->add_option("--out", out_file, "Output CSV ('-' for stdout)")->capture_default_str();

  CLI::App* sim = app.add_subcommand("simulate", "Simulate a dataset and its states");
  sim->add_option("config", config, "Model configuration")->required()->check(CLI::ExistingFile);
  sim->add_option("--T", T, "Number of rows")->required();
  sim->add_option("--seed", seed, "Seed")->capture_default_str();
  sim->add_option("--theta", theta, "init, random, or a result document")->capture_default_str();
  sim->add_option("--out", out_dir, "Output directory")->capture_default_str();

  CLI::App* sdr = app.add_subcommand("sdreport", "Standard errors of smoothing parameters and variances");
  sdr->add_option("result", result, "Result document (updated in place)")->required()->check(CLI::ExistingFile);
  sdr->add_option("--rel-step", rel_step, "Relative finite-difference step in lambda")->capture_default_str();
  sdr->add_option("--threads", threads, "Threads for Hessian evaluation")->capture_default_str();

  CLI11_PARSE(app, argc, argv);
  try {
    if (*fit) return run_fit(config, data, out_dir, threads);
    if (*pred) return run_predict(result, grid, draws, cycle, seed, level, out_file);
    if (*sim) return run_simulate(config, static_cast<Index>(T), seed, theta, out_dir);
    if (*sdr) return run_sdreport(result, rel_step, threads);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitError;
  }
  return kExitError;
}
