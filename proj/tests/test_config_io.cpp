#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "mshmm/config.hpp"
#include "mshmm/errors.hpp"
#include "mshmm/io.hpp"
#include "mshmm/simulate.hpp"
#include "support.hpp"

using namespace mshmm;
using namespace testing;
namespace fs = std::filesystem;

namespace {

const std::string kDiel = std::string(MSHMM_TEST_DATA) + "/diel.cfg";

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("mshmm_test_config_io_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

int column_of_error(const std::string& text) {
  try {
    parse_config(text);
  } catch (const ConfigError& e) {
    return e.column();
  }
  return -1;
}

std::string error_of(const std::string& text) {
  try {
    parse_config(text);
  } catch (const Error& e) {
    return e.what();
  }
  return "";
}

const char* kHomogeneous = "states = 2\nstream step = gamma\nstream angle = vm\n";

struct FitRun {
  FitResult fit;
  nlohmann::json doc;
};

FitRun fit_files(const std::string& config_text, const std::string& data_path) {
  const ModelConfig c = parse_config(config_text);
  const IngestResult in = ingest_csv_file(data_path, ingest_spec(c));
  const HmmModel m(c.spec, in.table);
  const PenaltyModel pen = m.penalties();
  FitRun r;
  r.fit = qreml(m, pen, lambda_map(c, pen), initial_lambda(c, pen), initial_theta(c, m), c.qreml_options());
  r.doc = result_document(config_text, data_path, m, pen, r.fit, r.fit.converged() ? 0 : 3);
  return r;
}

}  // namespace

TEST_CASE("minimal config: homogeneous HMM without penalties") {
  const ModelConfig c = parse_config(kHomogeneous);
  CHECK(c.spec.N == 2);
  CHECK(c.spec.streams.size() == 2);
  const ObservationTable d = frame(20, {"step", "angle"});
  const HmmModel m(c.spec, d);
  CHECK(m.penalties().size() == 0);
  for (int e = 0; e < m.entries(); ++e) CHECK(m.design(e).cols() == 1);
}

TEST_CASE("ti() with cyclic marginals k=(12,12) has 10 + 10 + 100 coefficients") {
  const ModelConfig c = parse_config(
      "states = 2\nstream step = gamma\n"
      "tpm = s(tday, bs=cc, k=12, period=24) + s(doy, bs=cc, k=12, period=365)"
      " + ti(tday, doy, bs=(cc,cc), k=(12,12), period=(24,365))\n");
  ObservationTable d = frame(400, {"step"});
  d.set_covariate("tday", cycle(400, 24, 1));
  d.set_covariate("doy", cycle(400, 365, 0.9));
  const HmmModel m(c.spec, d);
  for (int e = 0; e < m.entries(); ++e) {
    const PredictorDesign& p = m.design(e);
    REQUIRE(p.terms.size() == 3);
    CHECK(p.terms[0].cols == 10);
    CHECK(p.terms[1].cols == 10);
    CHECK(p.terms[2].cols == 100);
  }
}

TEST_CASE("config errors name the offending token and position") {
  const std::string bad = "states = 2\nstream step = gamm\n";
  CHECK(error_of(bad).find("'gamm'") != std::string::npos);
  CHECK(error_of(bad).find("line 2") != std::string::npos);
  CHECK(column_of_error(bad) == 15);
  CHECK(error_of("states = 2\nstream step = gamma\ntpm = s(tday, bs=cc)\n").find("period") != std::string::npos);
  CHECK(error_of("states = 2\nstream step = gamma\ncolour = red\n").find("'colour'") != std::string::npos);
  CHECK(error_of("states = 2\nstream step = gamma\ntpm = s(tday, bs=xx, period=24)\n").find("'xx'") != std::string::npos);
  CHECK(error_of("states = 1\nstream step = gamma\n") != "");
  CHECK(error_of("stream step = gamma\ntpm = f(x)\n").find("'f'") != std::string::npos);
}

TEST_CASE("print_config round-trip is idempotent after one pass") {
  const std::string once = print_config(parse_config(slurp(kDiel)));
  const std::string twice = print_config(parse_config(once));
  CHECK(once == twice);
  const std::string rich =
      "states = 3\nstream step = gamma\nstream count = poisson\n"
      "tpm = s(tday, bs=cc, k=8, period=24) + te(x, tday, bs=(ps,cc), k=(5,6), period=(NA,24))\n"
      "tpm[2,1] = s(ID, bs=re)\n"
      "delta = estimated\ntrack = ID\nlambda_init = 100\nalpha = 0.5\nseed = 9\n"
      "covariate tday = cycle(24, 0.5)\ncovariate x = uniform(0, 2)\ncovariate ID = group(3)\n";
  const std::string r1 = print_config(parse_config(rich));
  CHECK(print_config(parse_config(r1)) == r1);
  const ModelConfig c = parse_config(r1);
  CHECK(c.spec.N == 3);
  CHECK(c.alpha == 0.5);
  CHECK(c.seed == 9);
  CHECK(c.lambda_init.value() == 100.0);
}

TEST_CASE("CSV parsing: quoting, BOM and blank lines") {
  const CsvTable t = parse_csv("\xEF\xBB\xBF" "a,b,c\r\n1,\"x,y\",\"say \"\"hi\"\"\"\n\n2,,\"multi\nline\"\n");
  REQUIRE(t.header == std::vector<std::string>{"a", "b", "c"});
  REQUIRE(t.rows.size() == 2);
  CHECK(t.rows[0][1] == "x,y");
  CHECK(t.rows[0][2] == "say \"hi\"");
  CHECK(t.rows[1][1] == "");
  CHECK(t.rows[1][2] == "multi\nline");
  std::ostringstream out;
  write_csv(out, t);
  const CsvTable back = parse_csv(out.str());
  CHECK(back.rows == t.rows);
  CHECK(format_double(0.1) == "0.1");
  CHECK(std::stod(format_double(1.0 / 3.0)) == 1.0 / 3.0);
  CHECK(format_double(std::nan("")) == "NA");
}

TEST_CASE("ingest: rows, missing values, tracks and errors") {
  IngestSpec s;
  s.streams = {"step"};
  s.covariates = {"tday"};
  s.track_column = "ID";
  const IngestResult r = ingest_csv(parse_csv("ID,tday,step\nA,0,1.5\nA,1,NA\nA,2,\n"), s);
  CHECK(r.table.rows() == 3);
  CHECK(r.table.tracks.size() == 1);
  CHECK(std::isnan(r.table.streams[0](1)));
  CHECK(std::isnan(r.table.streams[0](2)));
  CHECK(r.table.streams[0](0) == 1.5);

  // Missing observations still give a finite likelihood.
  const HmmSpec hs = spec(2, {{"step", Family::gamma}}, formula({}));
  const HmmModel m(hs, r.table);
  CHECK(std::isfinite(m.loglik(m.default_theta())));

  const IngestResult two = ingest_csv(parse_csv("ID,tday,step\nA,0,1\nA,1,2\nB,0,3\n"), s);
  REQUIRE(two.table.tracks.size() == 2);
  CHECK(two.table.tracks[1].id == "B");
  CHECK(two.table.tracks[1].begin == 2);

  auto message = [&](const std::string& text) {
    try {
      ingest_csv(parse_csv(text), s);
    } catch (const Error& e) {
      return std::string(e.what());
    }
    return std::string();
  };
  CHECK(message("ID,tday,step\nA,0,1\nB,1,2\nA,2,3\n").find("contiguous") != std::string::npos);
  CHECK(message("ID,step\nA,1\n").find("'tday'") != std::string::npos);
  const std::string bad = message("ID,tday,step\nA,0,1\nA,1,fast\n");
  CHECK(bad.find("step") != std::string::npos);
  CHECK(bad.find("fast") != std::string::npos);
  CHECK(message("ID,tday,step\n") != "");
  CHECK(message("ID,tday,step\nA,NA,1\n").find("tday") != std::string::npos);
}

TEST_CASE("categorical covariates are coded by first appearance") {
  IngestSpec s;
  s.streams = {"step"};
  s.covariates = {"sex"};
  s.categorical_ok = {"sex"};
  const IngestResult r = ingest_csv(parse_csv("sex,step\nf,1\nm,2\nf,3\n"), s);
  CHECK(r.levels.at("sex") == std::vector<std::string>{"f", "m"});
  CHECK(r.table.covariate("sex")(1) == 2.0);
  CHECK(r.table.covariate("sex")(2) == 1.0);
}

TEST_CASE("simulate: empty data, determinism and ingest round-trip") {
  const ModelConfig c = load_config(kDiel);
  CHECK_THROWS_AS(simulate_from_config(c, 0, 1), InvalidInput);
  const SimulatedData a = simulate_from_config(c, 300, 7);
  const SimulatedData b = simulate_from_config(c, 300, 7);
  const SimulatedData other = simulate_from_config(c, 300, 8);
  CHECK(a.states == b.states);
  CHECK(a.table.streams[0] == b.table.streams[0]);
  CHECK_FALSE(a.table.streams[0] == other.table.streams[0]);
  REQUIRE(a.table.tracks.size() == 2);

  std::ostringstream out;
  write_csv(out, observations_to_csv(a.table, c.track_column));
  const IngestResult in = ingest_csv(parse_csv(out.str()), ingest_spec(c));
  REQUIRE(in.table.tracks.size() == a.table.tracks.size());
  for (std::size_t k = 0; k < a.table.tracks.size(); ++k) {
    CHECK(in.table.tracks[k].begin == a.table.tracks[k].begin);
    CHECK(in.table.tracks[k].end == a.table.tracks[k].end);
  }
  REQUIRE(in.table.stream_names.size() == a.table.stream_names.size());
  for (std::size_t i = 0; i < a.table.stream_names.size(); ++i) {
    for (std::size_t j = 0; j < in.table.stream_names.size(); ++j) {
      if (in.table.stream_names[j] == a.table.stream_names[i]) CHECK(in.table.streams[j] == a.table.streams[i]);
    }
  }
  CHECK(in.table.covariate("tday") == a.table.covariate("tday"));
}

TEST_CASE("homogeneous fit: single inner fit, result round-trip and determinism") {
  const fs::path dir = scratch("homogeneous");
  const std::string cfg = std::string(kHomogeneous) +
                          "init step.shape = 2, 4\ninit step.scale = 0.5, 1.5\n"
                          "init angle.mean = 0, 0\ninit angle.concentration = 0.5, 3\ninit tpm = -2\n";
  const ModelConfig c = parse_config(cfg);
  ObservationTable frame_only = simulation_frame(c, 500, 3);
  const HmmModel truth(c.spec, frame_only);
  std::vector<Vector> streams;
  truth.simulate(initial_theta(c, truth), 3, streams);
  frame_only.streams = streams;
  const std::string data = (dir / "data.csv").string();
  {
    std::ofstream f(data);
    write_csv(f, observations_to_csv(frame_only, ""));
  }
  const FitRun a = fit_files(cfg, data);
  REQUIRE(a.fit.converged());
  CHECK(a.fit.trace.iterations.size() == 1);
  CHECK(a.fit.lambda.size() == 0);
  const FitRun b = fit_files(cfg, data);
  CHECK(a.fit.theta == b.fit.theta);

  const std::string path = (dir / "result.json").string();
  write_json(path, a.doc);
  const LoadedResult r = load_result(path);
  const HmmModel m = rebuild_model(r);
  CHECK(std::abs(m.loglik(r.stored.theta) - a.fit.loglik) <= 1e-8 * std::max(1.0, std::abs(a.fit.loglik)));
  CHECK(r.stored.theta == a.fit.theta);
}

TEST_CASE("smooth fit: stored bases reproduce the predictors and the log-likelihood") {
  const fs::path dir = scratch("smooth");
  const ModelConfig c = load_config(kDiel);
  const SimulatedData sim = simulate_from_config(c, 1200, 5);
  const std::string data = (dir / "data.csv").string();
  {
    std::ofstream f(data);
    write_csv(f, observations_to_csv(sim.table, c.track_column));
  }
  const FitRun a = fit_files(slurp(kDiel), data);
  REQUIRE(a.fit.converged());
  CHECK(a.fit.trace.iterations.size() >= 2);
  const std::string path = (dir / "result.json").string();
  write_json(path, a.doc);
  const LoadedResult r = load_result(path);
  const HmmModel m = rebuild_model(r);
  CHECK(std::abs(m.loglik(r.stored.theta) - a.fit.loglik) <= 1e-8 * std::max(1.0, std::abs(a.fit.loglik)));
  CHECK(std::abs(r.loglik - a.fit.loglik) <= 1e-8 * std::abs(a.fit.loglik));
  for (int e = 0; e < m.entries(); ++e) {
    const Matrix X = r.stored.designs[static_cast<std::size_t>(e)].evaluate(m.data());
    CHECK((X - m.design(e).X).cwiseAbs().maxCoeff() <= 1e-12);
  }
  CHECK((r.stored.J.matrix() - a.fit.J.matrix()).cwiseAbs().maxCoeff() <= 1e-12 * a.fit.J.matrix().cwiseAbs().maxCoeff());
  const FitResult back = fit_from_result(r);
  CHECK(back.converged());
  CHECK(back.lambda == a.fit.lambda);
  CHECK(a.doc["lambda"].size() == a.fit.lambda.size());
  CHECK(a.doc["lambda"][0]["sigma2"].get<double>() == doctest::Approx(1.0 / a.fit.lambda(0)));
}
