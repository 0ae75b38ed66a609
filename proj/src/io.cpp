#include "mshmm/io.hpp"

#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

#include "mshmm/errors.hpp"

namespace mshmm {

using nlohmann::json;

int CsvTable::column(const std::string& name) const {
  for (std::size_t k = 0; k < header.size(); ++k) {
    if (header[k] == name) return static_cast<int>(k);
  }
  return -1;
}

CsvTable parse_csv(const std::string& text) {
  std::vector<std::vector<std::string>> records;
  std::vector<std::string> rec;
  std::string field;
  bool quoted = false, in_field = false;
  std::size_t i = 0;
  std::size_t start = text.rfind("\xEF\xBB\xBF", 0) == 0 ? 3 : 0;
  auto end_record = [&] {
    rec.push_back(field);
    field.clear();
    in_field = false;
    records.push_back(std::move(rec));
    rec.clear();
  };
  for (i = start; i < text.size(); ++i) {
    const char c = text[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field += c;
      }
      continue;
    }
    if (c == '"' && field.empty()) {
      quoted = true;
      in_field = true;
    } else if (c == ',') {
      rec.push_back(field);
      field.clear();
      in_field = true;
    } else if (c == '\r' || c == '\n') {
      if (c == '\r' && i + 1 < text.size() && text[i + 1] == '\n') ++i;
      end_record();
    } else {
      field += c;
      in_field = true;
    }
  }
  if (quoted) throw InvalidInput("csv: unterminated quoted field");
  if (in_field || !field.empty() || !rec.empty()) end_record();
  // Blank lines carry no record.
  std::erase_if(records, [](const std::vector<std::string>& r) { return r.size() == 1 && r[0].empty(); });
  if (records.empty()) throw InvalidInput("csv: missing header row");
  CsvTable t;
  t.header = records.front();
  for (auto& h : t.header) {
    const auto a = h.find_first_not_of(' ');
    const auto b = h.find_last_not_of(' ');
    h = a == std::string::npos ? "" : h.substr(a, b - a + 1);
  }
  for (std::size_t r = 1; r < records.size(); ++r) {
    if (records[r].size() != t.header.size()) {
      throw InvalidInput("csv: record " + std::to_string(r + 1) + " has " + std::to_string(records[r].size()) +
                         " fields, header has " + std::to_string(t.header.size()));
    }
    t.rows.push_back(std::move(records[r]));
  }
  return t;
}

CsvTable read_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidInput("cannot read '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_csv(ss.str());
}

void write_csv(std::ostream& out, const CsvTable& table) {
  auto field = [&](const std::string& f) {
    if (f.find_first_of(",\"\r\n") == std::string::npos) {
      out << f;
      return;
    }
    out << '"';
    for (char c : f) {
      if (c == '"') out << '"';
      out << c;
    }
    out << '"';
  };
  auto record = [&](const std::vector<std::string>& r) {
    for (std::size_t k = 0; k < r.size(); ++k) {
      if (k) out << ',';
      field(r[k]);
    }
    out << '\n';
  };
  record(table.header);
  for (const auto& r : table.rows) record(r);
}

std::string format_double(double v) {
  if (std::isnan(v)) return "NA";
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

namespace {

bool is_missing(const std::string& s) {
  const auto a = s.find_first_not_of(" \t");
  if (a == std::string::npos) return true;
  const auto b = s.find_last_not_of(" \t");
  return s.substr(a, b - a + 1) == "NA";
}

std::optional<double> parse_double(const std::string& raw) {
  const auto a = raw.find_first_not_of(" \t");
  const auto b = raw.find_last_not_of(" \t");
  if (a == std::string::npos) return std::nullopt;
  const std::string s = raw.substr(a, b - a + 1);
  double v = 0.0;
  const char* first = s.data();
  if (*first == '+') ++first;
  const auto r = std::from_chars(first, s.data() + s.size(), v);
  if (r.ec != std::errc() || r.ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

}  // namespace

IngestSpec ingest_spec(const ModelConfig& config) {
  IngestSpec s;
  for (const auto& st : config.spec.streams) s.streams.push_back(st.name);
  s.covariates = config.covariate_names();
  for (const auto& f : config.spec.tpm_formulas) {
    for (const auto& t : f.terms) {
      if (t.kind == TermKind::factor) s.categorical_ok.push_back(t.var);
      if (t.kind != TermKind::smooth) continue;
      if (!t.smooth.by.empty()) s.categorical_ok.push_back(t.smooth.by);
      for (const auto& m : t.smooth.marginals) {
        if (m.kind == BasisKind::random_effect) s.categorical_ok.push_back(m.vars[0]);
      }
    }
  }
  s.track_column = config.track_column;
  return s;
}

IngestResult ingest_csv(const CsvTable& csv, const IngestSpec& spec) {
  IngestResult out;
  ObservationTable& t = out.table;
  const Index T = static_cast<Index>(csv.rows.size());
  if (T == 0) throw InvalidInput("data: no rows");
  auto need = [&](const std::string& name) {
    const int c = csv.column(name);
    if (c < 0) throw InvalidInput("data: missing required column '" + name + "'");
    return static_cast<std::size_t>(c);
  };
  for (const auto& s : spec.streams) {
    const std::size_t c = need(s);
    Vector v(T);
    for (Index r = 0; r < T; ++r) {
      const std::string& cell = csv.rows[static_cast<std::size_t>(r)][c];
      if (is_missing(cell)) {
        v(r) = std::numeric_limits<double>::quiet_NaN();
        continue;
      }
      const auto x = parse_double(cell);
      if (!x || !std::isfinite(*x)) {
        throw InvalidInput("data: non-numeric cell '" + cell + "' in column '" + s + "' (row " +
                           std::to_string(r + 1) + ")");
      }
      v(r) = *x;
    }
    t.stream_names.push_back(s);
    t.streams.push_back(v);
  }
  auto categorical = [&](const std::string& name) {
    return std::find(spec.categorical_ok.begin(), spec.categorical_ok.end(), name) != spec.categorical_ok.end();
  };
  for (const auto& name : spec.covariates) {
    const std::size_t c = need(name);
    Vector v(T);
    bool numeric = true;
    for (Index r = 0; r < T && numeric; ++r) {
      const std::string& cell = csv.rows[static_cast<std::size_t>(r)][c];
      if (is_missing(cell)) {
        throw InvalidInput("data: missing value in covariate '" + name + "' (row " + std::to_string(r + 1) + ")");
      }
      const auto x = parse_double(cell);
      if (!x || !std::isfinite(*x)) {
        if (!categorical(name)) {
          throw InvalidInput("data: non-numeric cell '" + cell + "' in column '" + name + "' (row " +
                             std::to_string(r + 1) + ")");
        }
        numeric = false;
        break;
      }
      v(r) = *x;
    }
    if (!numeric) {
      std::vector<std::string>& lv = out.levels[name];
      for (Index r = 0; r < T; ++r) {
        const std::string& cell = csv.rows[static_cast<std::size_t>(r)][c];
        auto it = std::find(lv.begin(), lv.end(), cell);
        if (it == lv.end()) {
          lv.push_back(cell);
          it = lv.end() - 1;
        }
        v(r) = static_cast<double>(it - lv.begin() + 1);
      }
    }
    t.set_covariate(name, v);
  }
  if (spec.track_column.empty()) {
    t.tracks = single_track(T);
  } else {
    const std::size_t c = need(spec.track_column);
    std::vector<std::string> finished;
    Index begin = 0;
    for (Index r = 1; r <= T; ++r) {
      const std::string& prev = csv.rows[static_cast<std::size_t>(r - 1)][c];
      if (is_missing(prev)) {
        throw InvalidInput("data: missing track id (row " + std::to_string(r) + ")");
      }
      if (r < T && csv.rows[static_cast<std::size_t>(r)][c] == prev) continue;
      if (std::find(finished.begin(), finished.end(), prev) != finished.end()) {
        throw InvalidInput("data: track '" + prev + "' is not contiguous (resumes at row " +
                           std::to_string(begin + 1) + ")");
      }
      finished.push_back(prev);
      t.tracks.push_back({prev, begin, r});
      begin = r;
    }
  }
  t.validate();
  return out;
}

IngestResult ingest_csv_file(const std::string& path, const IngestSpec& spec) {
  return ingest_csv(read_csv(path), spec);
}

CsvTable observations_to_csv(const ObservationTable& table, const std::string& track_column) {
  CsvTable out;
  const bool track_is_covariate = !track_column.empty() && table.has_covariate(track_column);
  if (!track_column.empty() && !track_is_covariate) out.header.push_back(track_column);
  for (const auto& c : table.covariate_names) out.header.push_back(c);
  for (const auto& s : table.stream_names) out.header.push_back(s);
  const Index T = table.rows();
  for (const auto& tr : table.tracks) {
    for (Index r = tr.begin; r < tr.end; ++r) {
      std::vector<std::string> row;
      if (!track_column.empty() && !track_is_covariate) row.push_back(tr.id);
      for (const auto& c : table.covariates) row.push_back(format_double(c(r)));
      for (const auto& s : table.streams) row.push_back(format_double(s(r)));
      out.rows.push_back(std::move(row));
    }
  }
  if (static_cast<Index>(out.rows.size()) != T) throw InvalidInput("observations_to_csv: tracks do not cover rows");
  return out;
}

// ------------------------------------------------------------- serialization

namespace {

json number(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }
double number_from(const json& j) {
  return j.is_null() ? std::numeric_limits<double>::quiet_NaN() : j.get<double>();
}

json basis_to_json(const MarginalBasis& b) {
  json j;
  j["kind"] = to_string(b.kind);
  j["K"] = b.K;
  j["degree"] = b.degree;
  j["penalty_order"] = b.penalty_order;
  j["knots"] = to_json(b.knots);
  j["knots_2d"] = to_json(b.knots_2d);
  j["constraint_basis"] = to_json(b.constraint_basis);
  j["period"] = b.period ? json(*b.period) : json(nullptr);
  j["lower"] = b.lower;
  j["upper"] = b.upper;
  return j;
}

MarginalBasis basis_from_json(const json& j) {
  MarginalBasis b;
  b.kind = basis_kind_from_string(j.at("kind").get<std::string>());
  b.K = j.at("K").get<int>();
  b.degree = j.at("degree").get<int>();
  b.penalty_order = j.at("penalty_order").get<int>();
  b.knots = vector_from_json(j.at("knots"));
  b.knots_2d = matrix_from_json(j.at("knots_2d"));
  b.constraint_basis = matrix_from_json(j.at("constraint_basis"));
  if (!j.at("period").is_null()) b.period = j.at("period").get<double>();
  b.lower = j.at("lower").get<double>();
  b.upper = j.at("upper").get<double>();
  return b;
}

json centering_to_json(const Centering& c) {
  return {{"active", c.active}, {"means", to_json(c.means)}, {"dropped", c.dropped}};
}

Centering centering_from_json(const json& j) {
  Centering c;
  c.active = j.at("active").get<bool>();
  c.means = vector_from_json(j.at("means"));
  c.dropped = j.at("dropped").get<Index>();
  return c;
}

const char* kind_name(TermKind k) {
  switch (k) {
    case TermKind::smooth:
      return "smooth";
    case TermKind::factor:
      return "factor";
    case TermKind::linear:
      return "linear";
  }
  return "?";
}

const char* mode_name(TermMode m) {
  switch (m) {
    case TermMode::simple:
      return "s";
    case TermMode::tensor_full:
      return "te";
    case TermMode::tensor_anova_interaction:
      return "ti";
  }
  return "?";
}

}  // namespace

json to_json(const Matrix& m) {
  json rows = json::array();
  for (Index i = 0; i < m.rows(); ++i) {
    json r = json::array();
    for (Index k = 0; k < m.cols(); ++k) r.push_back(number(m(i, k)));
    rows.push_back(r);
  }
  return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", rows}};
}

Matrix matrix_from_json(const json& j) {
  const Index r = j.at("rows").get<Index>(), c = j.at("cols").get<Index>();
  Matrix m(r, c);
  const json& d = j.at("data");
  for (Index i = 0; i < r; ++i) {
    for (Index k = 0; k < c; ++k) m(i, k) = number_from(d.at(static_cast<std::size_t>(i)).at(static_cast<std::size_t>(k)));
  }
  return m;
}

json to_json(const Vector& v) {
  json a = json::array();
  for (Index i = 0; i < v.size(); ++i) a.push_back(number(v(i)));
  return a;
}

Vector vector_from_json(const json& j) {
  Vector v(static_cast<Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) v(static_cast<Index>(i)) = number_from(j[i]);
  return v;
}

json to_json(const PredictorDesign& d) {
  json terms = json::array();
  for (const auto& t : d.terms) {
    json jt;
    jt["label"] = t.label;
    jt["kind"] = kind_name(t.kind);
    jt["mode"] = mode_name(t.mode);
    jt["inputs"] = t.inputs;
    jt["by"] = t.by;
    jt["level"] = t.level;
    jt["cols"] = t.cols;
    json marg = json::array(), cent = json::array();
    for (const auto& m : t.recipe.marginals) marg.push_back(basis_to_json(m));
    for (const auto& c : t.recipe.marginal_centering) cent.push_back(centering_to_json(c));
    jt["recipe"] = {{"marginals", marg},
                    {"marginal_centering", cent},
                    {"tensor", t.recipe.tensor},
                    {"block_centering", centering_to_json(t.recipe.block_centering)}};
    json pens = json::array();
    for (const auto& p : t.penalties) pens.push_back({{"label", p.label}, {"S", to_json(p.S)}});
    jt["penalties"] = pens;
    terms.push_back(jt);
  }
  return {{"terms", terms}};
}

PredictorDesign design_from_json(const json& j) {
  PredictorDesign d;
  for (const auto& jt : j.at("terms")) {
    CompiledTerm t;
    t.label = jt.at("label").get<std::string>();
    const std::string kind = jt.at("kind").get<std::string>();
    t.kind = kind == "factor" ? TermKind::factor : kind == "linear" ? TermKind::linear : TermKind::smooth;
    const std::string mode = jt.at("mode").get<std::string>();
    t.mode = mode == "te" ? TermMode::tensor_full : mode == "ti" ? TermMode::tensor_anova_interaction : TermMode::simple;
    t.inputs = jt.at("inputs").get<std::vector<std::vector<std::string>>>();
    t.by = jt.at("by").get<std::string>();
    t.level = jt.at("level").get<double>();
    t.cols = jt.at("cols").get<Index>();
    const json& r = jt.at("recipe");
    for (const auto& m : r.at("marginals")) t.recipe.marginals.push_back(basis_from_json(m));
    for (const auto& c : r.at("marginal_centering")) t.recipe.marginal_centering.push_back(centering_from_json(c));
    t.recipe.tensor = r.at("tensor").get<bool>();
    t.recipe.block_centering = centering_from_json(r.at("block_centering"));
    for (const auto& p : jt.at("penalties")) {
      t.penalties.push_back({matrix_from_json(p.at("S")), p.at("label").get<std::string>()});
    }
    d.terms.push_back(std::move(t));
  }
  Index cols = 1;
  for (const auto& t : d.terms) cols += t.cols;
  d.X = Matrix(0, cols);
  return d;
}

json result_document(const std::string& config_text, const std::string& data_path, const HmmModel& model,
                     const PenaltyModel& penalties, const FitResult& fit, int exit_code) {
  json doc;
  doc["format"] = "mshmm-result";
  doc["version"] = 1;
  doc["config"] = config_text;
  doc["data"] = data_path.empty() ? "" : std::filesystem::absolute(data_path).string();
  doc["status"] = to_string(fit.status);
  doc["message"] = fit.message;
  doc["exit_code"] = exit_code;
  doc["states"] = model.states();
  doc["n_obs"] = fit.n_obs;
  doc["tracks"] = model.data().tracks.size();

  doc["theta"] = to_json(fit.theta);
  json layout = json::array();
  for (const auto& b : model.layout().blocks) {
    layout.push_back({{"name", b.name},
                      {"start", b.start},
                      {"length", b.length},
                      {"link", to_string(b.link)},
                      {"penalized", b.penalized},
                      {"values", to_json(Vector(fit.theta.segment(b.start, b.length)))}});
  }
  doc["layout"] = layout;
  json natural = json::object();
  const EmissionParams ep = model.emissions(fit.theta);
  for (std::size_t s = 0; s < model.spec().streams.size(); ++s) {
    const auto params = family_params(model.spec().streams[s].family);
    json js = {{"family", to_string(model.spec().streams[s].family)}};
    for (std::size_t p = 0; p < params.size(); ++p) {
      js[params[p].name] = to_json(Vector(ep.natural[s].row(static_cast<Index>(p)).transpose()));
    }
    natural[model.spec().streams[s].name] = js;
  }
  doc["natural"] = natural;

  json lambdas = json::array();
  for (std::size_t j = 0; j < penalties.size(); ++j) {
    const double l = fit.lambda(static_cast<Index>(j));
    const int g = fit.map.group[j];
    lambdas.push_back({{"label", penalties.block(j).label},
                       {"lambda", l},
                       {"sigma2", 1.0 / l},
                       {"group", g},
                       {"fixed", g == LambdaMap::kFixed}});
  }
  doc["lambda"] = lambdas;
  doc["map"] = fit.map.group;
  doc["loglik"] = fit.loglik;
  doc["penalized_loglik"] = fit.penalized_loglik;
  doc["restricted_loglik"] = number(fit.restricted_loglik);
  doc["edf"] = fit.edf;
  doc["aic"] = fit.aic;
  doc["bic"] = fit.bic;
  doc["penalty_rank"] = fit.penalty_rank;
  doc["outer_gradient"] = to_json(fit.outer_gradient);
  doc["inner_iterations"] = fit.inner_iterations;
  doc["J_corrected"] = fit.J_corrected;
  json trace = json::array();
  for (const auto& it : fit.trace.iterations) {
    trace.push_back({{"lambda", to_json(it.lambda)},
                     {"gradient", to_json(it.gradient)},
                     {"inner_iterations", it.inner_iterations},
                     {"restricted_loglik", number(it.restricted_loglik)},
                     {"loglik", it.loglik},
                     {"J_corrected", it.J_corrected}});
  }
  doc["trace"] = trace;
  doc["J"] = fit.J.dim() ? to_json(fit.J.matrix()) : json(nullptr);
  json designs = json::array(), entries = json::array();
  std::map<const PredictorDesign*, int> seen;
  for (int e = 0; e < model.entries(); ++e) {
    const PredictorDesign* d = &model.design(e);
    auto it = seen.find(d);
    if (it == seen.end()) {
      it = seen.emplace(d, static_cast<int>(designs.size())).first;
      designs.push_back(to_json(*d));
    }
    entries.push_back({{"name", model.entry_name(e)}, {"offset", model.entry_offset(e)}, {"design", it->second}});
  }
  doc["designs"] = designs;
  doc["entries"] = entries;
  return doc;
}

LoadedResult load_result(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidInput("cannot read result '" + path + "'");
  LoadedResult r;
  try {
    in >> r.doc;
  } catch (const json::exception& e) {
    throw InvalidInput("result '" + path + "': " + e.what());
  }
  const json& d = r.doc;
  if (d.value("format", "") != "mshmm-result") throw InvalidInput("'" + path + "' is not a result document");
  try {
    r.config_text = d.at("config").get<std::string>();
    r.config = parse_config(r.config_text);
    r.data_path = d.at("data").get<std::string>();
    r.loglik = d.at("loglik").get<double>();
    StoredModel& s = r.stored;
    s.N = d.at("states").get<int>();
    s.theta = vector_from_json(d.at("theta"));
    if (!d.at("J").is_null()) s.J = SymMatrix::symmetrized(matrix_from_json(d.at("J")));
    std::vector<PredictorDesign> designs;
    for (const auto& jd : d.at("designs")) designs.push_back(design_from_json(jd));
    for (const auto& je : d.at("entries")) {
      s.entry_names.push_back(je.at("name").get<std::string>());
      s.entry_offset.push_back(je.at("offset").get<Index>());
      s.designs.push_back(designs.at(je.at("design").get<std::size_t>()));
    }
    r.lambda.resize(static_cast<Index>(d.at("lambda").size()));
    std::vector<int> groups;
    for (std::size_t j = 0; j < d.at("lambda").size(); ++j) {
      r.lambda(static_cast<Index>(j)) = d.at("lambda")[j].at("lambda").get<double>();
      groups.push_back(d.at("lambda")[j].at("group").get<int>());
    }
    r.map = LambdaMap::from_labels(groups);
  } catch (const json::exception& e) {
    throw InvalidInput("result '" + path + "': " + e.what());
  }
  return r;
}

HmmModel rebuild_model(const LoadedResult& r) {
  IngestResult in = ingest_csv_file(r.data_path, ingest_spec(r.config));
  return HmmModel(r.config.spec, std::move(in.table));
}

FitResult fit_from_result(const LoadedResult& r) {
  FitResult f;
  f.theta = r.stored.theta;
  f.lambda = r.lambda;
  f.map = r.map;
  f.J = r.stored.J;
  f.loglik = r.loglik;
  f.n_obs = r.doc.at("n_obs").get<Index>();
  const std::string st = r.doc.at("status").get<std::string>();
  f.status = st == "converged" ? FitStatus::converged
             : st == "inner_failure" ? FitStatus::inner_failure
             : st == "oscillation" ? FitStatus::oscillation
                                   : FitStatus::outer_nonconvergence;
  return f;
}

void write_json(const std::string& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw InvalidInput("cannot write '" + path + "'");
  out << j.dump(1) << "\n";
}

}  // namespace mshmm
