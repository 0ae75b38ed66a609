#pragma once

// CSV ingestion and emission, and the JSON result document.

#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "mshmm/config.hpp"
#include "mshmm/model.hpp"
#include "mshmm/qreml.hpp"

namespace mshmm {

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  /// Index of a header column, or -1.
  int column(const std::string& name) const;
};

/// RFC 4180: comma separated, optional double-quoted fields with "" escapes
/// and embedded line breaks. The header is required.
CsvTable parse_csv(const std::string& text);
CsvTable read_csv(const std::string& path);

/// Writes fields, quoting those that contain separators or quotes.
void write_csv(std::ostream& out, const CsvTable& table);

/// Shortest text that reads back to the same double; "NA" for NaN.
std::string format_double(double v);

/// Columns needed to build an ObservationTable.
struct IngestSpec {
  std::vector<std::string> streams;
  std::vector<std::string> covariates;
  std::vector<std::string> categorical_ok;  // may hold non-numeric labels
  std::string track_column;                 // empty: one track
};

IngestSpec ingest_spec(const ModelConfig& config);

struct IngestResult {
  ObservationTable table;
  /// Labels of categorical covariates in code order (code k is label k-1).
  std::map<std::string, std::vector<std::string>> levels;
};

/// Empty cells and NA are missing. Track ids must form contiguous runs.
IngestResult ingest_csv(const CsvTable& csv, const IngestSpec& spec);
IngestResult ingest_csv_file(const std::string& path, const IngestSpec& spec);

/// Ingest-compatible CSV of a table: track column (when named), covariates,
/// streams.
CsvTable observations_to_csv(const ObservationTable& table, const std::string& track_column);

// ------------------------------------------------------------- serialization

nlohmann::json to_json(const Matrix& m);
Matrix matrix_from_json(const nlohmann::json& j);
nlohmann::json to_json(const Vector& v);
Vector vector_from_json(const nlohmann::json& j);
nlohmann::json to_json(const PredictorDesign& d);
PredictorDesign design_from_json(const nlohmann::json& j);

/// Full fit record: configuration text, data path, estimates with labels,
/// smoothing parameters, criteria, outer trace, J and serialized bases.
nlohmann::json result_document(const std::string& config_text, const std::string& data_path,
                               const HmmModel& model, const PenaltyModel& penalties,
                               const FitResult& fit, int exit_code);

/// Prediction-ready view of a stored result.
struct StoredModel {
  int N = 2;
  std::vector<std::string> entry_names;
  std::vector<PredictorDesign> designs;  // one per entry
  std::vector<Index> entry_offset;
  Vector theta;
  SymMatrix J;
};

struct LoadedResult {
  nlohmann::json doc;
  std::string config_text;
  ModelConfig config;
  std::string data_path;
  StoredModel stored;
  Vector lambda;
  LambdaMap map;
  double loglik = 0.0;
};

LoadedResult load_result(const std::string& path);

/// Re-ingests the data referenced by the result and rebuilds the model.
HmmModel rebuild_model(const LoadedResult& r);

/// FitResult fields needed by sdreport_outer.
FitResult fit_from_result(const LoadedResult& r);

void write_json(const std::string& path, const nlohmann::json& j);

}  // namespace mshmm
