#pragma once

// Header-required CSV ingestion and export for datasets.

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "qir/model.hpp"

namespace qir {

struct CsvOptions {
  std::string response = "y";
  /// Prepend a column of ones to the covariates.
  bool intercept = true;
  /// When false the response column may be absent (prediction input); y is then zero.
  bool require_response = true;
};

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;
};

/// Numeric table with a header row. Quoted fields follow RFC 4180.
/// Row numbers in errors are 1-based data rows (the header is row 0).
CsvTable read_csv_table(const std::filesystem::path& path);

Dataset parse_dataset(const std::filesystem::path& path, const CsvOptions& options = {});

/// Writes y then the covariate columns at full precision. Column names default to x1..xp.
void write_dataset(const Dataset& data, const std::filesystem::path& path,
                   const std::vector<std::string>& covariate_names = {}, const std::string& response = "y");

}  // namespace qir
