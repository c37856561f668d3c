#include "qir/csv.hpp"

#include <algorithm>
#include <cctype>
#include <cerrno>
#include <cmath>
#include <cstdlib>
#include <fstream>

#include "qir/errors.hpp"
#include "qir/text.hpp"

namespace qir {

namespace {

std::string trim(std::string s) {
  const auto not_space = [](unsigned char c) { return !std::isspace(c); };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
  s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
  return s;
}

// Reads one record, which may span lines inside quotes. Returns false at EOF.
bool read_record(std::istream& in, std::vector<std::string>& fields, long row) {
  fields.clear();
  std::string field;
  bool quoted = false, any = false, was_quoted = false;
  char c;
  while (in.get(c)) {
    any = true;
    if (quoted) {
      if (c == '"') {
        if (in.peek() == '"') {
          in.get(c);
          field += '"';
        } else {
          quoted = false;
        }
      } else {
        field += c;
      }
    } else if (c == '"') {
      if (!trim(field).empty()) throw ParseError("stray quote inside a field", row);
      field.clear();
      quoted = was_quoted = true;
    } else if (c == ',') {
      fields.push_back(was_quoted ? field : trim(field));
      field.clear();
      was_quoted = false;
    } else if (c == '\n') {
      break;
    } else if (c != '\r') {
      field += c;
    }
  }
  if (quoted) throw ParseError("unterminated quoted field", row);
  if (!any) return false;
  fields.push_back(was_quoted ? field : trim(field));
  return true;
}

bool blank(const std::vector<std::string>& fields) {
  return std::all_of(fields.begin(), fields.end(), [](const std::string& f) { return f.empty(); });
}

}  // namespace

CsvTable read_csv_table(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open '" + path.string() + "'");
  CsvTable table;
  std::vector<std::string> fields;
  if (!read_record(in, fields, 0) || blank(fields)) throw ParseError("'" + path.string() + "' has no header row");
  table.header = fields;
  for (const auto& name : table.header) {
    if (name.empty()) throw ParseError("empty column name in header");
  }
  long row = 0;
  while (read_record(in, fields, row + 1)) {
    if (blank(fields)) continue;
    ++row;
    if (fields.size() != table.header.size()) {
      throw ParseError("row " + std::to_string(row) + " has " + std::to_string(fields.size()) + " fields, expected " +
                           std::to_string(table.header.size()),
                       row);
    }
    std::vector<double> values(fields.size());
    for (size_t j = 0; j < fields.size(); ++j) {
      const std::string& f = fields[j];
      char* end = nullptr;
      errno = 0;
      const double v = f.empty() ? 0.0 : std::strtod(f.c_str(), &end);
      if (f.empty() || end != f.c_str() + f.size() || errno == ERANGE || !std::isfinite(v)) {
        throw ParseError("non-numeric value '" + f + "' at row " + std::to_string(row) + ", column \"" +
                             table.header[j] + "\"",
                         row, table.header[j]);
      }
      values[j] = v;
    }
    table.rows.push_back(std::move(values));
  }
  if (table.rows.empty()) throw ParseError("'" + path.string() + "' has no data rows");
  return table;
}

Dataset parse_dataset(const std::filesystem::path& path, const CsvOptions& options) {
  const CsvTable table = read_csv_table(path);
  const auto it = std::find(table.header.begin(), table.header.end(), options.response);
  const bool has_response = it != table.header.end();
  if (!has_response && options.require_response) {
    throw ParseError("response column \"" + options.response + "\" not found", 0, options.response);
  }
  const long response_col = has_response ? static_cast<long>(it - table.header.begin()) : -1;
  const auto covariates = static_cast<Eigen::Index>(table.header.size()) - (has_response ? 1 : 0);
  const Eigen::Index p = covariates + (options.intercept ? 1 : 0);
  if (p == 0) throw ParseError("no covariate columns");

  const auto n = static_cast<Eigen::Index>(table.rows.size());
  Eigen::VectorXd y = Eigen::VectorXd::Zero(n);
  RowMatrix X(n, p);
  for (Eigen::Index i = 0; i < n; ++i) {
    Eigen::Index col = 0;
    if (options.intercept) X(i, col++) = 1.0;
    for (size_t j = 0; j < table.header.size(); ++j) {
      if (static_cast<long>(j) == response_col) {
        y(i) = table.rows[i][j];
      } else {
        X(i, col++) = table.rows[i][j];
      }
    }
  }
  return Dataset(std::move(y), std::move(X));
}

void write_dataset(const Dataset& data, const std::filesystem::path& path,
                   const std::vector<std::string>& covariate_names, const std::string& response) {
  if (!covariate_names.empty() && static_cast<Eigen::Index>(covariate_names.size()) != data.p()) {
    throw DomainError("one name per covariate column is required");
  }
  std::ofstream out(path);
  if (!out) throw ParseError("cannot write '" + path.string() + "'");
  out << response;
  for (Eigen::Index j = 0; j < data.p(); ++j) {
    out << ',' << (covariate_names.empty() ? "x" + std::to_string(j + 1) : covariate_names[j]);
  }
  out << '\n';
  for (Eigen::Index i = 0; i < data.n(); ++i) {
    out << format_full(data.y(i));
    for (Eigen::Index j = 0; j < data.p(); ++j) out << ',' << format_full(data.X(i, j));
    out << '\n';
  }
}

}  // namespace qir
