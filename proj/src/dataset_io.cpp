#include "qhr/dataset_io.hpp"

#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace qhr {
namespace {

[[noreturn]] void fail_at(const std::string& path, std::size_t row,
                          std::size_t col, const std::string& what) {
  std::ostringstream os;
  os << path << ": row " << row << ", column " << col << ": " << what;
  throw std::runtime_error(os.str());
}

std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error(path + ": cannot open file");
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  if (!lines.empty() && lines.front().size() >= 3 &&
      static_cast<unsigned char>(lines.front()[0]) == 0xEF &&
      static_cast<unsigned char>(lines.front()[1]) == 0xBB &&
      static_cast<unsigned char>(lines.front()[2]) == 0xBF) {
    lines.front().erase(0, 3);
  }
  while (!lines.empty() && lines.back().empty()) lines.pop_back();
  return lines;
}

// One record; quotes delimit fields, a doubled quote inside a quoted field
// is a literal quote. Embedded line breaks are not supported.
std::vector<std::string> split_record(const std::string& path, std::size_t row,
                                      const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  std::size_t i = 0;
  const std::size_t n = line.size();
  while (i <= n) {
    if (i == n) {
      if (quoted) fail_at(path, row, fields.size() + 1, "unterminated quote");
      fields.push_back(cur);
      break;
    }
    const char ch = line[i];
    if (quoted) {
      if (ch == '"') {
        if (i + 1 < n && line[i + 1] == '"') {
          cur.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur.push_back(ch);
      }
    } else if (ch == '"') {
      quoted = true;
    } else if (ch == ',') {
      fields.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(ch);
    }
    ++i;
  }
  return fields;
}

double parse_cell(const std::string& path, std::size_t row, std::size_t col,
                  const std::string& raw) {
  std::size_t lo = 0, hi = raw.size();
  while (lo < hi && std::isspace(static_cast<unsigned char>(raw[lo]))) ++lo;
  while (hi > lo && std::isspace(static_cast<unsigned char>(raw[hi - 1]))) --hi;
  if (lo == hi) fail_at(path, row, col, "empty numeric field");
  double value = 0.0;
  const char* first = raw.data() + lo;
  const char* last = raw.data() + hi;
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc() || ptr != last)
    fail_at(path, row, col, "not a number: '" + raw.substr(lo, hi - lo) + "'");
  if (!std::isfinite(value))
    fail_at(path, row, col, "non-finite value: '" + raw.substr(lo, hi - lo) + "'");
  return value;
}

bool all_digits(const std::string& s) {
  if (s.empty()) return false;
  for (char ch : s)
    if (!std::isdigit(static_cast<unsigned char>(ch))) return false;
  return true;
}

std::string quote_if_needed(const std::string& name) {
  if (name.find_first_of(",\"\r\n") == std::string::npos) return name;
  std::string out = "\"";
  for (char ch : name) {
    if (ch == '"') out += "\"\"";
    else out.push_back(ch);
  }
  out += "\"";
  return out;
}

struct RawTable {
  std::vector<std::string> names;  // empty when the file has no header
  Eigen::MatrixXd values;
};

RawTable read_table(const std::string& path, bool has_header) {
  const std::vector<std::string> lines = read_lines(path);
  if (lines.empty()) throw std::runtime_error(path + ": empty file");

  RawTable table;
  std::size_t first_data = 0;
  std::size_t ncol = 0;
  if (has_header) {
    table.names = split_record(path, 1, lines[0]);
    ncol = table.names.size();
    first_data = 1;
    if (lines.size() == 1)
      throw std::runtime_error(path + ": header but no data rows");
  } else {
    ncol = split_record(path, 1, lines[0]).size();
  }
  const std::size_t nrow = lines.size() - first_data;
  table.values.resize(static_cast<Eigen::Index>(nrow),
                      static_cast<Eigen::Index>(ncol));
  for (std::size_t r = 0; r < nrow; ++r) {
    const std::size_t file_row = first_data + r + 1;
    const auto fields = split_record(path, file_row, lines[first_data + r]);
    if (fields.size() != ncol) {
      std::ostringstream os;
      os << "expected " << ncol << " fields, found " << fields.size();
      fail_at(path, file_row, 1, os.str());
    }
    for (std::size_t c = 0; c < ncol; ++c) {
      table.values(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) =
          parse_cell(path, file_row, c + 1, fields[c]);
    }
  }
  return table;
}

}  // namespace

Dataset read_csv(const DatasetFile& file) {
  RawTable table = read_table(file.path, file.has_header);
  const std::size_t ncol = static_cast<std::size_t>(table.values.cols());
  if (ncol < 2)
    throw std::runtime_error(file.path +
                             ": need a response column and at least one feature");

  std::size_t resp = 0;
  if (!file.response_column.empty()) {
    if (all_digits(file.response_column)) {
      const unsigned long idx = std::stoul(file.response_column);
      if (idx < 1 || idx > ncol)
        throw std::runtime_error(file.path + ": response column index " +
                                 file.response_column + " out of range");
      resp = idx - 1;
    } else {
      if (!file.has_header)
        throw std::runtime_error(file.path +
                                 ": response column given by name but the file "
                                 "has no header");
      bool found = false;
      for (std::size_t c = 0; c < ncol; ++c) {
        if (table.names[c] == file.response_column) {
          resp = c;
          found = true;
          break;
        }
      }
      if (!found)
        throw std::runtime_error(file.path + ": no column named '" +
                                 file.response_column + "'");
    }
  }

  Dataset out;
  const Eigen::Index n = table.values.rows();
  out.A.resize(n, static_cast<Eigen::Index>(ncol - 1));
  out.b = table.values.col(static_cast<Eigen::Index>(resp));
  Eigen::Index dst = 0;
  for (std::size_t c = 0; c < ncol; ++c) {
    if (c == resp) continue;
    out.A.col(dst++) = table.values.col(static_cast<Eigen::Index>(c));
    if (file.has_header) out.feature_names.push_back(table.names[c]);
  }
  if (file.has_header) {
    out.response_name = table.names[resp];
  } else {
    out.response_name = "b";
    for (std::size_t j = 1; j < ncol; ++j)
      out.feature_names.push_back("x" + std::to_string(j));
  }
  return out;
}

FeatureTable read_feature_csv(const std::string& path, bool has_header) {
  RawTable table = read_table(path, has_header);
  FeatureTable out;
  out.A = std::move(table.values);
  if (has_header) {
    out.names = std::move(table.names);
  } else {
    for (Eigen::Index j = 0; j < out.A.cols(); ++j)
      out.names.push_back("x" + std::to_string(j + 1));
  }
  return out;
}

void write_dataset_csv(const std::string& path, const Dataset& data) {
  if (data.A.rows() != data.b.size())
    throw std::invalid_argument("write_dataset_csv: row count mismatch");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error(path + ": cannot open for writing");
  out << quote_if_needed(data.response_name.empty() ? "b" : data.response_name);
  for (Eigen::Index j = 0; j < data.A.cols(); ++j) {
    const std::string name =
        j < static_cast<Eigen::Index>(data.feature_names.size())
            ? data.feature_names[static_cast<std::size_t>(j)]
            : "x" + std::to_string(j + 1);
    out << ',' << quote_if_needed(name);
  }
  out << '\n';
  for (Eigen::Index i = 0; i < data.A.rows(); ++i) {
    out << format_g17(data.b[i]);
    for (Eigen::Index j = 0; j < data.A.cols(); ++j)
      out << ',' << format_g17(data.A(i, j));
    out << '\n';
  }
  if (!out) throw std::runtime_error(path + ": write failed");
}

void write_predictions_csv(const std::string& path,
                           const Eigen::VectorXd& predictions) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error(path + ": cannot open for writing");
  out << "prediction\n";
  for (Eigen::Index i = 0; i < predictions.size(); ++i)
    out << format_g17(predictions[i]) << '\n';
  if (!out) throw std::runtime_error(path + ": write failed");
}

std::string format_g17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return std::string(buf);
}

}  // namespace qhr
