#pragma once

#include <Eigen/Core>
#include <string>
#include <vector>

namespace qhr {

struct Dataset {
  Eigen::MatrixXd A;
  Eigen::VectorXd b;
  std::vector<std::string> feature_names;
  std::string response_name;
};

// CSV source description. response_column may be a column name (requires a
// header), a 1-based column index given as digits, or empty for the first
// column. Every non-response column becomes a feature, in file order.
struct DatasetFile {
  std::string path;
  bool has_header = true;
  std::string response_column;
};

// Strict numeric CSV reader: quoted fields per RFC 4180 (no embedded line
// breaks), '.' decimal separator, every cell a finite number. Errors carry
// the 1-based row/column location.
Dataset read_csv(const DatasetFile& file);

struct FeatureTable {
  Eigen::MatrixXd A;
  std::vector<std::string> names;
};

FeatureTable read_feature_csv(const std::string& path, bool has_header = true);

void write_dataset_csv(const std::string& path, const Dataset& data);
void write_predictions_csv(const std::string& path,
                           const Eigen::VectorXd& predictions);

// Shortest-width decimal rendering of a double at 17 significant digits;
// round-trips exactly and is byte-stable for a given value.
std::string format_g17(double v);

}  // namespace qhr
