#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace qhr {

// Serialized fit: sparse coefficients plus enough metadata to reproduce the
// run. Doubles survive a write/read round trip bit-exactly, and the emitted
// JSON is canonical (sorted keys, fixed layout) so equal artifacts produce
// identical bytes.
struct ModelArtifact {
  int schema_version = 1;
  std::string method;  // l1-qr | l1-qhr | l0-qr | l0-qhr | lasso
  double tau = 0.5;
  double kappa = 0.0;
  std::optional<double> lambda;
  std::optional<int> sparsity;
  // 0-based (index, value) pairs sorted by index; zeros omitted.
  std::vector<std::pair<int, double>> coefficients;
  int dimension = 0;
  std::vector<std::string> feature_names;
  std::uint64_t seed = 0;
  std::string solver;
  int iterations = 0;
};

std::string model_to_json(const ModelArtifact& model);
ModelArtifact model_from_json(const std::string& text);

void write_model(const std::string& path, const ModelArtifact& model);
ModelArtifact read_model(const std::string& path);

// Dense coefficient vector of length model.dimension.
Eigen::VectorXd model_coefficients(const ModelArtifact& model);

ModelArtifact make_artifact(const std::string& method, double tau, double kappa,
                            const Eigen::VectorXd& beta,
                            const std::vector<std::string>& feature_names);

}  // namespace qhr
