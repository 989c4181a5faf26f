#include "qhr/model_io.hpp"

#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

#include "qhr/types.hpp"

namespace qhr {
namespace {

using nlohmann::json;

const std::set<std::string>& known_methods() {
  static const std::set<std::string> m = {"l1-qr", "l1-qhr", "l0-qr", "l0-qhr",
                                          "lasso"};
  return m;
}

}  // namespace

std::string model_to_json(const ModelArtifact& model) {
  if (!known_methods().count(model.method))
    throw std::invalid_argument("model_to_json: unknown method '" +
                                model.method + "'");
  json coeffs = json::array();
  int prev = -1;
  for (const auto& [idx, val] : model.coefficients) {
    if (idx <= prev)
      throw std::invalid_argument(
          "model_to_json: coefficient indices must be strictly increasing");
    if (idx < 0 || idx >= model.dimension)
      throw std::invalid_argument("model_to_json: coefficient index out of range");
    prev = idx;
    coeffs.push_back(json::array({idx, val}));
  }

  // json uses std::map underneath, so keys serialize sorted: the output is
  // canonical for a given artifact.
  json j;
  j["schema_version"] = model.schema_version;
  j["method"] = model.method;
  j["tau"] = model.tau;
  j["kappa"] = model.kappa;
  if (model.lambda) j["lambda"] = *model.lambda;
  if (model.sparsity) j["sparsity"] = *model.sparsity;
  j["coefficients"] = coeffs;
  j["dimension"] = model.dimension;
  j["feature_names"] = model.feature_names;
  j["provenance"] =
      json{{"seed", model.seed}, {"solver", model.solver},
           {"iterations", model.iterations}};
  return j.dump(2) + "\n";
}

ModelArtifact model_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw std::runtime_error(std::string("model JSON parse error: ") + e.what());
  }
  if (!j.is_object()) throw std::runtime_error("model JSON: not an object");
  if (!j.contains("schema_version") || !j["schema_version"].is_number_integer())
    throw std::runtime_error("model JSON: missing schema_version");
  const int version = j["schema_version"].get<int>();
  if (version != 1) {
    std::ostringstream os;
    os << "model JSON: unsupported schema_version " << version;
    throw std::runtime_error(os.str());
  }

  ModelArtifact model;
  model.schema_version = version;
  model.method = j.at("method").get<std::string>();
  if (!known_methods().count(model.method))
    throw std::runtime_error("model JSON: unknown method '" + model.method + "'");
  model.tau = j.at("tau").get<double>();
  model.kappa = j.at("kappa").get<double>();
  if (j.contains("lambda")) model.lambda = j["lambda"].get<double>();
  if (j.contains("sparsity")) model.sparsity = j["sparsity"].get<int>();
  model.dimension = j.at("dimension").get<int>();
  if (model.dimension < 0)
    throw std::runtime_error("model JSON: negative dimension");

  int prev = -1;
  for (const auto& entry : j.at("coefficients")) {
    if (!entry.is_array() || entry.size() != 2)
      throw std::runtime_error("model JSON: coefficient entries must be "
                               "[index, value] pairs");
    const int idx = entry[0].get<int>();
    const double val = entry[1].get<double>();
    if (idx <= prev)
      throw std::runtime_error(
          "model JSON: coefficient indices must be strictly increasing");
    if (idx < 0 || idx >= model.dimension)
      throw std::runtime_error("model JSON: coefficient index out of range");
    prev = idx;
    model.coefficients.emplace_back(idx, val);
  }

  if (j.contains("feature_names"))
    model.feature_names = j["feature_names"].get<std::vector<std::string>>();
  if (!model.feature_names.empty() &&
      static_cast<int>(model.feature_names.size()) != model.dimension)
    throw std::runtime_error("model JSON: feature_names length != dimension");

  if (j.contains("provenance")) {
    const json& p = j["provenance"];
    if (p.contains("seed")) model.seed = p["seed"].get<std::uint64_t>();
    if (p.contains("solver")) model.solver = p["solver"].get<std::string>();
    if (p.contains("iterations")) model.iterations = p["iterations"].get<int>();
  }
  return model;
}

void write_model(const std::string& path, const ModelArtifact& model) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error(path + ": cannot open for writing");
  out << model_to_json(model);
  if (!out) throw std::runtime_error(path + ": write failed");
}

ModelArtifact read_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error(path + ": cannot open file");
  std::ostringstream buf;
  buf << in.rdbuf();
  return model_from_json(buf.str());
}

Eigen::VectorXd model_coefficients(const ModelArtifact& model) {
  Eigen::VectorXd beta = Eigen::VectorXd::Zero(model.dimension);
  for (const auto& [idx, val] : model.coefficients) beta[idx] = val;
  return beta;
}

ModelArtifact make_artifact(const std::string& method, double tau, double kappa,
                            const Eigen::VectorXd& beta,
                            const std::vector<std::string>& feature_names) {
  ModelArtifact model;
  model.method = method;
  model.tau = tau;
  model.kappa = kappa;
  model.dimension = static_cast<int>(beta.size());
  model.feature_names = feature_names;
  for (int idx : support_of(beta))
    model.coefficients.emplace_back(idx, beta[idx]);
  return model;
}

}  // namespace qhr
