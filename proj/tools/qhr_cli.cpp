// Command line front end: fit, omp, simulate, bench, predict.
//
// Exit codes: 0 success, 1 input error, 2 solver failure. stdout carries a
// single JSON document per invocation; all logging goes to stderr.

#include <cstdlib>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "qhr/dataset_io.hpp"
#include "qhr/ip_solver.hpp"
#include "qhr/model_io.hpp"
#include "qhr/omp.hpp"
#include "qhr/plq.hpp"
#include "qhr/prox.hpp"
#include "qhr/quantile_loss.hpp"
#include "qhr/simulate.hpp"
#include "qhr/types.hpp"

namespace {

using nlohmann::json;

constexpr int kExitOk = 0;
constexpr int kExitInput = 1;
constexpr int kExitSolver = 2;

struct InputError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct SolverError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

int env_thread_cap() {
  const char* raw = std::getenv("QHUBER_THREADS");
  if (!raw) return 0;
  try {
    const int v = std::stoi(raw);
    return v > 0 ? v : 0;
  } catch (const std::exception&) {
    std::cerr << "ignoring malformed QHUBER_THREADS='" << raw << "'\n";
    return 0;
  }
}

qhr::Method require_method(const std::string& name) {
  const auto m = qhr::parse_method(name);
  if (!m)
    throw InputError("unknown method '" + name +
                     "' (expected l1-qr, l1-qhr, l0-qr, l0-qhr, or lasso)");
  return *m;
}

// The method name decides the loss; --kappa only feeds the *-qhr variants.
double effective_kappa(qhr::Method m, double kappa_flag) {
  if (!qhr::method_uses_kappa(m)) return 0.0;
  if (!(kappa_flag > 0.0))
    throw InputError("quantile-Huber methods need --kappa > 0");
  return kappa_flag;
}

double lambda_ceiling(qhr::Method m, const Eigen::MatrixXd& A,
                      const Eigen::VectorXd& b, const qhr::QuantileSpec& spec) {
  return m == qhr::Method::lasso ? qhr::l1_lambda_max_l2(A, b)
                                 : qhr::l1_lambda_max(A, b, spec);
}

json fit_payload(const qhr::FitResult& fit) {
  json j;
  j["objective"] = fit.objective;
  j["support_size"] = static_cast<int>(fit.support.size());
  j["iterations"] = fit.iterations;
  j["status"] = qhr::to_string(fit.status);
  j["kkt_residual"] = fit.kkt_residual;
  return j;
}

void emit(const json& j) { std::cout << j.dump() << "\n"; }

// ---------------------------------------------------------------- fit / omp

struct FitArgs {
  std::string data_path;
  std::string response_col;
  bool no_header = false;
  std::string method = "l1-qr";
  double tau = 0.5;
  double kappa = 1.0;
  std::optional<double> lambda;
  std::optional<int> sparsity;
  std::string solver = "ip";
  double epsilon = 1e-5;
  std::uint64_t seed = 0;
  std::string out;
};

int cmd_fit(const FitArgs& args) {
  const qhr::Method method = require_method(args.method);
  qhr::QuantileSpec spec;
  spec.tau = args.tau;
  spec.kappa = effective_kappa(method, args.kappa);
  if (!(spec.tau > 0.0 && spec.tau < 1.0))
    throw InputError("--tau must lie in (0, 1)");
  if (args.solver != "ip" && args.solver != "admm" && args.solver != "fista")
    throw InputError("--solver must be ip, admm, or fista");

  qhr::DatasetFile file;
  file.path = args.data_path;
  file.has_header = !args.no_header;
  file.response_column = args.response_col;
  const qhr::Dataset data = qhr::read_csv(file);

  const bool l0 = (method == qhr::Method::l0_qr || method == qhr::Method::l0_qhr);
  if (l0 && args.solver != "ip")
    throw InputError("l0 methods refit through the interior point solver; "
                     "use --solver ip");
  if (method == qhr::Method::lasso && args.solver != "ip")
    throw InputError("the lasso baseline is only wired to --solver ip");

  qhr::FitResult fit;
  std::optional<double> lambda_used;
  std::optional<int> sparsity_used;

  if (l0) {
    if (!args.sparsity)
      throw InputError("l0 methods need --sparsity (target support size)");
    if (*args.sparsity < 1 || *args.sparsity > data.A.cols())
      throw InputError("--sparsity must lie in [1, p]");
    qhr::OmpConfig config;
    config.max_support = *args.sparsity;
    fit = qhr::run_omp(data.A, data.b, spec, config).fit;
    sparsity_used = *args.sparsity;
  } else {
    double lambda = args.lambda.value_or(-1.0);
    if (lambda < 0.0) {
      lambda = 0.1 * lambda_ceiling(method, data.A, data.b, spec);
      std::cerr << "no --lambda given; using 0.1 * lambda_max = " << lambda
                << "\n";
    }
    lambda_used = lambda;
    if (args.solver == "ip") {
      const qhr::PlqPenalty base = method == qhr::Method::lasso
                                       ? qhr::build_l2_plq(data.A, data.b)
                                       : qhr::build_plq(spec, data.A, data.b);
      fit = qhr::solve(qhr::augment_l1(base, lambda));
    } else if (args.solver == "admm") {
      fit = qhr::admm_solve(data.A, data.b, spec, lambda);
    } else {
      fit = qhr::fista_solve(data.A, data.b, spec, lambda, args.epsilon);
    }
  }

  if (fit.status == qhr::SolveStatus::numerical_failure)
    throw SolverError("solver reported numerical failure" +
                      (fit.warning.empty() ? std::string() : ": " + fit.warning));
  if (fit.status == qhr::SolveStatus::max_iters)
    std::cerr << "warning: iteration limit reached before the tolerance\n";

  if (!args.out.empty()) {
    qhr::ModelArtifact model = qhr::make_artifact(
        qhr::method_name(method), spec.tau, spec.kappa, fit.x,
        data.feature_names);
    model.lambda = lambda_used;
    model.sparsity = sparsity_used;
    model.seed = args.seed;
    model.solver = args.solver;
    model.iterations = fit.iterations;
    qhr::write_model(args.out, model);
    std::cerr << "wrote model to " << args.out << "\n";
  }

  emit(fit_payload(fit));
  return kExitOk;
}

int cmd_omp(const FitArgs& args) {
  qhr::QuantileSpec spec;
  spec.tau = args.tau;
  spec.kappa = args.kappa;  // kappa = 0 selects the plain check loss
  if (!(spec.tau > 0.0 && spec.tau < 1.0))
    throw InputError("--tau must lie in (0, 1)");
  if (spec.kappa < 0.0) throw InputError("--kappa must be >= 0");
  if (!args.sparsity) throw InputError("omp needs --sparsity");

  qhr::DatasetFile file;
  file.path = args.data_path;
  file.has_header = !args.no_header;
  file.response_column = args.response_col;
  const qhr::Dataset data = qhr::read_csv(file);
  if (*args.sparsity < 1 || *args.sparsity > data.A.cols())
    throw InputError("--sparsity must lie in [1, p]");

  qhr::OmpConfig config;
  config.max_support = *args.sparsity;
  const qhr::OmpResult res = qhr::run_omp(data.A, data.b, spec, config);
  if (res.fit.status == qhr::SolveStatus::numerical_failure)
    throw SolverError("greedy refit reported numerical failure");

  if (!args.out.empty()) {
    const char* name = spec.kappa > 0.0 ? "l0-qhr" : "l0-qr";
    qhr::ModelArtifact model = qhr::make_artifact(name, spec.tau, spec.kappa,
                                                  res.fit.x, data.feature_names);
    model.sparsity = static_cast<int>(res.trace.selected.size());
    model.seed = args.seed;
    model.solver = "ip";
    model.iterations = res.fit.iterations;
    qhr::write_model(args.out, model);
    std::cerr << "wrote model to " << args.out << "\n";
  }

  json j = fit_payload(res.fit);
  j["selected"] = res.trace.selected;
  j["mean_loss_trace"] = res.trace.losses;
  emit(j);
  return kExitOk;
}

// ---------------------------------------------------------------- simulate

struct SimArgs {
  qhr::SimConfig config;
  std::string out;
};

int cmd_simulate(const SimArgs& args) {
  if (args.out.empty()) throw InputError("simulate needs --out");
  const qhr::SimData data = qhr::generate(args.config);
  qhr::Dataset ds;
  ds.A = data.A;
  ds.b = data.b;
  ds.response_name = "b";
  for (int j = 1; j <= args.config.p; ++j)
    ds.feature_names.push_back("x" + std::to_string(j));
  qhr::write_dataset_csv(args.out, ds);

  json j;
  j["n"] = args.config.n;
  j["p"] = args.config.p;
  j["seed"] = args.config.seed;
  j["true_support"] = args.config.true_support;
  j["path"] = args.out;
  emit(j);
  return kExitOk;
}

// ------------------------------------------------------------------- bench

struct BenchArgs {
  qhr::ExperimentConfig config;
  std::vector<std::string> method_names = {"l1-qr", "l1-qhr", "l0-qr", "l0-qhr",
                                           "lasso"};
  std::string out_dir = ".";
  bool timings = false;
};

int cmd_bench(BenchArgs args) {
  for (const auto& name : args.method_names)
    args.config.methods.push_back(require_method(name));

  const int cap = env_thread_cap();
  if (cap > 0 && args.config.threads > cap) {
    std::cerr << "QHUBER_THREADS caps --threads at " << cap << "\n";
    args.config.threads = cap;
  }

  const qhr::ExperimentResult result = qhr::run_experiment(args.config);

  const std::string dir = args.out_dir.empty() ? "." : args.out_dir;
  const std::string results_path = dir + "/results.csv";
  qhr::write_results_csv(results_path, result, args.timings);
  qhr::write_summary_json(dir + "/summary.json", result);
  qhr::write_f1_by_tau_csv(dir + "/f1_by_tau.csv", result);
  qhr::write_f1_by_kappa_csv(dir + "/f1_by_kappa.csv", result);
  qhr::write_qq_csv(dir + "/qq.csv", result);

  if (result.failed_cells > 0)
    std::cerr << result.failed_cells << " grid cells failed and were skipped\n";
  bool any_ok = false;
  for (const auto& row : result.rows)
    if (std::isfinite(row.holdout_loss)) any_ok = true;

  json j;
  j["rows"] = static_cast<int>(result.rows.size());
  j["failed_cells"] = result.failed_cells;
  j["out_dir"] = dir;
  j["results_csv"] = results_path;
  emit(j);
  if (!any_ok) throw SolverError("every benchmark cell failed");
  return kExitOk;
}

// ----------------------------------------------------------------- predict

struct PredictArgs {
  std::string model_path;
  std::string data_path;
  bool no_header = false;
  std::string out;
};

int cmd_predict(const PredictArgs& args) {
  const qhr::ModelArtifact model = qhr::read_model(args.model_path);
  const qhr::FeatureTable table =
      qhr::read_feature_csv(args.data_path, !args.no_header);

  if (table.A.cols() != model.dimension) {
    std::ostringstream os;
    os << "feature count mismatch: model expects " << model.dimension
       << " columns, data has " << table.A.cols();
    throw InputError(os.str());
  }
  if (!model.feature_names.empty() && !args.no_header) {
    for (std::size_t j = 0; j < model.feature_names.size(); ++j) {
      if (table.names[j] != model.feature_names[j])
        throw InputError("feature column mismatch at position " +
                         std::to_string(j + 1) + ": model expects '" +
                         model.feature_names[j] + "', data has '" +
                         table.names[j] + "'");
    }
  }

  const Eigen::VectorXd beta = qhr::model_coefficients(model);
  const Eigen::VectorXd predictions = table.A * beta;
  if (!args.out.empty()) qhr::write_predictions_csv(args.out, predictions);

  json j;
  j["rows"] = static_cast<int>(predictions.size());
  j["support_size"] = static_cast<int>(model.coefficients.size());
  if (!args.out.empty()) j["path"] = args.out;
  emit(j);
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sparse quantile and quantile-Huber regression toolkit"};
  app.require_subcommand(1);

  FitArgs fit_args;
  CLI::App* fit = app.add_subcommand("fit", "Fit one penalized model");
  fit->add_option("--data", fit_args.data_path, "Training CSV")->required();
  fit->add_option("--response-col", fit_args.response_col,
                  "Response column name or 1-based index (default: first)");
  fit->add_flag("--no-header", fit_args.no_header, "Data file has no header");
  fit->add_option("--method", fit_args.method,
                  "l1-qr | l1-qhr | l0-qr | l0-qhr | lasso (default l1-qr)");
  fit->add_option("--tau", fit_args.tau, "Quantile level (default 0.5)");
  fit->add_option("--kappa", fit_args.kappa,
                  "Huber radius for *-qhr methods (default 1)");
  double lambda_flag = -1.0;
  fit->add_option("--lambda", lambda_flag,
                  "l1 penalty weight (default 0.1 * lambda_max)");
  int sparsity_flag = -1;
  fit->add_option("--sparsity", sparsity_flag,
                  "Target support size for l0 methods");
  fit->add_option("--solver", fit_args.solver, "ip | admm | fista (default ip)");
  fit->add_option("--epsilon", fit_args.epsilon,
                  "Target accuracy for --solver fista (default 1e-5)");
  fit->add_option("--seed", fit_args.seed, "Recorded in the model artifact");
  fit->add_option("--out", fit_args.out, "Model artifact path");

  FitArgs omp_args;
  omp_args.kappa = 1.0;
  CLI::App* omp = app.add_subcommand("omp", "Greedy forward selection");
  omp->add_option("--data", omp_args.data_path, "Training CSV")->required();
  omp->add_option("--response-col", omp_args.response_col,
                  "Response column name or 1-based index (default: first)");
  omp->add_flag("--no-header", omp_args.no_header, "Data file has no header");
  omp->add_option("--tau", omp_args.tau, "Quantile level (default 0.5)");
  omp->add_option("--kappa", omp_args.kappa,
                  "Huber radius; 0 selects the plain check loss (default 1)");
  int omp_sparsity = -1;
  omp->add_option("--sparsity", omp_sparsity, "Columns to select")->required();
  omp->add_option("--seed", omp_args.seed, "Recorded in the model artifact");
  omp->add_option("--out", omp_args.out, "Model artifact path");

  SimArgs sim_args;
  CLI::App* sim = app.add_subcommand("simulate", "Write one synthetic dataset");
  sim->add_option("--n", sim_args.config.n, "Rows (default 300)");
  sim->add_option("--p", sim_args.config.p, "Columns (default 400)");
  sim->add_option("--seed", sim_args.config.seed, "RNG seed (default 0)");
  sim->add_option("--corr-base", sim_args.config.corr_base,
                  "AR(1) correlation base (default 0.5)");
  sim->add_option("--hetero-scale", sim_args.config.hetero_scale,
                  "Heteroskedastic noise scale (default 0.7)");
  sim->add_option("--noise-eps", sim_args.config.noise_sd_eps,
                  "Heteroskedastic noise sd (default 1)");
  sim->add_option("--noise-eta", sim_args.config.noise_sd_eta,
                  "Homoskedastic noise sd (default 1)");
  sim->add_option("--support", sim_args.config.true_support,
                  "0-based true support (default 5 11 14 19)");
  sim->add_option("--out", sim_args.out, "Dataset CSV path")->required();

  BenchArgs bench_args;
  CLI::App* bench = app.add_subcommand("bench", "Synthetic benchmark sweep");
  bench->add_option("--methods", bench_args.method_names,
                    "Methods to run (default: all five)");
  bench->add_option("--taus", bench_args.config.taus,
                    "Quantile levels (default 0.1 0.25 0.5 0.75 0.9)");
  bench->add_option("--kappas", bench_args.config.kappas,
                    "Huber radius grid (default 0.1 0.2 0.5 1 3)");
  bench->add_option("--runs", bench_args.config.runs, "Replications (default 100)");
  bench->add_option("--n", bench_args.config.base.n, "Rows (default 300)");
  bench->add_option("--p", bench_args.config.base.p, "Columns (default 400)");
  bench->add_option("--seed", bench_args.config.base.seed, "RNG seed (default 0)");
  bench->add_option("--holdout-factor", bench_args.config.holdout_factor,
                    "Holdout rows = factor * n (default 10)");
  bench->add_option("--lambda-grid", bench_args.config.lambda_grid,
                    "Points on the lambda path (default 20)");
  bench->add_option("--lambda-min-ratio", bench_args.config.lambda_min_ratio,
                    "Smallest lambda as a fraction of lambda_max (default 0.125)");
  bench->add_option("--t-max", bench_args.config.t_grid_max,
                    "Largest support size tried (default: 2x true support)");
  bench->add_option("--threads", bench_args.config.threads,
                    "Worker threads over runs (default 1; QHUBER_THREADS caps)");
  bench->add_option("--out-dir", bench_args.out_dir,
                    "Output directory (default .)");
  bench->add_flag("--timings", bench_args.timings,
                  "Record wall-clock fit times instead of zeros");

  PredictArgs predict_args;
  CLI::App* predict = app.add_subcommand("predict", "Apply a model artifact");
  predict->add_option("--model", predict_args.model_path, "Model JSON path")
      ->required();
  predict->add_option("--data", predict_args.data_path, "Feature CSV")
      ->required();
  predict->add_flag("--no-header", predict_args.no_header,
                    "Feature file has no header");
  predict->add_option("--out", predict_args.out, "Predictions CSV path");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitInput;
  }

  try {
    if (fit->parsed()) {
      if (lambda_flag >= 0.0) fit_args.lambda = lambda_flag;
      if (sparsity_flag >= 0) fit_args.sparsity = sparsity_flag;
      return cmd_fit(fit_args);
    }
    if (omp->parsed()) {
      omp_args.sparsity = omp_sparsity;
      return cmd_omp(omp_args);
    }
    if (sim->parsed()) return cmd_simulate(sim_args);
    if (bench->parsed()) return cmd_bench(bench_args);
    if (predict->parsed()) return cmd_predict(predict_args);
  } catch (const SolverError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitSolver;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInput;
  }
  return kExitInput;
}
