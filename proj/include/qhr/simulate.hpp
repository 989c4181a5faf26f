#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "qhr/ip_solver.hpp"
#include "qhr/types.hpp"

namespace qhr {

// Synthetic design: rows of Z are N(0, Sigma) with Sigma_jk =
// corr_base^|j-k| (sampled through the Cholesky factor of Sigma), the
// heteroskedasticity column is mapped through the standard normal CDF, and
//   b_i = sum_{j in true_support} A_ij
//         + hetero_scale * A_{i,hetero} * eps_i + eta_i
// with eps, eta independent standard normals scaled by noise_sd_eps/eta.
// All indices are 0-based (the default support {5,11,14,19} is columns
// 6, 12, 15, 20 in 1-based terms).
struct SimConfig {
  int n = 300;
  int p = 400;
  double corr_base = 0.5;
  std::vector<int> true_support = {5, 11, 14, 19};
  int hetero_index = 0;
  double hetero_scale = 0.7;
  double noise_sd_eps = 1.0;
  double noise_sd_eta = 1.0;
  std::uint64_t seed = 0;
};

struct SimData {
  Eigen::MatrixXd A;
  Eigen::VectorXd b;
};

SimData generate(const SimConfig& config);

struct Metrics {
  double precision = 0.0, recall = 0.0, f1 = 0.0;
  int tp = 0, fp = 0, fn = 0;
};

// Set-overlap scores of an estimated support against the truth; empty
// estimates or zero true positives give f1 = 0.
Metrics score_support(const std::vector<int>& estimated,
                      const std::vector<int>& truth);

// Standard normal quantile function (Wichura's AS241, double precision).
double normal_quantile(double u);

enum class Method { l1_qr, l1_qhr, l0_qr, l0_qhr, lasso };

const char* method_name(Method m);
std::optional<Method> parse_method(const std::string& name);
bool method_uses_kappa(Method m);
bool method_uses_lambda(Method m);

struct ExperimentConfig {
  SimConfig base;
  std::vector<Method> methods;
  std::vector<double> taus = {0.1, 0.25, 0.5, 0.75, 0.9};
  std::vector<double> kappas = {0.1, 0.2, 0.5, 1.0, 3.0};
  int runs = 100;
  double holdout_factor = 10.0;  // holdout rows = round(holdout_factor * n)
  int lambda_grid = 20;          // log-spaced points from lambda_max down
  // Grid floor as a fraction of lambda_max. Holdout selection on this design
  // drifts into dense supports when the grid reaches far below the scale of
  // the noise, so the floor stays close to lambda_max.
  double lambda_min_ratio = 0.125;
  int t_grid_max = -1;           // support sizes 1..t_grid_max; -1: 2*s
  int threads = 1;
  IpConfig ip{};
};

// One benchmark record: the holdout-selected fit of (method, tau) on one
// replication. Optional fields apply only to methods that use them.
struct ExperimentRow {
  Method method;
  double tau;
  int run;
  std::optional<double> kappa;
  std::optional<int> sparsity;
  std::optional<double> lambda;
  Metrics metrics;
  double holdout_loss = 0.0;
  double fit_seconds = 0.0;
};

// F1 of the best cell at a fixed kappa (selection over the remaining grid
// dimension), kept per run so the kappa profile stays visible after the
// full selection collapses it.
struct KappaProfileRow {
  Method method;
  double tau;
  int run;
  double kappa;
  Metrics metrics;
  double holdout_loss = 0.0;
};

struct MethodTauSummary {
  Method method;
  double tau;
  int runs = 0;
  double mean_f1 = 0.0, se_f1 = 0.0;
  double mean_precision = 0.0, mean_recall = 0.0;
};

struct ExperimentResult {
  ExperimentConfig config;
  std::vector<ExperimentRow> rows;            // run-major, then method, tau
  std::vector<KappaProfileRow> kappa_rows;
  std::vector<MethodTauSummary> summaries;
  int failed_cells = 0;  // grid cells whose fit failed (skipped, not fatal)
  // Residual QQ data of one selected fit (tau nearest 0.5, last run):
  // (normal quantile at (i+0.5)/n, i-th order statistic of the residuals).
  std::vector<std::pair<double, double>> qq;
  std::string qq_source;
};

// Full benchmark: per replication, generates train and holdout datasets from
// seeds derived as (seed, run, 0/1), fits every requested method over its
// hyperparameter grid, selects by holdout loss (mean check loss at the
// method's tau; mean squared error for lasso), and scores the selected
// support against the generating truth. Deterministic for a fixed config,
// including under threads > 1.
ExperimentResult run_experiment(const ExperimentConfig& config);

// Convenience overload matching the narrative parameter list.
ExperimentResult run_experiment(const SimConfig& config,
                                const std::vector<Method>& methods,
                                const std::vector<double>& taus,
                                const std::vector<double>& kappas, int runs,
                                double holdout_factor = 10.0);

// Serialization of benchmark outputs. Timing values are written as 0 unless
// include_timings is set, keeping default outputs byte-identical across
// repeated invocations with the same seed.
void write_results_csv(const std::string& path, const ExperimentResult& result,
                       bool include_timings = false);
void write_summary_json(const std::string& path,
                        const ExperimentResult& result);
void write_f1_by_tau_csv(const std::string& path,
                         const ExperimentResult& result);
void write_f1_by_kappa_csv(const std::string& path,
                           const ExperimentResult& result);
void write_qq_csv(const std::string& path, const ExperimentResult& result);

}  // namespace qhr
