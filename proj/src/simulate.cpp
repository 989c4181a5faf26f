#include "qhr/simulate.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <fstream>
#include <limits>
#include <mutex>
#include <set>
#include <sstream>
#include <stdexcept>
#include <thread>
#include <utility>

#include <Eigen/Cholesky>

#include "json.hpp"

#include "qhr/dataset_io.hpp"
#include "qhr/omp.hpp"
#include "qhr/plq.hpp"
#include "qhr/quantile_loss.hpp"
#include "qhr/rng.hpp"

namespace qhr {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void validate_sim(const SimConfig& config) {
  if (config.n < 1 || config.p < 1)
    throw std::invalid_argument("SimConfig: n and p must be >= 1");
  if (!(std::abs(config.corr_base) < 1.0))
    throw std::invalid_argument("SimConfig: corr_base must lie in (-1, 1)");
  if (config.hetero_index < 0 || config.hetero_index >= config.p)
    throw std::invalid_argument("SimConfig: hetero_index out of range");
  std::set<int> seen;
  for (int j : config.true_support) {
    if (j < 0 || j >= config.p)
      throw std::invalid_argument("SimConfig: true_support index out of range");
    if (!seen.insert(j).second)
      throw std::invalid_argument("SimConfig: true_support has duplicates");
  }
  if (config.noise_sd_eps < 0.0 || config.noise_sd_eta < 0.0)
    throw std::invalid_argument("SimConfig: noise scales must be >= 0");
}

double std_normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

}  // namespace

SimData generate(const SimConfig& config) {
  validate_sim(config);
  const int n = config.n, p = config.p;

  Eigen::MatrixXd sigma(p, p);
  for (int j = 0; j < p; ++j)
    for (int k = 0; k < p; ++k)
      sigma(j, k) = std::pow(config.corr_base, std::abs(j - k));
  const Eigen::LLT<Eigen::MatrixXd> llt(sigma);
  if (llt.info() != Eigen::Success)
    throw std::runtime_error("generate: correlation matrix is not positive definite");
  const Eigen::MatrixXd L = llt.matrixL();

  // Draw order is part of the reproducibility contract: the n x p standard
  // normal block row by row, then eps, then eta.
  Rng rng(config.seed);
  Eigen::MatrixXd G(n, p);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < p; ++j) G(i, j) = rng.gaussian();
  Eigen::VectorXd eps(n), eta(n);
  for (int i = 0; i < n; ++i) eps[i] = config.noise_sd_eps * rng.gaussian();
  for (int i = 0; i < n; ++i) eta[i] = config.noise_sd_eta * rng.gaussian();

  SimData out;
  out.A = G * L.transpose();  // rows ~ N(0, sigma)
  out.A.col(config.hetero_index) =
      out.A.col(config.hetero_index).unaryExpr(&std_normal_cdf);

  out.b = Eigen::VectorXd::Zero(n);
  for (int j : config.true_support) out.b += out.A.col(j);
  out.b += config.hetero_scale *
           out.A.col(config.hetero_index).cwiseProduct(eps);
  out.b += eta;
  return out;
}

Metrics score_support(const std::vector<int>& estimated,
                      const std::vector<int>& truth) {
  const std::set<int> est(estimated.begin(), estimated.end());
  const std::set<int> tru(truth.begin(), truth.end());
  Metrics m;
  for (int j : est) {
    if (tru.count(j)) ++m.tp;
    else ++m.fp;
  }
  m.fn = static_cast<int>(tru.size()) - m.tp;
  m.precision = (m.tp + m.fp) > 0 ? double(m.tp) / double(m.tp + m.fp) : 0.0;
  m.recall = (m.tp + m.fn) > 0 ? double(m.tp) / double(m.tp + m.fn) : 0.0;
  m.f1 = (m.precision + m.recall) > 0.0
             ? 2.0 * m.precision * m.recall / (m.precision + m.recall)
             : 0.0;
  return m;
}

double normal_quantile(double u) {
  if (!(u > 0.0 && u < 1.0))
    throw std::domain_error("normal_quantile: argument must lie in (0, 1)");
  const double q = u - 0.5;
  double r;
  if (std::abs(q) <= 0.425) {
    r = 0.180625 - q * q;
    return q *
           (((((((2.5090809287301226727e+3 * r + 3.3430575583588128105e+4) * r +
                 6.7265770927008700853e+4) * r + 4.5921953931549871457e+4) * r +
               1.3731693765509461125e+4) * r + 1.9715909503065514427e+3) * r +
             1.3314166789178437745e+2) * r + 3.3871328727963666080e+0) /
           (((((((5.2264952788528545610e+3 * r + 2.8729085735721942674e+4) * r +
                 3.9307895800092710610e+4) * r + 2.1213794301586595867e+4) * r +
               5.3941960214247511077e+3) * r + 6.8718700749205790830e+2) * r +
             4.2313330701600911252e+1) * r + 1.0);
  }
  r = q < 0.0 ? u : 1.0 - u;
  r = std::sqrt(-std::log(r));
  double value;
  if (r <= 5.0) {
    r -= 1.6;
    value = (((((((7.74545014278341407640e-4 * r + 2.27238449892691845833e-2) * r +
                  2.41780725177450611770e-1) * r + 1.27045825245236838258e+0) * r +
                3.64784832476320460504e+0) * r + 5.76949722146069140550e+0) * r +
              4.63033784615654529590e+0) * r + 1.42343711074968357734e+0) /
            (((((((1.05075007164441684324e-9 * r + 5.47593808499534494600e-4) * r +
                  1.51986665636164571966e-2) * r + 1.48103976427480074590e-1) * r +
                6.89767334985100004550e-1) * r + 1.67638483018380384940e+0) * r +
              2.05319162663775882187e+0) * r + 1.0);
  } else {
    r -= 5.0;
    value = (((((((2.01033439929228813265e-7 * r + 2.71155556874348757815e-5) * r +
                  1.24266094738807843860e-3) * r + 2.65321895265761230930e-2) * r +
                2.96560571828504891230e-1) * r + 1.78482653991729133580e+0) * r +
              5.46378491116411436990e+0) * r + 6.65790464350110377720e+0) /
            (((((((2.04426310338993978564e-15 * r + 1.42151175831644588870e-7) * r +
                  1.84631831751005468180e-5) * r + 7.86869131145613259100e-4) * r +
                1.48753612908506148525e-2) * r + 1.36929880922735805310e-1) * r +
              5.99832206555887937690e-1) * r + 1.0);
  }
  return q < 0.0 ? -value : value;
}

const char* method_name(Method m) {
  switch (m) {
    case Method::l1_qr: return "l1-qr";
    case Method::l1_qhr: return "l1-qhr";
    case Method::l0_qr: return "l0-qr";
    case Method::l0_qhr: return "l0-qhr";
    case Method::lasso: return "lasso";
  }
  return "unknown";
}

std::optional<Method> parse_method(const std::string& name) {
  for (Method m : {Method::l1_qr, Method::l1_qhr, Method::l0_qr, Method::l0_qhr,
                   Method::lasso})
    if (name == method_name(m)) return m;
  return std::nullopt;
}

bool method_uses_kappa(Method m) {
  return m == Method::l1_qhr || m == Method::l0_qhr;
}

bool method_uses_lambda(Method m) {
  return m == Method::l1_qr || m == Method::l1_qhr || m == Method::lasso;
}

namespace {

double tie_band(double best) { return 1e-9 * std::max(1.0, std::abs(best)); }

// One hyperparameter grid point: the fitted coefficients, the holdout loss
// used for selection, and whichever of (kappa, T, lambda) apply.
struct Cell {
  Eigen::VectorXd beta;
  std::optional<double> kappa;
  std::optional<int> sparsity;
  std::optional<double> lambda;
  double holdout = kInf;
  double seconds = 0.0;
  bool ok = false;
};

// Earlier cells win ties: a later cell must beat the incumbent by more than
// the tie band. Grids are ordered simplest-first (descending lambda,
// ascending T, kappa in grid order), so ties resolve to the simpler model.
const Cell* pick_best(const std::vector<Cell>& cells, const Cell* best = nullptr) {
  for (const auto& c : cells) {
    if (!c.ok) continue;
    if (!best || c.holdout < best->holdout - tie_band(best->holdout)) best = &c;
  }
  return best;
}

std::vector<double> lambda_path(double lambda_max, int count, double ratio) {
  std::vector<double> out;
  if (!(lambda_max > 0.0) || !std::isfinite(lambda_max)) {
    out.push_back(std::max(lambda_max, 0.0));
    return out;
  }
  if (count <= 1) {
    out.push_back(lambda_max);
    return out;
  }
  for (int k = 0; k < count; ++k)
    out.push_back(lambda_max *
                  std::pow(ratio, double(k) / double(count - 1)));
  return out;
}

double mean_check(const SimData& hold, const Eigen::VectorXd& beta, double tau) {
  const Eigen::VectorXd r = hold.b - hold.A * beta;
  return eval_quantile_check(r, tau) / double(r.size());
}

double mean_sse(const SimData& hold, const Eigen::VectorXd& beta) {
  const Eigen::VectorXd r = hold.b - hold.A * beta;
  return r.squaredNorm() / double(r.size());
}

double elapsed_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
      .count();
}

// Descending-lambda sweep of the l1-penalized fit, warm starting each solve
// from the previous solution. `spec` empty selects the squared loss (lasso).
// Selection compares mean holdout check loss at yard_tau, or mean squared
// holdout error when sse_yardstick is set.
std::vector<Cell> l1_sweep(const Eigen::MatrixXd& A, const Eigen::VectorXd& b,
                           const std::optional<QuantileSpec>& spec,
                           double yard_tau, bool sse_yardstick,
                           const std::vector<double>& lambdas,
                           const SimData& hold, const IpConfig& ip,
                           int& failed_cells) {
  const PlqPenalty base = spec ? build_plq(*spec, A, b) : build_l2_plq(A, b);
  std::vector<Cell> cells;
  cells.reserve(lambdas.size());
  std::optional<Eigen::VectorXd> warm;
  for (double lam : lambdas) {
    Cell cell;
    cell.lambda = lam;
    if (spec && spec->kappa > 0.0) cell.kappa = spec->kappa;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      const FitResult fit = solve(augment_l1(base, lam), ip, warm);
      cell.seconds = elapsed_since(t0);
      if (fit.status != SolveStatus::numerical_failure) {
        cell.beta = fit.x;
        cell.holdout = sse_yardstick ? mean_sse(hold, fit.x)
                                     : mean_check(hold, fit.x, yard_tau);
        cell.ok = true;
        warm = fit.x;
      }
    } catch (const std::exception&) {
      cell.seconds = elapsed_since(t0);
    }
    if (!cell.ok) ++failed_cells;
    cells.push_back(std::move(cell));
  }
  return cells;
}

// One greedy forward-selection pass up to t_max columns; because selection is
// nested, the coefficient path yields the whole T grid in a single run.
std::vector<Cell> omp_sweep(const Eigen::MatrixXd& A, const Eigen::VectorXd& b,
                            const QuantileSpec& spec, double yard_tau,
                            int t_max, const SimData& hold, const IpConfig& ip,
                            int& failed_cells) {
  OmpConfig omp_config;
  omp_config.max_support = std::min<int>(t_max, static_cast<int>(A.cols()));
  omp_config.refit_config = ip;
  std::vector<Cell> cells;
  const auto t0 = std::chrono::steady_clock::now();
  OmpResult res;
  try {
    res = run_omp(A, b, spec, omp_config);
  } catch (const std::exception&) {
    ++failed_cells;
    return cells;
  }
  const double seconds = elapsed_since(t0);
  std::size_t usable = res.trace.coefficient_path.size();
  if (res.fit.status == SolveStatus::numerical_failure && usable > 0) {
    --usable;  // the last refit did not converge; drop that prefix
    ++failed_cells;
  }
  for (std::size_t k = 0; k < usable; ++k) {
    Cell cell;
    cell.sparsity = static_cast<int>(k + 1);
    if (spec.kappa > 0.0) cell.kappa = spec.kappa;
    cell.beta = res.trace.coefficient_path[k];
    cell.holdout = mean_check(hold, cell.beta, yard_tau);
    cell.seconds = seconds;
    cell.ok = true;
    cells.push_back(std::move(cell));
  }
  return cells;
}

ExperimentRow make_row(Method m, double tau, int run, const Cell* best,
                       const std::vector<int>& truth) {
  ExperimentRow row;
  row.method = m;
  row.tau = tau;
  row.run = run;
  if (best) {
    row.kappa = best->kappa;
    row.sparsity = best->sparsity;
    row.lambda = best->lambda;
    row.metrics = score_support(support_of(best->beta), truth);
    row.holdout_loss = best->holdout;
    row.fit_seconds = best->seconds;
  } else {
    // every grid cell failed: empty support, infinite holdout loss
    row.holdout_loss = kInf;
  }
  return row;
}

struct RunOutput {
  std::vector<ExperimentRow> rows;
  std::vector<KappaProfileRow> kappa_rows;
  int failed_cells = 0;
};

struct ResolvedGrid {
  int t_max = 0;
  int holdout_rows = 0;
};

RunOutput compute_run(const ExperimentConfig& cfg, const ResolvedGrid& grid,
                      int run) {
  SimConfig train_cfg = cfg.base;
  train_cfg.seed = Rng::derive(cfg.base.seed, static_cast<std::uint64_t>(run), 0);
  SimConfig hold_cfg = cfg.base;
  hold_cfg.n = grid.holdout_rows;
  hold_cfg.seed = Rng::derive(cfg.base.seed, static_cast<std::uint64_t>(run), 1);
  const SimData train = generate(train_cfg);
  const SimData hold = generate(hold_cfg);
  std::vector<int> truth = cfg.base.true_support;
  std::sort(truth.begin(), truth.end());

  RunOutput out;
  std::vector<Cell> lasso_cells;  // tau-independent, computed once per run
  bool lasso_done = false;

  for (Method m : cfg.methods) {
    for (double tau : cfg.taus) {
      switch (m) {
        case Method::lasso: {
          if (!lasso_done) {
            const double lmax = l1_lambda_max_l2(train.A, train.b);
            lasso_cells = l1_sweep(
                train.A, train.b, std::nullopt, 0.0, true,
                lambda_path(lmax, cfg.lambda_grid, cfg.lambda_min_ratio), hold,
                cfg.ip, out.failed_cells);
            lasso_done = true;
          }
          out.rows.push_back(make_row(m, tau, run, pick_best(lasso_cells), truth));
          break;
        }
        case Method::l1_qr: {
          const QuantileSpec spec{tau, 0.0};
          const double lmax = l1_lambda_max(train.A, train.b, spec);
          const auto cells = l1_sweep(
              train.A, train.b, spec, tau, false,
              lambda_path(lmax, cfg.lambda_grid, cfg.lambda_min_ratio), hold,
              cfg.ip, out.failed_cells);
          out.rows.push_back(make_row(m, tau, run, pick_best(cells), truth));
          break;
        }
        case Method::l1_qhr:
        case Method::l0_qhr: {
          const Cell* best = nullptr;
          std::vector<std::vector<Cell>> groups;
          groups.reserve(cfg.kappas.size());
          for (double kappa : cfg.kappas) {
            const QuantileSpec spec{tau, kappa};
            if (m == Method::l1_qhr) {
              const double lmax = l1_lambda_max(train.A, train.b, spec);
              groups.push_back(l1_sweep(
                  train.A, train.b, spec, tau, false,
                  lambda_path(lmax, cfg.lambda_grid, cfg.lambda_min_ratio),
                  hold, cfg.ip, out.failed_cells));
            } else {
              groups.push_back(omp_sweep(train.A, train.b, spec, tau,
                                         grid.t_max, hold, cfg.ip,
                                         out.failed_cells));
            }
            const Cell* group_best = pick_best(groups.back());
            if (group_best) {
              KappaProfileRow prow;
              prow.method = m;
              prow.tau = tau;
              prow.run = run;
              prow.kappa = kappa;
              prow.metrics = score_support(support_of(group_best->beta), truth);
              prow.holdout_loss = group_best->holdout;
              out.kappa_rows.push_back(std::move(prow));
              if (!best ||
                  group_best->holdout < best->holdout - tie_band(best->holdout))
                best = group_best;
            }
          }
          out.rows.push_back(make_row(m, tau, run, best, truth));
          break;
        }
        case Method::l0_qr: {
          const QuantileSpec spec{tau, 0.0};
          const auto cells = omp_sweep(train.A, train.b, spec, tau, grid.t_max,
                                       hold, cfg.ip, out.failed_cells);
          out.rows.push_back(make_row(m, tau, run, pick_best(cells), truth));
          break;
        }
      }
    }
  }
  return out;
}

void validate_experiment(const ExperimentConfig& cfg) {
  validate_sim(cfg.base);
  if (cfg.runs < 1) throw std::invalid_argument("ExperimentConfig: runs >= 1");
  if (cfg.methods.empty())
    throw std::invalid_argument("ExperimentConfig: at least one method");
  if (cfg.taus.empty())
    throw std::invalid_argument("ExperimentConfig: at least one tau");
  for (double tau : cfg.taus)
    if (!(tau > 0.0 && tau < 1.0))
      throw std::invalid_argument("ExperimentConfig: tau must lie in (0, 1)");
  const bool needs_kappa =
      std::any_of(cfg.methods.begin(), cfg.methods.end(), method_uses_kappa);
  if (needs_kappa) {
    if (cfg.kappas.empty())
      throw std::invalid_argument(
          "ExperimentConfig: kappa grid required for quantile-Huber methods");
    for (double k : cfg.kappas)
      if (!(k > 0.0) || !std::isfinite(k))
        throw std::invalid_argument("ExperimentConfig: kappa must be > 0");
  }
  if (cfg.lambda_grid < 1)
    throw std::invalid_argument("ExperimentConfig: lambda_grid >= 1");
  if (!(cfg.lambda_min_ratio > 0.0 && cfg.lambda_min_ratio <= 1.0))
    throw std::invalid_argument(
        "ExperimentConfig: lambda_min_ratio must lie in (0, 1]");
  if (!(cfg.holdout_factor > 0.0))
    throw std::invalid_argument("ExperimentConfig: holdout_factor must be > 0");
  if (cfg.t_grid_max == 0 || cfg.t_grid_max < -1)
    throw std::invalid_argument("ExperimentConfig: t_grid_max must be -1 or >= 1");
}

void attach_summaries(ExperimentResult& result) {
  const std::size_t n_methods = result.config.methods.size();
  const std::size_t n_taus = result.config.taus.size();
  const std::size_t runs = static_cast<std::size_t>(result.config.runs);
  for (std::size_t mi = 0; mi < n_methods; ++mi) {
    for (std::size_t ti = 0; ti < n_taus; ++ti) {
      MethodTauSummary s;
      s.method = result.config.methods[mi];
      s.tau = result.config.taus[ti];
      s.runs = static_cast<int>(runs);
      double sum = 0.0, sum_prec = 0.0, sum_rec = 0.0;
      std::vector<double> f1s;
      f1s.reserve(runs);
      for (std::size_t r = 0; r < runs; ++r) {
        const ExperimentRow& row =
            result.rows[r * n_methods * n_taus + mi * n_taus + ti];
        f1s.push_back(row.metrics.f1);
        sum += row.metrics.f1;
        sum_prec += row.metrics.precision;
        sum_rec += row.metrics.recall;
      }
      s.mean_f1 = sum / double(runs);
      s.mean_precision = sum_prec / double(runs);
      s.mean_recall = sum_rec / double(runs);
      if (runs > 1) {
        double ss = 0.0;
        for (double f : f1s) ss += (f - s.mean_f1) * (f - s.mean_f1);
        s.se_f1 = std::sqrt(ss / double(runs - 1)) / std::sqrt(double(runs));
      }
      result.summaries.push_back(s);
    }
  }
}

// Deterministic refit of one already-selected row to extract its training
// residuals for the QQ data: the most structured method present, at the tau
// closest to 0.5, on the last run.
void attach_qq(ExperimentResult& result, const ResolvedGrid&) {
  const auto& cfg = result.config;
  static const Method preference[] = {Method::l0_qhr, Method::l0_qr,
                                      Method::l1_qhr, Method::l1_qr,
                                      Method::lasso};
  std::size_t mi = cfg.methods.size();
  for (Method want : preference) {
    for (std::size_t i = 0; i < cfg.methods.size(); ++i) {
      if (cfg.methods[i] == want) {
        mi = i;
        break;
      }
    }
    if (mi < cfg.methods.size()) break;
  }
  if (mi >= cfg.methods.size()) return;
  std::size_t ti = 0;
  for (std::size_t i = 1; i < cfg.taus.size(); ++i)
    if (std::abs(cfg.taus[i] - 0.5) < std::abs(cfg.taus[ti] - 0.5)) ti = i;

  const std::size_t run = static_cast<std::size_t>(cfg.runs) - 1;
  const ExperimentRow& row =
      result.rows[run * cfg.methods.size() * cfg.taus.size() +
                  mi * cfg.taus.size() + ti];
  const Method m = cfg.methods[mi];
  const bool l0 = (m == Method::l0_qr || m == Method::l0_qhr);
  if ((l0 && !row.sparsity) || (!l0 && !row.lambda)) return;  // row failed

  SimConfig train_cfg = cfg.base;
  train_cfg.seed = Rng::derive(cfg.base.seed, run, 0);
  const SimData train = generate(train_cfg);

  Eigen::VectorXd beta;
  try {
    if (l0) {
      const QuantileSpec spec{row.tau, row.kappa.value_or(0.0)};
      OmpConfig omp_config;
      omp_config.max_support = *row.sparsity;
      omp_config.refit_config = cfg.ip;
      beta = run_omp(train.A, train.b, spec, omp_config).trace.coefficients;
    } else if (m == Method::lasso) {
      beta = solve(augment_l1(build_l2_plq(train.A, train.b), *row.lambda),
                   cfg.ip)
                 .x;
    } else {
      const QuantileSpec spec{row.tau, row.kappa.value_or(0.0)};
      beta = solve(augment_l1(build_plq(spec, train.A, train.b), *row.lambda),
                   cfg.ip)
                 .x;
    }
  } catch (const std::exception&) {
    return;
  }

  Eigen::VectorXd r = train.b - train.A * beta;
  std::sort(r.begin(), r.end());
  const int n = static_cast<int>(r.size());
  result.qq.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i)
    result.qq.emplace_back(normal_quantile((i + 0.5) / double(n)), r[i]);

  std::ostringstream source;
  source << method_name(m) << " tau=" << row.tau << " run=" << row.run;
  if (row.sparsity) source << " T=" << *row.sparsity;
  if (row.kappa) source << " kappa=" << *row.kappa;
  if (row.lambda) source << " lambda=" << *row.lambda;
  result.qq_source = source.str();
}

}  // namespace

ExperimentResult run_experiment(const ExperimentConfig& config) {
  validate_experiment(config);

  ResolvedGrid grid;
  const int s = static_cast<int>(config.base.true_support.size());
  grid.t_max = config.t_grid_max > 0 ? config.t_grid_max : std::max(1, 2 * s);
  grid.t_max = std::min(grid.t_max, config.base.p);
  grid.holdout_rows = std::max(
      1, static_cast<int>(std::llround(config.holdout_factor * config.base.n)));

  const int runs = config.runs;
  std::vector<RunOutput> outputs(static_cast<std::size_t>(runs));
  const int threads = std::min(std::max(1, config.threads), runs);
  if (threads == 1) {
    for (int r = 0; r < runs; ++r)
      outputs[static_cast<std::size_t>(r)] = compute_run(config, grid, r);
  } else {
    // Runs are independent and self-seeded, so assembly below is byte
    // identical whatever the thread count.
    std::atomic<int> next{0};
    std::mutex error_mutex;
    std::exception_ptr first_error;
    auto worker = [&]() {
      while (true) {
        const int r = next.fetch_add(1);
        if (r >= runs) return;
        try {
          outputs[static_cast<std::size_t>(r)] = compute_run(config, grid, r);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (!first_error) first_error = std::current_exception();
          return;
        }
      }
    };
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(threads));
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
    if (first_error) std::rethrow_exception(first_error);
  }

  ExperimentResult result;
  result.config = config;
  result.config.t_grid_max = grid.t_max;  // record the resolved grid
  for (auto& out : outputs) {
    result.failed_cells += out.failed_cells;
    for (auto& row : out.rows) result.rows.push_back(std::move(row));
    for (auto& row : out.kappa_rows)
      result.kappa_rows.push_back(std::move(row));
  }
  attach_summaries(result);
  attach_qq(result, grid);
  return result;
}

ExperimentResult run_experiment(const SimConfig& config,
                                const std::vector<Method>& methods,
                                const std::vector<double>& taus,
                                const std::vector<double>& kappas, int runs,
                                double holdout_factor) {
  ExperimentConfig cfg;
  cfg.base = config;
  cfg.methods = methods;
  cfg.taus = taus;
  cfg.kappas = kappas;
  cfg.runs = runs;
  cfg.holdout_factor = holdout_factor;
  return run_experiment(cfg);
}

namespace {

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error(path + ": cannot open for writing");
  return out;
}

std::string kappa_or_t_cell(const ExperimentRow& row) {
  if (row.sparsity) return std::to_string(*row.sparsity);
  if (row.method == Method::l1_qhr && row.kappa) return format_g17(*row.kappa);
  return "";
}

}  // namespace

void write_results_csv(const std::string& path, const ExperimentResult& result,
                       bool include_timings) {
  auto out = open_out(path);
  out << "method,tau,kappa_or_T,lambda,run,precision,recall,f1,fit_seconds\n";
  for (const auto& row : result.rows) {
    out << method_name(row.method) << ',' << format_g17(row.tau) << ','
        << kappa_or_t_cell(row) << ','
        << (row.lambda ? format_g17(*row.lambda) : std::string()) << ','
        << row.run << ',' << format_g17(row.metrics.precision) << ','
        << format_g17(row.metrics.recall) << ',' << format_g17(row.metrics.f1)
        << ',' << (include_timings ? format_g17(row.fit_seconds) : std::string("0"))
        << '\n';
  }
  if (!out) throw std::runtime_error(path + ": write failed");
}

void write_summary_json(const std::string& path,
                        const ExperimentResult& result) {
  using nlohmann::json;
  const auto& cfg = result.config;

  json jconfig;
  jconfig["n"] = cfg.base.n;
  jconfig["p"] = cfg.base.p;
  jconfig["corr_base"] = cfg.base.corr_base;
  jconfig["true_support"] = cfg.base.true_support;
  jconfig["hetero_index"] = cfg.base.hetero_index;
  jconfig["hetero_scale"] = cfg.base.hetero_scale;
  jconfig["noise_sd_eps"] = cfg.base.noise_sd_eps;
  jconfig["noise_sd_eta"] = cfg.base.noise_sd_eta;
  jconfig["seed"] = cfg.base.seed;
  jconfig["runs"] = cfg.runs;
  jconfig["holdout_factor"] = cfg.holdout_factor;
  jconfig["lambda_grid_points"] = cfg.lambda_grid;
  jconfig["lambda_min_ratio"] = cfg.lambda_min_ratio;
  jconfig["t_grid_max"] = cfg.t_grid_max;
  jconfig["threads"] = cfg.threads;
  jconfig["taus"] = cfg.taus;
  jconfig["kappas"] = cfg.kappas;
  json jmethods = json::array();
  for (Method m : cfg.methods) jmethods.push_back(method_name(m));
  jconfig["methods"] = jmethods;

  json jsummaries = json::array();
  for (const auto& s : result.summaries) {
    json e;
    e["method"] = method_name(s.method);
    e["tau"] = s.tau;
    e["runs"] = s.runs;
    e["mean_f1"] = s.mean_f1;
    e["se_f1"] = s.se_f1;
    e["mean_precision"] = s.mean_precision;
    e["mean_recall"] = s.mean_recall;
    jsummaries.push_back(e);
  }

  json jselected = json::array();
  for (const auto& row : result.rows) {
    json e;
    e["method"] = method_name(row.method);
    e["tau"] = row.tau;
    e["run"] = row.run;
    if (row.kappa) e["kappa"] = *row.kappa;
    if (row.sparsity) e["T"] = *row.sparsity;
    if (row.lambda) e["lambda"] = *row.lambda;
    e["precision"] = row.metrics.precision;
    e["recall"] = row.metrics.recall;
    e["f1"] = row.metrics.f1;
    e["holdout_loss"] = row.holdout_loss;  // non-finite serializes as null
    jselected.push_back(e);
  }

  json j;
  j["config"] = jconfig;
  j["failed_cells"] = result.failed_cells;
  j["qq_source"] = result.qq_source;
  j["summaries"] = jsummaries;
  j["selected"] = jselected;

  auto out = open_out(path);
  out << j.dump(2) << '\n';
  if (!out) throw std::runtime_error(path + ": write failed");
}

void write_f1_by_tau_csv(const std::string& path,
                         const ExperimentResult& result) {
  auto out = open_out(path);
  out << "method,tau,mean_f1,se_f1,mean_precision,mean_recall,runs\n";
  for (const auto& s : result.summaries) {
    out << method_name(s.method) << ',' << format_g17(s.tau) << ','
        << format_g17(s.mean_f1) << ',' << format_g17(s.se_f1) << ','
        << format_g17(s.mean_precision) << ',' << format_g17(s.mean_recall)
        << ',' << s.runs << '\n';
  }
  if (!out) throw std::runtime_error(path + ": write failed");
}

void write_f1_by_kappa_csv(const std::string& path,
                           const ExperimentResult& result) {
  auto out = open_out(path);
  out << "method,tau,kappa,mean_f1,runs\n";
  for (Method m : result.config.methods) {
    if (!method_uses_kappa(m)) continue;
    for (double tau : result.config.taus) {
      for (double kappa : result.config.kappas) {
        double sum = 0.0;
        int count = 0;
        for (const auto& row : result.kappa_rows) {
          if (row.method == m && row.tau == tau && row.kappa == kappa) {
            sum += row.metrics.f1;
            ++count;
          }
        }
        if (count == 0) continue;
        out << method_name(m) << ',' << format_g17(tau) << ','
            << format_g17(kappa) << ',' << format_g17(sum / double(count))
            << ',' << count << '\n';
      }
    }
  }
  if (!out) throw std::runtime_error(path + ": write failed");
}

void write_qq_csv(const std::string& path, const ExperimentResult& result) {
  auto out = open_out(path);
  out << "theoretical,empirical\n";
  for (const auto& [theoretical, empirical] : result.qq)
    out << format_g17(theoretical) << ',' << format_g17(empirical) << '\n';
  if (!out) throw std::runtime_error(path + ": write failed");
}

}  // namespace qhr
