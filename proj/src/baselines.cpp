#include "eit/baselines.hpp"

#include <cmath>
#include <iomanip>
#include <limits>
#include <sstream>

namespace eit {

SplitBregmanState run_l2(const ForwardModel& model, const Eigen::VectorXd& data,
                         InversionConfig config, const HaarTransform& phi,
                         const Eigen::SparseMatrix<double>& R, const ConductivityField& sigma_ref,
                         const RunOptions& options) {
  config.beta = 1.0;
  return run_algorithm1(model, data, config, phi, R, sigma_ref, options);
}

SplitBregmanState run_l1(const ForwardModel& model, const Eigen::VectorXd& data,
                         InversionConfig config, SparsityDomainKind domain, const HaarTransform& phi,
                         const ConductivityField& sigma0, const Eigen::SparseMatrix<double>& R,
                         const ConductivityField& sigma_ref, const RunOptions& options) {
  config.beta = 0.0;
  if (domain == SparsityDomainKind::Transform) {
    return run_algorithm1(model, data, config, phi, R, sigma_ref, options);
  }
  return run_algorithm2(model, data, config, R, sigma0, sigma_ref, options);
}

namespace {

std::string format_double(double v) {
  std::ostringstream out;
  out << std::setprecision(std::numeric_limits<double>::max_digits10) << v;
  return out.str();
}

}  // namespace

void TvConfig::validate() const {
  if (!(alpha0 > 0.0)) throw std::invalid_argument("tv config: alpha0 must be positive");
  if (!(q_alpha > 0.0 && q_alpha < 1.0)) throw std::invalid_argument("tv config: q_alpha must lie in (0, 1)");
  if (outer_max < 0 || cg_max < 1 || !(cg_tol > 0.0)) {
    throw std::invalid_argument("tv config: bad iteration controls");
  }
  if (!(noise_norm >= 0.0) || !(residual_floor >= 0.0)) {
    throw std::invalid_argument("tv config: noise_norm and residual_floor must be nonnegative");
  }
  if (!(lambda > 0.0 && lambda < 1.0)) throw std::invalid_argument("tv config: lambda must lie in (0, 1)");
}

std::map<std::string, std::string> TvConfig::to_map() const {
  return {
      {"alpha0", format_double(alpha0)},
      {"q_alpha", format_double(q_alpha)},
      {"gamma", format_double(gamma)},
      {"outer_max", std::to_string(outer_max)},
      {"cg_tol", format_double(cg_tol)},
      {"cg_max", std::to_string(cg_max)},
      {"noise_norm", format_double(noise_norm)},
      {"residual_floor", format_double(residual_floor)},
      {"lambda", format_double(lambda)},
      {"strict_cg", strict_cg ? "true" : "false"},
  };
}

TvConfig TvConfig::from_map(const std::map<std::string, std::string>& values,
                            const std::vector<std::string>& ignored) {
  // share the parser of the elastic-net config for the overlapping keys
  std::map<std::string, std::string> shared;
  TvConfig c;
  for (const auto& [key, value] : values) {
    if (key == "gamma") {
      c.gamma = std::stod(value);
    } else {
      shared[key] = value;
    }
  }
  std::vector<std::string> skip = ignored;
  skip.push_back("gamma");
  const InversionConfig base = InversionConfig::from_map(shared, skip);
  c.alpha0 = base.alpha0;
  c.q_alpha = base.q_alpha;
  c.outer_max = base.outer_max;
  c.cg_tol = base.cg_tol;
  c.cg_max = base.cg_max;
  c.noise_norm = base.noise_norm;
  c.residual_floor = base.residual_floor;
  c.lambda = base.lambda;
  c.strict_cg = base.strict_cg;
  c.validate();
  return c;
}

TvConfig TvConfig::mirroring(const InversionConfig& config) {
  TvConfig c;
  c.alpha0 = config.alpha0;
  c.q_alpha = config.q_alpha;
  c.outer_max = config.outer_max;
  c.cg_tol = config.cg_tol;
  c.cg_max = config.cg_max;
  c.noise_norm = config.noise_norm;
  c.residual_floor = config.residual_floor;
  c.lambda = config.lambda;
  c.strict_cg = config.strict_cg;
  return c;
}

double tv_penalty(const Eigen::SparseMatrix<double>& R, const Eigen::VectorXd& sigma, double gamma) {
  const Eigen::VectorXd jumps = R * sigma;
  double total = 0.0;
  for (Eigen::Index i = 0; i < jumps.size(); ++i) {
    // sqrt(x^2 + g^2) - g written to avoid cancellation for small jumps
    const double x2 = jumps[i] * jumps[i];
    total += x2 / (std::sqrt(x2 + gamma * gamma) + gamma);
  }
  return total;
}

Eigen::VectorXd tv_edge_weights(const Eigen::SparseMatrix<double>& R, const Eigen::VectorXd& sigma,
                                double gamma) {
  if (!(gamma > 0.0)) throw std::invalid_argument("tv: gamma must be positive");
  const Eigen::VectorXd jumps = R * sigma;
  return jumps.unaryExpr([gamma](double x) { return 1.0 / std::sqrt(x * x + gamma * gamma); });
}

Eigen::SparseMatrix<double> lagged_diffusivity_matrix(const Eigen::SparseMatrix<double>& R,
                                                      const Eigen::VectorXd& sigma, double gamma) {
  const Eigen::VectorXd w = tv_edge_weights(R, sigma, gamma);
  Eigen::SparseMatrix<double> L = R.transpose() * w.asDiagonal() * R;
  return L;
}

SplitBregmanState run_tv(const ForwardModel& model, const Eigen::VectorXd& data,
                         const TvConfig& config, const Eigen::SparseMatrix<double>& R,
                         const ConductivityField& sigma_ref, const RunOptions& options) {
  config.validate();
  const TriMesh& mesh = model.mesh();
  if (sigma_ref.mesh_id != mesh.id()) {
    throw std::invalid_argument("run_tv: reference conductivity is not on the inversion mesh");
  }
  if (data.size() != model.measurement_layout().size()) {
    throw std::invalid_argument("run_tv: data length does not match the measurement layout");
  }
  const double gamma =
      config.gamma > 0.0 ? config.gamma : 1e-3 * sigma_ref.values.cwiseAbs().maxCoeff();

  SplitBregmanState state;
  state.sigma = sigma_ref;
  state.alpha_k = config.alpha0;
  const double floor = config.residual_floor * data.norm();
  HistoryRecord pending;

  for (;;) {
    ForwardModel::Linearization lin;
    try {
      lin = model.linearize(state.sigma);
    } catch (const std::exception& e) {
      throw InversionError(std::string("forward solve failed: ") + e.what(), state.history);
    }
    const Eigen::VectorXd residual = data - lin.prediction;
    HistoryRecord record = pending;
    record.k = state.k;
    record.alpha = state.alpha_k;
    record.residual = residual.norm();
    if (options.truth) record.relative_error = relative_error(state.sigma.values, *options.truth);
    state.history.push_back(record);
    if (!std::isfinite(record.residual)) throw InversionError("non-finite data residual", state.history);
    if (morozov_stop(record.residual, config.noise_norm, floor)) {
      state.stop = StopReason::Discrepancy;
      break;
    }
    if (state.k >= config.outer_max) {
      state.stop = StopReason::OuterLimit;
      break;
    }

    const NormalOperator op(lin.jacobian, R, state.alpha_k, 0.0,
                            tv_edge_weights(R, state.sigma.values, gamma));
    const Eigen::VectorXd rhs = lin.jacobian.transpose() * residual -
                                state.alpha_k * op.penalty(state.sigma.values);
    const CgResult cg = conjugate_gradient([&op](const Eigen::VectorXd& v) { return op.apply(v); },
                                           rhs, config.cg_tol, config.cg_max);
    pending = HistoryRecord{};
    pending.inner_iters = 1;
    pending.cg_iterations = cg.iterations;
    if (!cg.converged) {
      ++pending.cg_failures;
      if (config.strict_cg) {
        throw InversionError("TV CG stopped at relative residual " +
                                 std::to_string(cg.relative_residual),
                             state.history);
      }
    }
    const Eigen::VectorXd next = state.sigma.values + cg.x;
    if (!next.allFinite()) throw InversionError("non-finite conductivity update", state.history);
    state.sigma.values = next.cwiseMax(config.lambda).cwiseMin(1.0 / config.lambda);
    ++state.k;
    state.alpha_k = config.alpha0 * std::pow(config.q_alpha, state.k);
  }
  return state;
}

}  // namespace eit
