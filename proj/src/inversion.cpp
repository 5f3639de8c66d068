#include "eit/inversion.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

namespace eit {

namespace {

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

std::string format_double(double v) {
  std::ostringstream out;
  out << std::setprecision(std::numeric_limits<double>::max_digits10) << v;
  return out.str();
}

double parse_double(const std::string& key, const std::string& text) {
  try {
    std::size_t used = 0;
    const double v = std::stod(text, &used);
    if (used != text.size()) throw std::invalid_argument(text);
    return v;
  } catch (const std::exception&) {
    throw std::invalid_argument("config: " + key + " expects a number, got '" + text + "'");
  }
}

int parse_int(const std::string& key, const std::string& text) {
  int v = 0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size()) {
    throw std::invalid_argument("config: " + key + " expects an integer, got '" + text + "'");
  }
  return v;
}

bool parse_bool(const std::string& key, const std::string& text) {
  if (text == "true" || text == "1") return true;
  if (text == "false" || text == "0") return false;
  throw std::invalid_argument("config: " + key + " expects true/false, got '" + text + "'");
}

}  // namespace

void InversionConfig::validate() const {
  if (!(alpha0 > 0.0)) throw std::invalid_argument("config: alpha0 must be positive");
  if (!(q_alpha > 0.0 && q_alpha < 1.0)) throw std::invalid_argument("config: q_alpha must lie in (0, 1)");
  if (!(beta >= 0.0 && beta <= 1.0)) throw std::invalid_argument("config: beta must lie in [0, 1]");
  if (!(mu > 0.0)) throw std::invalid_argument("config: mu must be positive");
  if (!(tau > 0.0)) throw std::invalid_argument("config: tau must be positive");
  if (inner_max < 1 || outer_max < 0) throw std::invalid_argument("config: bad iteration caps");
  if (!(cg_tol > 0.0) || cg_max < 1) throw std::invalid_argument("config: bad CG controls");
  if (!(noise_norm >= 0.0) || !(residual_floor >= 0.0)) {
    throw std::invalid_argument("config: noise_norm and residual_floor must be nonnegative");
  }
  if (!(lambda > 0.0 && lambda < 1.0)) throw std::invalid_argument("config: lambda must lie in (0, 1)");
}

double InversionConfig::alpha_at(int k) const { return alpha0 * std::pow(q_alpha, k); }

std::map<std::string, std::string> InversionConfig::to_map() const {
  return {
      {"alpha0", format_double(alpha0)},
      {"q_alpha", format_double(q_alpha)},
      {"beta", format_double(beta)},
      {"mu", format_double(mu)},
      {"tau", format_double(tau)},
      {"inner_max", std::to_string(inner_max)},
      {"outer_max", std::to_string(outer_max)},
      {"cg_tol", format_double(cg_tol)},
      {"cg_max", std::to_string(cg_max)},
      {"noise_norm", format_double(noise_norm)},
      {"residual_floor", format_double(residual_floor)},
      {"lambda", format_double(lambda)},
      {"reset_bregman", reset_bregman ? "true" : "false"},
      {"strict_cg", strict_cg ? "true" : "false"},
  };
}

InversionConfig InversionConfig::from_map(const std::map<std::string, std::string>& values,
                                          const std::vector<std::string>& ignored) {
  InversionConfig c;
  for (const auto& [key, value] : values) {
    if (key == "alpha0") c.alpha0 = parse_double(key, value);
    else if (key == "q_alpha") c.q_alpha = parse_double(key, value);
    else if (key == "beta") c.beta = parse_double(key, value);
    else if (key == "mu") c.mu = parse_double(key, value);
    else if (key == "tau") c.tau = parse_double(key, value);
    else if (key == "inner_max") c.inner_max = parse_int(key, value);
    else if (key == "outer_max") c.outer_max = parse_int(key, value);
    else if (key == "cg_tol") c.cg_tol = parse_double(key, value);
    else if (key == "cg_max") c.cg_max = parse_int(key, value);
    else if (key == "noise_norm") c.noise_norm = parse_double(key, value);
    else if (key == "residual_floor") c.residual_floor = parse_double(key, value);
    else if (key == "lambda") c.lambda = parse_double(key, value);
    else if (key == "reset_bregman") c.reset_bregman = parse_bool(key, value);
    else if (key == "strict_cg") c.strict_cg = parse_bool(key, value);
    else if (std::find(ignored.begin(), ignored.end(), key) == ignored.end()) {
      throw std::invalid_argument("config: unknown key '" + key + "'");
    }
  }
  c.validate();
  return c;
}

std::map<std::string, std::string> parse_key_values(const std::string& text) {
  std::map<std::string, std::string> out;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw std::invalid_argument("config line " + std::to_string(line_no) + ": expected key = value");
    }
    out[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  return out;
}

std::map<std::string, std::string> read_key_values(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_key_values(buffer.str());
}

void write_key_values(const std::map<std::string, std::string>& values,
                      const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  for (const auto& [key, value] : values) out << key << " = " << value << '\n';
}

double shrinkage(double x, double t) {
  if (!(t >= 0.0)) throw std::invalid_argument("shrinkage: negative threshold");
  const double magnitude = std::abs(x) - t;
  if (magnitude <= 0.0) return 0.0;
  return std::copysign(magnitude, x);
}

Eigen::VectorXd shrinkage(const Eigen::VectorXd& x, double t) {
  if (!(t >= 0.0)) throw std::invalid_argument("shrinkage: negative threshold");
  return x.unaryExpr([t](double v) { return shrinkage(v, t); });
}

bool morozov_stop(double residual_norm, double noise_norm, double floor) {
  const double threshold = noise_norm > 0.0 ? noise_norm : floor;
  return residual_norm < threshold;
}

CgResult conjugate_gradient(const LinearOperator& apply, const Eigen::VectorXd& rhs, double tol,
                            int max_iter) {
  CgResult result;
  result.x = Eigen::VectorXd::Zero(rhs.size());
  const double rhs_norm = rhs.norm();
  if (rhs_norm == 0.0) {
    result.converged = true;
    return result;
  }
  Eigen::VectorXd r = rhs;
  Eigen::VectorXd p = r;
  double rr = r.squaredNorm();
  for (int it = 1; it <= max_iter; ++it) {
    const Eigen::VectorXd Ap = apply(p);
    const double pAp = p.dot(Ap);
    if (!(pAp > 0.0)) {
      // operator not positive definite along p; report the breakdown
      result.iterations = it;
      result.relative_residual = std::sqrt(rr) / rhs_norm;
      return result;
    }
    const double step = rr / pAp;
    result.x += step * p;
    r -= step * Ap;
    const double rr_next = r.squaredNorm();
    result.iterations = it;
    result.relative_residual = std::sqrt(rr_next) / rhs_norm;
    if (result.relative_residual <= tol) {
      result.converged = true;
      return result;
    }
    p = r + (rr_next / rr) * p;
    rr = rr_next;
  }
  return result;
}

NormalOperator::NormalOperator(const Eigen::MatrixXd& J, const Eigen::SparseMatrix<double>& R,
                               double penalty_weight, double mu,
                               std::optional<Eigen::VectorXd> edge_weights)
    : J_(J), R_(R), penalty_weight_(penalty_weight), mu_(mu), edge_weights_(std::move(edge_weights)) {
  if (R_.cols() != J_.cols()) throw std::invalid_argument("NormalOperator: R and J disagree");
  if (edge_weights_ && edge_weights_->size() != R_.rows()) {
    throw std::invalid_argument("NormalOperator: one weight per R row is required");
  }
}

Eigen::VectorXd NormalOperator::penalty(const Eigen::VectorXd& v) const {
  Eigen::VectorXd Rv = R_ * v;
  if (edge_weights_) Rv = Rv.cwiseProduct(*edge_weights_);
  return R_.transpose() * Rv;
}

Eigen::VectorXd NormalOperator::apply(const Eigen::VectorXd& v) const {
  Eigen::VectorXd out = J_.transpose() * (J_ * v);
  if (penalty_weight_ != 0.0) out += penalty_weight_ * penalty(v);
  if (mu_ != 0.0) out += mu_ * v;
  return out;
}

Eigen::MatrixXd NormalOperator::dense() const {
  Eigen::MatrixXd A = J_.transpose() * J_;
  const Eigen::MatrixXd Rd = Eigen::MatrixXd(R_);
  if (penalty_weight_ != 0.0) {
    if (edge_weights_) {
      A += penalty_weight_ * Rd.transpose() * edge_weights_->asDiagonal() * Rd;
    } else {
      A += penalty_weight_ * Rd.transpose() * Rd;
    }
  }
  A.diagonal().array() += mu_;
  return A;
}

namespace {

GnStep solve_normal_equations(const Eigen::MatrixXd& J, const Eigen::VectorXd& residual,
                              const Eigen::VectorXd& sigma, const Eigen::VectorXd& coupling,
                              double alpha, const InversionConfig& config,
                              const Eigen::SparseMatrix<double>& R,
                              const ConductivityField& sigma_ref) {
  if (J.rows() != residual.size() || J.cols() != sigma.size() || sigma_ref.size() != sigma.size()) {
    throw std::invalid_argument("Gauss-Newton update: inconsistent dimensions");
  }
  const double weight = alpha * config.beta;
  const NormalOperator op(J, R, weight, config.mu);
  Eigen::VectorXd rhs = J.transpose() * residual;
  if (weight != 0.0) rhs -= weight * op.penalty(sigma - sigma_ref.values);
  rhs -= config.mu * coupling;
  GnStep step;
  step.penalty_weight = weight;
  step.cg = conjugate_gradient([&op](const Eigen::VectorXd& v) { return op.apply(v); }, rhs,
                               config.cg_tol, config.cg_max);
  step.delta = step.cg.x;
  return step;
}

}  // namespace

GnStep gn_update_transform(const Eigen::MatrixXd& J, const Eigen::VectorXd& residual,
                           const SplitBregmanState& state, const InversionConfig& config,
                           const Eigen::SparseMatrix<double>& R, const HaarTransform& phi,
                           const ConductivityField& sigma_ref) {
  if (state.d.size() != phi.length() || state.b_d.size() != phi.length()) {
    throw std::invalid_argument("gn_update_transform: d and b_d must match the transform length");
  }
  const Eigen::VectorXd& sigma = state.sigma.values;
  const Eigen::VectorXd coupling = sigma + phi.inverse(state.b_d - state.d);
  return solve_normal_equations(J, residual, sigma, coupling, state.alpha_k, config, R, sigma_ref);
}

GnStep gn_update_space(const Eigen::MatrixXd& J, const Eigen::VectorXd& residual,
                       const SplitBregmanState& state, const InversionConfig& config,
                       const Eigen::SparseMatrix<double>& R, const ConductivityField& sigma0,
                       const ConductivityField& sigma_ref) {
  const Eigen::VectorXd& sigma = state.sigma.values;
  if (state.d.size() != sigma.size() || state.b_d.size() != sigma.size() ||
      sigma0.size() != sigma.size()) {
    throw std::invalid_argument("gn_update_space: d, b_d and sigma0 must match the element count");
  }
  const Eigen::VectorXd coupling = sigma - sigma0.values + state.b_d - state.d;
  return solve_normal_equations(J, residual, sigma, coupling, state.alpha_k, config, R, sigma_ref);
}

double relative_error(const Eigen::VectorXd& sigma, const Eigen::VectorXd& truth) {
  if (sigma.size() != truth.size()) throw std::invalid_argument("relative_error: size mismatch");
  const double denom = truth.squaredNorm();
  if (denom == 0.0) throw std::invalid_argument("relative_error: zero truth vector");
  return (sigma - truth).squaredNorm() / denom;
}

namespace {

/// Constraint map of one split Bregman variant: z = constraint(sigma) is what d tracks.
struct SparsityDomain {
  Eigen::Index length;
  std::function<Eigen::VectorXd(const Eigen::VectorXd&)> constraint;
  std::function<GnStep(const Eigen::MatrixXd&, const Eigen::VectorXd&, const SplitBregmanState&)> update;
};

SplitBregmanState run_split_bregman(const ForwardModel& model, const Eigen::VectorXd& data,
                                    const InversionConfig& config, const SparsityDomain& domain,
                                    const ConductivityField& sigma_ref, const RunOptions& options) {
  config.validate();
  const TriMesh& mesh = model.mesh();
  if (sigma_ref.mesh_id != mesh.id()) {
    throw std::invalid_argument("split Bregman: reference conductivity is not on the inversion mesh");
  }
  if (data.size() != model.measurement_layout().size()) {
    throw std::invalid_argument("split Bregman: data length does not match the measurement layout");
  }
  if (options.truth && options.truth->size() != mesh.element_count()) {
    throw std::invalid_argument("split Bregman: truth is not on the inversion mesh");
  }

  SplitBregmanState state;
  state.sigma = sigma_ref;
  state.d = Eigen::VectorXd::Zero(domain.length);
  state.b_d = Eigen::VectorXd::Zero(domain.length);
  state.k = 0;
  state.alpha_k = config.alpha0;

  const double floor = config.residual_floor * data.norm();
  const double lo = config.lambda;
  const double hi = 1.0 / config.lambda;
  HistoryRecord pending;  // inner statistics of the step that produced the current iterate

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
    if (!std::isfinite(record.residual)) {
      throw InversionError("non-finite data residual", state.history);
    }
    if (morozov_stop(record.residual, config.noise_norm, floor)) {
      state.stop = StopReason::Discrepancy;
      break;
    }
    if (state.k >= config.outer_max) {
      state.stop = StopReason::OuterLimit;
      break;
    }

    const double eta = state.alpha_k * (1.0 - config.beta) / (2.0 * config.mu);
    if (config.reset_bregman) {
      state.d.setZero();
      state.b_d.setZero();
    }
    pending = HistoryRecord{};
    Eigen::VectorXd delta;
    int j = 0;
    do {
      GnStep step = domain.update(lin.jacobian, residual, state);
      pending.cg_iterations += step.cg.iterations;
      if (!step.cg.converged) {
        ++pending.cg_failures;
        if (config.strict_cg) {
          throw InversionError("CG stopped at relative residual " +
                                   std::to_string(step.cg.relative_residual) + " after " +
                                   std::to_string(step.cg.iterations) + " iterations",
                               state.history);
        }
      }
      delta = std::move(step.delta);
      const Eigen::VectorXd z = domain.constraint(state.sigma.values + delta);
      state.d = shrinkage(z + state.b_d, eta);
      state.b_d += z - state.d;
      ++j;
    } while (delta.norm() >= config.tau && j < config.inner_max);
    pending.inner_iters = j;

    Eigen::VectorXd next = state.sigma.values + delta;
    if (!next.allFinite()) {
      throw InversionError("non-finite conductivity update", state.history);
    }
    state.sigma.values = next.cwiseMax(lo).cwiseMin(hi);
    ++state.k;
    state.alpha_k = config.alpha_at(state.k);
  }
  return state;
}

}  // namespace

SplitBregmanState run_algorithm1(const ForwardModel& model, const Eigen::VectorXd& data,
                                 const InversionConfig& config, const HaarTransform& phi,
                                 const Eigen::SparseMatrix<double>& R,
                                 const ConductivityField& sigma_ref, const RunOptions& options) {
  if (phi.input_length() != model.mesh().element_count()) {
    throw std::invalid_argument("run_algorithm1: transform length does not match the mesh");
  }
  SparsityDomain domain{
      phi.length(),
      [&phi](const Eigen::VectorXd& s) { return phi.forward(s); },
      [&](const Eigen::MatrixXd& J, const Eigen::VectorXd& r, const SplitBregmanState& st) {
        return gn_update_transform(J, r, st, config, R, phi, sigma_ref);
      }};
  return run_split_bregman(model, data, config, domain, sigma_ref, options);
}

SplitBregmanState run_algorithm2(const ForwardModel& model, const Eigen::VectorXd& data,
                                 const InversionConfig& config, const Eigen::SparseMatrix<double>& R,
                                 const ConductivityField& sigma0, const ConductivityField& sigma_ref,
                                 const RunOptions& options) {
  if (sigma0.mesh_id != model.mesh().id()) {
    throw std::invalid_argument("run_algorithm2: background is not on the inversion mesh");
  }
  SparsityDomain domain{
      sigma0.size(),
      [&sigma0](const Eigen::VectorXd& s) { return Eigen::VectorXd(s - sigma0.values); },
      [&](const Eigen::MatrixXd& J, const Eigen::VectorXd& r, const SplitBregmanState& st) {
        return gn_update_space(J, r, st, config, R, sigma0, sigma_ref);
      }};
  return run_split_bregman(model, data, config, domain, sigma_ref, options);
}

void write_history_csv(const std::vector<HistoryRecord>& history, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << std::setprecision(std::numeric_limits<double>::max_digits10);
  out << "k,alpha_k,inner_iters,residual,RE\n";
  for (const auto& h : history) {
    out << h.k << ',' << h.alpha << ',' << h.inner_iters << ',' << h.residual << ',';
    if (std::isnan(h.relative_error)) {
      out << "nan";
    } else {
      out << h.relative_error;
    }
    out << '\n';
  }
}

}  // namespace eit
