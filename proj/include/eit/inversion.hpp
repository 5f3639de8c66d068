#pragma once

#include <filesystem>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "eit/forward.hpp"
#include "eit/haar.hpp"

namespace eit {

/// Algorithmic parameters shared by both split Bregman variants.
struct InversionConfig {
  double alpha0 = 1e-6;
  double q_alpha = 0.6;
  double beta = 0.1;
  double mu = 1e-10;
  double tau = 1e-2;
  int inner_max = 10;
  int outer_max = 30;
  double cg_tol = 1e-8;
  int cg_max = 500;
  /// ||U - U^delta||; zero means noise-free and switches Morozov to the residual floor.
  double noise_norm = 0.0;
  /// Noise-free stopping floor, relative to ||U^delta||.
  double residual_floor = 1e-8;
  double lambda = kAdmissibleLambda;
  /// Restart d and b_d from zero on every outer iteration.
  bool reset_bregman = true;
  /// Abort the run when CG misses cg_tol; otherwise the miss is logged in the history.
  bool strict_cg = false;

  void validate() const;
  double alpha_at(int k) const;

  std::map<std::string, std::string> to_map() const;
  /// Unknown keys are rejected unless listed in `ignored`.
  static InversionConfig from_map(const std::map<std::string, std::string>& values,
                                  const std::vector<std::string>& ignored = {});
};

/// `key = value` lines; `#` starts a comment.
std::map<std::string, std::string> read_key_values(const std::filesystem::path& path);
std::map<std::string, std::string> parse_key_values(const std::string& text);
void write_key_values(const std::map<std::string, std::string>& values,
                      const std::filesystem::path& path);

struct HistoryRecord {
  int k = 0;
  double alpha = 0.0;
  int inner_iters = 0;   // inner iterations spent producing this iterate
  double residual = 0.0; // ||F(sigma^k) - U^delta||
  double relative_error = std::numeric_limits<double>::quiet_NaN();
  int cg_iterations = 0;
  int cg_failures = 0;
};

enum class StopReason { Discrepancy, OuterLimit };

struct SplitBregmanState {
  ConductivityField sigma;
  Eigen::VectorXd d;
  Eigen::VectorXd b_d;
  double alpha_k = 0.0;
  int k = 0;
  std::vector<HistoryRecord> history;
  StopReason stop = StopReason::OuterLimit;
};

/// Raised for solver breakdown; carries the history up to the failure.
class InversionError : public std::runtime_error {
 public:
  InversionError(const std::string& what, std::vector<HistoryRecord> history)
      : std::runtime_error(what), history_(std::move(history)) {}
  const std::vector<HistoryRecord>& history() const { return history_; }

 private:
  std::vector<HistoryRecord> history_;
};

/// sign(x) * max(|x| - t, 0) elementwise. Throws for t < 0.
Eigen::VectorXd shrinkage(const Eigen::VectorXd& x, double t);
double shrinkage(double x, double t);

/// Strict discrepancy test; a zero noise norm falls back to `floor`.
bool morozov_stop(double residual_norm, double noise_norm, double floor = 0.0);

struct CgResult {
  Eigen::VectorXd x;
  int iterations = 0;
  double relative_residual = 0.0;
  bool converged = false;
};

using LinearOperator = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;

/// Conjugate gradients from a zero initial guess; stops at ||r|| <= tol * ||b||.
CgResult conjugate_gradient(const LinearOperator& apply, const Eigen::VectorXd& rhs, double tol,
                            int max_iter);

/// Matrix-free J^T J + c R^T diag(w) R + mu I.
class NormalOperator {
 public:
  NormalOperator(const Eigen::MatrixXd& J, const Eigen::SparseMatrix<double>& R,
                 double penalty_weight, double mu,
                 std::optional<Eigen::VectorXd> edge_weights = std::nullopt);

  Eigen::VectorXd apply(const Eigen::VectorXd& v) const;
  /// R^T diag(w) R v without the weight c.
  Eigen::VectorXd penalty(const Eigen::VectorXd& v) const;
  Eigen::MatrixXd dense() const;
  double penalty_weight() const { return penalty_weight_; }

 private:
  const Eigen::MatrixXd& J_;
  const Eigen::SparseMatrix<double>& R_;
  double penalty_weight_;
  double mu_;
  std::optional<Eigen::VectorXd> edge_weights_;
};

struct GnStep {
  Eigen::VectorXd delta;
  CgResult cg;
  double penalty_weight = 0.0;  // alpha_k * beta, the R^T R coefficient used
};

/// Transform-domain update:
/// [J^T J + a b R^T R + mu I] ds = J^T r - a b R^T R (s - s_ref) - mu (s + Phi^T (b_d - d)).
GnStep gn_update_transform(const Eigen::MatrixXd& J, const Eigen::VectorXd& residual,
                           const SplitBregmanState& state, const InversionConfig& config,
                           const Eigen::SparseMatrix<double>& R, const HaarTransform& phi,
                           const ConductivityField& sigma_ref);

/// Space-domain update: as above with mu (s - s0 + b_d - d) on the right.
GnStep gn_update_space(const Eigen::MatrixXd& J, const Eigen::VectorXd& residual,
                       const SplitBregmanState& state, const InversionConfig& config,
                       const Eigen::SparseMatrix<double>& R, const ConductivityField& sigma0,
                       const ConductivityField& sigma_ref);

/// Per-run extras that do not influence the iterates.
struct RunOptions {
  /// Truth on the inversion mesh; enables relative_error in the history.
  std::optional<Eigen::VectorXd> truth;
};

/// Split Bregman with Haar sparsity (transform domain).
SplitBregmanState run_algorithm1(const ForwardModel& model, const Eigen::VectorXd& data,
                                 const InversionConfig& config, const HaarTransform& phi,
                                 const Eigen::SparseMatrix<double>& R,
                                 const ConductivityField& sigma_ref, const RunOptions& options = {});

/// Split Bregman with sparsity of sigma - sigma0 (space domain).
SplitBregmanState run_algorithm2(const ForwardModel& model, const Eigen::VectorXd& data,
                                 const InversionConfig& config, const Eigen::SparseMatrix<double>& R,
                                 const ConductivityField& sigma0, const ConductivityField& sigma_ref,
                                 const RunOptions& options = {});

/// ||s - s*||^2 / ||s*||^2 (squared ratio).
double relative_error(const Eigen::VectorXd& sigma, const Eigen::VectorXd& truth);

/// CSV with columns k, alpha_k, inner_iters, residual, RE.
void write_history_csv(const std::vector<HistoryRecord>& history, const std::filesystem::path& path);

}  // namespace eit
