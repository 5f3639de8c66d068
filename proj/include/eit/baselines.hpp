#pragma once

#include <map>
#include <string>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "eit/inversion.hpp"

namespace eit {

enum class SparsityDomainKind { Transform, Space };

/// l2 (smoothness-only) regularization: the transform-domain run with beta = 1.
SplitBregmanState run_l2(const ForwardModel& model, const Eigen::VectorXd& data,
                         InversionConfig config, const HaarTransform& phi,
                         const Eigen::SparseMatrix<double>& R, const ConductivityField& sigma_ref,
                         const RunOptions& options = {});

/// l1 regularization: beta = 0 in either domain. `sigma0` is only read for the space domain.
SplitBregmanState run_l1(const ForwardModel& model, const Eigen::VectorXd& data,
                         InversionConfig config, SparsityDomainKind domain, const HaarTransform& phi,
                         const ConductivityField& sigma0, const Eigen::SparseMatrix<double>& R,
                         const ConductivityField& sigma_ref, const RunOptions& options = {});

struct TvConfig {
  double alpha0 = 1e-4;
  double q_alpha = 0.6;
  /// Smoothing in sqrt(|x|^2 + gamma^2); nonpositive selects 1e-3 * max|sigma_ref|.
  double gamma = 0.0;
  int outer_max = 30;
  double cg_tol = 1e-8;
  int cg_max = 500;
  double noise_norm = 0.0;
  double residual_floor = 1e-8;
  double lambda = kAdmissibleLambda;
  bool strict_cg = false;

  void validate() const;
  std::map<std::string, std::string> to_map() const;
  static TvConfig from_map(const std::map<std::string, std::string>& values,
                           const std::vector<std::string>& ignored = {});
  /// TV run mirroring an elastic-net schedule (alpha0, q_alpha, stopping, CG controls).
  static TvConfig mirroring(const InversionConfig& config);
};

/// sum_i sqrt([R s]_i^2 + gamma^2) - gamma
double tv_penalty(const Eigen::SparseMatrix<double>& R, const Eigen::VectorXd& sigma, double gamma);
/// 1 / sqrt([R s]_i^2 + gamma^2)
Eigen::VectorXd tv_edge_weights(const Eigen::SparseMatrix<double>& R, const Eigen::VectorXd& sigma,
                                double gamma);
/// R^T diag(w(s)) R, the lagged-diffusivity Hessian of the TV penalty.
Eigen::SparseMatrix<double> lagged_diffusivity_matrix(const Eigen::SparseMatrix<double>& R,
                                                      const Eigen::VectorXd& sigma, double gamma);

/// Gauss-Newton on ||F(s) - U||^2 + 2 alpha_k TV_gamma(s) with the TV Hessian lagged at s^k:
/// [J^T J + alpha_k L(s^k)] ds = J^T r - alpha_k L(s^k) s^k.
SplitBregmanState run_tv(const ForwardModel& model, const Eigen::VectorXd& data,
                         const TvConfig& config, const Eigen::SparseMatrix<double>& R,
                         const ConductivityField& sigma_ref, const RunOptions& options = {});

}  // namespace eit
