#pragma once

#include <Eigen/Dense>

#include "eit/forward.hpp"

namespace eit {

/// Full-depth orthonormal 1-D Haar transform over element vectors.
///
/// Inputs shorter than the padded power-of-two length are zero-padded, and
/// inverse() truncates back to `input_length`, so inverse() is the exact adjoint
/// of forward(). Coefficient layout: [approximation, coarsest detail, ..., finest details].
class HaarTransform {
 public:
  explicit HaarTransform(Eigen::Index input_length);

  Eigen::Index input_length() const { return input_length_; }
  Eigen::Index length() const { return length_; }
  int levels() const { return levels_; }

  Eigen::VectorXd forward(const Eigen::VectorXd& x) const;
  Eigen::VectorXd inverse(const Eigen::VectorXd& coefficients) const;
  /// Inverse without truncating the pad.
  Eigen::VectorXd inverse_padded(const Eigen::VectorXd& coefficients) const;

 private:
  Eigen::Index input_length_;
  Eigen::Index length_;
  int levels_;
};

Eigen::VectorXd forward_haar(const Eigen::VectorXd& x);
Eigen::VectorXd inverse_haar(const Eigen::VectorXd& coefficients, Eigen::Index output_length);

/// sigma - sigma0 elementwise; both fields must live on the same mesh.
Eigen::VectorXd inhomogeneity(const ConductivityField& sigma, const ConductivityField& sigma0);

}  // namespace eit
