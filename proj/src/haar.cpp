#include "eit/haar.hpp"

#include <cmath>
#include <stdexcept>

namespace eit {

HaarTransform::HaarTransform(Eigen::Index input_length)
    : input_length_(input_length), length_(1), levels_(0) {
  if (input_length < 0) throw std::invalid_argument("HaarTransform: negative length");
  while (length_ < input_length) {
    length_ *= 2;
    ++levels_;
  }
}

Eigen::VectorXd HaarTransform::forward(const Eigen::VectorXd& x) const {
  if (x.size() > length_) {
    throw std::invalid_argument("HaarTransform::forward: input longer than the transform");
  }
  const double r = 1.0 / std::sqrt(2.0);
  Eigen::VectorXd work = Eigen::VectorXd::Zero(length_);
  work.head(x.size()) = x;
  Eigen::VectorXd out(length_);
  for (Eigen::Index n = length_; n > 1; n /= 2) {
    const Eigen::Index half = n / 2;
    for (Eigen::Index i = 0; i < half; ++i) {
      const double a = work[2 * i];
      const double b = work[2 * i + 1];
      out[half + i] = r * (a - b);
      work[i] = r * (a + b);
    }
  }
  out[0] = work[0];
  return out;
}

Eigen::VectorXd HaarTransform::inverse_padded(const Eigen::VectorXd& coefficients) const {
  if (coefficients.size() != length_) {
    throw std::invalid_argument("HaarTransform::inverse: coefficient length mismatch");
  }
  const double r = 1.0 / std::sqrt(2.0);
  Eigen::VectorXd work(length_);
  work[0] = coefficients[0];
  Eigen::VectorXd next(length_);
  for (Eigen::Index n = 2; n <= length_; n *= 2) {
    const Eigen::Index half = n / 2;
    for (Eigen::Index i = 0; i < half; ++i) {
      const double s = work[i];
      const double d = coefficients[half + i];
      next[2 * i] = r * (s + d);
      next[2 * i + 1] = r * (s - d);
    }
    work.head(n) = next.head(n);
  }
  return work;
}

Eigen::VectorXd HaarTransform::inverse(const Eigen::VectorXd& coefficients) const {
  return inverse_padded(coefficients).head(input_length_);
}

Eigen::VectorXd forward_haar(const Eigen::VectorXd& x) { return HaarTransform(x.size()).forward(x); }

Eigen::VectorXd inverse_haar(const Eigen::VectorXd& coefficients, Eigen::Index output_length) {
  const HaarTransform transform(output_length);
  return transform.inverse(coefficients);
}

Eigen::VectorXd inhomogeneity(const ConductivityField& sigma, const ConductivityField& sigma0) {
  if (sigma.mesh_id != sigma0.mesh_id || sigma.size() != sigma0.size()) {
    throw std::invalid_argument("inhomogeneity: fields live on different meshes");
  }
  return sigma.values - sigma0.values;
}

}  // namespace eit
