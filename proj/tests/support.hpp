#pragma once

#include <memory>
#include <random>

#include "eit/experiment.hpp"

namespace eit::testing {

inline MeshPtr small_mesh() {
  static const MeshPtr mesh =
      std::make_shared<const TriMesh>(generate_disk_mesh(64, ElectrodeLayout::uniform(16)));
  return mesh;
}

inline MeshPtr coarse_mesh() {
  static const MeshPtr mesh =
      std::make_shared<const TriMesh>(generate_disk_mesh(492, ElectrodeLayout::uniform(16)));
  return mesh;
}

inline MeshPtr fine_mesh() {
  static const MeshPtr mesh =
      std::make_shared<const TriMesh>(generate_disk_mesh(1968, ElectrodeLayout::uniform(16)));
  return mesh;
}

inline ForwardModel model_on(const MeshPtr& mesh) {
  return ForwardModel::adjacent(mesh, ElectrodeLayout::uniform(16));
}

/// Conductivity in [lo, hi] drawn per element.
inline ConductivityField random_field(const TriMesh& mesh, std::mt19937_64& rng, double lo = 0.1,
                                      double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Eigen::VectorXd v(mesh.element_count());
  for (auto& x : v) x = u(rng);
  return ConductivityField::on(mesh, v);
}

inline Eigen::VectorXd random_vector(Eigen::Index n, std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  Eigen::VectorXd v(n);
  for (auto& x : v) x = g(rng);
  return v;
}

inline double rel(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  return (a - b).norm() / std::max(b.norm(), 1e-300);
}

/// Small experiment meshes for fast end-to-end checks.
inline MeshSpec small_mesh_spec() {
  MeshSpec spec;
  spec.fine_elements = 256;
  spec.coarse_elements = 64;
  return spec;
}

// H_{2n} = [H_n (x) (1 1); I_n (x) (1 -1)] / sqrt(2)
inline Eigen::MatrixXd haar_matrix(Eigen::Index n) {
  if (n == 1) return Eigen::MatrixXd::Ones(1, 1);
  const Eigen::Index h = n / 2;
  const Eigen::MatrixXd Hh = haar_matrix(h);
  Eigen::MatrixXd H = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index i = 0; i < h; ++i) {
    for (Eigen::Index j = 0; j < h; ++j) {
      H(i, 2 * j) = Hh(i, j);
      H(i, 2 * j + 1) = Hh(i, j);
    }
    H(h + i, 2 * i) = 1.0;
    H(h + i, 2 * i + 1) = -1.0;
  }
  return H / std::sqrt(2.0);
}

}  // namespace eit::testing
