#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "eit/mesh.hpp"

namespace eit {

/// Lower admissibility bound; conductivities must lie in [lambda, 1/lambda].
inline constexpr double kAdmissibleLambda = 0.02;

/// Piecewise-constant conductivity, one value per element of the mesh it lives on.
struct ConductivityField {
  Eigen::VectorXd values;
  std::uint64_t mesh_id = 0;

  static ConductivityField constant(const TriMesh& mesh, double value);
  static ConductivityField on(const TriMesh& mesh, Eigen::VectorXd values);

  Eigen::Index size() const { return values.size(); }
};

/// Throws std::invalid_argument unless every value lies in [lambda, 1/lambda].
void check_admissible(const ConductivityField& sigma, double lambda = kAdmissibleLambda);

/// One current vector (length L) per drive; every row sums to zero.
struct CurrentPatternSet {
  Eigen::MatrixXd patterns;

  /// Drive d injects +amplitude on electrode d and -amplitude on electrode d+1 (mod L).
  static CurrentPatternSet adjacent(int electrodes, double amplitude = 1.0);

  int drives() const { return static_cast<int>(patterns.rows()); }
  int electrodes() const { return static_cast<int>(patterns.cols()); }
  void validate() const;
};

/// Which electrode-potential differences are read for each drive.
struct MeasurementLayout {
  struct Row {
    int drive;
    int plus;   // measurement reads U[plus] - U[minus]
    int minus;
  };
  int electrodes = 0;
  int drives = 0;
  std::vector<Row> rows;

  /// Adjacent pairs (m, m+1 mod L); pairs touching a driven electrode are skipped
  /// unless `include_driven` is set. For 16 electrodes and adjacent drive: 13 per drive.
  static MeasurementLayout adjacent(const CurrentPatternSet& patterns, bool include_driven = false);

  int size() const { return static_cast<int>(rows.size()); }
};

struct MeasurementSet {
  Eigen::VectorXd voltages;
  MeasurementLayout layout;
};

struct ForwardSolution {
  std::vector<Eigen::VectorXd> interior_potentials;   // per drive, nodal u
  std::vector<Eigen::VectorXd> electrode_potentials;  // per drive, U (sums to zero)
};

/// Complete electrode model with P1 potentials and P0 conductivity on one mesh.
///
/// The electrode potentials are written in the zero-sum basis U = C * V with
/// C[:, j] = e_0 - e_{j+1}, so the grounding condition holds by construction and
/// the reduced system is symmetric positive definite.
class ForwardModel {
 public:
  ForwardModel(MeshPtr mesh, ElectrodeLayout layout, CurrentPatternSet patterns,
               MeasurementLayout measurement, double lambda = kAdmissibleLambda);

  /// Adjacent drive, adjacent measurement model for the mesh's electrodes.
  static ForwardModel adjacent(MeshPtr mesh, ElectrodeLayout layout, bool include_driven = false,
                              double amplitude = 1.0);

  const TriMesh& mesh() const { return *mesh_; }
  const MeshPtr& mesh_ptr() const { return mesh_; }
  const ElectrodeLayout& layout() const { return layout_; }
  const CurrentPatternSet& patterns() const { return patterns_; }
  const MeasurementLayout& measurement_layout() const { return measurement_; }
  double lambda() const { return lambda_; }

  /// Conductivity-dependent block sum_e sigma_e K_e (nodes x nodes). Linear in sigma.
  Eigen::SparseMatrix<double> stiffness(const Eigen::VectorXd& sigma) const;
  /// Reduced SPD system over (u, V), size nodes + L - 1.
  Eigen::SparseMatrix<double> assemble(const ConductivityField& sigma) const;
  /// Un-reduced singular system over (u, U), size nodes + L.
  Eigen::SparseMatrix<double> assemble_full(const ConductivityField& sigma) const;
  /// Right-hand side of the un-reduced system for one current vector.
  Eigen::VectorXd full_rhs(const Eigen::VectorXd& current) const;

  ForwardSolution solve(const ConductivityField& sigma) const;
  /// Solves for arbitrary zero-sum current vectors (one per row).
  ForwardSolution solve(const ConductivityField& sigma, const Eigen::MatrixXd& currents) const;

  MeasurementSet measure(const ForwardSolution& solution) const;
  /// measure(solve(sigma)).voltages
  Eigen::VectorXd predict(const ConductivityField& sigma) const;

  /// Adjoint sensitivity J[(d,m), e] = -area_e * grad(u_d) . grad(w_m).
  Eigen::MatrixXd jacobian(const ConductivityField& sigma) const;

  struct Linearization {
    Eigen::VectorXd prediction;
    Eigen::MatrixXd jacobian;
  };
  /// Prediction and Jacobian from a single factorization.
  Linearization linearize(const ConductivityField& sigma) const;

 private:
  struct ElementGeometry {
    Eigen::Matrix<double, 3, 2> gradients;  // grad phi_k, rows per local node
    double area;
  };

  void check_field(const ConductivityField& sigma) const;
  std::vector<Eigen::VectorXd> solve_reduced(const ConductivityField& sigma,
                                             const Eigen::MatrixXd& currents) const;
  Eigen::MatrixXd element_gradients(const Eigen::VectorXd& nodal) const;  // elements x 2

  MeshPtr mesh_;
  ElectrodeLayout layout_;
  CurrentPatternSet patterns_;
  MeasurementLayout measurement_;
  double lambda_;
  std::vector<ElementGeometry> geometry_;
  std::vector<Eigen::Triplet<double>> electrode_block_;  // reduced, sigma independent
  Eigen::VectorXd electrode_length_;
  Eigen::MatrixXd electrode_load_;                       // nodes x L, int_{e_l} phi_i
  Eigen::MatrixXd adjoint_currents_;                     // distinct measurement patterns
  std::vector<int> adjoint_index_;                       // row -> adjoint pattern
};

// Free-function entry points mirroring the model's operations.
Eigen::SparseMatrix<double> assemble_cem_system(const MeshPtr& mesh, const ConductivityField& sigma,
                                                const ElectrodeLayout& layout);
ForwardSolution solve_forward(const MeshPtr& mesh, const ConductivityField& sigma,
                              const ElectrodeLayout& layout, const CurrentPatternSet& patterns);
MeasurementSet measure(const ForwardSolution& solution, const MeasurementLayout& layout);
Eigen::MatrixXd jacobian(const MeshPtr& mesh, const ConductivityField& sigma,
                         const ElectrodeLayout& layout, const CurrentPatternSet& patterns);

}  // namespace eit
