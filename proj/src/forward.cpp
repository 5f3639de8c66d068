#include "eit/forward.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace eit {

ConductivityField ConductivityField::constant(const TriMesh& mesh, double value) {
  return {Eigen::VectorXd::Constant(mesh.element_count(), value), mesh.id()};
}

ConductivityField ConductivityField::on(const TriMesh& mesh, Eigen::VectorXd values) {
  if (values.size() != mesh.element_count()) {
    throw std::invalid_argument("ConductivityField: one value per element is required");
  }
  return {std::move(values), mesh.id()};
}

void check_admissible(const ConductivityField& sigma, double lambda) {
  for (Eigen::Index e = 0; e < sigma.size(); ++e) {
    const double s = sigma.values[e];
    if (!(s >= lambda && s <= 1.0 / lambda)) {
      throw std::invalid_argument("conductivity " + std::to_string(s) + " at element " +
                                  std::to_string(e) + " is outside the admissible range");
    }
  }
}

CurrentPatternSet CurrentPatternSet::adjacent(int electrodes, double amplitude) {
  if (electrodes < 2) throw std::invalid_argument("CurrentPatternSet: need two electrodes");
  CurrentPatternSet set;
  set.patterns = Eigen::MatrixXd::Zero(electrodes, electrodes);
  for (int d = 0; d < electrodes; ++d) {
    set.patterns(d, d) += amplitude;
    set.patterns(d, (d + 1) % electrodes) -= amplitude;
  }
  return set;
}

void CurrentPatternSet::validate() const {
  for (Eigen::Index d = 0; d < patterns.rows(); ++d) {
    const double scale = patterns.row(d).cwiseAbs().sum();
    if (std::abs(patterns.row(d).sum()) > 1e-12 * std::max(scale, 1.0)) {
      throw std::invalid_argument("CurrentPatternSet: drive " + std::to_string(d) +
                                  " does not conserve current");
    }
  }
}

MeasurementLayout MeasurementLayout::adjacent(const CurrentPatternSet& patterns,
                                              bool include_driven) {
  MeasurementLayout layout;
  layout.electrodes = patterns.electrodes();
  layout.drives = patterns.drives();
  const int L = layout.electrodes;
  for (int d = 0; d < layout.drives; ++d) {
    for (int m = 0; m < L; ++m) {
      const int next = (m + 1) % L;
      const bool driven = patterns.patterns(d, m) != 0.0 || patterns.patterns(d, next) != 0.0;
      if (driven && !include_driven) continue;
      layout.rows.push_back({d, m, next});
    }
  }
  return layout;
}

ForwardModel::ForwardModel(MeshPtr mesh, ElectrodeLayout layout, CurrentPatternSet patterns,
                           MeasurementLayout measurement, double lambda)
    : mesh_(std::move(mesh)),
      layout_(std::move(layout)),
      patterns_(std::move(patterns)),
      measurement_(std::move(measurement)),
      lambda_(lambda) {
  if (!mesh_) throw std::invalid_argument("ForwardModel: null mesh");
  layout_.validate();
  patterns_.validate();
  const int L = layout_.count;
  if (mesh_->electrode_count() != L || patterns_.electrodes() != L ||
      measurement_.electrodes != L) {
    throw std::invalid_argument("ForwardModel: electrode counts disagree");
  }
  if (measurement_.drives != patterns_.drives()) {
    throw std::invalid_argument("ForwardModel: measurement layout and drives disagree");
  }

  const auto& nodes = mesh_->nodes();
  geometry_.reserve(static_cast<std::size_t>(mesh_->element_count()));
  for (int e = 0; e < mesh_->element_count(); ++e) {
    const auto& t = mesh_->elements()[e];
    const double area = mesh_->area(e);
    ElementGeometry g;
    g.area = area;
    for (int k = 0; k < 3; ++k) {
      const Point& b = nodes[t[(k + 1) % 3]];
      const Point& c = nodes[t[(k + 2) % 3]];
      g.gradients(k, 0) = (b.y - c.y) / (2.0 * area);
      g.gradients(k, 1) = (c.x - b.x) / (2.0 * area);
    }
    geometry_.push_back(g);
  }

  // electrode terms: (1/z) int phi_i phi_j, -(1/z) int phi_i, |e_l| / z
  const int n = mesh_->node_count();
  electrode_length_ = Eigen::VectorXd::Zero(L);
  electrode_load_ = Eigen::MatrixXd::Zero(n, L);
  for (int l = 0; l < L; ++l) {
    const double inv_z = 1.0 / layout_.contact_impedances[l];
    for (int be : mesh_->electrode_edges()[l]) {
      const auto& edge = mesh_->boundary_edges()[be];
      const Point& a = nodes[edge[0]];
      const Point& b = nodes[edge[1]];
      const double h = std::hypot(b.x - a.x, b.y - a.y);
      electrode_length_[l] += h;
      electrode_block_.emplace_back(edge[0], edge[0], inv_z * h / 3.0);
      electrode_block_.emplace_back(edge[1], edge[1], inv_z * h / 3.0);
      electrode_block_.emplace_back(edge[0], edge[1], inv_z * h / 6.0);
      electrode_block_.emplace_back(edge[1], edge[0], inv_z * h / 6.0);
      electrode_load_(edge[0], l) += h / 2.0;
      electrode_load_(edge[1], l) += h / 2.0;
    }
  }
  // coupling with the zero-sum basis: column j of C is e_0 - e_{j+1}
  for (int j = 0; j + 1 < L; ++j) {
    for (int i = 0; i < n; ++i) {
      const double value = -(electrode_load_(i, 0) / layout_.contact_impedances[0] -
                             electrode_load_(i, j + 1) / layout_.contact_impedances[j + 1]);
      if (value != 0.0) {
        electrode_block_.emplace_back(i, n + j, value);
        electrode_block_.emplace_back(n + j, i, value);
      }
    }
  }
  const double d0 = electrode_length_[0] / layout_.contact_impedances[0];
  for (int i = 0; i + 1 < L; ++i) {
    for (int j = 0; j + 1 < L; ++j) {
      double value = d0;
      if (i == j) value += electrode_length_[j + 1] / layout_.contact_impedances[j + 1];
      electrode_block_.emplace_back(n + i, n + j, value);
    }
  }

  // adjoint currents for each measurement row; reuse drive patterns when identical
  const int drives = patterns_.drives();
  std::vector<Eigen::VectorXd> extra;
  adjoint_index_.reserve(measurement_.rows.size());
  for (const auto& row : measurement_.rows) {
    Eigen::VectorXd current = Eigen::VectorXd::Zero(L);
    current[row.plus] += 1.0;
    current[row.minus] -= 1.0;
    int index = -1;
    for (int d = 0; d < drives && index < 0; ++d) {
      if (patterns_.patterns.row(d).transpose() == current) index = d;
    }
    for (std::size_t k = 0; k < extra.size() && index < 0; ++k) {
      if (extra[k] == current) index = drives + static_cast<int>(k);
    }
    if (index < 0) {
      index = drives + static_cast<int>(extra.size());
      extra.push_back(current);
    }
    adjoint_index_.push_back(index);
  }
  adjoint_currents_.resize(static_cast<Eigen::Index>(extra.size()), L);
  for (std::size_t k = 0; k < extra.size(); ++k) {
    adjoint_currents_.row(static_cast<Eigen::Index>(k)) = extra[k].transpose();
  }
}

ForwardModel ForwardModel::adjacent(MeshPtr mesh, ElectrodeLayout layout, bool include_driven,
                                   double amplitude) {
  auto patterns = CurrentPatternSet::adjacent(layout.count, amplitude);
  auto measurement = MeasurementLayout::adjacent(patterns, include_driven);
  return ForwardModel(std::move(mesh), std::move(layout), std::move(patterns),
                      std::move(measurement));
}

void ForwardModel::check_field(const ConductivityField& sigma) const {
  if (sigma.mesh_id != mesh_->id() || sigma.size() != mesh_->element_count()) {
    throw std::invalid_argument("ForwardModel: conductivity lives on a different mesh");
  }
  check_admissible(sigma, lambda_);
}

Eigen::SparseMatrix<double> ForwardModel::stiffness(const Eigen::VectorXd& sigma) const {
  const int n = mesh_->node_count();
  std::vector<Eigen::Triplet<double>> entries;
  entries.reserve(geometry_.size() * 9);
  for (int e = 0; e < mesh_->element_count(); ++e) {
    const auto& g = geometry_[e];
    const auto& t = mesh_->elements()[e];
    const Eigen::Matrix3d local = sigma[e] * g.area * g.gradients * g.gradients.transpose();
    for (int a = 0; a < 3; ++a) {
      for (int b = 0; b < 3; ++b) entries.emplace_back(t[a], t[b], local(a, b));
    }
  }
  Eigen::SparseMatrix<double> K(n, n);
  K.setFromTriplets(entries.begin(), entries.end());
  return K;
}

Eigen::SparseMatrix<double> ForwardModel::assemble(const ConductivityField& sigma) const {
  check_field(sigma);
  const int n = mesh_->node_count();
  const int size = n + layout_.count - 1;
  std::vector<Eigen::Triplet<double>> entries(electrode_block_);
  entries.reserve(entries.size() + geometry_.size() * 9);
  for (int e = 0; e < mesh_->element_count(); ++e) {
    const auto& g = geometry_[e];
    const auto& t = mesh_->elements()[e];
    const Eigen::Matrix3d local = sigma.values[e] * g.area * g.gradients * g.gradients.transpose();
    for (int a = 0; a < 3; ++a) {
      for (int b = 0; b < 3; ++b) entries.emplace_back(t[a], t[b], local(a, b));
    }
  }
  Eigen::SparseMatrix<double> A(size, size);
  A.setFromTriplets(entries.begin(), entries.end());
  return A;
}

Eigen::SparseMatrix<double> ForwardModel::assemble_full(const ConductivityField& sigma) const {
  check_field(sigma);
  const int n = mesh_->node_count();
  const int L = layout_.count;
  Eigen::SparseMatrix<double> K = stiffness(sigma.values);
  std::vector<Eigen::Triplet<double>> entries;
  for (int k = 0; k < K.outerSize(); ++k) {
    for (Eigen::SparseMatrix<double>::InnerIterator it(K, k); it; ++it) {
      entries.emplace_back(static_cast<int>(it.row()), static_cast<int>(it.col()), it.value());
    }
  }
  for (const auto& t : electrode_block_) {
    if (t.row() < n && t.col() < n) entries.push_back(t);
  }
  for (int l = 0; l < L; ++l) {
    const double inv_z = 1.0 / layout_.contact_impedances[l];
    for (int i = 0; i < n; ++i) {
      const double value = -inv_z * electrode_load_(i, l);
      if (value != 0.0) {
        entries.emplace_back(i, n + l, value);
        entries.emplace_back(n + l, i, value);
      }
    }
    entries.emplace_back(n + l, n + l, inv_z * electrode_length_[l]);
  }
  Eigen::SparseMatrix<double> A(n + L, n + L);
  A.setFromTriplets(entries.begin(), entries.end());
  return A;
}

Eigen::VectorXd ForwardModel::full_rhs(const Eigen::VectorXd& current) const {
  const int n = mesh_->node_count();
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n + layout_.count);
  rhs.tail(layout_.count) = current;
  return rhs;
}

std::vector<Eigen::VectorXd> ForwardModel::solve_reduced(const ConductivityField& sigma,
                                                         const Eigen::MatrixXd& currents) const {
  const int n = mesh_->node_count();
  const int L = layout_.count;
  if (currents.cols() != L) {
    throw std::invalid_argument("ForwardModel::solve: current vectors need one entry per electrode");
  }
  const Eigen::SparseMatrix<double> A = assemble(sigma);
  Eigen::SimplicialLLT<Eigen::SparseMatrix<double>> factor(A);
  if (factor.info() != Eigen::Success) {
    throw std::runtime_error("ForwardModel::solve: Cholesky factorization of the " +
                             std::to_string(A.rows()) + "-unknown CEM system failed");
  }
  std::vector<Eigen::VectorXd> solutions;
  solutions.reserve(static_cast<std::size_t>(currents.rows()));
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n + L - 1);
  for (Eigen::Index d = 0; d < currents.rows(); ++d) {
    for (int j = 0; j + 1 < L; ++j) rhs[n + j] = currents(d, 0) - currents(d, j + 1);
    Eigen::VectorXd x = factor.solve(rhs);
    if (factor.info() != Eigen::Success || !x.allFinite()) {
      throw std::runtime_error("ForwardModel::solve: back substitution failed for drive " +
                               std::to_string(d));
    }
    solutions.push_back(std::move(x));
  }
  return solutions;
}

ForwardSolution ForwardModel::solve(const ConductivityField& sigma) const {
  return solve(sigma, patterns_.patterns);
}

ForwardSolution ForwardModel::solve(const ConductivityField& sigma,
                                    const Eigen::MatrixXd& currents) const {
  const int n = mesh_->node_count();
  const int L = layout_.count;
  ForwardSolution solution;
  for (auto& x : solve_reduced(sigma, currents)) {
    Eigen::VectorXd U(L);
    U[0] = x.tail(L - 1).sum();
    for (int j = 0; j + 1 < L; ++j) U[j + 1] = -x[n + j];
    solution.interior_potentials.push_back(x.head(n));
    solution.electrode_potentials.push_back(std::move(U));
  }
  return solution;
}

MeasurementSet measure(const ForwardSolution& solution, const MeasurementLayout& layout) {
  if (static_cast<int>(solution.electrode_potentials.size()) < layout.drives) {
    throw std::invalid_argument("measure: solution has fewer drives than the layout");
  }
  MeasurementSet set;
  set.layout = layout;
  set.voltages.resize(layout.size());
  for (int r = 0; r < layout.size(); ++r) {
    const auto& row = layout.rows[r];
    const auto& U = solution.electrode_potentials[row.drive];
    set.voltages[r] = U[row.plus] - U[row.minus];
  }
  return set;
}

MeasurementSet ForwardModel::measure(const ForwardSolution& solution) const {
  return eit::measure(solution, measurement_);
}

Eigen::VectorXd ForwardModel::predict(const ConductivityField& sigma) const {
  return measure(solve(sigma)).voltages;
}

Eigen::MatrixXd ForwardModel::element_gradients(const Eigen::VectorXd& nodal) const {
  Eigen::MatrixXd grads(mesh_->element_count(), 2);
  for (int e = 0; e < mesh_->element_count(); ++e) {
    const auto& t = mesh_->elements()[e];
    const Eigen::Vector3d local(nodal[t[0]], nodal[t[1]], nodal[t[2]]);
    grads.row(e) = local.transpose() * geometry_[e].gradients;
  }
  return grads;
}

ForwardModel::Linearization ForwardModel::linearize(const ConductivityField& sigma) const {
  const int drives = patterns_.drives();
  const int L = layout_.count;
  Eigen::MatrixXd currents(drives + adjoint_currents_.rows(), L);
  currents.topRows(drives) = patterns_.patterns;
  currents.bottomRows(adjoint_currents_.rows()) = adjoint_currents_;
  const ForwardSolution solution = solve(sigma, currents);

  Linearization out;
  out.prediction = measure(solution).voltages;

  std::vector<Eigen::MatrixXd> grads;
  grads.reserve(solution.interior_potentials.size());
  for (const auto& u : solution.interior_potentials) grads.push_back(element_gradients(u));

  const int elements = mesh_->element_count();
  out.jacobian.resize(measurement_.size(), elements);
  for (int r = 0; r < measurement_.size(); ++r) {
    const auto& gd = grads[measurement_.rows[r].drive];
    const auto& gm = grads[adjoint_index_[r]];
    for (int e = 0; e < elements; ++e) {
      out.jacobian(r, e) =
          -geometry_[e].area * (gd(e, 0) * gm(e, 0) + gd(e, 1) * gm(e, 1));
    }
  }
  return out;
}

Eigen::MatrixXd ForwardModel::jacobian(const ConductivityField& sigma) const {
  return linearize(sigma).jacobian;
}

Eigen::SparseMatrix<double> assemble_cem_system(const MeshPtr& mesh, const ConductivityField& sigma,
                                                const ElectrodeLayout& layout) {
  return ForwardModel::adjacent(mesh, layout).assemble(sigma);
}

ForwardSolution solve_forward(const MeshPtr& mesh, const ConductivityField& sigma,
                              const ElectrodeLayout& layout, const CurrentPatternSet& patterns) {
  ForwardModel model(mesh, layout, patterns, MeasurementLayout::adjacent(patterns));
  return model.solve(sigma);
}

Eigen::MatrixXd jacobian(const MeshPtr& mesh, const ConductivityField& sigma,
                         const ElectrodeLayout& layout, const CurrentPatternSet& patterns) {
  ForwardModel model(mesh, layout, patterns, MeasurementLayout::adjacent(patterns));
  return model.jacobian(sigma);
}

}  // namespace eit
