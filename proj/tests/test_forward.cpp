#include <cmath>
#include <random>

#include <Eigen/SparseCholesky>

#include "doctest.h"
#include "support.hpp"

using namespace eit;
using namespace eit::testing;

namespace {

Eigen::VectorXd pair_current(int L, int plus, int minus, double amplitude = 1.0) {
  Eigen::VectorXd c = Eigen::VectorXd::Zero(L);
  c[plus] = amplitude;
  c[minus] = -amplitude;
  return c;
}

}  // namespace

TEST_SUITE("forward") {

TEST_CASE("pattern and measurement layouts") {
  const auto p = CurrentPatternSet::adjacent(16);
  CHECK(p.drives() == 16);
  for (int d = 0; d < 16; ++d) CHECK(p.patterns.row(d).sum() == 0.0);
  const auto m = MeasurementLayout::adjacent(p);
  CHECK(m.size() == 208);
  CHECK(MeasurementLayout::adjacent(p, true).size() == 256);
  for (const auto& row : m.rows) {
    CHECK(p.patterns(row.drive, row.plus) == 0.0);
    CHECK(p.patterns(row.drive, row.minus) == 0.0);
  }
  CurrentPatternSet bad = p;
  bad.patterns(0, 3) = 0.5;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("admissibility and mesh checks") {
  const MeshPtr mesh = small_mesh();
  const ForwardModel model = model_on(mesh);
  auto sigma = ConductivityField::constant(*mesh, 0.25);
  CHECK_NOTHROW(model.predict(sigma));
  sigma.values[3] = 0.01;
  CHECK_THROWS_AS(model.predict(sigma), std::invalid_argument);
  sigma.values[3] = 60.0;
  CHECK_THROWS_AS(model.predict(sigma), std::invalid_argument);
  CHECK_THROWS_AS(model.predict(ConductivityField::constant(*coarse_mesh(), 0.25)), std::invalid_argument);
}

TEST_CASE("reduced system is symmetric positive definite") {
  std::mt19937_64 rng(11);
  const MeshPtr mesh = small_mesh();
  const ForwardModel model = model_on(mesh);
  const auto sigma = random_field(*mesh, rng);
  const Eigen::SparseMatrix<double> A = model.assemble(sigma);
  CHECK(A.rows() == mesh->node_count() + 15);
  const Eigen::MatrixXd D(A);
  CHECK((D - D.transpose()).cwiseAbs().maxCoeff() <= 1e-14 * D.cwiseAbs().maxCoeff());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(D);
  CHECK(eig.eigenvalues().minCoeff() > 0.0);
  CHECK(model.assemble(sigma).isApprox(assemble_cem_system(mesh, sigma, model.layout())));
}

TEST_CASE("stiffness block is linear in conductivity") {
  std::mt19937_64 rng(12);
  const MeshPtr mesh = small_mesh();
  const ForwardModel model = model_on(mesh);
  const Eigen::VectorXd a = random_field(*mesh, rng).values;
  const Eigen::VectorXd b = random_field(*mesh, rng).values;
  const Eigen::MatrixXd lhs(model.stiffness(2.0 * a + 3.0 * b));
  const Eigen::MatrixXd rhs = 2.0 * Eigen::MatrixXd(model.stiffness(a)) + 3.0 * Eigen::MatrixXd(model.stiffness(b));
  CHECK((lhs - rhs).cwiseAbs().maxCoeff() < 1e-12 * rhs.cwiseAbs().maxCoeff());
  // constants are in the kernel of the stiffness block
  CHECK((model.stiffness(a) * Eigen::VectorXd::Ones(mesh->node_count())).norm() < 1e-12);
}

TEST_CASE("electrode potentials sum to zero and solve the full system") {
  std::mt19937_64 rng(13);
  const MeshPtr mesh = coarse_mesh();
  const ForwardModel model = model_on(mesh);
  const auto sigma = random_field(*mesh, rng);
  const ForwardSolution sol = model.solve(sigma);
  const Eigen::SparseMatrix<double> full = model.assemble_full(sigma);
  for (int d = 0; d < 16; ++d) {
    const auto& U = sol.electrode_potentials[d];
    CHECK(std::abs(U.sum()) <= 1e-13 * U.cwiseAbs().sum());
    Eigen::VectorXd x(mesh->node_count() + 16);
    x << sol.interior_potentials[d], U;
    const Eigen::VectorXd rhs = model.full_rhs(model.patterns().patterns.row(d).transpose());
    CHECK((full * x - rhs).norm() <= 1e-10 * rhs.norm());
  }
}

TEST_CASE("208 measurements, linear in the current, inverse in a scalar conductivity") {
  std::mt19937_64 rng(14);
  const MeshPtr mesh = small_mesh();
  const ForwardModel model = model_on(mesh);
  const auto sigma = random_field(*mesh, rng);
  const Eigen::VectorXd U = model.predict(sigma);
  CHECK(U.size() == 208);
  const ForwardModel doubled =
      ForwardModel::adjacent(mesh, ElectrodeLayout::uniform(16), false, 2.0);
  CHECK(rel(doubled.predict(sigma), 2.0 * U) < 1e-12);
  // U(c sigma) with z scaled by 1/c equals U(sigma) / c
  const double c = 3.0;
  const ForwardModel scaled =
      ForwardModel::adjacent(mesh, ElectrodeLayout::uniform(16, 0.05 / c), false);
  auto sigma_c = sigma;
  sigma_c.values *= c;
  CHECK(rel(scaled.predict(sigma_c), U / c) < 1e-12);
}

TEST_CASE("reciprocity") {
  std::mt19937_64 rng(15);
  const MeshPtr mesh = coarse_mesh();
  const ForwardModel model = model_on(mesh);
  const auto sigma = random_field(*mesh, rng);
  std::uniform_int_distribution<int> pick(0, 15);
  for (int trial = 0; trial < 20; ++trial) {
    int a = pick(rng), b = pick(rng), c = pick(rng), d = pick(rng);
    if (a == b || c == d) continue;
    Eigen::MatrixXd currents(2, 16);
    currents.row(0) = pair_current(16, a, b).transpose();
    currents.row(1) = pair_current(16, c, d).transpose();
    const ForwardSolution s = model.solve(sigma, currents);
    const double v_cd = s.electrode_potentials[0][c] - s.electrode_potentials[0][d];
    const double v_ab = s.electrode_potentials[1][a] - s.electrode_potentials[1][b];
    CHECK(std::abs(v_cd - v_ab) <= 1e-8 * std::max(std::abs(v_ab), 1e-12));
  }
}

TEST_CASE("homogeneous measurements are rotation invariant") {
  const MeshPtr mesh = coarse_mesh();
  const ForwardModel model = model_on(mesh);
  const Eigen::VectorXd U = model.predict(ConductivityField::constant(*mesh, 0.25));
  const auto& rows = model.measurement_layout().rows;
  std::map<std::pair<int, int>, double> by_key;
  for (std::size_t i = 0; i < rows.size(); ++i) by_key[{rows[i].drive, rows[i].plus}] = U[i];
  const double scale = U.cwiseAbs().maxCoeff();
  double worst = 0.0;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const double turned = by_key.at({(rows[i].drive + 1) % 16, (rows[i].plus + 1) % 16});
    worst = std::max(worst, std::abs(turned - U[i]) / scale);
  }
  CHECK(worst < 1e-6);
}

TEST_CASE("adjoint Jacobian matches central differences") {
  std::mt19937_64 rng(16);
  const MeshPtr mesh = coarse_mesh();
  const ForwardModel model = model_on(mesh);
  const auto sigma = random_field(*mesh, rng, 0.2, 0.6);
  const Eigen::MatrixXd J = model.jacobian(sigma);
  CHECK(J.rows() == 208);
  CHECK(J.cols() == mesh->element_count());
  const auto lin = model.linearize(sigma);
  CHECK((lin.jacobian - J).norm() == 0.0);
  CHECK((lin.prediction - model.predict(sigma)).norm() == 0.0);

  std::uniform_int_distribution<int> element(0, mesh->element_count() - 1);
  for (int probe = 0; probe < 8; ++probe) {
    const int e = element(rng);
    const double h = 1e-4 * sigma.values[e];
    auto plus = sigma, minus = sigma;
    plus.values[e] += h;
    minus.values[e] -= h;
    const Eigen::VectorXd fd = (model.predict(plus) - model.predict(minus)) / (2.0 * h);
    CHECK(rel(J.col(e), fd) < 1e-4);
  }
}

TEST_CASE("boundary elements are more sensitive than central ones") {
  const MeshPtr mesh = coarse_mesh();
  const ForwardModel model = model_on(mesh);
  const Eigen::MatrixXd J = model.jacobian(ConductivityField::constant(*mesh, 0.25));
  double edge = 0.0, centre = 0.0;
  int n_edge = 0, n_centre = 0;
  for (int e = 0; e < mesh->element_count(); ++e) {
    const Point c = mesh->barycenter(e);
    const double r = std::hypot(c.x, c.y);
    const double s = J.col(e).norm() / mesh->area(e);
    if (r > 0.85) { edge += s; ++n_edge; }
    if (r < 0.3) { centre += s; ++n_centre; }
  }
  REQUIRE(n_edge > 0);
  REQUIRE(n_centre > 0);
  CHECK(edge / n_edge > 10.0 * centre / n_centre);
}

TEST_CASE("free-function entry points agree with the model") {
  std::mt19937_64 rng(17);
  const MeshPtr mesh = small_mesh();
  const ForwardModel model = model_on(mesh);
  const auto sigma = random_field(*mesh, rng);
  const ForwardSolution sol = solve_forward(mesh, sigma, model.layout(), model.patterns());
  CHECK(rel(measure(sol, model.measurement_layout()).voltages, model.predict(sigma)) < 1e-14);
  CHECK((jacobian(mesh, sigma, model.layout(), model.patterns()) - model.jacobian(sigma)).norm() <=
        1e-14 * model.jacobian(sigma).norm());
}

TEST_CASE("forward map is locally Lipschitz with the Jacobian bound") {
  std::mt19937_64 rng(18);
  const MeshPtr mesh = small_mesh();
  const ForwardModel model = model_on(mesh);
  const auto sigma = random_field(*mesh, rng, 0.2, 0.6);
  const Eigen::MatrixXd J = model.jacobian(sigma);
  const double bound = J.jacobiSvd().singularValues()[0];
  for (int trial = 0; trial < 10; ++trial) {
    auto other = sigma;
    other.values += 1e-3 * random_vector(sigma.size(), rng);
    const double step = (other.values - sigma.values).norm();
    CHECK((model.predict(other) - model.predict(sigma)).norm() <= 1.1 * bound * step);
  }
}

}
