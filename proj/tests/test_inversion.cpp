#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "doctest.h"
#include "support.hpp"

using namespace eit;
using namespace eit::testing;

namespace {

struct SmallProblem {
  MeshPtr mesh = small_mesh();
  ForwardModel model = model_on(mesh);
  Eigen::SparseMatrix<double> R = adjacency_difference_operator(*mesh);
  HaarTransform phi{mesh->element_count()};
  ConductivityField background = ConductivityField::constant(*mesh, 0.25);
  ConductivityField truth = background;
  Eigen::VectorXd data;

  SmallProblem() {
    for (int e = 0; e < mesh->element_count(); ++e) {
      const Point c = mesh->barycenter(e);
      if (std::hypot(c.x - 0.4, c.y) < 0.35) truth.values[e] = 1.0;
    }
    data = model.predict(truth);
  }
};

// Phi^T v restricted to the element count
Eigen::VectorXd dense_adjoint(const Eigen::MatrixXd& H, const Eigen::VectorXd& v, Eigen::Index n) {
  return (H.transpose() * v).head(n);
}

}  // namespace

TEST_SUITE("inversion") {

TEST_CASE("shrinkage cases") {
  CHECK(shrinkage(3.0, 1.0) == 2.0);
  CHECK(shrinkage(-3.0, 1.0) == -2.0);
  CHECK(shrinkage(-0.5, 1.0) == 0.0);
  CHECK(shrinkage(1.0, 1.0) == 0.0);
  CHECK(shrinkage(0.7, 0.0) == 0.7);
  CHECK_THROWS_AS(shrinkage(1.0, -1e-3), std::invalid_argument);
  CHECK_THROWS_AS(shrinkage(Eigen::VectorXd::Ones(3), -1.0), std::invalid_argument);
}

TEST_CASE("shrinkage is an odd nonexpansive proximal map") {
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> thr(0.0, 2.0);
  for (int i = 0; i < 1000; ++i) {
    const Eigen::VectorXd x = random_vector(20, rng);
    const Eigen::VectorXd y = random_vector(20, rng);
    const double t = thr(rng);
    const Eigen::VectorXd sx = shrinkage(x, t);
    REQUIRE((sx - shrinkage(y, t)).norm() <= (x - y).norm() + 1e-15);
    REQUIRE((shrinkage(Eigen::VectorXd(-x), t) + sx).norm() == 0.0);
    for (Eigen::Index k = 0; k < x.size(); ++k) {
      REQUIRE((sx[k] == 0.0) == (std::abs(x[k]) <= t));
      REQUIRE(sx[k] == shrinkage(x[k], t));
    }
  }
}

TEST_CASE("discrepancy test") {
  CHECK(morozov_stop(0.5, 1.0));
  CHECK_FALSE(morozov_stop(1.0, 1.0));
  CHECK(morozov_stop(1e-9, 0.0, 1e-8));
  CHECK_FALSE(morozov_stop(1e-8, 0.0, 1e-8));
  CHECK_FALSE(morozov_stop(0.0, 0.0, 0.0));
}

TEST_CASE("config validation, schedule and key-value round trip") {
  InversionConfig c;
  CHECK_NOTHROW(c.validate());
  for (int k = 0; k < 30; ++k) {
    CHECK(c.alpha_at(k) == c.alpha0 * std::pow(c.q_alpha, k));
    CHECK(c.alpha_at(k + 1) < c.alpha_at(k));
  }
  auto bad = c;
  bad.mu = 0.0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = c;
  bad.beta = 1.5;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = c;
  bad.q_alpha = 1.0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = c;
  bad.tau = 0.0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);

  c.alpha0 = 3.0e-7;
  c.beta = 0.3;
  c.strict_cg = true;
  const auto path = std::filesystem::temp_directory_path() / "eit_config_roundtrip.txt";
  write_key_values(c.to_map(), path);
  const InversionConfig back = InversionConfig::from_map(read_key_values(path));
  CHECK(back.to_map() == c.to_map());
  CHECK(back.alpha0 == c.alpha0);
  std::filesystem::remove(path);

  CHECK(parse_key_values("# comment\n beta = 0.5 \n\nmu=1e-3\n").at("beta") == "0.5");
  CHECK_THROWS_AS(InversionConfig::from_map({{"bogus", "1"}}), std::invalid_argument);
  CHECK_NOTHROW(InversionConfig::from_map({{"bogus", "1"}}, {"bogus"}));
  CHECK_THROWS(InversionConfig::from_map({{"beta", "abc"}}));
}

TEST_CASE("conjugate gradients on a random SPD system") {
  std::mt19937_64 rng(32);
  const Eigen::MatrixXd B = Eigen::MatrixXd::NullaryExpr(40, 40, [&] { return std::normal_distribution<>(0, 1)(rng); });
  const Eigen::MatrixXd A = B * B.transpose() + 0.1 * Eigen::MatrixXd::Identity(40, 40);
  const Eigen::VectorXd b = random_vector(40, rng);
  const CgResult r = conjugate_gradient([&](const Eigen::VectorXd& v) { return Eigen::VectorXd(A * v); }, b, 1e-12, 1000);
  CHECK(r.converged);
  CHECK(rel(r.x, A.ldlt().solve(b)) < 1e-8);
  const CgResult cut = conjugate_gradient([&](const Eigen::VectorXd& v) { return Eigen::VectorXd(A * v); }, b, 1e-12, 2);
  CHECK_FALSE(cut.converged);
  CHECK(cut.iterations == 2);
  const CgResult zero = conjugate_gradient([&](const Eigen::VectorXd& v) { return Eigen::VectorXd(A * v); },
                                           Eigen::VectorXd::Zero(40), 1e-12, 10);
  CHECK(zero.converged);
  CHECK(zero.x.norm() == 0.0);
}

TEST_CASE("matrix-free normal operator equals the explicit matrix") {
  std::mt19937_64 rng(33);
  SmallProblem p;
  const Eigen::MatrixXd J = p.model.jacobian(p.truth);
  const Eigen::MatrixXd Rd(p.R);
  const double c = 3e-3, mu = 1e-4;
  const NormalOperator op(J, p.R, c, mu);
  const Eigen::MatrixXd explicit_matrix =
      J.transpose() * J + c * Rd.transpose() * Rd + mu * Eigen::MatrixXd::Identity(J.cols(), J.cols());
  CHECK((op.dense() - explicit_matrix).cwiseAbs().maxCoeff() <= 1e-10 * explicit_matrix.cwiseAbs().maxCoeff());
  for (int i = 0; i < 5; ++i) {
    const Eigen::VectorXd v = random_vector(J.cols(), rng);
    CHECK(rel(op.apply(v), explicit_matrix * v) < 1e-10);
    CHECK(v.dot(op.apply(v)) > 0.0);
  }
  const Eigen::VectorXd w = Eigen::VectorXd::Constant(p.R.rows(), 2.0);
  const NormalOperator weighted(J, p.R, c, mu, w);
  const Eigen::VectorXd v = random_vector(J.cols(), rng);
  CHECK(rel(weighted.penalty(v), 2.0 * Rd.transpose() * (Rd * v)) < 1e-12);
}

TEST_CASE("Gauss-Newton updates agree with a dense solve") {
  std::mt19937_64 rng(34);
  SmallProblem p;
  const Eigen::Index n = p.mesh->element_count();
  CHECK(n == 64);
  auto sigma = random_field(*p.mesh, rng, 0.2, 0.5);
  const auto lin = p.model.linearize(sigma);
  const Eigen::VectorXd r = p.data - lin.prediction;
  const Eigen::MatrixXd& J = lin.jacobian;
  const Eigen::MatrixXd Rd(p.R);
  const Eigen::MatrixXd H = haar_matrix(p.phi.length());

  InversionConfig config;
  config.alpha0 = 1e-3;
  config.beta = 0.3;
  config.mu = 1e-4;
  SplitBregmanState state;
  state.sigma = sigma;
  state.alpha_k = 2e-3;
  const double ab = state.alpha_k * config.beta;
  const Eigen::MatrixXd A = J.transpose() * J + ab * Rd.transpose() * Rd +
                            config.mu * Eigen::MatrixXd::Identity(n, n);
  const Eigen::VectorXd smooth = ab * Rd.transpose() * (Rd * (sigma.values - p.background.values));

  SUBCASE("transform domain") {
    state.d = random_vector(p.phi.length(), rng);
    state.b_d = random_vector(p.phi.length(), rng);
    const Eigen::VectorXd rhs = J.transpose() * r - smooth -
                                config.mu * (sigma.values + dense_adjoint(H, state.b_d - state.d, n));
    const GnStep step = gn_update_transform(J, r, state, config, p.R, p.phi, p.background);
    CHECK(step.cg.converged);
    CHECK(step.penalty_weight == ab);
    CHECK(rel(step.delta, A.ldlt().solve(rhs)) < 1e-6);
  }
  SUBCASE("space domain") {
    state.d = random_vector(n, rng);
    state.b_d = random_vector(n, rng);
    const Eigen::VectorXd rhs = J.transpose() * r - smooth -
                                config.mu * (sigma.values - p.background.values + state.b_d - state.d);
    const GnStep step = gn_update_space(J, r, state, config, p.R, p.background, p.background);
    CHECK(step.cg.converged);
    CHECK(rel(step.delta, A.ldlt().solve(rhs)) < 1e-6);
  }
  SUBCASE("beta = 0 drops the smoothness term exactly") {
    config.beta = 0.0;
    config.cg_tol = 1e-12;
    config.cg_max = 5000;
    state.d = Eigen::VectorXd::Zero(n);
    state.b_d = Eigen::VectorXd::Zero(n);
    const GnStep step = gn_update_space(J, r, state, config, p.R, sigma, p.background);
    CHECK(step.penalty_weight == 0.0);
    const Eigen::MatrixXd A0 = J.transpose() * J + config.mu * Eigen::MatrixXd::Identity(n, n);
    CHECK(rel(step.delta, A0.ldlt().solve(J.transpose() * r)) < 1e-6);
  }
}

TEST_CASE("already converged start stops at k = 0") {
  SmallProblem p;
  const Eigen::VectorXd data = p.model.predict(p.background);
  const RunOptions opts{p.background.values};
  const auto s1 = run_algorithm1(p.model, data, InversionConfig{}, p.phi, p.R, p.background, opts);
  CHECK(s1.k == 0);
  CHECK(s1.stop == StopReason::Discrepancy);
  CHECK(s1.history.size() == 1);
  CHECK(s1.history[0].relative_error == 0.0);
  const auto s2 = run_algorithm2(p.model, data, InversionConfig{}, p.R, p.background, p.background, opts);
  CHECK(s2.k == 0);
  CHECK(relative_error(s2.sigma.values, p.background.values) == 0.0);
}

TEST_CASE("beta = 1 follows a plain Tikhonov Gauss-Newton loop") {
  SmallProblem p;
  InversionConfig config;
  config.alpha0 = 1e-2;
  config.beta = 1.0;
  config.mu = 1e-10;
  config.tau = 1e-14;  // run every inner iteration
  config.outer_max = 5;
  config.residual_floor = 0.0;
  config.cg_tol = 1e-12;
  config.cg_max = 2000;
  const auto state = run_algorithm1(p.model, p.data, config, p.phi, p.R, p.background);
  REQUIRE(state.k == 5);

  const Eigen::MatrixXd Rd(p.R);
  Eigen::VectorXd sigma = p.background.values;
  for (int k = 0; k < 5; ++k) {
    const auto lin = p.model.linearize(ConductivityField::on(*p.mesh, sigma));
    CHECK(lin.prediction.size() == p.data.size());
    CHECK((p.data - lin.prediction).norm() == doctest::Approx(state.history[k].residual).epsilon(1e-8));
    const double a = config.alpha_at(k);
    const Eigen::MatrixXd A = lin.jacobian.transpose() * lin.jacobian + a * Rd.transpose() * Rd;
    const Eigen::VectorXd rhs = lin.jacobian.transpose() * (p.data - lin.prediction) -
                                a * Rd.transpose() * (Rd * (sigma - p.background.values));
    sigma = (sigma + A.ldlt().solve(rhs)).cwiseMax(config.lambda).cwiseMin(1.0 / config.lambda);
  }
  CHECK(rel(state.sigma.values, sigma) < 1e-10);
}

TEST_CASE("history records every outer iteration") {
  SmallProblem p;
  InversionConfig config;
  config.alpha0 = 1e-2;
  config.outer_max = 4;
  config.strict_cg = false;
  const RunOptions opts{p.truth.values};
  const auto state = run_algorithm1(p.model, p.data, config, p.phi, p.R, p.background, opts);
  REQUIRE(state.history.size() == static_cast<std::size_t>(state.k + 1));
  for (std::size_t i = 0; i < state.history.size(); ++i) {
    const auto& h = state.history[i];
    CHECK(h.k == static_cast<int>(i));
    CHECK(h.alpha == config.alpha_at(h.k));
    CHECK(std::isfinite(h.relative_error));
    if (i > 0) CHECK((h.inner_iters >= 1 && h.inner_iters <= config.inner_max));
  }
  CHECK(state.history.back().residual < state.history.front().residual);
  CHECK(state.sigma.values.minCoeff() >= config.lambda);
  CHECK(state.sigma.values.maxCoeff() <= 1.0 / config.lambda);

  const auto path = std::filesystem::temp_directory_path() / "eit_history.csv";
  write_history_csv(state.history, path);
  std::ifstream in(path);
  std::string header;
  std::getline(in, header);
  CHECK(header == "k,alpha_k,inner_iters,residual,RE");
  int lines = 0;
  for (std::string line; std::getline(in, line);) ++lines;
  CHECK(lines == static_cast<int>(state.history.size()));
  std::filesystem::remove(path);
}

TEST_CASE("runs are bitwise deterministic") {
  SmallProblem p;
  InversionConfig config;
  config.alpha0 = 1e-2;
  config.outer_max = 3;
  const auto a = run_algorithm2(p.model, p.data, config, p.R, p.background, p.background);
  const auto b = run_algorithm2(p.model, p.data, config, p.R, p.background, p.background);
  CHECK((a.sigma.values.array() == b.sigma.values.array()).all());
  REQUIRE(a.history.size() == b.history.size());
  for (std::size_t i = 0; i < a.history.size(); ++i) CHECK(a.history[i].residual == b.history[i].residual);
}

TEST_CASE("space-domain fixed point at the true background") {
  SmallProblem p;
  const Eigen::VectorXd data = p.model.predict(p.background);
  InversionConfig config;
  config.residual_floor = 0.0;
  config.outer_max = 2;
  const auto state = run_algorithm2(p.model, data, config, p.R, p.background, p.background);
  CHECK(rel(state.sigma.values, p.background.values) < 1e-10);
  CHECK(state.d.norm() < 1e-10);
}

TEST_CASE("strict CG turns a missed tolerance into an error with history") {
  SmallProblem p;
  InversionConfig config;
  config.alpha0 = 1e-2;
  config.cg_max = 1;
  config.strict_cg = true;
  try {
    run_algorithm1(p.model, p.data, config, p.phi, p.R, p.background);
    FAIL("expected InversionError");
  } catch (const InversionError& e) {
    CHECK(e.history().size() == 1);
  }
  config.strict_cg = false;
  const auto state = run_algorithm1(p.model, p.data, config, p.phi, p.R, p.background);
  CHECK(state.history[1].cg_failures > 0);
}

TEST_CASE("input validation") {
  SmallProblem p;
  CHECK_THROWS_AS(run_algorithm1(p.model, Eigen::VectorXd::Zero(5), InversionConfig{}, p.phi, p.R, p.background),
                  std::invalid_argument);
  CHECK_THROWS_AS(run_algorithm1(p.model, p.data, InversionConfig{}, HaarTransform(10), p.R, p.background),
                  std::invalid_argument);
  const auto other = ConductivityField::constant(*coarse_mesh(), 0.25);
  CHECK_THROWS_AS(run_algorithm2(p.model, p.data, InversionConfig{}, p.R, other, p.background),
                  std::invalid_argument);
  CHECK(relative_error(Eigen::VectorXd::Zero(3), Eigen::VectorXd::Ones(3)) == 1.0);
}

}
