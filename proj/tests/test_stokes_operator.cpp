#include <catch2/catch_amalgamated.hpp>

#include <Eigen/Dense>
#include <cmath>

#include "ctm/grid.hpp"
#include "ctm/rng.hpp"
#include "ctm/stokes_operator.hpp"

using namespace ctm;

namespace {

VelocityField random_field(const DomainSpec& d, Rng& rng) {
  VelocityField f(d.nx, d.ny);
  for (int i = 1; i < d.nx; ++i)
    for (int j = 0; j < d.ny; ++j) f.u(i, j) = rng.normal();
  for (int i = 0; i < d.nx; ++i)
    for (int j = 1; j < d.ny; ++j) f.v(i, j) = rng.normal();
  return f;
}

/// Random divergence-free field from random interior stream values.
VelocityField random_solenoidal(const StokesOperator& op, Rng& rng) {
  const MacLayout& L = op.layout();
  Eigen::VectorXd psi(L.n_psi);
  for (int k = 0; k < L.n_psi; ++k) psi(k) = rng.normal();
  return L.unpack(op.curl() * psi);
}

/// Dense KKT oracle: minimize |w - raw|^2 subject to D w = 0 (last row of D
/// dropped; it is linearly dependent on the others).
Eigen::VectorXd dense_projection_oracle(const StokesOperator& op,
                                        const Eigen::VectorXd& raw) {
  const MacLayout& L = op.layout();
  Eigen::MatrixXd D = Eigen::MatrixXd(op.divergence()).topRows(L.n_cell - 1);
  const int n = L.n_vel, m = L.n_cell - 1;
  Eigen::MatrixXd kkt = Eigen::MatrixXd::Zero(n + m, n + m);
  kkt.topLeftCorner(n, n).setIdentity();
  kkt.topRightCorner(n, m) = D.transpose();
  kkt.bottomLeftCorner(m, n) = D;
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n + m);
  rhs.head(n) = raw;
  Eigen::VectorXd sol = kkt.partialPivLu().solve(rhs);
  return sol.head(n);
}

}  // namespace

TEST_CASE("Leray projection annihilates gradients and fixes solenoidal fields") {
  DomainSpec d = build_domain(0.5, 0.15, 16, 16);
  StokesOperator op(d);
  Rng rng(11);

  // raw = discrete gradient of a random scalar -> projection ~ 0
  Eigen::VectorXd phi(op.layout().n_cell);
  for (int k = 0; k < phi.size(); ++k) phi(k) = rng.normal();
  Eigen::VectorXd grad = -op.divergence().transpose() * phi;
  Eigen::VectorXd proj = op.project_vec(grad);
  CHECK(proj.lpNorm<Eigen::Infinity>() <=
        1e-10 * grad.lpNorm<Eigen::Infinity>());

  // solenoidal input is untouched
  VelocityField s = random_solenoidal(op, rng);
  VelocityField ps = op.leray_project(s);
  ps -= s;
  CHECK(ps.max_abs() <= 1e-11 * s.max_abs());
}

TEST_CASE("Leray projection matches dense saddle-point oracle") {
  for (int n : {12, 16}) {
    DomainSpec d = build_domain(0.5, 0.2, n, n);
    StokesOperator op(d);
    Rng rng(5 + n);
    VelocityField raw = random_field(d, rng);
    Eigen::VectorXd got = op.project_vec(op.layout().pack(raw));
    Eigen::VectorXd want = dense_projection_oracle(op, op.layout().pack(raw));
    CHECK((got - want).lpNorm<Eigen::Infinity>() <= 1e-8);
  }
}

TEST_CASE("projection is idempotent and H-orthogonal") {
  DomainSpec d = build_domain(0.5, 0.15, 16, 16);
  StokesOperator op(d);
  Rng rng(23);
  VelocityField raw = random_field(d, rng);
  VelocityField p1 = op.leray_project(raw);
  VelocityField p2 = op.leray_project(p1);
  CHECK(max_divergence(d, p1) <= 1e-10 * p1.max_abs());
  VelocityField diff = p2;
  diff -= p1;
  CHECK(diff.max_abs() <= 1e-10 * p1.max_abs());
  // (raw - P raw, w)_H = 0 for every divergence-free w
  for (int k = 0; k < 5; ++k) {
    VelocityField w = random_solenoidal(op, rng);
    VelocityField res = raw;
    res -= p1;
    const double ip = h_inner(d, res, w);
    CHECK(std::abs(ip) <= 1e-10 * h_norm(d, res) * h_norm(d, w) + 1e-14);
  }
}

TEST_CASE("apply_A is symmetric and negative definite on solenoidal fields") {
  DomainSpec d = build_domain(0.5, 0.15, 16, 16);
  StokesOperator op(d);
  Rng rng(3);
  for (int k = 0; k < 4; ++k) {
    VelocityField a = random_solenoidal(op, rng);
    VelocityField b = random_solenoidal(op, rng);
    VelocityField Aa = op.apply_A(a);
    VelocityField Ab = op.apply_A(b);
    const double lhs = h_inner(d, Aa, b);
    const double rhs = h_inner(d, a, Ab);
    CHECK(std::abs(lhs - rhs) <=
          1e-10 * (std::abs(lhs) + std::abs(rhs) + 1.0));
    CHECK(h_inner(d, Aa, a) < 0.0);
  }
}

TEST_CASE("velocity V-norm equals the Laplacian quadratic form") {
  DomainSpec d = build_domain(0.5, 0.15, 16, 16);
  StokesOperator op(d);
  Rng rng(17);
  VelocityField f = random_field(d, rng);
  Eigen::VectorXd x = op.layout().pack(f);
  const double quad = -x.dot(op.laplacian() * x) * d.cell_area();
  CHECK(v_norm_squared(d, f) == Catch::Approx(quad).epsilon(1e-12));
}

TEST_CASE("modes: ordering, orthonormality, Rayleigh identity, residual") {
  DomainSpec d = build_domain(0.5, 0.15, 24, 24);
  StokesOperator op(d);
  StokesModes modes = eig_modes(op, 60);

  CHECK(modes.lambda(0) > 0.0);
  for (int j = 1; j < modes.count; ++j)
    CHECK(modes.lambda(j) >= modes.lambda(j - 1));

  // Gram matrix in H equals identity
  Eigen::MatrixXd gram =
      modes.fields.transpose() * modes.fields * d.cell_area();
  CHECK((gram - Eigen::MatrixXd::Identity(60, 60)).cwiseAbs().maxCoeff() <=
        1e-10);

  const MacLayout& L = op.layout();
  for (int j : {0, 7, 29, 59}) {
    VelocityField e = L.unpack(modes.fields.col(j));
    CHECK(max_divergence(d, e) <= 1e-10);
    // ||e||_V^2 = lambda |e|_H^2
    CHECK(v_norm_squared(d, e) ==
          Catch::Approx(modes.lambda(j)).epsilon(1e-8));
    // A e + lambda e small
    VelocityField r = op.apply_A(e);
    VelocityField le = e;
    le *= modes.lambda(j);
    r += le;
    CHECK(h_norm(d, r) <= 1e-8 * modes.lambda(j));
  }

  CHECK_THROWS_AS(eig_modes(op, 10000), std::invalid_argument);
}

TEST_CASE("lambda_1 grid convergence and inverse-iteration cross-check") {
  DomainSpec d32 = build_domain(0.5, 0.15, 32, 32);
  StokesOperator op32(d32);
  StokesModes m32 = eig_modes(op32, 1);
  const double dense32 = m32.lambda(0);
  const double inv32 = smallest_stokes_eigenvalue(op32);
  CHECK(inv32 == Catch::Approx(dense32).epsilon(1e-8));

  DomainSpec d64 = build_domain(0.5, 0.15, 64, 64);
  StokesOperator op64(d64);
  const double inv64 = smallest_stokes_eigenvalue(op64);
  CHECK(std::abs(dense32 - inv64) / inv64 < 0.02);
}

TEST_CASE("V' norm: diagonal action and two evaluation routes") {
  DomainSpec d = build_domain(0.5, 0.15, 16, 16);
  StokesOperator op(d);
  StokesModes modes = eig_modes(op, 40);
  const MacLayout& L = op.layout();

  // f = e_j -> 1/lambda_j
  Eigen::VectorXd unit = Eigen::VectorXd::Zero(40);
  unit(5) = 1.0;
  CHECK(modes.vprime_norm_squared_coeffs(unit) ==
        Catch::Approx(1.0 / modes.lambda(5)).epsilon(1e-12));
  CHECK(modes.vprime_norm_squared_coeffs(Eigen::VectorXd::Zero(40)) == 0.0);

  // random field in the mode span: modal sum vs iterative solve route
  Rng rng(41);
  Eigen::VectorXd c(40);
  for (int k = 0; k < 40; ++k) c(k) = rng.normal();
  VelocityField f = modes.synthesize(L, c);
  const double modal = modes.vprime_norm_squared_coeffs(c);
  const double solved = vprime_norm_squared_by_solve(op, f);
  CHECK(modal == Catch::Approx(solved).epsilon(1e-8));
}

TEST_CASE("Poincare chain constants on the mode span") {
  DomainSpec d = build_domain(0.5, 0.15, 16, 16);
  StokesOperator op(d);
  StokesModes modes = eig_modes(op, 40);
  Rng rng(4242);
  for (int k = 0; k < 10; ++k) {
    Eigen::VectorXd c(40);
    for (int j = 0; j < 40; ++j) c(j) = rng.normal();
    const double h2 = c.squaredNorm();
    const double vp2 = modes.vprime_norm_squared_coeffs(c);
    const double v2 = (c.array().square() * modes.lambda.array()).sum();
    const double lam1 = modes.lambda(0);
    CHECK(vp2 <= h2 / lam1 * (1.0 + 1e-12));
    CHECK(h2 <= v2 / lam1 * (1.0 + 1e-12));
  }
}
