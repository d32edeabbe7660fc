#include <catch2/catch_amalgamated.hpp>

#include <Eigen/Dense>
#include <cmath>

#include "ctm/evolve.hpp"
#include "ctm/grid.hpp"
#include "ctm/rng.hpp"
#include "ctm/stokes_operator.hpp"

using namespace ctm;

namespace {

struct Setup {
  DomainSpec dom;
  StokesOperator op;
  StokesModes modes;
  Setup(int n, int M)
      : dom(build_domain(0.5, 0.15, n, n)), op(dom), modes(eig_modes(op, M)) {}
};

Eigen::MatrixXd random_forcing(int m, int nodes, Rng& rng, double scale = 1.0) {
  Eigen::MatrixXd F(m, nodes);
  for (int j = 0; j < m; ++j)
    for (int i = 0; i < nodes; ++i) F(j, i) = scale * rng.normal();
  return F;
}

}  // namespace

TEST_CASE("stokes evolution: identity at t=0 and diagonal free decay") {
  Setup s(16, 20);
  const auto& lam = s.modes.lambda;
  Eigen::VectorXd y0 = Eigen::VectorXd::Zero(20);
  y0(3) = 2.0;
  TimeGrid grid(1.0, 33);
  Eigen::MatrixXd F = Eigen::MatrixXd::Zero(20, 33);
  Eigen::VectorXd at0 = stokes_evolve_coeffs(lam, y0, &F, grid, 0.0);
  CHECK((at0 - y0).lpNorm<Eigen::Infinity>() == 0.0);
  Eigen::VectorXd at = stokes_evolve_coeffs(lam, y0, nullptr, grid, 0.7);
  CHECK(at(3) == Catch::Approx(2.0 * std::exp(-lam(3) * 0.7)).epsilon(1e-14));
  CHECK_THROWS_AS(stokes_evolve_coeffs(lam, y0, nullptr, grid, -0.1),
                  std::invalid_argument);
}

TEST_CASE("free Stokes decay bound |y(t)| <= e^{-lambda_1 t} |y0|") {
  Setup s(16, 30);
  Rng rng(9);
  Eigen::VectorXd y0(30);
  for (int k = 0; k < 30; ++k) y0(k) = rng.normal();
  TimeGrid grid(2.0, 65);
  for (double t : {0.1, 0.5, 1.0, 2.0}) {
    Eigen::VectorXd y = stokes_evolve_coeffs(s.modes.lambda, y0, nullptr, grid, t);
    CHECK(y.norm() <=
          std::exp(-s.modes.lambda(0) * t) * y0.norm() * (1.0 + 1e-12));
  }
}

TEST_CASE("smoothing estimate: V-norm after free decay") {
  // ||y(eps)||_V^2 = sum lambda e^{-2 lambda eps} |y0_j|^2 <= |y0|_H^2/(2 e eps)
  // and a fortiori <= eps e^{2/eps} |y0|_H^2 for eps <= 0.3
  Setup s(16, 40);
  Rng rng(77);
  Eigen::VectorXd y0(40);
  for (int k = 0; k < 40; ++k) y0(k) = rng.normal();
  for (double eps : {0.05, 0.1, 0.2, 0.3}) {
    Eigen::VectorXd y = (-(s.modes.lambda.array()) * eps).exp() * y0.array();
    const double v2 = (s.modes.lambda.array() * y.array().square()).sum();
    const double h2 = y0.squaredNorm();
    CHECK(v2 <= h2 / (2.0 * std::exp(1.0) * eps) * (1.0 + 1e-12));
    CHECK(v2 <= eps * std::exp(2.0 / eps) * h2);
  }
}

TEST_CASE("wave evolution: cosine mode, constant forcing, reversal, energy") {
  Setup s(16, 20);
  const auto& lam = s.modes.lambda;
  const int m = 20;
  TimeGrid grid(2.5, 129);

  // u0 = e_j, u1 = 0, h = 0 -> u(t) = cos(w t) e_j
  Eigen::VectorXd u0 = Eigen::VectorXd::Zero(m), v0 = Eigen::VectorXd::Zero(m);
  u0(2) = 1.0;
  WaveState w1 = wave_evolve_coeffs(lam, u0, v0, nullptr, grid, 1.3);
  CHECK(w1.pos(2) == Catch::Approx(std::cos(std::sqrt(lam(2)) * 1.3)).margin(1e-13));
  CHECK(w1.pos.head(2).lpNorm<Eigen::Infinity>() == 0.0);

  // constant modal forcing c on mode j from rest: u_j(t) = c(1-cos(w t))/lambda
  TimeGrid g2(0.8, 65);
  Eigen::MatrixXd F = Eigen::MatrixXd::Zero(m, 65);
  F.row(5).setConstant(3.0);
  WaveState w2 = wave_evolve_coeffs(lam, Eigen::VectorXd::Zero(m),
                                    Eigen::VectorXd::Zero(m), &F, g2, 0.8);
  const double expect =
      3.0 * (1.0 - std::cos(std::sqrt(lam(5)) * 0.8)) / lam(5);
  CHECK(w2.pos(5) == Catch::Approx(expect).epsilon(1e-12));

  // time reversal (group property)
  Rng rng(1);
  Eigen::VectorXd a(m), b(m);
  for (int k = 0; k < m; ++k) {
    a(k) = rng.normal();
    b(k) = rng.normal();
  }
  WaveState fwd = wave_evolve_coeffs(lam, a, b, nullptr, grid, 1.7);
  WaveState back = wave_evolve_coeffs(lam, fwd.pos, fwd.vel, nullptr, grid, -1.7);
  CHECK((back.pos - a).lpNorm<Eigen::Infinity>() <= 1e-10 * a.lpNorm<Eigen::Infinity>());
  CHECK((back.vel - b).lpNorm<Eigen::Infinity>() <= 1e-10 * b.lpNorm<Eigen::Infinity>());

  // energy conservation over [0, 2.5], free evolution
  WaveState st0;
  st0.pos = a;
  st0.vel = b;
  const double e0 = st0.energy(lam);
  for (double t : {0.5, 1.25, 2.5}) {
    WaveState st = wave_evolve_coeffs(lam, a, b, nullptr, grid, t);
    CHECK(std::abs(st.energy(lam) - e0) <= 1e-10 * e0);
  }
}

TEST_CASE("forced wave energy identity") {
  // E(t)/2 - E(0)/2 = int_0^t (f, u_t) ds, evaluated with fine quadrature
  Setup s(16, 15);
  const auto& lam = s.modes.lambda;
  const int m = 15, nodes = 513;
  TimeGrid grid(2.5, nodes);
  Rng rng(31);
  Eigen::MatrixXd F = random_forcing(m, nodes, rng);
  Eigen::VectorXd u0(m), v0(m);
  for (int k = 0; k < m; ++k) {
    u0(k) = rng.normal();
    v0(k) = rng.normal();
  }
  WaveState end = wave_evolve_coeffs(lam, u0, v0, &F, grid, grid.horizon);
  WaveState init;
  init.pos = u0;
  init.vel = v0;
  const double work = wave_forcing_work(lam, u0, v0, F, grid);
  const double lhs = 0.5 * end.energy(lam) - 0.5 * init.energy(lam);
  const double e0 = init.energy(lam);
  CHECK(std::abs(lhs - work) <= 1e-8 * e0);
}

TEST_CASE("modal stokes vs implicit-Euler MAC stepper: O(dt) error") {
  Setup s(16, 6);
  const MacLayout& lay = s.op.layout();
  Rng rng(12);
  Eigen::VectorXd y0c(6);
  for (int k = 0; k < 6; ++k) y0c(k) = rng.normal();
  VelocityField y0 = s.modes.synthesize(lay, y0c);
  const double T = 0.2;
  TimeGrid grid(T, 2);
  Eigen::VectorXd exact = stokes_evolve_coeffs(s.modes.lambda, y0c, nullptr, grid, T);
  double err_coarse = -1.0, err_fine = -1.0;
  for (int steps : {128, 256}) {
    MacStepper stepper(s.op, T / steps);
    VelocityField y = y0;
    for (int i = 0; i < steps; ++i) y = stepper.parabolic_step(y);
    Eigen::VectorXd got = s.modes.project(lay, y);
    (steps == 128 ? err_coarse : err_fine) = (got - exact).norm();
  }
  const double rate = err_coarse / err_fine;  // O(dt): halving dt halves error
  CHECK(rate > 1.7);
  CHECK(rate < 2.4);
}

TEST_CASE("implicit Euler step on an eigenfield is exact scheme algebra") {
  Setup s(16, 10);
  const MacLayout& lay = s.op.layout();
  const double dt = 0.01;
  MacStepper stepper(s.op, dt);
  VelocityField e = lay.unpack(s.modes.fields.col(4));
  VelocityField y = stepper.parabolic_step(e);
  const double factor = 1.0 / (1.0 + s.modes.lambda(4) * dt);
  VelocityField want = e;
  want *= factor;
  y -= want;
  CHECK(y.max_abs() <= 1e-11);
}

TEST_CASE("implicit midpoint conserves energy; trajectory error O(dt^2)") {
  Setup s(16, 20);
  const MacLayout& lay = s.op.layout();
  Rng rng(8);
  Eigen::VectorXd u0c(20), v0c(20);
  for (int k = 0; k < 20; ++k) {
    u0c(k) = rng.normal();
    v0c(k) = rng.normal();
  }
  VelocityField u = s.modes.synthesize(lay, u0c);
  VelocityField ut = s.modes.synthesize(lay, v0c);

  const double dt = 0.005;
  MacStepper stepper(s.op, dt);
  double e_prev =
      std::pow(h_norm(s.dom, ut), 2) + v_norm_squared(s.dom, u);
  for (int i = 0; i < 20; ++i) {
    stepper.hyperbolic_step(u, ut);
    const double e =
        std::pow(h_norm(s.dom, ut), 2) + v_norm_squared(s.dom, u);
    CHECK(std::abs(e - e_prev) <= 1e-10 * e_prev);
    e_prev = e;
  }

  // refinement: error vs modal solution shrinks at second order
  const double T = 0.2;
  TimeGrid grid(T, 2);
  WaveState exact = wave_evolve_coeffs(s.modes.lambda, u0c, v0c, nullptr, grid, T);
  double prev_err = -1.0;
  for (int steps : {8, 16, 32}) {
    MacStepper st(s.op, T / steps);
    VelocityField uu = s.modes.synthesize(lay, u0c);
    VelocityField vv = s.modes.synthesize(lay, v0c);
    for (int i = 0; i < steps; ++i) st.hyperbolic_step(uu, vv);
    Eigen::VectorXd got = s.modes.project(lay, uu);
    const double err = (got - exact.pos).norm();
    if (prev_err > 0.0) {
      const double rate = prev_err / err;
      CHECK(rate > 3.3);
      CHECK(rate < 4.7);
    }
    prev_err = err;
  }
}

TEST_CASE("terminal weights reproduce the marching propagators") {
  Setup s(16, 12);
  const auto& lam = s.modes.lambda;
  const int m = 12, nodes = 41;
  TimeGrid grid(0.9, nodes);
  Rng rng(55);
  Eigen::MatrixXd F = random_forcing(m, nodes, rng);

  Eigen::MatrixXd Wp = parabolic_terminal_weights(lam, grid);
  Eigen::VectorXd via_weights =
      (Wp.array() * F.array()).rowwise().sum().matrix();
  Eigen::VectorXd via_march = stokes_evolve_coeffs(
      lam, Eigen::VectorXd::Zero(m), &F, grid, grid.horizon);
  CHECK((via_weights - via_march).lpNorm<Eigen::Infinity>() <=
        1e-13 * via_march.lpNorm<Eigen::Infinity>() + 1e-15);

  WaveTerminalWeights Ww = wave_terminal_weights(lam, grid);
  Eigen::VectorXd pos_w = (Ww.pos.array() * F.array()).rowwise().sum().matrix();
  Eigen::VectorXd vel_w = (Ww.vel.array() * F.array()).rowwise().sum().matrix();
  WaveState wm = wave_evolve_coeffs(lam, Eigen::VectorXd::Zero(m),
                                    Eigen::VectorXd::Zero(m), &F, grid,
                                    grid.horizon);
  CHECK((pos_w - wm.pos).lpNorm<Eigen::Infinity>() <=
        1e-12 * wm.pos.lpNorm<Eigen::Infinity>());
  CHECK((vel_w - wm.vel).lpNorm<Eigen::Infinity>() <=
        1e-12 * wm.vel.lpNorm<Eigen::Infinity>());
}
