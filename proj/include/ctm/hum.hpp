/// @file hum.hpp
/// @brief Control synthesis by the Hilbert Uniqueness Method: observation
///        Gramians, conjugate-gradient minimization, exact null control of
///        the hyperbolic system on the filtered mode set, and penalized null
///        control of the Stokes system.
///
/// Controls are piecewise linear on a uniform time grid and take the
/// masked-modal form h(t_i) = 1_omega sum_k mu(k, i) e_k, which is exactly
/// the shape of HUM minimizers (the restriction of an adjoint solution to
/// omega). The synthesis works with the *discrete* control-to-state map --
/// the same panel-exact Duhamel weights the propagators use -- so
/// re-simulating a returned control reproduces its terminal claim to solver
/// precision instead of quadrature precision. The continuous-in-time
/// observation Gramian (Gauss-Legendre in t) is kept alongside for the
/// observability diagnostics; the two operators agree as the control grid is
/// refined.
#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>
#include <string>

#include "ctm/evolve.hpp"
#include "ctm/grid.hpp"
#include "ctm/stokes_operator.hpp"

namespace ctm {

// ---------------------------------------------------------------------------
// Mask Gram matrix
// ---------------------------------------------------------------------------

/// B_{jk} = (1_omega e_j, e_k)_H, rows x cols leading modes.
inline Eigen::MatrixXd mask_gram(const StokesModes& modes, const MacLayout& lay,
                                 const ControlMask& mask, int rows, int cols) {
  if (rows > modes.count || cols > modes.count) {
    throw std::invalid_argument("mask_gram: more modes requested than built");
  }
  VelocityField w(lay.dom.nx, lay.dom.ny);
  w.u = mask.uface;
  w.v = mask.vface;
  Eigen::VectorXd wv = lay.pack(w);
  return modes.fields.leftCols(rows).transpose() *
         (wv.asDiagonal() * modes.fields.leftCols(cols)) *
         (lay.dom.dx * lay.dom.dy);
}

// ---------------------------------------------------------------------------
// Control signal
// ---------------------------------------------------------------------------

/// Piecewise-linear control on [0, T]: per-node velocity fields supported in
/// omega, stored by masked-modal coefficients.
struct ControlSignal {
  TimeGrid grid;
  Eigen::MatrixXd mu;  // mf x nodes
  double cost = 0.0;   // int int_omega |h|^2 (exact for the PL signal)

  int mf() const { return static_cast<int>(mu.rows()); }

  /// Materializes the field at a time node.
  VelocityField field_at_node(const StokesModes& modes, const MacLayout& lay,
                              const ControlMask& mask, int i) const {
    VelocityField f = modes.synthesize(lay, mu.col(i));
    mask.apply(f);
    return f;
  }

  /// Modal forcing samples (P(h 1_omega), e_j) for the rows of B.
  Eigen::MatrixXd modal_forcing(const Eigen::MatrixXd& B) const {
    return B * mu;
  }
};

/// Exact integral of the PL quadratic form: sum over panels of
/// dt/3 (a'Ba + a'Bb + b'Bb).
inline double pl_quadratic_cost(const Eigen::MatrixXd& B,
                                const Eigen::MatrixXd& mu, double dt) {
  double cost = 0.0;
  const int n = static_cast<int>(mu.cols());
  Eigen::VectorXd Ba = B * mu.col(0);
  for (int i = 0; i + 1 < n; ++i) {
    Eigen::VectorXd Bb = B * mu.col(i + 1);
    cost += dt / 3.0 *
            (mu.col(i).dot(Ba) + mu.col(i).dot(Bb) + mu.col(i + 1).dot(Bb));
    Ba.swap(Bb);
  }
  return cost;
}

namespace detail {

/// Tridiagonal PL mass matrix on the uniform grid: diag dt/3 at the ends,
/// 2dt/3 inside, off-diagonal dt/6. Solves Wt X = RHS by the Thomas
/// algorithm (SPD, no pivoting needed).
inline Eigen::MatrixXd pl_mass_solve(int nodes, double dt,
                                     const Eigen::MatrixXd& rhs) {
  const int n = nodes;
  Eigen::VectorXd diag(n), upper(n - 1);
  for (int i = 0; i < n; ++i)
    diag(i) = (i == 0 || i == n - 1) ? dt / 3.0 : 2.0 * dt / 3.0;
  upper.setConstant(dt / 6.0);
  Eigen::MatrixXd x = rhs;
  Eigen::VectorXd c(n - 1);
  // forward sweep
  c(0) = upper(0) / diag(0);
  x.row(0) /= diag(0);
  for (int i = 1; i < n; ++i) {
    const double m = diag(i) - upper(i - 1) * c(i - 1);
    if (i < n - 1) c(i) = upper(i) / m;
    x.row(i) = (x.row(i) - upper(i - 1) * x.row(i - 1)) / m;
  }
  for (int i = n - 2; i >= 0; --i) x.row(i) -= c(i) * x.row(i + 1);
  return x;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Conjugate gradient with Lanczos eigenvalue estimate
// ---------------------------------------------------------------------------

struct CgResult {
  Eigen::VectorXd x;
  int iterations = 0;
  double rel_residual = 0.0;
  double lambda_min_estimate = 0.0;
  double lambda_max_estimate = 0.0;
};

/// CG on an SPD matrix. Throws on max-iteration breach, carrying the
/// residual reached.
inline CgResult cg_solve(const Eigen::MatrixXd& A, const Eigen::VectorXd& b,
                         double tol = 1e-12, int max_iter = -1) {
  const int n = static_cast<int>(b.size());
  if (max_iter < 0) max_iter = 20 * n + 100;
  CgResult out;
  out.x = Eigen::VectorXd::Zero(n);
  const double bnorm = b.norm();
  if (bnorm == 0.0) return out;

  Eigen::VectorXd r = b, p = b;
  double rr = r.squaredNorm();
  std::vector<double> alphas, betas;
  for (int it = 0; it < max_iter; ++it) {
    Eigen::VectorXd Ap = A * p;
    const double pAp = p.dot(Ap);
    if (!(pAp > 0.0)) {
      throw std::runtime_error("cg_solve: operator not positive definite");
    }
    const double alpha = rr / pAp;
    out.x += alpha * p;
    r -= alpha * Ap;
    const double rr_new = r.squaredNorm();
    alphas.push_back(alpha);
    out.iterations = it + 1;
    out.rel_residual = std::sqrt(rr_new) / bnorm;
    if (out.rel_residual <= tol) {
      rr = rr_new;
      break;
    }
    const double beta = rr_new / rr;
    betas.push_back(beta);
    p = r + beta * p;
    rr = rr_new;
  }
  if (out.rel_residual > tol) {
    throw std::runtime_error(
        "cg_solve: no convergence after " + std::to_string(out.iterations) +
        " iterations, relative residual " + std::to_string(out.rel_residual));
  }
  // Lanczos tridiagonal from the CG coefficients -> spectrum estimate.
  const int k = static_cast<int>(alphas.size());
  if (k >= 1) {
    Eigen::MatrixXd Tk = Eigen::MatrixXd::Zero(k, k);
    for (int i = 0; i < k; ++i) {
      double d = 1.0 / alphas[i];
      if (i > 0) d += betas[i - 1] / alphas[i - 1];
      Tk(i, i) = d;
      if (i + 1 < k) {
        const double off = std::sqrt(betas[i]) / alphas[i];
        Tk(i, i + 1) = off;
        Tk(i + 1, i) = off;
      }
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(Tk,
                                                      Eigen::EigenvaluesOnly);
    out.lambda_min_estimate = es.eigenvalues()(0);
    out.lambda_max_estimate = es.eigenvalues()(k - 1);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Observation Gramian (continuous in time, Gauss-Legendre panels)
// ---------------------------------------------------------------------------

enum class Observation { position, velocity };

/// Lambda_{jk} = int_0^T (1_w phi_j, phi_k)_H dt over modal adjoint
/// solutions, as the 2mf x 2mf quadratic form on adjoint data (a; b),
/// phi(t) = sum_j (a_j cos(w_j t) + b_j sin(w_j t)/w_j) e_j.
/// `resolved` reports the relative change when the quadrature points are
/// doubled (flagged when above 1e-8).
struct GramianOperator {
  double horizon = 0.0;
  int mf = 0;
  Observation observe = Observation::position;
  Eigen::MatrixXd mat;  // 2mf x 2mf
  double quad_rel_change = 0.0;
  bool resolved = true;
};

namespace detail {

inline Eigen::MatrixXd wave_gramian_quadrature(const Eigen::VectorXd& lambda,
                                               const Eigen::MatrixXd& B,
                                               double T, int mf,
                                               Observation obs,
                                               int pts_per_period) {
  const double omega_max = std::sqrt(lambda(mf - 1));
  const int panels =
      std::max(4, static_cast<int>(std::ceil(T * omega_max / (2.0 * M_PI) *
                                             pts_per_period / 8.0)));
  const double h = T / panels;
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(2 * mf, 2 * mf);
  Eigen::VectorXd dc(mf), ds(mf);
  const Eigen::MatrixXd Bc = B.topLeftCorner(mf, mf);
  for (int pnl = 0; pnl < panels; ++pnl) {
    for (int q = 0; q < 8; ++q) {
      const double t = (pnl + kGlNode[q]) * h;
      const double w = kGlWeight[q] * h;
      for (int j = 0; j < mf; ++j) {
        const double om = std::sqrt(lambda(j));
        if (obs == Observation::position) {
          dc(j) = std::cos(om * t);
          ds(j) = std::sin(om * t) / om;
        } else {
          dc(j) = -om * std::sin(om * t);
          ds(j) = std::cos(om * t);
        }
      }
      out.topLeftCorner(mf, mf) +=
          w * (Bc.array() * (dc * dc.transpose()).array()).matrix();
      out.topRightCorner(mf, mf) +=
          w * (Bc.array() * (dc * ds.transpose()).array()).matrix();
      out.bottomLeftCorner(mf, mf) +=
          w * (Bc.array() * (ds * dc.transpose()).array()).matrix();
      out.bottomRightCorner(mf, mf) +=
          w * (Bc.array() * (ds * ds.transpose()).array()).matrix();
    }
  }
  return out;
}

}  // namespace detail

inline GramianOperator assemble_wave_gramian(const StokesModes& modes,
                                             const Eigen::MatrixXd& B,
                                             double T, int mf,
                                             Observation obs = Observation::position,
                                             int pts_per_period = 8) {
  if (!(T > 0.0)) throw std::invalid_argument("assemble_wave_gramian: T <= 0");
  if (mf < 1 || mf > modes.count || B.rows() < mf || B.cols() < mf) {
    throw std::invalid_argument("assemble_wave_gramian: bad filter size");
  }
  GramianOperator g;
  g.horizon = T;
  g.mf = mf;
  g.observe = obs;
  g.mat = detail::wave_gramian_quadrature(modes.lambda, B, T, mf, obs,
                                          pts_per_period);
  Eigen::MatrixXd fine = detail::wave_gramian_quadrature(modes.lambda, B, T, mf,
                                                         obs, 2 * pts_per_period);
  g.quad_rel_change =
      (g.mat - fine).cwiseAbs().maxCoeff() / fine.cwiseAbs().maxCoeff();
  g.resolved = g.quad_rel_change <= 1e-8;
  g.mat = fine;  // keep the better of the two
  return g;
}

// ---------------------------------------------------------------------------
// Wave null control (exact on the filtered modes)
// ---------------------------------------------------------------------------

struct WaveControl {
  ControlSignal signal;
  Eigen::VectorXd multiplier;  // dual variable = adjoint datum (2mf)
  double cost = 0.0;
  double terminal_pos = 0.0;  // |u(T)|_H after re-simulation
  double terminal_vel = 0.0;  // |u_t(T)|_H
  int cg_iterations = 0;
  double gramian_lambda_min = 0.0;
};

/// Discrete HUM Gramian for PL controls: with S the map from control
/// samples to the terminal state and M the PL mass (time) x B (space),
/// G = S M^{-1} S' reduces to Hadamard products (Y * B) with
/// Y = W Wt^{-1} W' over the Duhamel node-weight matrices W. SPD whenever
/// the horizon exceeds the empirical control time of the filtered system.
inline Eigen::MatrixXd wave_control_gramian(const Eigen::VectorXd& lambda,
                                            const Eigen::MatrixXd& B, int mf,
                                            const TimeGrid& grid) {
  WaveTerminalWeights W = wave_terminal_weights(lambda.head(mf), grid);
  Eigen::MatrixXd PosT = detail::pl_mass_solve(grid.nodes, grid.dt(),
                                               W.pos.transpose());
  Eigen::MatrixXd VelT = detail::pl_mass_solve(grid.nodes, grid.dt(),
                                               W.vel.transpose());
  const Eigen::MatrixXd Bc = B.topLeftCorner(mf, mf);
  Eigen::MatrixXd G(2 * mf, 2 * mf);
  G.topLeftCorner(mf, mf) = ((W.pos * PosT).array() * Bc.array()).matrix();
  G.topRightCorner(mf, mf) = ((W.pos * VelT).array() * Bc.array()).matrix();
  G.bottomLeftCorner(mf, mf) = G.topRightCorner(mf, mf).transpose();
  G.bottomRightCorner(mf, mf) = ((W.vel * VelT).array() * Bc.array()).matrix();
  G = ((G + G.transpose()) * 0.5).eval();
  return G;
}

/// Null control of u_tt = Au + h 1_omega on the mf lowest modes:
/// u(T) = u_t(T) = 0 exactly for the discrete control-to-state map.
/// Data (u0, u1) as modal coefficients in V x H.
inline WaveControl wave_null_control(const StokesModes& modes,
                                     const Eigen::MatrixXd& B,
                                     const Eigen::VectorXd& u0,
                                     const Eigen::VectorXd& u1, double T,
                                     int nodes = 257, double tol = 1e-4) {
  const int mf = static_cast<int>(u0.size());
  if (u1.size() != mf) throw std::invalid_argument("wave_null_control: data size");
  if (mf > modes.count || B.rows() < mf) {
    throw std::invalid_argument("wave_null_control: filter exceeds built modes");
  }
  const Eigen::VectorXd lam = modes.lambda.head(mf);
  TimeGrid grid(T, nodes);
  Eigen::MatrixXd G = wave_control_gramian(modes.lambda, B, mf, grid);

  // free terminal state
  WaveState free_end = wave_evolve_coeffs(lam, u0, u1, nullptr, grid, T);
  Eigen::VectorXd r(2 * mf);
  r.head(mf) = free_end.pos;
  r.tail(mf) = free_end.vel;

  WaveControl out;
  CgResult cg;
  try {
    cg = cg_solve(G, -r, 1e-13, 400 * mf);
  } catch (const std::runtime_error& e) {
    throw std::runtime_error(
        std::string("wave_null_control: horizon below empirical control time "
                    "(Gramian numerically singular): ") +
        e.what());
  }
  out.multiplier = cg.x;
  out.cg_iterations = cg.iterations;
  out.gramian_lambda_min = cg.lambda_min_estimate;

  // reconstruct the PL control samples: mu = D(nu) Wt^{-1}, where row k of
  // D(nu) = nu_pos_k Wpos(k,:) + nu_vel_k Wvel(k,:)
  WaveTerminalWeights W = wave_terminal_weights(lam, grid);
  Eigen::MatrixXd D = cg.x.head(mf).asDiagonal() * W.pos +
                      cg.x.tail(mf).asDiagonal() * W.vel;
  Eigen::MatrixXd mu =
      detail::pl_mass_solve(grid.nodes, grid.dt(), D.transpose()).transpose();

  out.signal.grid = grid;
  out.signal.mu = mu;
  out.signal.cost = pl_quadratic_cost(B.topLeftCorner(mf, mf), mu, grid.dt());
  out.cost = out.signal.cost;

  // closed loop: re-simulate and record the achieved terminal state
  Eigen::MatrixXd F = B.topLeftCorner(mf, mf) * mu;
  WaveState end = wave_evolve_coeffs(lam, u0, u1, &F, grid, T);
  out.terminal_pos = end.pos.norm();
  out.terminal_vel = end.vel.norm();
  const double data_norm =
      std::sqrt((lam.array() * u0.array().square()).sum()) + u1.norm();
  if (data_norm > 0.0 &&
      std::sqrt(end.pos.squaredNorm() + end.vel.squaredNorm()) >
          tol * data_norm) {
    throw std::runtime_error(
        "wave_null_control: terminal tolerance not met after synthesis");
  }
  return out;
}

// ---------------------------------------------------------------------------
// Direct parabolic null control (penalized HUM)
// ---------------------------------------------------------------------------

struct StokesControl {
  ControlSignal signal;
  Eigen::VectorXd multiplier;  // mf
  double cost = 0.0;
  double eta = 0.0;           // final penalty parameter
  double terminal_h = 0.0;    // |y(T)|_H achieved (= eta |multiplier|)
  int schedule_steps = 0;
};

inline Eigen::MatrixXd parabolic_control_gramian(const Eigen::VectorXd& lambda,
                                                 const Eigen::MatrixXd& B,
                                                 int mf, const TimeGrid& grid) {
  Eigen::MatrixXd W = parabolic_terminal_weights(lambda.head(mf), grid);
  Eigen::MatrixXd WT = detail::pl_mass_solve(grid.nodes, grid.dt(),
                                             W.transpose());
  Eigen::MatrixXd G =
      ((W * WT).array() * B.topLeftCorner(mf, mf).array()).matrix();
  return ((G + G.transpose()) * 0.5).eval();
}

/// Penalized HUM for y_t = Ay + g 1_omega: minimizes cost + (1/eta)|y(T)|^2
/// with eta = 10^{-2k} until |y(T)|_H <= tol |y0|_H on the filtered modes.
/// `eta_override > 0` skips the schedule and solves at that single penalty
/// (used by diagnostics that need matched penalties across horizons).
inline StokesControl stokes_null_control_direct(const StokesModes& modes,
                                                const Eigen::MatrixXd& B,
                                                const Eigen::VectorXd& y0,
                                                double T, int nodes = 257,
                                                double tol = 1e-4,
                                                double eta_override = 0.0) {
  const int mf = static_cast<int>(y0.size());
  if (mf > modes.count || B.rows() < mf) {
    throw std::invalid_argument("stokes_null_control_direct: filter size");
  }
  if (!(T > 0.0)) throw std::invalid_argument("stokes_null_control_direct: T <= 0");
  const Eigen::VectorXd lam = modes.lambda.head(mf);
  TimeGrid grid(T, nodes);
  Eigen::MatrixXd G = parabolic_control_gramian(modes.lambda, B, mf, grid);
  Eigen::VectorXd r = ((-lam.array() * T).exp() * y0.array()).matrix();

  const double y0n = y0.norm();
  StokesControl out;
  if (y0n == 0.0) {
    out.signal.grid = grid;
    out.signal.mu = Eigen::MatrixXd::Zero(mf, nodes);
    return out;
  }

  Eigen::VectorXd nu;
  auto solve_at = [&](double eta) {
    Eigen::MatrixXd Geta = G;
    Geta.diagonal().array() += eta;
    nu = Geta.llt().solve(r);
    out.eta = eta;
    out.terminal_h = eta * nu.norm();  // terminal state is eta*nu exactly
  };
  if (eta_override > 0.0) {
    solve_at(eta_override);
    out.schedule_steps = 1;
  } else {
    for (int k = 1; k <= 15; ++k) {
      solve_at(std::pow(10.0, -2.0 * k));
      out.schedule_steps = k;
      if (out.terminal_h <= tol * y0n) break;
    }
    if (out.terminal_h > tol * y0n) {
      throw std::runtime_error(
          "stokes_null_control_direct: penalty schedule exhausted, terminal "
          "|y(T)|_H = " +
          std::to_string(out.terminal_h) + " (" +
          std::to_string(out.terminal_h / y0n) + " relative)");
    }
  }

  // control x = -M^{-1} S' nu: masked-modal samples mu = -D(nu) Wt^{-1}
  Eigen::MatrixXd W = parabolic_terminal_weights(lam, grid);
  Eigen::MatrixXd D = nu.asDiagonal() * W;
  Eigen::MatrixXd mu =
      -detail::pl_mass_solve(grid.nodes, grid.dt(), D.transpose()).transpose();
  out.multiplier = nu;
  out.signal.grid = grid;
  out.signal.mu = mu;
  out.signal.cost = pl_quadratic_cost(B.topLeftCorner(mf, mf), mu, grid.dt());
  out.cost = out.signal.cost;
  return out;
}

/// |u0|-side norm used by the wave cost bound: ||u0||_V^2 + |u1|_H^2 in
/// modal coordinates.
inline double wave_data_norm_squared(const Eigen::VectorXd& lambda,
                                     const Eigen::VectorXd& u0,
                                     const Eigen::VectorXd& u1) {
  return (lambda.head(u0.size()).array() * u0.array().square()).sum() +
         u1.squaredNorm();
}

}  // namespace ctm
