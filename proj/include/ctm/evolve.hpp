/// @file evolve.hpp
/// @brief Time evolution of the Stokes semigroup and of the hyperbolic system
///        through the modal engine, exact in time for piecewise-linear
///        forcing, plus an independent MAC finite-difference stepper used as
///        a cross-check oracle.
///
/// Controls/forcings are stored as samples on a uniform time grid and
/// interpreted piecewise-linearly; every propagator integrates the Duhamel
/// term panel-exactly (exponential-integrator quadrature), so the only
/// discretization left in the modal path is the PL representation of the
/// forcing itself.
#pragma once

#include <Eigen/Dense>
#include <Eigen/SparseLU>
#include <cmath>
#include <optional>
#include <stdexcept>

#include "ctm/grid.hpp"
#include "ctm/stokes_operator.hpp"

namespace ctm {

/// Uniform grid on [0, T] with `nodes` nodes (nodes-1 panels).
struct TimeGrid {
  double horizon = 1.0;
  int nodes = 257;

  TimeGrid() = default;
  TimeGrid(double T, int n) : horizon(T), nodes(n) {
    if (!(T > 0.0) || n < 2) {
      throw std::invalid_argument("TimeGrid: need T > 0 and >= 2 nodes");
    }
  }
  double dt() const { return horizon / (nodes - 1); }
  double t(int i) const { return horizon * i / (nodes - 1); }
};

namespace detail {

// phi-function style panel integrals, series fallbacks near 0 to avoid
// cancellation.
inline double g0(double z) {  // int_0^1 e^{-z(1-s)} ds
  if (std::abs(z) < 1e-4) return 1.0 - z / 2 + z * z / 6 - z * z * z / 24;
  return -std::expm1(-z) / z;
}
inline double g1(double z) {  // int_0^1 e^{-z(1-s)} s ds
  if (std::abs(z) < 1e-4) return 0.5 - z / 3 + z * z / 8 - z * z * z / 30;
  return (z - 1.0 + std::exp(-z)) / (z * z);
}
inline double trig_m(double th) {  // (1 - cos th)/th^2
  if (std::abs(th) < 1e-4) return 0.5 - th * th / 24;
  return (1.0 - std::cos(th)) / (th * th);
}
inline double trig_r(double th) {  // (th - sin th)/th^2
  if (std::abs(th) < 1e-4) return th / 6 - th * th * th / 120;
  return (th - std::sin(th)) / (th * th);
}

}  // namespace detail

/// One-panel propagation data for the heat kernel e^{lambda t}->e^{-lambda t}.
struct ParabolicPanel {
  double decay;  // e^{-lambda dt}
  double i0;     // weight of the panel's left forcing sample
  double i1;     // weight of the right sample
};

inline ParabolicPanel parabolic_panel(double lambda, double dt) {
  const double z = lambda * dt;
  ParabolicPanel p;
  p.decay = std::exp(-z);
  p.i1 = dt * detail::g1(z);
  p.i0 = dt * detail::g0(z) - p.i1;
  return p;
}

/// One-panel propagation for u'' = -omega^2 u + f: rotation entries plus
/// forcing weights for the (position, velocity) pair.
struct WavePanel {
  double c, s_over_w, ws;  // R(dt) = [[c, s/w], [-w s, c]]
  double s0, s1;           // position-row forcing weights (left/right sample)
  double c0, c1;           // velocity-row forcing weights
};

inline WavePanel wave_panel(double omega, double dt) {
  const double th = omega * dt;
  WavePanel p;
  p.c = std::cos(th);
  p.s_over_w = (omega > 0.0) ? std::sin(th) / omega : dt;
  p.ws = omega * std::sin(th);
  p.s1 = dt / omega * detail::trig_r(th);
  p.s0 = dt * dt * detail::trig_m(th) - p.s1;
  p.c1 = dt * detail::trig_m(th);
  p.c0 = p.s_over_w - p.c1;
  return p;
}

// ---------------------------------------------------------------------------
// Modal states
// ---------------------------------------------------------------------------

/// Parabolic state: velocity field of the Stokes system at time t,
/// represented by modal coefficients; pressure is reconstructed on demand.
struct StokesState {
  double t = 0.0;
  Eigen::VectorXd coeffs;
};

/// Hyperbolic state: (u, u_t) modal coefficient pair.
struct WaveState {
  double t = 0.0;
  Eigen::VectorXd pos;
  Eigen::VectorXd vel;

  /// E(t) = |u_t|_H^2 + ||u||_V^2 in modal coordinates.
  double energy(const Eigen::VectorXd& lambda) const {
    return vel.squaredNorm() +
           (lambda.head(pos.size()).array() * pos.array().square()).sum();
  }
};

// ---------------------------------------------------------------------------
// Modal propagators (exact per panel for PL forcing)
// ---------------------------------------------------------------------------

/// Evolves y' = -lambda y + f modally to time `t` (0 <= t <= grid horizon).
/// `forcing`, when present, holds modal samples (n_modes x nodes), PL in
/// time. Free evolution uses the exact exponential directly.
inline Eigen::VectorXd stokes_evolve_coeffs(const Eigen::VectorXd& lambda,
                                            const Eigen::VectorXd& y0,
                                            const Eigen::MatrixXd* forcing,
                                            const TimeGrid& grid, double t) {
  const int m = static_cast<int>(y0.size());
  if (t < 0.0) throw std::invalid_argument("stokes_evolve: t < 0");
  if (forcing == nullptr) {
    return (-(lambda.head(m).array()) * t).exp() * y0.array();
  }
  if (forcing->rows() != m || forcing->cols() != grid.nodes) {
    throw std::invalid_argument("stokes_evolve: forcing grid mismatch");
  }
  if (t > grid.horizon * (1.0 + 1e-12)) {
    throw std::invalid_argument("stokes_evolve: t beyond forcing horizon");
  }
  const double dt = grid.dt();
  Eigen::VectorXd y(m);
  for (int j = 0; j < m; ++j) {
    const double lam = lambda(j);
    double yj = y0(j);
    int full = static_cast<int>(std::floor(t / dt + 1e-12));
    full = std::min(full, grid.nodes - 1);
    const ParabolicPanel p = parabolic_panel(lam, dt);
    for (int i = 0; i < full; ++i) {
      yj = p.decay * yj + p.i0 * (*forcing)(j, i) + p.i1 * (*forcing)(j, i + 1);
    }
    const double rem = t - full * dt;
    if (rem > 1e-14 * grid.horizon && full < grid.nodes - 1) {
      const ParabolicPanel q = parabolic_panel(lam, rem);
      const double f_left = (*forcing)(j, full);
      const double f_right =
          f_left + ((*forcing)(j, full + 1) - f_left) * (rem / dt);
      yj = q.decay * yj + q.i0 * f_left + q.i1 * f_right;
    }
    y(j) = yj;
  }
  return y;
}

/// Evolves u'' = -lambda u + f to time t; returns (pos, vel) coefficients.
inline WaveState wave_evolve_coeffs(const Eigen::VectorXd& lambda,
                                    const Eigen::VectorXd& u0,
                                    const Eigen::VectorXd& v0,
                                    const Eigen::MatrixXd* forcing,
                                    const TimeGrid& grid, double t) {
  const int m = static_cast<int>(u0.size());
  WaveState out;
  out.t = t;
  out.pos.resize(m);
  out.vel.resize(m);
  const bool neg = t < 0.0;  // group property: free evolution extends to t<0
  if (forcing == nullptr) {
    for (int j = 0; j < m; ++j) {
      const double w = std::sqrt(lambda(j));
      const double c = std::cos(w * t), s = std::sin(w * t);
      out.pos(j) = c * u0(j) + s / w * v0(j);
      out.vel(j) = -w * s * u0(j) + c * v0(j);
    }
    return out;
  }
  if (neg) throw std::invalid_argument("wave_evolve: t < 0 with forcing");
  if (forcing->rows() != m || forcing->cols() != grid.nodes) {
    throw std::invalid_argument("wave_evolve: forcing grid mismatch");
  }
  if (t > grid.horizon * (1.0 + 1e-12)) {
    throw std::invalid_argument("wave_evolve: t beyond forcing horizon");
  }
  const double dt = grid.dt();
  for (int j = 0; j < m; ++j) {
    const double w = std::sqrt(lambda(j));
    const WavePanel p = wave_panel(w, dt);
    double uj = u0(j), vj = v0(j);
    int full = static_cast<int>(std::floor(t / dt + 1e-12));
    full = std::min(full, grid.nodes - 1);
    for (int i = 0; i < full; ++i) {
      const double fl = (*forcing)(j, i), fr = (*forcing)(j, i + 1);
      const double un = p.c * uj + p.s_over_w * vj + p.s0 * fl + p.s1 * fr;
      const double vn = -p.ws * uj + p.c * vj + p.c0 * fl + p.c1 * fr;
      uj = un;
      vj = vn;
    }
    const double rem = t - full * dt;
    if (rem > 1e-14 * grid.horizon && full < grid.nodes - 1) {
      const WavePanel q = wave_panel(w, rem);
      const double fl = (*forcing)(j, full);
      const double fr = fl + ((*forcing)(j, full + 1) - fl) * (rem / dt);
      const double un = q.c * uj + q.s_over_w * vj + q.s0 * fl + q.s1 * fr;
      const double vn = -q.ws * uj + q.c * vj + q.c0 * fl + q.c1 * fr;
      uj = un;
      vj = vn;
    }
    out.pos(j) = uj;
    out.vel(j) = vj;
  }
  return out;
}

/// Whole-trajectory variants: coefficients at every grid node
/// (n_modes x nodes). Marching is panel-exact, so node values coincide with
/// the single-target calls.
inline Eigen::MatrixXd stokes_trajectory(const Eigen::VectorXd& lambda,
                                         const Eigen::VectorXd& y0,
                                         const Eigen::MatrixXd* forcing,
                                         const TimeGrid& grid) {
  const int m = static_cast<int>(y0.size());
  Eigen::MatrixXd out(m, grid.nodes);
  const double dt = grid.dt();
  for (int j = 0; j < m; ++j) {
    const ParabolicPanel p = parabolic_panel(lambda(j), dt);
    double yj = y0(j);
    out(j, 0) = yj;
    for (int i = 1; i < grid.nodes; ++i) {
      double force = 0.0;
      if (forcing != nullptr) {
        force = p.i0 * (*forcing)(j, i - 1) + p.i1 * (*forcing)(j, i);
      }
      yj = p.decay * yj + force;
      out(j, i) = yj;
    }
  }
  return out;
}

/// Terminal-node weights: the linear map from PL forcing samples to the
/// modal state at the grid end. Row j holds the weight of node i in
/// y_j(T) (parabolic) — the discrete Duhamel functional used by the control
/// synthesis, consistent by construction with the propagators above.
inline Eigen::MatrixXd parabolic_terminal_weights(const Eigen::VectorXd& lambda,
                                                  const TimeGrid& grid) {
  const int m = static_cast<int>(lambda.size());
  const int n = grid.nodes;
  const double dt = grid.dt();
  Eigen::MatrixXd W = Eigen::MatrixXd::Zero(m, n);
  for (int j = 0; j < m; ++j) {
    const ParabolicPanel p = parabolic_panel(lambda(j), dt);
    for (int i = 0; i < n; ++i) {
      double w = 0.0;
      if (i > 0) w += std::exp(-lambda(j) * (grid.horizon - grid.t(i))) * p.i1;
      if (i + 1 < n)
        w += std::exp(-lambda(j) * (grid.horizon - grid.t(i + 1))) * p.i0;
      W(j, i) = w;
    }
  }
  return W;
}

/// Same for the wave propagator: weights of node i in u_j(T) and u_t_j(T).
struct WaveTerminalWeights {
  Eigen::MatrixXd pos;  // m x nodes
  Eigen::MatrixXd vel;  // m x nodes
};

inline WaveTerminalWeights wave_terminal_weights(const Eigen::VectorXd& lambda,
                                                 const TimeGrid& grid) {
  const int m = static_cast<int>(lambda.size());
  const int n = grid.nodes;
  const double dt = grid.dt();
  WaveTerminalWeights W;
  W.pos = Eigen::MatrixXd::Zero(m, n);
  W.vel = Eigen::MatrixXd::Zero(m, n);
  for (int j = 0; j < m; ++j) {
    const double w = std::sqrt(lambda(j));
    const WavePanel p = wave_panel(w, dt);
    for (int i = 0; i < n; ++i) {
      double wp = 0.0, wv = 0.0;
      if (i > 0) {
        // rising ramp of panel [t_{i-1}, t_i], propagated from t_i to T
        const double tau = grid.horizon - grid.t(i);
        const double c = std::cos(w * tau), s = std::sin(w * tau);
        wp += c * p.s1 + (s / w) * p.c1;
        wv += -w * s * p.s1 + c * p.c1;
      }
      if (i + 1 < n) {
        const double tau = grid.horizon - grid.t(i + 1);
        const double c = std::cos(w * tau), s = std::sin(w * tau);
        wp += c * p.s0 + (s / w) * p.c0;
        wv += -w * s * p.s0 + c * p.c0;
      }
      W.pos(j, i) = wp;
      W.vel(j, i) = wv;
    }
  }
  return W;
}

namespace detail {
// 8-point Gauss-Legendre rule on [0,1].
inline constexpr double kGlNode[8] = {
    0.01985507175123188, 0.10166676129318664, 0.2372337950418355,
    0.40828267875217505, 0.5917173212478249,  0.7627662049581645,
    0.8983332387068134,  0.9801449282487681};
inline constexpr double kGlWeight[8] = {
    0.05061426814518813, 0.11119051722668724, 0.15685332293894363,
    0.18134189168918097, 0.18134189168918097, 0.15685332293894363,
    0.11119051722668724, 0.05061426814518813};
}  // namespace detail

/// Work integral int_0^T (f(t), u_t(t))_H dt of a PL modal forcing against
/// the trajectory it drives, by per-panel Gauss-Legendre on the exact
/// panel-local solution. Used by the energy-identity checks.
inline double wave_forcing_work(const Eigen::VectorXd& lambda,
                                const Eigen::VectorXd& u0,
                                const Eigen::VectorXd& v0,
                                const Eigen::MatrixXd& forcing,
                                const TimeGrid& grid) {
  const int m = static_cast<int>(u0.size());
  const double dt = grid.dt();
  Eigen::VectorXd u = u0, v = v0;
  Eigen::VectorXd omegas(m);
  for (int j = 0; j < m; ++j) omegas(j) = std::sqrt(lambda(j));
  std::vector<WavePanel> full(m);
  for (int j = 0; j < m; ++j) full[j] = wave_panel(omegas(j), dt);
  double work = 0.0;
  for (int i = 0; i + 1 < grid.nodes; ++i) {
    for (int q = 0; q < 8; ++q) {
      const double tau = detail::kGlNode[q] * dt;
      const double frac = tau / dt;
      double acc = 0.0;
      for (int j = 0; j < m; ++j) {
        const WavePanel p = wave_panel(omegas(j), tau);
        const double fl = forcing(j, i);
        const double fr = fl + (forcing(j, i + 1) - fl) * frac;
        const double vel = -p.ws * u(j) + p.c * v(j) + p.c0 * fl + p.c1 * fr;
        acc += fr * vel;
      }
      work += detail::kGlWeight[q] * dt * acc;
    }
    for (int j = 0; j < m; ++j) {
      const WavePanel& p = full[j];
      const double fl = forcing(j, i), fr = forcing(j, i + 1);
      const double un = p.c * u(j) + p.s_over_w * v(j) + p.s0 * fl + p.s1 * fr;
      const double vn = -p.ws * u(j) + p.c * v(j) + p.c0 * fl + p.c1 * fr;
      u(j) = un;
      v(j) = vn;
    }
  }
  return work;
}

// ---------------------------------------------------------------------------
// MAC finite-difference reference steppers (cross-check oracle, small grids)
// ---------------------------------------------------------------------------

/// Coupled saddle-point steppers: implicit Euler for the parabolic system,
/// implicit midpoint for the hyperbolic one. Both keep the state exactly
/// divergence-free (the pressure is a Lagrange multiplier, not a splitting).
class MacStepper {
 public:
  MacStepper(const StokesOperator& op, double dt)
      : op_(&op), lay_(op.layout()), dt_(dt) {
    build(1.0, euler_);           // I - dt L
    build(0.25 * dt, midpoint_);  // I - (dt^2/4) L
  }

  double dt() const { return dt_; }

  /// One implicit Euler step of y' = Lap y - grad p + f, div y = 0.
  /// On an eigenfield e_j this is exactly the scaling 1/(1 + lambda_j dt).
  VelocityField parabolic_step(const VelocityField& y,
                               const VelocityField* f = nullptr) const {
    Eigen::VectorXd rhs = lay_.pack(y);
    if (f != nullptr) rhs += dt_ * lay_.pack(*f);
    return lay_.unpack(solve(euler_, rhs));
  }

  /// One implicit midpoint step of u'' = Lap u - grad p + f, div u = 0.
  /// Conserves |u_t|_H^2 + ||u||_V^2 exactly for f = 0.
  void hyperbolic_step(VelocityField& u, VelocityField& ut,
                       const VelocityField* f_mid = nullptr) const {
    Eigen::VectorXd uv = lay_.pack(u), wv = lay_.pack(ut);
    Eigen::VectorXd rhs = uv + (dt_ / 2.0) * wv;
    if (f_mid != nullptr) rhs += (dt_ * dt_ / 4.0) * lay_.pack(*f_mid);
    Eigen::VectorXd ubar = solve(midpoint_, rhs);
    Eigen::VectorXd utbar = (2.0 / dt_) * (ubar - uv);
    u = lay_.unpack(2.0 * ubar - uv);
    ut = lay_.unpack(2.0 * utbar - wv);
  }

 private:
  struct System {
    SparseMat mat;
    Eigen::SparseLU<SparseMat> lu;
  };

  void build(double scale, System& sys) {
    // [[I - scale*dt*L, D'] [D, 0]] with the dependent last cell row dropped
    const int n = lay_.n_vel, mc = lay_.n_cell - 1;
    SparseMat ident(n, n);
    ident.setIdentity();
    SparseMat Auu = ident - (scale * dt_) * op_->laplacian();
    SparseMat D = op_->divergence().topRows(mc);
    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(Auu.nonZeros() + 4 * D.nonZeros());
    for (int k = 0; k < Auu.outerSize(); ++k)
      for (SparseMat::InnerIterator it(Auu, k); it; ++it)
        trip.emplace_back(static_cast<int>(it.row()),
                          static_cast<int>(it.col()), it.value());
    for (int k = 0; k < D.outerSize(); ++k)
      for (SparseMat::InnerIterator it(D, k); it; ++it) {
        trip.emplace_back(n + static_cast<int>(it.row()),
                          static_cast<int>(it.col()), it.value());
        trip.emplace_back(static_cast<int>(it.col()),
                          n + static_cast<int>(it.row()), it.value());
      }
    sys.mat = SparseMat(n + mc, n + mc);
    sys.mat.setFromTriplets(trip.begin(), trip.end());
    sys.mat.makeCompressed();
    sys.lu.compute(sys.mat);
    if (sys.lu.info() != Eigen::Success) {
      throw std::runtime_error("MacStepper: factorization failed");
    }
  }

  Eigen::VectorXd solve(const System& sys, const Eigen::VectorXd& rhs_vel) const {
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(sys.mat.rows());
    rhs.head(lay_.n_vel) = rhs_vel;
    Eigen::VectorXd sol = sys.lu.solve(rhs);
    if (sys.lu.info() != Eigen::Success) {
      throw std::runtime_error("MacStepper: solve diverged");
    }
    return sol.head(lay_.n_vel);
  }

  const StokesOperator* op_;
  MacLayout lay_;
  double dt_;
  System euler_, midpoint_;
};

}  // namespace ctm
