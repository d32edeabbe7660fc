/// @file stokes_operator.hpp
/// @brief Discrete Stokes operator A = P(Lap) on the MAC grid:
///        Leray projector via a pressure Poisson solve, symmetric
///        eigendecomposition of -A restricted to the discretely
///        divergence-free subspace, boundary normal-derivative traces.
///
/// The divergence-free subspace with vanishing normal trace is exactly the
/// range of the discrete curl of interior stream-function values, so the
/// eigenproblem is solved in stream coordinates as the generalized symmetric
/// problem  (-C' L C) x = lambda (C' C) x  (uniform cell weights cancel).
/// That keeps every mode divergence-free to machine precision and makes the
/// projector, the Rayleigh identity and H-orthonormality exact by
/// construction rather than by tolerance.
#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include <stdexcept>
#include <vector>

#include "ctm/grid.hpp"

namespace ctm {

using SparseMat = Eigen::SparseMatrix<double>;

/// Index maps between MAC fields and stacked interior-DOF vectors.
/// u DOFs: i in [1, nx-1], j in [0, ny-1]; v DOFs: i in [0, nx-1],
/// j in [1, ny-1]; wall values are identically zero and never stored.
struct MacLayout {
  DomainSpec dom;
  int n_u = 0, n_v = 0, n_vel = 0, n_cell = 0, n_psi = 0;

  explicit MacLayout(const DomainSpec& d) : dom(d) {
    n_u = (d.nx - 1) * d.ny;
    n_v = d.nx * (d.ny - 1);
    n_vel = n_u + n_v;
    n_cell = d.nx * d.ny;
    n_psi = (d.nx - 1) * (d.ny - 1);
  }

  int u_index(int i, int j) const { return (i - 1) * dom.ny + j; }
  int v_index(int i, int j) const { return n_u + i * (dom.ny - 1) + (j - 1); }
  int cell_index(int i, int j) const { return i * dom.ny + j; }
  int psi_index(int i, int j) const { return (i - 1) * (dom.ny - 1) + (j - 1); }

  Eigen::VectorXd pack(const VelocityField& f) const {
    Eigen::VectorXd x(n_vel);
    for (int i = 1; i < dom.nx; ++i)
      for (int j = 0; j < dom.ny; ++j) x(u_index(i, j)) = f.u(i, j);
    for (int i = 0; i < dom.nx; ++i)
      for (int j = 1; j < dom.ny; ++j) x(v_index(i, j)) = f.v(i, j);
    return x;
  }

  VelocityField unpack(const Eigen::VectorXd& x) const {
    VelocityField f(dom.nx, dom.ny);
    for (int i = 1; i < dom.nx; ++i)
      for (int j = 0; j < dom.ny; ++j) f.u(i, j) = x(u_index(i, j));
    for (int i = 0; i < dom.nx; ++i)
      for (int j = 1; j < dom.ny; ++j) f.v(i, j) = x(v_index(i, j));
    return f;
  }
};

namespace detail {

/// Five-point vector Laplacian on interior velocity DOFs with Dirichlet
/// closure: normal components have exact wall nodes, tangential components
/// use mirrored ghosts (ghost = -interior), which adds -2/h^2 on the
/// wall-adjacent diagonal. Symmetric negative definite.
inline SparseMat assemble_laplacian(const MacLayout& L) {
  const DomainSpec& d = L.dom;
  const double ax = 1.0 / (d.dx * d.dx), ay = 1.0 / (d.dy * d.dy);
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(static_cast<size_t>(L.n_vel) * 5);
  for (int i = 1; i < d.nx; ++i) {
    for (int j = 0; j < d.ny; ++j) {
      const int r = L.u_index(i, j);
      double diag = -2.0 * ax - 2.0 * ay;
      if (i > 1) trip.emplace_back(r, L.u_index(i - 1, j), ax);
      if (i < d.nx - 1) trip.emplace_back(r, L.u_index(i + 1, j), ax);
      if (j > 0)
        trip.emplace_back(r, L.u_index(i, j - 1), ay);
      else
        diag -= ay;  // ghost = -u(i,0)
      if (j < d.ny - 1)
        trip.emplace_back(r, L.u_index(i, j + 1), ay);
      else
        diag -= ay;
      trip.emplace_back(r, r, diag);
    }
  }
  for (int i = 0; i < d.nx; ++i) {
    for (int j = 1; j < d.ny; ++j) {
      const int r = L.v_index(i, j);
      double diag = -2.0 * ax - 2.0 * ay;
      if (j > 1) trip.emplace_back(r, L.v_index(i, j - 1), ay);
      if (j < d.ny - 1) trip.emplace_back(r, L.v_index(i, j + 1), ay);
      if (i > 0)
        trip.emplace_back(r, L.v_index(i - 1, j), ax);
      else
        diag -= ax;
      if (i < d.nx - 1)
        trip.emplace_back(r, L.v_index(i + 1, j), ax);
      else
        diag -= ax;
      trip.emplace_back(r, r, diag);
    }
  }
  SparseMat A(L.n_vel, L.n_vel);
  A.setFromTriplets(trip.begin(), trip.end());
  return A;
}

/// Cell divergence of interior DOFs (wall contributions are zero).
inline SparseMat assemble_divergence(const MacLayout& L) {
  const DomainSpec& d = L.dom;
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(static_cast<size_t>(L.n_cell) * 4);
  for (int i = 0; i < d.nx; ++i) {
    for (int j = 0; j < d.ny; ++j) {
      const int r = L.cell_index(i, j);
      if (i + 1 < d.nx) trip.emplace_back(r, L.u_index(i + 1, j), 1.0 / d.dx);
      if (i > 0) trip.emplace_back(r, L.u_index(i, j), -1.0 / d.dx);
      if (j + 1 < d.ny) trip.emplace_back(r, L.v_index(i, j + 1), 1.0 / d.dy);
      if (j > 0) trip.emplace_back(r, L.v_index(i, j), -1.0 / d.dy);
    }
  }
  SparseMat D(L.n_cell, L.n_vel);
  D.setFromTriplets(trip.begin(), trip.end());
  return D;
}

/// Curl of interior stream values (vertex-based, zero on the boundary):
/// u = d(psi)/dy, v = -d(psi)/dx. Exactly divergence-free.
inline SparseMat assemble_curl(const MacLayout& L) {
  const DomainSpec& d = L.dom;
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(static_cast<size_t>(L.n_vel) * 2);
  for (int i = 1; i < d.nx; ++i) {
    for (int j = 0; j < d.ny; ++j) {
      const int r = L.u_index(i, j);
      if (j + 1 < d.ny) trip.emplace_back(r, L.psi_index(i, j + 1), 1.0 / d.dy);
      if (j > 0) trip.emplace_back(r, L.psi_index(i, j), -1.0 / d.dy);
    }
  }
  for (int i = 0; i < d.nx; ++i) {
    for (int j = 1; j < d.ny; ++j) {
      const int r = L.v_index(i, j);
      if (i + 1 < d.nx) trip.emplace_back(r, L.psi_index(i + 1, j), -1.0 / d.dx);
      if (i > 0) trip.emplace_back(r, L.psi_index(i, j), 1.0 / d.dx);
    }
  }
  SparseMat C(L.n_vel, L.n_psi);
  C.setFromTriplets(trip.begin(), trip.end());
  return C;
}

}  // namespace detail

/// Assembled MAC operators plus the factored pressure Poisson problem.
/// All apply/solve operations are const and reentrant.
class StokesOperator {
 public:
  explicit StokesOperator(const DomainSpec& d)
      : layout_(d),
        lap_(detail::assemble_laplacian(layout_)),
        div_(detail::assemble_divergence(layout_)),
        curl_(detail::assemble_curl(layout_)) {
    // Pressure Poisson matrix D D' is the Neumann five-point Laplacian on
    // cells, singular with constant nullspace; pin the last cell.
    SparseMat ddt = (div_ * SparseMat(div_.transpose())).pruned();
    const int n = layout_.n_cell - 1;
    pinned_ = ddt.topLeftCorner(n, n);
    pinned_.makeCompressed();
    poisson_.compute(pinned_);
    if (poisson_.info() != Eigen::Success) {
      throw std::runtime_error(
          "StokesOperator: pressure Poisson factorization failed");
    }
  }

  const MacLayout& layout() const { return layout_; }
  const DomainSpec& domain() const { return layout_.dom; }
  const SparseMat& laplacian() const { return lap_; }
  const SparseMat& divergence() const { return div_; }
  const SparseMat& curl() const { return curl_; }

  /// Solves D D' phi = -D w; returns phi with zero mean (the projection
  /// potential: (I - P) w = G phi with G = -D').
  Eigen::VectorXd projection_potential(const Eigen::VectorXd& w) const {
    Eigen::VectorXd rhs = -(div_ * w);
    Eigen::VectorXd phi = Eigen::VectorXd::Zero(layout_.n_cell);
    phi.head(layout_.n_cell - 1) = poisson_.solve(rhs.head(layout_.n_cell - 1));
    if (poisson_.info() != Eigen::Success) {
      throw std::runtime_error("StokesOperator: pressure Poisson solve failed");
    }
    phi.array() -= phi.mean();
    return phi;
  }

  Eigen::VectorXd project_vec(const Eigen::VectorXd& w) const {
    Eigen::VectorXd phi = projection_potential(w);
    return w + div_.transpose() * phi;  // w - G phi, G = -D'
  }

  /// H-orthogonal projection onto divergence-free fields.
  VelocityField leray_project(const VelocityField& raw) const {
    require_same_shape(domain(), raw, "leray_project");
    return layout_.unpack(project_vec(layout_.pack(raw)));
  }

  /// Scalar potential of the removed gradient part, zero-mean gauge.
  PressureField projection_pressure(const VelocityField& raw) const {
    Eigen::VectorXd phi = projection_potential(layout_.pack(raw));
    PressureField p(domain().nx, domain().ny);
    for (int i = 0; i < domain().nx; ++i)
      for (int j = 0; j < domain().ny; ++j)
        p(i, j) = phi(layout_.cell_index(i, j));
    return p;
  }

  Eigen::VectorXd apply_A_vec(const Eigen::VectorXd& u) const {
    return project_vec(lap_ * u);
  }

  /// A u = P(Lap u); symmetric and negative definite on divergence-free u.
  VelocityField apply_A(const VelocityField& u) const {
    require_same_shape(domain(), u, "apply_A");
    return layout_.unpack(apply_A_vec(layout_.pack(u)));
  }

 private:
  MacLayout layout_;
  SparseMat lap_, div_, curl_;
  SparseMat pinned_;
  Eigen::SimplicialLDLT<SparseMat> poisson_;
};

// ---------------------------------------------------------------------------
// Boundary normal-derivative traces
// ---------------------------------------------------------------------------

/// One-sided second-order normal derivatives of both velocity components,
/// sampled along the four walls. Normal components have an exact wall node;
/// tangential ones are fit through the wall zero at half-cell offsets.
struct BoundaryGeometry {
  Eigen::VectorXd weight;  // arc-length quadrature weight per sample
  Eigen::VectorXd x, y;    // sample position on the wall
  Eigen::VectorXd nux, nuy;  // outward normal at the sample
  int count() const { return static_cast<int>(weight.size()); }
};

namespace detail {

struct TraceSample {
  double w, x, y, nux, nuy;
  // linear functional on packed velocity DOFs
  std::vector<std::pair<int, double>> lin;
};

inline std::vector<TraceSample> trace_samples(const MacLayout& L) {
  const DomainSpec& d = L.dom;
  std::vector<TraceSample> out;
  const double hw = d.half_width;
  auto lin_or_zero = [&](int idx, double c) { return std::pair<int, double>{idx, c}; };
  // left / right walls: u is the normal component (exact wall node),
  // v is tangential (nodes at dx/2 and 3dx/2 from the wall).
  for (int j = 0; j < d.ny; ++j) {
    // du/dnu ~ (-3u(0)+4u(1)-u(2))/(2dx), u(0)=0
    TraceSample sl{d.dy, -hw, d.y_center(j), -1.0, 0.0, {}};
    sl.lin = {lin_or_zero(L.u_index(1, j), 4.0 / (2.0 * d.dx)),
              lin_or_zero(L.u_index(2, j), -1.0 / (2.0 * d.dx))};
    out.push_back(sl);
    TraceSample sr{d.dy, hw, d.y_center(j), 1.0, 0.0, {}};
    sr.lin = {lin_or_zero(L.u_index(d.nx - 1, j), 4.0 / (2.0 * d.dx)),
              lin_or_zero(L.u_index(d.nx - 2, j), -1.0 / (2.0 * d.dx))};
    out.push_back(sr);
  }
  for (int j = 1; j < d.ny; ++j) {
    // dv/dnu from v at dx/2, 3dx/2 and wall value 0: (9 v1 - v2)/(3 dx)
    TraceSample sl{d.dy, -hw, d.y_face(j), -1.0, 0.0, {}};
    sl.lin = {lin_or_zero(L.v_index(0, j), 9.0 / (3.0 * d.dx)),
              lin_or_zero(L.v_index(1, j), -1.0 / (3.0 * d.dx))};
    out.push_back(sl);
    TraceSample sr{d.dy, hw, d.y_face(j), 1.0, 0.0, {}};
    sr.lin = {lin_or_zero(L.v_index(d.nx - 1, j), 9.0 / (3.0 * d.dx)),
              lin_or_zero(L.v_index(d.nx - 2, j), -1.0 / (3.0 * d.dx))};
    out.push_back(sr);
  }
  // bottom / top walls: v normal, u tangential
  for (int i = 0; i < d.nx; ++i) {
    TraceSample sb{d.dx, d.x_center(i), -hw, 0.0, -1.0, {}};
    sb.lin = {lin_or_zero(L.v_index(i, 1), 4.0 / (2.0 * d.dy)),
              lin_or_zero(L.v_index(i, 2), -1.0 / (2.0 * d.dy))};
    out.push_back(sb);
    TraceSample st{d.dx, d.x_center(i), hw, 0.0, 1.0, {}};
    st.lin = {lin_or_zero(L.v_index(i, d.ny - 1), 4.0 / (2.0 * d.dy)),
              lin_or_zero(L.v_index(i, d.ny - 2), -1.0 / (2.0 * d.dy))};
    out.push_back(st);
  }
  for (int i = 1; i < d.nx; ++i) {
    TraceSample sb{d.dx, d.x_face(i), -hw, 0.0, -1.0, {}};
    sb.lin = {lin_or_zero(L.u_index(i, 0), 9.0 / (3.0 * d.dy)),
              lin_or_zero(L.u_index(i, 1), -1.0 / (3.0 * d.dy))};
    out.push_back(sb);
    TraceSample st{d.dx, d.x_face(i), hw, 0.0, 1.0, {}};
    st.lin = {lin_or_zero(L.u_index(i, d.ny - 1), 9.0 / (3.0 * d.dy)),
              lin_or_zero(L.u_index(i, d.ny - 2), -1.0 / (3.0 * d.dy))};
    out.push_back(st);
  }
  return out;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Modes
// ---------------------------------------------------------------------------

/// Eigendecomposition of -A on the divergence-free subspace: eigenvalues
/// ascending (all positive), eigenfields H-orthonormal, with precomputed
/// boundary normal-derivative traces. Immutable after construction.
struct StokesModes {
  DomainSpec dom;
  int count = 0;
  Eigen::VectorXd lambda;   // count
  Eigen::MatrixXd fields;   // n_vel x count (packed interior DOFs)
  Eigen::MatrixXd traces;   // n_trace x count
  BoundaryGeometry bdry;

  double omega(int j) const { return std::sqrt(lambda(j)); }

  /// H-inner product coefficients of an arbitrary packed field.
  Eigen::VectorXd project_vec(const Eigen::VectorXd& w) const {
    return fields.transpose() * (w * (dom.dx * dom.dy));
  }
  Eigen::VectorXd project(const MacLayout& lay, const VelocityField& f) const {
    return project_vec(lay.pack(f));
  }
  Eigen::VectorXd synth_vec(const Eigen::VectorXd& coeffs) const {
    return fields.leftCols(coeffs.size()) * coeffs;
  }
  VelocityField synthesize(const MacLayout& lay,
                           const Eigen::VectorXd& coeffs) const {
    return lay.unpack(synth_vec(coeffs));
  }

  /// ||f||_{V'}^2 over retained modes: sum of coeff^2 / lambda.
  double vprime_norm_squared_coeffs(const Eigen::VectorXd& coeffs) const {
    return (coeffs.array().square() / lambda.head(coeffs.size()).array()).sum();
  }

  /// Boundary flux integral of the field with modal coefficients c:
  /// int_wall (d phi/d nu)^2 ds, both components.
  double boundary_flux(const Eigen::VectorXd& c) const {
    Eigen::VectorXd t = traces.leftCols(c.size()) * c;
    return (t.array().square() * bdry.weight.array()).sum();
  }
};

/// Dense symmetric eigensolve in stream coordinates. One-time cost per grid;
/// modes are reused (and can be persisted) across experiments.
inline StokesModes eig_modes(const StokesOperator& op, int M) {
  const MacLayout& L = op.layout();
  if (M < 1 || M > L.n_psi) {
    throw std::invalid_argument("eig_modes: M out of range (subspace dim " +
                                std::to_string(L.n_psi) + ")");
  }
  const double w = L.dom.dx * L.dom.dy;
  SparseMat Ct = op.curl().transpose();
  Eigen::MatrixXd K = Eigen::MatrixXd(Ct * op.laplacian() * op.curl()) * (-w);
  Eigen::MatrixXd G = Eigen::MatrixXd(Ct * op.curl()) * w;
  K = ((K + K.transpose()) * 0.5).eval();
  G = ((G + G.transpose()) * 0.5).eval();
  Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> es(K, G);
  if (es.info() != Eigen::Success) {
    throw std::runtime_error("eig_modes: eigensolver failed");
  }
  StokesModes m;
  m.dom = L.dom;
  m.count = M;
  m.lambda = es.eigenvalues().head(M);
  m.fields = op.curl() * es.eigenvectors().leftCols(M);
  auto samples = detail::trace_samples(L);
  const int ns = static_cast<int>(samples.size());
  m.bdry.weight.resize(ns);
  m.bdry.x.resize(ns);
  m.bdry.y.resize(ns);
  m.bdry.nux.resize(ns);
  m.bdry.nuy.resize(ns);
  m.traces = Eigen::MatrixXd::Zero(ns, M);
  for (int s = 0; s < ns; ++s) {
    m.bdry.weight(s) = samples[s].w;
    m.bdry.x(s) = samples[s].x;
    m.bdry.y(s) = samples[s].y;
    m.bdry.nux(s) = samples[s].nux;
    m.bdry.nuy(s) = samples[s].nuy;
    for (const auto& [idx, coef] : samples[s].lin) {
      m.traces.row(s) += coef * m.fields.row(idx);
    }
  }
  return m;
}

/// Smallest eigenvalue of -A by inverse power iteration (independent of the
/// dense path; also the cheap route on fine grids).
inline double smallest_stokes_eigenvalue(const StokesOperator& op,
                                         int max_iter = 500,
                                         double tol = 1e-12) {
  const MacLayout& L = op.layout();
  const double w = L.dom.dx * L.dom.dy;
  SparseMat Ct = op.curl().transpose();
  SparseMat K = SparseMat(Ct * op.laplacian() * op.curl()) * (-w);
  SparseMat G = SparseMat(Ct * op.curl()) * w;
  Eigen::SimplicialLDLT<SparseMat> solver(K);
  if (solver.info() != Eigen::Success) {
    throw std::runtime_error("smallest_stokes_eigenvalue: factorization failed");
  }
  Eigen::VectorXd x = Eigen::VectorXd::Ones(L.n_psi);
  double lam = 0.0;
  for (int it = 0; it < max_iter; ++it) {
    Eigen::VectorXd y = solver.solve(G * x);
    y /= std::sqrt(y.dot(G * y));
    const double lam_new = y.dot(K * y) / y.dot(G * y);
    x.swap(y);
    if (it > 0 && std::abs(lam_new - lam) <= tol * std::abs(lam_new)) {
      return lam_new;
    }
    lam = lam_new;
  }
  return lam;
}

/// V' norm by the iterative route: solve (-A) psi = f in stream coordinates
/// and return (f, psi)_H. Cross-checks the modal sum.
inline double vprime_norm_squared_by_solve(const StokesOperator& op,
                                           const VelocityField& f) {
  const MacLayout& L = op.layout();
  const double w = L.dom.dx * L.dom.dy;
  SparseMat Ct = op.curl().transpose();
  SparseMat K = SparseMat(Ct * op.laplacian() * op.curl()) * (-w);
  Eigen::VectorXd fv = L.pack(f);
  Eigen::VectorXd rhs = (Ct * fv) * w;
  Eigen::ConjugateGradient<SparseMat, Eigen::Lower | Eigen::Upper> cg;
  cg.setTolerance(1e-13);
  cg.setMaxIterations(20000);
  cg.compute(K);
  Eigen::VectorXd x = cg.solve(rhs);
  if (cg.info() != Eigen::Success) {
    throw std::runtime_error("vprime_norm_by_solve: CG did not converge");
  }
  return (op.curl() * x).dot(fv) * w;
}

}  // namespace ctm
