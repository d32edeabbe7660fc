/// @file grid.hpp
/// @brief Square domain geometry, boundary-collar control region, MAC fields
///        and discrete norms.
///
/// The domain is the centered square [-h, h]^2 (h = half_width), star-shaped
/// with respect to the origin: x . nu(x) = h on every wall, so gamma = h and
/// R0 = sqrt(2) h (attained at the corners). The control region omega is the
/// collar of cells within `collar_width` of the boundary.
///
/// Field layout (MAC / staggered):
///   - pressure / scalar fields at cell centers, nx x ny
///   - u velocity on vertical faces, (nx+1) x ny
///   - v velocity on horizontal faces, nx x (ny+1)
/// Homogeneous Dirichlet conditions: normal components sit exactly on the
/// wall (u(0,j) = u(nx,j) = 0), tangential components are closed with ghost
/// values mirrored through the wall.
#pragma once

#include <Eigen/Core>
#include <cmath>
#include <stdexcept>
#include <string>

namespace ctm {

struct DomainSpec {
  double half_width = 0.5;
  double collar_width = 0.15;
  int nx = 32;
  int ny = 32;
  double dx = 0.0;
  double dy = 0.0;

  // cell centers
  double x_center(int i) const { return -half_width + (i + 0.5) * dx; }
  double y_center(int j) const { return -half_width + (j + 0.5) * dy; }
  // face coordinates (u lives at x_face, y_center; v at x_center, y_face)
  double x_face(int i) const { return -half_width + i * dx; }
  double y_face(int j) const { return -half_width + j * dy; }

  double area() const { return 4.0 * half_width * half_width; }
  double cell_area() const { return dx * dy; }

  /// Distance to the boundary (nonnegative inside the square).
  double boundary_distance(double x, double y) const {
    return std::min(half_width - std::abs(x), half_width - std::abs(y));
  }
  bool in_collar(double x, double y) const {
    return boundary_distance(x, y) <= collar_width;
  }

  /// R0 = max |x| over the closed square (corner value).
  double r0() const { return std::sqrt(2.0) * half_width; }
  /// R0 evaluated on the grid: max |x| over cell centers.
  double r0_grid() const {
    const double cx = std::abs(x_center(nx - 1));
    const double cy = std::abs(y_center(ny - 1));
    return std::hypot(cx, cy);
  }
  /// Star-shape constant: x . nu(x) on the walls of the centered square.
  double star_gamma() const { return half_width; }
};

/// Validates parameters and fills in mesh sizes.
/// Rejects collars thinner than two cells: the cell mask would miss the
/// collar entirely at coarse resolution.
inline DomainSpec build_domain(double half_width, double collar_width, int nx,
                               int ny) {
  if (nx < 8 || ny < 8) {
    throw std::invalid_argument("build_domain: nx, ny must be >= 8");
  }
  if (!(collar_width > 0.0) || !(collar_width < half_width)) {
    throw std::invalid_argument(
        "build_domain: need 0 < collar_width < half_width");
  }
  DomainSpec d;
  d.half_width = half_width;
  d.collar_width = collar_width;
  d.nx = nx;
  d.ny = ny;
  d.dx = 2.0 * half_width / nx;
  d.dy = 2.0 * half_width / ny;
  if (collar_width < 2.0 * std::max(d.dx, d.dy)) {
    throw std::invalid_argument(
        "build_domain: collar thinner than 2 cells on this grid");
  }
  return d;
}

// ---------------------------------------------------------------------------
// Fields
// ---------------------------------------------------------------------------

/// Cell-centered scalar field (pressure, masks, test patterns).
struct ScalarField {
  ScalarField() = default;
  ScalarField(int nx, int ny) : values(Eigen::ArrayXXd::Zero(nx, ny)) {}
  Eigen::ArrayXXd values;  // (nx, ny)

  int nx() const { return static_cast<int>(values.rows()); }
  int ny() const { return static_cast<int>(values.cols()); }
  double& operator()(int i, int j) { return values(i, j); }
  double operator()(int i, int j) const { return values(i, j); }

  /// Subtracts the mean (pressure gauge fix).
  void remove_mean() { values -= values.mean(); }
};

using PressureField = ScalarField;

/// MAC velocity field. u on vertical faces, v on horizontal faces.
struct VelocityField {
  VelocityField() = default;
  VelocityField(int nx, int ny)
      : u(Eigen::ArrayXXd::Zero(nx + 1, ny)),
        v(Eigen::ArrayXXd::Zero(nx, ny + 1)) {}
  Eigen::ArrayXXd u;  // (nx+1, ny)
  Eigen::ArrayXXd v;  // (nx, ny+1)

  int nx() const { return static_cast<int>(v.rows()); }
  int ny() const { return static_cast<int>(u.cols()); }

  VelocityField& operator+=(const VelocityField& o) {
    u += o.u;
    v += o.v;
    return *this;
  }
  VelocityField& operator-=(const VelocityField& o) {
    u -= o.u;
    v -= o.v;
    return *this;
  }
  VelocityField& operator*=(double a) {
    u *= a;
    v *= a;
    return *this;
  }

  /// Max |value| over both components.
  double max_abs() const {
    return std::max(u.abs().maxCoeff(), v.abs().maxCoeff());
  }
};

inline void require_same_shape(const DomainSpec& d, const ScalarField& f,
                               const char* who) {
  if (f.nx() != d.nx || f.ny() != d.ny) {
    throw std::invalid_argument(std::string(who) + ": field/grid shape mismatch");
  }
}
inline void require_same_shape(const DomainSpec& d, const VelocityField& f,
                               const char* who) {
  if (f.nx() != d.nx || f.ny() != d.ny) {
    throw std::invalid_argument(std::string(who) + ": field/grid shape mismatch");
  }
}

// ---------------------------------------------------------------------------
// Control mask
// ---------------------------------------------------------------------------

/// Indicator of the control collar, sampled at cell centers (the stored
/// representation) and at face centers (for application to MAC fields).
/// Sharp by default; `smooth_width > 0` ramps the weight from 1 at
/// collar - smooth_width down to 0 at the inner edge with a squared
/// smoothstep, keeping |grad w|^2 / w bounded.
struct ControlMask {
  Eigen::ArrayXXd cell;   // (nx, ny)
  Eigen::ArrayXXd uface;  // (nx+1, ny)
  Eigen::ArrayXXd vface;  // (nx, ny+1)
  bool sharp = true;

  void apply(VelocityField& f) const {
    f.u *= uface;
    f.v *= vface;
  }
  VelocityField applied(const VelocityField& f) const {
    VelocityField g = f;
    apply(g);
    return g;
  }
  /// Fraction of the domain area covered (cell weights).
  double area_fraction() const {
    return cell.sum() / static_cast<double>(cell.size());
  }
};

namespace detail {
inline double smoothstep(double x) {
  x = std::clamp(x, 0.0, 1.0);
  return x * x * (3.0 - 2.0 * x);
}
}  // namespace detail

inline ControlMask make_control_mask(const DomainSpec& d,
                                     double smooth_width = 0.0) {
  auto weight = [&](double x, double y) -> double {
    const double dist = d.boundary_distance(x, y);
    if (smooth_width <= 0.0) {
      return dist <= d.collar_width ? 1.0 : 0.0;
    }
    const double s = detail::smoothstep((d.collar_width - dist) / smooth_width);
    return s * s;
  };
  ControlMask m;
  m.sharp = (smooth_width <= 0.0);
  m.cell.resize(d.nx, d.ny);
  for (int i = 0; i < d.nx; ++i)
    for (int j = 0; j < d.ny; ++j)
      m.cell(i, j) = weight(d.x_center(i), d.y_center(j));
  m.uface.resize(d.nx + 1, d.ny);
  for (int i = 0; i <= d.nx; ++i)
    for (int j = 0; j < d.ny; ++j)
      m.uface(i, j) = weight(d.x_face(i), d.y_center(j));
  m.vface.resize(d.nx, d.ny + 1);
  for (int i = 0; i < d.nx; ++i)
    for (int j = 0; j <= d.ny; ++j)
      m.vface(i, j) = weight(d.x_center(i), d.y_face(j));
  return m;
}

/// Full-domain mask (observation everywhere), for closed-form checks.
inline ControlMask make_full_mask(const DomainSpec& d) {
  ControlMask m;
  m.sharp = true;
  m.cell = Eigen::ArrayXXd::Ones(d.nx, d.ny);
  m.uface = Eigen::ArrayXXd::Ones(d.nx + 1, d.ny);
  m.vface = Eigen::ArrayXXd::Ones(d.nx, d.ny + 1);
  return m;
}

// ---------------------------------------------------------------------------
// Discrete norms
// ---------------------------------------------------------------------------

/// |f|_H: discrete L2 norm, cell quadrature.
inline double h_norm(const DomainSpec& d, const ScalarField& f) {
  require_same_shape(d, f, "h_norm");
  return std::sqrt(f.values.square().sum() * d.cell_area());
}

/// |f|_H for velocities: componentwise face quadrature.
inline double h_norm(const DomainSpec& d, const VelocityField& f) {
  require_same_shape(d, f, "h_norm");
  return std::sqrt((f.u.square().sum() + f.v.square().sum()) * d.cell_area());
}

inline double h_inner(const DomainSpec& d, const VelocityField& a,
                      const VelocityField& b) {
  return ((a.u * b.u).sum() + (a.v * b.v).sum()) * d.cell_area();
}

/// ||f||_V^2 for a cell-centered scalar with homogeneous Dirichlet values:
/// sum of squared difference quotients over interior edges plus the
/// ghost-closure wall terms. Equals -(Lap_h f, f) dx dy by summation by
/// parts, so Rayleigh quotients of the five-point operator are exact.
inline double v_norm_squared(const DomainSpec& d, const ScalarField& f) {
  require_same_shape(d, f, "v_norm");
  const int nx = d.nx, ny = d.ny;
  double sx = 0.0, sy = 0.0;
  for (int j = 0; j < ny; ++j) {
    for (int i = 0; i + 1 < nx; ++i) {
      const double diff = f(i + 1, j) - f(i, j);
      sx += diff * diff;
    }
    sx += 2.0 * f(0, j) * f(0, j) + 2.0 * f(nx - 1, j) * f(nx - 1, j);
  }
  for (int i = 0; i < nx; ++i) {
    for (int j = 0; j + 1 < ny; ++j) {
      const double diff = f(i, j + 1) - f(i, j);
      sy += diff * diff;
    }
    sy += 2.0 * f(i, 0) * f(i, 0) + 2.0 * f(i, ny - 1) * f(i, ny - 1);
  }
  return (sx / (d.dx * d.dx) + sy / (d.dy * d.dy)) * d.cell_area();
}

inline double v_norm(const DomainSpec& d, const ScalarField& f) {
  return std::sqrt(v_norm_squared(d, f));
}

/// ||f||_V^2 for a MAC velocity with homogeneous Dirichlet boundary.
/// Normal components vanish exactly on the wall nodes; tangential ones get
/// the mirrored-ghost closure terms. Matches -(Lap_h f, f)_H exactly.
inline double v_norm_squared(const DomainSpec& d, const VelocityField& f) {
  require_same_shape(d, f, "v_norm");
  const int nx = d.nx, ny = d.ny;
  const double ax = 1.0 / (d.dx * d.dx), ay = 1.0 / (d.dy * d.dy);
  double s = 0.0;
  // u component: (nx+1) x ny, u(0,.) = u(nx,.) = 0 on the wall
  for (int j = 0; j < ny; ++j) {
    for (int i = 0; i < nx; ++i) {
      const double diff = f.u(i + 1, j) - f.u(i, j);
      s += ax * diff * diff;
    }
  }
  for (int i = 0; i <= nx; ++i) {
    for (int j = 0; j + 1 < ny; ++j) {
      const double diff = f.u(i, j + 1) - f.u(i, j);
      s += ay * diff * diff;
    }
    s += ay * 2.0 * (f.u(i, 0) * f.u(i, 0) +
                     f.u(i, ny - 1) * f.u(i, ny - 1));
  }
  // v component: nx x (ny+1), v(.,0) = v(.,ny) = 0 on the wall
  for (int i = 0; i < nx; ++i) {
    for (int j = 0; j < ny; ++j) {
      const double diff = f.v(i, j + 1) - f.v(i, j);
      s += ay * diff * diff;
    }
  }
  for (int j = 0; j <= ny; ++j) {
    for (int i = 0; i + 1 < nx; ++i) {
      const double diff = f.v(i + 1, j) - f.v(i, j);
      s += ax * diff * diff;
    }
    s += ax * 2.0 * (f.v(0, j) * f.v(0, j) +
                     f.v(nx - 1, j) * f.v(nx - 1, j));
  }
  return s * d.cell_area();
}

inline double v_norm(const DomainSpec& d, const VelocityField& f) {
  return std::sqrt(v_norm_squared(d, f));
}

/// Max |discrete divergence| over cells.
inline double max_divergence(const DomainSpec& d, const VelocityField& f) {
  require_same_shape(d, f, "max_divergence");
  double m = 0.0;
  for (int i = 0; i < d.nx; ++i) {
    for (int j = 0; j < d.ny; ++j) {
      const double div = (f.u(i + 1, j) - f.u(i, j)) / d.dx +
                         (f.v(i, j + 1) - f.v(i, j)) / d.dy;
      m = std::max(m, std::abs(div));
    }
  }
  return m;
}

}  // namespace ctm
