#pragma once

#include "fracbn/domain.hpp"
#include "fracbn/quadrature.hpp"

namespace fracbn {

/// Extremal bubble family u_eps(x) = eps^((n-2s)/2) (|x-c|^2 + eps^2)^(-(n-2s)/2).
struct BubbleSpec {
  int n = 1;
  double s = 0.5;
  double eps = 1.0;
  Vec center;

  BubbleSpec(int n_, double s_, double eps_, Vec center_);
};

double bubble_trace(const BubbleSpec& spec, const Vec& x);

/// Surface measure of the unit sphere S^(n-1) for n in {1,2,3}.
double sphere_measure(int n);

/// Normalization of the Poisson kernel, fixed by unit mass at every height.
/// Computed once per (n, s) by radial quadrature and cached.
double poisson_kernel_constant(int n, double s);

/// P_y^s(x) = kappa y^(2s) (|x|^2 + y^2)^(-(n+2s)/2).
double poisson_kernel(int n, double s, const Vec& x, double y);

/// w1(x, y) = (P_y^s * u1)(x) by adaptive quadrature. Radial in x, so the
/// radius |x| is enough. The radial integral is split at |xi| = |x|/2 and
/// 3|x|/2 (plus the kernel peak) before adapting. Exact u1 at y = 0.
double bubble_extension_w1(int n, double s, double rho, double y,
                           const QuadratureSpec& quad = {});
double bubble_extension_w1(int n, double s, const Vec& x, double y,
                           const QuadratureSpec& quad = {});

/// d w1 / d|x|, differentiating under the integral sign.
double bubble_w1_drho(int n, double s, double rho, double y,
                      const QuadratureSpec& quad = {});

/// Smooth nonincreasing profile: 1 on [0, 1/2], 0 on [1, inf), built from
/// exp(-1/t) mollifiers.
double cutoff_profile(double t);
double cutoff_profile_d(double t);
/// phi(r_xy / r).
double cutoff(double r, double r_xy);

/// Coordinates diagonalizing the gradient form: xt = diag(a)^(-1/2) O x with
/// A0 = O^T diag(a) O; then (grad_x V)^T A0 grad_x V = |grad_xt V|^2 and
/// dx = det(A0)^(1/2) dxt.
struct CoordinateMap {
  Vec a;           // eigenvalues of A0
  Mat O;           // A0 = O^T diag(a) O
  Mat forward_mat;   // diag(a^-1/2) O
  Mat inverse_mat;   // O^T diag(a^1/2)
  double jacobian = 1.0;  // det(A0)^(1/2)

  Vec forward(const Vec& x) const { return forward_mat * x; }
  Vec inverse(const Vec& xt) const { return inverse_mat * xt; }
};

CoordinateMap diagonalizing_map(const Mat& A0);

/// Tabulated w1 per (n, s) with C1 interpolation; queries far outside the
/// table fall back on the homogeneous large-distance form
/// w1(lam x, lam y) ~ lam^(2s-n) w1(x, y).
class BubbleTable {
 public:
  BubbleTable(int n, double s);

  /// Shared cache; tables are immutable once built.
  static const BubbleTable& get(int n, double s);

  double w1(double rho, double y) const;
  double dw1_drho(double rho, double y) const;
  /// y^(1-2s) dw1/dy, evaluated as 2s dw1/d(y^(2s)); finite down to y = 0.
  double g(double rho, double y) const;

  int n() const { return n_; }
  double s() const { return s_; }

 private:
  struct Query {
    double value, du, dv;
  };
  Query interp(double rho, double y) const;

  int n_;
  double s_;
  double r_far_ = 0.0;   // table covers hypot(rho, y) <= r_far
  double r_ref_ = 0.0;   // rescale target for far queries
  double du_ = 0.0, dv_ = 0.0;
  int nu_ = 0, nv_ = 0;
  Mat values_;  // nu x nv, coordinates (asinh rho, asinh y^(2s))
};

struct BetaChoice {
  double beta = 0.0;
  double lo = 0.0, hi = 0.0;  // admissible open interval
};

/// Exponent of the boundary bubble width: midpoint of
/// (alpha (n-2s)/(n-4s), sigma/(2s)); requires n > 4s and a nonempty
/// interval, and asserts 2 s beta < min(sigma, (n-2s)(beta-alpha)).
BetaChoice choose_beta(int n, double s, double sigma, double alpha);

/// Concentrating competitor description shared by the energy and
/// asymptotics modules.
struct TestFunctionSpec {
  enum class Kind { Interior, Boundary };

  Kind kind = Kind::Interior;
  int n = 1;
  double s = 0.5;

  // Interior: V_eps = phi(r_xy / r) w_eps around x0 through the map.
  Vec x0;
  double r = 0.25;
  double eps = 0.1;
  CoordinateMap map;

  // Boundary: Vt_j = phi(|(x - x_j, y)| / (2 delta eps_j^alpha)) w_(eps_j^beta).
  Vec xj;
  double alpha = 1.0, beta = 2.0, delta = 0.25;
  double eps_j = 0.0;

  static TestFunctionSpec interior(int n, double s, const Vec& x0, double r,
                                   double eps, const Mat& A0);
  /// literal_scale switches eps_j from |x_j - x0| to |x_j - x0|^alpha.
  static TestFunctionSpec boundary(int n, double s, const Vec& x0,
                                   const Vec& xj, double alpha, double beta,
                                   double delta, bool literal_scale = false);
};

double interior_test_function(const TestFunctionSpec& tf, const Vec& x,
                              double y);
double boundary_test_function(const TestFunctionSpec& tf, const Vec& x,
                              double y);

/// Throws when the support ball of the competitor pokes outside the region
/// (checked by sampling the bounding sphere).
void assert_support_inside(const TestFunctionSpec& tf,
                           const DomainDescriptor& descriptor);

}  // namespace fracbn
