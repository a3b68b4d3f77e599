#include "fracbn/bubbles.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <random>
#include <stdexcept>
#include <vector>

namespace fracbn {

namespace {

double u1_radial(int n, double s, double rho) {
  return std::pow(rho * rho + 1.0, -0.5 * (n - 2.0 * s));
}

double u1_radial_d(int n, double s, double rho) {
  return -(n - 2.0 * s) * rho *
         std::pow(rho * rho + 1.0, -0.5 * (n - 2.0 * s) - 1.0);
}

/// Angular integral of the kernel over the sphere of radius t, including the
/// kappa y^(2s) prefactor and the full sphere measure:
///   Q(rho, t, y) = int_{S^(n-1)} P_y^s(rho e1 - t w) dw.
struct KernelAvg {
  int n;
  double s, q, kappa;

  double operator()(double rho, double t, double y) const {
    const double pre = kappa * std::pow(y, 2.0 * s);
    const double a = rho * rho + t * t + y * y;
    const double b = 2.0 * rho * t;
    switch (n) {
      case 1:
        return pre * (std::pow((rho - t) * (rho - t) + y * y, -q) +
                      std::pow((rho + t) * (rho + t) + y * y, -q));
      case 2: {
        // 2 int_0^pi (a - b cos th)^-q dth; the peak near th = 0 has width
        // ~ sqrt((a-b)/b), resolved by explicit splits before adapting.
        auto f = [&](double th) { return std::pow(a - b * std::cos(th), -q); };
        QuadratureSpec spec;
        spec.rel_tol = 1e-10;
        double width = b > 0 ? std::sqrt(std::max(a - b, 0.0) / b) : 1.0;
        double acc = 0.0, lo = 0.0;
        for (double cut : {width, 8.0 * width, M_PI}) {
          double hi = std::min(cut, M_PI);
          if (hi > lo) acc += integrate(f, lo, hi, spec).value;
          lo = hi;
          if (lo >= M_PI) break;
        }
        return pre * 2.0 * acc;
      }
      case 3: {
        if (b < 1e-12 * a) return pre * 4.0 * M_PI * std::pow(a, -q);
        const double f1 = std::pow(a - b, 1.0 - q);
        const double f2 = std::pow(a + b, 1.0 - q);
        return pre * 2.0 * M_PI * (f1 - f2) / (b * (q - 1.0));
      }
    }
    throw std::invalid_argument("kernel average: n must be 1, 2 or 3");
  }

  double drho(double rho, double t, double y) const {
    const double pre = kappa * std::pow(y, 2.0 * s);
    const double a = rho * rho + t * t + y * y;
    const double b = 2.0 * rho * t;
    const double da = 2.0 * rho, db = 2.0 * t;
    switch (n) {
      case 1:
        return pre * (-2.0 * q) *
               ((rho - t) * std::pow((rho - t) * (rho - t) + y * y, -q - 1.0) +
                (rho + t) * std::pow((rho + t) * (rho + t) + y * y, -q - 1.0));
      case 2: {
        auto f = [&](double th) {
          const double c = std::cos(th);
          return -q * std::pow(a - b * c, -q - 1.0) * (da - db * c);
        };
        QuadratureSpec spec;
        spec.rel_tol = 1e-10;
        double width = b > 0 ? std::sqrt(std::max(a - b, 0.0) / b) : 1.0;
        double acc = 0.0, lo = 0.0;
        for (double cut : {width, 8.0 * width, M_PI}) {
          double hi = std::min(cut, M_PI);
          if (hi > lo) acc += integrate(f, lo, hi, spec).value;
          lo = hi;
          if (lo >= M_PI) break;
        }
        return pre * 2.0 * acc;
      }
      case 3: {
        if (b < 1e-12 * a)
          return pre * 4.0 * M_PI * (-q) * std::pow(a, -q - 1.0) * da;
        const double c0 = 2.0 * M_PI / (q - 1.0);
        const double f1 = std::pow(a - b, 1.0 - q);
        const double f2 = std::pow(a + b, 1.0 - q);
        const double d1 = (1.0 - q) * std::pow(a - b, -q) * (da - db);
        const double d2 = (1.0 - q) * std::pow(a + b, -q) * (da + db);
        return pre * c0 * ((d1 - d2) / b - (f1 - f2) * db / (b * b));
      }
    }
    throw std::invalid_argument("kernel average: n must be 1, 2 or 3");
  }
};

/// Radial integral int_0^inf u1(t) t^(n-1) F(t) dt with the domain split at
/// t = rho/2, 3 rho/2 and around the kernel peak t = rho.
double radial_integral(int n, double s,
                       const std::function<double(double)>& F, double rho,
                       double y, const QuadratureSpec& quad) {
  auto f = [&](double t) {
    return u1_radial(n, s, t) * std::pow(t, n - 1.0) * F(t);
  };
  std::vector<double> cuts{0.5 * rho, rho - 3.0 * y, rho, rho + 3.0 * y,
                           1.5 * rho};
  std::sort(cuts.begin(), cuts.end());
  double acc = 0.0, err = 0.0, lo = 0.0;
  const double tail_start = std::max(1.5 * rho, 1.0);
  for (double c : cuts) {
    double hi = std::min(std::max(c, 0.0), tail_start);
    if (hi > lo) {
      auto r = integrate(f, lo, hi, quad);
      acc += r.value;
      err += r.error;
      lo = hi;
    }
  }
  if (lo < tail_start) {
    auto r = integrate(f, lo, tail_start, quad);
    acc += r.value;
    err += r.error;
  }
  auto tail = integrate_to_infinity(f, tail_start, quad);
  acc += tail.value;
  err += tail.error;
  // Accuracy gate, relative with an absolute floor: far out the integrand
  // cancels almost completely and only absolute accuracy is achievable.
  const double gate = std::max(10.0 * quad.rel_tol, 1e-5);
  if (err > gate * std::max(std::abs(acc), 1.0) && err > 100.0 * quad.abs_tol)
    throw std::runtime_error("bubble extension quadrature: error estimate " +
                             std::to_string(err) + " too large");
  return acc;
}

}  // namespace

BubbleSpec::BubbleSpec(int n_, double s_, double eps_, Vec center_)
    : n(n_), s(s_), eps(eps_), center(std::move(center_)) {
  if (s <= 0 || s >= 1) throw std::invalid_argument("BubbleSpec: s in (0,1)");
  if (n <= 2.0 * s) throw std::invalid_argument("BubbleSpec: requires n > 2s");
  if (eps <= 0) throw std::invalid_argument("BubbleSpec: eps > 0");
}

double bubble_trace(const BubbleSpec& spec, const Vec& x) {
  const double r2 = (x - spec.center).squaredNorm();
  const double p = 0.5 * (spec.n - 2.0 * spec.s);
  return std::pow(spec.eps, p) * std::pow(r2 + spec.eps * spec.eps, -p);
}

double sphere_measure(int n) {
  switch (n) {
    case 1:
      return 2.0;
    case 2:
      return 2.0 * M_PI;
    case 3:
      return 4.0 * M_PI;
  }
  throw std::invalid_argument("sphere_measure: n must be 1, 2 or 3");
}

double poisson_kernel_constant(int n, double s) {
  static std::map<std::pair<int, long long>, double> cache;
  static std::mutex mtx;
  const auto key = std::make_pair(n, static_cast<long long>(s * 1e12));
  {
    std::lock_guard<std::mutex> lock(mtx);
    auto it = cache.find(key);
    if (it != cache.end()) return it->second;
  }
  const double q = 0.5 * (n + 2.0 * s);
  auto f = [&](double rho) {
    return std::pow(rho, n - 1.0) * std::pow(1.0 + rho * rho, -q);
  };
  QuadratureSpec spec;
  spec.rel_tol = 1e-12;
  double mass = integrate(f, 0.0, 2.0, spec).value +
                integrate_to_infinity(f, 2.0, spec).value;
  double kappa = 1.0 / (sphere_measure(n) * mass);
  std::lock_guard<std::mutex> lock(mtx);
  cache[key] = kappa;
  return kappa;
}

double poisson_kernel(int n, double s, const Vec& x, double y) {
  if (y <= 0) throw std::invalid_argument("poisson_kernel: y > 0");
  const double kappa = poisson_kernel_constant(n, s);
  return kappa * std::pow(y, 2.0 * s) *
         std::pow(x.squaredNorm() + y * y, -0.5 * (n + 2.0 * s));
}

double bubble_extension_w1(int n, double s, double rho, double y,
                           const QuadratureSpec& quad) {
  if (y < 0) throw std::invalid_argument("bubble_extension_w1: y >= 0");
  rho = std::abs(rho);
  if (y == 0.0) return u1_radial(n, s, rho);
  KernelAvg K{n, s, 0.5 * (n + 2.0 * s), poisson_kernel_constant(n, s)};
  auto F = [&](double t) { return K(rho, t, y); };
  return radial_integral(n, s, F, rho, y, quad);
}

double bubble_extension_w1(int n, double s, const Vec& x, double y,
                           const QuadratureSpec& quad) {
  return bubble_extension_w1(n, s, x.norm(), y, quad);
}

double bubble_w1_drho(int n, double s, double rho, double y,
                      const QuadratureSpec& quad) {
  if (y < 0) throw std::invalid_argument("bubble_w1_drho: y >= 0");
  if (rho == 0.0) return 0.0;
  if (y == 0.0) return u1_radial_d(n, s, rho);
  KernelAvg K{n, s, 0.5 * (n + 2.0 * s), poisson_kernel_constant(n, s)};
  auto F = [&](double t) { return K.drho(rho, t, y); };
  return radial_integral(n, s, F, rho, y, quad);
}

double cutoff_profile(double t) {
  if (t <= 0.5) return 1.0;
  if (t >= 1.0) return 0.0;
  auto bump = [](double z) { return z > 0 ? std::exp(-1.0 / z) : 0.0; };
  const double up = bump(2.0 - 2.0 * t);
  const double down = bump(2.0 * t - 1.0);
  return up / (up + down);
}

double cutoff_profile_d(double t) {
  if (t <= 0.5 || t >= 1.0) return 0.0;
  auto bump = [](double z) { return z > 0 ? std::exp(-1.0 / z) : 0.0; };
  auto bump_d = [&](double z) { return z > 0 ? bump(z) / (z * z) : 0.0; };
  const double F = bump(2.0 - 2.0 * t), G = bump(2.0 * t - 1.0);
  const double Fd = -2.0 * bump_d(2.0 - 2.0 * t);
  const double Gd = 2.0 * bump_d(2.0 * t - 1.0);
  return (Fd * G - F * Gd) / ((F + G) * (F + G));
}

double cutoff(double r, double r_xy) {
  if (r <= 0) throw std::invalid_argument("cutoff: r > 0");
  return cutoff_profile(r_xy / r);
}

CoordinateMap diagonalizing_map(const Mat& A0) {
  const int n = static_cast<int>(A0.rows());
  Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (A0 + A0.transpose()));
  if (es.eigenvalues().minCoeff() <= 0)
    throw std::invalid_argument("diagonalizing_map: matrix not positive definite");
  CoordinateMap m;
  m.a = es.eigenvalues();
  m.O = es.eigenvectors().transpose();  // A0 = O^T diag(a) O
  Vec inv_sqrt = m.a.array().rsqrt();
  m.forward_mat = inv_sqrt.asDiagonal() * m.O;
  m.inverse_mat = m.O.transpose() * Vec(m.a.array().sqrt()).asDiagonal();
  m.jacobian = std::sqrt(m.a.prod());
  (void)n;
  return m;
}

// ---------------------------------------------------------------------------
// BubbleTable

namespace {

/// Catmull-Rom value and derivative at fractional offset t in [0, 1].
inline void catmull(double f0, double f1, double f2, double f3, double t,
                    double& val, double& der) {
  const double m1 = 0.5 * (f2 - f0);
  const double m2 = 0.5 * (f3 - f1);
  const double d = f1, c = m1;
  const double b = 3.0 * (f2 - f1) - 2.0 * m1 - m2;
  const double a = -2.0 * (f2 - f1) + m1 + m2;
  val = ((a * t + b) * t + c) * t + d;
  der = (3.0 * a * t + 2.0 * b) * t + c;
}

}  // namespace

BubbleTable::BubbleTable(int n, double s) : n_(n), s_(s) {
  r_far_ = 64.0;
  r_ref_ = 48.0;
  const double margin = 1.1;
  const double umax = std::asinh(r_far_ * margin);
  const double vmax = std::asinh(std::pow(r_far_ * margin, 2.0 * s));
  nu_ = 240;
  nv_ = 200;
  du_ = umax / (nu_ - 1);
  dv_ = vmax / (nv_ - 1);
  values_.resize(nu_, nv_);
  QuadratureSpec quad;
  quad.rel_tol = 1e-8;
  parallel_for(nu_, [&](int i) {
    const double rho = std::sinh(i * du_);
    values_(i, 0) = u1_radial(n_, s_, rho);
    for (int j = 1; j < nv_; ++j) {
      const double eta = std::sinh(j * dv_);
      const double y = std::pow(eta, 0.5 / s_);
      values_(i, j) = bubble_extension_w1(n_, s_, rho, y, quad);
    }
  });
}

const BubbleTable& BubbleTable::get(int n, double s) {
  static std::map<std::pair<int, long long>, std::unique_ptr<BubbleTable>> cache;
  static std::mutex mtx;
  const auto key = std::make_pair(n, static_cast<long long>(s * 1e12));
  std::lock_guard<std::mutex> lock(mtx);
  auto it = cache.find(key);
  if (it == cache.end())
    it = cache.emplace(key, std::make_unique<BubbleTable>(n, s)).first;
  return *it->second;
}

BubbleTable::Query BubbleTable::interp(double rho, double y) const {
  rho = std::abs(rho);
  const double u = std::asinh(rho);
  const double v = std::asinh(std::pow(y, 2.0 * s_));
  double ui = u / du_, vi = v / dv_;
  int i0 = std::clamp(static_cast<int>(ui), 0, nu_ - 2);
  int j0 = std::clamp(static_cast<int>(vi), 0, nv_ - 2);
  const double tu = ui - i0, tv = vi - j0;
  // Ghost values: rho-axis by even reflection (w1 is even in rho), other
  // edges by quadratic extrapolation so the edge cubic keeps its accuracy.
  std::function<double(int, int)> at = [&](int i, int j) -> double {
    if (i < 0) return at(-i, j);
    if (i > nu_ - 1) return 3.0 * at(nu_ - 1, j) - 3.0 * at(nu_ - 2, j) + at(nu_ - 3, j);
    if (j < 0) return 3.0 * at(i, 0) - 3.0 * at(i, 1) + at(i, 2);
    if (j > nv_ - 1) return 3.0 * at(i, nv_ - 1) - 3.0 * at(i, nv_ - 2) + at(i, nv_ - 3);
    return values_(i, j);
  };
  // Interpolate along v on four u-rows, then along u; derivative in v from
  // the row interpolants, derivative in u from differentiating the u-cubic.
  double row[4], row_dv[4];
  for (int k = -1; k <= 2; ++k)
    catmull(at(i0 + k, j0 - 1), at(i0 + k, j0), at(i0 + k, j0 + 1),
            at(i0 + k, j0 + 2), tv, row[k + 1], row_dv[k + 1]);
  Query q{};
  double dval_du;
  catmull(row[0], row[1], row[2], row[3], tu, q.value, dval_du);
  double dv_val, dv_der_unused;
  catmull(row_dv[0], row_dv[1], row_dv[2], row_dv[3], tu, dv_val,
          dv_der_unused);
  q.du = dval_du / du_;
  q.dv = dv_val / dv_;
  return q;
}

namespace {

/// Two-term far-field continuation: every tabulated quantity behaves as
/// a r^p + b r^(p-2s) along a fixed direction; matching at two in-table
/// radii recovers both coefficients.
template <class F>
double far_field(const F& q, double rho, double y, double r, double r_ref,
                 double p, double s) {
  const double r1 = 0.5 * r_ref, r2 = r_ref;
  const double q1 = q(rho * r1 / r, y * r1 / r);
  const double q2 = q(rho * r2 / r, y * r2 / r);
  const double a1 = std::pow(r1, p), b1 = std::pow(r1, p - 2.0 * s);
  const double a2 = std::pow(r2, p), b2 = std::pow(r2, p - 2.0 * s);
  const double det = a1 * b2 - a2 * b1;
  const double a = (q1 * b2 - q2 * b1) / det;
  const double b = (a1 * q2 - a2 * q1) / det;
  return a * std::pow(r, p) + b * std::pow(r, p - 2.0 * s);
}

}  // namespace

double BubbleTable::w1(double rho, double y) const {
  const double r = std::hypot(rho, y);
  if (r > r_far_)
    return far_field([&](double u, double v) { return w1(u, v); }, rho, y, r,
                     r_ref_, 2.0 * s_ - n_, s_);
  return interp(rho, y).value;
}

double BubbleTable::dw1_drho(double rho, double y) const {
  const double r = std::hypot(rho, y);
  if (r > r_far_)
    return far_field([&](double u, double v) { return dw1_drho(u, v); }, rho,
                     y, r, r_ref_, 2.0 * s_ - n_ - 1.0, s_);
  Query q = interp(rho, y);
  const double sgn = rho < 0 ? -1.0 : 1.0;
  return sgn * q.du / std::sqrt(1.0 + rho * rho);
}

double BubbleTable::g(double rho, double y) const {
  const double r = std::hypot(rho, y);
  if (r > r_far_)
    return far_field([&](double u, double v) { return g(u, v); }, rho, y, r,
                     r_ref_, -static_cast<double>(n_), s_);
  Query q = interp(rho, y);
  const double eta = std::pow(y, 2.0 * s_);
  // g = y^(1-2s) dw/dy = 2s dw/d(eta), eta = y^(2s).
  return 2.0 * s_ * q.dv / std::sqrt(1.0 + eta * eta);
}

// ---------------------------------------------------------------------------

BetaChoice choose_beta(int n, double s, double sigma, double alpha) {
  if (n <= 4.0 * s)
    throw std::invalid_argument("choose_beta: requires n > 4s");
  const double sigma_floor = 2.0 * s * (n - 2.0 * s) / (n - 4.0 * s);
  if (sigma <= sigma_floor)
    throw std::invalid_argument(
        "choose_beta: requires sigma > 2s(n-2s)/(n-4s) = " +
        std::to_string(sigma_floor));
  if (alpha < 1.0)
    throw std::invalid_argument("choose_beta: requires alpha >= 1");
  BetaChoice b;
  b.lo = alpha * (n - 2.0 * s) / (n - 4.0 * s);
  b.hi = sigma / (2.0 * s);
  if (b.lo >= b.hi)
    throw std::invalid_argument(
        "choose_beta: empty interval, alpha (n-2s)/(n-4s) = " +
        std::to_string(b.lo) + " >= sigma/(2s) = " + std::to_string(b.hi));
  b.beta = 0.5 * (b.lo + b.hi);
  const double lhs = 2.0 * s * b.beta;
  const double rhs = std::min(sigma, (n - 2.0 * s) * (b.beta - alpha));
  if (!(lhs < rhs))
    throw std::logic_error("choose_beta: exponent dominance check failed");
  return b;
}

TestFunctionSpec TestFunctionSpec::interior(int n, double s, const Vec& x0,
                                            double r, double eps,
                                            const Mat& A0) {
  TestFunctionSpec tf;
  tf.kind = Kind::Interior;
  tf.n = n;
  tf.s = s;
  tf.x0 = x0;
  tf.r = r;
  tf.eps = eps;
  tf.map = diagonalizing_map(A0);
  if (r <= 0 || eps <= 0)
    throw std::invalid_argument("interior spec: r, eps > 0");
  return tf;
}

TestFunctionSpec TestFunctionSpec::boundary(int n, double s, const Vec& x0,
                                            const Vec& xj, double alpha,
                                            double beta, double delta,
                                            bool literal_scale) {
  TestFunctionSpec tf;
  tf.kind = Kind::Boundary;
  tf.n = n;
  tf.s = s;
  tf.x0 = x0;
  tf.xj = xj;
  tf.alpha = alpha;
  tf.beta = beta;
  tf.delta = delta;
  if (!(beta > alpha) || alpha < 1.0)
    throw std::invalid_argument("boundary spec: requires beta > alpha >= 1");
  const double dist = (xj - x0).norm();
  if (dist <= 0) throw std::invalid_argument("boundary spec: xj must differ from x0");
  tf.eps_j = literal_scale ? std::pow(dist, alpha) : dist;
  tf.map = diagonalizing_map(Mat::Identity(n, n));
  return tf;
}

double interior_test_function(const TestFunctionSpec& tf, const Vec& x,
                              double y) {
  if (tf.kind != TestFunctionSpec::Kind::Interior)
    throw std::invalid_argument("interior_test_function: wrong kind");
  const Vec xt = tf.map.forward(x - tf.x0);
  const double r_xy = std::sqrt(xt.squaredNorm() + y * y);
  const double c = cutoff_profile(r_xy / tf.r);
  if (c == 0.0) return 0.0;
  const BubbleTable& table = BubbleTable::get(tf.n, tf.s);
  const double scale = std::pow(tf.eps, 0.5 * (2.0 * tf.s - tf.n));
  return c * scale * table.w1(xt.norm() / tf.eps, y / tf.eps);
}

double boundary_test_function(const TestFunctionSpec& tf, const Vec& x,
                              double y) {
  if (tf.kind != TestFunctionSpec::Kind::Boundary)
    throw std::invalid_argument("boundary_test_function: wrong kind");
  const Vec z = x - tf.xj;
  const double cut_scale = std::pow(tf.eps_j, tf.alpha);
  const double r_cut = std::sqrt(z.squaredNorm() + y * y) / cut_scale;
  const double c = cutoff_profile(r_cut / (2.0 * tf.delta));
  if (c == 0.0) return 0.0;
  const double eb = std::pow(tf.eps_j, tf.beta);
  const BubbleTable& table = BubbleTable::get(tf.n, tf.s);
  const double scale = std::pow(eb, 0.5 * (2.0 * tf.s - tf.n));
  return c * scale * table.w1(z.norm() / eb, y / eb);
}

void assert_support_inside(const TestFunctionSpec& tf,
                           const DomainDescriptor& descriptor) {
  const int n = tf.n;
  std::vector<Vec> dirs;
  if (n == 1) {
    dirs.push_back(Vec::Constant(1, 1.0));
    dirs.push_back(Vec::Constant(1, -1.0));
  } else {
    const int m = n == 2 ? 64 : 200;
    std::mt19937_64 rng(99);
    std::normal_distribution<double> gauss;
    for (int i = 0; i < m; ++i) {
      Vec d(n);
      for (int k = 0; k < n; ++k) d[k] = gauss(rng);
      if (d.norm() > 1e-8) dirs.push_back(d.normalized());
    }
  }
  const double tol = 1e-9 * descriptor.diameter();
  if (tf.kind == TestFunctionSpec::Kind::Interior) {
    for (const Vec& d : dirs) {
      Vec x = tf.x0 + tf.map.inverse(tf.r * d);
      if (descriptor.levelset(x) >= -tol)
        throw std::runtime_error(
            "test function support escapes the region (interior ball)");
    }
  } else {
    const double rad = 2.0 * tf.delta * std::pow(tf.eps_j, tf.alpha);
    for (const Vec& d : dirs) {
      Vec x = tf.xj + rad * d;
      if (descriptor.levelset(x) >= -tol)
        throw std::runtime_error(
            "test function support escapes the region (boundary ball)");
    }
  }
}

}  // namespace fracbn
