#include "fracbn/asymptotics.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <stdexcept>

namespace fracbn {

int SweepTable::column_index(const std::string& name) const {
  for (std::size_t c = 0; c < columns.size(); ++c)
    if (columns[c] == name) return static_cast<int>(c);
  throw std::invalid_argument("sweep table has no column named " + name);
}

Vec SweepTable::column(const std::string& name) const {
  return values.col(column_index(name));
}

void SweepTable::write_csv(std::ostream& os,
                           const std::string& scale_name) const {
  os << scale_name;
  for (const auto& c : columns) os << "," << c;
  os << "\n";
  os.precision(17);
  for (int r = 0; r < rows(); ++r) {
    os << scales[r];
    for (int c = 0; c < values.cols(); ++c) os << "," << values(r, c);
    os << "\n";
  }
}

double weighted_gradient_integral(int n, double s, double sigma, double R,
                                  const QuadratureSpec& quad) {
  if (R < 2.0)
    throw std::invalid_argument("weighted_gradient_integral: R >= 2");
  QuadratureSpec qo = quad;
  qo.rel_tol = std::max(quad.rel_tol, 1e-6);
  QuadratureSpec qi = qo;
  // The derivative kernel cancels at large rho; only absolute accuracy is
  // achievable there and 1e-4 absolute in d is far below the d^2 integral's
  // own tolerance.
  qi.abs_tol = 1e-6;
  const double omega = sphere_measure(n);
  auto outer = [&](double rho) {
    const double ymax = std::sqrt(std::max(R * R - rho * rho, 0.0));
    if (ymax <= 0) return 0.0;
    auto inner = [&](double zeta) {
      const double y = std::pow(zeta, 1.0 / (2.0 - 2.0 * s));
      const double d = bubble_w1_drho(n, s, rho, y, qi);
      return d * d;
    };
    const double t = integrate(inner, 0.0, std::pow(ymax, 2.0 - 2.0 * s), qi)
                         .value /
                     (2.0 - 2.0 * s);
    return std::pow(rho, sigma + n - 1.0) * t;
  };
  double acc = 0.0, lo = 1.0;
  for (double c = 2.0; c < R; c *= 2.0) {
    acc += integrate(outer, lo, c, qo).value;
    lo = c;
  }
  acc += integrate(outer, lo, R, qo).value;
  return omega * acc;
}

SweepTable sweep_interior(const Grid& grid, const CoefficientField& field,
                          double s, const InteriorSweepParams& params,
                          const std::vector<double>& eps_list,
                          const SharpConstants& constants, int* dropped) {
  const int n = grid.dim;
  SweepTable t;
  const Mat A0 = field.evaluate(params.x0);
  const CoordinateMap map = diagonalizing_map(A0);

  if (params.trace_only) {
    t.columns = {"trace_l2", "constraint"};
    const double s2 = 2.0 * s;
    const double p = 2.0 * n / (n - s2);
    const double omega = sphere_measure(n);
    QuadratureSpec q;
    q.rel_tol = 1e-10;
    std::vector<double> kept;
    std::vector<Vec> rows;
    int drop_count = 0;
    for (double eps : eps_list) {
      TestFunctionSpec tf =
          TestFunctionSpec::interior(n, s, params.x0, params.r, eps, A0);
      try {
        assert_support_inside(tf, grid.descriptor);
      } catch (const std::runtime_error&) {
        ++drop_count;
        continue;
      }
      const double amp = std::pow(eps, 0.5 * (s2 - n));
      auto val = [&](double rho) {
        const double z = rho / eps;
        return cutoff(params.r, rho) * amp *
               std::pow(1.0 + z * z, -0.5 * (n - s2));
      };
      auto trace2 = [&](double rho) {
        const double v = val(rho);
        return std::pow(rho, n - 1.0) * v * v;
      };
      auto trace_p = [&](double rho) {
        const double v = val(rho);
        return std::pow(rho, n - 1.0) * std::pow(v, p);
      };
      double mass = 0.0, constraint = 0.0, lo = 0.0;
      for (double c = eps; lo < params.r; c *= 4.0) {
        const double hi = std::min(c, params.r);
        mass += integrate(trace2, lo, hi, q).value;
        constraint += integrate(trace_p, lo, hi, q).value;
        lo = hi;
      }
      Vec row(2);
      row << omega * map.jacobian * mass, omega * map.jacobian * constraint;
      kept.push_back(eps);
      rows.push_back(row);
    }
    t.scales = kept;
    t.values.resize(static_cast<int>(rows.size()), 2);
    for (std::size_t r = 0; r < rows.size(); ++r) t.values.row(r) = rows[r];
    if (dropped) *dropped = drop_count;
    for (std::size_t r = 1; r < t.scales.size(); ++r)
      if (t.scales[r] >= t.scales[r - 1])
        throw std::invalid_argument("sweep scales must decrease strictly");
    return t;
  }

  t.columns = {"trace_l2", "constraint", "energy", "excess",
               "q",        "threshold",  "i_value"};
  // flat-space reference energy of the uncut profile in these coordinates
  const double reference =
      params.c_s * map.jacobian * constants.bubble_energy;
  std::vector<double> kept;
  std::vector<Vec> rows;
  int drop_count = 0;
  for (double eps : eps_list) {
    TestFunctionSpec tf =
        TestFunctionSpec::interior(n, s, params.x0, params.r, eps, A0);
    try {
      assert_support_inside(tf, grid.descriptor);
    } catch (const std::runtime_error&) {
      ++drop_count;
      continue;
    }
    EnergyReport rep =
        existence_certificate(params.lambda, field, tf, constants, params.c_s);
    Vec row(7);
    row << rep.mass, rep.constraint, rep.energy, rep.energy - reference,
        rep.q_value, rep.threshold, rep.i_value;
    kept.push_back(eps);
    rows.push_back(row);
  }
  t.scales = kept;
  t.values.resize(static_cast<int>(rows.size()), 7);
  for (std::size_t r = 0; r < rows.size(); ++r) t.values.row(r) = rows[r];
  if (dropped) *dropped = drop_count;
  for (std::size_t r = 1; r < t.scales.size(); ++r)
    if (t.scales[r] >= t.scales[r - 1])
      throw std::invalid_argument("sweep scales must decrease strictly");
  return t;
}

SweepTable sweep_boundary(const DomainDescriptor& descriptor,
                          const CoefficientField& field, int n, double s,
                          const BoundarySweepParams& params,
                          const std::vector<Vec>& xj_list,
                          const SharpConstants& constants, int* dropped) {
  SweepTable t;
  t.columns = {"q",          "threshold",    "constraint", "energy",
               "lambda_scale", "bubble_scale", "sigma_scale"};
  std::vector<double> kept;
  std::vector<Vec> rows;
  int drop_count = 0;
  for (const Vec& xj : xj_list) {
    TestFunctionSpec tf = TestFunctionSpec::boundary(
        n, s, params.x0, xj, params.alpha, params.beta, params.delta,
        params.literal_scale);
    try {
      assert_support_inside(tf, descriptor);
    } catch (const std::runtime_error&) {
      ++drop_count;
      continue;
    }
    EnergyReport rep =
        existence_certificate(params.lambda, field, tf, constants, params.c_s);
    const double ej = tf.eps_j;
    Vec row(7);
    row << rep.q_value, rep.threshold, rep.constraint, rep.energy,
        std::pow(ej, 2.0 * s * params.beta),
        std::pow(ej, (n - 2.0 * s) * (params.beta - params.alpha)),
        std::pow(ej, params.sigma);
    kept.push_back((xj - params.x0).norm());
    rows.push_back(row);
  }
  t.scales = kept;
  t.values.resize(static_cast<int>(rows.size()), 7);
  for (std::size_t r = 0; r < rows.size(); ++r) t.values.row(r) = rows[r];
  if (dropped) *dropped = drop_count;
  return t;
}

namespace {

// two-sided 97.5% Student quantiles for small dof, flattening toward 1.96
double student_975(int dof) {
  static const double q[] = {12.706, 4.303, 3.182, 2.776, 2.571, 2.447,
                             2.365,  2.306, 2.262, 2.228, 2.201, 2.179,
                             2.160,  2.145, 2.131, 2.120};
  if (dof <= 0) return std::numeric_limits<double>::infinity();
  if (dof <= 16) return q[dof - 1];
  return 1.96 + 8.0 / (dof * dof);
}

}  // namespace

ExponentFit fit_exponent(const std::vector<double>& scales, const Vec& values) {
  const int m = static_cast<int>(scales.size());
  if (m < 4 || values.size() != m)
    throw std::invalid_argument("exponent fit needs at least 4 rows");
  for (int i = 0; i < m; ++i)
    if (!(values[i] > 0))
      throw std::invalid_argument("exponent fit requires positive values");
  ExponentFit out;
  out.rows_used = m;
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (int i = 0; i < m; ++i) {
    const double x = std::log(scales[i]);
    const double y = std::log(values[i]);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  const double denom = m * sxx - sx * sx;
  out.slope = (m * sxy - sx * sy) / denom;
  const double intercept = (sy - out.slope * sx) / m;
  double ss = 0;
  for (int i = 0; i < m; ++i) {
    const double r =
        std::log(values[i]) - out.slope * std::log(scales[i]) - intercept;
    ss += r * r;
  }
  if (m > 2) {
    const double se = std::sqrt(ss / (m - 2) / (sxx - sx * sx / m));
    out.half_width = student_975(m - 2) * se;
  }
  return out;
}

ExponentFit fit_exponent(const SweepTable& table, const std::string& column) {
  Vec v = table.column(column);
  std::vector<double> scales = table.scales;
  // drop the two largest scales as pre-asymptotic when enough rows remain
  if (table.rows() - 2 >= 4) {
    scales.erase(scales.begin(), scales.begin() + 2);
    v = v.tail(v.size() - 2).eval();
  }
  return fit_exponent(scales, v);
}

LogFactorResult detect_log_factor(const SweepTable& table,
                                  const std::string& column, double p) {
  Vec v = table.column(column);
  std::vector<double> scales = table.scales;
  if (table.rows() - 2 >= 4) {
    scales.erase(scales.begin(), scales.begin() + 2);
    v = v.tail(v.size() - 2).eval();
  }
  const int m = static_cast<int>(scales.size());
  if (m < 4) throw std::invalid_argument("log detector needs at least 4 rows");
  LogFactorResult out;
  double sx = 0, sy = 0, sxx = 0, sxy = 0, syy = 0;
  for (int i = 0; i < m; ++i) {
    const double x = std::log(1.0 / scales[i]);
    const double y = v[i] / std::pow(scales[i], p);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
    syy += y * y;
  }
  const double denom = m * sxx - sx * sx;
  out.slope = (m * sxy - sx * sy) / denom;
  out.intercept = (sy - out.slope * sx) / m;
  const double sst = syy - sy * sy / m;
  double ssr = 0;
  for (int i = 0; i < m; ++i) {
    const double x = std::log(1.0 / scales[i]);
    const double y = v[i] / std::pow(scales[i], p);
    const double r = y - out.slope * x - out.intercept;
    ssr += r * r;
  }
  out.r_squared = sst > 0 ? 1.0 - ssr / sst : 0.0;
  out.log_regime = out.slope > 0 && out.r_squared > 0.9;
  return out;
}

}  // namespace fracbn
