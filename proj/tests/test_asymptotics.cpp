#include "doctest.h"
#include "fracbn/asymptotics.hpp"

#include <cmath>
#include <sstream>

using namespace fracbn;

namespace {

SweepTable synthetic(const std::vector<double>& scales,
                     const std::function<double(double)>& f,
                     const std::string& name = "col") {
  SweepTable t;
  t.columns = {name};
  t.scales = scales;
  t.values.resize(static_cast<int>(scales.size()), 1);
  for (std::size_t i = 0; i < scales.size(); ++i) t.values(i, 0) = f(scales[i]);
  return t;
}

std::vector<double> dyadic(double top, int count) {
  std::vector<double> out;
  for (int k = 0; k < count; ++k) out.push_back(top * std::pow(0.5, k));
  return out;
}

}  // namespace

TEST_CASE("exponent fit on synthetic columns") {
  auto scales = dyadic(0.1, 8);
  SUBCASE("exact power law") {
    SweepTable t = synthetic(scales, [](double e) { return std::pow(e, 1.2); });
    ExponentFit f = fit_exponent(t, "col");
    CHECK(f.slope == doctest::Approx(1.2).epsilon(1e-12));
    CHECK(f.half_width <= 1e-12);
    CHECK(f.rows_used == 6);  // two largest scales dropped
  }
  SUBCASE("perturbed power law keeps the slope, widens the band") {
    SweepTable t = synthetic(scales, [](double e) {
      return std::pow(e, 1.2) * (1.0 + 0.05 * std::sin(50.0 * e));
    });
    ExponentFit f = fit_exponent(t, "col");
    CHECK(f.slope == doctest::Approx(1.2).epsilon(0.05));
    CHECK(f.half_width > 0.0);
  }
  SUBCASE("constant column fits slope zero") {
    SweepTable t = synthetic(scales, [](double) { return 3.7; });
    ExponentFit f = fit_exponent(t, "col");
    CHECK(f.slope == doctest::Approx(0.0).epsilon(1e-14));
  }
  SUBCASE("rejects short or nonpositive data") {
    Vec v(3);
    v << 1.0, 0.5, 0.25;
    CHECK_THROWS_AS(fit_exponent({0.1, 0.05, 0.025}, v), std::invalid_argument);
    Vec w(4);
    w << 1.0, 0.5, -0.25, 0.1;
    CHECK_THROWS_AS(fit_exponent({0.1, 0.05, 0.025, 0.0125}, w),
                    std::invalid_argument);
    SweepTable t = synthetic(scales, [](double e) { return e; });
    CHECK_THROWS_AS(fit_exponent(t, "missing"), std::invalid_argument);
  }
}

TEST_CASE("log factor detector") {
  auto scales = dyadic(0.05, 8);
  SUBCASE("fires on a genuine log factor") {
    SweepTable t = synthetic(scales, [](double e) {
      return std::pow(e, 0.8) * std::log(1.0 / e);
    });
    LogFactorResult r = detect_log_factor(t, "col", 0.8);
    CHECK(r.log_regime);
    CHECK(r.slope == doctest::Approx(1.0).epsilon(1e-10));
    CHECK(r.r_squared > 0.999);
  }
  SUBCASE("silent on a pure power law") {
    SweepTable t = synthetic(scales, [](double e) { return std::pow(e, 0.8); });
    LogFactorResult r = detect_log_factor(t, "col", 0.8);
    CHECK_FALSE(r.log_regime);
    CHECK(std::abs(r.slope) < 1e-10);
  }
}

TEST_CASE("sweep table plumbing") {
  SweepTable t = synthetic(dyadic(0.1, 4), [](double e) { return 2.0 * e; });
  CHECK(t.rows() == 4);
  CHECK(t.column_index("col") == 0);
  CHECK_THROWS_AS(t.column_index("nope"), std::invalid_argument);
  CHECK(t.column("col")[1] == doctest::Approx(0.1));
  std::ostringstream os;
  t.write_csv(os, "eps");
  std::istringstream is(os.str());
  std::string line;
  std::getline(is, line);
  CHECK(line == "eps,col");
  int count = 0;
  while (std::getline(is, line))
    if (!line.empty()) ++count;
  CHECK(count == 4);
}

TEST_CASE("outer weighted gradient integral regimes") {
  const int n = 1;
  const double s = 0.3;  // n - 2s = 0.4
  SUBCASE("subcritical weight converges in R") {
    const double a = weighted_gradient_integral(n, s, 0.1, 8.0);
    const double b = weighted_gradient_integral(n, s, 0.1, 16.0);
    const double c = weighted_gradient_integral(n, s, 0.1, 32.0);
    const double d1 = b - a, d2 = c - b;
    CHECK(d1 > 0.0);
    CHECK(d2 < d1);
    // tail increments contract like 2^(sigma - (n-2s)) = 2^(-0.3)
    CHECK(d2 / d1 == doctest::Approx(std::pow(2.0, -0.3)).epsilon(0.25));
  }
  SUBCASE("critical weight grows like log R") {
    // increments over doubled R approach a constant
    const double a = weighted_gradient_integral(n, s, 0.4, 8.0);
    const double b = weighted_gradient_integral(n, s, 0.4, 16.0);
    const double c = weighted_gradient_integral(n, s, 0.4, 32.0);
    const double d1 = b - a, d2 = c - b;
    CHECK(d1 > 0.0);
    CHECK(d2 == doctest::Approx(d1).epsilon(0.1));
  }
  SUBCASE("supercritical weight grows with the expected power") {
    // The profile's slow approach to its far-field decay law keeps the raw
    // growth exponent above sigma - (n - 2s) on any affordable range, so
    // look at increments over doubled R and extrapolate their local
    // exponents instead of fitting the totals directly.
    std::vector<double> vals;
    for (double R : {8.0, 16.0, 32.0, 64.0, 128.0, 256.0})
      vals.push_back(weighted_gradient_integral(n, s, 1.2, R));
    std::vector<double> e;
    for (std::size_t i = 2; i < vals.size(); ++i)
      e.push_back(std::log2((vals[i] - vals[i - 1]) /
                            (vals[i - 1] - vals[i - 2])));
    for (std::size_t i = 1; i < e.size(); ++i) CHECK(e[i] < e[i - 1]);
    CHECK(e.back() == doctest::Approx(1.2 - 0.4).epsilon(0.1));
    const std::size_t m = e.size();
    const double d1 = e[m - 1] - e[m - 2], d0 = e[m - 2] - e[m - 3];
    const double aitken = e[m - 1] - d1 * d1 / (d1 - d0);
    CHECK(aitken == doctest::Approx(1.2 - 0.4).epsilon(0.03));
  }
  CHECK_THROWS_AS(weighted_gradient_integral(n, s, 0.4, 1.0),
                  std::invalid_argument);
}

TEST_CASE("interior sweep invariants") {
  Grid grid = build_grid(DomainDescriptor::interval(-1.0, 1.0), 41);
  const double s = 0.3;
  Vec x0 = Vec::Zero(1);
  auto field = CoefficientField::prototype(Mat::Identity(1, 1), x0, 1.2);
  SharpConstants C = compute_sharp_constants(1, s);
  InteriorSweepParams P;
  P.lambda = 0.4;
  P.x0 = x0;
  P.r = 0.25;
  P.c_s = cs_reference(s);
  std::vector<double> eps = {0.04, 0.02, 0.01};
  SweepTable t = sweep_interior(grid, field, s, P, eps, C);
  REQUIRE(t.rows() == 3);
  const double p = 2.0 / (1.0 - 2.0 * s);
  for (int r = 0; r < t.rows(); ++r) {
    const double energy = t.values(r, t.column_index("energy"));
    const double mass = t.values(r, t.column_index("trace_l2"));
    const double constr = t.values(r, t.column_index("constraint"));
    const double iv = t.values(r, t.column_index("i_value"));
    const double q = t.values(r, t.column_index("q"));
    CHECK(iv == doctest::Approx(energy - P.lambda * mass).epsilon(1e-12));
    CHECK(q == doctest::Approx(iv / std::pow(constr, 2.0 / p)).epsilon(1e-12));
    CHECK(t.values(r, t.column_index("threshold")) ==
          doctest::Approx(P.c_s / C.Ks).epsilon(1e-12));
  }

  SUBCASE("trace-only path reproduces the trace columns") {
    InteriorSweepParams P2 = P;
    P2.trace_only = true;
    SweepTable t2 = sweep_interior(grid, field, s, P2, eps, C);
    REQUIRE(t2.rows() == 3);
    CHECK(t2.columns == std::vector<std::string>{"trace_l2", "constraint"});
    for (int r = 0; r < 3; ++r) {
      CHECK(t2.values(r, 0) ==
            doctest::Approx(t.values(r, t.column_index("trace_l2")))
                .epsilon(1e-4));
      CHECK(t2.values(r, 1) ==
            doctest::Approx(t.values(r, t.column_index("constraint")))
                .epsilon(1e-4));
    }
  }

  SUBCASE("rows whose support escapes are dropped and counted") {
    InteriorSweepParams P3 = P;
    P3.trace_only = true;
    Vec near_edge(1);
    near_edge << 0.9;
    P3.x0 = near_edge;
    auto field3 =
        CoefficientField::prototype(Mat::Identity(1, 1), near_edge, 1.2);
    int dropped = 0;
    SweepTable t3 = sweep_interior(grid, field3, s, P3, eps, C, &dropped);
    CHECK(t3.rows() == 0);
    CHECK(dropped == 3);
  }

  SUBCASE("non-decreasing scale lists are rejected") {
    InteriorSweepParams P4 = P;
    P4.trace_only = true;
    CHECK_THROWS_AS(sweep_interior(grid, field, s, P4, {0.02, 0.04}, C),
                    std::invalid_argument);
  }
}

TEST_CASE("boundary sweep scale bookkeeping") {
  // cusp region, boundary bubbles along the axis toward the tip
  const int n = 3;
  const double s = 0.4, sigma = 3.2, alpha = 2.0, delta = 0.25;
  BetaChoice b = choose_beta(n, s, sigma, alpha);
  auto cusp = DomainDescriptor::cusp(3, 2.0, 1.0);
  Vec x0 = Vec::Zero(3);
  auto field = CoefficientField::prototype(Mat::Identity(3, 3), x0, sigma);
  SharpConstants C = compute_sharp_constants(n, s);
  BoundarySweepParams P;
  P.lambda = 0.5;
  P.x0 = x0;
  P.alpha = alpha;
  P.beta = b.beta;
  P.delta = delta;
  P.sigma = sigma;
  P.c_s = cs_reference(s);
  auto xj = alpha_singular_sequence(cusp, x0, alpha, 2.0 * delta, 3);
  SweepTable t = sweep_boundary(cusp, field, n, s, P, xj, C);
  REQUIRE(t.rows() == 3);
  for (int r = 0; r < 3; ++r) {
    const double ej = t.scales[r];
    CHECK(t.values(r, t.column_index("lambda_scale")) ==
          doctest::Approx(std::pow(ej, 2.0 * s * b.beta)).epsilon(1e-12));
    CHECK(t.values(r, t.column_index("bubble_scale")) ==
          doctest::Approx(std::pow(ej, (n - 2.0 * s) * (b.beta - alpha)))
              .epsilon(1e-12));
    CHECK(t.values(r, t.column_index("sigma_scale")) ==
          doctest::Approx(std::pow(ej, sigma)).epsilon(1e-12));
    CHECK(t.values(r, t.column_index("q")) > 0.0);
    if (r > 0) CHECK(t.scales[r] < t.scales[r - 1]);
  }
  // the subcritical gain must dominate both loss terms along the sequence
  Vec dom1 = t.column("lambda_scale").cwiseQuotient(t.column("bubble_scale"));
  Vec dom2 = t.column("lambda_scale").cwiseQuotient(t.column("sigma_scale"));
  for (int r = 1; r < 3; ++r) {
    CHECK(dom1[r] > dom1[r - 1]);
    CHECK(dom2[r] > dom2[r - 1]);
  }
}
