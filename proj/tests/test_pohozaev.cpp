#include "doctest.h"
#include "fracbn/pohozaev.hpp"

#include <cmath>

using namespace fracbn;

TEST_CASE("radial coefficient derivative") {
  Vec x0 = Vec::Zero(2);
  SUBCASE("constant fields have zero derivative") {
    Mat A = Mat::Identity(2, 2);
    A(0, 1) = A(1, 0) = 0.3;
    auto field = CoefficientField::constant(A);
    Vec x(2);
    x << 0.7, -0.4;
    CHECK(a_prime(field, x0, x).norm() == 0.0);
  }
  SUBCASE("prototype field: sigma |x-x0|^sigma identity, PSD") {
    const double sigma = 1.5;
    auto field = CoefficientField::prototype(Mat::Identity(2, 2), x0, sigma);
    Vec x(2);
    x << 0.3, 0.4;  // |x - x0| = 0.5
    Mat ap = a_prime(field, x0, x);
    Mat ref = sigma * std::pow(0.5, sigma) * Mat::Identity(2, 2);
    CHECK((ap - ref).norm() < 1e-10);
    Eigen::SelfAdjointEigenSolver<Mat> es(ap);
    CHECK(es.eigenvalues().minCoeff() >= 0.0);
  }
  SUBCASE("analytic gradient agrees with finite differences") {
    auto field = CoefficientField::prototype(2.0 * Mat::Identity(2, 2), x0,
                                             2.2, 0.7);
    Vec x(2);
    x << -0.2, 0.55;
    Mat ap = a_prime(field, x0, x);
    Mat fd = Mat::Zero(2, 2);
    const double h = 1e-6;
    for (int k = 0; k < 2; ++k) {
      Vec xp = x, xm = x;
      xp[k] += h;
      xm[k] -= h;
      fd += (x[k] - x0[k]) * (field.evaluate(xp) - field.evaluate(xm)) /
            (2.0 * h);
    }
    CHECK((ap - 0.5 * (fd + fd.transpose())).norm() < 1e-7);
  }
}

namespace {

struct IntervalProblem {
  Grid grid;
  CoefficientField field;
  StiffnessMatrix op;
  SpectralDecomposition S;
  Cylinder cyl;
  ExtensionSolver solver;
  double c_s;

  explicit IntervalProblem(int res)
      : grid(build_grid(DomainDescriptor::interval(-1.0, 1.0), res)),
        field(CoefficientField::constant(Mat::Identity(1, 1))),
        op(assemble(grid, field)),
        S(decompose(op, grid.interior_count())),
        cyl(build_cylinder(grid, 0.3)),
        solver(cyl, op) {
    std::vector<GridFunction> probes;
    for (int k = 0; k < 3; ++k)
      probes.emplace_back(grid, S.eigenvectors.col(k));
    c_s = calibrate_cs(S, solver, 0.3, probes).c_s;
  }
};

}  // namespace

TEST_CASE("boundary flux identity on the interval") {
  IntervalProblem P(81);
  const double s = 0.3;
  Vec x0 = Vec::Zero(1);

  SUBCASE("zero function gives zero on both sides") {
    GridFunction u = GridFunction::zero(P.grid);
    CylinderFunction w = P.solver.extend(u);
    PohozaevReport r = pohozaev_sides(u, w, 0.5, P.field, x0, P.c_s);
    CHECK(r.lhs == 0.0);
    CHECK(r.rhs == 0.0);
    CHECK_FALSE(r.lhs_positive);
    CHECK(r.rhs_nonpositive);
  }

  SUBCASE("constant coefficients make the volume term exactly lambda's") {
    GridFunction u(P.grid, P.S.eigenvectors.col(0));
    CylinderFunction w = P.solver.extend(u);
    PohozaevReport r = pohozaev_sides(u, w, 0.8, P.field, x0, P.c_s);
    CHECK(r.aprime_term == 0.0);
    CHECK(r.rhs == doctest::Approx(r.lambda_term).epsilon(1e-15));
    CHECK(r.lambda_term ==
          doctest::Approx((s / P.c_s) * 0.8 * u.l2_inner(u)).epsilon(1e-12));
    PohozaevReport r0 = pohozaev_sides(u, w, 0.0, P.field, x0, P.c_s);
    CHECK(r0.rhs == 0.0);
    CHECK(r0.lhs > 0.0);  // flux integrand is a square times positive weight
  }

  SUBCASE("near-solution closes the identity within a few percent") {
    const double lam = 0.5 * std::pow(P.S.eigenvalues[0], s);
    MinimizerResult mr = minimize_nehari(P.S, s, lam);
    REQUIRE(mr.converged);
    CylinderFunction w = P.solver.extend(mr.minimizer);
    PohozaevReport r = pohozaev_sides(mr.minimizer, w, lam, P.field, x0, P.c_s);
    CHECK(r.lhs > 0.0);
    CHECK(r.rhs > 0.0);  // lambda > 0, constant coefficients
    CHECK(r.residual < 0.05);
    CHECK(r.stencil_stable);
    CHECK(r.stencil_disagreement < 0.05);
  }
}

TEST_CASE("nonexistence audit") {
  Vec x0 = Vec::Zero(2);
  auto field = CoefficientField::constant(Mat::Identity(2, 2));

  SUBCASE("unit disc, lambda = 0: sign contradiction exhibited") {
    Grid grid = build_grid(DomainDescriptor::disc(x0, 1.0), 21);
    MinimizeOptions mo;
    mo.max_iterations = 2000;
    mo.starts = 3;
    NonexistenceReport nr = nonexistence_audit(grid, field, 0.4, 0.0, x0, mo);
    CHECK(nr.preconditions_ok);
    CHECK(nr.star_min_projection > 0.0);
    CHECK(nr.aprime_min_eigenvalue == doctest::Approx(0.0));
    CHECK(nr.pohozaev.lhs > 0.0);
    CHECK(nr.pohozaev.rhs == 0.0);
    CHECK(nr.audit_pass);
    CHECK(nr.concentration);
    CHECK(nr.cell_mass_ratio > 0.5);
  }

  SUBCASE("positive lambda is refused") {
    Grid grid = build_grid(DomainDescriptor::disc(x0, 1.0), 21);
    NonexistenceReport nr = nonexistence_audit(grid, field, 0.4, 0.5, x0);
    CHECK_FALSE(nr.preconditions_ok);
    CHECK(nr.skip_reason == "audit requires lambda <= 0");
  }

  SUBCASE("annulus is skipped: not star-shaped about its center") {
    Grid grid = build_grid(DomainDescriptor::annulus(x0, 0.4, 1.0), 21);
    NonexistenceReport nr = nonexistence_audit(grid, field, 0.4, 0.0, x0);
    CHECK_FALSE(nr.preconditions_ok);
    CHECK(nr.skip_reason ==
          "region is not star-shaped about the given point");
    CHECK(nr.star_min_projection < 0.0);
  }
}
