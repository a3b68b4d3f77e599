#include "doctest.h"
#include "fracbn/domain.hpp"

#include <cmath>
#include <random>

using namespace fracbn;

TEST_CASE("interval grid, resolution 5, interior nodes at quarter points") {
  Grid g = build_grid(DomainDescriptor::interval(0, 1), 5);
  REQUIRE(g.interior_count() == 3);
  std::vector<double> xs;
  for (int id : g.interior) xs.push_back(g.nodes[id][0]);
  std::sort(xs.begin(), xs.end());
  CHECK(xs[0] == doctest::Approx(0.25));
  CHECK(xs[1] == doctest::Approx(0.5));
  CHECK(xs[2] == doctest::Approx(0.75));
}

TEST_CASE("square grid: 3x3 interior lattice") {
  Vec lo = Vec::Zero(2), hi = Vec::Ones(2);
  Grid g = build_grid(DomainDescriptor::box(lo, hi), 5);
  CHECK(g.interior_count() == 9);
}

TEST_CASE("disc grid interior count equals lattice count inside the circle") {
  Vec c = Vec::Zero(2);
  Grid g = build_grid(DomainDescriptor::disc(c, 1.0), 33);
  // Independent count: lattice points of the bounding box strictly inside.
  const int res = 33;
  const double h = 2.0 / (res - 1);
  int count = 0;
  for (int i = 0; i < res; ++i)
    for (int j = 0; j < res; ++j) {
      double x = -1 + i * h, y = -1 + j * h;
      if (std::hypot(x, y) < 1.0 - 1e-9 * g.descriptor.diameter()) ++count;
    }
  CHECK(g.interior_count() == count);
}

TEST_CASE("grid node classification and normals") {
  Vec c = Vec::Zero(2);
  Grid g = build_grid(DomainDescriptor::disc(c, 1.0), 21);
  CHECK(g.interior.size() + g.boundary.size() == g.nodes.size());
  for (std::size_t b = 0; b < g.boundary.size(); ++b) {
    CHECK(g.normals[b].norm() == doctest::Approx(1.0).epsilon(1e-12));
    // Disc normal points radially outward wherever the node is off-center.
    const Vec& x = g.nodes[g.boundary[b]];
    if (x.norm() > 1e-9)
      CHECK(g.normals[b].dot(x.normalized()) == doctest::Approx(1.0).epsilon(1e-6));
  }
  CHECK(g.h[0] > 0);
  CHECK(g.h[1] > 0);
}

TEST_CASE("grid neighbor lookup matches lattice adjacency") {
  Grid g = build_grid(DomainDescriptor::interval(0, 1), 5);
  int mid = -1;
  for (int id = 0; id < (int)g.nodes.size(); ++id)
    if (std::abs(g.nodes[id][0] - 0.5) < 1e-12) mid = id;
  REQUIRE(mid >= 0);
  int left = g.neighbor(mid, 0, -1);
  int right = g.neighbor(mid, 0, +1);
  REQUIRE(left >= 0);
  REQUIRE(right >= 0);
  CHECK(g.nodes[left][0] == doctest::Approx(0.25));
  CHECK(g.nodes[right][0] == doctest::Approx(0.75));
}

TEST_CASE("hypothesis audit on the prototype field") {
  Grid g = build_grid(DomainDescriptor::interval(0, 1), 17);
  Vec x0 = Vec::Constant(1, 0.5);
  auto field = CoefficientField::prototype(Mat::Identity(1, 1), x0, 1.5, 1.0);
  auto rep = check_hypotheses(field, g, 10.0);
  CHECK(rep.h2_holds);
  CHECK(rep.h1_holds);
}

TEST_CASE("constant identity field satisfies both hypotheses with equality") {
  Grid g = build_grid(DomainDescriptor::interval(0, 1), 9);
  auto field = CoefficientField::constant(Mat::Identity(1, 1));
  auto rep = check_hypotheses(field, g, 10.0);
  CHECK(rep.h2_holds);
  CHECK(rep.h1_holds);
  CHECK(rep.h2_worst == doctest::Approx(0.0));
}

TEST_CASE("decreasing field fails the lower matrix bound at the farthest node") {
  Grid g = build_grid(DomainDescriptor::interval(0, 1), 9);
  Vec x0 = Vec::Constant(1, 0.5);
  std::vector<Mat> table;
  for (auto& x : g.nodes) {
    double r2 = (x - x0).squaredNorm();
    table.push_back((1.0 - r2) * Mat::Identity(1, 1));
  }
  auto field = CoefficientField::tabulated(g, table, x0);
  auto rep = check_hypotheses(field, g, 10.0);
  CHECK(!rep.h2_holds);
  // Worst violation is at a domain endpoint, distance 1/2 from x0.
  CHECK(std::abs(rep.h2_witness[0] - 0.5) == doctest::Approx(0.5));
  CHECK(rep.h2_worst == doctest::Approx(-0.25));
}

TEST_CASE("lower matrix bound is invariant under adding a constant PSD shift") {
  Grid g = build_grid(DomainDescriptor::interval(0, 1), 9);
  Vec x0 = Vec::Constant(1, 0.5);
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> unif(0.1, 2.0);
  for (int trial = 0; trial < 5; ++trial) {
    double shift = unif(rng);
    auto base = CoefficientField::prototype(Mat::Identity(1, 1), x0, 1.0, 1.0);
    auto shifted = CoefficientField::prototype(
        (1.0 + shift) * Mat::Identity(1, 1), x0, 1.0, 1.0);
    auto r1 = check_hypotheses(base, g, 10.0);
    auto r2 = check_hypotheses(shifted, g, 10.0);
    CHECK(r1.h2_holds == r2.h2_holds);
  }
}

TEST_CASE("asymmetric tabulated field is rejected with node location") {
  Grid g = build_grid(DomainDescriptor::box(Vec::Zero(2), Vec::Ones(2)), 5);
  std::vector<Mat> table(g.nodes.size(), Mat::Identity(2, 2));
  table[3](0, 1) = 0.5;  // symmetric partner left at 0
  auto field = CoefficientField::tabulated(g, table, Vec::Constant(2, 0.5));
  CHECK_THROWS_WITH_AS(check_hypotheses(field, g, 10.0),
                       doctest::Contains("asymmetric"), std::runtime_error);
}

TEST_CASE("flat boundary is 1-singular: dyadic points along the inward normal") {
  auto box = DomainDescriptor::box(Vec::Zero(2), Vec::Ones(2));
  Vec x0(2);
  x0 << 0.5, 0.0;
  auto pts = alpha_singular_sequence(box, x0, 1.0, 0.25, 6);
  REQUIRE(pts.size() == 6);
  for (std::size_t j = 1; j < pts.size(); ++j)
    CHECK((pts[j] - x0).norm() < (pts[j - 1] - x0).norm());
}

TEST_CASE("interior point is rejected by the singularity scan") {
  auto box = DomainDescriptor::box(Vec::Zero(2), Vec::Ones(2));
  CHECK_THROWS_AS(
      alpha_singular_sequence(box, Vec::Constant(2, 0.5), 1.0, 0.25, 3),
      std::invalid_argument);
}

TEST_CASE("quadratic cusp tip is 2-singular along the axis") {
  auto cusp = DomainDescriptor::cusp(2, 2.0, 1.0);
  Vec x0 = Vec::Zero(2);
  auto pts = alpha_singular_sequence(cusp, x0, 2.0, 0.25, 5);
  REQUIRE(pts.size() == 5);
  for (auto& p : pts) {
    CHECK(cusp.inside(p));
    // Admissibility: the ball of radius (1/4)|p|^2 stays inside.
    double r = 0.25 * (p - x0).squaredNorm();
    CHECK(cusp.inside(p + r * 0.999 * Vec::Unit(2, 0)));
  }
  for (std::size_t j = 1; j < pts.size(); ++j)
    CHECK((pts[j] - x0).norm() < (pts[j - 1] - x0).norm());
}

TEST_CASE("disc is star-shaped about its center with unit margin") {
  Grid g = build_grid(DomainDescriptor::disc(Vec::Zero(2), 1.0), 41);
  auto r = star_shape_check(g, Vec::Zero(2));
  CHECK(r.star_shaped);
  CHECK(r.min_projection == doctest::Approx(1.0).epsilon(0.15));
}

TEST_CASE("square is star-shaped about its center") {
  Grid g = build_grid(DomainDescriptor::box(Vec::Zero(2), Vec::Ones(2)), 17);
  auto r = star_shape_check(g, Vec::Constant(2, 0.5));
  CHECK(r.star_shaped);
}

TEST_CASE("annulus is not star-shaped about its center") {
  Grid g = build_grid(DomainDescriptor::annulus(Vec::Zero(2), 0.4, 1.0), 41);
  auto r = star_shape_check(g, Vec::Zero(2));
  CHECK(!r.star_shaped);
  CHECK(r.min_projection < 0);
}

TEST_CASE("star-shape verdict is translation covariant") {
  Grid g1 = build_grid(DomainDescriptor::disc(Vec::Zero(2), 1.0), 21);
  Grid g2 = build_grid(DomainDescriptor::disc(Vec::Constant(2, 3.0), 1.0), 21);
  auto r1 = star_shape_check(g1, Vec::Zero(2));
  auto r2 = star_shape_check(g2, Vec::Constant(2, 3.0));
  CHECK(r1.star_shaped == r2.star_shaped);
  CHECK(r1.min_projection == doctest::Approx(r2.min_projection).epsilon(1e-9));
}
