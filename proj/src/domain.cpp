#include "fracbn/domain.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>
#include <stdexcept>

#include "fracbn/quadrature.hpp"

namespace fracbn {

namespace {

constexpr double kGeomTol = 1e-12;

double polygon_signed_distance(const std::vector<Eigen::Vector2d>& v,
                               const Eigen::Vector2d& p) {
  const int m = static_cast<int>(v.size());
  double d2 = std::numeric_limits<double>::max();
  int winding = 0;
  for (int i = 0; i < m; ++i) {
    const Eigen::Vector2d a = v[i];
    const Eigen::Vector2d b = v[(i + 1) % m];
    const Eigen::Vector2d e = b - a;
    const Eigen::Vector2d w = p - a;
    double t = e.squaredNorm() > 0 ? std::clamp(w.dot(e) / e.squaredNorm(), 0.0, 1.0) : 0.0;
    d2 = std::min(d2, (w - t * e).squaredNorm());
    // Crossing-number winding test.
    bool cond1 = a.y() <= p.y();
    bool cond2 = b.y() > p.y();
    double cross = e.x() * w.y() - e.y() * w.x();
    if (cond1 && cond2 && cross > 0) ++winding;
    if (!cond1 && !cond2 && cross < 0) --winding;
  }
  double d = std::sqrt(d2);
  return winding != 0 ? -d : d;
}

}  // namespace

DomainDescriptor DomainDescriptor::interval(double a, double b) {
  if (!(b > a)) throw std::invalid_argument("interval: degenerate region");
  DomainDescriptor d;
  d.kind = Kind::Interval;
  d.dim = 1;
  d.lo = Vec::Constant(1, a);
  d.hi = Vec::Constant(1, b);
  return d;
}

DomainDescriptor DomainDescriptor::box(const Vec& lo, const Vec& hi) {
  DomainDescriptor d;
  d.kind = Kind::Box;
  d.dim = static_cast<int>(lo.size());
  if (d.dim < 1 || d.dim > 3) throw std::invalid_argument("box: unsupported dimension");
  if (((hi - lo).array() <= 0).any()) throw std::invalid_argument("box: degenerate region");
  d.lo = lo;
  d.hi = hi;
  return d;
}

DomainDescriptor DomainDescriptor::disc(const Vec& center, double radius) {
  DomainDescriptor d;
  d.kind = Kind::Disc;
  d.dim = static_cast<int>(center.size());
  if (d.dim < 1 || d.dim > 3) throw std::invalid_argument("disc: unsupported dimension");
  if (radius <= 0) throw std::invalid_argument("disc: degenerate region");
  d.center = center;
  d.radius = radius;
  return d;
}

DomainDescriptor DomainDescriptor::annulus(const Vec& center, double r_in,
                                           double r_out) {
  if (!(0 < r_in && r_in < r_out)) throw std::invalid_argument("annulus: bad radii");
  DomainDescriptor d = disc(center, r_out);
  d.kind = Kind::Annulus;
  d.inner_radius = r_in;
  return d;
}

DomainDescriptor DomainDescriptor::polygon(std::vector<Eigen::Vector2d> vertices) {
  if (vertices.size() < 3) throw std::invalid_argument("polygon: need >= 3 vertices");
  DomainDescriptor d;
  d.kind = Kind::Polygon;
  d.dim = 2;
  d.vertices = std::move(vertices);
  return d;
}

DomainDescriptor DomainDescriptor::cusp(int dim, double power, double height) {
  if (dim < 2 || dim > 3) throw std::invalid_argument("cusp: unsupported dimension");
  if (power < 1 || height <= 0) throw std::invalid_argument("cusp: bad parameters");
  DomainDescriptor d;
  d.kind = Kind::Cusp;
  d.dim = dim;
  d.cusp_power = power;
  d.cusp_height = height;
  return d;
}

double DomainDescriptor::levelset(const Vec& x) const {
  switch (kind) {
    case Kind::Interval:
    case Kind::Box: {
      double v = -std::numeric_limits<double>::max();
      for (int i = 0; i < dim; ++i)
        v = std::max(v, std::max(lo[i] - x[i], x[i] - hi[i]));
      return v;
    }
    case Kind::Disc:
      return (x - center).norm() - radius;
    case Kind::Annulus: {
      double r = (x - center).norm();
      return std::max(r - radius, inner_radius - r);
    }
    case Kind::Polygon:
      return polygon_signed_distance(vertices, {x[0], x[1]});
    case Kind::Cusp: {
      const double xn = x[dim - 1];
      double rp = 0.0;
      for (int i = 0; i < dim - 1; ++i) rp += x[i] * x[i];
      rp = std::sqrt(rp);
      double g = rp - std::pow(std::max(xn, 0.0), cusp_power);
      return std::max({g, -xn, xn - cusp_height});
    }
  }
  throw std::logic_error("levelset: bad kind");
}

Vec DomainDescriptor::levelset_gradient(const Vec& x) const {
  Vec g(dim);
  const double step = 1e-6 * std::max(1.0, diameter());
  for (int i = 0; i < dim; ++i) {
    Vec xp = x, xm = x;
    xp[i] += step;
    xm[i] -= step;
    g[i] = (levelset(xp) - levelset(xm)) / (2 * step);
  }
  return g;
}

Vec DomainDescriptor::bounding_lo() const {
  switch (kind) {
    case Kind::Interval:
    case Kind::Box:
      return lo;
    case Kind::Disc:
    case Kind::Annulus:
      return center.array() - radius;
    case Kind::Polygon: {
      Vec v = Vec::Constant(2, std::numeric_limits<double>::max());
      for (auto& p : vertices) {
        v[0] = std::min(v[0], p.x());
        v[1] = std::min(v[1], p.y());
      }
      return v;
    }
    case Kind::Cusp: {
      double w = std::pow(cusp_height, cusp_power);
      Vec v = Vec::Constant(dim, -w);
      v[dim - 1] = 0.0;
      return v;
    }
  }
  throw std::logic_error("bounding_lo: bad kind");
}

Vec DomainDescriptor::bounding_hi() const {
  switch (kind) {
    case Kind::Interval:
    case Kind::Box:
      return hi;
    case Kind::Disc:
    case Kind::Annulus:
      return center.array() + radius;
    case Kind::Polygon: {
      Vec v = Vec::Constant(2, -std::numeric_limits<double>::max());
      for (auto& p : vertices) {
        v[0] = std::max(v[0], p.x());
        v[1] = std::max(v[1], p.y());
      }
      return v;
    }
    case Kind::Cusp: {
      double w = std::pow(cusp_height, cusp_power);
      Vec v = Vec::Constant(dim, w);
      v[dim - 1] = cusp_height;
      return v;
    }
  }
  throw std::logic_error("bounding_hi: bad kind");
}

double DomainDescriptor::diameter() const {
  return (bounding_hi() - bounding_lo()).norm();
}

std::string DomainDescriptor::canonical() const {
  std::ostringstream os;
  os.precision(17);
  os << "kind=" << static_cast<int>(kind) << ";dim=" << dim;
  auto put = [&](const char* name, const Vec& v) {
    os << ";" << name << "=";
    for (int i = 0; i < v.size(); ++i) os << v[i] << ",";
  };
  switch (kind) {
    case Kind::Interval:
    case Kind::Box:
      put("lo", lo);
      put("hi", hi);
      break;
    case Kind::Disc:
    case Kind::Annulus:
      put("c", center);
      os << ";r=" << radius << ";ri=" << inner_radius;
      break;
    case Kind::Polygon:
      os << ";v=";
      for (auto& p : vertices) os << p.x() << "," << p.y() << ";";
      break;
    case Kind::Cusp:
      os << ";p=" << cusp_power << ";h=" << cusp_height;
      break;
  }
  return os.str();
}

double Grid::cell_volume() const {
  double v = 1.0;
  for (int i = 0; i < dim; ++i) v *= h[i];
  return v;
}

int Grid::neighbor(int node, int axis, int step) const {
  std::int64_t stride = 1;
  for (int a = 0; a < axis; ++a) stride *= shape[a];
  std::int64_t key = lattice_key[node] + step * stride;
  // Guard against wrapping across rows.
  std::int64_t coord = (lattice_key[node] / stride) % shape[axis];
  if (coord + step < 0 || coord + step >= shape[axis]) return -1;
  auto it = node_at.find(key);
  return it == node_at.end() ? -1 : it->second;
}

std::uint64_t Grid::hash() const {
  Fnv1a f;
  f.add(descriptor.canonical());
  f.add(static_cast<std::uint64_t>(nodes.size()));
  f.add(static_cast<std::uint64_t>(interior.size()));
  for (int i = 0; i < dim; ++i) f.add(h[i]);
  return f.digest();
}

Grid build_grid(const DomainDescriptor& descriptor, int resolution) {
  if (resolution < 3)
    throw std::invalid_argument("build_grid: resolution must be >= 3 per axis");
  const int n = descriptor.dim;
  if (n < 1 || n > 3)
    throw std::invalid_argument("build_grid: unsupported descriptor dimension");

  Grid g;
  g.descriptor = descriptor;
  g.dim = n;
  const Vec lo = descriptor.bounding_lo();
  const Vec hi = descriptor.bounding_hi();
  g.shape.assign(n, resolution);
  g.h = (hi - lo) / double(resolution - 1);
  if ((g.h.array() <= 0).any())
    throw std::invalid_argument("build_grid: degenerate region");

  const double tol = 1e-9 * descriptor.diameter();

  // Interior nodes are the lattice points strictly inside the region. The
  // boundary set is the ghost layer: lattice points not strictly inside that
  // have an interior axis neighbor; Dirichlet data lives there.
  std::int64_t total = 1;
  for (int a = 0; a < n; ++a) total *= g.shape[a];
  auto point_of = [&](std::int64_t key) {
    std::int64_t rem = key;
    Vec x(n);
    for (int a = 0; a < n; ++a) {
      x[a] = lo[a] + static_cast<int>(rem % g.shape[a]) * g.h[a];
      rem /= g.shape[a];
    }
    return x;
  };
  std::vector<signed char> strict(total, 0);
  for (std::int64_t key = 0; key < total; ++key)
    strict[key] = descriptor.levelset(point_of(key)) < -tol ? 1 : 0;

  auto in_ghost_layer = [&](std::int64_t key) {
    std::int64_t stride = 1;
    std::int64_t rem = key;
    for (int a = 0; a < n; ++a) {
      int c = static_cast<int>(rem % g.shape[a]);
      rem /= g.shape[a];
      if ((c > 0 && strict[key - stride]) ||
          (c < g.shape[a] - 1 && strict[key + stride]))
        return true;
      stride *= g.shape[a];
    }
    return false;
  };

  g.interior_rank.clear();
  for (std::int64_t key = 0; key < total; ++key) {
    bool is_interior = strict[key];
    if (!is_interior && !in_ghost_layer(key)) continue;
    int id = static_cast<int>(g.nodes.size());
    g.node_at.emplace(key, id);
    g.nodes.push_back(point_of(key));
    g.lattice_key.push_back(key);
    if (is_interior) {
      g.interior_rank.push_back(static_cast<int>(g.interior.size()));
      g.interior.push_back(id);
    } else {
      g.interior_rank.push_back(-1);
      g.boundary.push_back(id);
      Vec grad = descriptor.levelset_gradient(g.nodes[id]);
      double norm = grad.norm();
      if (norm < kGeomTol) {
        // Degenerate corner; fall back to direction away from centroid.
        grad = g.nodes[id] - 0.5 * (lo + hi);
        norm = grad.norm();
        if (norm < kGeomTol) {
          grad = Vec::Zero(n);
          grad[0] = 1.0;
          norm = 1.0;
        }
      }
      g.normals.push_back(grad / norm);
    }
  }
  if (g.interior.empty())
    throw std::invalid_argument("build_grid: no interior nodes at this resolution");
  return g;
}

CoefficientField CoefficientField::constant(const Mat& A) {
  CoefficientField f;
  f.kind = Kind::Constant;
  f.dim = static_cast<int>(A.rows());
  f.A0 = A;
  f.x0 = Vec::Zero(f.dim);
  return f;
}

CoefficientField CoefficientField::prototype(const Mat& A0, const Vec& x0,
                                             double sigma, double C0) {
  if (sigma <= 0 || C0 <= 0)
    throw std::invalid_argument("prototype field: sigma and C0 must be positive");
  CoefficientField f;
  f.kind = Kind::Prototype;
  f.dim = static_cast<int>(A0.rows());
  f.A0 = A0;
  f.x0 = x0;
  f.sigma = sigma;
  f.C0 = C0;
  return f;
}

CoefficientField CoefficientField::tabulated(const Grid& grid,
                                             std::vector<Mat> values,
                                             const Vec& x0) {
  if (values.size() != grid.nodes.size())
    throw std::invalid_argument("tabulated field: one matrix per grid node required");
  CoefficientField f;
  f.kind = Kind::Tabulated;
  f.dim = grid.dim;
  f.table_grid = &grid;
  f.table = std::move(values);
  f.x0 = x0;
  f.A0 = Mat::Identity(f.dim, f.dim);
  return f;
}

Mat CoefficientField::evaluate(const Vec& x) const {
  switch (kind) {
    case Kind::Constant:
      return A0;
    case Kind::Prototype: {
      double r = (x - x0).norm();
      return A0 + C0 * std::pow(r, sigma) * Mat::Identity(dim, dim);
    }
    case Kind::Tabulated: {
      // Nearest kept node.
      const Grid& g = *table_grid;
      double best = std::numeric_limits<double>::max();
      int best_id = 0;
      for (int id = 0; id < static_cast<int>(g.nodes.size()); ++id) {
        double d = (g.nodes[id] - x).squaredNorm();
        if (d < best) {
          best = d;
          best_id = id;
        }
      }
      return table[best_id];
    }
  }
  throw std::logic_error("evaluate: bad kind");
}

std::vector<Mat> CoefficientField::gradient(const Vec& x) const {
  std::vector<Mat> g(dim, Mat::Zero(dim, dim));
  if (kind == Kind::Constant) return g;
  if (kind == Kind::Prototype) {
    const Vec d = x - x0;
    const double r = d.norm();
    if (r > 0) {
      const double factor = C0 * sigma * std::pow(r, sigma - 2.0);
      for (int k = 0; k < dim; ++k)
        g[k] = factor * d[k] * Mat::Identity(dim, dim);
    }
    return g;
  }
  throw std::runtime_error("coefficient gradient unavailable for tabulated field");
}

std::string CoefficientField::canonical() const {
  std::ostringstream os;
  os.precision(17);
  os << "kind=" << static_cast<int>(kind) << ";dim=" << dim << ";A0=";
  for (int i = 0; i < A0.rows(); ++i)
    for (int j = 0; j < A0.cols(); ++j) os << A0(i, j) << ",";
  os << ";x0=";
  for (int i = 0; i < x0.size(); ++i) os << x0[i] << ",";
  os << ";sigma=" << sigma << ";C0=" << C0;
  if (kind == Kind::Tabulated) {
    os << ";table=";
    for (auto& m : table)
      for (int i = 0; i < m.size(); ++i) os << m.data()[i] << ",";
  }
  return os.str();
}

std::uint64_t CoefficientField::hash() const {
  Fnv1a f;
  f.add(canonical());
  return f.digest();
}

HypothesisReport check_hypotheses(const CoefficientField& field,
                                  const Grid& grid,
                                  double neighborhood_radius) {
  HypothesisReport rep;
  const Mat A_x0 = field.evaluate(field.x0);
  const int n = field.dim;
  double h2_worst = std::numeric_limits<double>::max();
  double h1_worst = std::numeric_limits<double>::max();
  Vec h2_witness, h1_witness;
  bool h1_seen = false;

  for (const Vec& x : grid.nodes) {
    Mat A = field.evaluate(x);
    double asym = (A - A.transpose()).norm();
    if (asym > 1e-10 * std::max(1.0, A.norm())) {
      std::ostringstream os;
      os << "check_hypotheses: asymmetric A(x) at node (";
      for (int i = 0; i < n; ++i) os << x[i] << (i + 1 < n ? "," : ")");
      throw std::runtime_error(os.str());
    }
    Mat diff2 = A - A_x0;
    Eigen::SelfAdjointEigenSolver<Mat> es2(0.5 * (diff2 + diff2.transpose()));
    double min2 = es2.eigenvalues().minCoeff();
    if (min2 < h2_worst) {
      h2_worst = min2;
      h2_witness = x;
    }
    if ((x - field.x0).norm() <= neighborhood_radius) {
      h1_seen = true;
      Mat diff1 = A_x0 +
                  field.C0 * std::pow((x - field.x0).norm(), field.sigma) *
                      Mat::Identity(n, n) -
                  A;
      Eigen::SelfAdjointEigenSolver<Mat> es1(0.5 * (diff1 + diff1.transpose()));
      double min1 = es1.eigenvalues().minCoeff();
      if (min1 < h1_worst) {
        h1_worst = min1;
        h1_witness = x;
      }
    }
  }
  const double tol = 1e-10 * std::max(1.0, A_x0.norm());
  rep.h2_worst = h2_worst;
  rep.h2_witness = h2_witness;
  rep.h2_holds = h2_worst >= -tol;
  if (h1_seen) {
    rep.h1_worst = h1_worst;
    rep.h1_witness = h1_witness;
    rep.h1_holds = h1_worst >= -tol;
  } else {
    rep.h1_worst = 0.0;
    rep.h1_holds = true;  // vacuous: no node in the neighborhood
  }
  return rep;
}

std::vector<Vec> alpha_singular_sequence(const DomainDescriptor& descriptor,
                                         const Vec& x0, double alpha,
                                         double delta, int count) {
  const int n = descriptor.dim;
  const double tol = 1e-9 * descriptor.diameter();
  if (std::abs(descriptor.levelset(x0)) > 1e-6 * descriptor.diameter())
    throw std::invalid_argument(
        "alpha_singular_sequence: x0 must lie on the boundary");
  if (alpha < 1) throw std::invalid_argument("alpha_singular_sequence: alpha >= 1 required");

  // Inward direction from the level set gradient.
  Vec inward = -descriptor.levelset_gradient(x0);
  double norm = inward.norm();
  if (norm < 1e-12) {
    // Cusp tip and similar: probe for an inside direction.
    inward = Vec::Zero(n);
    inward[n - 1] = 1.0;
  } else {
    inward /= norm;
  }

  // Directions on the unit sphere used to sample ball boundaries.
  std::vector<Vec> sphere;
  if (n == 1) {
    sphere.push_back(Vec::Constant(1, 1.0));
    sphere.push_back(Vec::Constant(1, -1.0));
  } else {
    std::mt19937_64 rng(20240811ull);
    std::normal_distribution<double> gauss;
    const int m = n == 2 ? 96 : 256;
    for (int i = 0; i < m; ++i) {
      Vec d(n);
      for (int k = 0; k < n; ++k) d[k] = gauss(rng);
      if (d.norm() < 1e-8) {
        --i;
        continue;
      }
      sphere.push_back(d.normalized());
    }
  }

  auto ball_inside = [&](const Vec& c, double r) {
    if (descriptor.levelset(c) >= -tol) return false;
    for (const Vec& d : sphere)
      if (descriptor.levelset(c + r * d) >= -tol) return false;
    return true;
  };

  std::vector<Vec> out;
  double base = 0.25 * descriptor.diameter();
  for (int j = 0; j < count; ++j) {
    double t = base * std::pow(0.5, j);
    bool found = false;
    // Walk inward; shrink if the ball pokes out.
    for (int attempt = 0; attempt < 40 && !found; ++attempt) {
      Vec c = x0 + t * inward;
      double r = delta * std::pow((c - x0).norm(), alpha);
      if (r > 0 && ball_inside(c, r)) {
        out.push_back(c);
        found = true;
      } else {
        t *= 0.7;
      }
      if (!out.empty() && found &&
          (out.back() - x0).norm() >= (out.size() > 1
                                           ? (out[out.size() - 2] - x0).norm()
                                           : std::numeric_limits<double>::max())) {
        // Must be strictly decreasing; keep shrinking.
        out.pop_back();
        found = false;
        t *= 0.7;
      }
    }
    if (!found)
      throw std::runtime_error(
          "alpha_singular_sequence: no admissible point at index " +
          std::to_string(j) + " (region not alpha-singular for this delta)");
    base = (out.back() - x0).norm();  // next point halves from the accepted one
  }
  return out;
}

StarShapeResult star_shape_check(const Grid& grid, const Vec& x0) {
  StarShapeResult r;
  r.min_projection = std::numeric_limits<double>::max();
  for (std::size_t b = 0; b < grid.boundary.size(); ++b) {
    const Vec& x = grid.nodes[grid.boundary[b]];
    double proj = (x - x0).dot(grid.normals[b]);
    r.min_projection = std::min(r.min_projection, proj);
  }
  r.star_shaped = r.min_projection > 0.0;
  return r;
}

}  // namespace fracbn
