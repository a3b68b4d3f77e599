#include "fracbn/extension.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "fracbn/quadrature.hpp"

namespace fracbn {

Cylinder build_cylinder(const Grid& base, double s, double y_max, double ratio) {
  if (s <= 0 || s >= 1) throw std::invalid_argument("build_cylinder: s in (0,1)");
  Cylinder cyl;
  cyl.base = &base;
  cyl.s = s;
  const double diam = base.descriptor.diameter();
  cyl.y_max = y_max > 0 ? y_max : 5.0 * diam;
  if (cyl.y_max < 5.0 * diam)
    throw std::invalid_argument("build_cylinder: y_max below 5x base diameter");
  const double h = base.h.minCoeff();
  double first = std::min(0.5, h * h / cyl.y_max);
  cyl.y = graded_cells(cyl.y_max, first, ratio);
  return cyl;
}

GridFunction CylinderFunction::trace() const { return layer(0); }

GridFunction CylinderFunction::layer(int m) const {
  return GridFunction(*cylinder->base, values.col(m));
}

ExtensionSolver::ExtensionSolver(const Cylinder& cyl, const StiffnessMatrix& op)
    : cyl_(&cyl), op_(&op) {
  if (op.grid != cyl.base)
    throw std::invalid_argument("ExtensionSolver: operator grid mismatch");
  ni_ = cyl.base->interior_count();
  const int M = cyl.layers() - 1;  // cells; unknown layers 1..M
  const double s = cyl.s;

  // Per-cell shape function psi = (y^2s - y0^2s) / (y1^2s - y0^2s), the
  // solution of (y^(1-2s) psi')' = 0. Nodal profiles built from psi make the
  // first-layer quotient the exact discrete flux at y = 0; linear hats do
  // not (their nodal values stall at O(1) relative flux error). Reduces to
  // linear interpolation at s = 1/2. Moments of y^(1-2s) against psi are
  // closed-form.
  m00_.resize(M);
  m01_.resize(M);
  m11_.resize(M);
  vert_.resize(M);
  for (int m = 0; m < M; ++m) {
    const double y0 = cyl.y[m], y1 = cyl.y[m + 1];
    auto pw = [&](double p) {
      return (std::pow(y1, p) - std::pow(y0, p)) / p;
    };
    const double d = std::pow(y1, 2.0 * s) - std::pow(y0, 2.0 * s);
    const double mu0 = pw(2.0 - 2.0 * s);
    const double y02s = std::pow(y0, 2.0 * s);
    const double j1 = (pw(2.0) - y02s * mu0) / d;
    const double j2 =
        (pw(2.0 + 2.0 * s) - 2.0 * y02s * pw(2.0) + y02s * y02s * mu0) /
        (d * d);
    m00_[m] = mu0 - 2.0 * j1 + j2;
    m01_[m] = j1 - j2;
    m11_[m] = j2;
    vert_[m] = 2.0 * s / d;  // = int y^(1-2s) psi'^2 dy
  }

  // Block tridiagonal SPD system over layers 1..M (layer 0 is the trace,
  // layer M carries the natural weighted-Neumann cap).
  const auto& K = op.matrix;
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(static_cast<std::size_t>(K.nonZeros()) * 2 * M);
  auto add_block = [&](int br, int bc, double k_scale, double i_scale) {
    const int r0 = (br - 1) * ni_, c0 = (bc - 1) * ni_;
    if (k_scale != 0.0)
      for (int col = 0; col < K.outerSize(); ++col)
        for (Eigen::SparseMatrix<double>::InnerIterator it(K, col); it; ++it)
          trip.emplace_back(r0 + static_cast<int>(it.row()), c0 + col,
                            k_scale * it.value());
    if (i_scale != 0.0)
      for (int i = 0; i < ni_; ++i) trip.emplace_back(r0 + i, c0 + i, i_scale);
  };
  for (int j = 1; j <= M; ++j) {
    double kd = m11_[j - 1], id = vert_[j - 1];
    if (j < M) {
      kd += m00_[j];
      id += vert_[j];
      add_block(j, j + 1, m01_[j], -vert_[j]);
    }
    add_block(j, j, kd, id);
    if (j > 1) add_block(j, j - 1, m01_[j - 1], -vert_[j - 1]);
  }
  system_.resize(ni_ * M, ni_ * M);
  system_.setFromTriplets(trip.begin(), trip.end());
  system_.makeCompressed();

  // Right-hand side operator: -(m01^(0) K - V^(0) I) applied to u.
  {
    std::vector<Eigen::Triplet<double>> ct;
    for (int col = 0; col < K.outerSize(); ++col)
      for (Eigen::SparseMatrix<double>::InnerIterator it(K, col); it; ++it)
        ct.emplace_back(static_cast<int>(it.row()), col, -m01_[0] * it.value());
    for (int i = 0; i < ni_; ++i)
      ct.emplace_back(i, i, vert_[0]);
    coupling_.resize(ni_, ni_);
    coupling_.setFromTriplets(ct.begin(), ct.end());
  }

  ldlt_ = std::make_unique<Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>>>();
  ldlt_->compute(system_);
  if (ldlt_->info() != Eigen::Success)
    throw std::runtime_error("ExtensionSolver: factorization failed");
}

CylinderFunction ExtensionSolver::extend(const GridFunction& u) const {
  if (u.grid != cyl_->base)
    throw std::invalid_argument("extend: trace grid mismatch");
  const int M = cyl_->layers() - 1;
  Vec rhs = Vec::Zero(ni_ * M);
  rhs.head(ni_) = coupling_ * u.values;
  Vec sol = ldlt_->solve(rhs);
  double residual = (system_ * sol - rhs).norm();
  double scale = std::max(rhs.norm(), 1e-300);
  if (residual > 1e-8 * scale)
    throw std::runtime_error("extend: linear solve residual " +
                             std::to_string(residual / scale));
  CylinderFunction w;
  w.cylinder = cyl_;
  w.values.resize(ni_, M + 1);
  w.values.col(0) = u.values;
  for (int j = 1; j <= M; ++j) w.values.col(j) = sol.segment((j - 1) * ni_, ni_);
  return w;
}

double ExtensionSolver::slab_energy(const CylinderFunction& w, int m) const {
  const double vol = cyl_->base->cell_volume();
  const auto& K = op_->matrix;
  const Vec& a = w.values.col(m);
  const Vec& b = w.values.col(m + 1);
  const double aa = a.dot(K * a), ab = a.dot(K * b), bb = b.dot(K * b);
  double horiz = m00_[m] * aa + 2.0 * m01_[m] * ab + m11_[m] * bb;
  double vert = vert_[m] * (b - a).squaredNorm();
  return vol * (horiz + vert);
}

double ExtensionSolver::weighted_energy(const CylinderFunction& w) const {
  if (w.cylinder != cyl_)
    throw std::invalid_argument("weighted_energy: cylinder mismatch");
  double e = 0.0;
  for (int m = 0; m < cyl_->layers() - 1; ++m) e += slab_energy(w, m);
  return e;
}

CylinderFunction solve_extension(const ExtensionSolver& solver,
                                 const GridFunction& u) {
  return solver.extend(u);
}

DtnResult dtn_trace(const CylinderFunction& w, double s, double c_s) {
  const Cylinder& cyl = *w.cylinder;
  if (cyl.layers() < 3) throw std::invalid_argument("dtn_trace: too few layers");
  const double y1 = cyl.y[1], y2 = cyl.y[2];
  Vec b1 = (w.values.col(1) - w.values.col(0)) / std::pow(y1, 2.0 * s);
  Vec b2 = (w.values.col(2) - w.values.col(0)) / std::pow(y2, 2.0 * s);
  // Next term in the small-y expansion is y^2; eliminate it.
  Vec rich = (b1 * (y2 * y2) - b2 * (y1 * y1)) / (y2 * y2 - y1 * y1);
  DtnResult out;
  // dtn = -c_s lim y^(1-2s) dw/dy; with w ~ w(0) + b y^(2s) the limit is
  // 2s b, and b is estimated by the first-layer quotient.
  out.value = GridFunction(*cyl.base, -c_s * 2.0 * s * b1);
  double denom = std::max(rich.norm(), 1e-300);
  out.layer_consistency = (b1 - rich).norm() / denom;
  return out;
}

CsCalibration calibrate_cs(const SpectralDecomposition& S,
                           const ExtensionSolver& solver, double s,
                           const std::vector<GridFunction>& probes,
                           double spread_tol) {
  if (probes.empty()) throw std::invalid_argument("calibrate_cs: no probes");
  CsCalibration cal;
  for (const auto& u : probes) {
    double num = hs_inner(S, s, u, u);
    double den = solver.weighted_energy(solver.extend(u));
    if (den <= 0) throw std::runtime_error("calibrate_cs: degenerate probe");
    cal.ratios.push_back(num / den);
  }
  std::vector<double> sorted = cal.ratios;
  std::sort(sorted.begin(), sorted.end());
  cal.c_s = sorted[sorted.size() / 2];
  cal.spread = sorted.back() / sorted.front() - 1.0;
  if (cal.spread > spread_tol)
    throw std::runtime_error(
        "calibrate_cs: isometry ratios spread " + std::to_string(cal.spread) +
        " exceeds tolerance (cylinder under-resolved)");
  return cal;
}

double j_energy(const ExtensionSolver& solver, const CylinderFunction& w,
                double lambda, double c_s) {
  GridFunction u = w.trace();
  return c_s * solver.weighted_energy(w) - lambda * u.l2_inner(u);
}

double cs_reference(double s) {
  return std::pow(2.0, 2.0 * s - 1.0) * std::tgamma(s) / std::tgamma(1.0 - s);
}

}  // namespace fracbn
