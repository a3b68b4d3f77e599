#include "fracbn/pohozaev.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

namespace fracbn {

Mat a_prime(const CoefficientField& field, const Vec& x0, const Vec& x) {
  const int n = field.dim;
  Mat out = Mat::Zero(n, n);
  const Vec d = x - x0;
  if (field.has_gradient()) {
    std::vector<Mat> grads = field.gradient(x);
    for (int k = 0; k < n; ++k) out += d[k] * grads[k];
  } else {
    const double step = 1e-5 * (1.0 + x.norm());
    for (int k = 0; k < n; ++k) {
      Vec xp = x, xm = x;
      xp[k] += step;
      xm[k] -= step;
      out += d[k] * (field.evaluate(xp) - field.evaluate(xm)) / (2.0 * step);
    }
  }
  return 0.5 * (out + out.transpose());
}

namespace {

/// Nodal weights of int y^(1-2s) f dy on one cell against the cell-harmonic
/// shape functions in y^(2s).
void cell_weights(double y0, double y1, double s, double& w0, double& w1) {
  auto pw = [&](double p) { return (std::pow(y1, p) - std::pow(y0, p)) / p; };
  const double d = std::pow(y1, 2.0 * s) - std::pow(y0, 2.0 * s);
  w1 = (pw(2.0) - std::pow(y0, 2.0 * s) * pw(2.0 - 2.0 * s)) / d;
  w0 = pw(2.0 - 2.0 * s) - w1;
}

/// Multilinear interpolation of interior nodal values; zero at boundary and
/// missing lattice points (the Dirichlet convention).
double interp_layer(const Grid& grid, const Vec& layer, const Vec& x) {
  const int n = grid.dim;
  const Vec lo = grid.descriptor.bounding_lo();
  std::vector<int> base(n);
  std::vector<double> frac(n);
  for (int a = 0; a < n; ++a) {
    double c = (x[a] - lo[a]) / grid.h[a];
    int i = static_cast<int>(std::floor(c));
    i = std::clamp(i, 0, grid.shape[a] - 2);
    base[a] = i;
    frac[a] = std::clamp(c - i, 0.0, 1.0);
  }
  double acc = 0.0;
  for (int corner = 0; corner < (1 << n); ++corner) {
    double wgt = 1.0;
    std::int64_t key = 0, stride = 1;
    for (int a = 0; a < n; ++a) {
      const int bit = (corner >> a) & 1;
      wgt *= bit ? frac[a] : 1.0 - frac[a];
      key += (base[a] + bit) * stride;
      stride *= grid.shape[a];
    }
    if (wgt == 0.0) continue;
    auto it = grid.node_at.find(key);
    if (it == grid.node_at.end()) continue;
    const int rank = grid.interior_rank[it->second];
    if (rank >= 0) acc += wgt * layer[rank];
  }
  return acc;
}

}  // namespace

PohozaevReport pohozaev_sides(const GridFunction& u, const CylinderFunction& w,
                              double lambda, const CoefficientField& field,
                              const Vec& x0, double c_s) {
  const Grid& grid = *u.grid;
  const Cylinder& cyl = *w.cylinder;
  const double s = cyl.s;
  const int n = grid.dim;
  const int layers = cyl.layers();
  const double hbar = grid.h.minCoeff();
  const double vol = grid.cell_volume();

  PohozaevReport rep;

  // Lateral boundary term: on the boundary w vanishes for all y, so the
  // spatial gradient is normal and the integrand reduces to
  // (dw/dnu)^2 nu^T A nu (x - x0).nu.
  double lhs = 0.0;
  double stencil_num = 0.0, stencil_den = 0.0;
  for (std::size_t bi = 0; bi < grid.boundary.size(); ++bi) {
    const int b = grid.boundary[bi];
    const Vec& nu = grid.normals[bi];
    Vec xs = grid.nodes[b] - grid.descriptor.levelset(grid.nodes[b]) * nu;
    const double proj = (xs - x0).dot(nu);
    const double anorm = nu.dot(field.evaluate(xs) * nu);
    double dsigma = 0.0;
    for (int a = 0; a < n; ++a) dsigma += std::abs(nu[a]) / grid.h[a];
    dsigma *= vol;

    std::vector<double> q(layers, 0.0);
    for (int m = 0; m < layers; ++m) {
      const Vec layer = w.values.col(m);
      const double v1 = interp_layer(grid, layer, xs - hbar * nu);
      const double v2 = interp_layer(grid, layer, xs - 2.0 * hbar * nu);
      const double v4 = interp_layer(grid, layer, xs - 4.0 * hbar * nu);
      const double dn = (v2 - 4.0 * v1) / (2.0 * hbar);
      const double dn_coarse = (v4 - 4.0 * v2) / (4.0 * hbar);
      stencil_num += (dn - dn_coarse) * (dn - dn_coarse);
      stencil_den += dn * dn;
      q[m] = dn * dn * anorm * proj;
    }
    double iy = 0.0;
    for (int m = 0; m + 1 < layers; ++m) {
      double w0, w1;
      cell_weights(cyl.y[m], cyl.y[m + 1], s, w0, w1);
      iy += w0 * q[m] + w1 * q[m + 1];
    }
    lhs += 0.5 * iy * dsigma;
  }
  rep.lhs = lhs;
  rep.stencil_disagreement =
      stencil_den > 0 ? std::sqrt(stencil_num / stencil_den) : 0.0;
  rep.stencil_stable = rep.stencil_disagreement <= 0.2;

  rep.lambda_term = (s / c_s) * lambda * u.l2_inner(u);

  // Volume term with the radial coefficient derivative.
  bool aprime_zero = field.kind == CoefficientField::Kind::Constant;
  double ap_energy = 0.0;
  if (!aprime_zero) {
    const int ni = grid.interior_count();
    std::vector<Mat> ap(ni);
    for (int i = 0; i < ni; ++i)
      ap[i] = a_prime(field, x0, grid.nodes[grid.interior[i]]);
    std::vector<double> em(layers, 0.0);
    for (int m = 0; m < layers; ++m) {
      const Vec layer = w.values.col(m);
      double e = 0.0;
      for (int i = 0; i < ni; ++i) {
        const int node = grid.interior[i];
        Vec g(n);
        for (int a = 0; a < n; ++a) {
          const int np = grid.neighbor(node, a, 1);
          const int nm = grid.neighbor(node, a, -1);
          const double vp =
              np >= 0 && grid.interior_rank[np] >= 0 ? layer[grid.interior_rank[np]] : 0.0;
          const double vm =
              nm >= 0 && grid.interior_rank[nm] >= 0 ? layer[grid.interior_rank[nm]] : 0.0;
          g[a] = (vp - vm) / (2.0 * grid.h[a]);
        }
        e += g.dot(ap[i] * g);
      }
      em[m] = vol * e;
    }
    for (int m = 0; m + 1 < layers; ++m) {
      double w0, w1;
      cell_weights(cyl.y[m], cyl.y[m + 1], s, w0, w1);
      ap_energy += w0 * em[m] + w1 * em[m + 1];
    }
  }
  rep.aprime_term = -0.5 * ap_energy;
  rep.rhs = rep.lambda_term + rep.aprime_term;

  const double scale = std::max({std::abs(rep.lhs), std::abs(rep.rhs), 1e-12});
  rep.residual = std::abs(rep.lhs - rep.rhs) / scale;
  rep.lhs_positive = rep.lhs > 1e-8 * scale;
  rep.rhs_nonpositive = rep.rhs <= 1e-8 * scale;
  return rep;
}

NonexistenceReport nonexistence_audit(const Grid& grid,
                                      const CoefficientField& field, double s,
                                      double lambda, const Vec& x0,
                                      const MinimizeOptions& opts) {
  NonexistenceReport rep;
  auto star = star_shape_check(grid, x0);
  rep.star_min_projection = star.min_projection;
  if (!star.star_shaped) {
    rep.skip_reason = "region is not star-shaped about the given point";
    return rep;
  }
  double ap_min = std::numeric_limits<double>::infinity();
  for (const Vec& x : grid.nodes) {
    Mat ap = a_prime(field, x0, x);
    Eigen::SelfAdjointEigenSolver<Mat> es(ap);
    ap_min = std::min(ap_min, es.eigenvalues().minCoeff());
  }
  rep.aprime_min_eigenvalue = ap_min;
  if (ap_min < -1e-8) {
    rep.skip_reason = "radial coefficient derivative is not PSD everywhere";
    return rep;
  }
  if (lambda > 0) {
    rep.skip_reason = "audit requires lambda <= 0";
    return rep;
  }
  rep.preconditions_ok = true;

  StiffnessMatrix op = assemble(grid, field);
  SpectralDecomposition S = decompose(op, grid.interior_count());
  MinimizerResult min = minimize_nehari(S, s, lambda, opts);
  rep.s_lambda = min.s_lambda;
  rep.minimizer_converged = min.converged;
  rep.concentration = min.concentration;
  rep.cell_mass_ratio = min.cell_mass_ratio;

  Cylinder cyl = build_cylinder(grid, s);
  ExtensionSolver solver(cyl, op);
  std::vector<GridFunction> probes;
  for (int k = 0; k < std::min(3, S.count); ++k)
    probes.emplace_back(grid, S.eigenvectors.col(k));
  auto cal = calibrate_cs(S, solver, s, probes);

  auto constants = compute_sharp_constants(grid.dim, s);
  rep.threshold_gap =
      threshold(field.evaluate(x0), grid.dim, s, cal.c_s, constants.Ks) -
      min.s_lambda;

  CylinderFunction w = solver.extend(min.minimizer);
  rep.pohozaev = pohozaev_sides(min.minimizer, w, lambda, field, x0, cal.c_s);
  rep.audit_pass = rep.pohozaev.lhs_positive && rep.pohozaev.rhs_nonpositive;
  return rep;
}

}  // namespace fracbn
