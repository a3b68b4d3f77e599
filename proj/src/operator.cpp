#include "fracbn/operator.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

#include <Eigen/Dense>
#include <Eigen/SparseCholesky>

namespace fracbn {

GridFunction::GridFunction(const Grid& g, Vec v) : grid(&g), values(std::move(v)) {
  if (values.size() != g.interior_count())
    throw std::invalid_argument("GridFunction: length must match interior count");
  if (!values.allFinite())
    throw std::invalid_argument("GridFunction: non-finite values");
}

GridFunction GridFunction::zero(const Grid& g) {
  return GridFunction(g, Vec::Zero(g.interior_count()));
}

GridFunction GridFunction::sample(const Grid& g,
                                  const std::function<double(const Vec&)>& f) {
  Vec v(g.interior_count());
  for (int r = 0; r < g.interior_count(); ++r) v[r] = f(g.nodes[g.interior[r]]);
  return GridFunction(g, std::move(v));
}

double GridFunction::l2_norm() const {
  return std::sqrt(grid->cell_volume()) * values.norm();
}

double GridFunction::l2_inner(const GridFunction& other) const {
  if (other.grid != grid)
    throw std::invalid_argument("l2_inner: mismatched grids");
  return grid->cell_volume() * values.dot(other.values);
}

namespace {

void require_pd(const Mat& A, const Vec& x) {
  Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (A + A.transpose()));
  if (es.eigenvalues().minCoeff() <= 0) {
    std::string loc = "(";
    for (int i = 0; i < x.size(); ++i)
      loc += std::to_string(x[i]) + (i + 1 < x.size() ? "," : ")");
    throw std::runtime_error("assemble: coefficient not positive definite at " + loc);
  }
}

}  // namespace

StiffnessMatrix assemble(const Grid& grid, const CoefficientField& field) {
  const int n = grid.dim;
  const int ni = grid.interior_count();
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(static_cast<std::size_t>(ni) * (2 * n + 1));

  bool has_offdiag = false;
  // Diagonal-coefficient part: edge-midpoint fluxes along each axis.
  for (int r = 0; r < ni; ++r) {
    const int id = grid.interior[r];
    const Vec& x = grid.nodes[id];
    double diag = 0.0;
    for (int d = 0; d < n; ++d) {
      for (int step : {-1, +1}) {
        Vec mid = x;
        mid[d] += 0.5 * step * grid.h[d];
        Mat A = field.evaluate(mid);
        require_pd(A, mid);
        for (int i = 0; i < n && !has_offdiag; ++i)
          for (int j = i + 1; j < n; ++j)
            if (std::abs(A(i, j)) > 0) has_offdiag = true;
        const double flux = A(d, d) / (grid.h[d] * grid.h[d]);
        diag += flux;
        int nb = grid.neighbor(id, d, step);
        if (nb >= 0 && grid.interior_rank[nb] >= 0)
          trip.emplace_back(r, grid.interior_rank[nb], -flux);
      }
    }
    trip.emplace_back(r, r, diag);
  }

  // Mixed-coefficient part: symmetrized central differences,
  // sum over kept nodes m of a_de(x_m) (D_d u)(m) (D_e v)(m) + (d<->e).
  if (n > 1 && has_offdiag) {
    const int total = static_cast<int>(grid.nodes.size());
    for (int m = 0; m < total; ++m) {
      Mat A = field.evaluate(grid.nodes[m]);
      for (int d = 0; d < n; ++d) {
        for (int e = d + 1; e < n; ++e) {
          const double a = A(d, e);
          if (a == 0.0) continue;
          for (int sd : {-1, +1}) {
            int q = grid.neighbor(m, d, sd);
            if (q < 0 || grid.interior_rank[q] < 0) continue;
            for (int se : {-1, +1}) {
              int p = grid.neighbor(m, e, se);
              if (p < 0 || grid.interior_rank[p] < 0) continue;
              const double val =
                  a * sd * se / (4.0 * grid.h[d] * grid.h[e]);
              trip.emplace_back(grid.interior_rank[q], grid.interior_rank[p], val);
              trip.emplace_back(grid.interior_rank[p], grid.interior_rank[q], val);
            }
          }
        }
      }
    }
  }

  StiffnessMatrix M;
  M.grid = &grid;
  M.field = &field;
  M.matrix.resize(ni, ni);
  M.matrix.setFromTriplets(trip.begin(), trip.end());
  M.matrix.makeCompressed();
  return M;
}

namespace {

void fix_signs(Mat& V) {
  for (int k = 0; k < V.cols(); ++k) {
    for (int i = 0; i < V.rows(); ++i) {
      if (std::abs(V(i, k)) > 1e-14) {
        if (V(i, k) < 0) V.col(k) = -V.col(k);
        break;
      }
    }
  }
}

}  // namespace

SpectralDecomposition decompose(const StiffnessMatrix& M, int K) {
  const Grid& grid = *M.grid;
  const int ni = grid.interior_count();
  if (K < 1 || K > ni)
    throw std::invalid_argument("decompose: K must be in [1, interior count]");

  Vec lam;
  Mat V;
  if (ni <= 4000) {
    Mat dense = Mat(M.matrix);
    Eigen::SelfAdjointEigenSolver<Mat> es(dense);
    if (es.info() != Eigen::Success)
      throw std::runtime_error("decompose: dense eigensolver failed");
    lam = es.eigenvalues().head(K);
    V = es.eigenvectors().leftCols(K);
  } else {
    // Shift-invert subspace iteration for the low end of the spectrum.
    Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt(M.matrix);
    if (ldlt.info() != Eigen::Success)
      throw std::runtime_error("decompose: factorization failed (matrix not PD?)");
    const int block = std::min(ni, K + std::max(8, K / 4));
    std::mt19937_64 rng(0x5eedULL);
    std::normal_distribution<double> gauss;
    Mat X(ni, block);
    for (int j = 0; j < block; ++j)
      for (int i = 0; i < ni; ++i) X(i, j) = gauss(rng);
    Vec ritz = Vec::Zero(block);
    double worst = 1.0;
    for (int it = 0; it < 400 && worst > 1e-10; ++it) {
      X = ldlt.solve(X);
      Eigen::HouseholderQR<Mat> qr(X);
      X = qr.householderQ() * Mat::Identity(ni, block);
      Mat B = X.transpose() * (M.matrix * X);
      Eigen::SelfAdjointEigenSolver<Mat> small(0.5 * (B + B.transpose()));
      X = X * small.eigenvectors();
      ritz = small.eigenvalues();
      worst = 0.0;
      for (int k = 0; k < K; ++k) {
        double res = (M.matrix * X.col(k) - ritz[k] * X.col(k)).norm() / ritz[k];
        worst = std::max(worst, res);
      }
    }
    if (worst > 1e-8)
      throw std::runtime_error(
          "decompose: iterative eigensolver stalled, residual " +
          std::to_string(worst));
    lam = ritz.head(K);
    V = X.leftCols(K);
  }

  if (lam[0] <= 0)
    throw std::runtime_error("decompose: operator not positive definite");

  SpectralDecomposition S;
  S.grid = &grid;
  S.count = K;
  S.eigenvalues = lam;
  // Discrete L2 orthonormality: h^n Phi^T Phi = I.
  S.eigenvectors = V / std::sqrt(grid.cell_volume());
  fix_signs(S.eigenvectors);
  S.grid_hash = grid.hash();
  S.field_hash = M.field ? M.field->hash() : 0;
  double worst = 0.0;
  for (int k = 0; k < K; ++k) {
    double res = (M.matrix * S.eigenvectors.col(k) -
                  lam[k] * S.eigenvectors.col(k))
                     .norm() /
                 (lam[k] * S.eigenvectors.col(k).norm());
    worst = std::max(worst, res);
  }
  S.max_residual = worst;
  return S;
}

Vec SpectralDecomposition::coefficients(const GridFunction& u,
                                        double* projection_residual) const {
  if (u.grid != grid)
    throw std::invalid_argument("coefficients: mismatched grids");
  Vec c = grid->cell_volume() * (eigenvectors.transpose() * u.values);
  if (projection_residual) {
    Vec recon = eigenvectors * c;
    double denom = u.values.norm();
    *projection_residual =
        denom > 0 ? (u.values - recon).norm() / denom : 0.0;
  }
  return c;
}

GridFunction SpectralDecomposition::synthesize(const Vec& coeffs) const {
  if (coeffs.size() != count)
    throw std::invalid_argument("synthesize: wrong coefficient count");
  return GridFunction(*grid, eigenvectors * coeffs);
}

namespace {

GridFunction apply_power(const SpectralDecomposition& S, double power,
                         const GridFunction& u) {
  double resid = 0.0;
  Vec c = S.coefficients(u, &resid);
  if (resid > kProjectionTol)
    throw std::runtime_error(
        "fractional power: input has relative mass " + std::to_string(resid) +
        " outside the computed spectral span");
  for (int k = 0; k < S.count; ++k) c[k] *= std::pow(S.eigenvalues[k], power);
  return S.synthesize(c);
}

}  // namespace

GridFunction fractional_apply(const SpectralDecomposition& S, double s,
                              const GridFunction& u) {
  if (s <= 0 || s > 1)
    throw std::invalid_argument("fractional_apply: s must lie in (0, 1]");
  return apply_power(S, s, u);
}

GridFunction fractional_apply_inverse(const SpectralDecomposition& S, double s,
                                      const GridFunction& u) {
  if (s <= 0 || s > 1)
    throw std::invalid_argument("fractional_apply_inverse: s must lie in (0, 1]");
  return apply_power(S, -s, u);
}

double hs_inner(const SpectralDecomposition& S, double s,
                const GridFunction& u, const GridFunction& v) {
  if (s <= 0 || s > 1)
    throw std::invalid_argument("hs_inner: s must lie in (0, 1]");
  double ru = 0.0, rv = 0.0;
  Vec c = S.coefficients(u, &ru);
  Vec d = S.coefficients(v, &rv);
  if (std::max(ru, rv) > kProjectionTol)
    throw std::runtime_error("hs_inner: input outside the computed spectral span");
  double acc = 0.0;
  for (int k = 0; k < S.count; ++k)
    acc += std::pow(S.eigenvalues[k], s) * c[k] * d[k];
  return acc;
}

FirstEigenvalueReport first_fractional_eigenvalue(const SpectralDecomposition& S,
                                                  double s, std::uint64_t seed) {
  if (S.count < 1) throw std::invalid_argument("first_fractional_eigenvalue: empty");
  FirstEigenvalueReport rep;
  rep.lambda_1s = std::pow(S.eigenvalues[0], s);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss;
  double lo = std::numeric_limits<double>::max();
  for (int probe = 0; probe < 8; ++probe) {
    Vec c(S.count);
    for (int k = 0; k < S.count; ++k) c[k] = gauss(rng);
    double num = 0.0, den = 0.0;
    for (int k = 0; k < S.count; ++k) {
      num += std::pow(S.eigenvalues[k], s) * c[k] * c[k];
      den += c[k] * c[k];
    }
    lo = std::min(lo, num / den);
  }
  rep.probe_min = lo;
  rep.probe_consistent = lo >= rep.lambda_1s * (1.0 - 1e-12);
  return rep;
}

}  // namespace fracbn
