#pragma once

#include <Eigen/Sparse>

#include "fracbn/domain.hpp"

namespace fracbn {

/// Values at the interior nodes of a grid; zero on the boundary and outside
/// the region by convention.
struct GridFunction {
  const Grid* grid = nullptr;
  Vec values;

  GridFunction() = default;
  GridFunction(const Grid& g, Vec v);
  static GridFunction zero(const Grid& g);
  /// Samples f at the interior nodes.
  static GridFunction sample(const Grid& g,
                             const std::function<double(const Vec&)>& f);

  double l2_norm() const;  // quadrature-weighted
  double l2_inner(const GridFunction& other) const;
};

/// Discrete −div(A(x)∇) over interior nodes with zero Dirichlet data.
/// Diagonal coefficients enter through edge-midpoint fluxes; off-diagonal
/// coefficients through symmetrized central differences. The matrix is
/// symmetric by construction.
struct StiffnessMatrix {
  const Grid* grid = nullptr;
  const CoefficientField* field = nullptr;
  Eigen::SparseMatrix<double> matrix;  // interior x interior, units 1/length^2

  Vec apply(const Vec& u) const { return matrix * u; }
};

StiffnessMatrix assemble(const Grid& grid, const CoefficientField& field);

/// Smallest K eigenpairs of a stiffness matrix under the lumped (diagonal)
/// mass h^n I. Eigenvectors satisfy h^n Phi^T Phi = I; signs fixed so the
/// first nonzero component of each vector is positive.
struct SpectralDecomposition {
  const Grid* grid = nullptr;
  Vec eigenvalues;   // nondecreasing, all positive
  Mat eigenvectors;  // interior_count x K
  int count = 0;
  std::uint64_t grid_hash = 0;
  std::uint64_t field_hash = 0;
  double max_residual = 0.0;  // worst relative eigen-residual achieved

  /// L2 coefficients <u, phi_k> of a grid function in the computed span,
  /// plus the relative norm of the part outside the span.
  Vec coefficients(const GridFunction& u, double* projection_residual) const;
  GridFunction synthesize(const Vec& coeffs) const;
};

SpectralDecomposition decompose(const StiffnessMatrix& M, int K);

/// Relative L2 residual of the projection of u onto the computed span.
/// Applications reject inputs whose residual exceeds this.
constexpr double kProjectionTol = 1e-6;

/// (-L)^s u = sum c_k lambda_k^s phi_k within the computed span.
GridFunction fractional_apply(const SpectralDecomposition& S, double s,
                              const GridFunction& u);

/// Negative fractional power; used by solvers for preconditioning.
GridFunction fractional_apply_inverse(const SpectralDecomposition& S, double s,
                                      const GridFunction& u);

/// H^s inner product sum lambda_k^s c_k d_k.
double hs_inner(const SpectralDecomposition& S, double s,
                const GridFunction& u, const GridFunction& v);

struct FirstEigenvalueReport {
  double lambda_1s = 0.0;      // lambda_1^s
  double probe_min = 0.0;      // min Rayleigh quotient over random probes
  bool probe_consistent = false;
};

FirstEigenvalueReport first_fractional_eigenvalue(const SpectralDecomposition& S,
                                                  double s,
                                                  std::uint64_t seed = 1);

}  // namespace fracbn
