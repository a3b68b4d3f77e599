#pragma once

#include <Eigen/SparseCholesky>
#include <memory>

#include "fracbn/operator.hpp"

namespace fracbn {

/// Truncated weighted cylinder over a base grid. The y-mesh is geometric,
/// finest at y = 0 where the weight y^(1-2s) is singular or degenerate.
struct Cylinder {
  const Grid* base = nullptr;
  std::vector<double> y;  // 0 = y_0 < y_1 < ... < y_M = Y_max
  double s = 0.5;
  double y_max = 0.0;

  int layers() const { return static_cast<int>(y.size()); }
};

/// Y_max defaults to 5x the base diameter; first layer ~ h^2, ratio ~1.15.
Cylinder build_cylinder(const Grid& base, double s, double y_max = 0.0,
                        double ratio = 1.15);

/// w(x_i, y_m) over interior base nodes x layers; zero on the lateral
/// boundary by construction, trace at the m = 0 column.
struct CylinderFunction {
  const Cylinder* cylinder = nullptr;
  Mat values;  // interior_count x layers

  GridFunction trace() const;
  GridFunction layer(int m) const;
};

/// Holds the factorized cylinder operator so repeated extensions of
/// different traces reuse one factorization.
class ExtensionSolver {
 public:
  ExtensionSolver(const Cylinder& cyl, const StiffnessMatrix& op);

  CylinderFunction extend(const GridFunction& u) const;
  /// Weighted Dirichlet energy of any cylinder function with the same mesh.
  double weighted_energy(const CylinderFunction& w) const;
  /// Weighted energy of the slab [y_m, y_{m+1}] only.
  double slab_energy(const CylinderFunction& w, int m) const;

  const Cylinder& cylinder() const { return *cyl_; }

 private:
  const Cylinder* cyl_;
  const StiffnessMatrix* op_;
  int ni_ = 0;
  // Per-cell moments of the weight against the cell-harmonic shape
  // functions, and the vertical two-point coupling per cell.
  std::vector<double> m00_, m01_, m11_, vert_;
  Eigen::SparseMatrix<double> system_;  // unknown layers 1..M
  Eigen::SparseMatrix<double> coupling_;  // unknowns x trace
  std::unique_ptr<Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>>> ldlt_;
};

CylinderFunction solve_extension(const ExtensionSolver& solver,
                                 const GridFunction& u);

struct DtnResult {
  GridFunction value;
  /// Relative disagreement between the first-layer extraction and a
  /// two-layer Richardson refinement; large values flag a coarse grading.
  double layer_consistency = 0.0;
};

/// -c_s lim y^(1-2s) dw/dy, via the y^(2s)-consistent first-layer quotient
/// c_s * 2s * (w(y_1) - w(0)) / y_1^(2s).
DtnResult dtn_trace(const CylinderFunction& w, double s, double c_s);

struct CsCalibration {
  double c_s = 0.0;
  std::vector<double> ratios;  // one per probe
  double spread = 0.0;         // max/min - 1
};

/// Calibrates c_s as the median over probes of
/// hs_inner(u, u) / weighted_energy(extension of u).
CsCalibration calibrate_cs(const SpectralDecomposition& S,
                           const ExtensionSolver& solver, double s,
                           const std::vector<GridFunction>& probes,
                           double spread_tol = 0.05);

/// c_s * weighted energy - lambda * trace L2 mass.
double j_energy(const ExtensionSolver& solver, const CylinderFunction& w,
                double lambda, double c_s);

/// Closed-form constant 2^(2s-1) Gamma(s) / Gamma(1-s); cross-check oracle
/// for the calibration, equal to 1 at s = 1/2.
double cs_reference(double s);

}  // namespace fracbn
