#pragma once

#include "fracbn/energy.hpp"

namespace fracbn {

/// Radial coefficient derivative (grad a_ij(x) . (x - x0))_ij; symmetric,
/// zero for constant fields.
Mat a_prime(const CoefficientField& field, const Vec& x0, const Vec& x);

struct PohozaevReport {
  double lhs = 0.0;          // lateral boundary flux integral
  double rhs = 0.0;          // lambda term + coefficient-derivative term
  double lambda_term = 0.0;  // (s/c_s) lambda |u|_L2^2
  double aprime_term = 0.0;  // -1/2 of the weighted a' energy
  double residual = 0.0;     // |lhs - rhs| / max(|lhs|, |rhs|, floor)
  double stencil_disagreement = 0.0;  // two finest one-sided stencils
  bool stencil_stable = false;
  bool lhs_positive = false;
  bool rhs_nonpositive = false;
};

/// Both sides of the boundary-flux identity for a (near-)solution u with
/// extension w. The lateral gradient is extracted with second-order
/// one-sided normal differences at each boundary node and layer.
PohozaevReport pohozaev_sides(const GridFunction& u, const CylinderFunction& w,
                              double lambda, const CoefficientField& field,
                              const Vec& x0, double c_s);

struct NonexistenceReport {
  bool preconditions_ok = false;
  std::string skip_reason;
  double star_min_projection = 0.0;
  double aprime_min_eigenvalue = 0.0;
  double s_lambda = 0.0;
  double threshold_gap = 0.0;  // threshold - S_lambda
  bool minimizer_converged = false;
  bool concentration = false;
  double cell_mass_ratio = 0.0;
  PohozaevReport pohozaev;
  bool audit_pass = false;  // sign contradiction lhs > 0 >= rhs exhibited
};

/// Nonexistence audit for lambda <= 0 on a star-shaped region with radially
/// nondecreasing coefficients: minimizes the quotient, extends the terminal
/// iterate, and checks the boundary-flux sign contradiction.
NonexistenceReport nonexistence_audit(const Grid& grid,
                                      const CoefficientField& field, double s,
                                      double lambda, const Vec& x0,
                                      const MinimizeOptions& opts = {});

}  // namespace fracbn
