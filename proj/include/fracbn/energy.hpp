#pragma once

#include "fracbn/bubbles.hpp"
#include "fracbn/extension.hpp"

namespace fracbn {

/// hs_inner(u, u) - lambda |u|_L2^2, the quadratic part of the critical
/// functional.
double i_energy(const SpectralDecomposition& S, double s, double lambda,
                const GridFunction& u);

/// L^p norm of a grid function with p = 2n/(n-2s).
double critical_norm(const GridFunction& u, double s);

/// i_energy(u) / |u|_Lp^2.
double rayleigh_q(const SpectralDecomposition& S, double s, double lambda,
                  const GridFunction& u);

struct SharpConstants {
  int n = 0;
  double s = 0.0;
  double Ks = 0.0;  // best trace constant |u|_Lp^2 <= Ks * weighted energy
  double K1 = 0.0;  // critical mass |u_1|_Lp^p of the extremal profile
  double bubble_energy = 0.0;  // the weighted energy of w1 over the halfspace
  double quad_error = 0.0;     // direct-vs-flux relative disagreement
};

/// Radial quadrature of the extremal profile out to infinity, cross-checked
/// against the independent boundary-flux identity. Throws when the two
/// quadratures disagree beyond 1%.
SharpConstants compute_sharp_constants(int n, double s,
                                       const QuadratureSpec& quad = {});

/// c_s det(A0)^(s/n) / Ks.
double threshold(const Mat& A0, int n, double s, double c_s, double Ks);

struct MinimizeOptions {
  int max_iterations = 4000;
  double tolerance = 1e-4;  // Euler-Lagrange residual, discrete H^-s norm
  int starts = 5;
  unsigned seed = 7;
  double concentration_ratio = 0.5;  // single-cell share of the Lp mass
};

struct MinimizerResult {
  GridFunction minimizer;
  double s_lambda = 0.0;  // attained infimum of Q over the constraint
  int iterations = 0;
  double el_residual = 0.0;
  double constraint_residual = 0.0;
  bool converged = false;
  bool concentration = false;
  double cell_mass_ratio = 0.0;  // largest single-cell share of |u|^p
};

/// Projected gradient descent for inf Q_lambda over the unit critical-norm
/// sphere; iterates are replaced by their absolute value, so the output is
/// nonnegative. Throws when lambda >= lambda_{1,s}.
MinimizerResult minimize_nehari(const SpectralDecomposition& S, double s,
                                double lambda,
                                const MinimizeOptions& opts = {});

struct EnergyReport {
  double energy = 0.0;       // c_s weighted energy of the competitor
  double mass = 0.0;         // trace L2 mass
  double constraint = 0.0;   // trace Lp mass, p = 2n/(n-2s)
  double i_value = 0.0;      // energy - lambda mass
  double q_value = 0.0;      // Rayleigh quotient
  double lambda = 0.0;
  double threshold = 0.0;
  bool below_threshold = false;
};

/// Rayleigh quotient of a concentrating competitor, by radial-profile
/// quadrature of the weighted cylinder energy against the spatially varying
/// coefficient field.
EnergyReport existence_certificate(double lambda, const CoefficientField& field,
                                   const TestFunctionSpec& tf,
                                   const SharpConstants& constants, double c_s);

}  // namespace fracbn
