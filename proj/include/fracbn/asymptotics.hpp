#pragma once

#include <iosfwd>

#include "fracbn/energy.hpp"

namespace fracbn {

/// One row per concentration scale, columns named; scales are strictly
/// decreasing.
struct SweepTable {
  std::vector<std::string> columns;
  std::vector<double> scales;  // eps (interior) or |x_j - x0| (boundary)
  Mat values;                  // rows x columns

  int rows() const { return static_cast<int>(scales.size()); }
  int column_index(const std::string& name) const;
  Vec column(const std::string& name) const;
  void write_csv(std::ostream& os, const std::string& scale_name) const;
};

/// Weighted outer-region gradient integral of the extremal extension
/// against the |x|^sigma coefficient perturbation, over |x| >= 1 and
/// hypot(x, y) <= R. The radial derivative comes from differentiating the
/// kernel representation under the integral sign.
double weighted_gradient_integral(int n, double s, double sigma, double R,
                                  const QuadratureSpec& quad = {});

struct InteriorSweepParams {
  double lambda = 0.0;
  Vec x0;
  double r = 0.25;  // cutoff radius
  double c_s = 1.0;
  // restrict to the trace-plane columns (closed-form profile, no extension
  // quadrature); cheap enough for very deep scale grids
  bool trace_only = false;
};

/// Certificate ingredients per eps: trace L2 mass, critical constraint
/// mass, weighted energy, excess over the flat-space profile energy, the
/// quotient and the threshold. Rows whose support escapes the region are
/// dropped and counted.
SweepTable sweep_interior(const Grid& grid, const CoefficientField& field,
                          double s, const InteriorSweepParams& params,
                          const std::vector<double>& eps_list,
                          const SharpConstants& constants,
                          int* dropped = nullptr);

struct BoundarySweepParams {
  double lambda = 0.0;
  Vec x0;
  double alpha = 1.0, beta = 2.0, delta = 0.25;
  double sigma = 1.0;
  double c_s = 1.0;
  bool literal_scale = false;
};

/// Certificate per approach point x_j, plus the three competing correction
/// scales eps_j^(2 s beta), eps_j^((n-2s)(beta-alpha)), eps_j^sigma.
SweepTable sweep_boundary(const DomainDescriptor& descriptor,
                          const CoefficientField& field, int n, double s,
                          const BoundarySweepParams& params,
                          const std::vector<Vec>& xj_list,
                          const SharpConstants& constants,
                          int* dropped = nullptr);

struct ExponentFit {
  double slope = 0.0;
  double half_width = 0.0;  // studentized 95% half-width
  int rows_used = 0;
};

/// Log-log least squares of a positive column against the scales; the two
/// largest scales are dropped as pre-asymptotic when enough rows remain.
ExponentFit fit_exponent(const SweepTable& table, const std::string& column);
ExponentFit fit_exponent(const std::vector<double>& scales, const Vec& values);

struct LogFactorResult {
  double slope = 0.0;      // of value/scale^p against ln(1/scale)
  double intercept = 0.0;
  double r_squared = 0.0;
  bool log_regime = false;  // positive trend with r_squared > 0.9
};

/// Detects a logarithmic factor on top of the power law scale^p.
LogFactorResult detect_log_factor(const SweepTable& table,
                                  const std::string& column, double p);

}  // namespace fracbn
