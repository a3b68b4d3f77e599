#pragma once

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

namespace fracbn {

/// Target tolerance and subdivision cap for adaptive quadrature.
struct QuadratureSpec {
  double rel_tol = 1e-9;
  double abs_tol = 1e-14;
  int max_depth = 28;
};

/// Result of an adaptive integration: value and an error estimate.
struct QuadratureResult {
  double value = 0.0;
  double error = 0.0;
  bool converged = true;
};

/// Adaptive Gauss-Kronrod (7-15) integration of f on [a, b].
QuadratureResult integrate(const std::function<double(double)>& f, double a,
                           double b, const QuadratureSpec& spec = {});

/// Integrates f on [a, inf) by mapping the tail onto a finite interval.
QuadratureResult integrate_to_infinity(const std::function<double(double)>& f,
                                       double a, const QuadratureSpec& spec = {});

/// Gauss-Legendre nodes/weights on [a, b].
void gauss_legendre(int n, double a, double b, std::vector<double>& nodes,
                    std::vector<double>& weights);

/// Geometrically graded cells on (0, b], finest near 0. Returns cell
/// boundaries 0 = e_0 < e_1 < ... < e_m = b with e_1 = b * first_fraction.
std::vector<double> graded_cells(double b, double first_fraction, double ratio);

/// Runs f(i) for i in [0, count) across hardware threads. The loop body must
/// only write to per-index state; results are deterministic by construction.
void parallel_for(int count, const std::function<void(int)>& f, int threads = 0);

/// FNV-1a accumulation helpers used for cache keys and file checksums.
struct Fnv1a {
  std::uint64_t state = 1469598103934665603ull;
  void add_bytes(const void* data, std::size_t len);
  void add(double v);
  void add(std::uint64_t v);
  void add(const std::string& s);
  std::uint64_t digest() const { return state; }
};

}  // namespace fracbn
