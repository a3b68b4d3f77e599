#include "fracbn/quadrature.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstring>
#include <string>
#include <thread>

namespace fracbn {

namespace {

// Gauss-Kronrod 7-15 nodes on [-1, 1] (positive half; symmetric).
constexpr double kKronrodNodes[8] = {
    0.991455371120813, 0.949107912342759, 0.864864423359769,
    0.741531185599394, 0.586087235467691, 0.405845151377397,
    0.207784955007898, 0.000000000000000};
constexpr double kKronrodWeights[8] = {
    0.022935322010529, 0.063092092629979, 0.104790010322250,
    0.140653259715525, 0.169004726639267, 0.190350578064785,
    0.204432940075298, 0.209482141084728};
constexpr double kGaussWeights[4] = {
    0.129484966168870, 0.279705391489277, 0.381830050505119,
    0.417959183673469};

struct PanelEstimate {
  double value;
  double error;
};

PanelEstimate gk15(const std::function<double(double)>& f, double a, double b) {
  const double c = 0.5 * (a + b);
  const double half = 0.5 * (b - a);
  double fk[15];
  for (int i = 0; i < 7; ++i) {
    fk[i] = f(c - half * kKronrodNodes[i]);
    fk[14 - i] = f(c + half * kKronrodNodes[i]);
  }
  fk[7] = f(c);
  double kronrod = 0.0;
  for (int i = 0; i < 7; ++i) kronrod += kKronrodWeights[i] * (fk[i] + fk[14 - i]);
  kronrod += kKronrodWeights[7] * fk[7];
  kronrod *= half;
  // Gauss-7 uses the odd Kronrod nodes.
  double gauss = kGaussWeights[3] * fk[7];
  for (int i = 0; i < 3; ++i)
    gauss += kGaussWeights[i] * (fk[2 * i + 1] + fk[13 - 2 * i]);
  gauss *= half;
  double err = std::abs(kronrod - gauss);
  err = std::pow(200.0 * err, 1.5);
  return {kronrod, std::min(err, std::abs(kronrod - gauss) * 200.0)};
}

void adapt(const std::function<double(double)>& f, double a, double b,
           double tol, int depth, const QuadratureSpec& spec,
           QuadratureResult& out) {
  PanelEstimate e = gk15(f, a, b);
  if (e.error <= tol || depth >= spec.max_depth) {
    out.value += e.value;
    out.error += e.error;
    if (depth >= spec.max_depth && e.error > tol) out.converged = false;
    return;
  }
  const double c = 0.5 * (a + b);
  adapt(f, a, c, 0.5 * tol, depth + 1, spec, out);
  adapt(f, c, b, 0.5 * tol, depth + 1, spec, out);
}

}  // namespace

QuadratureResult integrate(const std::function<double(double)>& f, double a,
                           double b, const QuadratureSpec& spec) {
  if (a == b) return {0.0, 0.0, true};
  QuadratureResult out;
  PanelEstimate coarse = gk15(f, a, b);
  double tol = std::max(spec.abs_tol, spec.rel_tol * std::abs(coarse.value));
  adapt(f, a, b, tol, 0, spec, out);
  return out;
}

QuadratureResult integrate_to_infinity(const std::function<double(double)>& f,
                                       double a, const QuadratureSpec& spec) {
  // x = a + t / (1 - t), t in [0, 1).
  auto g = [&](double t) {
    const double om = 1.0 - t;
    const double x = a + t / om;
    return f(x) / (om * om);
  };
  return integrate(g, 0.0, 1.0 - 1e-14, spec);
}

void gauss_legendre(int n, double a, double b, std::vector<double>& nodes,
                    std::vector<double>& weights) {
  nodes.resize(n);
  weights.resize(n);
  // Newton on Legendre polynomials; standard Golub-Welsch-free recipe.
  for (int i = 0; i < (n + 1) / 2; ++i) {
    double x = std::cos(M_PI * (i + 0.75) / (n + 0.5));
    double pp = 0.0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0, p1 = 0.0;
      for (int j = 0; j < n; ++j) {
        double p2 = p1;
        p1 = p0;
        p0 = ((2.0 * j + 1.0) * x * p1 - j * p2) / (j + 1.0);
      }
      pp = n * (x * p0 - p1) / (x * x - 1.0);
      double dx = p0 / pp;
      x -= dx;
      if (std::abs(dx) < 1e-15) break;
    }
    const double xm = 0.5 * (b + a);
    const double xl = 0.5 * (b - a);
    nodes[i] = xm - xl * x;
    nodes[n - 1 - i] = xm + xl * x;
    weights[i] = 2.0 * xl / ((1.0 - x * x) * pp * pp);
    weights[n - 1 - i] = weights[i];
  }
}

std::vector<double> graded_cells(double b, double first_fraction, double ratio) {
  if (b <= 0 || first_fraction <= 0 || first_fraction >= 1 || ratio <= 1)
    throw std::invalid_argument("graded_cells: bad grading parameters");
  std::vector<double> edges{0.0};
  double e = b * first_fraction;
  while (e < b) {
    edges.push_back(e);
    e *= ratio;
  }
  edges.push_back(b);
  return edges;
}

void parallel_for(int count, const std::function<void(int)>& f, int threads) {
  if (count <= 0) return;
  int nt = threads > 0 ? threads : static_cast<int>(std::thread::hardware_concurrency());
  nt = std::max(1, std::min(nt, count));
  if (nt == 1) {
    for (int i = 0; i < count; ++i) f(i);
    return;
  }
  std::vector<std::thread> pool;
  std::atomic<int> next{0};
  for (int t = 0; t < nt; ++t) {
    pool.emplace_back([&]() {
      for (;;) {
        int i = next.fetch_add(1);
        if (i >= count) return;
        f(i);
      }
    });
  }
  for (auto& th : pool) th.join();
}

void Fnv1a::add_bytes(const void* data, std::size_t len) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < len; ++i) {
    state ^= p[i];
    state *= 1099511628211ull;
  }
}

void Fnv1a::add(double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, sizeof(bits));
  add_bytes(&bits, sizeof(bits));
}

void Fnv1a::add(std::uint64_t v) { add_bytes(&v, sizeof(v)); }

void Fnv1a::add(const std::string& s) { add_bytes(s.data(), s.size()); }

}  // namespace fracbn
