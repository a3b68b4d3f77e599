#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

namespace fracbn {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// Geometric description of the base domain. A negative level set value means
/// "inside". The level set is an exact signed distance for intervals, boxes,
/// discs and annuli; for polygons and power cusps it is sign-correct and
/// smooth near the boundary, which is all the lattice flagging needs.
struct DomainDescriptor {
  enum class Kind { Interval, Box, Disc, Annulus, Polygon, Cusp };

  Kind kind = Kind::Interval;
  int dim = 1;
  Vec lo, hi;               // Interval / Box corners
  Vec center;               // Disc / Annulus center
  double radius = 1.0;      // Disc / Annulus outer radius
  double inner_radius = 0;  // Annulus only
  std::vector<Eigen::Vector2d> vertices;  // Polygon (counterclockwise)
  double cusp_power = 2.0;  // Cusp: { 0 < x_n < height, |x'| < x_n^power }
  double cusp_height = 1.0;

  static DomainDescriptor interval(double a, double b);
  static DomainDescriptor box(const Vec& lo, const Vec& hi);
  static DomainDescriptor disc(const Vec& center, double radius);
  static DomainDescriptor annulus(const Vec& center, double r_in, double r_out);
  static DomainDescriptor polygon(std::vector<Eigen::Vector2d> vertices);
  static DomainDescriptor cusp(int dim, double power, double height);

  double levelset(const Vec& x) const;
  bool inside(const Vec& x) const { return levelset(x) < 0.0; }
  Vec levelset_gradient(const Vec& x) const;  // central differences
  Vec bounding_lo() const;
  Vec bounding_hi() const;
  double diameter() const;
  std::string canonical() const;  // stable serialization for hashing
};

/// Lattice discretization of a descriptor. Nodes are the lattice points of
/// the bounding box that are inside (or on) the region; each kept node is
/// either interior (all axis neighbors kept, strictly inside) or boundary.
struct Grid {
  DomainDescriptor descriptor;
  int dim = 1;
  Vec h;                          // mesh width per axis
  std::vector<Vec> nodes;         // kept nodes, lattice order
  std::vector<int> interior;      // node ids
  std::vector<int> boundary;      // node ids
  std::vector<Vec> normals;       // outward unit normal per boundary node
  std::vector<int> interior_rank; // node id -> index into `interior`, or -1
  std::vector<std::int64_t> lattice_key;            // node id -> flat key
  std::unordered_map<std::int64_t, int> node_at;    // flat key -> node id
  std::vector<int> shape;         // lattice nodes per axis

  int interior_count() const { return static_cast<int>(interior.size()); }
  double cell_volume() const;
  /// Node id of the lattice neighbor of `node` along `axis` (+1/-1 step),
  /// or -1 when that lattice point was not kept.
  int neighbor(int node, int axis, int step) const;
  std::uint64_t hash() const;
};

Grid build_grid(const DomainDescriptor& descriptor, int resolution);

/// Matrix coefficient field A(x). Symmetric positive definite by contract.
struct CoefficientField {
  enum class Kind { Constant, Prototype, Tabulated };

  Kind kind = Kind::Constant;
  int dim = 1;
  Mat A0;            // Constant value, or prototype base A(x0)
  Vec x0;            // distinguished point
  double sigma = 1.0;
  double C0 = 1.0;
  // Tabulated: one matrix per grid node, nearest-node evaluation.
  const Grid* table_grid = nullptr;
  std::vector<Mat> table;

  static CoefficientField constant(const Mat& A);
  static CoefficientField prototype(const Mat& A0, const Vec& x0, double sigma,
                                    double C0 = 1.0);
  static CoefficientField tabulated(const Grid& grid, std::vector<Mat> values,
                                    const Vec& x0);

  Mat evaluate(const Vec& x) const;
  bool has_gradient() const { return kind != Kind::Tabulated; }
  /// d a_ij / d x_k as an n x n matrix for each k (analytic fields only).
  std::vector<Mat> gradient(const Vec& x) const;
  std::string canonical() const;
  std::uint64_t hash() const;
};

struct HypothesisReport {
  bool h2_holds = false;
  bool h1_holds = false;
  double h2_worst = 0.0;  // smallest eigenvalue of A(x) - A(x0) over nodes
  double h1_worst = 0.0;  // smallest eigenvalue of the (H1) difference
  Vec h2_witness;
  Vec h1_witness;
};

/// Pointwise matrix-inequality audit of (H2) and (H1) on the grid nodes.
HypothesisReport check_hypotheses(const CoefficientField& field,
                                  const Grid& grid,
                                  double neighborhood_radius);

/// Interior points x_j -> x0 with B(x_j, delta |x_j - x0|^alpha) inside the
/// region, each containment verified by sampling the ball boundary.
std::vector<Vec> alpha_singular_sequence(const DomainDescriptor& descriptor,
                                         const Vec& x0, double alpha,
                                         double delta, int count);

struct StarShapeResult {
  bool star_shaped = false;
  double min_projection = 0.0;  // min over boundary nodes of (x - x0) . nu
};

StarShapeResult star_shape_check(const Grid& grid, const Vec& x0);

}  // namespace fracbn
