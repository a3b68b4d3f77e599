#include "fracbn/experiments.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

namespace fracbn {

namespace {

void require(bool ok, const std::string& message) {
  if (!ok) throw PreconditionError(message);
}

Vec json_to_vec(const json& a, int expect = -1) {
  require(a.is_array(), "expected an array of numbers");
  Vec v(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) v[i] = a[i].get<double>();
  if (expect >= 0)
    require(v.size() == expect,
            "vector has wrong length, expected " + std::to_string(expect));
  return v;
}

Mat json_to_mat(const json& a, int n) {
  require(a.is_array() && static_cast<int>(a.size()) == n,
          "expected a " + std::to_string(n) + "x" + std::to_string(n) +
              " matrix as nested arrays");
  Mat m(n, n);
  for (int i = 0; i < n; ++i) m.row(i) = json_to_vec(a[i], n).transpose();
  return m;
}

json vec_to_json(const Vec& v) {
  json a = json::array();
  for (int i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", (unsigned long long)v);
  return buf;
}

DomainDescriptor parse_descriptor(const json& dom) {
  const std::string kind = dom.at("kind").get<std::string>();
  if (kind == "interval")
    return DomainDescriptor::interval(dom.at("lo").get<double>(),
                                      dom.at("hi").get<double>());
  if (kind == "box")
    return DomainDescriptor::box(json_to_vec(dom.at("lo")),
                                 json_to_vec(dom.at("hi")));
  if (kind == "disc")
    return DomainDescriptor::disc(json_to_vec(dom.at("center")),
                                  dom.at("radius").get<double>());
  if (kind == "annulus")
    return DomainDescriptor::annulus(json_to_vec(dom.at("center")),
                                     dom.at("inner_radius").get<double>(),
                                     dom.at("radius").get<double>());
  if (kind == "polygon") {
    std::vector<Eigen::Vector2d> vertices;
    for (const auto& v : dom.at("vertices"))
      vertices.emplace_back(v.at(0).get<double>(), v.at(1).get<double>());
    return DomainDescriptor::polygon(std::move(vertices));
  }
  if (kind == "cusp")
    return DomainDescriptor::cusp(dom.at("dim").get<int>(),
                                  dom.at("power").get<double>(),
                                  dom.at("height").get<double>());
  throw PreconditionError("unknown domain kind: " + kind);
}

std::chrono::steady_clock::time_point now() {
  return std::chrono::steady_clock::now();
}

double seconds_since(const std::chrono::steady_clock::time_point& t0) {
  return std::chrono::duration<double>(now() - t0).count();
}

/// Built problem; the stiffness matrix and decomposition hold pointers into
/// this struct, so it lives behind a unique_ptr and never moves.
struct Problem {
  Grid grid;
  CoefficientField field;
  StiffnessMatrix op;
  SpectralDecomposition S;
  bool cache_hit = false;
};

std::unique_ptr<Problem> setup_problem(const RunConfig& config) {
  auto P = std::make_unique<Problem>();
  P->grid = build_grid(config.descriptor, config.resolution);
  P->field = build_field(config, P->grid);
  P->op = assemble(P->grid, P->field);
  const int K = config.modes > 0
                    ? std::min(config.modes, P->grid.interior_count())
                    : P->grid.interior_count();
  if (!config.cache_dir.empty() &&
      load_spectral_cache(config.cache_dir, P->grid, P->field, K, &P->S)) {
    P->cache_hit = true;
  } else {
    P->S = decompose(P->op, K);
    if (!config.cache_dir.empty())
      store_spectral_cache(config.cache_dir, P->S);
  }
  return P;
}

json base_report(const std::string& sub, const RunConfig& config) {
  json doc;
  doc["version"] = kReportVersion;
  doc["subcommand"] = sub;
  doc["config"] = config.raw;
  return doc;
}

json spectral_section(const Problem& P, double s, unsigned seed,
                      double* lambda_1s) {
  FirstEigenvalueReport fe = first_fractional_eigenvalue(P.S, s, seed);
  json sp;
  sp["interior_nodes"] = P.grid.interior_count();
  sp["modes"] = P.S.count;
  sp["lambda1"] = P.S.eigenvalues[0];
  sp["lambda1_s"] = fe.lambda_1s;
  sp["probe_min"] = fe.probe_min;
  sp["probe_consistent"] = fe.probe_consistent;
  sp["max_residual"] = P.S.max_residual;
  sp["grid_hash"] = hex64(P.S.grid_hash);
  sp["field_hash"] = hex64(P.S.field_hash);
  if (lambda_1s) *lambda_1s = fe.lambda_1s;
  return sp;
}

// The critical exponent 2n/(n-2s) only makes sense for n > 2s; purely
// spectral subcommands (eig, extension-check) have no such restriction.
void require_subcritical(const RunConfig& config) {
  require(config.descriptor.dim > 2.0 * config.s,
          "critical exponent needs n > 2s");
}

double resolve_lambda(const RunConfig& config, double lambda_1s) {
  return config.lambda_is_ratio ? config.lambda * lambda_1s : config.lambda;
}

void finish(json& doc, const std::chrono::steady_clock::time_point& t0,
            bool cache_hit) {
  // Everything here is excluded from the determinism contract.
  doc["timing"]["seconds"] = seconds_since(t0);
  doc["timing"]["cache_hit"] = cache_hit;
}

json pohozaev_section(const PohozaevReport& r) {
  json p;
  p["lhs"] = r.lhs;
  p["rhs"] = r.rhs;
  p["lambda_term"] = r.lambda_term;
  p["aprime_term"] = r.aprime_term;
  p["residual"] = r.residual;
  p["stencil_disagreement"] = r.stencil_disagreement;
  p["stencil_stable"] = r.stencil_stable;
  p["lhs_positive"] = r.lhs_positive;
  p["rhs_nonpositive"] = r.rhs_nonpositive;
  return p;
}

std::string sweep_csv(const SweepTable& table, const std::string& scale_name) {
  std::ostringstream os;
  table.write_csv(os, scale_name);
  return os.str();
}

std::vector<GridFunction> eigen_probes(const SpectralDecomposition& S,
                                       int count) {
  std::vector<GridFunction> probes;
  const int k_max = std::min(count, S.count);
  for (int k = 0; k < k_max; ++k)
    probes.emplace_back(*S.grid, S.eigenvectors.col(k));
  return probes;
}

json fit_section(const ExponentFit& fit) {
  json f;
  f["slope"] = fit.slope;
  f["half_width"] = fit.half_width;
  f["rows_used"] = fit.rows_used;
  return f;
}

// ---------------------------------------------------------------------------
// spectral cache

constexpr char kCacheMagic[4] = {'F', 'B', 'N', 'C'};
// Written into the header; a cache entry only matches when the requesting
// build would have used the same residual demand.
constexpr double kCacheResidualTol = 1e-8;

std::uint64_t fnv1a(const char* data, std::size_t len) {
  std::uint64_t h = 1469598103934665603ull;
  for (std::size_t i = 0; i < len; ++i) {
    h ^= static_cast<unsigned char>(data[i]);
    h *= 1099511628211ull;
  }
  return h;
}

std::string cache_path(const std::string& dir, std::uint64_t grid_hash,
                       std::uint64_t field_hash, int K) {
  return dir + "/spectral-" + hex64(grid_hash) + "-" + hex64(field_hash) +
         "-K" + std::to_string(K) + ".bin";
}

template <typename T>
void put(std::string& buf, const T& v) {
  buf.append(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename T>
bool take(const std::string& buf, std::size_t& pos, T* v) {
  if (pos + sizeof *v > buf.size()) return false;
  std::memcpy(v, buf.data() + pos, sizeof *v);
  pos += sizeof *v;
  return true;
}

}  // namespace

void store_spectral_cache(const std::string& dir,
                          const SpectralDecomposition& S) {
  std::filesystem::create_directories(dir);
  std::string payload;
  const std::uint32_t ni = static_cast<std::uint32_t>(S.eigenvectors.rows());
  put(payload, ni);
  for (int k = 0; k < S.count; ++k) put(payload, S.eigenvalues[k]);
  for (int k = 0; k < S.count; ++k)
    for (std::uint32_t i = 0; i < ni; ++i) put(payload, S.eigenvectors(i, k));
  put(payload, S.max_residual);

  std::string header;
  header.append(kCacheMagic, 4);
  put(header, kCacheFormatVersion);
  put(header, S.grid_hash);
  put(header, S.field_hash);
  put(header, static_cast<std::uint32_t>(S.count));
  put(header, kCacheResidualTol);

  const std::uint64_t checksum = fnv1a(payload.data(), payload.size());
  std::ofstream os(cache_path(dir, S.grid_hash, S.field_hash, S.count),
                   std::ios::binary | std::ios::trunc);
  os.write(header.data(), header.size());
  os.write(payload.data(), payload.size());
  os.write(reinterpret_cast<const char*>(&checksum), sizeof checksum);
}

bool load_spectral_cache(const std::string& dir, const Grid& grid,
                         const CoefficientField& field, int K,
                         SpectralDecomposition* out) {
  std::ifstream is(cache_path(dir, grid.hash(), field.hash(), K),
                   std::ios::binary);
  if (!is) return false;
  std::stringstream ss;
  ss << is.rdbuf();
  const std::string buf = ss.str();

  std::size_t pos = 0;
  if (buf.size() < 4 || std::memcmp(buf.data(), kCacheMagic, 4) != 0)
    return false;
  pos = 4;
  std::uint32_t version = 0, count = 0;
  std::uint64_t grid_hash = 0, field_hash = 0;
  double residual_tol = 0.0;
  if (!take(buf, pos, &version) || !take(buf, pos, &grid_hash) ||
      !take(buf, pos, &field_hash) || !take(buf, pos, &count) ||
      !take(buf, pos, &residual_tol))
    return false;
  if (version != kCacheFormatVersion || grid_hash != grid.hash() ||
      field_hash != field.hash() || count != static_cast<std::uint32_t>(K) ||
      residual_tol != kCacheResidualTol)
    return false;

  const std::size_t payload_start = pos;
  std::uint32_t ni = 0;
  if (!take(buf, pos, &ni)) return false;
  if (ni != static_cast<std::uint32_t>(grid.interior_count())) return false;

  SpectralDecomposition S;
  S.grid = &grid;
  S.count = K;
  S.grid_hash = grid_hash;
  S.field_hash = field_hash;
  S.eigenvalues.resize(K);
  S.eigenvectors.resize(ni, K);
  for (int k = 0; k < K; ++k)
    if (!take(buf, pos, &S.eigenvalues[k])) return false;
  for (int k = 0; k < K; ++k)
    for (std::uint32_t i = 0; i < ni; ++i)
      if (!take(buf, pos, &S.eigenvectors(i, k))) return false;
  if (!take(buf, pos, &S.max_residual)) return false;

  std::uint64_t stored = 0;
  if (!take(buf, pos, &stored) || pos != buf.size()) return false;
  const std::uint64_t checksum =
      fnv1a(buf.data() + payload_start, pos - sizeof stored - payload_start);
  if (checksum != stored) return false;  // corrupt: caller rebuilds

  *out = std::move(S);
  return true;
}

// ---------------------------------------------------------------------------
// config

RunConfig parse_config(const json& doc) {
  RunConfig c;
  c.raw = doc;

  require(doc.is_object(), "config must be a JSON object");
  require(doc.contains("domain"), "config needs a \"domain\" section");
  c.descriptor = parse_descriptor(doc.at("domain"));
  c.resolution = doc.at("domain").value("resolution", 41);
  require(c.resolution >= 5, "domain.resolution must be at least 5");

  c.s = doc.at("s").get<double>();
  require(c.s > 0.0 && c.s < 1.0, "s must lie in (0, 1)");
  const int n = c.descriptor.dim;

  c.field_spec = doc.value("field", json{{"kind", "constant"}});

  require(!(doc.contains("lambda") && doc.contains("lambda_ratio")),
          "give lambda or lambda_ratio, not both");
  if (doc.contains("lambda_ratio")) {
    c.lambda = doc.at("lambda_ratio").get<double>();
    c.lambda_is_ratio = true;
  } else {
    c.lambda = doc.value("lambda", 0.0);
  }

  c.x0 = doc.contains("x0") ? json_to_vec(doc.at("x0"), n) : Vec::Zero(n);

  c.modes = doc.value("modes", 0);
  require(c.modes >= 0, "modes must be nonnegative");

  if (doc.contains("minimize")) {
    const json& m = doc.at("minimize");
    c.minimize.max_iterations = m.value("max_iterations", 4000);
    c.minimize.tolerance = m.value("tolerance", 1e-4);
    c.minimize.starts = m.value("starts", 5);
    c.minimize.concentration_ratio = m.value("concentration_ratio", 0.5);
  }
  require(c.minimize.max_iterations >= 1, "minimize.max_iterations >= 1");
  require(c.minimize.tolerance > 0.0, "minimize.tolerance must be positive");
  require(c.minimize.starts >= 1, "minimize.starts >= 1");

  if (doc.contains("quadrature"))
    c.quad_rel_tol = doc.at("quadrature").value("rel_tol", 1e-9);
  require(c.quad_rel_tol > 0.0, "quadrature.rel_tol must be positive");

  if (doc.contains("sweep")) {
    const json& sw = doc.at("sweep");
    c.sweep.kind = sw.value("kind", std::string("interior"));
    require(c.sweep.kind == "interior" || c.sweep.kind == "boundary",
            "sweep.kind must be \"interior\" or \"boundary\"");
    c.sweep.r = sw.value("r", 0.25);
    require(c.sweep.r > 0.0, "sweep.r must be positive");
    if (sw.contains("eps")) {
      for (const auto& e : sw.at("eps")) c.sweep.eps.push_back(e.get<double>());
      for (double e : c.sweep.eps)
        require(e > 0.0, "sweep.eps entries must be positive");
    }
    c.sweep.trace_only = sw.value("trace_only", false);
    c.sweep.alpha = sw.value("alpha", 1.0);
    c.sweep.delta = sw.value("delta", 0.25);
    c.sweep.sigma = sw.value("sigma", 1.0);
    c.sweep.beta = sw.value("beta", 0.0);
    c.sweep.count = sw.value("count", 4);
    c.sweep.literal_scale = sw.value("literal_scale", false);
    require(c.sweep.alpha >= 1.0, "sweep.alpha >= 1");
    require(c.sweep.delta > 0.0, "sweep.delta must be positive");
    require(c.sweep.sigma > 0.0, "sweep.sigma must be positive");
    require(c.sweep.count >= 2, "sweep.count >= 2");
  }

  c.cache_dir = doc.value("cache", std::string());
  c.output_dir = doc.value("out", std::string("."));
  c.seed = doc.value("seed", 7u);
  c.threads = doc.value("threads", 1);
  require(c.threads >= 1, "threads >= 1");
  c.minimize.seed = c.seed;
  return c;
}

RunConfig load_config(const std::string& path) {
  std::ifstream is(path);
  require(static_cast<bool>(is), "cannot open config file " + path);
  json doc;
  try {
    doc = json::parse(is);
  } catch (const nlohmann::json::exception& e) {
    throw PreconditionError(std::string("config is not valid JSON: ") +
                            e.what());
  }
  return parse_config(doc);
}

CoefficientField build_field(const RunConfig& config, const Grid& grid) {
  const json& f = config.field_spec;
  const int n = grid.dim;
  const std::string kind = f.value("kind", std::string("constant"));
  if (kind == "constant") {
    Mat A = f.contains("A") ? json_to_mat(f.at("A"), n) : Mat::Identity(n, n);
    return CoefficientField::constant(A);
  }
  if (kind == "prototype") {
    Mat A0 =
        f.contains("A0") ? json_to_mat(f.at("A0"), n) : Mat::Identity(n, n);
    Vec x0 = f.contains("x0") ? json_to_vec(f.at("x0"), n) : config.x0;
    require(f.contains("sigma"), "prototype field needs sigma");
    return CoefficientField::prototype(A0, x0, f.at("sigma").get<double>(),
                                       f.value("C0", 1.0));
  }
  if (kind == "tabulated") {
    require(f.contains("values"), "tabulated field needs per-node values");
    const json& values = f.at("values");
    require(values.size() == grid.nodes.size(),
            "tabulated field needs one matrix per grid node, expected " +
                std::to_string(grid.nodes.size()));
    std::vector<Mat> table;
    table.reserve(values.size());
    for (const auto& v : values) table.push_back(json_to_mat(v, n));
    Vec x0 = f.contains("x0") ? json_to_vec(f.at("x0"), n) : config.x0;
    return CoefficientField::tabulated(grid, std::move(table), x0);
  }
  throw PreconditionError("unknown field kind: " + kind);
}

// ---------------------------------------------------------------------------
// report writing

void RunReport::write(const std::string& dir) const {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  {
    std::ofstream os(fs::path(dir) / "report.json",
                     std::ios::binary | std::ios::trunc);
    os << doc.dump(2) << "\n";
  }
  for (const auto& [rel, content] : attachments) {
    const fs::path target = fs::path(dir) / rel;
    fs::create_directories(target.parent_path());
    std::ofstream os(target, std::ios::binary | std::ios::trunc);
    os << content;
  }
}

// ---------------------------------------------------------------------------
// subcommands

RunReport cmd_eig(const RunConfig& config) {
  const auto t0 = now();
  auto P = setup_problem(config);
  RunReport report;
  report.doc = base_report("eig", config);
  double lambda_1s = 0.0;
  report.doc["spectral"] =
      spectral_section(*P, config.s, config.seed, &lambda_1s);

  json eigenvalues = json::array(), fractional = json::array();
  const int shown = std::min(P->S.count, 16);
  for (int k = 0; k < shown; ++k) {
    eigenvalues.push_back(P->S.eigenvalues[k]);
    fractional.push_back(std::pow(P->S.eigenvalues[k], config.s));
  }
  report.doc["results"]["eigenvalues"] = eigenvalues;
  report.doc["results"]["fractional_eigenvalues"] = fractional;
  report.doc["results"]["lambda"] = resolve_lambda(config, lambda_1s);

  std::ostringstream csv;
  csv.precision(17);
  csv << "k,lambda,lambda_s\n";
  for (int k = 0; k < P->S.count; ++k)
    csv << k + 1 << "," << P->S.eigenvalues[k] << ","
        << std::pow(P->S.eigenvalues[k], config.s) << "\n";
  report.attachments.emplace_back("tables/eigenvalues.csv", csv.str());

  finish(report.doc, t0, P->cache_hit);
  return report;
}

RunReport cmd_solve(const RunConfig& config) {
  const auto t0 = now();
  require_subcritical(config);
  require(config.modes == 0,
          "solve needs the full spectrum; leave modes at 0");
  auto P = setup_problem(config);
  RunReport report;
  report.doc = base_report("solve", config);
  double lambda_1s = 0.0;
  report.doc["spectral"] =
      spectral_section(*P, config.s, config.seed, &lambda_1s);
  const double lambda = resolve_lambda(config, lambda_1s);

  MinimizerResult mr =
      minimize_nehari(P->S, config.s, lambda, config.minimize);

  Cylinder cyl = build_cylinder(P->grid, config.s);
  ExtensionSolver solver(cyl, P->op);
  CsCalibration cal =
      calibrate_cs(P->S, solver, config.s, eigen_probes(P->S, 3));
  CylinderFunction w = solver.extend(mr.minimizer);
  PohozaevReport pz =
      pohozaev_sides(mr.minimizer, w, lambda, P->field, config.x0, cal.c_s);

  json& res = report.doc["results"];
  res["lambda"] = lambda;
  res["s_lambda"] = mr.s_lambda;
  res["iterations"] = mr.iterations;
  res["el_residual"] = mr.el_residual;
  res["constraint_residual"] = mr.constraint_residual;
  res["converged"] = mr.converged;
  res["concentration"] = mr.concentration;
  res["cell_mass_ratio"] = mr.cell_mass_ratio;
  res["c_s"] = cal.c_s;
  res["c_s_spread"] = cal.spread;
  res["c_s_reference"] = cs_reference(config.s);
  res["pohozaev"] = pohozaev_section(pz);

  std::ostringstream csv;
  csv.precision(17);
  for (int a = 0; a < P->grid.dim; ++a) csv << "x" << a + 1 << ",";
  csv << "value\n";
  for (int i = 0; i < P->grid.interior_count(); ++i) {
    const Vec& x = P->grid.nodes[P->grid.interior[i]];
    for (int a = 0; a < P->grid.dim; ++a) csv << x[a] << ",";
    csv << mr.minimizer.values[i] << "\n";
  }
  report.attachments.emplace_back("fields/minimizer.csv", csv.str());

  finish(report.doc, t0, P->cache_hit);
  report.exit_code = mr.converged ? 0 : 1;
  return report;
}

RunReport cmd_certify(const RunConfig& config) {
  const auto t0 = now();
  require_subcritical(config);
  auto P = setup_problem(config);
  RunReport report;
  report.doc = base_report("certify", config);
  double lambda_1s = 0.0;
  report.doc["spectral"] =
      spectral_section(*P, config.s, config.seed, &lambda_1s);
  const double lambda = resolve_lambda(config, lambda_1s);
  const int n = P->grid.dim;

  QuadratureSpec quad;
  quad.rel_tol = config.quad_rel_tol;
  SharpConstants constants = compute_sharp_constants(n, config.s, quad);

  Cylinder cyl = build_cylinder(P->grid, config.s);
  ExtensionSolver solver(cyl, P->op);
  CsCalibration cal =
      calibrate_cs(P->S, solver, config.s, eigen_probes(P->S, 3));
  const Mat A0 = P->field.evaluate(config.x0);
  const double thr = threshold(A0, n, config.s, cal.c_s, constants.Ks);

  json& res = report.doc["results"];
  report.doc["constants"]["Ks"] = constants.Ks;
  report.doc["constants"]["K1"] = constants.K1;
  report.doc["constants"]["bubble_energy"] = constants.bubble_energy;
  report.doc["constants"]["quad_error"] = constants.quad_error;
  report.doc["constants"]["c_s"] = cal.c_s;
  report.doc["constants"]["c_s_spread"] = cal.spread;
  report.doc["constants"]["c_s_reference"] = cs_reference(config.s);
  res["lambda"] = lambda;
  res["threshold"] = thr;

  int dropped = 0;
  SweepTable table;
  if (config.sweep.kind == "interior") {
    InteriorSweepParams params;
    params.lambda = lambda;
    params.x0 = config.x0;
    params.r = config.sweep.r;
    params.c_s = cal.c_s;
    params.trace_only = config.sweep.trace_only;
    std::vector<double> eps = config.sweep.eps;
    if (eps.empty())
      for (int k = 1; k <= 8; ++k)
        eps.push_back(config.sweep.r * std::pow(2.0, -k));
    table = sweep_interior(P->grid, P->field, config.s, params, eps,
                           constants, &dropped);
    res["kind"] = "interior";
    if (!config.sweep.trace_only) {
      res["fit_excess"] = fit_section(fit_exponent(table, "excess"));
      // first scale from which the quotient stays below the threshold
      const Vec q = table.column("q");
      int star = -1;
      for (int i = table.rows() - 1; i >= 0; --i) {
        if (q[i] >= thr) break;
        star = i;
      }
      res["crossing"]["found"] = star >= 0;
      res["crossing"]["eps_star"] =
          star >= 0 ? table.scales[star] : 0.0;
      res["crossing"]["rows_below"] = star >= 0 ? table.rows() - star : 0;
    }
    res["fit_trace_l2"] = fit_section(fit_exponent(table, "trace_l2"));
  } else {
    BoundarySweepParams params;
    params.lambda = lambda;
    params.x0 = config.x0;
    params.alpha = config.sweep.alpha;
    params.delta = config.sweep.delta;
    params.sigma = config.sweep.sigma;
    params.c_s = cal.c_s;
    params.literal_scale = config.sweep.literal_scale;
    BetaChoice bc{config.sweep.beta, 0.0, 0.0};
    if (config.sweep.beta <= 0.0)
      bc = choose_beta(n, config.s, config.sweep.sigma, config.sweep.alpha);
    params.beta = bc.beta;
    // the competitor support radius is 2 delta eps_j^alpha, so the sequence
    // must certify balls of twice the nominal delta
    std::vector<Vec> xj = alpha_singular_sequence(
        config.descriptor, config.x0, config.sweep.alpha,
        2.0 * config.sweep.delta, config.sweep.count);
    table = sweep_boundary(config.descriptor, P->field, n, config.s, params,
                           xj, constants, &dropped);
    res["kind"] = "boundary";
    res["beta"] = bc.beta;
    res["beta_window"] = json::array({bc.lo, bc.hi});
    const Vec q = table.column("q");
    const Vec thr_col = table.column("threshold");
    int star = -1;
    for (int i = table.rows() - 1; i >= 0; --i) {
      if (q[i] >= thr_col[i]) break;
      star = i;
    }
    res["crossing"]["found"] = star >= 0;
    res["crossing"]["rows_below"] = star >= 0 ? table.rows() - star : 0;
    const Vec lam_sc = table.column("lambda_scale");
    const Vec bub_sc = table.column("bubble_scale");
    const Vec sig_sc = table.column("sigma_scale");
    bool dominance = true;
    json ratios = json::array();
    for (int i = 0; i < table.rows(); ++i) {
      const double rb = lam_sc[i] / bub_sc[i];
      const double rs = lam_sc[i] / sig_sc[i];
      ratios.push_back(json::array({rb, rs}));
      if (i > 0) {
        dominance = dominance && rb > lam_sc[i - 1] / bub_sc[i - 1] &&
                    rs > lam_sc[i - 1] / sig_sc[i - 1];
      }
    }
    res["dominance_ratios"] = ratios;
    res["dominance_increasing"] = dominance;
  }
  res["rows"] = table.rows();
  res["dropped"] = dropped;
  res["columns"] = table.columns;
  report.attachments.emplace_back(
      "tables/sweep.csv",
      sweep_csv(table, config.sweep.kind == "interior" ? "eps" : "dist"));

  finish(report.doc, t0, P->cache_hit);
  return report;
}

RunReport cmd_audit(const RunConfig& config) {
  const auto t0 = now();
  require_subcritical(config);
  RunReport report;
  report.doc = base_report("audit", config);

  double lambda = config.lambda;
  bool cache_hit = false;
  Grid grid;
  CoefficientField field;
  if (config.lambda_is_ratio) {
    auto P = setup_problem(config);
    double lambda_1s = 0.0;
    report.doc["spectral"] =
        spectral_section(*P, config.s, config.seed, &lambda_1s);
    lambda = config.lambda * lambda_1s;
    cache_hit = P->cache_hit;
    grid = P->grid;
    field = build_field(config, grid);
  } else {
    grid = build_grid(config.descriptor, config.resolution);
    field = build_field(config, grid);
  }

  NonexistenceReport nr = nonexistence_audit(grid, field, config.s, lambda,
                                             config.x0, config.minimize);

  json& res = report.doc["results"];
  res["lambda"] = lambda;
  res["preconditions_ok"] = nr.preconditions_ok;
  res["skip_reason"] = nr.skip_reason;
  res["star_min_projection"] = nr.star_min_projection;
  res["aprime_min_eigenvalue"] = nr.aprime_min_eigenvalue;
  res["s_lambda"] = nr.s_lambda;
  res["threshold_gap"] = nr.threshold_gap;
  res["minimizer_converged"] = nr.minimizer_converged;
  res["concentration"] = nr.concentration;
  res["cell_mass_ratio"] = nr.cell_mass_ratio;
  res["pohozaev"] = pohozaev_section(nr.pohozaev);
  res["audit_pass"] = nr.audit_pass;

  finish(report.doc, t0, cache_hit);
  report.exit_code = nr.preconditions_ok ? (nr.audit_pass ? 0 : 1) : 2;
  return report;
}

RunReport cmd_extension_check(const RunConfig& config) {
  const auto t0 = now();
  auto P = setup_problem(config);
  RunReport report;
  report.doc = base_report("extension-check", config);
  report.doc["spectral"] =
      spectral_section(*P, config.s, config.seed, nullptr);

  Cylinder cyl = build_cylinder(P->grid, config.s);
  ExtensionSolver solver(cyl, P->op);
  const int probes = std::min(5, P->S.count);
  CsCalibration cal =
      calibrate_cs(P->S, solver, config.s, eigen_probes(P->S, probes));

  json rel_errors = json::array(), consistency = json::array();
  double max_rel = 0.0;
  std::ostringstream csv;
  csv.precision(17);
  csv << "k,lambda_s,rel_error,layer_consistency\n";
  for (int k = 0; k < probes; ++k) {
    GridFunction phi(P->grid, P->S.eigenvectors.col(k));
    CylinderFunction w = solver.extend(phi);
    DtnResult d = dtn_trace(w, config.s, cal.c_s);
    const double lam_s = std::pow(P->S.eigenvalues[k], config.s);
    GridFunction diff(P->grid, d.value.values - lam_s * phi.values);
    const double rel = diff.l2_norm() / (lam_s * phi.l2_norm());
    rel_errors.push_back(rel);
    consistency.push_back(d.layer_consistency);
    max_rel = std::max(max_rel, rel);
    csv << k + 1 << "," << lam_s << "," << rel << "," << d.layer_consistency
        << "\n";
  }

  json& res = report.doc["results"];
  res["c_s"] = cal.c_s;
  res["c_s_spread"] = cal.spread;
  res["c_s_reference"] = cs_reference(config.s);
  res["layers"] = cyl.layers();
  res["y_max"] = cyl.y_max;
  res["dtn_rel_errors"] = rel_errors;
  res["layer_consistency"] = consistency;
  res["max_rel_error"] = max_rel;
  report.attachments.emplace_back("tables/dtn.csv", csv.str());

  finish(report.doc, t0, P->cache_hit);
  return report;
}

RunReport cmd_sweep(const RunConfig& config) {
  const auto t0 = now();
  require_subcritical(config);
  RunReport report;
  report.doc = base_report("sweep", config);

  Grid grid = build_grid(config.descriptor, config.resolution);
  CoefficientField field = build_field(config, grid);
  const int n = grid.dim;

  double lambda = config.lambda;
  bool cache_hit = false;
  if (config.lambda_is_ratio) {
    auto P = setup_problem(config);
    double lambda_1s = 0.0;
    report.doc["spectral"] =
        spectral_section(*P, config.s, config.seed, &lambda_1s);
    lambda = config.lambda * lambda_1s;
    cache_hit = P->cache_hit;
  }

  QuadratureSpec quad;
  quad.rel_tol = config.quad_rel_tol;
  SharpConstants constants = compute_sharp_constants(n, config.s, quad);

  InteriorSweepParams params;
  params.lambda = lambda;
  params.x0 = config.x0;
  params.r = config.sweep.r;
  // scaling-law sweeps use the closed-form constant: no cylinder involved
  params.c_s = cs_reference(config.s);
  params.trace_only = config.sweep.trace_only;
  std::vector<double> eps = config.sweep.eps;
  if (eps.empty())
    for (int k = 1; k <= 10; ++k)
      eps.push_back(config.sweep.r * std::pow(2.0, -k));
  int dropped = 0;
  SweepTable table =
      sweep_interior(grid, field, config.s, params, eps, constants, &dropped);

  const double expected = std::min(2.0 * config.s, n - 2.0 * config.s);
  LogFactorResult lf = detect_log_factor(table, "trace_l2", expected);

  json& res = report.doc["results"];
  res["lambda"] = lambda;
  res["c_s_source"] = "closed_form";
  res["rows"] = table.rows();
  res["dropped"] = dropped;
  res["columns"] = table.columns;
  res["expected_trace_exponent"] = expected;
  res["fit_trace_l2"] = fit_section(fit_exponent(table, "trace_l2"));
  if (!config.sweep.trace_only)
    res["fit_excess"] = fit_section(fit_exponent(table, "excess"));
  res["log_factor"]["slope"] = lf.slope;
  res["log_factor"]["r_squared"] = lf.r_squared;
  res["log_factor"]["log_regime"] = lf.log_regime;
  report.attachments.emplace_back("tables/sweep.csv",
                                  sweep_csv(table, "eps"));

  finish(report.doc, t0, cache_hit);
  return report;
}

// ---------------------------------------------------------------------------
// schema

const json& report_schema() {
  static const json schema = json::parse(R"json({
  "$schema": "http://json-schema.org/draft-07/schema#",
  "title": "fracbn run report",
  "type": "object",
  "required": ["version", "subcommand", "config", "results", "timing"],
  "properties": {
    "version": {"type": "string", "enum": ["fracbn-report/1"]},
    "subcommand": {
      "type": "string",
      "enum": ["eig", "solve", "certify", "audit", "extension-check", "sweep"]
    },
    "config": {"type": "object"},
    "spectral": {
      "type": "object",
      "required": ["modes", "lambda1", "lambda1_s", "max_residual"],
      "properties": {
        "interior_nodes": {"type": "integer", "minimum": 1},
        "modes": {"type": "integer", "minimum": 1},
        "lambda1": {"type": "number", "minimum": 0},
        "lambda1_s": {"type": "number", "minimum": 0},
        "probe_min": {"type": "number"},
        "probe_consistent": {"type": "boolean"},
        "max_residual": {"type": "number", "minimum": 0},
        "grid_hash": {"type": "string"},
        "field_hash": {"type": "string"}
      }
    },
    "constants": {
      "type": "object",
      "properties": {
        "Ks": {"type": "number", "minimum": 0},
        "K1": {"type": "number", "minimum": 0},
        "bubble_energy": {"type": "number", "minimum": 0},
        "quad_error": {"type": "number", "minimum": 0},
        "c_s": {"type": "number", "minimum": 0},
        "c_s_spread": {"type": "number", "minimum": 0},
        "c_s_reference": {"type": "number", "minimum": 0}
      }
    },
    "results": {"type": "object"},
    "timing": {
      "type": "object",
      "required": ["seconds"],
      "properties": {
        "seconds": {"type": "number", "minimum": 0},
        "cache_hit": {"type": "boolean"}
      }
    }
  }
})json");
  return schema;
}

namespace {

bool type_matches(const json& value, const std::string& type) {
  if (type == "object") return value.is_object();
  if (type == "array") return value.is_array();
  if (type == "string") return value.is_string();
  if (type == "number") return value.is_number();
  if (type == "integer") return value.is_number_integer();
  if (type == "boolean") return value.is_boolean();
  if (type == "null") return value.is_null();
  return false;
}

bool validate_node(const json& value, const json& schema,
                   const std::string& path, std::string* error) {
  auto fail = [&](const std::string& what) {
    if (error) *error = path + ": " + what;
    return false;
  };
  if (schema.contains("type") &&
      !type_matches(value, schema.at("type").get<std::string>()))
    return fail("expected type " + schema.at("type").get<std::string>());
  if (schema.contains("enum")) {
    bool hit = false;
    for (const auto& e : schema.at("enum")) hit = hit || e == value;
    if (!hit) return fail("value not in enum");
  }
  if (schema.contains("minimum") && value.is_number() &&
      value.get<double>() < schema.at("minimum").get<double>())
    return fail("below minimum");
  if (schema.contains("required") && value.is_object()) {
    for (const auto& key : schema.at("required"))
      if (!value.contains(key.get<std::string>()))
        return fail("missing required key " + key.get<std::string>());
  }
  if (schema.contains("properties") && value.is_object()) {
    for (const auto& [key, sub] : schema.at("properties").items())
      if (value.contains(key) &&
          !validate_node(value.at(key), sub, path + "/" + key, error))
        return false;
  }
  if (schema.contains("items") && value.is_array()) {
    for (std::size_t i = 0; i < value.size(); ++i)
      if (!validate_node(value[i], schema.at("items"),
                         path + "/" + std::to_string(i), error))
        return false;
  }
  return true;
}

}  // namespace

bool validate_report(const json& report, const json& schema,
                     std::string* error) {
  return validate_node(report, schema, "", error);
}

// ---------------------------------------------------------------------------
// CLI

int run_cli(int argc, const char* const* argv) {
  CLI::App app{"spectral fractional elliptic experiment driver"};
  app.require_subcommand(1);

  std::string config_path, out_override, cache_override;
  int threads_override = 0;
  std::int64_t seed_override = -1;
  app.add_option("--config", config_path, "JSON run configuration file");
  app.add_option("--out", out_override, "output directory (overrides config)");
  app.add_option("--cache", cache_override,
                 "spectral cache directory (overrides config)");
  app.add_option("--threads", threads_override,
                 "worker cap (overrides config)");
  app.add_option("--seed", seed_override, "RNG seed (overrides config)");

  const std::pair<const char*, const char*> subs[] = {
      {"eig", "eigenvalues and fractional powers of the operator"},
      {"solve", "minimize the critical quotient and post-check the "
                "boundary-flux identity"},
      {"certify", "existence certificate sweep against the compactness "
                  "threshold"},
      {"audit", "nonexistence audit: sign contradiction for lambda <= 0 on "
                "star-shaped regions"},
      {"extension-check", "Dirichlet-to-Neumann consistency of the weighted "
                          "extension"},
      {"sweep", "scaling-law sweep of concentrating competitors"},
      {"schema", "print the report JSON schema and exit"}};
  for (const auto& [name, desc] : subs)
    app.add_subcommand(name, desc)->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }
  const std::string sub = app.get_subcommands().front()->get_name();
  if (sub == "schema") {
    std::cout << report_schema().dump(2) << "\n";
    return 0;
  }
  if (config_path.empty()) {
    std::cerr << "refused: --config is required\n";
    return 2;
  }

  try {
    RunConfig config = load_config(config_path);
    if (!out_override.empty()) config.output_dir = out_override;
    if (!cache_override.empty()) config.cache_dir = cache_override;
    if (threads_override > 0) config.threads = threads_override;
    if (seed_override >= 0) {
      config.seed = static_cast<unsigned>(seed_override);
      config.minimize.seed = config.seed;
    }
    Eigen::setNbThreads(config.threads);

    RunReport report;
    if (sub == "eig") report = cmd_eig(config);
    else if (sub == "solve") report = cmd_solve(config);
    else if (sub == "certify") report = cmd_certify(config);
    else if (sub == "audit") report = cmd_audit(config);
    else if (sub == "extension-check") report = cmd_extension_check(config);
    else report = cmd_sweep(config);

    std::string err;
    if (!validate_report(report.doc, report_schema(), &err)) {
      std::cerr << "error: report failed schema validation: " << err << "\n";
      return 1;
    }
    report.write(config.output_dir);
    std::cout << sub << ": wrote " << config.output_dir << "/report.json\n";
    return report.exit_code;
  } catch (const std::invalid_argument& e) {
    // precondition refusals, including the library's own argument gates
    std::cerr << "refused: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace fracbn
