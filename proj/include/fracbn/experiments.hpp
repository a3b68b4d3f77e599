#pragma once

#include <nlohmann/json.hpp>

#include "fracbn/asymptotics.hpp"
#include "fracbn/pohozaev.hpp"

namespace fracbn {

using json = nlohmann::ordered_json;

inline constexpr const char* kReportVersion = "fracbn-report/1";
inline constexpr std::uint32_t kCacheFormatVersion = 1;

/// Everything a run needs, parsed from one JSON config file. The raw
/// document is kept for the report echo.
struct RunConfig {
  json raw;

  DomainDescriptor descriptor;
  int resolution = 41;
  json field_spec;  // built against the grid, see build_field

  double s = 0.5;
  double lambda = 0.0;
  bool lambda_is_ratio = false;  // lambda given as a fraction of lambda_{1,s}
  Vec x0;

  int modes = 0;  // eigenpairs to compute; 0 = full interior space
  MinimizeOptions minimize;
  double quad_rel_tol = 1e-9;

  struct SweepSpec {
    std::string kind = "interior";  // interior | boundary
    double r = 0.25;
    std::vector<double> eps;
    bool trace_only = false;
    // boundary sweeps
    double alpha = 1.0;
    double delta = 0.25;
    double sigma = 1.0;
    double beta = 0.0;  // 0 = choose_beta midpoint
    int count = 4;
    bool literal_scale = false;
  } sweep;

  std::string cache_dir;
  std::string output_dir = ".";
  unsigned seed = 7;
  int threads = 1;
};

RunConfig parse_config(const json& doc);
RunConfig load_config(const std::string& path);
/// Resolves the coefficient-field spec (constant | prototype | tabulated)
/// against a built grid.
CoefficientField build_field(const RunConfig& config, const Grid& grid);

/// Self-contained run artifact: the JSON document plus CSV attachments
/// written next to it (tables/*.csv, fields/*.csv).
struct RunReport {
  json doc;
  std::vector<std::pair<std::string, std::string>> attachments;
  int exit_code = 0;  // 0 success, 2 precondition refusal, 1 numerical failure

  /// Writes report.json and all attachments under dir.
  void write(const std::string& dir) const;
};

/// Schema every report validates against; also shipped as
/// share/report.schema.json.
const json& report_schema();

RunReport cmd_eig(const RunConfig& config);
RunReport cmd_solve(const RunConfig& config);
RunReport cmd_certify(const RunConfig& config);
RunReport cmd_audit(const RunConfig& config);
RunReport cmd_extension_check(const RunConfig& config);
RunReport cmd_sweep(const RunConfig& config);

/// Versioned binary eigenpair cache keyed by grid hash, field hash and mode
/// count; payload is checksummed and corrupt files are rebuilt.
bool load_spectral_cache(const std::string& dir, const Grid& grid,
                         const CoefficientField& field, int K,
                         SpectralDecomposition* out);
void store_spectral_cache(const std::string& dir,
                          const SpectralDecomposition& S);

/// Minimal JSON-schema checker covering the subset the shipped schema uses:
/// type, properties, required, items, enum, minimum.
bool validate_report(const json& report, const json& schema,
                     std::string* error = nullptr);

/// Refusal of a precondition (bad config, lambda past the spectral bound,
/// audit skip); the CLI maps it to exit code 2.
struct PreconditionError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// Entry point used by the binary; returns the process exit code
/// (0 success, 2 precondition refusal, 1 numerical failure).
int run_cli(int argc, const char* const* argv);

}  // namespace fracbn
