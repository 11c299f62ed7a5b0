#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "upms/problem.hpp"

namespace upms {

struct GenParams {
  int n = 20;
  int m = 5;
  double tau = 0.4;                // due-date tightness
  double range_R = 0.6;            // due-date range
  double setup_ratio_beta = 0.25;  // setup times relative to mean processing
  double elig_density_delta = 1.0;
  double lambda_arrival = 0.5;
  std::uint64_t seed = 1;
};

/// Empty string when valid, otherwise a description of the first problem.
std::string check_params(const GenParams& params);

/// Round half up; used for every distribution endpoint built from a real expression.
Time round_half_up(double x);

/// ceil(delta * m), robust to representation error in delta.
int eligible_count(double delta, int m);

struct DueWindow {
  Time lo = 0;
  Time hi = 0;
};

/// Due-date sampling window [r + p(1 - tau - R/2), r + p(1 - tau + R/2)],
/// rounded half up, ordered, and clamped below at zero.
DueWindow due_date_bounds(Time release, double p_bar_job, double tau, double range_R);

ProblemInstance generate_instance(const GenParams& params);

/// The full factorial tau x R x beta x delta grid for one (n, m) size cell.
std::vector<GenParams> standard_grid(int n, int m, std::uint64_t seed);

struct ManifestEntry {
  std::string file;
  GenParams params;
  std::uint64_t seed = 0;
};

struct SuiteResult {
  std::vector<ManifestEntry> manifest;
  std::vector<std::string> errors;  // one entry per failed file write
};

/// Seed of replicate `rep` in grid cell `cell`.
std::uint64_t suite_seed(std::uint64_t base_seed, std::size_t cell, std::size_t rep);

/// Writes `per_cell` instances for every grid cell into `out_dir` plus
/// `manifest.json`. Each cell's own seed field is the base seed.
SuiteResult generate_suite(const std::vector<GenParams>& grid, int per_cell, const std::string& out_dir);

nlohmann::ordered_json to_json(const GenParams& params);
GenParams gen_params_from_json(const nlohmann::ordered_json& j);

nlohmann::ordered_json manifest_to_json(const std::vector<ManifestEntry>& manifest);

/// Loads a manifest; entry file names are resolved relative to the manifest directory.
std::vector<ManifestEntry> load_manifest(const std::string& path);

}  // namespace upms
