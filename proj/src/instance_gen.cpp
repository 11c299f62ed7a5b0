#include "upms/instance_gen.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include "upms/rng.hpp"

namespace upms {

std::string check_params(const GenParams& params) {
  if (params.n < 1) return "n must be >= 1";
  if (params.m < 1) return "m must be >= 1";
  if (!(params.elig_density_delta > 0.0 && params.elig_density_delta <= 1.0)) return "delta must lie in (0, 1]";
  if (params.tau < 0.0 || params.range_R < 0.0 || params.setup_ratio_beta < 0.0 || params.lambda_arrival < 0.0) {
    return "tau, range, beta and lambda must be non-negative";
  }
  return {};
}

Time round_half_up(double x) { return static_cast<Time>(std::floor(x + 0.5)); }

int eligible_count(double delta, int m) {
  const int c = static_cast<int>(std::ceil(delta * m - 1e-9));
  return std::clamp(c, 1, m);
}

DueWindow due_date_bounds(Time release, double p_bar_job, double tau, double range_R) {
  const double r = static_cast<double>(release);
  Time lo = round_half_up(r + p_bar_job * (1.0 - tau - range_R / 2.0));
  Time hi = round_half_up(r + p_bar_job * (1.0 - tau + range_R / 2.0));
  if (lo > hi) std::swap(lo, hi);
  return {std::max<Time>(lo, 0), std::max<Time>(hi, 0)};
}

ProblemInstance generate_instance(const GenParams& params) {
  if (auto err = check_params(params); !err.empty()) throw std::invalid_argument("generate_instance: " + err);
  const int n = params.n;
  const int m = params.m;
  Rng rng(params.seed);
  ProblemInstance inst = ProblemInstance::zeros(n, m);

  for (auto& p : inst.processing) p = rng.uniform_int(1, 100);
  const double p_bar = inst.mean_processing();

  const Time release_hi = round_half_up(params.lambda_arrival * p_bar);
  for (auto& r : inst.release) r = rng.uniform_int(0, release_hi);
  for (auto& w : inst.weight) w = rng.uniform_int(1, 10);

  const Time setup_hi = round_half_up(params.setup_ratio_beta * p_bar);
  for (int i = 0; i <= n; ++i) {
    for (int j = 0; j < n; ++j) {
      for (int k = 0; k < m; ++k) {
        inst.s(i, j, k) = (i == j + 1) ? 0 : rng.uniform_int(0, setup_hi);
      }
    }
  }

  const int count = eligible_count(params.elig_density_delta, m);
  std::vector<int> machines(static_cast<std::size_t>(m));
  for (int j = 0; j < n; ++j) {
    std::iota(machines.begin(), machines.end(), 0);
    // Partial Fisher-Yates: the first `count` slots are a uniform subset.
    for (int a = 0; a < count; ++a) {
      const auto b = static_cast<std::size_t>(rng.uniform_int(a, m - 1));
      std::swap(machines[static_cast<std::size_t>(a)], machines[b]);
    }
    std::vector<int> chosen(machines.begin(), machines.begin() + count);
    std::sort(chosen.begin(), chosen.end());
    inst.eligible[static_cast<std::size_t>(j)] = std::move(chosen);
  }

  for (int j = 0; j < n; ++j) {
    const auto jj = static_cast<std::size_t>(j);
    const DueWindow w = due_date_bounds(inst.release[jj], inst.mean_processing_eligible(j), params.tau, params.range_R);
    inst.due[jj] = std::max<Time>(0, rng.uniform_int(w.lo, w.hi));
  }

  inst.meta = nlohmann::ordered_json::object();
  inst.meta["generator"] = to_json(params);
  inst.meta["seed"] = params.seed;
  return inst;
}

std::vector<GenParams> standard_grid(int n, int m, std::uint64_t seed) {
  std::vector<GenParams> grid;
  for (double tau : {0.2, 0.4, 0.6}) {
    for (double range : {0.2, 0.6, 1.0}) {
      for (double beta : {0.1, 0.25}) {
        for (double delta : {0.75, 1.0}) {
          GenParams p;
          p.n = n;
          p.m = m;
          p.tau = tau;
          p.range_R = range;
          p.setup_ratio_beta = beta;
          p.elig_density_delta = delta;
          p.seed = seed;
          grid.push_back(p);
        }
      }
    }
  }
  return grid;
}

std::uint64_t suite_seed(std::uint64_t base_seed, std::size_t cell, std::size_t rep) {
  return derive_seed(base_seed, cell, rep);
}

namespace {

std::string suite_file_name(std::size_t cell, std::size_t rep) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "cell%03zu_rep%03zu.json", cell, rep);
  return buf;
}

}  // namespace

SuiteResult generate_suite(const std::vector<GenParams>& grid, int per_cell, const std::string& out_dir) {
  if (per_cell < 1) throw std::invalid_argument("generate_suite: instances_per_cell must be >= 1");
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(out_dir, ec);

  const std::size_t reps = static_cast<std::size_t>(per_cell);
  const std::size_t total = grid.size() * reps;
  std::vector<ManifestEntry> entries(total);
  std::vector<std::string> errors(total);

#pragma omp parallel for schedule(dynamic)
  for (std::size_t idx = 0; idx < total; ++idx) {
    const std::size_t cell = idx / reps;
    const std::size_t rep = idx % reps;
    GenParams params = grid[cell];
    params.seed = suite_seed(grid[cell].seed, cell, rep);
    ManifestEntry& entry = entries[idx];
    entry.file = suite_file_name(cell, rep);
    entry.params = params;
    entry.seed = params.seed;
    try {
      save_instance(generate_instance(params), (fs::path(out_dir) / entry.file).string());
    } catch (const std::exception& e) {
      errors[idx] = entry.file + ": " + e.what();
    }
  }

  SuiteResult result;
  for (std::size_t idx = 0; idx < total; ++idx) {
    if (errors[idx].empty()) {
      result.manifest.push_back(std::move(entries[idx]));
    } else {
      result.errors.push_back(std::move(errors[idx]));
    }
  }
  std::ofstream out(fs::path(out_dir) / "manifest.json");
  if (!out) {
    result.errors.push_back("manifest.json: cannot open for writing");
  } else {
    out << manifest_to_json(result.manifest).dump(2) << '\n';
  }
  return result;
}

nlohmann::ordered_json to_json(const GenParams& params) {
  nlohmann::ordered_json j;
  j["n"] = params.n;
  j["m"] = params.m;
  j["tau"] = params.tau;
  j["range"] = params.range_R;
  j["beta"] = params.setup_ratio_beta;
  j["delta"] = params.elig_density_delta;
  j["lambda"] = params.lambda_arrival;
  j["seed"] = params.seed;
  return j;
}

GenParams gen_params_from_json(const nlohmann::ordered_json& j) {
  GenParams p;
  p.n = j.at("n").get<int>();
  p.m = j.at("m").get<int>();
  p.tau = j.at("tau").get<double>();
  p.range_R = j.at("range").get<double>();
  p.setup_ratio_beta = j.at("beta").get<double>();
  p.elig_density_delta = j.at("delta").get<double>();
  p.lambda_arrival = j.value("lambda", 0.5);
  p.seed = j.at("seed").get<std::uint64_t>();
  return p;
}

nlohmann::ordered_json manifest_to_json(const std::vector<ManifestEntry>& manifest) {
  auto arr = nlohmann::ordered_json::array();
  for (const auto& e : manifest) {
    nlohmann::ordered_json j;
    j["file"] = e.file;
    j["params"] = to_json(e.params);
    j["seed"] = e.seed;
    arr.push_back(std::move(j));
  }
  return arr;
}

std::vector<ManifestEntry> load_manifest(const std::string& path) {
  namespace fs = std::filesystem;
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open manifest " + path);
  const auto j = nlohmann::ordered_json::parse(in);
  const fs::path dir = fs::path(path).parent_path();
  std::vector<ManifestEntry> out;
  for (const auto& e : j) {
    ManifestEntry entry;
    entry.file = (dir / e.at("file").get<std::string>()).string();
    entry.params = gen_params_from_json(e.at("params"));
    entry.seed = e.at("seed").get<std::uint64_t>();
    out.push_back(std::move(entry));
  }
  return out;
}

}  // namespace upms
