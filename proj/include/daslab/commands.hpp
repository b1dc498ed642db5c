#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "daslab/config.hpp"
#include "daslab/data.hpp"
#include "daslab/strategies.hpp"

namespace daslab {

// ---- run ------------------------------------------------------------------

/// Resolves preset/config-file/flag settings and runs one experiment per
/// seed (or a single one). Prints one line per step to `out`.
int cmd_run(const std::optional<std::filesystem::path>& config_path, const Settings& flags, std::ostream& out,
            std::ostream& err);

// ---- grad-check -------------------------------------------------------------

enum class Precision { single, wide };

struct GradCheckCase {
  std::string spec_name;
  Precision precision = Precision::wide;
  std::uint64_t seed = 0;
  std::size_t parameters = 0;
  double error = 0.0;
  double threshold = 0.0;

  bool passed() const { return error < threshold; }
};

/// Tolerance for a spec/precision pair: 1e-6 for linear-softmax in double,
/// 1e-3 otherwise.
double grad_check_threshold(const std::string& spec_name, Precision precision);

/// Runs grad_check on `instances` seeded random small problems per spec name
/// and precision. Single-precision cases compare the float backward pass with
/// double central differences.
std::vector<GradCheckCase> grad_check_suite(const std::vector<std::string>& spec_names, std::size_t instances,
                                            std::uint64_t base_seed, double eps);

struct GradCheckOptions {
  std::string spec = "default";  // default | linear-softmax | conv-relu-dense
  double eps = 1e-4;
  std::size_t instances = 10;
  std::uint64_t seed = 1;
};

int cmd_grad_check(const GradCheckOptions& options, std::ostream& out, std::ostream& err);

// ---- kcenter-verify ---------------------------------------------------------

struct KCenterInstance {
  std::uint64_t seed = 0;
  FeatureMatrix points;
  std::size_t k = 0;
};

struct KCenterLimits {
  std::size_t max_points = 12;
  std::size_t max_k = 4;
  std::size_t max_dim = 3;
};

KCenterInstance make_kcenter_instance(std::uint64_t seed, const KCenterLimits& limits);

/// Smallest covering radius over all k-subsets of the points.
double brute_force_kcenter_radius(const FeatureMatrix& points, std::size_t k);

/// greedy radius / optimal radius; 1.0 when k == 0 or both radii are 0.
double kcenter_ratio(const KCenterInstance& instance);

struct KCenterVerifyOptions {
  std::size_t instances = 200;
  std::uint64_t seed = 1;
  KCenterLimits limits;
};

int cmd_kcenter_verify(const KCenterVerifyOptions& options, std::ostream& out, std::ostream& err);

// ---- report -----------------------------------------------------------------

/// Merges runs: curves.csv (mean/min/max per strategy and step) and
/// histogram_comparison.csv (mean class counts per strategy) in `out_dir`.
/// Throws ConfigError when runs disagree on protocol parameters.
void build_report(const std::vector<std::filesystem::path>& run_dirs, const std::filesystem::path& out_dir,
                  std::ostream& out);

int cmd_report(const std::vector<std::filesystem::path>& run_dirs, const std::filesystem::path& out_dir,
               std::ostream& out, std::ostream& err);

}  // namespace daslab
