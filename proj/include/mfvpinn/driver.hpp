#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mfvpinn/adapt.hpp"
#include "mfvpinn/optim.hpp"

namespace mfvpinn {

struct RunConfig {
  std::string problem = "poisson_singular";
  int strategy = 2;
  int c_m = 4;
  int max_generations = 9;
  std::uint64_t seed = 0;
  std::vector<int> layer_dims = {2, 50, 50, 50, 50, 1};
  int q = 3;
  double c_h = 1.0;
  double lambda_reg = 1e-5;
  TrainSchedule schedule;
  RefinementConfig refine;   // strategy/c_m are overwritten from the fields above
  int seeded_start = -1;     // -1 auto (strategy 1 only), else 0/1
  bool track_h1 = true;      // record the true error at indicator checkpoints
  int h1_ref_level = 0;      // 0: per-problem default (128, or 221 for holes)
  int h1_track_level = 32;   // coarser grid used at checkpoints
  bool check_covers = true;  // run cover_check after every refinement
  bool verbose = true;
  int cover_check_grid = 201;
  std::string out_dir = "out";
};

/// Reads a JSON run configuration; missing keys keep their defaults.
RunConfig load_config(const std::string& path);

struct RunSummary {
  std::vector<int> n_test_functions;   // cover size per generation
  std::vector<double> errors;          // relative H1 error per generation
  std::vector<double> es;              // global indicator per generation
  double rate = 0.0;                   // LS slope of log(error) vs log(n_test_functions)
  bool aborted = false;
  bool covers_ok = true;
  std::vector<EpochRecord> history;    // all recorded epochs
};

/// Runs the full adaptive loop and writes all artifacts (error-decay CSV,
/// training history CSV, indicator history CSV, per-generation patch
/// snapshots, refinement log, parameter checkpoint, summary JSON) into
/// config.out_dir.
RunSummary run(const RunConfig& config);

/// Least-squares slope of log(err) against log(n).
double fit_rate(std::span<const int> n, std::span<const double> err);

}  // namespace mfvpinn
