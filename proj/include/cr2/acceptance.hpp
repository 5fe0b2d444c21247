#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "cr2/calibration.hpp"
#include "cr2/config.hpp"
#include "cr2/pipeline.hpp"

namespace cr2 {

// Deliberately naive reference implementations used to cross-check the
// production code paths.
namespace brute {

// Exhaustive utility scan with the pool tie rules spelled out step by step.
std::size_t select(std::span<const double> probs, std::span<const double> costs, double lambda, std::size_t local_index);
// Local utility minus the best edge utility, by direct enumeration.
double margin(std::span<const double> probs, std::span<const double> costs, double lambda, std::size_t local_index);
// Tries 0, every score and +inf, recounting the accepted disagreements each time.
double threshold(std::span<const CalibrationRecord> records, double alpha);

}  // namespace brute

struct CriterionResult {
  std::string id;
  bool passed = false;
  std::string detail;
};

std::string format_result(const CriterionResult& r);

// Stand-alone property criteria; `seed` drives the random instances.
CriterionResult check_a2_crc_equivalence(std::uint64_t seed, std::size_t instances = 1000);
CriterionResult check_a3_threshold_exactness(std::uint64_t seed, std::size_t instances = 1000);
CriterionResult check_a4_gradients(const RunConfig& cfg, std::size_t batches = 10, std::size_t batch_size = 16);
CriterionResult check_a5_cost_model(const RunConfig& cfg, std::size_t unit_pairs = 10000, std::size_t regime_pairs = 100000);
CriterionResult check_a6_margin_structure(std::uint64_t seed, std::size_t instances = 10000);
CriterionResult check_a8_cost_monotonicity(std::uint64_t seed, std::size_t instances = 10000);

// Criteria that need trained artifacts.
CriterionResult check_a1_crc_guarantee(const RunConfig& cfg, const LoadedRun& run);
CriterionResult check_a7_learnability(const RunConfig& cfg, const LoadedRun& run, double pipeline_seconds);
CriterionResult check_a9_determinism(const std::filesystem::path& run_a, const std::filesystem::path& run_b);

// Runs the pipeline twice under `work_dir` and evaluates A1-A9 in order,
// reporting each result through `on_result` as soon as it is known.
std::vector<CriterionResult> run_acceptance(const RunConfig& cfg, const std::filesystem::path& work_dir,
                                            const std::function<void(const CriterionResult&)>& on_result = {});

}  // namespace cr2
