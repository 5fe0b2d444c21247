#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cr2/dataset.hpp"
#include "cr2/deployment_cost.hpp"
#include "cr2/margin_gate.hpp"
#include "cr2/teacher.hpp"

namespace cr2 {

// Threshold that accepts nothing locally.
inline constexpr double kNeverAccept = std::numeric_limits<double>::infinity();

inline constexpr std::array<double, 5> kDefaultAlphaGrid = {0.002, 0.005, 0.010, 0.020, 0.050};

struct CalibrationRecord {
  double score = 0.0;       // gate score in [0, 1]
  std::uint8_t disagree = 0;  // 1 when the full-information reference prefers an edge model
};

// r_i = 1[full-information choice != local model], one label per query.
std::vector<std::uint8_t> disagreement_labels(std::span<const std::vector<double>> probs,
                                              std::span<const std::vector<double>> costs, double lambda,
                                              std::size_t local_index);

// (1/N) sum r_i 1[s_i >= tau]
double empirical_risk(std::span<const CalibrationRecord> records, double tau);
// Number of accepted disagreements d_tau.
std::size_t accepted_disagreements(std::span<const CalibrationRecord> records, double tau);
// N/(N+1) R + 1/(N+1)
double crc_correction(std::span<const CalibrationRecord> records, double tau);
// (d_tau + 1)/(N + 1)
double crc_correction_count(std::span<const CalibrationRecord> records, double tau);

// Smallest candidate threshold (0, every observed score, then the never-accept
// sentinel) whose corrected risk is at most alpha.
double calibrate_threshold(std::span<const CalibrationRecord> records, double alpha);

// Same result for several alpha levels from one sorted pass.
std::vector<double> calibrate_thresholds(std::span<const CalibrationRecord> records, std::span<const double> alphas);

std::vector<double> log_spaced(double lo, double hi, std::size_t n);
std::vector<double> default_lambda_grid();

class ThresholdTable {
 public:
  ThresholdTable() = default;
  ThresholdTable(std::vector<double> lambdas, std::vector<double> alphas, std::vector<double> tau);

  const std::vector<double>& lambdas() const noexcept { return lambdas_; }
  const std::vector<double>& alphas() const noexcept { return alphas_; }
  const std::vector<double>& tau() const noexcept { return tau_; }
  double at(std::size_t lambda_index, std::size_t alpha_index) const;
  // Exact grid lookup; a (lambda, alpha) outside the grid throws std::out_of_range.
  double lookup(double lambda, double alpha) const;
  std::size_t lambda_index(double lambda) const;
  std::size_t alpha_index(double alpha) const;

  friend bool operator==(const ThresholdTable&, const ThresholdTable&) = default;

 private:
  std::vector<double> lambdas_;
  std::vector<double> alphas_;
  std::vector<double> tau_;  // lambda-major
};

struct TableProvenance {
  std::string gate_hash;
  std::string teacher_hash;
  std::string dataset_hash;
  std::size_t n_cal = 0;

  friend bool operator==(const TableProvenance&, const TableProvenance&) = default;
};

struct CalibratedTable {
  ThresholdTable table;
  TableProvenance provenance;
};

// Scores and labels of the calibration split at one lambda.
std::vector<CalibrationRecord> calibration_records(const GateParams& gate, std::span<const std::span<const double>> embeddings,
                                                   std::span<const std::vector<double>> probs,
                                                   std::span<const std::vector<double>> costs, double lambda,
                                                   std::size_t local_index);

// Calibrates every (lambda, alpha) pair on the calibration split of `ds`.
// `states` holds one state per query of the dataset.
ThresholdTable build_table(const GateParams& gate, const TeacherParams& teacher, const CostModel& cost_model,
                           const RoutingDataset& ds, std::span<const SystemState> states,
                           std::span<const double> lambda_grid, std::span<const double> alpha_grid);

std::string serialize_table(const CalibratedTable& t);
CalibratedTable parse_table(std::string_view text);

}  // namespace cr2
