#include "cr2/calibration.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <stdexcept>

namespace cr2 {

namespace {

void require_records(std::span<const CalibrationRecord> records) {
  if (records.empty()) throw std::invalid_argument("calibration needs at least one record");
}

std::string format_double(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double parse_double(std::string_view s) {
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw std::runtime_error("threshold table: bad number '" + std::string(s) + "'");
  }
  return v;
}

bool strictly_ascending(const std::vector<double>& v) {
  return std::adjacent_find(v.begin(), v.end(), [](double a, double b) { return !(a < b); }) == v.end();
}

}  // namespace

std::vector<std::uint8_t> disagreement_labels(std::span<const std::vector<double>> probs,
                                              std::span<const std::vector<double>> costs, double lambda,
                                              std::size_t local_index) {
  if (probs.size() != costs.size()) throw std::invalid_argument("disagreement_labels: size mismatch");
  std::vector<std::uint8_t> r(probs.size());
  for (std::size_t i = 0; i < probs.size(); ++i) {
    r[i] = full_info_select(probs[i], costs[i], lambda, local_index) != local_index ? 1 : 0;
  }
  return r;
}

std::size_t accepted_disagreements(std::span<const CalibrationRecord> records, double tau) {
  std::size_t d = 0;
  for (const auto& rec : records) d += (rec.disagree && rec.score >= tau) ? 1 : 0;
  return d;
}

double empirical_risk(std::span<const CalibrationRecord> records, double tau) {
  require_records(records);
  return static_cast<double>(accepted_disagreements(records, tau)) / static_cast<double>(records.size());
}

double crc_correction(std::span<const CalibrationRecord> records, double tau) {
  const double n = static_cast<double>(records.size());
  return n / (n + 1.0) * empirical_risk(records, tau) + 1.0 / (n + 1.0);
}

double crc_correction_count(std::span<const CalibrationRecord> records, double tau) {
  require_records(records);
  return static_cast<double>(accepted_disagreements(records, tau) + 1) / static_cast<double>(records.size() + 1);
}

std::vector<double> calibrate_thresholds(std::span<const CalibrationRecord> records, std::span<const double> alphas) {
  require_records(records);
  for (double a : alphas) {
    if (!(a > 0.0 && a < 1.0)) throw std::invalid_argument("alpha must lie in (0, 1)");
  }
  for (const auto& rec : records) {
    if (!(rec.score >= 0.0 && rec.score <= 1.0)) throw std::invalid_argument("calibration score outside [0, 1]");
  }
  std::vector<CalibrationRecord> sorted(records.begin(), records.end());
  std::sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) { return a.score < b.score; });
  std::size_t total = 0;
  for (const auto& rec : sorted) total += rec.disagree;

  // Ascending candidates with their accepted-disagreement counts.
  std::vector<std::pair<double, std::size_t>> candidates;
  candidates.reserve(sorted.size() + 2);
  candidates.emplace_back(0.0, total);
  std::size_t below = 0;  // disagreements with score < current candidate
  for (std::size_t i = 0; i < sorted.size();) {
    const double s = sorted[i].score;
    if (s > 0.0) candidates.emplace_back(s, total - below);
    while (i < sorted.size() && sorted[i].score == s) below += sorted[i++].disagree;
  }
  candidates.emplace_back(kNeverAccept, 0);

  const double denom = static_cast<double>(sorted.size() + 1);
  std::vector<double> out;
  out.reserve(alphas.size());
  for (double alpha : alphas) {
    double tau = kNeverAccept;
    for (const auto& [cand, d] : candidates) {
      if (static_cast<double>(d + 1) / denom <= alpha) {
        tau = cand;
        break;
      }
    }
    out.push_back(tau);
  }
  return out;
}

double calibrate_threshold(std::span<const CalibrationRecord> records, double alpha) {
  return calibrate_thresholds(records, std::span<const double>(&alpha, 1)).front();
}

std::vector<double> log_spaced(double lo, double hi, std::size_t n) {
  if (!(lo > 0.0 && hi >= lo) || n == 0) throw std::invalid_argument("log_spaced: bad range");
  if (n == 1) return {lo};
  std::vector<double> out(n);
  const double a = std::log(lo);
  const double b = std::log(hi);
  for (std::size_t i = 0; i < n; ++i) out[i] = std::exp(a + (b - a) * static_cast<double>(i) / static_cast<double>(n - 1));
  out.front() = lo;
  out.back() = hi;
  return out;
}

std::vector<double> default_lambda_grid() { return log_spaced(0.1, 20.0, 24); }

ThresholdTable::ThresholdTable(std::vector<double> lambdas, std::vector<double> alphas, std::vector<double> tau)
    : lambdas_(std::move(lambdas)), alphas_(std::move(alphas)), tau_(std::move(tau)) {
  if (lambdas_.empty() || alphas_.empty()) throw std::invalid_argument("threshold table needs non-empty grids");
  if (!strictly_ascending(lambdas_) || !(lambdas_.front() > 0.0) || !std::isfinite(lambdas_.back())) {
    throw std::invalid_argument("lambda grid must be ascending and positive");
  }
  if (!strictly_ascending(alphas_) || !(alphas_.front() > 0.0) || !(alphas_.back() < 1.0)) {
    throw std::invalid_argument("alpha grid must be ascending within (0, 1)");
  }
  if (tau_.size() != lambdas_.size() * alphas_.size()) throw std::invalid_argument("threshold table size mismatch");
  for (double t : tau_) {
    if (!(t == kNeverAccept || (t >= 0.0 && t <= 1.0))) throw std::invalid_argument("threshold outside [0, 1] and not inf");
  }
  for (std::size_t l = 0; l < lambdas_.size(); ++l) {
    for (std::size_t a = 1; a < alphas_.size(); ++a) {
      if (at(l, a) > at(l, a - 1)) throw std::invalid_argument("threshold must be non-increasing in alpha");
    }
  }
}

double ThresholdTable::at(std::size_t lambda_index, std::size_t alpha_index) const {
  return tau_.at(lambda_index * alphas_.size() + alpha_index);
}

std::size_t ThresholdTable::lambda_index(double lambda) const {
  const auto it = std::find(lambdas_.begin(), lambdas_.end(), lambda);
  if (it == lambdas_.end()) throw std::out_of_range("lambda " + format_double(lambda) + " is not on the threshold grid");
  return static_cast<std::size_t>(it - lambdas_.begin());
}

std::size_t ThresholdTable::alpha_index(double alpha) const {
  const auto it = std::find(alphas_.begin(), alphas_.end(), alpha);
  if (it == alphas_.end()) throw std::out_of_range("alpha " + format_double(alpha) + " is not on the threshold grid");
  return static_cast<std::size_t>(it - alphas_.begin());
}

double ThresholdTable::lookup(double lambda, double alpha) const { return at(lambda_index(lambda), alpha_index(alpha)); }

std::vector<CalibrationRecord> calibration_records(const GateParams& gate, std::span<const std::span<const double>> embeddings,
                                                   std::span<const std::vector<double>> probs,
                                                   std::span<const std::vector<double>> costs, double lambda,
                                                   std::size_t local_index) {
  if (embeddings.size() != probs.size()) throw std::invalid_argument("calibration_records: size mismatch");
  const auto r = disagreement_labels(probs, costs, lambda, local_index);
  std::vector<CalibrationRecord> out(embeddings.size());
  for (std::size_t i = 0; i < embeddings.size(); ++i) {
    out[i] = {gate_forward(gate, embeddings[i], lambda).score, r[i]};
  }
  return out;
}

ThresholdTable build_table(const GateParams& gate, const TeacherParams& teacher, const CostModel& cost_model,
                           const RoutingDataset& ds, std::span<const SystemState> states,
                           std::span<const double> lambda_grid, std::span<const double> alpha_grid) {
  if (states.size() != ds.queries.size()) throw std::invalid_argument("build_table: one state per query required");
  const auto cal = ds.indices(Split::cal);
  if (cal.empty()) throw std::invalid_argument("build_table: empty calibration split");
  std::vector<std::span<const double>> emb;
  std::vector<std::vector<double>> probs;
  std::vector<std::vector<double>> costs;
  for (std::size_t idx : cal) {
    const auto& q = ds.queries[idx];
    emb.emplace_back(q.embedding);
    probs.push_back(teacher_forward(teacher, q.embedding).probs);
    costs.push_back(cost_model.normalized_costs(q.workload(), states[idx]));
  }
  std::vector<double> tau;
  tau.reserve(lambda_grid.size() * alpha_grid.size());
  for (double lambda : lambda_grid) {
    const auto records = calibration_records(gate, emb, probs, costs, lambda, cost_model.local_index());
    const auto col = calibrate_thresholds(records, alpha_grid);
    tau.insert(tau.end(), col.begin(), col.end());
  }
  return ThresholdTable({lambda_grid.begin(), lambda_grid.end()}, {alpha_grid.begin(), alpha_grid.end()}, std::move(tau));
}

std::string serialize_table(const CalibratedTable& t) {
  std::ostringstream out;
  out << "# cr2 threshold table v1\n";
  out << "gate_sha256=" << t.provenance.gate_hash << "\n";
  out << "teacher_sha256=" << t.provenance.teacher_hash << "\n";
  out << "dataset_sha256=" << t.provenance.dataset_hash << "\n";
  out << "n_cal=" << t.provenance.n_cal << "\n";
  out << "lambda,alpha,tau\n";
  const auto& tb = t.table;
  for (std::size_t l = 0; l < tb.lambdas().size(); ++l) {
    for (std::size_t a = 0; a < tb.alphas().size(); ++a) {
      out << format_double(tb.lambdas()[l]) << ',' << format_double(tb.alphas()[a]) << ',' << format_double(tb.at(l, a))
          << "\n";
    }
  }
  return out.str();
}

CalibratedTable parse_table(std::string_view text) {
  std::istringstream in{std::string(text)};
  std::string line;
  auto next = [&](const char* what) {
    if (!std::getline(in, line)) throw std::runtime_error(std::string("threshold table: missing ") + what);
    return line;
  };
  auto field = [&](std::string_view key) {
    const std::string l = next(std::string(key).c_str());
    if (l.rfind(std::string(key) + "=", 0) != 0) throw std::runtime_error("threshold table: expected " + std::string(key));
    return l.substr(key.size() + 1);
  };
  if (next("header") != "# cr2 threshold table v1") throw std::runtime_error("threshold table: unsupported header");
  CalibratedTable out;
  out.provenance.gate_hash = field("gate_sha256");
  out.provenance.teacher_hash = field("teacher_sha256");
  out.provenance.dataset_hash = field("dataset_sha256");
  const std::string n_cal = field("n_cal");
  {
    const auto res = std::from_chars(n_cal.data(), n_cal.data() + n_cal.size(), out.provenance.n_cal);
    if (res.ec != std::errc() || res.ptr != n_cal.data() + n_cal.size()) throw std::runtime_error("threshold table: bad n_cal");
  }
  if (next("column header") != "lambda,alpha,tau") throw std::runtime_error("threshold table: bad column header");

  std::vector<double> lambdas;
  std::vector<double> alphas;
  std::vector<double> tau;
  std::vector<std::array<double, 3>> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto c1 = line.find(',');
    const auto c2 = line.find(',', c1 == std::string::npos ? c1 : c1 + 1);
    if (c1 == std::string::npos || c2 == std::string::npos || line.find(',', c2 + 1) != std::string::npos) {
      throw std::runtime_error("threshold table: expected three columns");
    }
    const std::string_view sv(line);
    rows.push_back({parse_double(sv.substr(0, c1)), parse_double(sv.substr(c1 + 1, c2 - c1 - 1)), parse_double(sv.substr(c2 + 1))});
  }
  for (const auto& r : rows) {
    if (lambdas.empty() || lambdas.back() != r[0]) lambdas.push_back(r[0]);
    if (lambdas.size() == 1) alphas.push_back(r[1]);
  }
  if (rows.size() != lambdas.size() * alphas.size()) throw std::runtime_error("threshold table: ragged grid");
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i][0] != lambdas[i / alphas.size()] || rows[i][1] != alphas[i % alphas.size()]) {
      throw std::runtime_error("threshold table: rows out of grid order");
    }
    tau.push_back(rows[i][2]);
  }
  try {
    out.table = ThresholdTable(std::move(lambdas), std::move(alphas), std::move(tau));
  } catch (const std::invalid_argument& e) {
    throw std::runtime_error(std::string("threshold table: ") + e.what());
  }
  return out;
}

}  // namespace cr2
