#include "cr2/deployment_cost.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <utility>

namespace cr2 {

namespace {

void require_positive(double v, const char* what) {
  if (!(v > 0.0) || !std::isfinite(v)) throw std::invalid_argument(std::string(what) + " must be positive");
}

}  // namespace

void CommParams::validate() const {
  require_positive(bits_per_input_token, "comm.b_in");
  require_positive(bits_per_output_token, "comm.b_out");
  require_positive(uplink_bandwidth_hz, "comm.B_ul");
  require_positive(downlink_bandwidth_hz, "comm.B_dl");
  require_positive(rtt_s, "comm.tau_rtt");
  require_positive(ue_tx_power_w, "comm.p_u_ul");
  require_positive(bs_tx_power_w, "comm.p_bs_dl");
  require_positive(noise_psd_w_per_hz, "comm.N0");
  require_positive(path_loss_ref, "comm.K0");
  require_positive(path_loss_exponent, "comm.alpha_pl");
  require_positive(min_distance_m, "comm.d_min");
  require_positive(max_distance_m, "comm.d_max");
  if (min_distance_m > max_distance_m) throw std::invalid_argument("comm.d_min must not exceed comm.d_max");
}

void ModelProfile::validate() const {
  if (id.empty()) throw std::invalid_argument("model id must be non-empty");
  const std::string prefix = "model." + id + ".";
  require_positive(beta_prefill, (prefix + "beta_pre").c_str());
  require_positive(beta_decode, (prefix + "beta_dec").c_str());
  require_positive(kappa_prefill, (prefix + "kappa_pre").c_str());
  require_positive(kappa_decode, (prefix + "kappa_dec").c_str());
  require_positive(active_power_w, (prefix + "power").c_str());
}

void UePower::validate() const {
  require_positive(tx_w, "ue.p_tx");
  require_positive(rx_w, "ue.p_rx");
  require_positive(idle_w, "ue.p_idle");
  require_positive(active_w, "ue.p_act");
}

void CostWeights::validate() const {
  if (!(omega_t >= 0.0 && omega_t <= 1.0 && omega_e >= 0.0 && omega_e <= 1.0)) {
    throw std::invalid_argument("cost weights must lie in [0, 1]");
  }
  if (std::abs(omega_t + omega_e - 1.0) > 1e-12) throw std::invalid_argument("omega_t + omega_e must equal 1");
  require_positive(latency_scale_s, "cost.T0");
  require_positive(energy_scale_j, "cost.E0");
}

double channel_gain(const CommParams& params, double distance_m, double fading) {
  return params.path_loss_ref * fading * std::pow(distance_m, -params.path_loss_exponent);
}

double link_rate(const CommParams& params, const SystemState& state, LinkDirection direction) {
  const bool up = direction == LinkDirection::uplink;
  const double bandwidth = up ? params.uplink_bandwidth_hz : params.downlink_bandwidth_hz;
  const double power = up ? params.ue_tx_power_w : params.bs_tx_power_w;
  const double gain = channel_gain(params, state.distance_m, up ? state.uplink_fading : state.downlink_fading);
  const double snr = power * gain / (bandwidth * params.noise_psd_w_per_hz);
  return bandwidth * std::log2(1.0 + snr);
}

CommDelays comm_delays(const CommParams& params, const SystemState& state, const ModelProfile& m,
                       int l_in, int l_out) {
  if (m.tier != Tier::edge) throw std::invalid_argument("comm_delays: local model has no communication");
  CommDelays d;
  d.uplink_s = params.bits_per_input_token * l_in / link_rate(params, state, LinkDirection::uplink);
  d.downlink_s = params.bits_per_output_token * l_out / link_rate(params, state, LinkDirection::downlink);
  return d;
}

double inference_latency(const ModelProfile& m, int l_in, int l_out) {
  return m.beta_prefill * (m.kappa_prefill * l_in) + m.beta_decode * (m.kappa_decode * l_out);
}

LatencyEnergy end_to_end(const ModelProfile& m, const CommParams& params, const SystemState& state,
                         int l_in, int l_out, const UePower& ue) {
  const double t_inf = inference_latency(m, l_in, l_out);
  if (m.tier == Tier::local) return {t_inf, m.active_power_w * t_inf};
  const CommDelays d = comm_delays(params, state, m, l_in, l_out);
  LatencyEnergy out;
  out.latency_s = d.uplink_s + params.rtt_s + t_inf + d.downlink_s;
  out.energy_j = ue.tx_w * d.uplink_s + ue.rx_w * d.downlink_s + ue.idle_w * (params.rtt_s + t_inf) +
                 m.active_power_w * t_inf;
  return out;
}

SystemState sample_state(const CommParams& params, Rng& rng) {
  SystemState s;
  s.distance_m = rng.uniform(params.min_distance_m, params.max_distance_m);
  s.uplink_fading = rng.exponential(1.0);
  s.downlink_fading = rng.exponential(1.0);
  // Exp(1) can return exactly 0 only when uniform() == 0; keep gains positive.
  if (s.uplink_fading <= 0.0) s.uplink_fading = 1e-300;
  if (s.downlink_fading <= 0.0) s.downlink_fading = 1e-300;
  return s;
}

CostModel::CostModel(std::vector<ModelProfile> models, CommParams comm, UePower ue, CostWeights weights)
    : models_(std::move(models)), comm_(comm), ue_(ue), weights_(weights) {
  if (models_.empty()) throw std::invalid_argument("model pool is empty");
  comm_.validate();
  ue_.validate();
  weights_.validate();
  std::size_t n_local = 0;
  for (std::size_t i = 0; i < models_.size(); ++i) {
    models_[i].validate();
    for (std::size_t j = 0; j < i; ++j) {
      if (models_[j].id == models_[i].id) throw std::invalid_argument("duplicate model id " + models_[i].id);
    }
    if (models_[i].tier == Tier::local) {
      local_index_ = i;
      ++n_local;
    }
    if (models_[i].kappa_decode > models_[reference_index_].kappa_decode) reference_index_ = i;
  }
  if (n_local != 1) throw std::invalid_argument("model pool must contain exactly one local model");
}

std::vector<std::string> CostModel::model_ids() const {
  std::vector<std::string> ids;
  for (const auto& m : models_) ids.push_back(m.id);
  return ids;
}

void CostModel::check_workload(const QueryWorkload& workload) const {
  if (workload.l_out.size() != models_.size()) throw std::invalid_argument("workload l_out size != pool size");
  if (workload.l_in < 1) throw std::invalid_argument("workload l_in must be >= 1");
  for (int v : workload.l_out) {
    if (v < 1) throw std::invalid_argument("workload l_out must be >= 1");
  }
}

LatencyEnergy CostModel::evaluate(std::size_t model, const QueryWorkload& workload, const SystemState& state) const {
  return end_to_end(models_.at(model), comm_, state, workload.l_in, workload.l_out.at(model), ue_);
}

double CostModel::raw_cost(std::size_t model, const QueryWorkload& workload, const SystemState& state) const {
  const LatencyEnergy te = evaluate(model, workload, state);
  return weights_.omega_t * te.latency_s / weights_.latency_scale_s +
         weights_.omega_e * te.energy_j / weights_.energy_scale_j;
}

std::vector<double> CostModel::normalized_costs(const QueryWorkload& workload, const SystemState& state) const {
  check_workload(workload);
  std::vector<double> raw(models_.size());
  for (std::size_t m = 0; m < models_.size(); ++m) raw[m] = raw_cost(m, workload, state);
  const double ref = raw[reference_index_];
  if (!(ref > 0.0)) throw std::logic_error("reference model raw cost must be positive");
  for (auto& c : raw) c /= ref;
  return raw;
}

CostModel CostModel::with_reference_scales(std::span<const QueryWorkload> workloads, Rng& rng) const {
  if (workloads.empty()) throw std::invalid_argument("reference sample is empty");
  double t_sum = 0.0;
  double e_sum = 0.0;
  for (const auto& w : workloads) {
    check_workload(w);
    const SystemState s = sample_state(comm_, rng);
    const LatencyEnergy te = evaluate(reference_index_, w, s);
    t_sum += te.latency_s;
    e_sum += te.energy_j;
  }
  CostWeights scaled = weights_;
  scaled.latency_scale_s = t_sum / static_cast<double>(workloads.size());
  scaled.energy_scale_j = e_sum / static_cast<double>(workloads.size());
  return CostModel(models_, comm_, ue_, scaled);
}

bool local_is_cheapest(std::span<const double> costs, std::size_t local_index) {
  return std::all_of(costs.begin(), costs.end(), [&](double c) { return costs[local_index] <= c; });
}

}  // namespace cr2
