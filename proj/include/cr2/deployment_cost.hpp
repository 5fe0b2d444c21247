#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "cr2/random.hpp"

namespace cr2 {

enum class Tier { local, edge };
enum class LinkDirection { uplink, downlink };

// Link-budget and payload parameters. Defaults are the reference system setup.
struct CommParams {
  double bits_per_input_token = 32.0;
  double bits_per_output_token = 32.0;
  double uplink_bandwidth_hz = 10e6;
  double downlink_bandwidth_hz = 40e6;
  double rtt_s = 0.018;
  double ue_tx_power_w = 0.5;   // radiated
  double bs_tx_power_w = 2.0;   // radiated
  double noise_psd_w_per_hz = std::pow(10.0, -20.4);  // -174 dBm/Hz
  double path_loss_ref = std::pow(10.0, -4.33);       // -43.3 dB at d0 = 1 m
  double path_loss_exponent = 4.0;
  double min_distance_m = 30.0;
  double max_distance_m = 150.0;

  void validate() const;
};

// One sampled runtime state: UE-edge distance and per-direction fading power gains.
struct SystemState {
  double distance_m = 100.0;
  double uplink_fading = 1.0;
  double downlink_fading = 1.0;
};

struct ModelProfile {
  std::string id;
  Tier tier = Tier::edge;
  double beta_prefill = 0.0;    // s / FLOP
  double beta_decode = 0.0;     // s / FLOP
  double kappa_prefill = 0.0;   // FLOP / input token
  double kappa_decode = 0.0;    // FLOP / output token
  double active_power_w = 0.0;  // UE active power (local) or server power (edge)

  void validate() const;
};

struct UePower {
  double tx_w = 1.20;
  double rx_w = 0.90;
  double idle_w = 0.05;
  double active_w = 15.0;

  void validate() const;
};

struct CostWeights {
  double omega_t = 0.5;
  double omega_e = 0.5;
  double latency_scale_s = 1.0;  // T0
  double energy_scale_j = 1.0;   // E0

  void validate() const;
};

struct QueryWorkload {
  int l_in = 1;
  std::vector<int> l_out;  // one entry per model, pool order
};

struct CommDelays {
  double uplink_s = 0.0;
  double downlink_s = 0.0;
};

struct LatencyEnergy {
  double latency_s = 0.0;
  double energy_j = 0.0;
};

// Channel gain K0 |z|^2 (d / 1 m)^-alpha.
double channel_gain(const CommParams& params, double distance_m, double fading);
// Shannon rate in bits/s.
double link_rate(const CommParams& params, const SystemState& state, LinkDirection direction);
// Throws std::invalid_argument for the local tier.
CommDelays comm_delays(const CommParams& params, const SystemState& state, const ModelProfile& m,
                       int l_in, int l_out);
// Linear per-token workload: beta_pre kappa_pre L_in + beta_dec kappa_dec L_out.
double inference_latency(const ModelProfile& m, int l_in, int l_out);
LatencyEnergy end_to_end(const ModelProfile& m, const CommParams& params, const SystemState& state,
                         int l_in, int l_out, const UePower& ue);

SystemState sample_state(const CommParams& params, Rng& rng);

// A validated model pool with its channel, UE and weighting parameters.
class CostModel {
 public:
  CostModel(std::vector<ModelProfile> models, CommParams comm, UePower ue, CostWeights weights);

  const std::vector<ModelProfile>& models() const noexcept { return models_; }
  const CommParams& comm() const noexcept { return comm_; }
  const UePower& ue() const noexcept { return ue_; }
  const CostWeights& weights() const noexcept { return weights_; }
  std::size_t size() const noexcept { return models_.size(); }
  std::size_t local_index() const noexcept { return local_index_; }
  // Largest model (max kappa_decode); its normalized cost is exactly 1.
  std::size_t reference_index() const noexcept { return reference_index_; }
  std::vector<std::string> model_ids() const;

  LatencyEnergy evaluate(std::size_t model, const QueryWorkload& workload, const SystemState& state) const;
  // Raw cost omega_t t / T0 + omega_e e / E0.
  double raw_cost(std::size_t model, const QueryWorkload& workload, const SystemState& state) const;
  // Costs of every model relative to the reference model.
  std::vector<double> normalized_costs(const QueryWorkload& workload, const SystemState& state) const;

  // Returns a copy whose T0/E0 are the mean latency/energy of the reference
  // model over the given workloads, each paired with a state drawn from rng.
  CostModel with_reference_scales(std::span<const QueryWorkload> workloads, Rng& rng) const;

 private:
  void check_workload(const QueryWorkload& workload) const;

  std::vector<ModelProfile> models_;
  CommParams comm_;
  UePower ue_;
  CostWeights weights_;
  std::size_t local_index_ = 0;
  std::size_t reference_index_ = 0;
};

// True when the local model is no more expensive than every edge model.
bool local_is_cheapest(std::span<const double> costs, std::size_t local_index);

}  // namespace cr2
