#include <doctest.h>

#include <cmath>
#include <vector>

#include "cr2/deployment_cost.hpp"
#include "cr2/random.hpp"
#include "oracles.hpp"

using namespace cr2;

namespace {

ModelProfile profile(const char* id, Tier tier, double beta_pre, double beta_dec, double kappa_pre, double kappa_dec,
                     double power) {
  ModelProfile m;
  m.id = id;
  m.tier = tier;
  m.beta_prefill = beta_pre;
  m.beta_decode = beta_dec;
  m.kappa_prefill = kappa_pre;
  m.kappa_decode = kappa_dec;
  m.active_power_w = power;
  return m;
}

// Same coefficients as the bundled configuration.
std::vector<ModelProfile> desk_pool() {
  return {profile("local-1.7b", Tier::local, 2e-13, 6.8e-12, 3.4e9, 3.4e9, 15),
          profile("edge-4b", Tier::edge, 1e-14, 3.125e-12, 8e9, 8e9, 150),
          profile("edge-8b", Tier::edge, 1e-14, 1.25e-12, 16e9, 16e9, 300),
          profile("edge-14b", Tier::edge, 1e-14, 1.25e-12, 28e9, 28e9, 200)};
}

}  // namespace

TEST_CASE("link_rate: unit SNR gives the bandwidth") {
  CommParams p;
  // choose the fading so that p g / (B N0) = 1 at d = 100 m
  const double gain_per_fade = p.path_loss_ref * std::pow(100.0, -p.path_loss_exponent);
  SystemState s;
  s.distance_m = 100.0;
  s.uplink_fading = p.uplink_bandwidth_hz * p.noise_psd_w_per_hz / (p.ue_tx_power_w * gain_per_fade);
  CHECK(link_rate(p, s, LinkDirection::uplink) == doctest::Approx(p.uplink_bandwidth_hz).epsilon(1e-12));
  s.downlink_fading = p.downlink_bandwidth_hz * p.noise_psd_w_per_hz / (p.bs_tx_power_w * gain_per_fade);
  CHECK(link_rate(p, s, LinkDirection::downlink) == doctest::Approx(p.downlink_bandwidth_hz).epsilon(1e-12));
}

TEST_CASE("link_rate: vanishing SNR") {
  CommParams p;
  SystemState s;
  s.uplink_fading = 1e-30;
  s.downlink_fading = 1e-30;
  CHECK(link_rate(p, s, LinkDirection::uplink) < 1.0);
  CHECK(link_rate(p, s, LinkDirection::downlink) < 1.0);
}

TEST_CASE("link_rate: reference parameters at 100 m against the scalar oracle") {
  CommParams p;
  SystemState s;
  const double ul = link_rate(p, s, LinkDirection::uplink);
  const double ul_oracle = oracle::shannon_rate(1e7, 0.5, std::pow(10.0, -4.33), 1.0, 100.0, 4.0, std::pow(10.0, -20.4));
  CHECK(ul == doctest::Approx(ul_oracle).epsilon(1e-9));
  CHECK(ul == doctest::Approx(27812522.20806971).epsilon(1e-9));
  CHECK(channel_gain(p, 100.0, 1.0) == doctest::Approx(4.677351412871982e-13).epsilon(1e-12));
  const double dl = link_rate(p, s, LinkDirection::downlink);
  CHECK(dl == doctest::Approx(111250088.83227885).epsilon(1e-9));
}

TEST_CASE("link_rate is increasing in fading and decreasing in distance") {
  CommParams p;
  Rng rng(1);
  for (int i = 0; i < 1000; ++i) {
    SystemState a = sample_state(p, rng);
    SystemState b = a;
    b.uplink_fading *= 1.0 + rng.uniform(1e-3, 1.0);
    CHECK(link_rate(p, b, LinkDirection::uplink) > link_rate(p, a, LinkDirection::uplink));
    SystemState c = a;
    c.distance_m += rng.uniform(0.01, 10.0);
    CHECK(link_rate(p, c, LinkDirection::uplink) < link_rate(p, a, LinkDirection::uplink));
    CHECK(link_rate(p, c, LinkDirection::downlink) < link_rate(p, a, LinkDirection::downlink));
  }
}

TEST_CASE("comm_delays") {
  // unit-SNR link with B = 3200 Hz gives exactly 3200 bits/s
  CommParams p;
  p.uplink_bandwidth_hz = 3200.0;
  p.downlink_bandwidth_hz = 32.0;
  p.path_loss_ref = 1.0;
  p.min_distance_m = 1.0;
  p.noise_psd_w_per_hz = p.ue_tx_power_w / 3200.0;
  SystemState s{1.0, 1.0, p.downlink_bandwidth_hz * p.noise_psd_w_per_hz / p.bs_tx_power_w};
  const auto edge = profile("e", Tier::edge, 1, 1, 1, 1, 1);
  const auto d = comm_delays(p, s, edge, 100, 1);
  CHECK(d.uplink_s == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(d.downlink_s == doctest::Approx(1.0).epsilon(1e-12));

  const auto local = profile("l", Tier::local, 1, 1, 1, 1, 1);
  CHECK_THROWS_AS(comm_delays(p, s, local, 100, 1), std::invalid_argument);

  const CommParams ref;
  const auto r = comm_delays(ref, SystemState{}, edge, 512, 1);
  CHECK(r.uplink_s == doctest::Approx(512.0 * 32.0 / 27812522.20806971).epsilon(1e-9));
  CHECK(r.uplink_s == doctest::Approx(5.890871700678134e-4).epsilon(1e-9));
}

TEST_CASE("inference_latency") {
  const auto unit = profile("u", Tier::edge, 1, 1, 1, 1, 1);
  CHECK(inference_latency(unit, 1, 1) == 2.0);

  const auto pool = desk_pool();
  const auto& ref = pool[3];
  // hand computation: prefill 1e-14 * 28e9 * 256, decode 1.25e-12 * 28e9 * 256
  const double hand = 1e-14 * 28e9 * 256 + 1.25e-12 * 28e9 * 256;
  CHECK(inference_latency(ref, 256, 256) == doctest::Approx(hand).epsilon(1e-14));
  CHECK(hand == doctest::Approx(0.07168 + 8.96).epsilon(1e-12));

  // doubling l_out doubles the decode term
  const double pre = inference_latency(ref, 256, 1) - 1.25e-12 * 28e9;
  const double dec_a = inference_latency(ref, 256, 100) - pre;
  const double dec_b = inference_latency(ref, 256, 200) - pre;
  CHECK(dec_b == doctest::Approx(2.0 * dec_a).epsilon(1e-12));
}

TEST_CASE("end_to_end") {
  CommParams p;
  UePower ue;
  SUBCASE("local tier") {
    // 2 s of inference at 15 W
    const auto local = profile("l", Tier::local, 1.0, 1.0, 1.0, 1.0, 15.0);
    const auto r = end_to_end(local, p, SystemState{}, 1, 1, ue);
    CHECK(r.latency_s == 2.0);
    CHECK(r.energy_j == 30.0);
  }
  SUBCASE("edge tier with every delay equal to one second") {
    CommParams q = p;
    q.rtt_s = 1.0;
    q.path_loss_ref = 1.0;
    q.min_distance_m = 1.0;
    q.uplink_bandwidth_hz = 32.0;
    q.downlink_bandwidth_hz = 32.0;
    q.noise_psd_w_per_hz = q.ue_tx_power_w / 32.0;
    SystemState s{1.0, 1.0, 32.0 * q.noise_psd_w_per_hz / q.bs_tx_power_w};
    const auto edge = profile("e", Tier::edge, 0.5, 0.5, 1.0, 1.0, 150.0);
    const auto r = end_to_end(edge, q, s, 1, 1, ue);
    CHECK(r.latency_s == doctest::Approx(4.0).epsilon(1e-12));
    CHECK(r.energy_j == doctest::Approx(1.2 + 0.9 + 0.05 * 2 + 150).epsilon(1e-12));
  }
  SUBCASE("reference parameters against an independent recomputation") {
    const auto edge = desk_pool()[2];
    SystemState s;
    const int l_in = 512, l_out = 300;
    const double n0 = std::pow(10.0, -20.4), k0 = std::pow(10.0, -4.33);
    const double r_ul = oracle::shannon_rate(1e7, 0.5, k0, 1.0, 100.0, 4.0, n0);
    const double r_dl = oracle::shannon_rate(4e7, 2.0, k0, 1.0, 100.0, 4.0, n0);
    const double t_ul = 32.0 * l_in / r_ul, t_dl = 32.0 * l_out / r_dl;
    const double t_inf = 1e-14 * 16e9 * l_in + 1.25e-12 * 16e9 * l_out;
    const double t = t_ul + 0.018 + t_inf + t_dl;
    const double e = 1.2 * t_ul + 0.9 * t_dl + 0.05 * (0.018 + t_inf) + 300.0 * t_inf;
    const auto r = end_to_end(edge, p, s, l_in, l_out, ue);
    CHECK(r.latency_s == doctest::Approx(t).epsilon(1e-9));
    CHECK(r.energy_j == doctest::Approx(e).epsilon(1e-9));
  }
  SUBCASE("strictly increasing in l_out") {
    for (const auto& m : desk_pool()) {
      const auto a = end_to_end(m, p, SystemState{}, 100, 50, ue);
      const auto b = end_to_end(m, p, SystemState{}, 100, 51, ue);
      CHECK(b.latency_s > a.latency_s);
      CHECK(b.energy_j > a.energy_j);
    }
  }
}

TEST_CASE("normalized_cost") {
  CommParams comm;
  UePower ue;
  CostWeights w;
  w.latency_scale_s = 3.0;
  w.energy_scale_j = 900.0;
  const CostModel cm(desk_pool(), comm, ue, w);
  CHECK(cm.local_index() == 0);
  CHECK(cm.reference_index() == 3);

  SUBCASE("reference model is exactly one") {
    Rng rng(2);
    for (int i = 0; i < 2000; ++i) {
      QueryWorkload wl{1 + static_cast<int>(rng.uniform_index(2000)), {}};
      for (int m = 0; m < 4; ++m) wl.l_out.push_back(1 + static_cast<int>(rng.uniform_index(2000)));
      const auto c = cm.normalized_costs(wl, sample_state(comm, rng));
      CHECK(c[3] == 1.0);
    }
  }
  SUBCASE("single-model pool") {
    const CostModel one({profile("only", Tier::local, 1e-12, 1e-12, 1e9, 1e9, 10)}, comm, ue, w);
    const auto c = one.normalized_costs({10, {20}}, SystemState{});
    REQUIRE(c.size() == 1);
    CHECK(c[0] == 1.0);
  }
  SUBCASE("half the latency and energy gives half the cost") {
    // the second model halves every inference term; communication and UE
    // radio terms are scaled down to nothing
    const auto big = profile("big", Tier::local, 1.0, 1.0, 2.0, 2.0, 10.0);
    const auto small = profile("small", Tier::edge, 1.0, 1.0, 1.0, 1.0, 10.0);
    CommParams zero_comm = comm;
    // make the communication terms negligible compared with inference
    zero_comm.rtt_s = 1e-300;
    zero_comm.bits_per_input_token = 1e-300;
    zero_comm.bits_per_output_token = 1e-300;
    UePower quiet = ue;
    quiet.idle_w = 1e-300;
    quiet.tx_w = 1e-300;
    quiet.rx_w = 1e-300;
    const CostModel two({big, small}, zero_comm, quiet, w);
    REQUIRE(two.reference_index() == 0);
    const auto c = two.normalized_costs({5, {7, 7}}, SystemState{});
    CHECK(c[0] == 1.0);
    CHECK(c[1] == doctest::Approx(0.5).epsilon(1e-12));
  }
}

TEST_CASE("cost model validation") {
  CommParams comm;
  UePower ue;
  CostWeights w;
  auto pool = desk_pool();
  pool[1].tier = Tier::local;
  CHECK_THROWS_AS(CostModel(pool, comm, ue, w), std::invalid_argument);
  CostWeights bad;
  bad.omega_t = 0.7;
  CHECK_THROWS_AS(CostModel(desk_pool(), comm, ue, bad), std::invalid_argument);
  const CostModel cm(desk_pool(), comm, ue, w);
  CHECK_THROWS(cm.normalized_costs({10, {1, 2, 3}}, SystemState{}));
  CHECK_THROWS(cm.normalized_costs({10, {1, 0, 3, 4}}, SystemState{}));
}

TEST_CASE("sample_state") {
  CommParams p;
  Rng rng(42);
  const int n = 100000;
  double fu = 0, fd = 0;
  bool in_range = true;
  for (int i = 0; i < n; ++i) {
    const auto s = sample_state(p, rng);
    fu += s.uplink_fading / n;
    fd += s.downlink_fading / n;
    in_range = in_range && s.distance_m >= 30.0 && s.distance_m <= 150.0 && s.uplink_fading > 0 && s.downlink_fading > 0;
  }
  CHECK(in_range);
  CHECK(fu >= 0.99);
  CHECK(fu <= 1.01);
  CHECK(fd >= 0.99);
  CHECK(fd <= 1.01);

  Rng a(5), b(5);
  for (int i = 0; i < 100; ++i) {
    const auto x = sample_state(p, a), y = sample_state(p, b);
    CHECK(x.distance_m == y.distance_m);
    CHECK(x.uplink_fading == y.uplink_fading);
    CHECK(x.downlink_fading == y.downlink_fading);
  }
}

TEST_CASE("reference scales are the mean reference latency and energy") {
  CommParams comm;
  const CostModel cm(desk_pool(), comm, UePower{}, CostWeights{});
  std::vector<QueryWorkload> wl;
  Rng gen(8);
  for (int i = 0; i < 500; ++i) {
    QueryWorkload q{1 + static_cast<int>(gen.uniform_index(600)), {}};
    for (int m = 0; m < 4; ++m) q.l_out.push_back(1 + static_cast<int>(gen.uniform_index(600)));
    wl.push_back(q);
  }
  Rng r1(3), r2(3);
  const CostModel scaled = cm.with_reference_scales(wl, r1);
  double t = 0, e = 0;
  for (const auto& q : wl) {
    const auto s = sample_state(comm, r2);
    const auto le = end_to_end(desk_pool()[3], comm, s, q.l_in, q.l_out[3], UePower{});
    t += le.latency_s / wl.size();
    e += le.energy_j / wl.size();
  }
  CHECK(scaled.weights().latency_scale_s == doctest::Approx(t).epsilon(1e-12));
  CHECK(scaled.weights().energy_scale_j == doctest::Approx(e).epsilon(1e-12));
  Rng r3(3);
  CHECK(cm.with_reference_scales(wl, r3).weights().latency_scale_s == scaled.weights().latency_scale_s);
}

TEST_CASE("local_is_cheapest") {
  CHECK(local_is_cheapest(std::vector<double>{0.3, 0.5, 1.0}, 0));
  CHECK(local_is_cheapest(std::vector<double>{0.5, 0.5, 1.0}, 0));
  CHECK_FALSE(local_is_cheapest(std::vector<double>{0.6, 0.5, 1.0}, 0));
}
