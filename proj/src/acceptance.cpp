#include "cr2/acceptance.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <numeric>
#include <set>

#include "cr2/artifact.hpp"
#include "cr2/router_eval.hpp"

namespace cr2 {

namespace fs = std::filesystem;

namespace {

std::string fmt(const char* pattern, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, pattern, args...);
  return buf;
}

Rng criterion_rng(std::uint64_t seed, std::uint64_t criterion) {
  return Rng::substream(seed, static_cast<std::uint64_t>(StreamTag::acceptance), criterion);
}

// Random pool instance. Dyadic values keep utility arithmetic exact so ties are real ties.
struct Instance {
  std::vector<double> probs;
  std::vector<double> costs;
  std::size_t local = 0;
};

Instance random_instance(Rng& rng, bool local_cheapest) {
  Instance in;
  const std::size_t n = 2 + static_cast<std::size_t>(rng.uniform_index(5));
  in.local = static_cast<std::size_t>(rng.uniform_index(n));
  const bool dyadic = rng.bernoulli(0.3);
  in.probs.resize(n);
  in.costs.resize(n);
  for (std::size_t m = 0; m < n; ++m) {
    in.probs[m] = dyadic ? 0.25 * static_cast<double>(rng.uniform_index(5)) : rng.uniform();
    in.costs[m] = dyadic ? 0.125 * static_cast<double>(1 + rng.uniform_index(8)) : rng.uniform(0.05, 1.0);
  }
  if (local_cheapest) {
    const double lowest = *std::min_element(in.costs.begin(), in.costs.end());
    if (dyadic) {
      in.costs[in.local] = lowest;
    } else {
      in.costs[in.local] = lowest * rng.uniform(0.5, 1.0);
    }
  }
  return in;
}

double random_lambda(Rng& rng, bool dyadic) {
  return dyadic ? 0.25 * static_cast<double>(rng.uniform_index(41)) : std::exp(rng.uniform(std::log(0.01), std::log(100.0)));
}

}  // namespace

namespace brute {

std::size_t select(std::span<const double> probs, std::span<const double> costs, double lambda, std::size_t local_index) {
  std::vector<double> u(probs.size());
  for (std::size_t m = 0; m < probs.size(); ++m) u[m] = probs[m] - lambda * costs[m];
  double best = -std::numeric_limits<double>::infinity();
  for (double v : u) best = std::max(best, v);
  std::vector<std::size_t> winners;
  for (std::size_t m = 0; m < u.size(); ++m) {
    if (u[m] == best) winners.push_back(m);
  }
  for (std::size_t m : winners) {
    if (m == local_index) return m;
  }
  std::size_t pick = winners.front();
  for (std::size_t m : winners) {
    if (costs[m] < costs[pick]) pick = m;
  }
  return pick;
}

double margin(std::span<const double> probs, std::span<const double> costs, double lambda, std::size_t local_index) {
  double best_edge = -std::numeric_limits<double>::infinity();
  for (std::size_t m = 0; m < probs.size(); ++m) {
    if (m != local_index) best_edge = std::max(best_edge, probs[m] - lambda * costs[m]);
  }
  return (probs[local_index] - lambda * costs[local_index]) - best_edge;
}

double threshold(std::span<const CalibrationRecord> records, double alpha) {
  std::set<double> candidates{0.0, std::numeric_limits<double>::infinity()};
  for (const auto& r : records) candidates.insert(r.score);
  for (double tau : candidates) {
    std::size_t d = 0;
    for (const auto& r : records) {
      if (r.disagree == 1 && r.score >= tau) ++d;
    }
    if (static_cast<double>(d + 1) / static_cast<double>(records.size() + 1) <= alpha) return tau;
  }
  return std::numeric_limits<double>::infinity();
}

}  // namespace brute

std::string format_result(const CriterionResult& r) {
  return r.id + " " + (r.passed ? "PASS" : "FAIL") + "  " + r.detail;
}

CriterionResult check_a2_crc_equivalence(std::uint64_t seed, std::size_t instances) {
  Rng rng = criterion_rng(seed, 2);
  double worst = 0.0;
  for (std::size_t k = 0; k < instances; ++k) {
    const std::size_t n = 1 + static_cast<std::size_t>(rng.uniform_index(5000));
    const double rate = rng.uniform();
    std::vector<CalibrationRecord> recs(n);
    for (auto& r : recs) r = {rng.uniform(), static_cast<std::uint8_t>(rng.bernoulli(rate))};
    const double tau = rng.bernoulli(0.1) ? 0.0 : rng.uniform();
    worst = std::max(worst, std::abs(crc_correction(recs, tau) - crc_correction_count(recs, tau)));
  }
  return {"A2", worst <= 1e-15, fmt("CRC formula equivalence: max |difference| = %.3g over %zu record sets (tol 1e-15)", worst, instances)};
}

CriterionResult check_a3_threshold_exactness(std::uint64_t seed, std::size_t instances) {
  Rng rng = criterion_rng(seed, 3);
  std::size_t mismatches = 0;
  std::size_t monotone_violations = 0;
  std::size_t sentinel_hits = 0;
  for (std::size_t k = 0; k < instances; ++k) {
    const std::size_t n = 1 + static_cast<std::size_t>(rng.uniform_index(200));
    const bool coarse = rng.bernoulli(0.5);
    const double rate = rng.uniform(0.0, 0.3);
    std::vector<CalibrationRecord> recs(n);
    for (auto& r : recs) {
      const double s = coarse ? 0.1 * static_cast<double>(rng.uniform_index(11)) : rng.uniform();
      r = {s, static_cast<std::uint8_t>(rng.bernoulli(rate))};
    }
    std::vector<double> alphas{1.0 / static_cast<double>(n + 1), 0.002, 0.005, 0.01, 0.02, 0.05, 0.1, 0.2,
                               std::exp(rng.uniform(std::log(1e-3), std::log(0.9)))};
    std::sort(alphas.begin(), alphas.end());
    const auto taus = calibrate_thresholds(recs, alphas);
    for (std::size_t a = 0; a < alphas.size(); ++a) {
      const double expected = brute::threshold(recs, alphas[a]);
      if (taus[a] != expected || calibrate_threshold(recs, alphas[a]) != expected) ++mismatches;
      if (std::isinf(taus[a])) ++sentinel_hits;
      if (a > 0 && taus[a] > taus[a - 1]) ++monotone_violations;
    }
  }
  return {"A3", mismatches == 0 && monotone_violations == 0,
          fmt("threshold exactness: %zu mismatches vs brute force, %zu alpha-monotonicity violations over %zu instances "
              "(%zu sentinel thresholds exercised)",
              mismatches, monotone_violations, instances, sentinel_hits)};
}

CriterionResult check_a4_gradients(const RunConfig& cfg, std::size_t batches, std::size_t batch_size) {
  Rng rng = criterion_rng(cfg.seed, 4);
  const std::size_t dim = cfg.dataset.synthetic.embedding_dim;
  const auto ids = cfg.model_ids();
  constexpr double kStep = 1e-5;
  double worst_teacher = 0.0;
  double worst_gate = 0.0;
  for (std::size_t b = 0; b < batches; ++b) {
    // Teacher head batch.
    TeacherParams tp = TeacherParams::init(dim, cfg.teacher.hidden, ids, rng);
    std::vector<std::vector<double>> emb(batch_size, std::vector<double>(dim));
    std::vector<std::vector<std::uint8_t>> labels(batch_size, std::vector<std::uint8_t>(ids.size()));
    for (auto& e : emb) {
      for (auto& v : e) v = rng.normal();
    }
    for (auto& l : labels) {
      for (auto& v : l) v = rng.bernoulli(0.5);
    }
    LabeledBatch batch;
    for (std::size_t i = 0; i < batch_size; ++i) {
      batch.embeddings.emplace_back(emb[i]);
      batch.labels.emplace_back(labels[i]);
    }
    TeacherParams tgrad;
    teacher_loss(tp, batch, cfg.teacher.weights, &tgrad);
    const auto t_flat = flatten(std::as_const(tp).tensors());
    const auto t_grad = flatten(std::as_const(tgrad).tensors());
    TeacherParams scratch = tp;
    auto t_loss = [&](std::span<const double> x) {
      unflatten(x, scratch.tensors());
      return teacher_loss(scratch, batch, cfg.teacher.weights).total;
    };
    worst_teacher = std::max(worst_teacher, grad_check(t_loss, t_flat, t_grad, kStep, rng).max_relative_error);

    // Gate batch with J sorted lambdas and teacher-style targets.
    GateParams gp = GateParams::init(dim, cfg.gate.hidden, cfg.gate.initial_temperature, rng);
    gp.b2[0] = rng.normal(0.0, 0.1);
    std::vector<double> lambdas(cfg.gate.lambdas_per_step);
    for (auto& l : lambdas) l = std::exp(rng.uniform(std::log(cfg.gate.lambda_min), std::log(cfg.gate.lambda_max)));
    std::vector<std::vector<double>> probs(batch_size, std::vector<double>(ids.size()));
    std::vector<std::vector<double>> costs(batch_size, std::vector<double>(ids.size()));
    for (std::size_t i = 0; i < batch_size; ++i) {
      for (std::size_t m = 0; m < ids.size(); ++m) {
        probs[i][m] = rng.uniform();
        costs[i][m] = rng.uniform(0.2, 1.0);
      }
    }
    const GateTargets targets = make_gate_targets(lambdas, probs, costs, 0);
    std::vector<std::span<const double>> gemb(emb.begin(), emb.end());
    GateParams ggrad;
    gate_loss(gp, gemb, targets, cfg.gate.weights, &ggrad);
    const auto g_flat = flatten(std::as_const(gp).tensors());
    const auto g_grad = flatten(std::as_const(ggrad).tensors());
    GateParams gscratch = gp;
    auto g_loss = [&](std::span<const double> x) {
      unflatten(x, gscratch.tensors());
      return gate_loss(gscratch, gemb, targets, cfg.gate.weights).total;
    };
    worst_gate = std::max(worst_gate, grad_check(g_loss, g_flat, g_grad, kStep, rng).max_relative_error);
  }
  const bool ok = worst_teacher < 1e-4 && worst_gate < 1e-4;
  return {"A4", ok,
          fmt("gradient fidelity: max relative error teacher %.3g, gate %.3g over %zu batches of %zu (tol 1e-4, h 1e-5)",
              worst_teacher, worst_gate, batches, batch_size)};
}

CriterionResult check_a5_cost_model(const RunConfig& cfg, std::size_t unit_pairs, std::size_t regime_pairs) {
  const CostModel cm = build_cost_model(cfg);
  Rng rng = criterion_rng(cfg.seed, 5);
  const auto& tokens = cfg.dataset.synthetic.tokens;
  double worst_unit = 0.0;
  for (std::size_t k = 0; k < unit_pairs; ++k) {
    const auto w = sample_workload(tokens, cm.size(), rng);
    const auto s = sample_state(cm.comm(), rng);
    worst_unit = std::max(worst_unit, std::abs(cm.normalized_costs(w, s)[cm.reference_index()] - 1.0));
  }

  // Reference system setup at 100 m, unit fading: 10 MHz * log2(1 + SNR) with
  // SNR = 0.5 W * 10^-4.33 * 100^-4 / (10^-20.4 W/Hz * 10 MHz).
  constexpr double kUplinkRate = 27812522.2080697;
  const CommParams table_one;
  const double rate = link_rate(table_one, SystemState{100.0, 1.0, 1.0}, LinkDirection::uplink);
  double worst_rate = std::abs(rate - kUplinkRate) / kUplinkRate;
  for (std::size_t k = 0; k < 1000; ++k) {
    const auto s = sample_state(table_one, rng);
    const bool up = rng.bernoulli(0.5);
    const double bw = up ? table_one.uplink_bandwidth_hz : table_one.downlink_bandwidth_hz;
    const double p = up ? table_one.ue_tx_power_w : table_one.bs_tx_power_w;
    const double fade = up ? s.uplink_fading : s.downlink_fading;
    const double gain = table_one.path_loss_ref * fade / std::pow(s.distance_m, table_one.path_loss_exponent);
    const double oracle = bw * std::log1p(p * gain / (bw * table_one.noise_psd_w_per_hz)) / std::log(2.0);
    const double got = link_rate(table_one, s, up ? LinkDirection::uplink : LinkDirection::downlink);
    worst_rate = std::max(worst_rate, std::abs(got - oracle) / oracle);
  }

  std::size_t violations = 0;
  for (std::size_t k = 0; k < regime_pairs; ++k) {
    const auto w = sample_workload(tokens, cm.size(), rng);
    const auto s = sample_state(cm.comm(), rng);
    violations += !local_is_cheapest(cm.normalized_costs(w, s), cm.local_index());
  }
  const double rate_v = static_cast<double>(violations) / static_cast<double>(regime_pairs);
  const bool ok = worst_unit < 1e-12 && worst_rate <= 1e-9 && rate_v < 1e-3;
  return {"A5", ok,
          fmt("cost model: max |c_ref - 1| = %.3g over %zu pairs; link-rate max rel error %.3g (tol 1e-9); "
              "local-cheapest violation rate %.5f%% (%zu of %zu, limit 0.1%%)",
              worst_unit, unit_pairs, worst_rate, 100.0 * rate_v, violations, regime_pairs)};
}

CriterionResult check_a6_margin_structure(std::uint64_t seed, std::size_t instances) {
  Rng rng = criterion_rng(seed, 6);
  const auto grid = log_spaced(0.01, 100.0, 50);
  std::size_t monotone_violations = 0;
  std::size_t select_mismatches = 0;
  std::size_t sign_mismatches = 0;
  for (std::size_t k = 0; k < instances; ++k) {
    const Instance cheap = random_instance(rng, true);
    double prev = -std::numeric_limits<double>::infinity();
    for (double lambda : grid) {
      const double m = teacher_margin(cheap.probs, cheap.costs, lambda, cheap.local).margin;
      if (m < prev) ++monotone_violations;
      prev = m;
    }
    const Instance any = random_instance(rng, rng.bernoulli(0.5));
    const double lambda = random_lambda(rng, rng.bernoulli(0.5));
    const std::size_t expected = brute::select(any.probs, any.costs, lambda, any.local);
    if (full_info_select(any.probs, any.costs, lambda, any.local) != expected) ++select_mismatches;
    const auto tm = teacher_margin(any.probs, any.costs, lambda, any.local);
    const bool brute_local = brute::margin(any.probs, any.costs, lambda, any.local) >= 0.0;
    if ((tm.label == 1) != brute_local || (tm.label == 1) != (expected == any.local)) ++sign_mismatches;
  }
  const bool ok = monotone_violations == 0 && select_mismatches == 0 && sign_mismatches == 0;
  return {"A6", ok,
          fmt("margin structure: %zu monotonicity violations on a 50-point grid, %zu selector and %zu sign mismatches "
              "vs brute force over %zu instances",
              monotone_violations, select_mismatches, sign_mismatches, instances)};
}

CriterionResult check_a8_cost_monotonicity(std::uint64_t seed, std::size_t instances) {
  Rng rng = criterion_rng(seed, 8);
  std::size_t violations = 0;
  for (std::size_t k = 0; k < instances; ++k) {
    const Instance in = random_instance(rng, rng.bernoulli(0.5));
    const bool dyadic = rng.bernoulli(0.3);
    double l1 = random_lambda(rng, dyadic);
    double l2 = random_lambda(rng, dyadic);
    if (l1 > l2) std::swap(l1, l2);
    const double c1 = in.costs[full_info_select(in.probs, in.costs, l1, in.local)];
    const double c2 = in.costs[full_info_select(in.probs, in.costs, l2, in.local)];
    if (c2 > c1) ++violations;
  }
  return {"A8", violations == 0,
          fmt("full-information cost monotonicity in lambda: %zu violations over %zu instances", violations, instances)};
}

CriterionResult check_a1_crc_guarantee(const RunConfig& cfg, const LoadedRun& run) {
  const auto& acc = cfg.acceptance;
  const CostModel cm = build_cost_model(cfg);
  const std::size_t local = cm.local_index();

  // Exchangeable population: fresh draws from the generating law of the run's
  // dataset (the generator is prefix-stable), or the dataset itself for files.
  std::vector<QueryRecord> population;
  if (cfg.dataset.source == "synthetic") {
    SyntheticConfig big = cfg.dataset.synthetic;
    big.n_queries += acc.a1_pool_size;
    Rng data_rng = stage_rng(cfg, StreamTag::data);
    RoutingDataset ext = generate_synthetic(big, cfg.model_ids(), data_rng);
    population.assign(std::make_move_iterator(ext.queries.begin() + static_cast<std::ptrdiff_t>(cfg.dataset.synthetic.n_queries)),
                      std::make_move_iterator(ext.queries.end()));
  } else {
    population = run.dataset.queries;
  }
  const std::size_t n_cal = acc.a1_cal_size;
  const std::size_t n_test = acc.a1_test_size;
  if (population.size() < n_cal + n_test) return {"A1", false, "population smaller than one calibration/test split"};

  const auto lambdas = log_spaced(cfg.calibration.lambda_min, cfg.calibration.lambda_max, acc.a1_lambda_points);
  const std::size_t n_pop = population.size();
  std::vector<std::vector<double>> probs(n_pop);
  std::vector<std::vector<double>> scores(lambdas.size(), std::vector<double>(n_pop));
  for (std::size_t i = 0; i < n_pop; ++i) {
    probs[i] = teacher_forward(run.teacher, population[i].embedding).probs;
    for (std::size_t l = 0; l < lambdas.size(); ++l) scores[l][i] = gate_forward(run.gate, population[i].embedding, lambdas[l]).score;
  }

  const std::size_t n_alpha = acc.a1_alphas.size();
  std::vector<double> risk_sum(lambdas.size() * n_alpha, 0.0);
  std::vector<std::size_t> order(n_pop);
  std::vector<std::vector<double>> costs(n_cal + n_test);
  std::vector<CalibrationRecord> cal(n_cal);
  std::vector<CalibrationRecord> test(n_test);
  for (std::size_t split = 0; split < acc.a1_splits; ++split) {
    Rng rng = Rng::substream(cfg.seed, static_cast<std::uint64_t>(StreamTag::acceptance), 1000 + split);
    std::iota(order.begin(), order.end(), std::size_t{0});
    for (std::size_t i = 0; i < n_cal + n_test; ++i) {
      std::swap(order[i], order[i + static_cast<std::size_t>(rng.uniform_index(n_pop - i))]);
    }
    for (std::size_t i = 0; i < n_cal + n_test; ++i) {
      const auto& q = population[order[i]];
      costs[i] = cm.normalized_costs(q.workload(), sample_state(cm.comm(), rng));
    }
    for (std::size_t l = 0; l < lambdas.size(); ++l) {
      for (std::size_t i = 0; i < n_cal + n_test; ++i) {
        const std::size_t q = order[i];
        const std::uint8_t r = full_info_select(probs[q], costs[i], lambdas[l], local) != local;
        (i < n_cal ? cal[i] : test[i - n_cal]) = {scores[l][q], r};
      }
      const auto taus = calibrate_thresholds(cal, acc.a1_alphas);
      for (std::size_t a = 0; a < n_alpha; ++a) risk_sum[l * n_alpha + a] += empirical_risk(test, taus[a]);
    }
  }

  bool ok = true;
  double worst_excess = -std::numeric_limits<double>::infinity();
  std::string worst;
  const double draws = static_cast<double>(acc.a1_splits * n_test);
  for (std::size_t l = 0; l < lambdas.size(); ++l) {
    for (std::size_t a = 0; a < n_alpha; ++a) {
      const double alpha = acc.a1_alphas[a];
      const double mean = risk_sum[l * n_alpha + a] / static_cast<double>(acc.a1_splits);
      const double limit = alpha + 3.0 * std::sqrt(alpha / draws);
      if (mean > limit) ok = false;
      if (mean - limit > worst_excess) {
        worst_excess = mean - limit;
        worst = fmt("lambda %.4g alpha %.3g: mean risk %.5f vs limit %.5f", lambdas[l], alpha, mean, limit);
      }
    }
  }
  return {"A1", ok,
          fmt("CRC guarantee over %zu splits (cal %zu / test %zu), %zu lambdas x %zu alphas; tightest cell ", acc.a1_splits,
              n_cal, n_test, lambdas.size(), n_alpha) +
              worst};
}

CriterionResult check_a7_learnability(const RunConfig& cfg, const LoadedRun& run, double pipeline_seconds) {
  const auto& acc = cfg.acceptance;
  const CostModel cm = build_cost_model(cfg);
  const auto states = attach_states(run.dataset, cm.comm(), state_seed(cfg));
  const auto eval = run.dataset.evaluation_indices();
  std::vector<std::span<const double>> emb;
  std::vector<std::vector<double>> probs;
  std::vector<std::vector<double>> costs;
  for (std::size_t idx : eval) {
    const auto& q = run.dataset.queries[idx];
    emb.emplace_back(q.embedding);
    probs.push_back(teacher_forward(run.teacher, q.embedding).probs);
    costs.push_back(cm.normalized_costs(q.workload(), states[idx]));
  }
  const double agreement = sign_agreement(run.gate, emb, probs, costs, 1.0, cm.local_index());

  SweepInputs in;
  in.dataset = &run.dataset;
  in.states = states;
  in.eval_indices = eval;
  in.teacher = &run.teacher;
  in.gate = &run.gate;
  in.table = &run.table.table;
  in.cost_model = &cm;
  in.policy = cfg.defer_policy();
  const auto& table = run.table.table;
  const SweepResult res = evaluate_sweep(in, table.lambdas(), table.alphas());

  auto weakly_dominated = [&](const CurvePoint& p) {
    return std::any_of(res.envelope.begin(), res.envelope.end(),
                       [&](const SweepRow& r) { return r.mean_cost <= p.mean_cost && r.accuracy >= p.accuracy; });
  };
  const bool dom_local = weakly_dominated(res.always_local);
  const bool dom_ref = weakly_dominated(res.always_reference);
  const auto interior = std::count_if(res.envelope.begin(), res.envelope.end(), [&](const SweepRow& r) {
    return r.mean_cost > res.always_local.mean_cost && r.mean_cost < res.always_reference.mean_cost;
  });

  std::size_t close = 0;
  std::size_t n_lambda = 0;
  double worst_gap = -std::numeric_limits<double>::infinity();
  for (const auto& row : res.rows) {
    if (row.alpha != acc.a7_alpha) continue;
    ++n_lambda;
    const double gap = interpolate_accuracy(res.full_info, row.mean_cost) - row.accuracy;
    worst_gap = std::max(worst_gap, gap);
    close += gap <= acc.a7_max_accuracy_gap;
  }
  const bool gap_ok = 2 * close >= n_lambda && n_lambda > 0;
  const bool time_ok = pipeline_seconds < 300.0;
  const bool ok = agreement >= acc.a7_min_sign_agreement && dom_local && dom_ref && interior >= 2 && gap_ok && time_ok;
  return {"A7", ok,
          fmt("learnability: sign agreement at lambda=1 %.4f (min %.2f); envelope dominates always-local %s, "
              "always-reference %s, %ld interior points; gap <= %.2f at alpha %.3g on %zu/%zu lambdas (worst %.4f); "
              "pipeline %.1f s (limit 300 s)",
              agreement, acc.a7_min_sign_agreement, dom_local ? "yes" : "no", dom_ref ? "yes" : "no",
              static_cast<long>(interior), acc.a7_max_accuracy_gap, acc.a7_alpha, close, n_lambda, worst_gap,
              pipeline_seconds)};
}

CriterionResult check_a9_determinism(const fs::path& run_a, const fs::path& run_b) {
  auto listing = [](const fs::path& root) {
    std::map<std::string, std::string> files;
    if (!fs::exists(root)) return files;
    for (const auto& entry : fs::recursive_directory_iterator(root)) {
      if (entry.is_regular_file()) files[fs::relative(entry.path(), root).generic_string()] = read_file(entry.path());
    }
    return files;
  };
  const auto a = listing(run_a);
  const auto b = listing(run_b);
  std::size_t differing = 0;
  for (const auto& [name, bytes] : a) {
    const auto it = b.find(name);
    if (it == b.end() || it->second != bytes) ++differing;
  }
  for (const auto& [name, bytes] : b) differing += a.count(name) == 0;
  return {"A9", !a.empty() && differing == 0,
          fmt("determinism: %zu artifacts compared across two runs, %zu differ", a.size(), differing)};
}

std::vector<CriterionResult> run_acceptance(const RunConfig& cfg, const fs::path& work_dir,
                                            const std::function<void(const CriterionResult&)>& on_result) {
  const fs::path dir_a = work_dir / "run_a";
  const fs::path dir_b = work_dir / "run_b";
  fs::remove_all(dir_a);
  fs::remove_all(dir_b);
  const auto start = std::chrono::steady_clock::now();
  run_pipeline(cfg, ArtifactPaths::in(dir_a));
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  run_pipeline(cfg, ArtifactPaths::in(dir_b));
  const LoadedRun run = load_run(cfg, ArtifactPaths::in(dir_a));

  std::vector<CriterionResult> results;
  auto record = [&](CriterionResult r) {
    if (on_result) on_result(r);
    results.push_back(std::move(r));
  };
  record(check_a1_crc_guarantee(cfg, run));
  record(check_a2_crc_equivalence(cfg.seed));
  record(check_a3_threshold_exactness(cfg.seed));
  record(check_a4_gradients(cfg));
  record(check_a5_cost_model(cfg));
  record(check_a6_margin_structure(cfg.seed));
  record(check_a7_learnability(cfg, run, seconds));
  record(check_a8_cost_monotonicity(cfg.seed));
  record(check_a9_determinism(dir_a, dir_b));
  return results;
}

}  // namespace cr2
