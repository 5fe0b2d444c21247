#include <doctest.h>

#include <cmath>
#include <numeric>
#include <type_traits>
#include <vector>

#include "cr2/calibration.hpp"
#include "cr2/dataset.hpp"
#include "cr2/router_eval.hpp"
#include "oracles.hpp"

using namespace cr2;

namespace {

ModelProfile profile(const char* id, Tier tier, double bd, double k, double power) {
  ModelProfile m;
  m.id = id;
  m.tier = tier;
  m.beta_prefill = bd / 20.0;
  m.beta_decode = bd;
  m.kappa_prefill = k;
  m.kappa_decode = k;
  m.active_power_w = power;
  return m;
}

struct World {
  RoutingDataset ds;
  std::vector<SystemState> states;
  TeacherParams teacher;
  GateParams gate;
  CostModel cm;
};

World make_world() {
  const std::vector<ModelProfile> pool{profile("l", Tier::local, 6.8e-12, 3.4e9, 15),
                                       profile("a", Tier::edge, 3.1e-12, 8e9, 150),
                                       profile("b", Tier::edge, 1.2e-12, 28e9, 200)};
  CostWeights w;
  w.latency_scale_s = 5.0;
  w.energy_scale_j = 1000.0;
  SyntheticConfig c;
  c.n_queries = 1500;
  c.embedding_dim = 10;
  c.capability = {-0.5, 1.0, 2.5};
  c.slope = {3, 3, 3};
  Rng rng(11);
  auto ds = generate_synthetic(c, {"l", "a", "b"}, rng);
  auto states = attach_states(ds, CommParams{}, 12);
  auto teacher = TeacherParams::init(10, 12, ds.model_ids, rng);
  auto gate = GateParams::init(10, 12, 0.5, rng);
  return {std::move(ds), std::move(states), std::move(teacher), std::move(gate),
          CostModel(pool, CommParams{}, UePower{}, w)};
}

ThresholdTable flat_table(const std::vector<double>& lambdas, double tau) {
  return ThresholdTable(lambdas, {0.01}, std::vector<double>(lambdas.size(), tau));
}

SweepRow row(double cost, double acc) {
  SweepRow r;
  r.mean_cost = cost;
  r.accuracy = acc;
  return r;
}

}  // namespace

// The device-side decision takes exactly (gate, embedding, lambda, threshold).
static_assert(std::is_same_v<decltype(&accept_locally), bool (*)(const GateParams&, std::span<const double>, double, double)>);
static_assert(!std::is_invocable_v<decltype(&accept_locally), const GateParams&, std::span<const double>, double, double,
                                   const SystemState&>);

TEST_CASE("degenerate thresholds") {
  const auto w = make_world();
  const std::vector<double> lambdas{1.0};
  const auto never = flat_table(lambdas, kNeverAccept);
  const auto always = flat_table(lambdas, 0.0);
  const OperatingPoint op{1.0, 0.01};
  for (std::size_t i : w.ds.indices(Split::test)) {
    const auto& q = w.ds.queries[i];
    const auto d = route_one(q, w.states[i], op, w.gate, never, w.teacher, w.cm, DeferPolicy::edge_only());
    CHECK_FALSE(d.accepted_locally);
    CHECK(d.selected != w.cm.local_index());
    const auto a = route_one(q, w.states[i], op, w.gate, always, w.teacher, w.cm, DeferPolicy::inclusive());
    CHECK(a.accepted_locally);
    CHECK(a.selected == w.cm.local_index());
    CHECK(a.cost == w.cm.normalized_costs(q.workload(), w.states[i])[w.cm.local_index()]);
  }
  CHECK_THROWS_AS(route_one(w.ds.queries[0], w.states[0], OperatingPoint{2.0, 0.01}, w.gate, never, w.teacher, w.cm,
                            DeferPolicy::inclusive()),
                  std::out_of_range);
}

TEST_CASE("deferral variants") {
  const std::vector<double> p{0.9, 0.5, 0.6}, c{0.1, 0.6, 1.0};
  const std::vector<std::uint8_t> y{1, 0, 1};
  // local utility strictly maximal
  CHECK(deferred_select(p, c, 1.0, 0, DeferPolicy::inclusive()) == 0);
  CHECK(deferred_select(p, c, 1.0, 0, DeferPolicy::edge_only()) == 1);
  CHECK(deferred_select(p, c, 1.0, 0, DeferPolicy::fallback(2)) == 2);
  const auto out = decide(0.2, 0.5, p, c, y, 1.0, 0, DeferPolicy::inclusive());
  CHECK_FALSE(out.accepted_locally);
  CHECK(out.selected == 0);
  CHECK(out.gate_error == GateError::false_defer);
  CHECK_THROWS_AS(deferred_select(p, c, 1.0, 0, DeferPolicy::fallback(0)), std::invalid_argument);

  Rng rng(1);
  for (int t = 0; t < 5000; ++t) {
    std::vector<double> pp(4), cc(4);
    for (auto& v : pp) v = rng.uniform();
    for (auto& v : cc) v = rng.uniform(0.05, 1.0);
    const double lambda = std::exp(rng.uniform(-3.0, 3.0));
    CHECK(deferred_select(pp, cc, lambda, 0, DeferPolicy::edge_only()) != 0);
    CHECK(deferred_select(pp, cc, lambda, 0, DeferPolicy::fallback(3)) != 0);
    CHECK(deferred_select(pp, cc, lambda, 0, DeferPolicy::inclusive()) == oracle::select(pp, cc, lambda, 0));
  }
}

TEST_CASE("full-information routing") {
  Rng rng(2);
  for (int t = 0; t < 10000; ++t) {
    std::vector<double> p(4), c(4);
    for (auto& v : p) v = rng.uniform();
    for (auto& v : c) v = rng.uniform(0.05, 1.0);
    const double l1 = std::exp(rng.uniform(-3.0, 3.0)), l2 = l1 * std::exp(rng.uniform(0.0, 2.0));
    const auto m1 = full_info_select(p, c, l1, 0), m2 = full_info_select(p, c, l2, 0);
    CHECK(c[m2] <= c[m1]);
  }
  const std::vector<double> p{0.3, 0.8, 0.8}, c{0.1, 0.9, 0.5};
  CHECK(full_info_select(p, c, 0.0, 0) == 2);
  CHECK(full_info_select(p, c, 1e6, 0) == 0);

  const auto w = make_world();
  for (std::size_t i = 0; i < 300; ++i) {
    const auto& q = w.ds.queries[i];
    const auto probs = teacher_forward(w.teacher, q.embedding).probs;
    const auto costs = w.cm.normalized_costs(q.workload(), w.states[i]);
    CHECK(full_info_route(q, w.states[i], 0.7, w.teacher, w.cm) == oracle::select(probs, costs, 0.7, 0));
  }
}

TEST_CASE("knn baseline") {
  const auto w = make_world();
  const auto train = w.ds.indices(Split::train);

  SUBCASE("k equal to the train size gives global accuracies") {
    const KnnRouter knn(w.ds, train, train.size());
    std::vector<double> global(3, 0.0);
    for (std::size_t i : train) {
      for (std::size_t m = 0; m < 3; ++m) global[m] += w.ds.queries[i].correct[m];
    }
    for (auto& g : global) g /= static_cast<double>(train.size());
    for (std::size_t i = 0; i < 20; ++i) {
      const auto p = knn.estimate(w.ds.queries[i].embedding);
      for (std::size_t m = 0; m < 3; ++m) CHECK(p[m] == doctest::Approx(global[m]).epsilon(1e-12));
    }
  }
  SUBCASE("k = 1 on a training query returns its own bits") {
    const KnnRouter knn(w.ds, train, 1);
    for (std::size_t j = 0; j < 50; ++j) {
      const auto& q = w.ds.queries[train[j]];
      const auto p = knn.estimate(q.embedding);
      for (std::size_t m = 0; m < 3; ++m) CHECK(p[m] == q.correct[m]);
    }
  }
  SUBCASE("neighbours match a brute-force cosine scan") {
    const KnnRouter knn(w.ds, train, 16);
    std::vector<std::vector<double>> rows;
    for (std::size_t i : train) rows.push_back(w.ds.queries[i].embedding);
    for (std::size_t i : w.ds.indices(Split::test)) {
      const auto& e = w.ds.queries[i].embedding;
      CHECK(knn.neighbours(e) == oracle::cosine_top_k(rows, e, 16));
    }
  }
  SUBCASE("ties go to the earlier row") {
    RoutingDataset d;
    d.embedding_dim = 2;
    d.model_ids = {"l", "a"};
    for (int i = 0; i < 4; ++i) {
      QueryRecord q;
      q.id = i;
      q.embedding = {1.0, 0.0};
      q.correct = {static_cast<std::uint8_t>(i % 2), 1};
      q.l_out = {10, 10};
      d.queries.push_back(q);
    }
    const std::vector<std::size_t> idx{0, 1, 2, 3};
    const KnnRouter knn(d, idx, 2);
    CHECK(knn.neighbours(std::vector<double>{2.0, 0.0}) == std::vector<std::size_t>{0, 1});
  }
  CHECK_THROWS_AS(KnnRouter(w.ds, std::vector<std::size_t>{}, 4), std::invalid_argument);
  CHECK_THROWS_AS(KnnRouter(w.ds, train, 0), std::invalid_argument);
}

TEST_CASE("gate error decomposition") {
  Rng rng(3);
  std::vector<RoutingOutcome> outcomes, accept_all;
  std::size_t disagree_with_reference = 0, r_total = 0;
  for (int t = 0; t < 2000; ++t) {
    std::vector<double> p(3), c(3);
    for (auto& v : p) v = rng.uniform();
    for (auto& v : c) v = rng.uniform(0.05, 1.0);
    const std::vector<std::uint8_t> y{1, 0, 1};
    const double score = rng.uniform(), tau = 0.5;
    const bool r = full_info_select(p, c, 1.0, 0) != 0;
    outcomes.push_back(decide(score, tau, p, c, y, 1.0, 0, DeferPolicy::inclusive()));
    accept_all.push_back(decide(score, 0.0, p, c, y, 1.0, 0, DeferPolicy::inclusive()));
    disagree_with_reference += (score >= tau) == r;  // accepted while edge preferred, or deferred while local preferred
    r_total += r;
  }
  const auto e = gate_error_decomposition(outcomes);
  CHECK(e.false_defer + e.false_accept == doctest::Approx(disagree_with_reference / 2000.0).epsilon(1e-12));
  const auto a = gate_error_decomposition(accept_all);
  CHECK(a.false_defer == 0.0);
  CHECK(a.false_accept == doctest::Approx(r_total / 2000.0).epsilon(1e-12));
  const auto none = gate_error_decomposition(std::vector<RoutingOutcome>{});
  CHECK(none.false_defer == 0.0);
}

TEST_CASE("pareto envelope and target queries") {
  const std::vector<SweepRow> rows{row(0.5, 0.7), row(0.2, 0.6), row(0.8, 0.9), row(0.3, 0.6), row(0.2, 0.6)};
  const auto env = pareto_envelope(rows);
  REQUIRE(env.size() == 3);
  CHECK(env[0].mean_cost == 0.2);
  CHECK(env[1].mean_cost == 0.5);
  CHECK(env[2].mean_cost == 0.8);
  auto more = rows;
  more.push_back(row(0.9, 0.5));
  more.push_back(row(0.6, 0.7));
  const auto env2 = pareto_envelope(more);
  REQUIRE(env2.size() == env.size());
  for (std::size_t i = 0; i < env.size(); ++i) {
    CHECK(env2[i].mean_cost == env[i].mean_cost);
    CHECK(env2[i].accuracy == env[i].accuracy);
  }
  for (const auto& a : env) {
    for (const auto& b : rows) CHECK_FALSE((b.mean_cost <= a.mean_cost && b.accuracy >= a.accuracy &&
                                            (b.mean_cost < a.mean_cost || b.accuracy > a.accuracy)));
  }
  CHECK(cheapest_at_accuracy(rows, 0.65)->mean_cost == 0.5);
  CHECK_FALSE(cheapest_at_accuracy(rows, 0.95).has_value());
  CHECK(best_within_cost(rows, 0.6)->accuracy == 0.7);
  CHECK_FALSE(best_within_cost(rows, 0.1).has_value());
}

TEST_CASE("interpolate_accuracy") {
  const std::vector<CurvePoint> curve{{"f", 1.0, 0.9, 1.0}, {"f", 0.1, 0.5, 0.2}, {"f", 0.5, 0.8, 0.6}};
  CHECK(interpolate_accuracy(curve, 0.1) == 0.5);
  CHECK(interpolate_accuracy(curve, 2.0) == 0.9);
  CHECK(interpolate_accuracy(curve, 0.4) == doctest::Approx(0.65));
  CHECK(interpolate_accuracy(curve, 0.8) == doctest::Approx(0.85));
  CHECK_THROWS_AS(interpolate_accuracy(std::vector<CurvePoint>{}, 0.5), std::invalid_argument);
}

TEST_CASE("router complexity") {
  const auto g = router_complexity(gate_artifact(384, 256));
  // W1, W_film, W2, b2, eta_T; the lambda features are log lambda plus four sin/cos pairs
  static_assert(kLambdaFeatureDim == 9);
  CHECK(g.params == 256 * 384 + 512 * 9 + 256 + 1 + 1);
  CHECK(g.params == 103170);
  CHECK(g.flops_per_query == 2 * (256 * 384 + 512 * 9 + 256 + 256) + 257);
  CHECK(router_complexity(RouterArtifact{}) == Complexity{0, 0});
  const auto k = router_complexity(knn_artifact(18000, 384));
  CHECK(k.params == 0);
  CHECK(k.flops_per_query == doctest::Approx(1.38e7).epsilon(0.01));
  CHECK(k.flops_per_query >= 2u * 18000 * 384);
  const auto t = router_complexity(teacher_artifact(32, 64, 4));
  CHECK(t.params == 4 * (64 * 32 + 64 + 64 + 1));
}

TEST_CASE("evaluate_sweep agrees with per-query routing") {
  const auto w = make_world();
  const std::vector<double> lambdas{0.5, 2.0}, alphas{0.01, 0.05};
  const ThresholdTable table(lambdas, alphas, {0.7, 0.4, 0.55, 0.3});
  const auto eval = w.ds.evaluation_indices();
  const KnnRouter knn(w.ds, w.ds.indices(Split::train), 16);
  SweepInputs in;
  in.dataset = &w.ds;
  in.states = w.states;
  in.eval_indices = eval;
  in.teacher = &w.teacher;
  in.gate = &w.gate;
  in.table = &table;
  in.cost_model = &w.cm;
  in.knn = &knn;
  const auto res = evaluate_sweep(in, lambdas, alphas);
  REQUIRE(res.rows.size() == 4);
  REQUIRE(res.full_info.size() == 2);
  REQUIRE(res.knn.size() == 2);

  for (const auto& r : res.rows) {
    double acc = 0, cost = 0, local = 0, fa = 0;
    for (std::size_t i : eval) {
      const auto o = route_one(w.ds.queries[i], w.states[i], OperatingPoint{r.lambda, r.alpha}, w.gate, table, w.teacher,
                               w.cm, DeferPolicy::inclusive());
      acc += o.correct;
      cost += o.cost;
      local += o.accepted_locally;
      fa += o.gate_error == GateError::false_accept;
    }
    const double n = static_cast<double>(eval.size());
    CHECK(r.accuracy == doctest::Approx(acc / n).epsilon(1e-12));
    CHECK(r.mean_cost == doctest::Approx(cost / n).epsilon(1e-12));
    CHECK(r.local_rate == doctest::Approx(local / n).epsilon(1e-12));
    CHECK(r.fa_risk == doctest::Approx(fa / n).epsilon(1e-12));
  }
  CHECK(res.full_info[1].mean_cost <= res.full_info[0].mean_cost);

  double local_acc = 0, local_cost = 0;
  for (std::size_t i : eval) {
    local_acc += w.ds.queries[i].correct[0];
    local_cost += w.cm.normalized_costs(w.ds.queries[i].workload(), w.states[i])[0];
  }
  CHECK(res.always_local.accuracy == doctest::Approx(local_acc / eval.size()).epsilon(1e-12));
  CHECK(res.always_local.mean_cost == doctest::Approx(local_cost / eval.size()).epsilon(1e-12));
  CHECK(res.always_reference.mean_cost == doctest::Approx(1.0).epsilon(1e-12));

  const auto csv = sweep_to_csv(res.rows);
  CHECK(csv.rfind("lambda,alpha,accuracy,mean_cost,fa_risk,local_rate,false_defer,false_accept\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 5);

  in.eval_indices = {};
  CHECK_THROWS_AS(evaluate_sweep(in, lambdas, alphas), std::invalid_argument);
}
