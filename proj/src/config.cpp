#include "cr2/config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <set>
#include <sstream>

#include "cr2/artifact.hpp"
#include "cr2/calibration.hpp"

namespace cr2 {

namespace pt = boost::property_tree;

namespace {

constexpr std::string_view kModelPrefix = "model.";

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename T>
T parse_number(const std::string& section, const std::string& key, const std::string& raw) {
  const std::string s = trim(raw);
  T v{};
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw ConfigError("[" + section + "] " + key + ": cannot parse '" + raw + "'");
  }
  return v;
}

// Reads one section and rejects keys nobody asked for, so typos surface.
class SectionReader {
 public:
  SectionReader(std::string name, const pt::ptree* tree) : name_(std::move(name)), tree_(tree) {}

  template <typename T>
  void read(const std::string& key, T& target) {
    const auto raw = raw_value(key);
    if (!raw) return;
    if constexpr (std::is_same_v<T, std::string>) {
      target = trim(*raw);
    } else if constexpr (std::is_same_v<T, bool>) {
      const auto v = trim(*raw);
      if (v == "true" || v == "1") target = true;
      else if (v == "false" || v == "0") target = false;
      else throw ConfigError("[" + name_ + "] " + key + ": expected true/false");
    } else {
      target = parse_number<T>(name_, key, *raw);
    }
  }

  void read_list(const std::string& key, std::vector<double>& target) {
    const auto raw = raw_value(key);
    if (!raw) return;
    target.clear();
    std::stringstream ss(*raw);
    std::string item;
    while (std::getline(ss, item, ',')) target.push_back(parse_number<double>(name_, key, item));
    if (target.empty()) throw ConfigError("[" + name_ + "] " + key + ": empty list");
  }

  void finish() const {
    if (!tree_) return;
    for (const auto& [key, value] : *tree_) {
      if (!used_.count(key)) throw ConfigError("[" + name_ + "] unknown key '" + key + "'");
    }
  }

 private:
  std::optional<std::string> raw_value(const std::string& key) {
    used_.insert(key);
    if (!tree_) return std::nullopt;
    const auto it = tree_->find(key);
    if (it == tree_->not_found()) return std::nullopt;
    return it->second.data();
  }

  std::string name_;
  const pt::ptree* tree_;
  std::set<std::string> used_;
};

const pt::ptree* section(const pt::ptree& root, const std::string& name) {
  const auto it = root.find(name);
  return it == root.not_found() ? nullptr : &it->second;
}

void read_optim(SectionReader& r, AdamWConfig& o) {
  r.read("learning_rate", o.learning_rate);
  r.read("weight_decay", o.weight_decay);
  r.read("beta1", o.beta1);
  r.read("beta2", o.beta2);
  r.read("epsilon", o.epsilon);
  r.read("grad_clip_norm", o.grad_clip_norm);
}

void write_optim(std::ostream& out, const AdamWConfig& o) {
  out << "learning_rate = " << fmt(o.learning_rate) << "\n";
  out << "weight_decay = " << fmt(o.weight_decay) << "\n";
  out << "beta1 = " << fmt(o.beta1) << "\n";
  out << "beta2 = " << fmt(o.beta2) << "\n";
  out << "epsilon = " << fmt(o.epsilon) << "\n";
  out << "grad_clip_norm = " << fmt(o.grad_clip_norm) << "\n";
}

std::string join(const std::vector<double>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? ", " : "") + fmt(v[i]);
  return s;
}

template <typename F>
void rethrow_as_config(const char* what, F&& f) {
  try {
    f();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string(what) + ": " + e.what());
  }
}

bool ascending_unique(const std::vector<double>& v) {
  return std::adjacent_find(v.begin(), v.end(), [](double a, double b) { return !(a < b); }) == v.end();
}

}  // namespace

std::vector<double> CalibrationSection::lambda_grid() const { return log_spaced(lambda_min, lambda_max, lambda_points); }

std::vector<std::string> RunConfig::model_ids() const {
  std::vector<std::string> ids;
  for (const auto& e : pool) ids.push_back(e.profile.id);
  return ids;
}

std::vector<ModelProfile> RunConfig::profiles() const {
  std::vector<ModelProfile> out;
  for (const auto& e : pool) out.push_back(e.profile);
  return out;
}

DeferPolicy RunConfig::defer_policy() const {
  if (sweep.defer == "inclusive") return DeferPolicy::inclusive();
  if (sweep.defer == "edge_only") return DeferPolicy::edge_only();
  if (sweep.defer == "fallback") {
    const auto ids = model_ids();
    const auto it = std::find(ids.begin(), ids.end(), sweep.fallback_model);
    if (it == ids.end()) throw ConfigError("sweep.fallback_model '" + sweep.fallback_model + "' is not in the pool");
    return DeferPolicy::fallback(static_cast<std::size_t>(it - ids.begin()));
  }
  throw ConfigError("sweep.defer must be inclusive, edge_only or fallback");
}

void RunConfig::validate() const {
  if (pool.size() < 2) throw ConfigError("the model pool needs a local model and at least one edge model");
  CostModel cm = [&] {
    try {
      return CostModel(profiles(), cost.comm, cost.ue, CostWeights{cost.omega_t, cost.omega_e, 1.0, 1.0});
    } catch (const std::invalid_argument& e) {
      throw ConfigError(std::string("cost model: ") + e.what());
    }
  }();
  if (cost.reference_sample == 0) throw ConfigError("cost.reference_sample must be positive");
  if (dataset.source == "synthetic") {
    rethrow_as_config("dataset", [&] { dataset.synthetic.validate(pool.size()); });
  } else if (dataset.source == "file") {
    if (dataset.path.empty()) throw ConfigError("dataset.path is required when source = file");
  } else {
    throw ConfigError("dataset.source must be synthetic or file");
  }
  rethrow_as_config("teacher", [&] { teacher.validate(); });
  rethrow_as_config("gate", [&] { gate.validate(); });
  if (!(calibration.lambda_min > 0.0 && calibration.lambda_max > calibration.lambda_min) || calibration.lambda_points < 2) {
    throw ConfigError("calibration lambda grid is invalid");
  }
  if (calibration.alphas.empty() || !ascending_unique(calibration.alphas) || !(calibration.alphas.front() > 0.0) ||
      !(calibration.alphas.back() < 1.0)) {
    throw ConfigError("calibration.alphas must be ascending values in (0, 1)");
  }
  const auto pol = defer_policy();
  rethrow_as_config("sweep", [&] { pol.validate(cm); });
  if (sweep.knn_k == 0) throw ConfigError("sweep.knn_k must be positive");
  for (double t : sweep.cost_targets) {
    if (!(t > 0.0)) throw ConfigError("sweep.cost_targets must be positive");
  }
  for (double t : sweep.accuracy_targets) {
    if (!(t > 0.0)) throw ConfigError("sweep.accuracy_targets must be positive");
  }
  const auto& a = acceptance;
  if (a.a1_splits == 0 || a.a1_cal_size == 0 || a.a1_test_size == 0 || a.a1_lambda_points == 0 ||
      a.a1_pool_size < a.a1_cal_size + a.a1_test_size) {
    throw ConfigError("acceptance A1 sizes are invalid");
  }
  for (double al : a.a1_alphas) {
    if (!(al > 0.0 && al < 1.0)) throw ConfigError("acceptance.a1_alphas must lie in (0, 1)");
  }
  if (std::find(calibration.alphas.begin(), calibration.alphas.end(), a.a7_alpha) == calibration.alphas.end()) {
    throw ConfigError("acceptance.a7_alpha must be one of calibration.alphas");
  }
}

RunConfig parse_config(std::string_view ini_text) {
  pt::ptree root;
  try {
    std::istringstream in{std::string(ini_text)};
    pt::read_ini(in, root);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(std::string("config syntax: ") + e.message() + " (line " + std::to_string(e.line()) + ")");
  }

  RunConfig cfg;
  std::set<std::string> known{"run", "dataset", "cost", "teacher", "gate", "calibration", "sweep", "acceptance"};
  for (const auto& [name, tree] : root) {
    if (!tree.empty() && name.rfind(kModelPrefix, 0) == 0) continue;
    if (tree.empty() && !tree.data().empty()) throw ConfigError("key '" + name + "' outside any section");
    if (!known.count(name)) throw ConfigError("unknown section [" + name + "]");
  }

  {
    SectionReader r("run", section(root, "run"));
    r.read("seed", cfg.seed);
    r.finish();
  }
  {
    SectionReader r("dataset", section(root, "dataset"));
    auto& s = cfg.dataset.synthetic;
    r.read("source", cfg.dataset.source);
    r.read("path", cfg.dataset.path);
    r.read("n_queries", s.n_queries);
    r.read("embedding_dim", s.embedding_dim);
    r.read("n_clusters", s.n_clusters);
    r.read("cluster_scale", s.cluster_scale);
    r.read("within_cluster_std", s.within_cluster_std);
    r.read("difficulty_noise", s.difficulty_noise);
    r.read("affinity_scale", s.affinity_scale);
    r.read("shared_noise", s.shared_noise);
    r.read("l_in_median", s.tokens.l_in_median);
    r.read("l_in_sigma", s.tokens.l_in_sigma);
    r.read("l_out_median", s.tokens.l_out_median);
    r.read("l_out_sigma", s.tokens.l_out_sigma);
    r.read("l_out_model_jitter", s.tokens.l_out_model_jitter);
    r.read("train_fraction", s.train_fraction);
    r.read("cal_fraction", s.cal_fraction);
    r.read("test_fraction", s.test_fraction);
    r.finish();
  }
  for (const auto& [name, tree] : root) {
    if (name.rfind(kModelPrefix, 0) != 0) continue;
    PoolEntry e;
    e.profile.id = name.substr(kModelPrefix.size());
    if (e.profile.id.empty()) throw ConfigError("model section needs an id");
    SectionReader r(name, &tree);
    std::string tier = "edge";
    r.read("tier", tier);
    if (tier == "local") e.profile.tier = Tier::local;
    else if (tier == "edge") e.profile.tier = Tier::edge;
    else throw ConfigError("[" + name + "] tier must be local or edge");
    r.read("beta_prefill", e.profile.beta_prefill);
    r.read("beta_decode", e.profile.beta_decode);
    r.read("kappa_prefill", e.profile.kappa_prefill);
    r.read("kappa_decode", e.profile.kappa_decode);
    r.read("active_power_w", e.profile.active_power_w);
    r.read("capability", e.capability);
    r.read("slope", e.slope);
    r.finish();
    cfg.pool.push_back(e);
  }
  cfg.dataset.synthetic.capability.clear();
  cfg.dataset.synthetic.slope.clear();
  for (const auto& e : cfg.pool) {
    cfg.dataset.synthetic.capability.push_back(e.capability);
    cfg.dataset.synthetic.slope.push_back(e.slope);
  }
  {
    SectionReader r("cost", section(root, "cost"));
    auto& c = cfg.cost.comm;
    r.read("bits_per_input_token", c.bits_per_input_token);
    r.read("bits_per_output_token", c.bits_per_output_token);
    r.read("uplink_bandwidth_hz", c.uplink_bandwidth_hz);
    r.read("downlink_bandwidth_hz", c.downlink_bandwidth_hz);
    r.read("rtt_s", c.rtt_s);
    r.read("ue_tx_power_w", c.ue_tx_power_w);
    r.read("bs_tx_power_w", c.bs_tx_power_w);
    r.read("noise_psd_w_per_hz", c.noise_psd_w_per_hz);
    r.read("path_loss_ref", c.path_loss_ref);
    r.read("path_loss_exponent", c.path_loss_exponent);
    r.read("min_distance_m", c.min_distance_m);
    r.read("max_distance_m", c.max_distance_m);
    r.read("ue_tx_w", cfg.cost.ue.tx_w);
    r.read("ue_rx_w", cfg.cost.ue.rx_w);
    r.read("ue_idle_w", cfg.cost.ue.idle_w);
    r.read("ue_active_w", cfg.cost.ue.active_w);
    r.read("omega_t", cfg.cost.omega_t);
    r.read("omega_e", cfg.cost.omega_e);
    r.read("reference_sample", cfg.cost.reference_sample);
    r.finish();
  }
  {
    SectionReader r("teacher", section(root, "teacher"));
    auto& t = cfg.teacher;
    r.read("hidden", t.hidden);
    r.read("dropout", t.dropout);
    r.read("epochs", t.epochs);
    r.read("batch_size", t.batch_size);
    r.read("w_cls", t.weights.w_cls);
    r.read("w_rank", t.weights.w_rank);
    read_optim(r, t.optim);
    r.finish();
  }
  {
    SectionReader r("gate", section(root, "gate"));
    auto& g = cfg.gate;
    r.read("hidden", g.hidden);
    r.read("dropout", g.dropout);
    r.read("epochs", g.epochs);
    r.read("batch_size", g.batch_size);
    r.read("lambdas_per_step", g.lambdas_per_step);
    r.read("lambda_min", g.lambda_min);
    r.read("lambda_max", g.lambda_max);
    r.read("initial_temperature", g.initial_temperature);
    r.read("w_sign", g.weights.w_sign);
    r.read("w_margin", g.weights.w_margin);
    r.read("w_mono", g.weights.w_mono);
    r.read("huber_beta", g.weights.huber_beta);
    read_optim(r, g.optim);
    r.finish();
  }
  {
    SectionReader r("calibration", section(root, "calibration"));
    r.read("lambda_min", cfg.calibration.lambda_min);
    r.read("lambda_max", cfg.calibration.lambda_max);
    r.read("lambda_points", cfg.calibration.lambda_points);
    r.read_list("alphas", cfg.calibration.alphas);
    r.finish();
  }
  {
    SectionReader r("sweep", section(root, "sweep"));
    r.read("defer", cfg.sweep.defer);
    r.read("fallback_model", cfg.sweep.fallback_model);
    r.read("knn_k", cfg.sweep.knn_k);
    r.read_list("cost_targets", cfg.sweep.cost_targets);
    r.read_list("accuracy_targets", cfg.sweep.accuracy_targets);
    r.finish();
  }
  {
    SectionReader r("acceptance", section(root, "acceptance"));
    auto& a = cfg.acceptance;
    r.read("a1_splits", a.a1_splits);
    r.read("a1_cal_size", a.a1_cal_size);
    r.read("a1_test_size", a.a1_test_size);
    r.read("a1_lambda_points", a.a1_lambda_points);
    r.read_list("a1_alphas", a.a1_alphas);
    r.read("a1_pool_size", a.a1_pool_size);
    r.read("a7_min_sign_agreement", a.a7_min_sign_agreement);
    r.read("a7_max_accuracy_gap", a.a7_max_accuracy_gap);
    r.read("a7_alpha", a.a7_alpha);
    r.finish();
  }
  cfg.validate();
  return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
  return parse_config(read_file(path));
}

std::string RunConfig::resolved() const {
  std::ostringstream out;
  out << "[run]\nseed = " << seed << "\n\n";
  const auto& s = dataset.synthetic;
  out << "[dataset]\nsource = " << dataset.source << "\n";
  if (!dataset.path.empty()) out << "path = " << dataset.path << "\n";
  out << "n_queries = " << s.n_queries << "\nembedding_dim = " << s.embedding_dim << "\nn_clusters = " << s.n_clusters
      << "\ncluster_scale = " << fmt(s.cluster_scale) << "\nwithin_cluster_std = " << fmt(s.within_cluster_std)
      << "\ndifficulty_noise = " << fmt(s.difficulty_noise) << "\naffinity_scale = " << fmt(s.affinity_scale)
      << "\nshared_noise = " << fmt(s.shared_noise) << "\nl_in_median = " << fmt(s.tokens.l_in_median)
      << "\nl_in_sigma = " << fmt(s.tokens.l_in_sigma) << "\nl_out_median = " << fmt(s.tokens.l_out_median)
      << "\nl_out_sigma = " << fmt(s.tokens.l_out_sigma) << "\nl_out_model_jitter = " << fmt(s.tokens.l_out_model_jitter)
      << "\ntrain_fraction = " << fmt(s.train_fraction) << "\ncal_fraction = " << fmt(s.cal_fraction)
      << "\ntest_fraction = " << fmt(s.test_fraction) << "\n\n";
  for (const auto& e : pool) {
    const auto& p = e.profile;
    out << "[model." << p.id << "]\ntier = " << (p.tier == Tier::local ? "local" : "edge")
        << "\nbeta_prefill = " << fmt(p.beta_prefill) << "\nbeta_decode = " << fmt(p.beta_decode)
        << "\nkappa_prefill = " << fmt(p.kappa_prefill) << "\nkappa_decode = " << fmt(p.kappa_decode)
        << "\nactive_power_w = " << fmt(p.active_power_w) << "\ncapability = " << fmt(e.capability)
        << "\nslope = " << fmt(e.slope) << "\n\n";
  }
  const auto& c = cost.comm;
  out << "[cost]\nbits_per_input_token = " << fmt(c.bits_per_input_token)
      << "\nbits_per_output_token = " << fmt(c.bits_per_output_token) << "\nuplink_bandwidth_hz = " << fmt(c.uplink_bandwidth_hz)
      << "\ndownlink_bandwidth_hz = " << fmt(c.downlink_bandwidth_hz) << "\nrtt_s = " << fmt(c.rtt_s)
      << "\nue_tx_power_w = " << fmt(c.ue_tx_power_w) << "\nbs_tx_power_w = " << fmt(c.bs_tx_power_w)
      << "\nnoise_psd_w_per_hz = " << fmt(c.noise_psd_w_per_hz) << "\npath_loss_ref = " << fmt(c.path_loss_ref)
      << "\npath_loss_exponent = " << fmt(c.path_loss_exponent) << "\nmin_distance_m = " << fmt(c.min_distance_m)
      << "\nmax_distance_m = " << fmt(c.max_distance_m) << "\nue_tx_w = " << fmt(cost.ue.tx_w)
      << "\nue_rx_w = " << fmt(cost.ue.rx_w) << "\nue_idle_w = " << fmt(cost.ue.idle_w)
      << "\nue_active_w = " << fmt(cost.ue.active_w) << "\nomega_t = " << fmt(cost.omega_t)
      << "\nomega_e = " << fmt(cost.omega_e) << "\nreference_sample = " << cost.reference_sample << "\n\n";
  out << "[teacher]\nhidden = " << teacher.hidden << "\ndropout = " << fmt(teacher.dropout) << "\nepochs = " << teacher.epochs
      << "\nbatch_size = " << teacher.batch_size << "\nw_cls = " << fmt(teacher.weights.w_cls)
      << "\nw_rank = " << fmt(teacher.weights.w_rank) << "\n";
  write_optim(out, teacher.optim);
  out << "\n[gate]\nhidden = " << gate.hidden << "\ndropout = " << fmt(gate.dropout) << "\nepochs = " << gate.epochs
      << "\nbatch_size = " << gate.batch_size << "\nlambdas_per_step = " << gate.lambdas_per_step
      << "\nlambda_min = " << fmt(gate.lambda_min) << "\nlambda_max = " << fmt(gate.lambda_max)
      << "\ninitial_temperature = " << fmt(gate.initial_temperature) << "\nw_sign = " << fmt(gate.weights.w_sign)
      << "\nw_margin = " << fmt(gate.weights.w_margin) << "\nw_mono = " << fmt(gate.weights.w_mono)
      << "\nhuber_beta = " << fmt(gate.weights.huber_beta) << "\n";
  write_optim(out, gate.optim);
  out << "\n[calibration]\nlambda_min = " << fmt(calibration.lambda_min) << "\nlambda_max = " << fmt(calibration.lambda_max)
      << "\nlambda_points = " << calibration.lambda_points << "\nalphas = " << join(calibration.alphas) << "\n\n";
  out << "[sweep]\ndefer = " << sweep.defer << "\n";
  if (!sweep.fallback_model.empty()) out << "fallback_model = " << sweep.fallback_model << "\n";
  out << "knn_k = " << sweep.knn_k << "\ncost_targets = " << join(sweep.cost_targets)
      << "\naccuracy_targets = " << join(sweep.accuracy_targets) << "\n\n";
  const auto& a = acceptance;
  out << "[acceptance]\na1_splits = " << a.a1_splits << "\na1_cal_size = " << a.a1_cal_size
      << "\na1_test_size = " << a.a1_test_size << "\na1_lambda_points = " << a.a1_lambda_points
      << "\na1_alphas = " << join(a.a1_alphas) << "\na1_pool_size = " << a.a1_pool_size
      << "\na7_min_sign_agreement = " << fmt(a.a7_min_sign_agreement) << "\na7_max_accuracy_gap = " << fmt(a.a7_max_accuracy_gap)
      << "\na7_alpha = " << fmt(a.a7_alpha) << "\n";
  return out.str();
}

std::string RunConfig::hash() const { return sha256_hex(resolved()); }

Rng stage_rng(const RunConfig& cfg, StreamTag tag, std::uint64_t index) {
  return Rng::substream(cfg.seed, static_cast<std::uint64_t>(tag), index);
}

std::uint64_t state_seed(const RunConfig& cfg) { return stage_rng(cfg, StreamTag::states).next_u64(); }

CostModel build_cost_model(const RunConfig& cfg) {
  CostModel base(cfg.profiles(), cfg.cost.comm, cfg.cost.ue, CostWeights{cfg.cost.omega_t, cfg.cost.omega_e, 1.0, 1.0});
  Rng rng = stage_rng(cfg, StreamTag::reference);
  std::vector<QueryWorkload> workloads;
  workloads.reserve(cfg.cost.reference_sample);
  for (std::size_t i = 0; i < cfg.cost.reference_sample; ++i) {
    workloads.push_back(sample_workload(cfg.dataset.synthetic.tokens, base.size(), rng));
  }
  return base.with_reference_scales(workloads, rng);
}

RoutingDataset build_dataset(const RunConfig& cfg) {
  if (cfg.dataset.source == "file") {
    RoutingDataset ds = load_tabular(cfg.dataset.path);
    if (ds.model_ids != cfg.model_ids()) {
      throw DatasetError(DatasetError::Kind::dimension_mismatch, "dimension mismatch: dataset models differ from the pool");
    }
    return ds;
  }
  Rng rng = stage_rng(cfg, StreamTag::data);
  return generate_synthetic(cfg.dataset.synthetic, cfg.model_ids(), rng);
}

}  // namespace cr2
