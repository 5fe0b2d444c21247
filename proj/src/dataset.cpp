#include "cr2/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include "cr2/numeric.hpp"

namespace cr2 {

namespace {

constexpr std::uint64_t kStateStreamTag = 0x5354415445ULL;  // "STATE"

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::vector<std::string_view> split_csv_line(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    auto field = line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start);
    while (!field.empty() && (field.front() == ' ' || field.front() == '\t')) field.remove_prefix(1);
    while (!field.empty() && (field.back() == ' ' || field.back() == '\t' || field.back() == '\r')) {
      field.remove_suffix(1);
    }
    fields.push_back(field);
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return fields;
}

template <typename T>
T parse_number(std::string_view s, std::size_t line_no, std::string_view column) {
  T value{};
  const auto* end = s.data() + s.size();
  const auto [ptr, ec] = std::from_chars(s.data(), end, value);
  if (ec != std::errc() || ptr != end) {
    throw DatasetError(DatasetError::Kind::malformed, "line " + std::to_string(line_no) + ": cannot parse column '" +
                                                          std::string(column) + "' value '" + std::string(s) + "'");
  }
  return value;
}

Split parse_split(std::string_view s, std::size_t line_no) {
  if (s == "train") return Split::train;
  if (s == "cal") return Split::cal;
  if (s == "test") return Split::test;
  throw DatasetError(DatasetError::Kind::unknown_split,
                     "line " + std::to_string(line_no) + ": unknown split tag '" + std::string(s) + "'");
}

}  // namespace

std::string_view to_string(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::cal: return "cal";
    case Split::test: return "test";
  }
  return "?";
}

DatasetError::DatasetError(Kind kind, const std::string& message) : std::runtime_error(message), kind_(kind) {}

bool QueryRecord::any_correct() const {
  return std::any_of(correct.begin(), correct.end(), [](std::uint8_t y) { return y != 0; });
}

void RoutingDataset::validate() const {
  if (model_ids.empty()) throw DatasetError(DatasetError::Kind::missing_column, "dataset has no models");
  for (const auto& q : queries) {
    const std::string where = "query " + std::to_string(q.id);
    if (q.embedding.size() != embedding_dim || q.correct.size() != model_ids.size() ||
        q.l_out.size() != model_ids.size()) {
      throw DatasetError(DatasetError::Kind::dimension_mismatch, where + ": dimension mismatch");
    }
    for (double v : q.embedding) {
      if (!std::isfinite(v)) throw DatasetError(DatasetError::Kind::malformed, where + ": non-finite embedding");
    }
    for (auto y : q.correct) {
      if (y > 1) throw DatasetError(DatasetError::Kind::non_binary_label, where + ": non-binary label");
    }
    if (q.l_in < 1) throw DatasetError(DatasetError::Kind::malformed, where + ": l_in must be >= 1");
    for (int v : q.l_out) {
      if (v < 1) throw DatasetError(DatasetError::Kind::malformed, where + ": l_out must be >= 1");
    }
  }
}

std::vector<std::size_t> RoutingDataset::indices(Split split) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < queries.size(); ++i) {
    if (queries[i].split == split) out.push_back(i);
  }
  return out;
}

std::vector<std::size_t> RoutingDataset::evaluation_indices() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < queries.size(); ++i) {
    if (queries[i].split == Split::test && queries[i].any_correct()) out.push_back(i);
  }
  return out;
}

QueryWorkload sample_workload(const TokenModel& tokens, std::size_t n_models, Rng& rng) {
  QueryWorkload w;
  w.l_in = std::max(1, static_cast<int>(std::lround(rng.lognormal(std::log(tokens.l_in_median), tokens.l_in_sigma))));
  const double base = rng.lognormal(std::log(tokens.l_out_median), tokens.l_out_sigma);
  w.l_out.resize(n_models);
  for (auto& l : w.l_out) {
    l = std::max(1, static_cast<int>(std::lround(base * std::exp(tokens.l_out_model_jitter * rng.normal()))));
  }
  return w;
}

void SyntheticConfig::validate(std::size_t n_models) const {
  if (n_queries == 0) throw std::invalid_argument("dataset.n_queries must be positive");
  if (embedding_dim < 2) throw std::invalid_argument("dataset.embedding_dim must be >= 2");
  if (n_clusters == 0) throw std::invalid_argument("dataset.n_clusters must be positive");
  if (capability.size() != n_models || slope.size() != n_models) {
    throw std::invalid_argument("dataset.capability and dataset.slope need one entry per model");
  }
  const double fr[] = {train_fraction, cal_fraction, test_fraction};
  for (double f : fr) {
    if (!(f >= 0.0 && f <= 1.0)) throw std::invalid_argument("split fractions must lie in [0, 1]");
  }
  if (std::abs(train_fraction + cal_fraction + test_fraction - 1.0) > 1e-9) {
    throw std::invalid_argument("split fractions must sum to 1");
  }
  if (!(within_cluster_std > 0.0) || !(cluster_scale >= 0.0) || !(difficulty_noise >= 0.0) ||
      !(affinity_scale >= 0.0) || !(shared_noise >= 0.0)) {
    throw std::invalid_argument("dataset scale parameters must be non-negative");
  }
  if (!(tokens.l_in_median >= 1.0) || !(tokens.l_out_median >= 1.0) || tokens.l_in_sigma < 0.0 ||
      tokens.l_out_sigma < 0.0 || tokens.l_out_model_jitter < 0.0) {
    throw std::invalid_argument("invalid token-count model");
  }
}

RoutingDataset generate_synthetic(const SyntheticConfig& cfg, const std::vector<std::string>& model_ids, Rng& rng) {
  cfg.validate(model_ids.size());
  const std::size_t d = cfg.embedding_dim;
  const std::size_t n_models = model_ids.size();

  std::vector<std::vector<double>> centers(cfg.n_clusters, std::vector<double>(d));
  for (auto& c : centers) {
    for (auto& v : c) v = rng.normal(0.0, cfg.cluster_scale);
  }
  // Unit difficulty direction; projections are rescaled to unit marginal variance.
  std::vector<double> direction(d);
  for (auto& v : direction) v = rng.normal();
  const double dir_norm = std::sqrt(dot(direction, direction));
  for (auto& v : direction) v /= dir_norm;
  const double proj_scale = std::sqrt(cfg.cluster_scale * cfg.cluster_scale +
                                      cfg.within_cluster_std * cfg.within_cluster_std);
  std::vector<std::vector<double>> affinity(n_models, std::vector<double>(cfg.n_clusters, 0.0));
  for (auto& row : affinity) {
    for (auto& v : row) v = rng.normal(0.0, cfg.affinity_scale);
  }

  RoutingDataset ds;
  ds.embedding_dim = d;
  ds.model_ids = model_ids;
  ds.queries.resize(cfg.n_queries);
  for (std::size_t i = 0; i < cfg.n_queries; ++i) {
    QueryRecord& q = ds.queries[i];
    q.id = static_cast<std::int64_t>(i);
    const std::size_t k = static_cast<std::size_t>(rng.uniform_index(cfg.n_clusters));
    q.embedding.resize(d);
    for (std::size_t j = 0; j < d; ++j) q.embedding[j] = centers[k][j] + rng.normal(0.0, cfg.within_cluster_std);
    const double difficulty = dot(direction, q.embedding) / proj_scale + rng.normal(0.0, cfg.difficulty_noise);
    const double shared = rng.normal(0.0, cfg.shared_noise);
    q.correct.resize(n_models);
    for (std::size_t m = 0; m < n_models; ++m) {
      const double p = sigmoid(cfg.capability[m] - cfg.slope[m] * difficulty + affinity[m][k] + shared);
      q.correct[m] = rng.bernoulli(p) ? 1 : 0;
    }
    const QueryWorkload w = sample_workload(cfg.tokens, n_models, rng);
    q.l_in = w.l_in;
    q.l_out = w.l_out;
  }

  // Exact split sizes over a random permutation.
  std::vector<std::size_t> perm(cfg.n_queries);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  for (std::size_t i = perm.size(); i > 1; --i) {
    std::swap(perm[i - 1], perm[static_cast<std::size_t>(rng.uniform_index(i))]);
  }
  const auto n_train = static_cast<std::size_t>(std::llround(cfg.train_fraction * static_cast<double>(cfg.n_queries)));
  const auto n_cal = static_cast<std::size_t>(std::llround(cfg.cal_fraction * static_cast<double>(cfg.n_queries)));
  for (std::size_t r = 0; r < perm.size(); ++r) {
    Split s = Split::test;
    if (r < n_train) {
      s = Split::train;
    } else if (r < n_train + n_cal) {
      s = Split::cal;
    }
    ds.queries[perm[r]].split = s;
  }
  ds.validate();
  return ds;
}

std::string to_tabular(const RoutingDataset& ds) {
  std::string out = "id,split,l_in";
  for (std::size_t j = 0; j < ds.embedding_dim; ++j) out += ",emb_" + std::to_string(j);
  for (const auto& m : ds.model_ids) out += ",y_" + m;
  for (const auto& m : ds.model_ids) out += ",lout_" + m;
  out += '\n';
  for (const auto& q : ds.queries) {
    out += std::to_string(q.id);
    out += ',';
    out += to_string(q.split);
    out += ',' + std::to_string(q.l_in);
    for (double v : q.embedding) out += ',' + format_double(v);
    for (auto y : q.correct) out += ',' + std::to_string(static_cast<int>(y));
    for (int l : q.l_out) out += ',' + std::to_string(l);
    out += '\n';
  }
  return out;
}

void save_tabular(const RoutingDataset& ds, const std::filesystem::path& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DatasetError(DatasetError::Kind::io, "cannot open " + path.string() + " for writing");
  f << to_tabular(ds);
  if (!f) throw DatasetError(DatasetError::Kind::io, "write failed for " + path.string());
}

RoutingDataset parse_tabular(std::string_view text) {
  std::size_t pos = 0;
  std::size_t line_no = 0;
  auto next_line = [&](std::string_view& line) {
    while (pos < text.size()) {
      const std::size_t nl = text.find('\n', pos);
      line = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
      pos = nl == std::string_view::npos ? text.size() : nl + 1;
      ++line_no;
      if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
      if (!line.empty()) return true;
    }
    return false;
  };

  std::string_view header_line;
  if (!next_line(header_line)) throw DatasetError(DatasetError::Kind::missing_column, "empty file: no header");
  const auto header = split_csv_line(header_line);

  auto find_col = [&](std::string_view name) -> std::ptrdiff_t {
    const auto it = std::find(header.begin(), header.end(), name);
    return it == header.end() ? -1 : it - header.begin();
  };
  for (const char* required : {"id", "split", "l_in"}) {
    if (find_col(required) < 0) {
      throw DatasetError(DatasetError::Kind::missing_column, std::string("missing column '") + required + "'");
    }
  }

  RoutingDataset ds;
  std::vector<std::size_t> emb_cols;
  std::vector<std::size_t> y_cols;
  for (std::size_t c = 0; c < header.size(); ++c) {
    const auto h = header[c];
    if (h.starts_with("y_")) {
      ds.model_ids.emplace_back(h.substr(2));
      y_cols.push_back(c);
    }
  }
  if (ds.model_ids.empty()) throw DatasetError(DatasetError::Kind::missing_column, "missing y_<model> columns");
  for (std::size_t j = 0;; ++j) {
    const auto c = find_col("emb_" + std::to_string(j));
    if (c < 0) break;
    emb_cols.push_back(static_cast<std::size_t>(c));
  }
  if (emb_cols.size() < 2) throw DatasetError(DatasetError::Kind::missing_column, "missing emb_<k> columns");
  std::size_t n_emb_headers = 0;
  std::size_t n_lout_headers = 0;
  for (const auto h : header) {
    if (h.starts_with("emb_")) ++n_emb_headers;
    if (h.starts_with("lout_")) ++n_lout_headers;
  }
  if (n_emb_headers != emb_cols.size()) {
    throw DatasetError(DatasetError::Kind::missing_column, "embedding columns are not contiguous emb_0..emb_{d-1}");
  }
  std::vector<std::size_t> lout_cols;
  for (const auto& m : ds.model_ids) {
    const auto c = find_col("lout_" + m);
    if (c < 0) throw DatasetError(DatasetError::Kind::missing_column, "missing column 'lout_" + m + "'");
    lout_cols.push_back(static_cast<std::size_t>(c));
  }
  if (n_lout_headers != lout_cols.size()) {
    throw DatasetError(DatasetError::Kind::missing_column, "lout_<model> column without matching y_<model>");
  }
  ds.embedding_dim = emb_cols.size();

  const auto id_col = static_cast<std::size_t>(find_col("id"));
  const auto split_col = static_cast<std::size_t>(find_col("split"));
  const auto lin_col = static_cast<std::size_t>(find_col("l_in"));

  std::string_view line;
  while (next_line(line)) {
    const auto fields = split_csv_line(line);
    if (fields.size() != header.size()) {
      throw DatasetError(DatasetError::Kind::dimension_mismatch,
                         "line " + std::to_string(line_no) + ": dimension mismatch (" + std::to_string(fields.size()) +
                             " fields, header has " + std::to_string(header.size()) + ")");
    }
    QueryRecord q;
    q.id = parse_number<std::int64_t>(fields[id_col], line_no, "id");
    q.split = parse_split(fields[split_col], line_no);
    q.l_in = parse_number<int>(fields[lin_col], line_no, "l_in");
    q.embedding.reserve(emb_cols.size());
    for (auto c : emb_cols) q.embedding.push_back(parse_number<double>(fields[c], line_no, header[c]));
    for (auto c : y_cols) {
      const int y = parse_number<int>(fields[c], line_no, header[c]);
      if (y != 0 && y != 1) {
        throw DatasetError(DatasetError::Kind::non_binary_label,
                           "line " + std::to_string(line_no) + ": non-binary label " + std::to_string(y) + " in '" +
                               std::string(header[c]) + "'");
      }
      q.correct.push_back(static_cast<std::uint8_t>(y));
    }
    for (auto c : lout_cols) q.l_out.push_back(parse_number<int>(fields[c], line_no, header[c]));
    ds.queries.push_back(std::move(q));
  }
  ds.validate();
  return ds;
}

RoutingDataset load_tabular(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DatasetError(DatasetError::Kind::io, "cannot open " + path.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  return parse_tabular(ss.str());
}

std::vector<SystemState> attach_states(const RoutingDataset& ds, const CommParams& comm, std::uint64_t seed) {
  std::vector<SystemState> states;
  states.reserve(ds.queries.size());
  for (const auto& q : ds.queries) {
    Rng rng = Rng::substream(seed, kStateStreamTag, static_cast<std::uint64_t>(q.id));
    states.push_back(sample_state(comm, rng));
  }
  return states;
}

}  // namespace cr2
