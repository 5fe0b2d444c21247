#include "cr2/pipeline.hpp"

#include <json.hpp>

#include <exception>

#include "cr2/artifact.hpp"

namespace cr2 {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

json input_entry(const fs::path& p, const std::string& sha) { return {{"file", p.filename().string()}, {"sha256", sha}}; }

// Writes the artifact followed by its sidecar.
void publish(const RunConfig& cfg, const std::string& stage, const fs::path& path, const std::string& bytes,
             json inputs, json extra = json::object()) {
  write_file(path, bytes);
  json meta;
  meta["stage"] = stage;
  meta["seed"] = cfg.seed;
  meta["config_sha256"] = cfg.hash();
  meta["config"] = cfg.resolved();
  meta["inputs"] = std::move(inputs);
  meta["output"] = {{"file", path.filename().string()}, {"sha256", sha256_hex(bytes)}};
  meta["details"] = std::move(extra);
  write_file(sidecar_path(path), meta.dump(2) + "\n");
}

RoutingDataset decode_dataset(const VerifiedInput& in, const RunConfig& cfg) {
  RoutingDataset ds = parse_tabular(in.bytes);
  if (ds.model_ids != cfg.model_ids()) {
    throw DatasetError(DatasetError::Kind::dimension_mismatch, "dimension mismatch: dataset models differ from the configured pool");
  }
  return ds;
}

json optim_json(const AdamWConfig& o) {
  return {{"learning_rate", o.learning_rate}, {"weight_decay", o.weight_decay}, {"beta1", o.beta1},
          {"beta2", o.beta2},                 {"epsilon", o.epsilon},           {"grad_clip_norm", o.grad_clip_norm}};
}

json row_json(const SweepRow& r) {
  return {{"lambda", r.lambda},         {"alpha", r.alpha},           {"accuracy", r.accuracy},
          {"mean_cost", r.mean_cost},   {"fa_risk", r.fa_risk},       {"local_rate", r.local_rate},
          {"false_defer", r.false_defer}, {"false_accept", r.false_accept}};
}

json complexity_json(const Complexity& c) { return {{"params", c.params}, {"flops_per_query", c.flops_per_query}}; }

}  // namespace

int exit_code_for_current_exception() {
  try {
    throw;
  } catch (const ConfigError&) {
    return exit_invalid_config;
  } catch (const ArtifactError& e) {
    switch (e.kind()) {
      case ArtifactError::Kind::missing_file:
        return exit_missing_file;
      case ArtifactError::Kind::hash_mismatch:
        return exit_hash_mismatch;
      case ArtifactError::Kind::malformed:
        return exit_invalid_data;
    }
    return exit_failure;
  } catch (const DatasetError& e) {
    return e.kind() == DatasetError::Kind::io ? exit_missing_file : exit_invalid_data;
  } catch (...) {
    return exit_failure;
  }
}

ArtifactPaths ArtifactPaths::in(const fs::path& dir) {
  return {dir / "dataset.csv", dir / "teacher.bin",  dir / "gate.bin",   dir / "thresholds.csv",
          dir / "sweep.csv",   dir / "envelope.csv", dir / "curves.csv", dir / "summary.json"};
}

fs::path sidecar_path(const fs::path& artifact) {
  fs::path p = artifact;
  p += ".meta.json";
  return p;
}

VerifiedInput read_verified(const fs::path& artifact) {
  VerifiedInput in;
  in.bytes = read_file(artifact);
  in.sha256 = sha256_hex(in.bytes);
  const std::string meta_text = read_file(sidecar_path(artifact));
  json meta;
  try {
    meta = json::parse(meta_text);
  } catch (const json::exception& e) {
    throw ArtifactError(ArtifactError::Kind::malformed, "unreadable sidecar for " + artifact.filename().string());
  }
  const auto recorded = meta.value("/output/sha256"_json_pointer, std::string());
  if (recorded != in.sha256) {
    throw ArtifactError(ArtifactError::Kind::hash_mismatch,
                        "hash mismatch: " + artifact.filename().string() + " does not match its recorded sha256");
  }
  return in;
}

void cmd_gen_data(const RunConfig& cfg, const ArtifactPaths& paths) {
  const RoutingDataset ds = build_dataset(cfg);
  json extra;
  extra["model_ids"] = ds.model_ids;
  extra["embedding_dim"] = ds.embedding_dim;
  extra["n_train"] = ds.indices(Split::train).size();
  extra["n_cal"] = ds.indices(Split::cal).size();
  extra["n_test"] = ds.indices(Split::test).size();
  extra["n_test_evaluated"] = ds.evaluation_indices().size();
  publish(cfg, "gen-data", paths.dataset, to_tabular(ds), json::array(), extra);
}

void cmd_train_teacher(const RunConfig& cfg, const ArtifactPaths& paths) {
  const auto data = read_verified(paths.dataset);
  const RoutingDataset ds = decode_dataset(data, cfg);
  Rng rng = stage_rng(cfg, StreamTag::teacher);
  const auto result = train_teacher(ds, cfg.teacher, rng);
  json extra;
  extra["epoch_losses"] = result.epoch_losses;
  extra["optimizer"] = optim_json(cfg.teacher.optim);
  extra["checkpoint"] = "final epoch";
  publish(cfg, "train-teacher", paths.teacher, serialize_teacher(result.params, cfg.hash()),
          json::array({input_entry(paths.dataset, data.sha256)}), extra);
}

void cmd_train_gate(const RunConfig& cfg, const ArtifactPaths& paths) {
  const auto data = read_verified(paths.dataset);
  const auto teacher_in = read_verified(paths.teacher);
  const RoutingDataset ds = decode_dataset(data, cfg);
  const TeacherParams teacher = deserialize_teacher(teacher_in.bytes, ds.model_ids).params;
  const CostModel cm = build_cost_model(cfg);
  Rng rng = stage_rng(cfg, StreamTag::gate);
  const auto result = train_gate(ds, teacher, cm, cfg.gate, rng);
  json extra;
  extra["epoch_losses"] = result.epoch_losses;
  extra["cal_losses"] = result.cal_losses;
  extra["selected_epoch"] = result.selected_epoch;
  extra["temperature"] = result.params.temperature();
  extra["optimizer"] = optim_json(cfg.gate.optim);
  extra["film_layout"] = "gamma = first hidden rows, beta = remaining rows, no gamma offset";
  publish(cfg, "train-gate", paths.gate, serialize_gate(result.params, teacher_in.sha256),
          json::array({input_entry(paths.dataset, data.sha256), input_entry(paths.teacher, teacher_in.sha256)}), extra);
}

LoadedRun load_run(const RunConfig& cfg, const ArtifactPaths& paths, bool with_table) {
  LoadedRun run;
  const auto data = read_verified(paths.dataset);
  const auto teacher_in = read_verified(paths.teacher);
  const auto gate_in = read_verified(paths.gate);
  run.dataset = decode_dataset(data, cfg);
  run.dataset_hash = data.sha256;
  run.teacher = deserialize_teacher(teacher_in.bytes, run.dataset.model_ids).params;
  run.teacher_hash = teacher_in.sha256;
  auto gate = deserialize_gate(gate_in.bytes);
  if (gate.teacher_hash != teacher_in.sha256) {
    throw ArtifactError(ArtifactError::Kind::hash_mismatch, "hash mismatch: gate was distilled from a different teacher");
  }
  if (gate.params.embedding_dim != run.dataset.embedding_dim) {
    throw ArtifactError(ArtifactError::Kind::malformed, "gate embedding dimension differs from the dataset");
  }
  run.gate = std::move(gate.params);
  run.gate_hash = gate_in.sha256;
  if (with_table) {
    const auto table_in = read_verified(paths.table);
    try {
      run.table = parse_table(table_in.bytes);
    } catch (const std::runtime_error& e) {
      throw ArtifactError(ArtifactError::Kind::malformed, e.what());
    }
    run.table_hash = table_in.sha256;
    const auto& p = run.table.provenance;
    if (p.gate_hash != run.gate_hash || p.teacher_hash != run.teacher_hash || p.dataset_hash != run.dataset_hash) {
      throw ArtifactError(ArtifactError::Kind::hash_mismatch, "hash mismatch: threshold table was calibrated on other artifacts");
    }
  }
  return run;
}

void cmd_calibrate(const RunConfig& cfg, const ArtifactPaths& paths) {
  const LoadedRun run = load_run(cfg, paths, false);
  const CostModel cm = build_cost_model(cfg);
  const auto states = attach_states(run.dataset, cm.comm(), state_seed(cfg));
  const auto grid = cfg.calibration.lambda_grid();
  CalibratedTable out;
  out.table = build_table(run.gate, run.teacher, cm, run.dataset, states, grid, cfg.calibration.alphas);
  out.provenance = {run.gate_hash, run.teacher_hash, run.dataset_hash, run.dataset.indices(Split::cal).size()};
  json extra;
  extra["n_cal"] = out.provenance.n_cal;
  extra["lambda_points"] = grid.size();
  extra["alphas"] = cfg.calibration.alphas;
  publish(cfg, "calibrate", paths.table, serialize_table(out),
          json::array({input_entry(paths.dataset, run.dataset_hash), input_entry(paths.teacher, run.teacher_hash),
                       input_entry(paths.gate, run.gate_hash)}),
          extra);
}

void cmd_sweep(const RunConfig& cfg, const ArtifactPaths& paths) {
  const LoadedRun run = load_run(cfg, paths, true);
  const CostModel cm = build_cost_model(cfg);
  const auto states = attach_states(run.dataset, cm.comm(), state_seed(cfg));
  const auto eval = run.dataset.evaluation_indices();
  const auto train = run.dataset.indices(Split::train);
  const KnnRouter knn(run.dataset, train, cfg.sweep.knn_k);

  SweepInputs in;
  in.dataset = &run.dataset;
  in.states = states;
  in.eval_indices = eval;
  in.teacher = &run.teacher;
  in.gate = &run.gate;
  in.table = &run.table.table;
  in.cost_model = &cm;
  in.policy = cfg.defer_policy();
  in.knn = &knn;
  const auto& table = run.table.table;
  const SweepResult res = evaluate_sweep(in, table.lambdas(), table.alphas());

  const json inputs = json::array({input_entry(paths.dataset, run.dataset_hash), input_entry(paths.teacher, run.teacher_hash),
                                   input_entry(paths.gate, run.gate_hash), input_entry(paths.table, run.table_hash)});
  publish(cfg, "sweep", paths.sweep, sweep_to_csv(res.rows), inputs);
  publish(cfg, "sweep", paths.envelope, sweep_to_csv(res.envelope), inputs);
  publish(cfg, "sweep", paths.curves, curves_to_csv(res), inputs);

  json summary;
  summary["seed"] = cfg.seed;
  summary["config_sha256"] = cfg.hash();
  summary["dataset_sha256"] = run.dataset_hash;
  summary["teacher_sha256"] = run.teacher_hash;
  summary["gate_sha256"] = run.gate_hash;
  summary["n_eval"] = eval.size();
  summary["defer_policy"] = cfg.sweep.defer;
  summary["always_local"] = {{"accuracy", res.always_local.accuracy}, {"mean_cost", res.always_local.mean_cost}};
  summary["always_reference"] = {{"accuracy", res.always_reference.accuracy},
                                 {"mean_cost", res.always_reference.mean_cost}};
  json fixed_acc = json::array();
  for (double target : cfg.sweep.accuracy_targets) {
    const auto hit = cheapest_at_accuracy(res.rows, target);
    fixed_acc.push_back({{"accuracy_target", target}, {"point", hit ? row_json(*hit) : json(nullptr)}});
  }
  summary["cheapest_at_accuracy"] = fixed_acc;
  json anchors = json::array();
  for (double budget : cfg.sweep.cost_targets) {
    const auto hit = best_within_cost(res.rows, budget);
    anchors.push_back({{"cost_target", budget}, {"point", hit ? row_json(*hit) : json(nullptr)}});
  }
  summary["best_within_cost"] = anchors;
  summary["router_complexity"] = {
      {"gate", complexity_json(router_complexity(gate_artifact(run.gate.embedding_dim, run.gate.hidden)))},
      {"teacher", complexity_json(router_complexity(
                      teacher_artifact(run.teacher.embedding_dim, run.teacher.hidden, run.teacher.model_ids.size())))},
      {"knn", complexity_json(router_complexity(knn_artifact(knn.train_size(), knn.dim())))}};
  publish(cfg, "sweep", paths.summary, summary.dump(2) + "\n", inputs);
}

void run_pipeline(const RunConfig& cfg, const ArtifactPaths& paths) {
  cmd_gen_data(cfg, paths);
  cmd_train_teacher(cfg, paths);
  cmd_train_gate(cfg, paths);
  cmd_calibrate(cfg, paths);
  cmd_sweep(cfg, paths);
}

}  // namespace cr2
