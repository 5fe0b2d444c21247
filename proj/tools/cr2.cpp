// Command-line driver for the two-stage routing pipeline.
#include <CLI11.hpp>

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "cr2/acceptance.hpp"
#include "cr2/config.hpp"
#include "cr2/pipeline.hpp"

namespace fs = std::filesystem;

namespace {

struct Options {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out_dir = "out";
  std::string data;
  std::string teacher;
  std::string gate;
  std::string table;
};

cr2::RunConfig resolve_config(const Options& o) {
  cr2::RunConfig cfg = cr2::load_config(o.config_path);
  if (o.seed) {
    cfg.seed = *o.seed;
    cfg.validate();
  }
  return cfg;
}

cr2::ArtifactPaths resolve_paths(const Options& o) {
  auto p = cr2::ArtifactPaths::in(o.out_dir);
  if (!o.data.empty()) p.dataset = o.data;
  if (!o.teacher.empty()) p.teacher = o.teacher;
  if (!o.gate.empty()) p.gate = o.gate;
  if (!o.table.empty()) p.table = o.table;
  return p;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"cr2: device-edge LLM routing with a calibrated local-acceptance gate"};
  app.require_subcommand(1);
  Options opt;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", opt.config_path, "INI run configuration")->required()->check(CLI::ExistingFile);
    sub->add_option("--seed", opt.seed, "override the configured seed");
    sub->add_option("--out", opt.out_dir, "output directory")->capture_default_str();
  };
  auto add_inputs = [&](CLI::App* sub, bool teacher, bool gate, bool table) {
    sub->add_option("--data", opt.data, "dataset file (default: <out>/dataset.csv)");
    if (teacher) sub->add_option("--teacher", opt.teacher, "teacher checkpoint (default: <out>/teacher.bin)");
    if (gate) sub->add_option("--gate", opt.gate, "gate checkpoint (default: <out>/gate.bin)");
    if (table) sub->add_option("--table", opt.table, "threshold table (default: <out>/thresholds.csv)");
  };

  auto* gen = app.add_subcommand("gen-data", "generate or ingest the routing dataset");
  add_common(gen);
  gen->add_option("--data", opt.data, "dataset output path (default: <out>/dataset.csv)");
  auto* teach = app.add_subcommand("train-teacher", "train the per-model correctness teacher");
  add_common(teach);
  add_inputs(teach, false, false, false);
  auto* gate = app.add_subcommand("train-gate", "distil the margin gate from the frozen teacher");
  add_common(gate);
  add_inputs(gate, true, false, false);
  auto* cal = app.add_subcommand("calibrate", "calibrate per-lambda acceptance thresholds");
  add_common(cal);
  add_inputs(cal, true, true, false);
  auto* sweep = app.add_subcommand("sweep", "evaluate the operating-point sweep and baselines");
  add_common(sweep);
  add_inputs(sweep, true, true, true);
  auto* run = app.add_subcommand("run", "run every stage in order");
  add_common(run);
  auto* verify = app.add_subcommand("verify", "run the pipeline twice and check acceptance criteria A1-A9");
  add_common(verify);
  auto* show = app.add_subcommand("show-config", "print the resolved configuration");
  add_common(show);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? cr2::exit_ok : cr2::exit_invalid_config;
  }

  try {
    const cr2::RunConfig cfg = resolve_config(opt);
    const auto paths = resolve_paths(opt);
    if (*gen) {
      cr2::cmd_gen_data(cfg, paths);
    } else if (*teach) {
      cr2::cmd_train_teacher(cfg, paths);
    } else if (*gate) {
      cr2::cmd_train_gate(cfg, paths);
    } else if (*cal) {
      cr2::cmd_calibrate(cfg, paths);
    } else if (*sweep) {
      cr2::cmd_sweep(cfg, paths);
    } else if (*run) {
      cr2::run_pipeline(cfg, paths);
    } else if (*show) {
      std::cout << cfg.resolved();
    } else if (*verify) {
      bool all = true;
      cr2::run_acceptance(cfg, opt.out_dir, [&](const cr2::CriterionResult& r) {
        all = all && r.passed;
        std::cout << cr2::format_result(r) << std::endl;
      });
      return all ? cr2::exit_ok : cr2::exit_failure;
    }
  } catch (const std::exception& e) {
    const int code = cr2::exit_code_for_current_exception();
    std::cerr << "cr2: " << e.what() << "\n";
    return code;
  }
  return cr2::exit_ok;
}
