#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "cr2/calibration.hpp"
#include "cr2/config.hpp"
#include "cr2/dataset.hpp"
#include "cr2/margin_gate.hpp"
#include "cr2/router_eval.hpp"
#include "cr2/teacher.hpp"

namespace cr2 {

// Stable process exit codes.
enum ExitCode : int {
  exit_ok = 0,
  exit_failure = 1,
  exit_invalid_config = 2,
  exit_missing_file = 3,
  exit_hash_mismatch = 4,
  exit_invalid_data = 5,
};

// Maps the exception currently being handled to its exit code.
int exit_code_for_current_exception();

// Artifact locations; defaults live side by side in one output directory.
struct ArtifactPaths {
  std::filesystem::path dataset;
  std::filesystem::path teacher;
  std::filesystem::path gate;
  std::filesystem::path table;
  std::filesystem::path sweep;
  std::filesystem::path envelope;
  std::filesystem::path curves;
  std::filesystem::path summary;

  static ArtifactPaths in(const std::filesystem::path& dir);
};

std::filesystem::path sidecar_path(const std::filesystem::path& artifact);

// Reads an artifact and checks its bytes against the sha256 recorded in its
// sidecar. Missing files raise ArtifactError::missing_file, a differing digest
// ArtifactError::hash_mismatch.
struct VerifiedInput {
  std::string bytes;
  std::string sha256;
};
VerifiedInput read_verified(const std::filesystem::path& artifact);

void cmd_gen_data(const RunConfig& cfg, const ArtifactPaths& paths);
void cmd_train_teacher(const RunConfig& cfg, const ArtifactPaths& paths);
void cmd_train_gate(const RunConfig& cfg, const ArtifactPaths& paths);
void cmd_calibrate(const RunConfig& cfg, const ArtifactPaths& paths);
void cmd_sweep(const RunConfig& cfg, const ArtifactPaths& paths);
// All five stages in order.
void run_pipeline(const RunConfig& cfg, const ArtifactPaths& paths);

// Frozen artifacts of a finished run, verified and decoded.
struct LoadedRun {
  RoutingDataset dataset;
  std::string dataset_hash;
  TeacherParams teacher;
  std::string teacher_hash;
  GateParams gate;
  std::string gate_hash;
  CalibratedTable table;
  std::string table_hash;
};
LoadedRun load_run(const RunConfig& cfg, const ArtifactPaths& paths, bool with_table = true);

}  // namespace cr2
