#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>

#include "cr2/artifact.hpp"
#include "cr2/config.hpp"

namespace fs = std::filesystem;

namespace {

std::string read_all(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void write_all(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

fs::path work_root() {
  static const fs::path root = [] {
    const fs::path r = fs::temp_directory_path() / "cr2_pipeline_test";
    fs::remove_all(r);
    fs::create_directories(r);
    return r;
  }();
  return root;
}

// The bundled configuration shrunk to a few seconds of work.
fs::path small_config() {
  const fs::path p = work_root() / "small.ini";
  if (fs::exists(p)) return p;
  std::string text = read_all(fs::path(CR2_SOURCE_DIR) / "configs" / "default.ini");
  auto set = [&](const std::string& section, const std::string& key, const std::string& value) {
    const auto s = text.find("[" + section + "]");
    REQUIRE(s != std::string::npos);
    const auto k = text.find("\n" + key + " = ", s);
    REQUIRE(k != std::string::npos);
    const auto end = text.find('\n', k + 1);
    text.replace(k + 1, end - k - 1, key + " = " + value);
  };
  set("dataset", "n_queries", "1500");
  set("dataset", "embedding_dim", "8");
  set("cost", "reference_sample", "500");
  set("teacher", "hidden", "16");
  set("teacher", "epochs", "2");
  set("gate", "hidden", "16");
  set("gate", "epochs", "2");
  set("calibration", "lambda_points", "4");
  write_all(p, text);
  return p;
}

int cli(const std::string& args) {
  const std::string cmd = std::string(CR2_CLI) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  REQUIRE(status != -1);
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string quoted(const fs::path& p) { return "'" + p.string() + "'"; }

fs::path fresh_run(const std::string& name) {
  const fs::path dir = work_root() / name;
  fs::remove_all(dir);
  REQUIRE(cli("run --config " + quoted(small_config()) + " --out " + quoted(dir)) == 0);
  return dir;
}

}  // namespace

TEST_CASE("run writes every artifact with a sidecar") {
  const auto dir = fresh_run("a");
  for (const char* f : {"dataset.csv", "teacher.bin", "gate.bin", "thresholds.csv", "sweep.csv", "envelope.csv",
                        "curves.csv", "summary.json"}) {
    CAPTURE(f);
    CHECK(fs::exists(dir / f));
  }
  for (const char* f : {"dataset.csv", "teacher.bin", "gate.bin", "thresholds.csv"}) {
    CAPTURE(f);
    const auto meta = read_all(dir / (std::string(f) + ".meta.json"));
    CHECK(meta.find(cr2::sha256_hex(read_all(dir / f))) != std::string::npos);
  }
  const auto sweep = read_all(dir / "sweep.csv");
  CHECK(sweep.rfind("lambda,alpha,accuracy,mean_cost,fa_risk,local_rate,false_defer,false_accept\n", 0) == 0);
}

TEST_CASE("same seed and config give byte-identical artifacts") {
  const auto a = fresh_run("det1");
  const auto b = fresh_run("det2");
  std::size_t compared = 0;
  for (const auto& entry : fs::directory_iterator(a)) {
    const auto name = entry.path().filename();
    CAPTURE(name.string());
    REQUIRE(fs::exists(b / name));
    CHECK(read_all(a / name) == read_all(b / name));
    ++compared;
  }
  CHECK(compared >= 8);

  const fs::path c = work_root() / "det3";
  fs::remove_all(c);
  REQUIRE(cli("gen-data --config " + quoted(small_config()) + " --seed 7 --out " + quoted(c)) == 0);
  CHECK(read_all(c / "dataset.csv") != read_all(a / "dataset.csv"));
}

TEST_CASE("downstream stages refuse tampered or missing inputs") {
  const auto cfg = quoted(small_config());
  const fs::path dir = work_root() / "tamper";
  fs::remove_all(dir);
  REQUIRE(cli("gen-data --config " + cfg + " --out " + quoted(dir)) == 0);
  REQUIRE(cli("train-teacher --config " + cfg + " --out " + quoted(dir)) == 0);
  REQUIRE(cli("train-gate --config " + cfg + " --out " + quoted(dir)) == 0);

  auto teacher = read_all(dir / "teacher.bin");
  const auto original = teacher;
  teacher[teacher.size() / 2] = static_cast<char>(teacher[teacher.size() / 2] ^ 0x01);
  write_all(dir / "teacher.bin", teacher);
  CHECK(cli("train-gate --config " + cfg + " --out " + quoted(dir)) == 4);
  CHECK(cli("calibrate --config " + cfg + " --out " + quoted(dir)) == 4);
  write_all(dir / "teacher.bin", original);
  CHECK(cli("calibrate --config " + cfg + " --out " + quoted(dir)) == 0);

  CHECK(cli("train-teacher --config " + cfg + " --out " + quoted(dir) + " --data " + quoted(dir / "nope.csv")) == 3);
  fs::remove(dir / "gate.bin");
  CHECK(cli("calibrate --config " + cfg + " --out " + quoted(dir)) == 3);
}

TEST_CASE("malformed artifacts with a consistent hash are invalid data") {
  const auto cfg = quoted(small_config());
  const auto dir = fresh_run("malformed");
  const auto table = dir / "thresholds.csv";
  const auto meta_path = dir / "thresholds.csv.meta.json";
  const std::string old_hash = cr2::sha256_hex(read_all(table));
  const std::string garbage = "# cr2 threshold table v1\nnot a table\n";
  std::string meta = read_all(meta_path);
  const auto at = meta.find(old_hash);
  REQUIRE(at != std::string::npos);
  meta.replace(at, old_hash.size(), cr2::sha256_hex(garbage));
  write_all(table, garbage);
  write_all(meta_path, meta);
  CHECK(cli("sweep --config " + cfg + " --out " + quoted(dir)) == 5);

  const fs::path bad_data = work_root() / "bad_data";
  fs::create_directories(bad_data);
  const std::string csv = "id,split,l_in,emb_0,y_a,lout_a\n0,train,10,0.5,3,20\n";
  write_all(bad_data / "dataset.csv", csv);
  write_all(bad_data / "dataset.csv.meta.json", "{\"output\": {\"sha256\": \"" + cr2::sha256_hex(csv) + "\"}}\n");
  CHECK(cli("train-teacher --config " + cfg + " --out " + quoted(bad_data)) == 5);
}

TEST_CASE("configuration errors") {
  const fs::path dir = work_root() / "cfg";
  fs::create_directories(dir);
  const auto base = read_all(small_config());
  write_all(dir / "unknown.ini", base + "\n[teacher]\nhiden = 3\n");
  CHECK(cli("show-config --config " + quoted(dir / "unknown.ini")) == 2);
  write_all(dir / "bad.ini", "[run]\nseed = twelve\n");
  CHECK(cli("show-config --config " + quoted(dir / "bad.ini")) == 2);
  CHECK(cli("show-config --config " + quoted(small_config())) == 0);
  CHECK(cli("show-config --config " + quoted(dir / "absent.ini")) != 0);

  CHECK_THROWS_AS(cr2::parse_config("[teacher]\nepochs = -1\n"), cr2::ConfigError);
  CHECK_THROWS_AS(cr2::parse_config("[nonsense]\nx = 1\n"), cr2::ConfigError);
  const auto cfg = cr2::parse_config(base);
  CHECK(cfg.seed == 20240611u);
  CHECK(cfg.hash() == cr2::parse_config(base).hash());
}
