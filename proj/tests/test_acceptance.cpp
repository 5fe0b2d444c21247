// Acceptance criteria A1-A9 on the bundled configuration, one line per criterion.
#include <filesystem>
#include <iostream>

#include "cr2/acceptance.hpp"
#include "cr2/config.hpp"

int main() {
  const std::filesystem::path work = std::filesystem::path(CR2_BINARY_DIR) / "acceptance_runs";
  const auto cfg = cr2::load_config(std::filesystem::path(CR2_SOURCE_DIR) / "configs" / "default.ini");
  bool all = true;
  std::size_t count = 0;
  cr2::run_acceptance(cfg, work, [&](const cr2::CriterionResult& r) {
    all = all && r.passed;
    ++count;
    std::cout << cr2::format_result(r) << std::endl;
  });
  if (count != 9) {
    std::cout << "expected 9 criteria, saw " << count << std::endl;
    return 1;
  }
  return all ? 0 : 1;
}
