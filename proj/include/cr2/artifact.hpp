#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>

#include "cr2/numeric.hpp"

namespace cr2 {

class ArtifactError : public std::runtime_error {
 public:
  enum class Kind { missing_file, hash_mismatch, malformed };

  ArtifactError(Kind kind, const std::string& message) : std::runtime_error(message), kind_(kind) {}
  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

std::string sha256_hex(std::string_view data);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view content);

// Little-endian binary encoding for checkpoints.
class BinaryWriter {
 public:
  void u32(std::uint32_t v);
  void u64(std::uint64_t v);
  void f64(double v);
  void str(std::string_view s);
  void tensor(const Tensor2& t);
  const std::string& bytes() const noexcept { return out_; }

 private:
  std::string out_;
};

class BinaryReader {
 public:
  explicit BinaryReader(std::string_view in) : in_(in) {}

  std::uint32_t u32();
  std::uint64_t u64();
  double f64();
  std::string str();
  Tensor2 tensor();
  // Reads a tensor and checks its shape.
  Tensor2 tensor(std::size_t rows, std::size_t cols);
  bool done() const noexcept { return pos_ == in_.size(); }

 private:
  std::string_view take(std::size_t n);

  std::string_view in_;
  std::size_t pos_ = 0;
};

}  // namespace cr2
