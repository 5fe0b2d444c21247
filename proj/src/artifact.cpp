#include "cr2/artifact.hpp"

#include <openssl/evp.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

namespace cr2 {

static_assert(std::endian::native == std::endian::little, "checkpoint encoding assumes a little-endian host");

std::string sha256_hex(std::string_view data) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw std::runtime_error("sha256 computation failed");
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string hex;
  hex.reserve(2 * len);
  for (unsigned int i = 0; i < len; ++i) {
    hex += kHex[digest[i] >> 4];
    hex += kHex[digest[i] & 0xf];
  }
  return hex;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ArtifactError(ArtifactError::Kind::missing_file, "missing file: " + path.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& path, std::string_view content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("cannot open " + path.string() + " for writing");
  f.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!f) throw std::runtime_error("write failed for " + path.string());
}

void BinaryWriter::u32(std::uint32_t v) { out_.append(reinterpret_cast<const char*>(&v), sizeof v); }
void BinaryWriter::u64(std::uint64_t v) { out_.append(reinterpret_cast<const char*>(&v), sizeof v); }
void BinaryWriter::f64(double v) { out_.append(reinterpret_cast<const char*>(&v), sizeof v); }

void BinaryWriter::str(std::string_view s) {
  u64(s.size());
  out_.append(s);
}

void BinaryWriter::tensor(const Tensor2& t) {
  u64(t.rows());
  u64(t.cols());
  for (double v : t.values()) f64(v);
}

std::string_view BinaryReader::take(std::size_t n) {
  if (n > in_.size() - pos_) throw ArtifactError(ArtifactError::Kind::malformed, "truncated binary artifact");
  auto out = in_.substr(pos_, n);
  pos_ += n;
  return out;
}

std::uint32_t BinaryReader::u32() {
  std::uint32_t v;
  std::memcpy(&v, take(sizeof v).data(), sizeof v);
  return v;
}

std::uint64_t BinaryReader::u64() {
  std::uint64_t v;
  std::memcpy(&v, take(sizeof v).data(), sizeof v);
  return v;
}

double BinaryReader::f64() {
  double v;
  std::memcpy(&v, take(sizeof v).data(), sizeof v);
  return v;
}

std::string BinaryReader::str() {
  const auto n = u64();
  return std::string(take(n));
}

Tensor2 BinaryReader::tensor() {
  const auto rows = u64();
  const auto cols = u64();
  if (cols != 0 && rows > (in_.size() - pos_) / sizeof(double) / cols) {
    throw ArtifactError(ArtifactError::Kind::malformed, "tensor larger than artifact");
  }
  Tensor2 t(rows, cols);
  for (auto& v : t.values()) v = f64();
  if (!t.all_finite()) throw ArtifactError(ArtifactError::Kind::malformed, "non-finite tensor entry");
  return t;
}

Tensor2 BinaryReader::tensor(std::size_t rows, std::size_t cols) {
  Tensor2 t = tensor();
  if (t.rows() != rows || t.cols() != cols) throw ArtifactError(ArtifactError::Kind::malformed, "tensor shape mismatch");
  return t;
}

}  // namespace cr2
