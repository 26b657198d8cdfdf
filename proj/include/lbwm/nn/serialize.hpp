#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>

#include "lbwm/nn/tensor.hpp"

namespace lbwm::nn {

class CorruptData : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::uint64_t fnv1a64(std::span<const char> bytes, std::uint64_t seed = 0xcbf29ce484222325ULL);
inline std::uint64_t fnv1a64(const std::string& bytes) { return fnv1a64(std::span<const char>(bytes)); }

// Little-endian binary encoding, independent of host byte order.
class BinaryWriter {
 public:
  void write_u32(std::uint32_t v);
  void write_u64(std::uint64_t v);
  void write_i64(std::int64_t v) { write_u64(static_cast<std::uint64_t>(v)); }
  void write_f64(double v);
  void write_bool(bool v) { write_u32(v ? 1u : 0u); }
  void write_string(const std::string& s);
  void write_raw(std::span<const char> bytes) { buf_.append(bytes.data(), bytes.size()); }
  void write_matrix(const Matrix& m);

  const std::string& bytes() const { return buf_; }
  std::string take() { return std::move(buf_); }

 private:
  std::string buf_;
};

class BinaryReader {
 public:
  explicit BinaryReader(std::span<const char> bytes) : bytes_(bytes) {}

  std::uint32_t read_u32();
  std::uint64_t read_u64();
  std::int64_t read_i64() { return static_cast<std::int64_t>(read_u64()); }
  double read_f64();
  bool read_bool() { return read_u32() != 0; }
  std::string read_string();
  Matrix read_matrix();

  std::size_t position() const { return pos_; }
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  void need(std::size_t n) const;

  std::span<const char> bytes_;
  std::size_t pos_ = 0;
};

inline constexpr std::uint32_t kTensorContainerVersion = 1;

// Versioned container: u32 version, u64 count, then per entry
// (name, u64 rows, u64 cols, rows*cols f64) in sorted name order.
void write_tensor_container(BinaryWriter& w, const TensorMap& tensors);
TensorMap read_tensor_container(BinaryReader& r);

}  // namespace lbwm::nn
