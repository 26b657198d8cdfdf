#include "lbwm/nn/serialize.hpp"

#include <bit>
#include <cstring>

namespace lbwm::nn {

std::uint64_t fnv1a64(std::span<const char> bytes, std::uint64_t seed) {
  std::uint64_t h = seed;
  for (char c : bytes) {
    h ^= static_cast<std::uint8_t>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

void BinaryWriter::write_u32(std::uint32_t v) {
  for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}

void BinaryWriter::write_u64(std::uint64_t v) {
  for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}

void BinaryWriter::write_f64(double v) { write_u64(std::bit_cast<std::uint64_t>(v)); }

void BinaryWriter::write_string(const std::string& s) {
  write_u64(s.size());
  buf_.append(s);
}

void BinaryWriter::write_matrix(const Matrix& m) {
  write_u64(static_cast<std::uint64_t>(m.rows()));
  write_u64(static_cast<std::uint64_t>(m.cols()));
  if constexpr (std::endian::native == std::endian::little) {
    buf_.append(reinterpret_cast<const char*>(m.data()), static_cast<std::size_t>(m.size()) * sizeof(double));
  } else {
    for (Index i = 0; i < m.size(); ++i) write_f64(m.data()[i]);
  }
}

void BinaryReader::need(std::size_t n) const {
  if (n > remaining())
    throw CorruptData("truncated data: need " + std::to_string(n) + " bytes at offset " + std::to_string(pos_) +
                      ", have " + std::to_string(remaining()));
}

std::uint32_t BinaryReader::read_u32() {
  need(4);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<std::uint8_t>(bytes_[pos_ + i])) << (8 * i);
  pos_ += 4;
  return v;
}

std::uint64_t BinaryReader::read_u64() {
  need(8);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<std::uint8_t>(bytes_[pos_ + i])) << (8 * i);
  pos_ += 8;
  return v;
}

double BinaryReader::read_f64() { return std::bit_cast<double>(read_u64()); }

std::string BinaryReader::read_string() {
  const std::uint64_t n = read_u64();
  need(n);
  std::string s(bytes_.data() + pos_, n);
  pos_ += n;
  return s;
}

Matrix BinaryReader::read_matrix() {
  const std::uint64_t rows = read_u64();
  const std::uint64_t cols = read_u64();
  if (rows > (1ULL << 32) || cols > (1ULL << 32)) throw CorruptData("implausible matrix shape");
  const std::uint64_t count = rows * cols;
  need(count * sizeof(double));
  Matrix m(static_cast<Index>(rows), static_cast<Index>(cols));
  if constexpr (std::endian::native == std::endian::little) {
    std::memcpy(m.data(), bytes_.data() + pos_, count * sizeof(double));
    pos_ += count * sizeof(double);
  } else {
    for (std::uint64_t i = 0; i < count; ++i) m.data()[i] = read_f64();
  }
  return m;
}

void write_tensor_container(BinaryWriter& w, const TensorMap& tensors) {
  w.write_u32(kTensorContainerVersion);
  w.write_u64(tensors.size());
  for (const auto& [name, m] : tensors) {
    w.write_string(name);
    w.write_matrix(m);
  }
}

TensorMap read_tensor_container(BinaryReader& r) {
  const std::uint32_t version = r.read_u32();
  if (version != kTensorContainerVersion)
    throw CorruptData("tensor container version " + std::to_string(version) + " unsupported (expected " +
                      std::to_string(kTensorContainerVersion) + ")");
  const std::uint64_t n = r.read_u64();
  TensorMap out;
  for (std::uint64_t i = 0; i < n; ++i) {
    std::string name = r.read_string();
    out.emplace(std::move(name), r.read_matrix());
  }
  return out;
}

}  // namespace lbwm::nn
