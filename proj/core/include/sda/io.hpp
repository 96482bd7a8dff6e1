#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "sda/field.hpp"

namespace sda {

enum class DType : std::uint8_t { f32 = 4, f64 = 8 };

inline constexpr std::uint16_t kFieldContainerVersion = 1;

/// Field container: "SDAF", u16 version, u32 ny, nx, n_vars, K, u8 dtype tag,
/// then the little-endian row-major payload [frame][var][row][col].
std::string encode_fields(std::span<const StateField> frames, DType dtype);
std::vector<StateField> decode_fields(const std::string& bytes, int patch = 1);

void write_fields(const std::filesystem::path& path, std::span<const StateField> frames,
                  DType dtype = DType::f64);
std::vector<StateField> read_fields(const std::filesystem::path& path, int patch = 1);

inline constexpr int kMaxCsvEdge = 64;

/// "var,row,col,value" export; refuses grids larger than 64x64.
void write_field_csv(const std::filesystem::path& path, const StateField& field);

std::string read_text(const std::filesystem::path& path);
void write_text(const std::filesystem::path& path, const std::string& text);

/// Little-endian primitive codec shared by the binary containers.
class ByteWriter {
 public:
  void u8(std::uint8_t v) { buf_.push_back(static_cast<char>(v)); }
  void u16(std::uint16_t v);
  void u32(std::uint32_t v);
  void u64(std::uint64_t v);
  void f32(float v);
  void f64(double v);
  void raw(const std::string& s) { buf_ += s; }
  std::string take() { return std::move(buf_); }

 private:
  std::string buf_;
};

class ByteReader {
 public:
  explicit ByteReader(const std::string& bytes) : bytes_(bytes) {}
  std::uint8_t u8();
  std::uint16_t u16();
  std::uint32_t u32();
  std::uint64_t u64();
  float f32();
  double f64();
  std::string raw(std::size_t n);
  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const;
  const std::string& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace sda
