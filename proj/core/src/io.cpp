#include "sda/io.hpp"

#include <bit>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "sda/error.hpp"

namespace sda {

void ByteWriter::u16(std::uint16_t v) {
  for (int i = 0; i < 2; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
}
void ByteWriter::u32(std::uint32_t v) {
  for (int i = 0; i < 4; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
}
void ByteWriter::u64(std::uint64_t v) {
  for (int i = 0; i < 8; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
}
void ByteWriter::f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
void ByteWriter::f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }

void ByteReader::need(std::size_t n) const {
  if (pos_ + n > bytes_.size()) throw FormatError("unexpected end of container");
}
std::uint8_t ByteReader::u8() {
  need(1);
  return static_cast<std::uint8_t>(bytes_[pos_++]);
}
std::uint16_t ByteReader::u16() {
  std::uint16_t v = 0;
  for (int i = 0; i < 2; ++i) v |= static_cast<std::uint16_t>(u8()) << (8 * i);
  return v;
}
std::uint32_t ByteReader::u32() {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(u8()) << (8 * i);
  return v;
}
std::uint64_t ByteReader::u64() {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(u8()) << (8 * i);
  return v;
}
float ByteReader::f32() { return std::bit_cast<float>(u32()); }
double ByteReader::f64() { return std::bit_cast<double>(u64()); }
std::string ByteReader::raw(std::size_t n) {
  need(n);
  std::string s = bytes_.substr(pos_, n);
  pos_ += n;
  return s;
}

std::string encode_fields(std::span<const StateField> frames, DType dtype) {
  if (frames.empty()) throw ShapeError("field container needs at least one frame");
  const GridSpec& spec = frames.front().spec();
  ByteWriter w;
  w.raw("SDAF");
  w.u16(kFieldContainerVersion);
  w.u32(static_cast<std::uint32_t>(spec.ny));
  w.u32(static_cast<std::uint32_t>(spec.nx));
  w.u32(static_cast<std::uint32_t>(spec.n_vars));
  w.u32(static_cast<std::uint32_t>(frames.size()));
  w.u8(static_cast<std::uint8_t>(dtype));
  for (const auto& f : frames) {
    if (!f.spec().same_layout(spec)) throw ShapeError("field container frames differ in shape");
    for (double v : f.values()) {
      if (dtype == DType::f32) {
        w.f32(static_cast<float>(v));
      } else {
        w.f64(v);
      }
    }
  }
  return w.take();
}

std::vector<StateField> decode_fields(const std::string& bytes, int patch) {
  ByteReader r(bytes);
  if (r.raw(4) != "SDAF") throw FormatError("not a field container (bad magic)");
  const auto version = r.u16();
  if (version != kFieldContainerVersion) {
    throw FormatError("unsupported field container version " + std::to_string(version));
  }
  const int ny = static_cast<int>(r.u32());
  const int nx = static_cast<int>(r.u32());
  const int n_vars = static_cast<int>(r.u32());
  const int K = static_cast<int>(r.u32());
  const auto tag = r.u8();
  if (tag != 4 && tag != 8) throw FormatError("unknown dtype tag " + std::to_string(tag));
  const GridSpec spec = make_grid(ny, nx, n_vars, patch, K);
  std::vector<StateField> frames;
  frames.reserve(static_cast<std::size_t>(K));
  for (int k = 0; k < K; ++k) {
    std::vector<double> values(spec.size());
    for (double& v : values) v = tag == 4 ? static_cast<double>(r.f32()) : r.f64();
    frames.emplace_back(spec, std::move(values));
  }
  if (!r.done()) throw FormatError("trailing bytes after field payload");
  return frames;
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write " + path.string());
  out << text;
}

void write_fields(const std::filesystem::path& path, std::span<const StateField> frames,
                  DType dtype) {
  write_text(path, encode_fields(frames, dtype));
}

std::vector<StateField> read_fields(const std::filesystem::path& path, int patch) {
  return decode_fields(read_text(path), patch);
}

void write_field_csv(const std::filesystem::path& path, const StateField& field) {
  const GridSpec& spec = field.spec();
  if (spec.ny > kMaxCsvEdge || spec.nx > kMaxCsvEdge) {
    throw ConfigError("CSV export is limited to 64x64 grids");
  }
  std::ostringstream ss;
  ss << "var,row,col,value\n" << std::setprecision(17);
  for (int v = 0; v < spec.n_vars; ++v) {
    for (int r = 0; r < spec.ny; ++r) {
      for (int c = 0; c < spec.nx; ++c) ss << v << ',' << r << ',' << c << ',' << field.at(v, r, c) << '\n';
    }
  }
  write_text(path, ss.str());
}

}  // namespace sda
