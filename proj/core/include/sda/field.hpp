#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace sda {

/// Grid, variable and patch bookkeeping shared by every spatiotemporal array.
struct GridSpec {
  int ny = 1;
  int nx = 1;
  int n_vars = 1;
  int patch = 1;
  int K = 1;  // temporal context length (frames)

  int token_rows() const { return ny / patch; }
  int token_cols() const { return nx / patch; }
  /// Spatial tokens per frame.
  int tokens() const { return token_rows() * token_cols(); }
  /// Values per token (patch cells times variables).
  int token_width() const { return patch * patch * n_vars; }
  std::size_t cells() const { return static_cast<std::size_t>(ny) * nx; }
  std::size_t size() const { return cells() * n_vars; }

  /// Same spatial layout (K is allowed to differ).
  bool same_layout(const GridSpec& o) const {
    return ny == o.ny && nx == o.nx && n_vars == o.n_vars && patch == o.patch;
  }
  friend bool operator==(const GridSpec&, const GridSpec&) = default;
};

/// Validating constructor; throws ConfigError.
GridSpec make_grid(int ny, int nx, int n_vars, int patch, int K);

/// Axis-aligned cell rectangle [row0, row0+rows) x [col0, col0+cols).
struct Region {
  int row0 = 0;
  int col0 = 0;
  int rows = 0;
  int cols = 0;

  int row1() const { return row0 + rows; }
  int col1() const { return col0 + cols; }
  bool contains(int r, int c) const { return r >= row0 && r < row1() && c >= col0 && c < col1(); }
  friend bool operator==(const Region&, const Region&) = default;
};

/// A gridded state x (n_vars x ny x nx, row-major, variables slowest).
class StateField {
 public:
  StateField() = default;
  explicit StateField(const GridSpec& spec, double fill = 0.0);
  StateField(const GridSpec& spec, std::vector<double> values);

  const GridSpec& spec() const { return spec_; }
  std::size_t size() const { return values_.size(); }

  std::span<const double> values() const { return values_; }
  std::span<double> values() { return values_; }
  const std::vector<double>& vector() const { return values_; }

  std::size_t index(int v, int r, int c) const {
    return (static_cast<std::size_t>(v) * spec_.ny + r) * spec_.nx + c;
  }
  double at(int v, int r, int c) const { return values_[index(v, r, c)]; }
  double& at(int v, int r, int c) { return values_[index(v, r, c)]; }
  double operator[](std::size_t i) const { return values_[i]; }
  double& operator[](std::size_t i) { return values_[i]; }

  bool all_finite() const;

 private:
  GridSpec spec_;
  std::vector<double> values_;
};

/// Ordered historical frames x_{k-K..k-1}, oldest first.
///
/// `calendar` carries one calendar index per frame (defaults to the frame
/// position) and `mask` removes frames from temporal attention (1 = active).
/// An empty context is valid for context-free denoisers.
class TemporalContext {
 public:
  TemporalContext() = default;
  explicit TemporalContext(std::vector<StateField> frames);
  TemporalContext(std::vector<StateField> frames, std::vector<double> calendar,
                  std::vector<std::uint8_t> mask);

  int K() const { return static_cast<int>(frames_.size()); }
  bool empty() const { return frames_.empty(); }
  const std::vector<StateField>& frames() const { return frames_; }
  const StateField& frame(int k) const { return frames_.at(static_cast<std::size_t>(k)); }
  const std::vector<double>& calendar() const { return calendar_; }
  const std::vector<std::uint8_t>& mask() const { return mask_; }

 private:
  std::vector<StateField> frames_;
  std::vector<double> calendar_;
  std::vector<std::uint8_t> mask_;
};

/// Token matrix: tokens() rows of token_width() values.
struct TokenGrid {
  int n_tokens = 0;
  int width = 0;
  std::vector<double> data;  // row-major [token][offset]

  double at(int token, int offset) const {
    return data[static_cast<std::size_t>(token) * width + offset];
  }
};

/// Tokens are ordered row-major over the patch grid; inside a token the
/// offset is (row_in_patch * patch + col_in_patch) * n_vars + var.
TokenGrid patchify(const StateField& field, const GridSpec& spec);
StateField unpatchify(const TokenGrid& tokens, const GridSpec& spec);

/// Sub-field over `region` (same vars and patch; K kept).
StateField crop(const StateField& field, const Region& region);
TemporalContext crop(const TemporalContext& ctx, const Region& region);

/// Grid spec for a crop of `spec`; patch must divide the crop.
GridSpec crop_spec(const GridSpec& spec, const Region& region);

StateField operator+(const StateField& a, const StateField& b);
StateField operator-(const StateField& a, const StateField& b);
StateField operator*(double s, const StateField& a);

void require_same_shape(const StateField& a, const StateField& b, const char* what);

}  // namespace sda
