#include "sda/field.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "sda/error.hpp"

namespace sda {

GridSpec make_grid(int ny, int nx, int n_vars, int patch, int K) {
  if (ny < 1 || nx < 1 || n_vars < 1 || K < 1 || patch < 1) {
    throw ConfigError("grid dimensions, n_vars, patch and K must all be >= 1");
  }
  if (ny % patch != 0 || nx % patch != 0) {
    throw ConfigError("patch " + std::to_string(patch) + " does not divide grid " +
                      std::to_string(ny) + "x" + std::to_string(nx));
  }
  return GridSpec{ny, nx, n_vars, patch, K};
}

StateField::StateField(const GridSpec& spec, double fill)
    : spec_(spec), values_(spec.size(), fill) {}

StateField::StateField(const GridSpec& spec, std::vector<double> values)
    : spec_(spec), values_(std::move(values)) {
  if (values_.size() != spec_.size()) {
    throw ShapeError("field payload has " + std::to_string(values_.size()) +
                     " values, grid expects " + std::to_string(spec_.size()));
  }
}

bool StateField::all_finite() const {
  return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
}

TemporalContext::TemporalContext(std::vector<StateField> frames)
    : TemporalContext(std::move(frames), {}, {}) {}

TemporalContext::TemporalContext(std::vector<StateField> frames, std::vector<double> calendar,
                                 std::vector<std::uint8_t> mask)
    : frames_(std::move(frames)), calendar_(std::move(calendar)), mask_(std::move(mask)) {
  for (const auto& f : frames_) {
    if (!f.spec().same_layout(frames_.front().spec())) {
      throw ShapeError("temporal context frames do not share one grid");
    }
  }
  if (calendar_.empty()) {
    calendar_.resize(frames_.size());
    for (std::size_t k = 0; k < frames_.size(); ++k) calendar_[k] = static_cast<double>(k);
  }
  if (mask_.empty()) mask_.assign(frames_.size(), 1);
  if (calendar_.size() != frames_.size() || mask_.size() != frames_.size()) {
    throw ShapeError("calendar/mask length must equal the number of frames");
  }
}

TokenGrid patchify(const StateField& field, const GridSpec& spec) {
  if (!field.spec().same_layout(spec)) throw ShapeError("patchify: field does not match grid");
  const int p = spec.patch;
  TokenGrid out{spec.tokens(), spec.token_width(), {}};
  out.data.resize(static_cast<std::size_t>(out.n_tokens) * out.width);
  const int tcols = spec.token_cols();
  for (int tr = 0; tr < spec.token_rows(); ++tr) {
    for (int tc = 0; tc < tcols; ++tc) {
      double* tok = out.data.data() + static_cast<std::size_t>(tr * tcols + tc) * out.width;
      for (int pr = 0; pr < p; ++pr) {
        for (int pc = 0; pc < p; ++pc) {
          for (int v = 0; v < spec.n_vars; ++v) {
            tok[(pr * p + pc) * spec.n_vars + v] = field.at(v, tr * p + pr, tc * p + pc);
          }
        }
      }
    }
  }
  return out;
}

StateField unpatchify(const TokenGrid& tokens, const GridSpec& spec) {
  if (tokens.n_tokens != spec.tokens() || tokens.width != spec.token_width() ||
      tokens.data.size() != static_cast<std::size_t>(tokens.n_tokens) * tokens.width) {
    throw ShapeError("unpatchify: token grid does not match grid spec");
  }
  const int p = spec.patch;
  StateField out(spec);
  const int tcols = spec.token_cols();
  for (int tr = 0; tr < spec.token_rows(); ++tr) {
    for (int tc = 0; tc < tcols; ++tc) {
      const double* tok = tokens.data.data() + static_cast<std::size_t>(tr * tcols + tc) * tokens.width;
      for (int pr = 0; pr < p; ++pr) {
        for (int pc = 0; pc < p; ++pc) {
          for (int v = 0; v < spec.n_vars; ++v) {
            out.at(v, tr * p + pr, tc * p + pc) = tok[(pr * p + pc) * spec.n_vars + v];
          }
        }
      }
    }
  }
  return out;
}

GridSpec crop_spec(const GridSpec& spec, const Region& region) {
  if (region.row0 < 0 || region.col0 < 0 || region.rows < 1 || region.cols < 1 ||
      region.row1() > spec.ny || region.col1() > spec.nx) {
    throw ShapeError("crop region outside the grid");
  }
  return make_grid(region.rows, region.cols, spec.n_vars, spec.patch, spec.K);
}

StateField crop(const StateField& field, const Region& region) {
  const GridSpec spec = crop_spec(field.spec(), region);
  StateField out(spec);
  for (int v = 0; v < spec.n_vars; ++v) {
    for (int r = 0; r < region.rows; ++r) {
      const double* src = &field.values()[field.index(v, region.row0 + r, region.col0)];
      std::copy(src, src + region.cols, &out.values()[out.index(v, r, 0)]);
    }
  }
  return out;
}

TemporalContext crop(const TemporalContext& ctx, const Region& region) {
  std::vector<StateField> frames;
  frames.reserve(ctx.frames().size());
  for (const auto& f : ctx.frames()) frames.push_back(crop(f, region));
  return TemporalContext(std::move(frames), ctx.calendar(), ctx.mask());
}

void require_same_shape(const StateField& a, const StateField& b, const char* what) {
  if (!a.spec().same_layout(b.spec()) || a.size() != b.size()) {
    throw ShapeError(std::string(what) + ": field shapes differ");
  }
}

StateField operator+(const StateField& a, const StateField& b) {
  require_same_shape(a, b, "operator+");
  StateField out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b[i];
  return out;
}

StateField operator-(const StateField& a, const StateField& b) {
  require_same_shape(a, b, "operator-");
  StateField out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b[i];
  return out;
}

StateField operator*(double s, const StateField& a) {
  StateField out = a;
  for (double& v : out.values()) v *= s;
  return out;
}

}  // namespace sda
