#pragma once

#include <string>

#include "sda/field.hpp"

namespace sda {

/// The pluggable conditional denoiser D(z, sigma; ctx) ~ E[x | z, ctx].
///
/// `region` places z inside the full domain, so a denoiser evaluated on a tile
/// crop can look up position-dependent parameters; whole-field calls use
/// {0, 0, ny, nx}. Implementations must be deterministic and reentrant.
class Denoiser {
 public:
  virtual ~Denoiser() = default;

  StateField evaluate(const StateField& z, double sigma, const TemporalContext& ctx) const {
    return evaluate_region(z, sigma, ctx, whole(z));
  }
  /// Gradient of <D(z), cotangent> with respect to z.
  StateField vjp(const StateField& z, double sigma, const TemporalContext& ctx,
                 const StateField& cotangent) const {
    return vjp_region(z, sigma, ctx, cotangent, whole(z));
  }

  virtual StateField evaluate_region(const StateField& z, double sigma, const TemporalContext& ctx,
                                     const Region& region) const = 0;
  /// Default: throws CapabilityError.
  virtual StateField vjp_region(const StateField& z, double sigma, const TemporalContext& ctx,
                                const StateField& cotangent, const Region& region) const;

  virtual bool has_vjp() const { return false; }
  /// Each output cell depends only on the same input cell.
  virtual bool pointwise() const { return false; }
  virtual std::string name() const = 0;

  static Region whole(const StateField& z) { return {0, 0, z.spec().ny, z.spec().nx}; }
};

/// D(z) = z. Useful as a degenerate test double.
class IdentityDenoiser final : public Denoiser {
 public:
  StateField evaluate_region(const StateField& z, double, const TemporalContext&,
                             const Region&) const override {
    return z;
  }
  StateField vjp_region(const StateField&, double, const TemporalContext&,
                        const StateField& cotangent, const Region&) const override {
    return cotangent;
  }
  bool has_vjp() const override { return true; }
  bool pointwise() const override { return true; }
  std::string name() const override { return "identity"; }
};

}  // namespace sda
