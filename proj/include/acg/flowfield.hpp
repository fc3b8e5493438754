#pragma once

/**
 * Patch-pair field inpainting on Gaussian random fields.
 *
 * A frame of width W is cut into P = W / patch_w vertical patches; every
 * adjacent pair (i, i+1) has an exact Gaussian joint taken from the full-grid
 * covariance. A corrupted patch is reconstructed by co-generating it from its
 * left and/or right neighbor pairs, with all known pixels clamped.
 */

#include <cstdint>
#include <iosfwd>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "acg/consensus.hpp"
#include "acg/diffusion.hpp"
#include "acg/schedules.hpp"
#include "acg/score_models.hpp"

namespace acg::field {

/// H x W x C reals, row-major with channels last.
class FieldGrid {
 public:
  FieldGrid(int height, int width, int channels);
  FieldGrid(int height, int width, int channels, std::vector<double> values);

  int height() const noexcept { return height_; }
  int width() const noexcept { return width_; }
  int channels() const noexcept { return channels_; }
  const std::vector<double>& values() const noexcept { return values_; }

  double& at(int y, int x, int c) { return values_[offset(y, x, c)]; }
  double at(int y, int x, int c) const { return values_[offset(y, x, c)]; }

  /// One channel as a vector indexed by pixel y * W + x.
  Vector channel(int c) const;
  void set_channel(int c, const Vector& v);

  bool same_shape(const FieldGrid& o) const {
    return height_ == o.height_ && width_ == o.width_ && channels_ == o.channels_;
  }
  bool operator==(const FieldGrid&) const = default;

 private:
  std::size_t offset(int y, int x, int c) const {
    return (static_cast<std::size_t>(y) * width_ + x) * channels_ + c;
  }

  int height_;
  int width_;
  int channels_;
  std::vector<double> values_;
};

/// Squared-exponential kernel over pixel coordinates.
struct GRFSpec {
  double length_scale = 2.0;
  double variance = 1.0;
  double nugget = 1e-4;
};

void validate(const GRFSpec& spec);

/// Largest grid (H * W pixels) for which dense covariances are built.
inline constexpr int kMaxPixels = 4096;

class PatchLayout {
 public:
  /// Throws InvalidRange unless W is divisible by patch_w and P >= 2.
  PatchLayout(int width, int patch_w);

  int width() const noexcept { return width_; }
  int patch_w() const noexcept { return patch_w_; }
  int count() const noexcept { return width_ / patch_w_; }
  int pairs() const noexcept { return count() - 1; }
  int patch_of_column(int x) const { return x / patch_w_; }

 private:
  int width_;
  int patch_w_;
};

/// Pixel indices (y * W + x) of patch p, row-major within the patch.
IndexSet patch_pixels(const PatchLayout& layout, int height, int patch);

/// true = corrupted / unknown.
class CorruptionMask {
 public:
  CorruptionMask(int height, int width);
  CorruptionMask(int height, int width, std::vector<std::uint8_t> bits);

  int height() const noexcept { return height_; }
  int width() const noexcept { return width_; }
  bool operator()(int y, int x) const { return bits_[static_cast<std::size_t>(y) * width_ + x] != 0; }
  void set(int y, int x, bool v) { bits_[static_cast<std::size_t>(y) * width_ + x] = v ? 1 : 0; }
  bool any() const;
  std::size_t count() const;
  const std::vector<std::uint8_t>& bits() const noexcept { return bits_; }
  bool operator==(const CorruptionMask&) const = default;

 private:
  int height_;
  int width_;
  std::vector<std::uint8_t> bits_;
};

struct BlockPattern {
  int x0 = 0;
  int y0 = 0;
  int w = 0;
  int h = 0;
};

/// n rectangles with widths in [1, max(1, W/4)] and heights in [1, max(1, H/2)],
/// drawn from RngStream(seed).
struct RandomRectsPattern {
  int n = 0;
  std::uint64_t seed = 0;
};

/// Columns [col_lo, col_hi] inclusive, full height.
struct StripePattern {
  int col_lo = 0;
  int col_hi = 0;
};

using CorruptionPattern = std::variant<BlockPattern, RandomRectsPattern, StripePattern>;

/// Throws OutOfBounds for patterns outside the grid or ones that leave no known pixel.
CorruptionMask make_mask(const CorruptionPattern& pattern, int height, int width);

/// Zeroes the corrupted pixels (all channels) and returns the mask.
std::pair<FieldGrid, CorruptionMask> corrupt(const FieldGrid& field, const CorruptionPattern& pattern);

/// K[p, q] = variance * exp(-|p - q|^2 / (2 l^2)) + nugget [p == q]. Throws SizeCap.
Matrix grf_covariance(const GRFSpec& spec, int height, int width);

/// Independent N(0, K) draw per channel.
FieldGrid sample_grf(const GRFSpec& spec, int height, int width, int channels, RngStream& rng);

/// Which patch of pair (i, i+1) plays the context.
enum class PairOrientation { LeftContext, RightContext };

/// Exact joint over [context pixels, subject pixels] of patches (i, i+1).
/// Throws IndexOutOfRange for pair_index outside [0, P-1).
GaussianScoreModel pair_joint(const GRFSpec& spec, const PatchLayout& layout, int pair_index, int height,
                              PairOrientation orientation = PairOrientation::LeftContext);

enum class Neighbors { Both, Single };

struct InpaintOptions {
  SchedulePreset preset = acg::preset(PresetName::ACG, 200);
  NoiseSchedule sched = default_schedule(200);
  ConsensusOperator consensus = MeanConsensus{};
  std::uint64_t seed = 0;
  /// Single uses only the left neighbor (the right one at the left edge).
  Neighbors neighbors = Neighbors::Both;
};

/// Co-generative patch inpainting. Corrupted patches are processed left to
/// right; a reconstructed patch counts as known for the patches after it.
/// Unmasked pixels are returned bit-for-bit. Throws UnreconstructablePatch.
FieldGrid inpaint_acg(const FieldGrid& field, const CorruptionMask& mask, const GRFSpec& spec,
                      const PatchLayout& layout, const InpaintOptions& options);

/// GP posterior mean of the corrupted pixels given every known pixel.
FieldGrid exact_posterior(const FieldGrid& field, const CorruptionMask& mask, const GRFSpec& spec);

struct FieldMetrics {
  double mse = 0.0;
  double psnr = 0.0;  // +inf when mse == 0
  double ssim = 0.0;
};

/// MSE over all entries; PSNR with peak = dynamic range of ref; SSIM with a
/// 7x7 Gaussian window (sigma 1.5, shrunk to the grid if smaller), K1 = 0.01,
/// K2 = 0.03, L = dynamic range of ref, averaged over valid windows and channels.
FieldMetrics metrics(const FieldGrid& ref, const FieldGrid& rec);

// .fgrid: "H W C" then row-major channel-last values; .fmask: "H W 1" then 0/1.
void write_fgrid(std::ostream& os, const FieldGrid& g);
FieldGrid read_fgrid(std::istream& is);
void write_fmask(std::ostream& os, const CorruptionMask& m);
CorruptionMask read_fmask(std::istream& is);

}  // namespace acg::field
