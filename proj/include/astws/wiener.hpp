#pragma once

#include <span>
#include <vector>

#include "astws/common.hpp"
#include "astws/stft.hpp"

namespace astws {

// Packed real layout of one frame's Wiener statistics (R, r) for m taps:
//   [ Re vec(R) | Im vec(R) | Re r | Im r ],  width 2 m^2 + 2 m,
// with vec() row-major. For a single frame, R = conj(x) x^T and
// r = conj(x) d, i.e. the normal equations of min |d - x^T h|^2.
struct StatsLayout {
  int taps = 0;

  size_t width() const { return 2 * square() + 2 * static_cast<size_t>(taps); }
  size_t square() const { return static_cast<size_t>(taps) * taps; }
  size_t re_matrix(int i, int j) const {
    return static_cast<size_t>(i) * taps + j;
  }
  size_t im_matrix(int i, int j) const { return square() + re_matrix(i, j); }
  size_t re_vector(int i) const { return 2 * square() + i; }
  size_t im_vector(int i) const { return 2 * square() + taps + i; }
};

// Rank-one statistics of tap vector x and mic sample d, packed into `row`.
void pack_instantaneous(std::span<const Complex> x, Complex d,
                        std::span<double> row);

// Inverse of the packing: R (m x m, row-major) and r (m).
void unpack_stats(std::span<const double> row, int taps, std::span<Complex> r_mat,
                  std::span<Complex> r_vec);

// Sliding-window autocorrelation / cross-correlation per bin and frame.
class WienerStats {
 public:
  WienerStats() = default;
  WienerStats(int bins, int frames, int taps, int window_frames);

  int bins() const { return bins_; }
  int frames() const { return frames_; }
  int taps() const { return taps_; }
  int window_frames() const { return window_frames_; }

  std::span<Complex> autocorr(int f, int t) {
    return {r_mat_.data() + mat_index(f, t), square()};
  }
  std::span<const Complex> autocorr(int f, int t) const {
    return {r_mat_.data() + mat_index(f, t), square()};
  }
  std::span<Complex> crosscorr(int f, int t) {
    return {r_vec_.data() + vec_index(f, t), static_cast<size_t>(taps_)};
  }
  std::span<const Complex> crosscorr(int f, int t) const {
    return {r_vec_.data() + vec_index(f, t), static_cast<size_t>(taps_)};
  }

  // Fill (f, t) from a packed row; R is Hermitian-symmetrized.
  void set_packed(int f, int t, std::span<const double> row);

 private:
  size_t square() const { return static_cast<size_t>(taps_) * taps_; }
  size_t mat_index(int f, int t) const {
    return (static_cast<size_t>(f) * frames_ + t) * square();
  }
  size_t vec_index(int f, int t) const {
    return (static_cast<size_t>(f) * frames_ + t) * taps_;
  }

  int bins_ = 0;
  int frames_ = 0;
  int taps_ = 0;
  int window_frames_ = 0;
  std::vector<Complex> r_mat_;
  std::vector<Complex> r_vec_;
};

// Per-bin, per-frame filter taps, layout [bins x frames x taps].
class WienerFilter {
 public:
  WienerFilter() = default;
  WienerFilter(int bins, int frames, int taps, double epsilon);

  int bins() const { return bins_; }
  int frames() const { return frames_; }
  int taps() const { return taps_; }
  double epsilon() const { return epsilon_; }

  std::span<Complex> taps_at(int f, int t) {
    return {h_.data() + index(f, t), static_cast<size_t>(taps_)};
  }
  std::span<const Complex> taps_at(int f, int t) const {
    return {h_.data() + index(f, t), static_cast<size_t>(taps_)};
  }
  const std::vector<Complex>& data() const { return h_; }

 private:
  size_t index(int f, int t) const {
    return (static_cast<size_t>(f) * frames_ + t) * taps_;
  }

  int bins_ = 0;
  int frames_ = 0;
  int taps_ = 0;
  double epsilon_ = 0.0;
  std::vector<Complex> h_;
};

// Regularized solve of one system: h = (R + eps tr(R)/m I)^{-1} r.
// R is read from its lower triangle. Returns false and zeroes h when there
// is no far-end energy or the factorization breaks down.
bool solve_regularized(std::span<const Complex> r_mat,
                       std::span<const Complex> r_vec, int taps, double epsilon,
                       std::span<Complex> h);

WienerStats accumulate_stats(const UnfoldedFarEnd& x_unf, const Spectrogram& d,
                             int window_frames);

WienerFilter solve(const WienerStats& stats, double epsilon);

Spectrogram subtract_echo(const Spectrogram& d, const UnfoldedFarEnd& x_unf,
                          const WienerFilter& h);

// One frequency bin of the far-end and mic spectrograms.
struct BinView {
  int bin = 0;
  std::span<const Complex> far;  // X[t, bin], t = 0..frames-1
  std::span<const Complex> mic;  // D[t, bin]
  int taps = 0;
  int window_frames = 0;

  int frames() const { return static_cast<int>(far.size()); }
  // x_t[k] = X[t - k, bin], zero before frame 0.
  void tap_vector(int t, std::span<Complex> x) const;
};

// Supplies the windowed, packed Wiener statistics of one bin as a
// [frames x StatsLayout::width()] buffer. Implementations must be
// thread-safe: bins are processed concurrently.
class StatsSource {
 public:
  virtual ~StatsSource() = default;
  virtual void windowed_stats(const BinView& bin, std::span<double> out) const = 0;
};

// Plain sliding-window sums of the rank-one statistics.
class SlidingWindowStats final : public StatsSource {
 public:
  void windowed_stats(const BinView& bin, std::span<double> out) const override;
};

struct WienerConfig {
  int taps = 20;
  int window_frames = 100;
  double epsilon = 1e-3;

  void validate() const;
};

struct StwsResult {
  Spectrogram enhanced;  // S^W
  WienerFilter filter;   // H^W
};

// stft -> unfold -> statistics -> solve -> subtract, fused per bin so the
// full statistics tensor is never materialized. `source` replaces the plain
// sliding-window statistics (e.g. attention-enhanced statistics).
StwsResult stws_pipeline(std::span<const double> far, std::span<const double> mic,
                         const WienerConfig& config,
                         const StftConfig& stft_config = {},
                         const StatsSource* source = nullptr);

// Same, starting from spectrograms.
StwsResult stws_pipeline(const Spectrogram& far, const Spectrogram& mic,
                         const WienerConfig& config,
                         const StatsSource* source = nullptr);

// Serial direct-summation kernels. Kept as test and benchmark reference for
// the parallel block-sum kernels above.
namespace reference {
WienerStats accumulate_stats(const UnfoldedFarEnd& x_unf, const Spectrogram& d,
                             int window_frames);
WienerFilter solve(const WienerStats& stats, double epsilon);
Spectrogram subtract_echo(const Spectrogram& d, const UnfoldedFarEnd& x_unf,
                          const WienerFilter& h);
}  // namespace reference

}  // namespace astws
