#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "astws/common.hpp"

namespace astws {

enum class WindowKind { kHamming, kHann, kRectangular };

// Analysis/synthesis parameters. Defaults: 16 kHz, 20 ms periodic Hamming
// window, 5 ms hop, 512-point FFT.
struct StftConfig {
  int sample_rate = 16000;
  int window_len = 320;
  int hop = 80;
  WindowKind window = WindowKind::kHamming;
  int fft_size = 512;

  int num_bins() const { return fft_size / 2 + 1; }
  // Zeros prepended to the signal so frame t ends at sample (t + 1) * hop.
  int left_pad() const { return window_len - hop; }
  void validate() const;
  // Frame count for a signal of `num_samples` samples.
  int num_frames(size_t num_samples) const;
  std::vector<double> analysis_window() const;

  friend bool operator==(const StftConfig&, const StftConfig&) = default;
};

// Complex T-F matrix, row-major [frames x bins].
class Spectrogram {
 public:
  Spectrogram() = default;
  Spectrogram(int frames, const StftConfig& config);
  Spectrogram(int frames, int bins, const StftConfig& config);

  int frames() const { return frames_; }
  int bins() const { return bins_; }
  const StftConfig& config() const { return config_; }

  Complex& operator()(int t, int f) { return data_[index(t, f)]; }
  const Complex& operator()(int t, int f) const { return data_[index(t, f)]; }

  std::span<Complex> frame(int t) {
    return {data_.data() + static_cast<size_t>(t) * bins_,
            static_cast<size_t>(bins_)};
  }
  std::span<const Complex> frame(int t) const {
    return {data_.data() + static_cast<size_t>(t) * bins_,
            static_cast<size_t>(bins_)};
  }
  // Copy of one frequency bin across all frames.
  std::vector<Complex> bin(int f) const;

  std::vector<Complex>& data() { return data_; }
  const std::vector<Complex>& data() const { return data_; }

 private:
  size_t index(int t, int f) const {
    return static_cast<size_t>(t) * bins_ + f;
  }

  int frames_ = 0;
  int bins_ = 0;
  StftConfig config_;
  std::vector<Complex> data_;
};

// Causal stack of far-end frames, layout [bins x frames x taps]:
// at(f, t, k) = X[t - k, f], zero for t - k < 0.
class UnfoldedFarEnd {
 public:
  UnfoldedFarEnd() = default;
  UnfoldedFarEnd(int bins, int frames, int taps);

  int bins() const { return bins_; }
  int frames() const { return frames_; }
  int taps() const { return taps_; }

  Complex& at(int f, int t, int k) { return data_[index(f, t, k)]; }
  const Complex& at(int f, int t, int k) const { return data_[index(f, t, k)]; }

  // The m-vector x_t for bin f.
  std::span<const Complex> taps_at(int f, int t) const {
    return {data_.data() + index(f, t, 0), static_cast<size_t>(taps_)};
  }

  const std::vector<Complex>& data() const { return data_; }

 private:
  size_t index(int f, int t, int k) const {
    return (static_cast<size_t>(f) * frames_ + t) * taps_ + k;
  }

  int bins_ = 0;
  int frames_ = 0;
  int taps_ = 0;
  std::vector<Complex> data_;
};

Spectrogram stft(std::span<const double> signal, const StftConfig& config = {});

// Weighted overlap-add; the result is divided by the overlap-added squared
// window. Output has `length` samples, or frames * hop when omitted.
std::vector<double> istft(const Spectrogram& spec,
                          std::optional<size_t> length = std::nullopt);

UnfoldedFarEnd unfold(const Spectrogram& spec, int taps);

}  // namespace astws
