#include "astws/stft.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "astws/fft.hpp"

namespace astws {

void StftConfig::validate() const {
  require_config(sample_rate > 0, "stft: sample_rate must be positive");
  require_config(window_len > 0, "stft: window_len must be positive");
  require_config(hop > 0 && hop <= window_len,
                 "stft: hop must satisfy 0 < hop <= window_len");
  require_config(fft_size >= window_len, "stft: fft_size < window_len");
}

int StftConfig::num_frames(size_t num_samples) const {
  const size_t padded = num_samples + static_cast<size_t>(left_pad());
  return static_cast<int>((padded + hop - 1) / hop);
}

std::vector<double> StftConfig::analysis_window() const {
  std::vector<double> w(window_len, 1.0);
  // Periodic form (denominator N): the window tiles exactly under hop N/4.
  const double step = 2.0 * std::numbers::pi / window_len;
  for (int n = 0; n < window_len; ++n) {
    switch (window) {
      case WindowKind::kHamming:
        w[n] = 0.54 - 0.46 * std::cos(step * n);
        break;
      case WindowKind::kHann:
        w[n] = 0.5 - 0.5 * std::cos(step * n);
        break;
      case WindowKind::kRectangular:
        break;
    }
  }
  return w;
}

Spectrogram::Spectrogram(int frames, const StftConfig& config)
    : Spectrogram(frames, config.num_bins(), config) {}

Spectrogram::Spectrogram(int frames, int bins, const StftConfig& config)
    : frames_(frames),
      bins_(bins),
      config_(config),
      data_(static_cast<size_t>(frames) * bins) {
  require_input(frames >= 0 && bins >= 0, "spectrogram: negative shape");
}

std::vector<Complex> Spectrogram::bin(int f) const {
  std::vector<Complex> out(frames_);
  for (int t = 0; t < frames_; ++t) out[t] = (*this)(t, f);
  return out;
}

UnfoldedFarEnd::UnfoldedFarEnd(int bins, int frames, int taps)
    : bins_(bins),
      frames_(frames),
      taps_(taps),
      data_(static_cast<size_t>(bins) * frames * taps) {}

Spectrogram stft(std::span<const double> signal, const StftConfig& config) {
  config.validate();
  require_input(!signal.empty(), "stft: empty signal");

  const int frames = config.num_frames(signal.size());
  const int pad = config.left_pad();
  const std::vector<double> window = config.analysis_window();
  const RealFft fft(config.fft_size);
  Spectrogram spec(frames, config);
  const long n = static_cast<long>(signal.size());

#pragma omp parallel
  {
    std::vector<double> buf(config.fft_size);
#pragma omp for schedule(static)
    for (int t = 0; t < frames; ++t) {
      std::fill(buf.begin(), buf.end(), 0.0);
      const long start = static_cast<long>(t) * config.hop - pad;
      for (int i = 0; i < config.window_len; ++i) {
        const long s = start + i;
        if (s >= 0 && s < n) buf[i] = window[i] * signal[s];
      }
      fft.forward(buf, spec.frame(t));
    }
  }
  return spec;
}

std::vector<double> istft(const Spectrogram& spec, std::optional<size_t> length) {
  const StftConfig& config = spec.config();
  config.validate();
  require_input(spec.bins() == config.num_bins(),
                "istft: bin count does not match config");

  const int frames = spec.frames();
  const int pad = config.left_pad();
  const size_t out_len =
      length.value_or(static_cast<size_t>(frames) * config.hop);
  const std::vector<double> window = config.analysis_window();
  const RealFft fft(config.fft_size);

  const size_t padded_len =
      static_cast<size_t>(std::max(frames - 1, 0)) * config.hop +
      config.window_len;
  std::vector<double> acc(padded_len, 0.0);
  std::vector<double> norm(padded_len, 0.0);
  std::vector<double> buf(config.fft_size);
  const double scale = 1.0 / config.fft_size;

  // Sequential over frames: overlap-add order fixes the rounding.
  for (int t = 0; t < frames; ++t) {
    fft.inverse(spec.frame(t), buf);
    const size_t start = static_cast<size_t>(t) * config.hop;
    for (int i = 0; i < config.window_len; ++i) {
      acc[start + i] += window[i] * buf[i] * scale;
      norm[start + i] += window[i] * window[i];
    }
  }

  double peak = 0.0;
  for (double v : norm) peak = std::max(peak, v);
  const double floor = 1e-10 * peak;

  std::vector<double> out(out_len, 0.0);
  for (size_t i = 0; i < out_len; ++i) {
    const size_t p = i + pad;
    if (p < padded_len && norm[p] > floor) out[i] = acc[p] / norm[p];
  }
  return out;
}

UnfoldedFarEnd unfold(const Spectrogram& spec, int taps) {
  require_config(taps >= 1, "unfold: taps must be >= 1");
  const int bins = spec.bins();
  const int frames = spec.frames();
  UnfoldedFarEnd out(bins, frames, taps);
#pragma omp parallel for schedule(static)
  for (int f = 0; f < bins; ++f) {
    for (int t = 0; t < frames; ++t) {
      for (int k = 0; k < taps && k <= t; ++k) out.at(f, t, k) = spec(t - k, f);
    }
  }
  return out;
}

}  // namespace astws
