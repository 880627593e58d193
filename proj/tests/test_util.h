#pragma once

#include <cmath>
#include <complex>
#include <cstdint>
#include <numbers>
#include <random>
#include <vector>

#include "astws/stft.hpp"

namespace astws::test {

inline std::vector<double> white_noise(size_t n, std::uint64_t seed, double scale = 1.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, scale);
  std::vector<double> x(n);
  for (double& v : x) v = normal(rng);
  return x;
}

inline Spectrogram random_spectrogram(int frames, int bins, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Spectrogram s(frames, bins, StftConfig{});
  for (auto& c : s.data()) c = Complex(normal(rng), normal(rng));
  return s;
}

// Direct O(N^2) one-sided DFT with the e^{-jwn} sign.
inline std::vector<Complex> naive_dft(const std::vector<double>& x, int n_fft) {
  std::vector<Complex> out(n_fft / 2 + 1);
  for (int k = 0; k <= n_fft / 2; ++k) {
    Complex acc = 0.0;
    for (size_t n = 0; n < x.size(); ++n) {
      const double arg = -2.0 * std::numbers::pi * k * static_cast<double>(n) / n_fft;
      acc += x[n] * Complex(std::cos(arg), std::sin(arg));
    }
    out[k] = acc;
  }
  return out;
}

inline double rms(const std::vector<double>& x, size_t begin, size_t end) {
  double acc = 0.0;
  for (size_t i = begin; i < end; ++i) acc += x[i] * x[i];
  return std::sqrt(acc / static_cast<double>(end - begin));
}

inline double energy(const std::vector<double>& x) {
  double acc = 0.0;
  for (double v : x) acc += v * v;
  return acc;
}

}  // namespace astws::test
