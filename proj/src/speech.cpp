#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "astws/simulate.hpp"

namespace astws {
namespace {

// Two-pole resonator, unity peak gain approximately.
struct Resonator {
  double a1 = 0.0, a2 = 0.0, gain = 1.0;
  double y1 = 0.0, y2 = 0.0;

  void tune(double freq, double bandwidth, double fs) {
    const double r = std::exp(-std::numbers::pi * bandwidth / fs);
    a1 = -2.0 * r * std::cos(2.0 * std::numbers::pi * freq / fs);
    a2 = r * r;
    gain = 1.0 - r;
  }
  double step(double x) {
    const double y = gain * x - a1 * y1 - a2 * y2;
    y2 = y1;
    y1 = y;
    return y;
  }
};

}  // namespace

std::vector<double> speech_like(size_t num_samples, std::uint64_t seed,
                                int sample_rate) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double fs = sample_rate;

  std::vector<double> out(num_samples, 0.0);
  Resonator f1, f2;
  size_t pos = static_cast<size_t>(unit(rng) * 0.3 * fs);
  while (pos < num_samples) {
    // Talk spurt of several syllables, then a pause.
    const size_t spurt_end =
        std::min(num_samples, pos + static_cast<size_t>((0.4 + 1.1 * unit(rng)) * fs));
    while (pos < spurt_end) {
      const size_t syllable = static_cast<size_t>((0.12 + 0.16 * unit(rng)) * fs);
      f1.tune(250.0 + 650.0 * unit(rng), 80.0, fs);
      f2.tune(900.0 + 1900.0 * unit(rng), 120.0, fs);
      const double level = 0.3 + 0.7 * unit(rng);
      for (size_t i = 0; i < syllable && pos < num_samples; ++i, ++pos) {
        const double phase = std::numbers::pi * static_cast<double>(i) / syllable;
        const double env = level * std::sin(phase) * std::sin(phase);
        const double e = noise(rng);
        out[pos] = env * (f1.step(e) + 0.6 * f2.step(e));
      }
    }
    pos += static_cast<size_t>((0.15 + 0.45 * unit(rng)) * fs);
  }

  double peak = 0.0;
  for (double v : out) peak = std::max(peak, std::abs(v));
  if (peak > 0.0) {
    for (double& v : out) v *= 0.5 / peak;
  }
  return out;
}

}  // namespace astws
