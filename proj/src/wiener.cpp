#include "astws/wiener.hpp"

#include <algorithm>
#include <cmath>

#include "astws/hermitian_solve.hpp"
#include "astws/window_sum.hpp"
#include "parallel_errors.hpp"

namespace astws {
namespace {

bool all_finite(std::span<const Complex> v) {
  return std::all_of(v.begin(), v.end(), [](const Complex& c) {
    return std::isfinite(c.real()) && std::isfinite(c.imag());
  });
}

bool all_finite(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(),
                     [](double x) { return std::isfinite(x); });
}

void check_shapes(const UnfoldedFarEnd& x_unf, const Spectrogram& d) {
  require_input(x_unf.bins() == d.bins() && x_unf.frames() == d.frames(),
                "wiener: far-end and mic shapes disagree");
}

// Solve + subtract over one bin given its windowed packed statistics.
void solve_and_subtract_bin(const BinView& bin, std::span<const double> stats,
                            double epsilon, std::span<Complex> h_out,
                            std::span<Complex> enhanced) {
  const int m = bin.taps;
  const StatsLayout layout{m};
  const size_t width = layout.width();
  std::vector<Complex> r_mat(layout.square());
  std::vector<Complex> r_vec(m);
  std::vector<Complex> x(m);
  for (int t = 0; t < bin.frames(); ++t) {
    unpack_stats(stats.subspan(t * width, width), m, r_mat, r_vec);
    std::span<Complex> h = h_out.subspan(static_cast<size_t>(t) * m, m);
    solve_regularized(r_mat, r_vec, m, epsilon, h);
    bin.tap_vector(t, x);
    Complex echo = 0.0;
    for (int k = 0; k < m; ++k) echo += h[k] * x[k];
    enhanced[t] = bin.mic[t] - echo;
  }
}

}  // namespace

void pack_instantaneous(std::span<const Complex> x, Complex d,
                        std::span<double> row) {
  const int m = static_cast<int>(x.size());
  const StatsLayout layout{m};
  for (int i = 0; i < m; ++i) {
    const Complex xi = std::conj(x[i]);
    for (int j = 0; j < m; ++j) {
      const Complex v = xi * x[j];
      row[layout.re_matrix(i, j)] = v.real();
      row[layout.im_matrix(i, j)] = v.imag();
    }
    const Complex c = xi * d;
    row[layout.re_vector(i)] = c.real();
    row[layout.im_vector(i)] = c.imag();
  }
}

void unpack_stats(std::span<const double> row, int taps,
                  std::span<Complex> r_mat, std::span<Complex> r_vec) {
  const StatsLayout layout{taps};
  for (int i = 0; i < taps; ++i) {
    for (int j = 0; j < taps; ++j) {
      r_mat[layout.re_matrix(i, j)] =
          Complex(row[layout.re_matrix(i, j)], row[layout.im_matrix(i, j)]);
    }
    r_vec[i] = Complex(row[layout.re_vector(i)], row[layout.im_vector(i)]);
  }
}

WienerStats::WienerStats(int bins, int frames, int taps, int window_frames)
    : bins_(bins),
      frames_(frames),
      taps_(taps),
      window_frames_(window_frames),
      r_mat_(static_cast<size_t>(bins) * frames * taps * taps),
      r_vec_(static_cast<size_t>(bins) * frames * taps) {}

void WienerStats::set_packed(int f, int t, std::span<const double> row) {
  const StatsLayout layout{taps_};
  std::span<Complex> r_mat = autocorr(f, t);
  std::span<Complex> r_vec = crosscorr(f, t);
  unpack_stats(row, taps_, r_mat, r_vec);
  for (int i = 0; i < taps_; ++i) {
    r_mat[layout.re_matrix(i, i)] = r_mat[layout.re_matrix(i, i)].real();
    for (int j = 0; j < i; ++j) {
      const Complex avg =
          0.5 * (r_mat[layout.re_matrix(i, j)] +
                 std::conj(r_mat[layout.re_matrix(j, i)]));
      r_mat[layout.re_matrix(i, j)] = avg;
      r_mat[layout.re_matrix(j, i)] = std::conj(avg);
    }
  }
}

WienerFilter::WienerFilter(int bins, int frames, int taps, double epsilon)
    : bins_(bins),
      frames_(frames),
      taps_(taps),
      epsilon_(epsilon),
      h_(static_cast<size_t>(bins) * frames * taps) {}

bool solve_regularized(std::span<const Complex> r_mat,
                       std::span<const Complex> r_vec, int taps, double epsilon,
                       std::span<Complex> h) {
  double trace = 0.0;
  for (int i = 0; i < taps; ++i) trace += r_mat[static_cast<size_t>(i) * taps + i].real();
  if (!(trace > 0.0)) {
    std::fill(h.begin(), h.end(), Complex(0.0));
    return false;
  }
  const double ridge = epsilon * trace / taps;
  std::vector<Complex> a(r_mat.begin(), r_mat.end());
  for (int i = 0; i < taps; ++i) a[static_cast<size_t>(i) * taps + i] += ridge;
  std::copy(r_vec.begin(), r_vec.end(), h.begin());
  if (!cholesky_solve(a, h, taps)) {
    std::fill(h.begin(), h.end(), Complex(0.0));
    return false;
  }
  return true;
}

void BinView::tap_vector(int t, std::span<Complex> x) const {
  for (int k = 0; k < taps; ++k) x[k] = t - k >= 0 ? far[t - k] : Complex(0.0);
}

void SlidingWindowStats::windowed_stats(const BinView& bin,
                                        std::span<double> out) const {
  const StatsLayout layout{bin.taps};
  const size_t width = layout.width();
  WindowedRowSum acc(width, bin.window_frames);
  std::vector<Complex> x(bin.taps);
  std::vector<double> row(width);
  for (int t = 0; t < bin.frames(); ++t) {
    bin.tap_vector(t, x);
    pack_instantaneous(x, bin.mic[t], row);
    acc.push(row, out.subspan(t * width, width));
  }
}

void WienerConfig::validate() const {
  require_config(taps >= 1, "wiener: taps (m) must be >= 1");
  require_config(window_frames >= 1, "wiener: window_frames (L) must be >= 1");
  require_config(epsilon >= 0.0 && std::isfinite(epsilon),
                 "wiener: epsilon must be finite and >= 0");
}

WienerStats accumulate_stats(const UnfoldedFarEnd& x_unf, const Spectrogram& d,
                             int window_frames) {
  check_shapes(x_unf, d);
  require_config(window_frames >= 1, "accumulate_stats: L must be >= 1");
  const int bins = d.bins();
  const int frames = d.frames();
  const int m = x_unf.taps();
  const size_t width = StatsLayout{m}.width();
  WienerStats stats(bins, frames, m, window_frames);

#pragma omp parallel
  {
    std::vector<double> row(width);
    std::vector<double> sum(width);
#pragma omp for schedule(dynamic)
    for (int f = 0; f < bins; ++f) {
      WindowedRowSum acc(width, window_frames);
      for (int t = 0; t < frames; ++t) {
        pack_instantaneous(x_unf.taps_at(f, t), d(t, f), row);
        acc.push(row, sum);
        unpack_stats(sum, m, stats.autocorr(f, t), stats.crosscorr(f, t));
      }
    }
  }
  return stats;
}

WienerFilter solve(const WienerStats& stats, double epsilon) {
  require_config(epsilon >= 0.0 && std::isfinite(epsilon),
                 "solve: epsilon must be finite and >= 0");
  const int bins = stats.bins();
  const int frames = stats.frames();
  const int m = stats.taps();
  for (int f = 0; f < bins; ++f) {
    for (int t = 0; t < frames; ++t) {
      if (!all_finite(stats.autocorr(f, t)) || !all_finite(stats.crosscorr(f, t))) {
        throw DataError("solve: non-finite statistics");
      }
    }
  }
  WienerFilter filter(bins, frames, m, epsilon);
#pragma omp parallel for collapse(2) schedule(dynamic, 64)
  for (int f = 0; f < bins; ++f) {
    for (int t = 0; t < frames; ++t) {
      solve_regularized(stats.autocorr(f, t), stats.crosscorr(f, t), m, epsilon,
                        filter.taps_at(f, t));
    }
  }
  return filter;
}

Spectrogram subtract_echo(const Spectrogram& d, const UnfoldedFarEnd& x_unf,
                          const WienerFilter& h) {
  check_shapes(x_unf, d);
  require_input(h.bins() == d.bins() && h.frames() == d.frames() &&
                    h.taps() == x_unf.taps(),
                "subtract_echo: filter shape disagrees with inputs");
  Spectrogram out(d.frames(), d.bins(), d.config());
  const int m = h.taps();
#pragma omp parallel for schedule(static)
  for (int t = 0; t < d.frames(); ++t) {
    for (int f = 0; f < d.bins(); ++f) {
      const auto taps = h.taps_at(f, t);
      const auto x = x_unf.taps_at(f, t);
      Complex echo = 0.0;
      for (int k = 0; k < m; ++k) echo += taps[k] * x[k];
      out(t, f) = d(t, f) - echo;
    }
  }
  return out;
}

StwsResult stws_pipeline(std::span<const double> far, std::span<const double> mic,
                         const WienerConfig& config, const StftConfig& stft_config,
                         const StatsSource* source) {
  require_input(far.size() == mic.size(),
                "stws_pipeline: far and mic lengths differ");
  require_input(all_finite(far) && all_finite(mic),
                "stws_pipeline: non-finite input samples");
  return stws_pipeline(stft(far, stft_config), stft(mic, stft_config), config,
                       source);
}

StwsResult stws_pipeline(const Spectrogram& far, const Spectrogram& mic,
                         const WienerConfig& config, const StatsSource* source) {
  config.validate();
  require_input(far.frames() == mic.frames() && far.bins() == mic.bins(),
                "stws_pipeline: spectrogram shapes differ");
  const SlidingWindowStats plain;
  const StatsSource& stats_source = source != nullptr ? *source : plain;

  const int bins = mic.bins();
  const int frames = mic.frames();
  const int m = config.taps;
  const size_t width = StatsLayout{m}.width();
  StwsResult result{Spectrogram(frames, bins, mic.config()),
                    WienerFilter(bins, frames, m, config.epsilon)};

  internal::ParallelErrors errors;
#pragma omp parallel
  {
    std::vector<double> stats(static_cast<size_t>(frames) * width);
    std::vector<Complex> enhanced(frames);
    std::vector<Complex> h(static_cast<size_t>(frames) * m);
#pragma omp for schedule(dynamic)
    for (int f = 0; f < bins; ++f) {
      const std::vector<Complex> x_bin = far.bin(f);
      const std::vector<Complex> d_bin = mic.bin(f);
      const BinView view{f, x_bin, d_bin, m, config.window_frames};
      try {
        stats_source.windowed_stats(view, stats);
      } catch (...) {
        errors.capture(f);
        continue;
      }
      if (!all_finite(std::span<const double>(stats))) {
        // Degenerate statistics: leave the mic signal untouched in this bin.
        std::fill(h.begin(), h.end(), Complex(0.0));
        std::copy(d_bin.begin(), d_bin.end(), enhanced.begin());
      } else {
        solve_and_subtract_bin(view, stats, config.epsilon, h, enhanced);
      }
      for (int t = 0; t < frames; ++t) {
        result.enhanced(t, f) = enhanced[t];
        std::copy_n(h.begin() + static_cast<size_t>(t) * m, m,
                    result.filter.taps_at(f, t).begin());
      }
    }
  }
  errors.rethrow();
  return result;
}

}  // namespace astws
