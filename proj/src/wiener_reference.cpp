#include <algorithm>
#include <cmath>

#include "astws/wiener.hpp"

namespace astws::reference {

WienerStats accumulate_stats(const UnfoldedFarEnd& x_unf, const Spectrogram& d,
                             int window_frames) {
  require_input(x_unf.bins() == d.bins() && x_unf.frames() == d.frames(),
                "wiener: far-end and mic shapes disagree");
  require_config(window_frames >= 1, "accumulate_stats: L must be >= 1");
  const int m = x_unf.taps();
  WienerStats stats(d.bins(), d.frames(), m, window_frames);
  for (int f = 0; f < d.bins(); ++f) {
    for (int t = 0; t < d.frames(); ++t) {
      auto r_mat = stats.autocorr(f, t);
      auto r_vec = stats.crosscorr(f, t);
      for (int tau = std::max(0, t - window_frames + 1); tau <= t; ++tau) {
        for (int i = 0; i < m; ++i) {
          const Complex xi = std::conj(x_unf.at(f, tau, i));
          for (int j = 0; j < m; ++j) {
            r_mat[static_cast<size_t>(i) * m + j] += xi * x_unf.at(f, tau, j);
          }
          r_vec[i] += xi * d(tau, f);
        }
      }
    }
  }
  return stats;
}

namespace {

// Gaussian elimination with partial pivoting; false on a zero pivot.
bool gauss_solve(std::vector<Complex> a, std::span<Complex> b, int n) {
  for (int c = 0; c < n; ++c) {
    int p = c;
    for (int r = c + 1; r < n; ++r) {
      if (std::abs(a[r * n + c]) > std::abs(a[p * n + c])) p = r;
    }
    if (std::abs(a[p * n + c]) == 0.0) return false;
    if (p != c) {
      for (int k = 0; k < n; ++k) std::swap(a[c * n + k], a[p * n + k]);
      std::swap(b[c], b[p]);
    }
    for (int r = c + 1; r < n; ++r) {
      const Complex factor = a[r * n + c] / a[c * n + c];
      for (int k = c; k < n; ++k) a[r * n + k] -= factor * a[c * n + k];
      b[r] -= factor * b[c];
    }
  }
  for (int r = n - 1; r >= 0; --r) {
    Complex s = b[r];
    for (int k = r + 1; k < n; ++k) s -= a[r * n + k] * b[k];
    b[r] = s / a[r * n + r];
  }
  return true;
}

}  // namespace

WienerFilter solve(const WienerStats& stats, double epsilon) {
  require_config(epsilon >= 0.0, "solve: epsilon must be >= 0");
  const int m = stats.taps();
  WienerFilter filter(stats.bins(), stats.frames(), m, epsilon);
  for (int f = 0; f < stats.bins(); ++f) {
    for (int t = 0; t < stats.frames(); ++t) {
      const auto r_mat = stats.autocorr(f, t);
      auto h = filter.taps_at(f, t);
      double trace = 0.0;
      for (int i = 0; i < m; ++i) trace += r_mat[i * m + i].real();
      if (!(trace > 0.0)) continue;
      std::vector<Complex> a(r_mat.begin(), r_mat.end());
      for (int i = 0; i < m; ++i) a[i * m + i] += epsilon * trace / m;
      const auto r_vec = stats.crosscorr(f, t);
      std::copy(r_vec.begin(), r_vec.end(), h.begin());
      if (!gauss_solve(std::move(a), h, m)) std::fill(h.begin(), h.end(), 0.0);
    }
  }
  return filter;
}

Spectrogram subtract_echo(const Spectrogram& d, const UnfoldedFarEnd& x_unf,
                          const WienerFilter& h) {
  Spectrogram out(d.frames(), d.bins(), d.config());
  for (int t = 0; t < d.frames(); ++t) {
    for (int f = 0; f < d.bins(); ++f) {
      Complex s = d(t, f);
      for (int k = 0; k < h.taps() && k <= t; ++k) {
        s -= h.taps_at(f, t)[k] * x_unf.at(f, t, k);
      }
      out(t, f) = s;
    }
  }
  return out;
}

}  // namespace astws::reference
