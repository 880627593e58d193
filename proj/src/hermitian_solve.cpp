#include "astws/hermitian_solve.hpp"

#include <cmath>

namespace astws {

bool cholesky_solve(std::span<Complex> a, std::span<Complex> b, int n,
                    double rel_pivot_tol) {
  auto at = [&](int i, int j) -> Complex& {
    return a[static_cast<size_t>(i) * n + j];
  };
  double max_diag = 0.0;
  for (int i = 0; i < n; ++i) max_diag = std::max(max_diag, at(i, i).real());
  if (!(max_diag > 0.0)) return false;
  const double tol = rel_pivot_tol * max_diag;

  for (int j = 0; j < n; ++j) {
    double d = at(j, j).real();
    for (int k = 0; k < j; ++k) d -= std::norm(at(j, k));
    if (!(d > tol)) return false;
    const double ljj = std::sqrt(d);
    at(j, j) = ljj;
    const double inv = 1.0 / ljj;
    for (int i = j + 1; i < n; ++i) {
      Complex s = at(i, j);
      for (int k = 0; k < j; ++k) s -= at(i, k) * std::conj(at(j, k));
      at(i, j) = s * inv;
    }
  }
  // L y = b
  for (int i = 0; i < n; ++i) {
    Complex s = b[i];
    for (int k = 0; k < i; ++k) s -= at(i, k) * b[k];
    b[i] = s / at(i, i).real();
  }
  // L^H h = y
  for (int i = n - 1; i >= 0; --i) {
    Complex s = b[i];
    for (int k = i + 1; k < n; ++k) s -= std::conj(at(k, i)) * b[k];
    b[i] = s / at(i, i).real();
  }
  return true;
}

}  // namespace astws
