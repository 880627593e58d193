#pragma once

#include <span>

#include "astws/common.hpp"

namespace astws {

// Solves A h = b in place for Hermitian positive-definite A (row-major,
// n x n) by Cholesky factorization A = L L^H. Only the lower triangle of A
// is read; A is overwritten with L and b with h. Returns false, leaving b
// unspecified, when a pivot falls to or below rel_pivot_tol * max diag(A).
bool cholesky_solve(std::span<Complex> a, std::span<Complex> b, int n,
                    double rel_pivot_tol = 1e-12);

}  // namespace astws
