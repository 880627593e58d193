#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace astws {

// Causal sliding-window sums of fixed-width rows: after push(row_t), out
// holds sum(row_{t-window+1} .. row_t). Uses block prefix/suffix sums
// (van Herk / Gil-Werman) so no row is ever subtracted back out; a window
// that has emptied of energy sums to exactly zero.
class WindowedRowSum {
 public:
  WindowedRowSum(size_t width, size_t window);

  size_t width() const { return width_; }
  size_t window() const { return window_; }

  void push(std::span<const double> row, std::span<double> out);
  void reset();

 private:
  size_t width_;
  size_t window_;
  size_t offset_ = 0;       // position of the next row inside its block
  bool have_suffix_ = false;
  std::vector<double> rows_;     // rows of the current block
  std::vector<double> prefix_;   // running sum of the current block
  std::vector<double> suffix_;   // suffix sums of the previous block
};

// Applies WindowedRowSum to a [frames x width] row-major buffer.
std::vector<double> windowed_sums(std::span<const double> rows, size_t width,
                                  size_t window);

}  // namespace astws
