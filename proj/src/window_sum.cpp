#include "astws/window_sum.hpp"

#include <algorithm>

#include "astws/common.hpp"

namespace astws {

WindowedRowSum::WindowedRowSum(size_t width, size_t window)
    : width_(width),
      window_(window),
      rows_(width * window),
      prefix_(width),
      suffix_(width * (window + 1)) {
  require_config(window >= 1, "window sum: window must be >= 1");
  reset();
}

void WindowedRowSum::reset() {
  offset_ = 0;
  have_suffix_ = false;
  std::fill(prefix_.begin(), prefix_.end(), 0.0);
  std::fill(suffix_.begin(), suffix_.end(), 0.0);
}

void WindowedRowSum::push(std::span<const double> row, std::span<double> out) {
  require_input(row.size() == width_ && out.size() == width_,
                "window sum: row width mismatch");
  std::copy(row.begin(), row.end(), rows_.begin() + offset_ * width_);
  for (size_t j = 0; j < width_; ++j) prefix_[j] += row[j];

  // Window = rows offset_+1.. of the previous block plus rows 0..offset_ of
  // the current one. suffix_ row `window_` is the all-zero sentinel.
  if (have_suffix_) {
    const double* tail = suffix_.data() + (offset_ + 1) * width_;
    for (size_t j = 0; j < width_; ++j) out[j] = tail[j] + prefix_[j];
  } else {
    std::copy(prefix_.begin(), prefix_.end(), out.begin());
  }

  if (++offset_ == window_) {
    for (size_t j = 0; j < width_; ++j) suffix_[window_ * width_ + j] = 0.0;
    for (size_t i = window_; i-- > 0;) {
      const double* r = rows_.data() + i * width_;
      const double* next = suffix_.data() + (i + 1) * width_;
      double* cur = suffix_.data() + i * width_;
      for (size_t j = 0; j < width_; ++j) cur[j] = r[j] + next[j];
    }
    std::fill(prefix_.begin(), prefix_.end(), 0.0);
    offset_ = 0;
    have_suffix_ = true;
  }
}

std::vector<double> windowed_sums(std::span<const double> rows, size_t width,
                                  size_t window) {
  require_input(width > 0 && rows.size() % width == 0,
                "window sum: buffer is not a whole number of rows");
  const size_t frames = rows.size() / width;
  std::vector<double> out(rows.size());
  WindowedRowSum acc(width, window);
  for (size_t t = 0; t < frames; ++t) {
    acc.push(rows.subspan(t * width, width),
             std::span<double>(out).subspan(t * width, width));
  }
  return out;
}

}  // namespace astws
