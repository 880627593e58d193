#pragma once

#include <memory>
#include <span>

#include "astws/common.hpp"

namespace astws {

// Real-input DFT of fixed size backed by FFTW. Forward uses the e^{-jwn}
// convention; inverse is unnormalized, so inverse(forward(x)) = n * x.
// One instance may be shared between threads: each call uses its own
// scratch buffers and FFTW's new-array execute interface.
class RealFft {
 public:
  explicit RealFft(int size);
  ~RealFft();
  RealFft(const RealFft&) = delete;
  RealFft& operator=(const RealFft&) = delete;

  int size() const { return size_; }
  int num_bins() const { return size_ / 2 + 1; }

  // input.size() == size(), output.size() == num_bins().
  void forward(std::span<const double> input, std::span<Complex> output) const;
  // input.size() == num_bins(), output.size() == size().
  void inverse(std::span<const Complex> input, std::span<double> output) const;

 private:
  struct Plans;
  int size_;
  std::unique_ptr<Plans> plans_;
};

}  // namespace astws
