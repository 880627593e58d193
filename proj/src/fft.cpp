#include "astws/fft.hpp"

#include <fftw3.h>

#include <algorithm>
#include <mutex>

namespace astws {
namespace {

// Planner calls are not thread-safe in FFTW.
std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

struct FftwBuffer {
  explicit FftwBuffer(size_t bytes) : ptr(fftw_malloc(bytes)) {
    if (ptr == nullptr) throw std::bad_alloc();
  }
  ~FftwBuffer() { fftw_free(ptr); }
  FftwBuffer(const FftwBuffer&) = delete;
  FftwBuffer& operator=(const FftwBuffer&) = delete;
  void* ptr;
};

}  // namespace

struct RealFft::Plans {
  fftw_plan forward = nullptr;
  fftw_plan inverse = nullptr;
};

RealFft::RealFft(int size) : size_(size), plans_(std::make_unique<Plans>()) {
  require_config(size >= 2, "fft size must be >= 2");
  FftwBuffer real(sizeof(double) * size);
  FftwBuffer spec(sizeof(fftw_complex) * num_bins());
  std::lock_guard<std::mutex> lock(planner_mutex());
  auto* r = static_cast<double*>(real.ptr);
  auto* c = static_cast<fftw_complex*>(spec.ptr);
  plans_->forward = fftw_plan_dft_r2c_1d(size, r, c, FFTW_ESTIMATE);
  plans_->inverse =
      fftw_plan_dft_c2r_1d(size, c, r, FFTW_ESTIMATE | FFTW_DESTROY_INPUT);
  if (plans_->forward == nullptr || plans_->inverse == nullptr) {
    throw std::runtime_error("FFTW planning failed");
  }
}

RealFft::~RealFft() {
  std::lock_guard<std::mutex> lock(planner_mutex());
  if (plans_->forward) fftw_destroy_plan(plans_->forward);
  if (plans_->inverse) fftw_destroy_plan(plans_->inverse);
}

void RealFft::forward(std::span<const double> input,
                      std::span<Complex> output) const {
  require_input(static_cast<int>(input.size()) == size_ &&
                    static_cast<int>(output.size()) == num_bins(),
                "RealFft::forward: buffer size mismatch");
  FftwBuffer real(sizeof(double) * size_);
  FftwBuffer spec(sizeof(fftw_complex) * num_bins());
  auto* r = static_cast<double*>(real.ptr);
  auto* c = static_cast<fftw_complex*>(spec.ptr);
  std::copy(input.begin(), input.end(), r);
  fftw_execute_dft_r2c(plans_->forward, r, c);
  for (int k = 0; k < num_bins(); ++k) output[k] = Complex(c[k][0], c[k][1]);
}

void RealFft::inverse(std::span<const Complex> input,
                      std::span<double> output) const {
  require_input(static_cast<int>(input.size()) == num_bins() &&
                    static_cast<int>(output.size()) == size_,
                "RealFft::inverse: buffer size mismatch");
  FftwBuffer real(sizeof(double) * size_);
  FftwBuffer spec(sizeof(fftw_complex) * num_bins());
  auto* r = static_cast<double*>(real.ptr);
  auto* c = static_cast<fftw_complex*>(spec.ptr);
  for (int k = 0; k < num_bins(); ++k) {
    c[k][0] = input[k].real();
    c[k][1] = input[k].imag();
  }
  fftw_execute_dft_c2r(plans_->inverse, c, r);
  std::copy(r, r + size_, output.begin());
}

}  // namespace astws
