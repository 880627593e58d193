#pragma once

#include <climits>
#include <exception>
#include <mutex>

namespace astws::internal {

// Exceptions must not leave an OpenMP region. Loop bodies catch into this
// and the caller rethrows after the region; the lowest iteration wins so
// the reported error does not depend on the schedule.
class ParallelErrors {
 public:
  void capture(int index) {
    std::lock_guard<std::mutex> lock(mu_);
    if (index < index_) {
      index_ = index;
      error_ = std::current_exception();
    }
  }
  void rethrow() const {
    if (error_) std::rethrow_exception(error_);
  }

 private:
  std::mutex mu_;
  int index_ = INT_MAX;
  std::exception_ptr error_;
};

}  // namespace astws::internal
