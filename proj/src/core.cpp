#include "stimeeg/core.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <mutex>
#include <thread>

namespace stimeeg {

Matrix Matrix::col_slice(std::size_t begin, std::size_t end) const {
  assert(begin <= end && end <= cols_);
  Matrix out(rows_, end - begin);
  for (std::size_t r = 0; r < rows_; ++r) {
    auto src = row(r);
    std::copy(src.begin() + begin, src.begin() + end, out.row(r).begin());
  }
  return out;
}

Matrix Matrix::matmul(const Matrix& rhs) const {
  if (cols_ != rhs.rows_) throw Error("matmul: dimension mismatch");
  Matrix out(rows_, rhs.cols_);
  for (std::size_t i = 0; i < rows_; ++i) {
    auto dst = out.row(i);
    for (std::size_t k = 0; k < cols_; ++k) {
      const double a = (*this)(i, k);
      if (a == 0.0) continue;
      auto src = rhs.row(k);
      for (std::size_t j = 0; j < rhs.cols_; ++j) dst[j] += a * src[j];
    }
  }
  return out;
}

void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& fn) {
  threads = std::clamp<std::size_t>(threads, 1, std::max<std::size_t>(n, 1));
  if (threads == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        fn(i);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

std::uint64_t derive_seed(std::uint64_t parent, std::uint64_t child) {
  std::uint64_t z = parent * 0x9E3779B97F4A7C15ULL + child + 0x632BE59BD9B4E019ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

}  // namespace stimeeg
