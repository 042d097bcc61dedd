#include "denois/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cstdlib>
#include <cstring>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace denois {

namespace {
// Set on pool threads; nested loops then run inline.
thread_local bool t_in_pool = false;
}  // namespace

int thread_count() {
  if (const char* env = std::getenv("DENOIS_THREADS"); env != nullptr) {
    int value = 0;
    const auto* end = env + std::strlen(env);
    if (auto [ptr, ec] = std::from_chars(env, end, value);
        ec == std::errc{} && ptr == end && value > 0) {
      return value;
    }
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

void parallel_for(std::size_t n, std::size_t block_size,
                  const std::function<void(std::size_t, std::size_t)>& fn) {
  if (n == 0) return;
  block_size = std::max<std::size_t>(block_size, 1);
  const std::size_t n_blocks = (n + block_size - 1) / block_size;
  const auto workers =
      static_cast<std::size_t>(std::min<std::size_t>(thread_count(), n_blocks));
  auto run_block = [&](std::size_t b) {
    const std::size_t begin = b * block_size;
    fn(begin, std::min(n, begin + block_size));
  };
  if (workers <= 1 || t_in_pool) {
    for (std::size_t b = 0; b < n_blocks; ++b) run_block(b);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::mutex error_mutex;
  std::exception_ptr error;
  {
    std::vector<std::jthread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        t_in_pool = true;
        try {
          for (std::size_t b = next++; b < n_blocks; b = next++) run_block(b);
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (!error) error = std::current_exception();
          next = n_blocks;
        }
      });
    }
  }
  if (error) std::rethrow_exception(error);
}

}  // namespace denois
