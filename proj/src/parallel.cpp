#include "spc/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace spc {

void
parallel_for(size_t n, int jobs, const std::function<void(size_t)>& fn)
{
  size_t workers = std::min(n, size_t(std::max(1, jobs)));
  if (workers <= 1) {
    for (size_t i = 0; i < n; ++i)
      fn(i);
    return;
  }

  std::atomic<size_t> next{0};
  std::exception_ptr first;
  std::mutex mu;
  auto work = [&] {
    for (size_t i; (i = next.fetch_add(1)) < n;) {
      try {
        fn(i);
      } catch (...) {
        std::lock_guard lock(mu);
        if (!first)
          first = std::current_exception();
        next = n;
      }
    }
  };
  std::vector<std::thread> pool;
  for (size_t w = 0; w < workers; ++w)
    pool.emplace_back(work);
  for (auto& t : pool)
    t.join();
  if (first)
    std::rethrow_exception(first);
}

}  // namespace spc
