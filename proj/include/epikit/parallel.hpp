// Fixed-partition parallel loop. Each index writes only its own output slot,
// so results never depend on the thread count.
#ifndef EPIKIT_PARALLEL_HPP
#define EPIKIT_PARALLEL_HPP

#include <cstddef>
#include <exception>
#include <functional>
#include <thread>
#include <vector>

namespace epikit {

/// Worker count used by parallel_for; 1 (the default) runs inline.
void set_thread_count(unsigned n);
unsigned thread_count();

template <typename Fn>
void parallel_for(std::size_t n, Fn&& fn) {
  const unsigned t = thread_count();
  if (t <= 1 || n < 2) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  const std::size_t workers = std::min<std::size_t>(t, n);
  std::vector<std::exception_ptr> errors(workers);
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (std::size_t i = w; i < n; i += workers) fn(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace epikit

#endif  // EPIKIT_PARALLEL_HPP
