#include "d2tpt/parallel.hpp"

#include <algorithm>
#include <charconv>
#include <cstdlib>
#include <cstring>
#include <exception>
#include <thread>
#include <vector>

namespace d2tpt {
namespace {

// Below this many scalar operations threading costs more than it saves.
constexpr std::size_t kMinParallelWork = std::size_t{1} << 18;

std::size_t read_thread_cap() {
  std::size_t hw = std::max<std::size_t>(1, std::thread::hardware_concurrency());
  const char* env = std::getenv("D2TPT_THREADS");
  if (env == nullptr || *env == '\0') return hw;
  std::size_t value = 0;
  auto [ptr, ec] = std::from_chars(env, env + std::strlen(env), value);
  if (ec != std::errc() || value == 0) return hw;
  return value;
}

}  // namespace

std::size_t thread_cap() {
  static const std::size_t cap = read_thread_cap();
  return cap;
}

void parallel_rows(std::size_t n, std::size_t cost_per_row,
                   const std::function<void(std::size_t, std::size_t)>& fn) {
  std::size_t threads = std::min(thread_cap(), n);
  if (threads <= 1 || n * cost_per_row < kMinParallelWork) {
    fn(0, n);
    return;
  }
  std::size_t chunk = (n + threads - 1) / threads;
  std::size_t num_chunks = (n + chunk - 1) / chunk;
  std::vector<std::exception_ptr> errors(num_chunks);
  auto guarded = [&](std::size_t index) {
    std::size_t begin = index * chunk;
    try {
      fn(begin, std::min(n, begin + chunk));
    } catch (...) {
      errors[index] = std::current_exception();
    }
  };
  {
    std::vector<std::jthread> workers;
    workers.reserve(num_chunks - 1);
    for (std::size_t i = 1; i < num_chunks; ++i) workers.emplace_back(guarded, i);
    guarded(0);
  }
  // Lowest chunk first so the reported error does not depend on scheduling.
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace d2tpt
