#include "qpo/parallel.hpp"

#include <atomic>

namespace qpo {
namespace {

std::atomic<std::size_t>& worker_setting() {
  static std::atomic<std::size_t> value{std::max<std::size_t>(1, std::thread::hardware_concurrency())};
  return value;
}

}  // namespace

std::size_t worker_count() { return worker_setting().load(); }

void set_worker_count(std::size_t n) { worker_setting().store(std::max<std::size_t>(1, n)); }

}  // namespace qpo
