#include "sda/tensor.hpp"

#include <array>
#include <atomic>

namespace sda {
namespace {
std::atomic<std::size_t> g_current{0};
std::atomic<std::size_t> g_peak{0};
std::array<std::atomic<std::uint64_t>, static_cast<std::size_t>(FlopTag::count)> g_flops{};
}  // namespace

namespace memtrack {
void add(std::size_t bytes) {
  const std::size_t now = g_current.fetch_add(bytes, std::memory_order_relaxed) + bytes;
  std::size_t prev = g_peak.load(std::memory_order_relaxed);
  while (now > prev && !g_peak.compare_exchange_weak(prev, now, std::memory_order_relaxed)) {
  }
}
void sub(std::size_t bytes) { g_current.fetch_sub(bytes, std::memory_order_relaxed); }
std::size_t current() { return g_current.load(); }
std::size_t peak() { return g_peak.load(); }
void reset_peak() { g_peak.store(g_current.load()); }
}  // namespace memtrack

namespace flops {
void add(FlopTag tag, std::uint64_t n) {
  g_flops[static_cast<std::size_t>(tag)].fetch_add(n, std::memory_order_relaxed);
}
std::uint64_t get(FlopTag tag) { return g_flops[static_cast<std::size_t>(tag)].load(); }
std::uint64_t total() {
  std::uint64_t t = 0;
  for (const auto& f : g_flops) t += f.load();
  return t;
}
void reset() {
  for (auto& f : g_flops) f.store(0);
}
}  // namespace flops

}  // namespace sda
