#include "floydnet/nn/memory.hpp"

#include <atomic>

namespace floydnet::nn::memory {
namespace {

std::atomic<std::size_t> g_live{0};
std::atomic<std::size_t> g_peak{0};

}  // namespace

std::size_t live_bytes() { return g_live.load(std::memory_order_relaxed); }
std::size_t peak_bytes() { return g_peak.load(std::memory_order_relaxed); }

void note_allocation(std::size_t bytes) {
  const std::size_t now = g_live.fetch_add(bytes, std::memory_order_relaxed) + bytes;
  std::size_t peak = g_peak.load(std::memory_order_relaxed);
  while (now > peak && !g_peak.compare_exchange_weak(peak, now, std::memory_order_relaxed)) {
  }
}

void note_deallocation(std::size_t bytes) { g_live.fetch_sub(bytes, std::memory_order_relaxed); }

PeakProbe::PeakProbe() : baseline_(live_bytes()) { g_peak.store(baseline_, std::memory_order_relaxed); }

std::size_t PeakProbe::peak_above_baseline() const {
  const std::size_t peak = peak_bytes();
  return peak > baseline_ ? peak - baseline_ : 0;
}

}  // namespace floydnet::nn::memory
