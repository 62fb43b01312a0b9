#pragma once

#include <cstddef>
#include <new>

namespace floydnet::nn::memory {

// Process-wide accounting of bytes held by tensor buffers.
std::size_t live_bytes();
std::size_t peak_bytes();

void note_allocation(std::size_t bytes);
void note_deallocation(std::size_t bytes);

// Measures the high-water mark of tensor storage above the level that was
// live when the probe was constructed. Probes are not reentrant: the
// innermost probe resets the global peak.
class PeakProbe {
 public:
  PeakProbe();
  std::size_t peak_above_baseline() const;

 private:
  std::size_t baseline_;
};

// 64-byte aligned so vectorized kernels see the same layout on every run
inline constexpr std::align_val_t kAlignment{64};

template <typename T>
struct TrackingAllocator {
  using value_type = T;

  TrackingAllocator() noexcept = default;
  template <typename U>
  TrackingAllocator(const TrackingAllocator<U>&) noexcept {}

  T* allocate(std::size_t n) {
    note_allocation(n * sizeof(T));
    return static_cast<T*>(::operator new(n * sizeof(T), kAlignment));
  }
  void deallocate(T* p, std::size_t n) noexcept {
    note_deallocation(n * sizeof(T));
    ::operator delete(p, kAlignment);
  }

  template <typename U>
  bool operator==(const TrackingAllocator<U>&) const noexcept {
    return true;
  }
};

}  // namespace floydnet::nn::memory
