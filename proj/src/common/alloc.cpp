#include "hce/common/alloc.hpp"

#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace hce {

void retain_heap_memory() {
#if defined(__GLIBC__)
  // 32 MiB is the largest mmap threshold glibc accepts on 64-bit targets.
  constexpr int kMmapLimit = 32 << 20;
  mallopt(M_MMAP_THRESHOLD, kMmapLimit);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
#endif
}

}  // namespace hce
