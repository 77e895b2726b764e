#pragma once

#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace mixinfer::orchestrator {

/// Training allocates and frees many same-sized matrices of a few megabytes.
/// glibc serves those from fresh mmaps by default, and the page faults cost
/// as much as the arithmetic. Keeping them on the heap halves epoch time.
inline void tune_allocator() {
#if defined(__GLIBC__)
  mallopt(M_MMAP_THRESHOLD, 256 << 20);
  mallopt(M_TRIM_THRESHOLD, 512 << 20);
  mallopt(M_TOP_PAD, 64 << 20);
#endif
}

}  // namespace mixinfer::orchestrator
