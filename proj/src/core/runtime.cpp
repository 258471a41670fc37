#include "wmrl/core/runtime.hpp"

#if __has_include(<malloc.h>)
#include <malloc.h>
#endif

namespace wmrl {

void tune_allocator() {
#if defined(M_MMAP_THRESHOLD) && defined(M_TRIM_THRESHOLD) && defined(M_TOP_PAD)
  // glibc caps the mmap threshold at 32 MiB; larger values are rejected.
  mallopt(M_MMAP_THRESHOLD, 32 << 20);
  mallopt(M_TRIM_THRESHOLD, 512 << 20);
  mallopt(M_TOP_PAD, 64 << 20);
#endif
}

}  // namespace wmrl
