#pragma once

namespace wmrl {

/// Keeps large temporaries on the heap instead of fresh mmap'd pages
/// (glibc only; no-op elsewhere). Call once from program entry points.
void tune_allocator();

}  // namespace wmrl
