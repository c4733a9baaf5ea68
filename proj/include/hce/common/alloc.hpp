#pragma once

// Process-level allocator settings for the executables.

namespace hce {

/// Keeps freed heap memory mapped between tapes. Large per-op tensors would
/// otherwise be returned to the OS and page-faulted back in on every forward
/// pass. No-op outside glibc.
void retain_heap_memory();

}  // namespace hce
