#pragma once

namespace stbln {

/// Keeps freed tensor buffers in the process heap instead of returning them
/// to the OS. Training allocates and frees many multi-megabyte buffers per
/// step; without this each one is re-faulted page by page. Call once from main().
void tune_allocator();

}  // namespace stbln
