#include "stbln/runtime.hpp"

#include <malloc.h>

namespace stbln {

void tune_allocator() {
    mallopt(M_MMAP_THRESHOLD, 1 << 30);
    mallopt(M_TRIM_THRESHOLD, 1 << 30);
}

}  // namespace stbln
