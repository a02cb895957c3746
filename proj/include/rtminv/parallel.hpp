#pragma once

#include <cstddef>
#include <functional>

namespace rtminv {

/// Runs body(i) for i in [0, n) on up to `threads` workers (0 = hardware
/// concurrency). Indices are claimed dynamically, so body must not depend on
/// which worker runs it. The first exception thrown is rethrown after all
/// workers stop.
void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& body);

int resolve_threads(int threads);

}  // namespace rtminv
