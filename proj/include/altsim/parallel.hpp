// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <functional>

namespace altsim {

/// Worker count: ALTSIM_THREADS if set to a positive integer, otherwise the
/// hardware concurrency (at least 1).
std::size_t worker_threads();

/// Runs fn(i) for i in [0, n) on up to worker_threads() threads. Each index
/// runs exactly once; the first exception thrown is rethrown after all
/// workers stop.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace altsim
