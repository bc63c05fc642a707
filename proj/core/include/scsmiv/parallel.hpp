#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>

namespace scsmiv {

/// Seed for an independent RNG stream, a pure function of (seed, stream, domain).
/// Work items draw from their own stream, so results never depend on scheduling.
std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t stream, std::uint64_t domain = 0) noexcept;

/// Worker count from SCSMIV_THREADS, else the hardware concurrency (at least 1).
std::size_t default_thread_count();

/// Runs body(0..count-1) on up to `threads` workers (0 = default_thread_count()).
/// The first exception thrown by any item is rethrown after all workers join.
void parallel_for(std::size_t count, std::size_t threads, const std::function<void(std::size_t)>& body);

}  // namespace scsmiv
