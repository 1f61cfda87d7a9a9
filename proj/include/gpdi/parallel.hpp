#pragma once

#include <cstddef>
#include <functional>

namespace gpdi {

/// Process-wide worker bound. 0 means "hardware concurrency".
void set_thread_count(unsigned n) noexcept;
unsigned thread_count() noexcept;

/// Runs task(t, worker) for t in [0, tasks) on up to thread_count() workers.
/// Tasks are claimed dynamically, so callers must make results independent of
/// which worker ran which task. Exceptions from tasks are rethrown (first wins).
void parallel_for(std::size_t tasks, const std::function<void(std::size_t task, unsigned worker)>& task);

}  // namespace gpdi
