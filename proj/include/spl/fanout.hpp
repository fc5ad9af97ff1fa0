#pragma once

#include <condition_variable>
#include <exception>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace spl {

/// Run every task, at most `max_concurrency` at a time (0 = unbounded).
/// Blocks until all complete; the first exception is rethrown after all
/// running tasks join.
inline void run_parallel(std::vector<std::function<void()>> tasks, int max_concurrency = 0) {
    if (tasks.empty()) return;
    if (max_concurrency == 1) {
        for (auto& task : tasks) task();
        return;
    }

    std::mutex gate_mutex;
    std::condition_variable gate_cv;
    int running = 0;
    std::mutex error_mutex;
    std::exception_ptr first_error;

    std::vector<std::thread> threads;
    threads.reserve(tasks.size());
    for (auto& task : tasks) {
        if (max_concurrency > 0) {
            std::unique_lock lock(gate_mutex);
            gate_cv.wait(lock, [&] { return running < max_concurrency; });
            ++running;
        }
        threads.emplace_back([&, task = std::move(task)]() {
            try {
                task();
            } catch (...) {
                std::lock_guard lock(error_mutex);
                if (!first_error) first_error = std::current_exception();
            }
            if (max_concurrency > 0) {
                {
                    std::lock_guard lock(gate_mutex);
                    --running;
                }
                gate_cv.notify_one();
            }
        });
    }
    for (auto& t : threads) t.join();
    if (first_error) std::rethrow_exception(first_error);
}

}  // namespace spl
