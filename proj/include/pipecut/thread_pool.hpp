// Copyright 2026 The pipecut authors
// SPDX-License-Identifier: Apache-2.0

#ifndef PIPECUT_THREAD_POOL_HPP
#define PIPECUT_THREAD_POOL_HPP

#include <condition_variable>
#include <cstdint>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace pipecut {

/// Persistent worker pool for intra-operator parallelism. parallel_for
/// partitions [0, count) into one contiguous block per worker, so every
/// index is computed exactly once by exactly one thread; kernels that keep
/// per-output-element accumulation serial are therefore bit-identical for
/// any thread count.
class ThreadPool {
public:
    explicit ThreadPool(int num_threads) : num_threads_(num_threads < 1 ? 1 : num_threads) {
        for (int i = 1; i < num_threads_; ++i)
            workers_.emplace_back([this, i] { worker_loop(i); });
    }

    ThreadPool(const ThreadPool&) = delete;
    ThreadPool& operator=(const ThreadPool&) = delete;

    ~ThreadPool() {
        {
            std::lock_guard<std::mutex> lock(mu_);
            stop_ = true;
        }
        work_cv_.notify_all();
        for (auto& t : workers_) t.join();
    }

    int num_threads() const { return num_threads_; }

    /// fn(begin, end) over a block partition of [0, count).
    void parallel_for(std::int64_t count, const std::function<void(std::int64_t, std::int64_t)>& fn) {
        if (count <= 0) return;
        if (num_threads_ == 1 || count == 1) {
            fn(0, count);
            return;
        }
        {
            std::lock_guard<std::mutex> lock(mu_);
            task_ = &fn;
            task_count_ = count;
            ++generation_;
            pending_ = num_threads_ - 1;
        }
        work_cv_.notify_all();
        run_block(0, count, 0);  // calling thread takes block 0
        std::unique_lock<std::mutex> lock(mu_);
        done_cv_.wait(lock, [this] { return pending_ == 0; });
        task_ = nullptr;
    }

private:
    void run_block(std::int64_t count, std::int64_t total, int index) {
        (void)count;
        std::int64_t chunk = (total + num_threads_ - 1) / num_threads_;
        std::int64_t begin = chunk * index;
        std::int64_t end = begin + chunk < total ? begin + chunk : total;
        if (begin < end) (*task_)(begin, end);
    }

    void worker_loop(int index) {
        std::uint64_t seen = 0;
        while (true) {
            std::unique_lock<std::mutex> lock(mu_);
            work_cv_.wait(lock, [&] { return stop_ || generation_ != seen; });
            if (stop_) return;
            seen = generation_;
            std::int64_t total = task_count_;
            lock.unlock();

            run_block(0, total, index);

            lock.lock();
            if (--pending_ == 0) done_cv_.notify_all();
        }
    }

    int num_threads_;
    std::vector<std::thread> workers_;
    std::mutex mu_;
    std::condition_variable work_cv_;
    std::condition_variable done_cv_;
    const std::function<void(std::int64_t, std::int64_t)>* task_ = nullptr;
    std::int64_t task_count_ = 0;
    std::uint64_t generation_ = 0;
    int pending_ = 0;
    bool stop_ = false;
};

}  // namespace pipecut

#endif
