#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace wgmc
{
//---------------------------------------------------------------------------//
/*!
 * Evaluate fn(i) for i in [0, n) on up to `threads` workers.
 *
 * Results land in slot i, so any reduction over the returned vector runs in
 * index order and the output does not depend on the worker count. The first
 * exception thrown by a task is rethrown on the calling thread.
 */
template<class Fn>
auto parallel_map(std::size_t n, unsigned threads, Fn&& fn)
    -> std::vector<decltype(fn(std::size_t{}))>
{
    using R = decltype(fn(std::size_t{}));
    std::vector<R> out(n);
    unsigned const workers
        = static_cast<unsigned>(std::min<std::size_t>(std::max(1u, threads), n));
    if (workers <= 1)
    {
        for (std::size_t i = 0; i < n; ++i)
        {
            out[i] = fn(i);
        }
        return out;
    }

    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    auto work = [&] {
        for (std::size_t i = next++; i < n; i = next++)
        {
            try
            {
                out[i] = fn(i);
            }
            catch (...)
            {
                std::lock_guard lock(error_mutex);
                if (!error)
                    error = std::current_exception();
                next = n;
            }
        }
    };
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (unsigned w = 0; w < workers; ++w)
    {
        pool.emplace_back(work);
    }
    for (auto& t : pool)
    {
        t.join();
    }
    if (error)
        std::rethrow_exception(error);
    return out;
}

}  // namespace wgmc
