#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <mutex>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "trulr/random.hpp"

namespace trulr {

class ReplicationError : public std::runtime_error {
public:
    ReplicationError(std::size_t rep, const std::string& what)
        : std::runtime_error("replication " + std::to_string(rep) + " failed: " + what), rep(rep) {}
    std::size_t rep;
};

// 0 means "use every hardware thread".
inline unsigned resolve_threads(unsigned threads) {
    if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
    return threads;
}

// result[i] = task(RandomStream(seed, stream_base + i)); each index is written by
// exactly one worker, so the output does not depend on the thread count.
template <class T, class Task>
std::vector<T> replicate_streams(std::size_t reps, std::uint64_t seed, Task&& task, unsigned threads = 0,
                                 std::uint64_t stream_base = 0) {
    std::vector<T> out(reps);
    const unsigned nt = std::min<std::size_t>(resolve_threads(threads), std::max<std::size_t>(reps, 1));
    std::atomic<std::size_t> next{0};
    std::mutex err_mu;
    std::size_t err_rep = reps;
    std::string err_what;
    const std::size_t chunk = std::max<std::size_t>(1, reps / (static_cast<std::size_t>(nt) * 32));

    auto worker = [&] {
        for (;;) {
            const std::size_t begin = next.fetch_add(chunk);
            if (begin >= reps) return;
            const std::size_t end = std::min(reps, begin + chunk);
            for (std::size_t i = begin; i < end; ++i) {
                try {
                    RandomStream rs(seed, stream_base + i);
                    out[i] = task(rs);
                } catch (const std::exception& e) {
                    std::lock_guard<std::mutex> lock(err_mu);
                    if (i < err_rep) { err_rep = i; err_what = e.what(); }
                    return;
                }
            }
        }
    };

    if (nt <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (unsigned t = 0; t < nt; ++t) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }
    if (err_rep < reps) throw ReplicationError(err_rep, err_what);
    return out;
}

}  // namespace trulr
