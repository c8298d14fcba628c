#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <functional>
#include <mutex>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace gridpv {

/// Error carrying the "module.operation" context it was raised from,
/// surfaced verbatim by the CLI diagnostics.
class Error : public std::runtime_error {
public:
    Error(std::string where, const std::string& what)
        : std::runtime_error("[" + where + "] " + what), where_(std::move(where)) {}

    const std::string& where() const { return where_; }

private:
    std::string where_;
};

// ---------------------------------------------------------------------------
// Deterministic RNG. splitmix64 core with explicit uniform/normal transforms
// so streams are reproducible independent of the standard library's
// distribution implementations.
// ---------------------------------------------------------------------------

class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() {
        std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    /// Uniform double in [0, 1).
    double uniform() { return double(next_u64() >> 11) * 0x1.0p-53; }

    /// Uniform double in [lo, hi).
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [0, bound). bound must be > 0.
    std::uint64_t uniform_int(std::uint64_t bound) {
        // Lemire multiply-shift with rejection of the biased region.
        std::uint64_t x = next_u64();
        __uint128_t m = __uint128_t(x) * __uint128_t(bound);
        auto lo = std::uint64_t(m);
        if (lo < bound) {
            std::uint64_t t = (0 - bound) % bound;
            while (lo < t) {
                x = next_u64();
                m = __uint128_t(x) * __uint128_t(bound);
                lo = std::uint64_t(m);
            }
        }
        return std::uint64_t(m >> 64);
    }

    int uniform_int(int lo, int hi_inclusive) {
        return lo + int(uniform_int(std::uint64_t(hi_inclusive - lo + 1)));
    }

    /// Standard normal via Box-Muller (fresh pair each call, cos branch).
    double normal() {
        double u1 = uniform(), u2 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = uniform_int(std::uint64_t(i));
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    std::uint64_t state_;
};

/// Derive a child seed from a base seed and a stream index. Mixing keeps
/// neighbouring streams decorrelated even for consecutive indices.
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
    Rng r(base ^ (0xa0761d6478bd642fULL + stream * 0xe7037ed1a0b428dbULL));
    return r.next_u64();
}

// ---------------------------------------------------------------------------
// Deterministic data-parallel helper. Work is cut into fixed-size chunks
// whose boundaries do not depend on the worker count, so any reduction done
// per chunk (and combined in chunk order by the caller) is reproducible.
// ---------------------------------------------------------------------------

inline std::size_t chunk_count(std::size_t n, std::size_t chunk_size) {
    return n == 0 ? 0 : (n + chunk_size - 1) / chunk_size;
}

/// Runs fn(chunk_index, begin, end) over [0, n) split into fixed chunks.
/// fn must only write to per-chunk state.
inline void parallel_chunks(std::size_t n, std::size_t chunk_size, int jobs,
                            const std::function<void(std::size_t, std::size_t, std::size_t)>& fn) {
    if (chunk_size == 0) chunk_size = 1;
    const std::size_t nchunks = chunk_count(n, chunk_size);
    if (nchunks == 0) return;
    if (jobs <= 0) jobs = int(std::thread::hardware_concurrency());
    if (jobs < 1) jobs = 1;

    if (jobs == 1 || nchunks == 1) {
        for (std::size_t c = 0; c < nchunks; ++c)
            fn(c, c * chunk_size, std::min(n, (c + 1) * chunk_size));
        return;
    }

    std::vector<std::thread> pool;
    std::size_t nthreads = std::min<std::size_t>(std::size_t(jobs), nchunks);
    pool.reserve(nthreads);
    std::exception_ptr first_error;
    std::mutex err_mutex;
    std::atomic<std::size_t> next{0};
    for (std::size_t t = 0; t < nthreads; ++t) {
        pool.emplace_back([&] {
            for (;;) {
                std::size_t c = next.fetch_add(1);
                if (c >= nchunks) return;
                try {
                    fn(c, c * chunk_size, std::min(n, (c + 1) * chunk_size));
                } catch (...) {
                    std::lock_guard<std::mutex> lock(err_mutex);
                    if (!first_error) first_error = std::current_exception();
                    return;
                }
            }
        });
    }
    for (auto& th : pool) th.join();
    if (first_error) std::rethrow_exception(first_error);
}

/// Round half away from zero to 2 decimals (the stopping-rule convention).
inline double round2(double x) { return std::round(x * 100.0) / 100.0; }

/// Integer hundredths under the same rounding; use for threshold compares.
inline long long hundredths(double x) { return std::llround(x * 100.0); }

}  // namespace gridpv
