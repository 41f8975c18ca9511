#pragma once

// Seeded, splittable random number generation plus a deterministic
// parallel-for helper.  Monte Carlo loops are split into fixed chunks,
// each chunk owning an independent generator derived from (seed, chunk
// index), so results do not depend on the number of worker threads.

#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <functional>
#include <random>
#include <thread>
#include <vector>

namespace ficlab {

// SplitMix64 step; used to whiten user seeds and derive stream seeds.
inline std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

class Rng {
public:
    explicit Rng(std::uint64_t seed, std::uint64_t stream = 0) {
        std::uint64_t s = seed;
        std::uint64_t a = splitmix64(s);
        s ^= (stream + 1) * 0xD1B54A32D192ED03ULL;
        std::uint64_t b = splitmix64(s);
        engine_.seed(a ^ (b << 1));
    }

    std::uint64_t next_u64() { return engine_(); }

    // uniform on [0,1) with 53 random bits
    double uniform() {
        return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    }

    // standard normal via Box-Muller, one spare cached
    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1, u2;
        do {
            u1 = uniform();
        } while (u1 <= 0.0);
        u2 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double a = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(a);
        have_spare_ = true;
        return r * std::cos(a);
    }

    // Poisson draw; inversion for small mean, PTRS rejection otherwise
    long poisson(double mean) {
        if (mean < 30.0) {
            double l = std::exp(-mean), p = 1.0;
            long k = 0;
            do {
                ++k;
                p *= uniform();
            } while (p > l);
            return k - 1;
        }
        // Hormann's PTRS transformed rejection
        double b = 0.931 + 2.53 * std::sqrt(mean);
        double a = -0.059 + 0.02483 * b;
        double inv_alpha = 1.1239 + 1.1328 / (b - 3.4);
        double v_r = 0.9277 - 3.6224 / (b - 2.0);
        for (;;) {
            double u = uniform() - 0.5;
            double v = uniform();
            double us = 0.5 - std::fabs(u);
            double k = std::floor((2.0 * a / us + b) * u + mean + 0.43);
            if (us >= 0.07 && v <= v_r) return static_cast<long>(k);
            if (k < 0.0 || (us < 0.013 && v > us)) continue;
            if (std::log(v * inv_alpha / (a / (us * us) + b)) <=
                k * std::log(mean) - mean - std::lgamma(k + 1.0))
                return static_cast<long>(k);
        }
    }

private:
    std::mt19937_64 engine_;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

inline unsigned worker_count() {
    if (const char* env = std::getenv("FICLAB_THREADS")) {
        int k = std::atoi(env);
        if (k >= 1) return static_cast<unsigned>(k);
    }
    unsigned hc = std::thread::hardware_concurrency();
    return hc ? hc : 1;
}

// Runs fn(chunk_index, begin, end) over [0, n) split into n_chunks
// contiguous ranges.  The chunk layout is fixed by n and n_chunks alone,
// so any thread count produces identical per-chunk work.
inline void parallel_chunks(std::size_t n, std::size_t n_chunks,
                            const std::function<void(std::size_t, std::size_t,
                                                     std::size_t)>& fn) {
    if (n == 0) return;
    if (n_chunks > n) n_chunks = n;
    unsigned workers = worker_count();
    if (workers <= 1 || n_chunks <= 1) {
        for (std::size_t c = 0; c < n_chunks; ++c) {
            std::size_t b = c * n / n_chunks, e = (c + 1) * n / n_chunks;
            fn(c, b, e);
        }
        return;
    }
    std::vector<std::thread> pool;
    std::atomic<std::size_t> next{0};
    auto run = [&] {
        for (;;) {
            std::size_t c = next.fetch_add(1);
            if (c >= n_chunks) break;
            std::size_t b = c * n / n_chunks, e = (c + 1) * n / n_chunks;
            fn(c, b, e);
        }
    };
    unsigned nt = std::min<std::size_t>(workers, n_chunks);
    pool.reserve(nt);
    for (unsigned t = 0; t < nt; ++t) pool.emplace_back(run);
    for (auto& th : pool) th.join();
}

} // namespace ficlab
