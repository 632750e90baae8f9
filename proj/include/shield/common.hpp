#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace shield {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ShapeError : Error { using Error::Error; };
struct ValueError : Error { using Error::Error; };
struct DegenerateDistributionError : Error { using Error::Error; };
struct ValidationError : Error { using Error::Error; };
struct InfeasibilityError : Error { using Error::Error; };
struct ContractViolation : Error { using Error::Error; };
struct SizeError : Error { using Error::Error; };
struct ParseError : Error { using Error::Error; };
struct CheckpointError : Error { using Error::Error; };
struct MetricError : Error { using Error::Error; };
struct ConfigError : Error { using Error::Error; };
struct InputError : Error { using Error::Error; };

inline uint64_t splitmix64(uint64_t& state) {
    uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

/// Derives an independent seed for stream `stream` under a master seed.
/// Used to give every instance its own RNG so batch generation and
/// rollouts stay deterministic regardless of worker count.
inline uint64_t derive_seed(uint64_t master, uint64_t stream) {
    uint64_t s = master ^ (0x9e3779b97f4a7c15ULL * (stream + 1));
    splitmix64(s);
    return splitmix64(s);
}

/// Deterministic RNG wrapper. All real/integer draws are hand-rolled from
/// raw 64-bit output so results do not depend on the stdlib's distribution
/// implementations.
class Rng {
public:
    explicit Rng(uint64_t seed) : eng_(seed) {}

    uint64_t next_u64() { return eng_(); }

    /// Uniform double in [0, 1).
    double uniform() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [0, n), exact via rejection.
    uint64_t below(uint64_t n) {
        if (n == 0) throw ValueError("Rng::below: n must be positive");
        const uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        uint64_t x;
        do { x = next_u64(); } while (x >= limit);
        return x % n;
    }

    /// Uniform integer in [lo, hi] inclusive.
    int64_t int_in(int64_t lo, int64_t hi) {
        return lo + static_cast<int64_t>(below(static_cast<uint64_t>(hi - lo + 1)));
    }

    /// Chooses k distinct indices from [0, n) via partial Fisher-Yates.
    std::vector<int> choose(int n, int k) {
        std::vector<int> idx(static_cast<size_t>(n));
        for (int i = 0; i < n; ++i) idx[static_cast<size_t>(i)] = i;
        for (int i = 0; i < k; ++i) {
            int j = i + static_cast<int>(below(static_cast<uint64_t>(n - i)));
            std::swap(idx[static_cast<size_t>(i)], idx[static_cast<size_t>(j)]);
        }
        idx.resize(static_cast<size_t>(k));
        return idx;
    }

    std::string serialize() const {
        std::ostringstream os;
        os << eng_;
        return os.str();
    }

    void deserialize(const std::string& blob) {
        std::istringstream is(blob);
        is >> eng_;
        if (is.fail()) throw CheckpointError("corrupt RNG state");
    }

private:
    std::mt19937_64 eng_;
};

/// Runs fn(i) for i in [0, n) across at most `threads` workers with a
/// static partition (worker t handles i = t, t+T, ...). Exceptions are
/// captured and rethrown on the caller thread.
template <typename Fn>
void parallel_for(int n, int threads, Fn&& fn) {
    if (threads <= 1 || n <= 1) {
        for (int i = 0; i < n; ++i) fn(i, 0);
        return;
    }
    const int t_count = std::min(threads, n);
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(static_cast<size_t>(t_count));
    for (int t = 0; t < t_count; ++t) {
        pool.emplace_back([&, t]() {
            try {
                for (int i = t; i < n; i += t_count) fn(i, t);
            } catch (...) {
                errors[static_cast<size_t>(t)] = std::current_exception();
            }
        });
    }
    for (auto& th : pool) th.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

}  // namespace shield
