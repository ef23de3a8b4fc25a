#pragma once

// Shared plumbing: error taxonomy, byte hashing, deterministic chunked
// parallelism. Everything here is independent of the model code.

#include <cstdint>
#include <cstdlib>
#include <functional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

namespace badt2i {

// ----------------------------- errors -----------------------------
// Each class maps to one CLI exit code (see tools/ and README).

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct BoundsError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct GateError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// ----------------------------- hashing -----------------------------

// FNV-1a over raw bytes. Stable across platforms; used for config hashes,
// vocabulary hashes and parameter checksums (not for security).
inline uint64_t fnv1a_bytes(const void* data, size_t n, uint64_t h = 0xcbf29ce484222325ULL) {
    const unsigned char* p = static_cast<const unsigned char*>(data);
    for (size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline uint64_t fnv1a(std::string_view s, uint64_t h = 0xcbf29ce484222325ULL) {
    return fnv1a_bytes(s.data(), s.size(), h);
}

inline std::string hash_hex(uint64_t h) {
    static const char* digits = "0123456789abcdef";
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i) {
        out[i] = digits[h & 0xf];
        h >>= 4;
    }
    return out;
}

// ----------------------------- parallelism -----------------------------

inline int worker_count() {
    if (const char* env = std::getenv("BADT2I_THREADS")) {
        int n = std::atoi(env);
        if (n >= 1) return n;
    }
    unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : static_cast<int>(hw);
}

// Runs fn(chunk) for chunk in [0, n_chunks). Chunks are assigned
// round-robin to a fixed-size pool, so any per-chunk output is identical
// for every worker count; reductions over chunk outputs must be done by
// the caller in chunk order.
inline void parallel_chunks(int n_chunks, const std::function<void(int)>& fn) {
    int workers = std::min(worker_count(), n_chunks);
    if (workers <= 1) {
        for (int c = 0; c < n_chunks; ++c) fn(c);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(workers);
    std::vector<std::exception_ptr> errors(workers);
    for (int w = 0; w < workers; ++w) {
        pool.emplace_back([&, w]() {
            try {
                for (int c = w; c < n_chunks; c += workers) fn(c);
            } catch (...) {
                errors[w] = std::current_exception();
            }
        });
    }
    for (auto& t : pool) t.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

}  // namespace badt2i
