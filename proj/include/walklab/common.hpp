#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace walklab {

inline constexpr const char* kVersion = "0.3.0";

// Error kinds map onto CLI exit codes: usage=1, data=2, numeric=3.
enum class ErrorKind { Usage, Data, Numeric, Internal };

class WalklabError : public std::runtime_error {
public:
    WalklabError(ErrorKind kind, const std::string& msg)
        : std::runtime_error(msg), kind_(kind) {}
    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

class ParseError : public WalklabError {
public:
    explicit ParseError(const std::string& msg) : WalklabError(ErrorKind::Data, msg) {}
};

class IntegrityError : public WalklabError {
public:
    explicit IntegrityError(const std::string& msg) : WalklabError(ErrorKind::Data, msg) {}
};

class ShapeError : public WalklabError {
public:
    explicit ShapeError(const std::string& msg) : WalklabError(ErrorKind::Data, msg) {}
};

class ContractError : public WalklabError {
public:
    explicit ContractError(const std::string& msg) : WalklabError(ErrorKind::Data, msg) {}
};

class NumericError : public WalklabError {
public:
    explicit NumericError(const std::string& msg) : WalklabError(ErrorKind::Numeric, msg) {}
};

class UsageError : public WalklabError {
public:
    explicit UsageError(const std::string& msg) : WalklabError(ErrorKind::Usage, msg) {}
};

// FNV-1a, used for config fingerprints and file digests.
inline std::uint64_t fnv1a64(const void* bytes, std::size_t len, std::uint64_t seed = 0xcbf29ce484222325ULL) {
    const auto* p = static_cast<const unsigned char*>(bytes);
    std::uint64_t h = seed;
    for (std::size_t i = 0; i < len; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::uint64_t fnv1a64(std::string_view s, std::uint64_t seed = 0xcbf29ce484222325ULL) {
    return fnv1a64(s.data(), s.size(), seed);
}

std::string to_hex(std::uint64_t v);

// Deterministic RNG. The mt19937_64 engine is pinned by the standard but the
// std:: distributions are not, so every draw here is built from raw engine
// output and behaves the same on any conforming platform.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : seed_(seed), engine_(seed) {}

    // Independent stream derived from this seed and a label.
    Rng derive(std::string_view label) const {
        return Rng(fnv1a64(label, seed_));
    }
    Rng derive(std::string_view label, std::uint64_t n) const {
        std::uint64_t h = fnv1a64(label, seed_);
        h = fnv1a64(&n, sizeof n, h);
        return Rng(h);
    }

    std::uint64_t next_u64() { return engine_(); }

    // Uniform in [0, 1).
    double uniform01() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

    // Uniform index in [0, n), rejection sampled.
    std::size_t index(std::size_t n);

    bool bernoulli(double p) { return uniform01() < p; }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        if (v.size() < 2) return;
        for (std::size_t i = v.size() - 1; i > 0; --i) {
            std::size_t j = index(i + 1);
            std::swap(v[i], v[j]);
        }
    }

    std::uint64_t seed() const { return seed_; }

private:
    std::uint64_t seed_ = 0;
    std::mt19937_64 engine_;
};

std::string read_file(const std::string& path);
void write_file(const std::string& path, std::string_view contents);

}  // namespace walklab
