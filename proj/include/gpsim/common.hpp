#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace gpsim {

// Error taxonomy. `category()` is stable and machine-readable; the CLI maps
// categories to exit codes and emits them in JSON error objects.
class Error : public std::runtime_error {
public:
    Error(std::string category, const std::string& what)
        : std::runtime_error(what), category_(std::move(category)) {}
    const std::string& category() const noexcept { return category_; }

private:
    std::string category_;
};

struct ConfigError : Error {
    explicit ConfigError(const std::string& m) : Error("config", m) {}
};
struct IngestError : Error {
    explicit IngestError(const std::string& m) : Error("ingest", m) {}
};
struct ContractError : Error {
    explicit ContractError(const std::string& m) : Error("contract", m) {}
};
struct NumericError : Error {
    explicit NumericError(const std::string& m) : Error("numeric", m) {}
};

uint64_t fnv1a64(std::string_view s);
uint64_t splitmix64(uint64_t x);

// Named sub-seed derivation. Every component that needs randomness receives a
// seed produced by seed_for(parent, "name"[, index]); nothing shares a raw
// generator, so adding draws in one component never shifts another.
uint64_t seed_for(uint64_t master, std::string_view name);
uint64_t seed_for(uint64_t master, std::string_view name, int index);

// Deterministic RNG. std::mt19937_64 output is fully specified by the
// standard; the distribution helpers below are hand-rolled because the
// std::*_distribution classes are implementation-defined.
class Rng {
public:
    explicit Rng(uint64_t seed) : gen_(seed) {}

    uint64_t next() { return gen_(); }

    // Uniform double in [0, 1), 53-bit resolution.
    double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    // Unbiased uniform integer in [0, n). n must be >= 1.
    uint64_t below(uint64_t n);
    int below_int(int n) { return static_cast<int>(below(static_cast<uint64_t>(n))); }

    // Standard normal via Box-Muller; pairs are cached.
    double normal();

    // Fisher-Yates shuffle.
    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (size_t i = v.size(); i > 1; --i) {
            std::swap(v[i - 1], v[below(i)]);
        }
    }

    // k distinct values from [0, n), in selection order.
    std::vector<int> sample_without_replacement(int n, int k);

private:
    std::mt19937_64 gen_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace gpsim
