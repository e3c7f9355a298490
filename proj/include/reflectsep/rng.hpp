#pragma once

#include <cstdint>
#include <random>
#include <string>

namespace reflectsep {

// Deterministic random source. All distribution code is hand-rolled on top of
// mt19937_64 so that results are reproducible bit-for-bit across runs and the
// full state can be serialized into checkpoints.
class RandomState {
public:
    explicit RandomState(std::uint64_t seed = 0) : eng_(seed) {}

    std::uint64_t next_u64() { return eng_(); }

    // Uniform double in [0, 1).
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // Uniform double in [lo, hi).
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [lo, hi], inclusive.
    int uniform_int(int lo, int hi);

    bool coin() { return (next_u64() & 1u) != 0; }

    // Box-Muller without a cached spare, so state stays a pure mt19937_64.
    double normal(double mean = 0.0, double stddev = 1.0);

    // Independent stream derived from (seed, index); used to make batch
    // construction order-independent.
    static RandomState substream(std::uint64_t seed, std::uint64_t index);

    std::string serialize() const;
    static RandomState deserialize(const std::string& s);

    bool operator==(const RandomState& o) const { return eng_ == o.eng_; }

private:
    std::mt19937_64 eng_;
};

std::uint64_t splitmix64(std::uint64_t x);

} // namespace reflectsep
