#include "reflectsep/rng.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace reflectsep {

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

int RandomState::uniform_int(int lo, int hi) {
    if (hi < lo) throw std::invalid_argument("uniform_int: hi < lo");
    const std::uint64_t range = static_cast<std::uint64_t>(hi) - static_cast<std::uint64_t>(lo) + 1u;
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % range;
    std::uint64_t u;
    do {
        u = next_u64();
    } while (u >= limit);
    return lo + static_cast<int>(u % range);
}

double RandomState::normal(double mean, double stddev) {
    const double u1 = 1.0 - uniform(); // (0, 1]
    const double u2 = uniform();
    const double z = std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
    return mean + stddev * z;
}

RandomState RandomState::substream(std::uint64_t seed, std::uint64_t index) {
    return RandomState(splitmix64(splitmix64(seed) ^ splitmix64(index + 0x51ed2701ull)));
}

std::string RandomState::serialize() const {
    std::ostringstream os;
    os << eng_;
    return os.str();
}

RandomState RandomState::deserialize(const std::string& s) {
    RandomState r;
    std::istringstream is(s);
    is >> r.eng_;
    if (is.fail()) throw std::invalid_argument("RandomState::deserialize: malformed state");
    return r;
}

} // namespace reflectsep
