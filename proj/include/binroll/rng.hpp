#ifndef BINROLL_RNG_HPP
#define BINROLL_RNG_HPP

#include <cmath>
#include <cstdint>
#include <string>

namespace binroll {

// Counter-based uniform stream (splitmix64 over seed+counter). The state is
// two integers, so streams are trivially checkpointable and replayable, and
// draws can be sliced deterministically.
class RngStream {
public:
    RngStream() = default;
    RngStream(uint64_t seed, uint64_t counter = 0) : seed_(seed), counter_(counter) {}

    uint64_t next_u64() {
        uint64_t z = seed_ + 0x9e3779b97f4a7c15ULL * ++counter_;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    // Uniform on [0, 1).
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Box-Muller; consumes two uniforms per call for determinism.
    double normal() {
        double u1 = uniform();
        double u2 = uniform();
        if (u1 < 1e-300) u1 = 1e-300;
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925287 * u2);
    }

    // Integer in [0, n).
    uint64_t below(uint64_t n) { return n ? next_u64() % n : 0; }

    uint64_t seed() const { return seed_; }
    uint64_t counter() const { return counter_; }
    void set_state(uint64_t seed, uint64_t counter) { seed_ = seed; counter_ = counter; }

    // Derive an independent child stream, e.g. per-layer or per-purpose.
    RngStream child(const std::string& tag) const {
        uint64_t h = 1469598103934665603ULL ^ seed_;
        for (unsigned char c : tag) {
            h ^= c;
            h *= 1099511628211ULL;
        }
        return RngStream(h);
    }

private:
    uint64_t seed_ = 0;
    uint64_t counter_ = 0;
};

}  // namespace binroll

#endif
