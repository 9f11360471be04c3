#pragma once

#include <cstdint>
#include <random>
#include <span>

namespace rmab {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

/**
 * Seedable generator with independent sub-streams: stream k of master seed s
 * is seeded from splitmix64(s ^ splitmix64(k)), so results do not depend on
 * how streams are scheduled across threads.
 */
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(splitmix64(seed)) {}

    static Rng stream(std::uint64_t master, std::uint64_t index) {
        return Rng(master ^ splitmix64(index + 0x632BE59BD9B4E019ULL));
    }

    /// Uniform on [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    /// Draws an index from a probability vector.
    int sample(std::span<const double> probs) {
        const double u = uniform();
        double acc = 0.0;
        int last = -1;
        for (std::size_t i = 0; i < probs.size(); ++i) {
            if (probs[i] <= 0.0) continue;
            acc += probs[i];
            last = static_cast<int>(i);
            if (u < acc) return last;
        }
        return last;
    }

    std::uint64_t next() { return engine_(); }

private:
    std::mt19937_64 engine_;
};

} // namespace rmab
