#pragma once

#include <cstddef>
#include <cstdint>

namespace dge::numkit {

/// Seeded SplitMix64 stream.
///
/// The state is a single 64-bit Weyl counter; every draw advances it by the
/// golden-ratio increment and returns a finalizer-mixed copy. Only integer
/// arithmetic is involved, so a seed produces the same 64-bit stream on every
/// platform. Real-valued draws are derived from the top 53 bits.
///
/// A single Rng is not safe for concurrent use.
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0) : state_(seed) {}

    std::uint64_t next_u64();

    // Uniform in [0, 1).
    double uniform();
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    // Uniform integer in [0, n). n must be positive.
    std::size_t uniform_index(std::size_t n);
    // Standard normal via Box-Muller (one draw per call, no cached spare).
    double normal();
    bool bernoulli(double p) { return uniform() < p; }

    // An independent generator derived from this stream's current state and a stream id.
    // Does not advance this generator.
    Rng derive(std::uint64_t stream) const;

    std::uint64_t state() const { return state_; }
    void set_state(std::uint64_t s) { state_ = s; }

    friend bool operator==(const Rng&, const Rng&) = default;

private:
    std::uint64_t state_;
};

// The SplitMix64 finalizer, exposed for deriving seeds.
std::uint64_t mix64(std::uint64_t z);

}  // namespace dge::numkit
