#pragma once

#include <array>
#include <cstdint>

#include "curvesim/vec.hpp"

namespace curvesim {

// Philox4x32-10 counter-based generator. A (seed, stream) pair selects an
// independent sequence; trajectories use stream = trajectory index so that
// results do not depend on worker scheduling.
class Rng {
public:
    using result_type = std::uint64_t;

    explicit Rng(std::uint64_t seed = 0, std::uint64_t stream = 0);

    static constexpr result_type min() { return 0; }
    static constexpr result_type max() { return ~result_type(0); }
    result_type operator()();

    // Uniform on the open interval (0, 1).
    double uniform();
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    double normal();
    double normal(double sd) { return sd * normal(); }
    double exponential(double rate);
    Vec3 normal3(double sd);
    Vec3 unit_vector();
    std::uint64_t below(std::uint64_t n);

    // Child generator with a distinct key, derived deterministically.
    Rng derive(std::uint64_t tag) const;

    std::uint64_t seed() const { return seed_; }
    std::uint64_t stream() const { return stream_; }

private:
    void refill();

    std::uint64_t seed_;
    std::uint64_t stream_;
    std::array<std::uint32_t, 2> key_{};
    std::array<std::uint32_t, 4> ctr_{};
    std::array<std::uint32_t, 4> buf_{};
    int pos_ = 4;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

} // namespace curvesim
