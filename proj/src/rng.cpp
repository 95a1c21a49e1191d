#include "curvesim/rng.hpp"

#include <cmath>

namespace curvesim {

namespace {

constexpr std::uint32_t kM0 = 0xD2511F53u;
constexpr std::uint32_t kM1 = 0xCD9E8D57u;
constexpr std::uint32_t kW0 = 0x9E3779B9u;
constexpr std::uint32_t kW1 = 0xBB67AE85u;

std::uint64_t splitmix64(std::uint64_t x)
{
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

std::array<std::uint32_t, 4> philox(std::array<std::uint32_t, 4> c, std::array<std::uint32_t, 2> k)
{
    for (int round = 0; round < 10; ++round) {
        const std::uint64_t p0 = std::uint64_t(kM0) * c[0];
        const std::uint64_t p1 = std::uint64_t(kM1) * c[2];
        c = {std::uint32_t(p1 >> 32) ^ c[1] ^ k[0], std::uint32_t(p1),
             std::uint32_t(p0 >> 32) ^ c[3] ^ k[1], std::uint32_t(p0)};
        k[0] += kW0;
        k[1] += kW1;
    }
    return c;
}

} // namespace

Rng::Rng(std::uint64_t seed, std::uint64_t stream) : seed_(seed), stream_(stream)
{
    const std::uint64_t k = splitmix64(seed);
    key_ = {std::uint32_t(k), std::uint32_t(k >> 32)};
    ctr_ = {0, 0, std::uint32_t(stream), std::uint32_t(stream >> 32)};
}

void Rng::refill()
{
    buf_ = philox(ctr_, key_);
    if (++ctr_[0] == 0)
        ++ctr_[1];
    pos_ = 0;
}

Rng::result_type Rng::operator()()
{
    if (pos_ > 2)
        refill();
    const std::uint64_t v = (std::uint64_t(buf_[pos_]) << 32) | buf_[pos_ + 1];
    pos_ += 2;
    return v;
}

double Rng::uniform()
{
    return (double((*this)() >> 11) + 0.5) * 0x1.0p-53;
}

double Rng::normal()
{
    if (has_spare_) {
        has_spare_ = false;
        return spare_;
    }
    const double u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    spare_ = r * std::sin(2.0 * kPi * u2);
    has_spare_ = true;
    return r * std::cos(2.0 * kPi * u2);
}

double Rng::exponential(double rate)
{
    return -std::log(uniform()) / rate;
}

Vec3 Rng::normal3(double sd)
{
    const double a = normal();
    const double b = normal();
    const double c = normal();
    return sd * Vec3(a, b, c);
}

Vec3 Rng::unit_vector()
{
    const double z = 2.0 * uniform() - 1.0;
    const double phi = 2.0 * kPi * uniform();
    const double s = std::sqrt(std::max(0.0, 1.0 - z * z));
    return {s * std::cos(phi), s * std::sin(phi), z};
}

std::uint64_t Rng::below(std::uint64_t n)
{
    const std::uint64_t limit = max() - max() % n;
    std::uint64_t v;
    do {
        v = (*this)();
    } while (v >= limit);
    return v % n;
}

Rng Rng::derive(std::uint64_t tag) const
{
    return Rng(splitmix64(seed_ ^ splitmix64(tag + 0x5851F42D4C957F2Dull)), stream_);
}

} // namespace curvesim
