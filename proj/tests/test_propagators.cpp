#include <doctest.h>

#include <cmath>
#include <limits>

#include "curvesim/error.hpp"
#include "curvesim/propagators.hpp"
#include "curvesim/stats.hpp"
#include "curvesim/validation.hpp"

using namespace curvesim;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

RadiationProblem problem(Geometry g, double k_r, double r0, double dt, double D = 1e-12, double sigma = 1e-9)
{
    RadiationProblem p;
    p.geometry = g;
    p.D = D;
    p.sigma = sigma;
    p.k_r = k_r;
    p.r0 = r0;
    p.dt = dt;
    return p;
}

// Closed-form survival for a radiation boundary on the half line and outside
// a sphere (first passage with partial reflection).
double survival_1d(double D, double sigma, double k, double r0, double t)
{
    const double x = r0 - sigma, a = x / std::sqrt(4 * D * t);
    if (std::isinf(k))
        return std::erf(a);
    const double h = k / D;
    return 1.0 - (std::erfc(a) - std::exp(h * x + h * h * D * t) * std::erfc(a + h * std::sqrt(D * t)));
}

// exp(x^2) erfc(x), with the asymptotic series where exp overflows.
double erfcx(double x)
{
    if (x < 25.0)
        return std::exp(x * x) * std::erfc(x);
    const double q = 1.0 / (2.0 * x * x);
    return 1.0 / (x * std::sqrt(M_PI)) * (1.0 - q + 3.0 * q * q - 15.0 * q * q * q);
}

double survival_3d(double D, double sigma, double k, double r0, double t)
{
    const double kD = 4 * M_PI * sigma * D;
    const double a = (r0 - sigma) / std::sqrt(4 * D * t);
    if (std::isinf(k))
        return 1.0 - sigma / r0 * std::erfc(a);
    const double alpha = (1 + k / kD) / sigma;
    const double b = a + alpha * std::sqrt(D * t);
    return 1.0 - sigma / r0 * k / (k + kD) * (std::erfc(a) - std::exp(-a * a) * erfcx(b));
}

} // namespace

TEST_CASE("reflecting limit keeps all probability")
{
    for (Geometry g : {Geometry::HalfLine1D, Geometry::Radial2D, Geometry::Radial3D}) {
        const auto prop = solve_radiation_pde(problem(g, 0.0, 2e-9, 1e-6));
        CHECK(std::abs(prop.survival().back() - 1.0) < 1e-6);
        CHECK_FALSE(prop.sample_reaction_time(0.999999).has_value());
    }
}

TEST_CASE("1D survival against the closed form")
{
    const double D = 1e-12, s = 1e-9, dt = 1e-6;
    for (double k : {D / s, 10 * D / s, kInf})
        for (double r0 : {1.2e-9, 2e-9, 4e-9}) {
            const double got = solve_radiation_pde(problem(Geometry::HalfLine1D, k, r0, dt)).survival().back();
            CHECK(std::abs(got - survival_1d(D, s, k, r0, dt)) < 2e-4);
        }
}

TEST_CASE("3D survival against the closed form")
{
    const double D = 1e-12, s = 1e-9;
    SUBCASE("reference rates")
    {
        const auto prop = solve_radiation_pde(problem(Geometry::Radial3D, 1e-11, 2e-9, 1e-5));
        CHECK(std::abs(prop.survival().back() - survival_3d(D, s, 1e-11, 2e-9, 1e-5)) < 2e-4);
    }
    SUBCASE("scan")
    {
        for (double k : {4 * M_PI * s * D, 1e-19, kInf})
            for (double r0 : {1.1e-9, 1.5e-9, 3e-9}) {
                const auto prop = solve_radiation_pde(problem(Geometry::Radial3D, k, r0, 1e-6));
                CHECK(std::abs(prop.survival().back() - survival_3d(D, s, k, r0, 1e-6)) < 2e-4);
            }
    }
    SUBCASE("intermediate times")
    {
        GridParams gp;
        gp.keep_history = true;
        const auto prop = solve_radiation_pde(problem(Geometry::Radial3D, 1e-19, 1.5e-9, 1e-6), gp);
        for (double f : {0.1, 0.37, 0.8})
            CHECK(std::abs(prop.survival_at(f * 1e-6) - survival_3d(D, s, 1e-19, 1.5e-9, f * 1e-6)) < 5e-4);
    }
}

TEST_CASE("survival plus absorbed flux is one")
{
    for (Geometry g : {Geometry::HalfLine1D, Geometry::Radial2D, Geometry::Radial3D})
        for (double k : {0.0, 1e-12, kInf}) {
            const auto prop = solve_radiation_pde(problem(g, k, 1.3e-9, 1e-6));
            for (std::size_t i = 0; i < prop.survival().size(); ++i)
                CHECK(std::abs(prop.survival()[i] + prop.absorbed()[i] - 1.0) < 1e-6);
            REQUIRE(prop.t_grid().size() == prop.survival().size());
            for (std::size_t i = 1; i < prop.survival().size(); ++i)
                CHECK(prop.survival()[i] <= prop.survival()[i - 1]);
        }
}

TEST_CASE("grid convergence at nanometre scales")
{
    const auto p = problem(Geometry::Radial3D, 1e-11, 2e-9, 1e-5);
    const double a = solve_radiation_pde(p).survival().back();
    const double b = solve_radiation_pde(p, GridParams{}.refined()).survival().back();
    CHECK(std::abs(a - b) < 1e-4);
}

TEST_CASE("tiny step leaves the pair where it started")
{
    const auto prop = solve_radiation_pde(problem(Geometry::Radial3D, 1e-11, 1e-8, 1e-12));
    CHECK(std::abs(prop.survival().back() - 1.0) < 1e-6);
    Rng rng(3, 0);
    double sum = 0.0;
    for (int k = 0; k < 40000; ++k)
        sum += prop.sample_radius(rng.uniform());
    const auto& f = prop.r_grid();
    const auto it = std::upper_bound(f.begin(), f.end(), 1e-8);
    CHECK(std::abs(sum / 40000 - 1e-8) < *it - *(it - 1));
}

TEST_CASE("radius sampling endpoints")
{
    const auto prop = solve_radiation_pde(problem(Geometry::Radial3D, 1e-12, 1.5e-9, 1e-6));
    CHECK(prop.sample_radius(0.0) == doctest::Approx(1e-9).epsilon(1e-12));
    CHECK(prop.sample_radius(1.0) == doctest::Approx(prop.r_max()).epsilon(1e-12));
    CHECK(prop.r_max() == doctest::Approx(1.5e-9 + 6 * std::sqrt(2e-18)).epsilon(1e-9));
}

TEST_CASE("reaction time sampling")
{
    const auto prop = solve_radiation_pde(problem(Geometry::Radial3D, 1e-12, 1.5e-9, 1e-6));
    const double S = prop.survival().back();
    CHECK_FALSE(prop.sample_reaction_time(S).has_value());
    const auto t = prop.sample_reaction_time(1.0 - 1e-12);
    REQUIRE(t.has_value());
    CHECK(*t <= prop.t_grid()[1]);
    // Reaction times follow 1 - S(t), conditioned on reacting.
    Rng rng(4, 0);
    std::vector<double> times;
    while (times.size() < 20000)
        if (auto r = prop.sample_reaction_time(rng.uniform()))
            times.push_back(*r);
    const auto ks = ks_one_sample(times, [&](double x) { return (1.0 - prop.survival_at(x)) / (1.0 - S); });
    CHECK(ks.p_value > 0.01);
}

TEST_CASE("invalid problems are rejected")
{
    CHECK_THROWS_AS(solve_radiation_pde(problem(Geometry::Radial3D, 1e-12, 0.5e-9, 1e-6)), InputError);
    CHECK_THROWS_AS(solve_radiation_pde(problem(Geometry::Radial3D, -1.0, 2e-9, 1e-6)), InputError);
    CHECK_THROWS_AS(solve_radiation_pde(problem(Geometry::Radial3D, 1e-12, 2e-9, 0.0)), InputError);
    GridParams bad;
    bad.radial_cells = 1;
    CHECK_THROWS_AS(solve_radiation_pde(problem(Geometry::Radial3D, 1e-12, 2e-9, 1e-6), bad), InputError);
    const auto prop = solve_radiation_pde(problem(Geometry::Radial3D, 1e-12, 2e-9, 1e-6));
    CHECK_THROWS_AS(prop.sample_reaction_time(0.0), InputError);
    CHECK_THROWS_AS(prop.sample_radius(1.5), InputError);
}

TEST_CASE("reaction is certain from contact in the absorbing limit")
{
    const auto prop = solve_radiation_pde(problem(Geometry::HalfLine1D, kInf, 1e-9, 1e-6));
    CHECK(prop.survival().back() < 0.01);
    const auto prop3 = solve_radiation_pde(problem(Geometry::Radial3D, kInf, 1e-9, 1e-6));
    CHECK(prop3.survival().back() < 0.01);
}

TEST_CASE("contact out of reach gives a free propagator")
{
    const auto prop = solve_radiation_pde(problem(Geometry::Radial3D, kInf, 1e-6, 1e-9));
    CHECK(prop.contact_unreachable());
    CHECK(prop.survival().back() == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("2D survival matches the Brownian oracle")
{
    const auto p = problem(Geometry::Radial2D, 2 * M_PI * 1e-12, 1.5e-9, 1e-6);
    const double S = solve_radiation_pde(p).survival().back();
    BdOracleConfig c;
    c.problem = p;
    c.trials = 40000;
    Rng rng(7, 0);
    const MeanSE bd = bd_oracle(c, rng).final_survival();
    CHECK(std::abs(S - bd.mean) < 2.5 * bd.se);
}

TEST_CASE("angular propagator")
{
    const double r = 2e-9, D = 1e-12;
    SUBCASE("normalized")
    {
        for (double x : {1e-4, 0.1, 10.0})
            CHECK(solve_angular_pde(D, r, x * r * r / D).total() == doctest::Approx(1.0).epsilon(1e-9));
    }
    SUBCASE("heat kernel mean")
    {
        const auto a = solve_angular_pde(D, r, 0.1 * r * r / D);
        Rng rng(8, 0);
        std::vector<double> c;
        for (int k = 0; k < 50000; ++k)
            c.push_back(std::cos(a.sample_theta(rng.uniform())));
        const MeanSE m = mean_se(c);
        CHECK(std::abs(m.mean - std::exp(-0.2)) < 2.5 * m.se);
    }
    SUBCASE("long times are isotropic")
    {
        const auto a = solve_angular_pde(D, r, 1e3 * r * r / D);
        Rng rng(9, 0);
        std::vector<double> c;
        for (int k = 0; k < 50000; ++k)
            c.push_back(std::cos(a.sample_theta(rng.uniform())));
        CHECK(std::abs(mean_se(c).mean) < 2.5 * mean_se(c).se);
    }
    CHECK_THROWS_AS(solve_angular_pde(D, 0.0, 1e-6), InputError);
}

TEST_CASE("free displacement")
{
    Rng rng(10, 0);
    CHECK(sample_free_displacement(0.0, 1.0, rng).norm() == 0.0);
    const double D = 1e-12, dt = 1e-3;
    std::vector<double> sq;
    for (int k = 0; k < 40000; ++k)
        sq.push_back(sample_free_displacement(D, dt, rng).squaredNorm());
    CHECK(mean_se(sq).mean / (6 * D * dt) == doctest::Approx(1.0).epsilon(0.03));
    const auto v = sample_free_displacement(D, dt, 2, rng);
    CHECK(v.size() == 2);
}

TEST_CASE("theta-z displacement")
{
    Rng rng(11, 0);
    const ThetaZ zero = sample_theta_z(0.0, 1e-8, 1.0, rng);
    CHECK(zero.dtheta == 0.0);
    CHECK(zero.dz == 0.0);
    const double D = 1e-12, r = 1e-8, dt = 1e-6;
    std::vector<double> z2, th;
    for (int k = 0; k < 40000; ++k) {
        const ThetaZ s = sample_theta_z(D, r, dt, rng);
        z2.push_back(s.dz * s.dz);
        th.push_back(s.dtheta);
    }
    CHECK(mean_se(z2).mean / (2 * D * dt) == doctest::Approx(1.0).epsilon(0.03));
    for (double t : th)
        REQUIRE(std::abs(t) <= M_PI);
}

TEST_CASE("wrap_angle")
{
    CHECK(wrap_angle(0.0) == 0.0);
    CHECK(wrap_angle(3 * M_PI) == doctest::Approx(M_PI));
    CHECK(wrap_angle(-M_PI) == doctest::Approx(M_PI));
    CHECK(wrap_angle(-0.5) == doctest::Approx(-0.5));
}
