#include <doctest.h>

#include <cmath>
#include <limits>

#include "curvesim/scenario.hpp"
#include "curvesim/validation.hpp"

using namespace curvesim;

TEST_CASE("pearson")
{
    const std::vector<double> x = {1, 2, 3, 4, 5, 6};
    std::vector<double> y;
    for (double v : x)
        y.push_back(3.0 - 2.0 * v);
    CHECK(pearson(x, x) == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(pearson(x, y) == doctest::Approx(-1.0).epsilon(1e-14));
    CHECK_THROWS_AS(pearson(x, std::vector<double>(6, 2.0)), StatisticsError);
    CHECK_THROWS_AS(pearson({1, 2}, {1, 2, 3}), StatisticsError);
}

TEST_CASE("block bootstrap interval contains the estimate")
{
    Rng rng(60, 0);
    std::vector<double> x, y;
    double ar = 0.0;
    for (int k = 0; k < 400; ++k) {
        ar = 0.8 * ar + rng.normal();
        x.push_back(ar);
        y.push_back(ar + rng.normal());
    }
    const Correlation c = correlate(x, y, 20, 1000, rng);
    CHECK(c.r == doctest::Approx(pearson(x, y)));
    CHECK(c.ci.contains(c.r));
    CHECK(c.ci.lo > 0.0);
    CHECK(c.ci.hi <= 1.0);
}

TEST_CASE("mean and standard error")
{
    const MeanSE m = mean_se({1, 2, 3, 4});
    CHECK(m.mean == 2.5);
    CHECK(m.sd == doctest::Approx(std::sqrt(5.0 / 3.0)));
    CHECK(m.se == doctest::Approx(std::sqrt(5.0 / 3.0) / 2.0));
    const MeanSE b = mean_se_binary(30, 100);
    CHECK(b.mean == doctest::Approx(0.3));
    CHECK(b.se == doctest::Approx(std::sqrt(0.3 * 0.7 / 100)).epsilon(0.01));
    CHECK(joint_z(m, m) == 0.0);
    MeanSE a{1.0, 0.3, 0, 10}, c{2.0, 0.4, 0, 10};
    CHECK(joint_z(a, c) == doctest::Approx(2.0));
}

TEST_CASE("goodness-of-fit tests")
{
    Rng rng(61, 0);
    std::vector<double> u(5000), v(5000), w(5000);
    for (std::size_t i = 0; i < u.size(); ++i) {
        u[i] = rng.uniform();
        v[i] = rng.uniform();
        w[i] = std::pow(rng.uniform(), 0.8);
    }
    CHECK(ks_one_sample(u, [](double x) { return std::clamp(x, 0.0, 1.0); }).p_value > 0.01);
    CHECK(ks_one_sample(w, [](double x) { return std::clamp(x, 0.0, 1.0); }).p_value < 1e-6);
    CHECK(ks_two_sample(u, v).p_value > 0.01);
    CHECK(ks_two_sample(u, w).p_value < 1e-6);

    const std::vector<double> e(10, 100.0);
    const auto exact = chi_square_gof(e, e);
    CHECK(exact.statistic == 0.0);
    CHECK(exact.p_value == doctest::Approx(1.0));
    CHECK(exact.dof == 9);
    const auto edges = linspace(0.0, 1.0, 11);
    CHECK(chi_square_gof(histogram(u, edges), std::vector<double>(10, 500.0)).p_value > 0.01);
    CHECK(chi_square_two_sample(histogram(u, edges), histogram(w, edges)).p_value < 1e-6);
}

TEST_CASE("histogram helpers")
{
    CHECK(histogram({-1, 0.1, 0.5, 0.9, 2}, {0.0, 0.5, 1.0}) == std::vector<double>{1, 2});
    const auto r = equal_volume_radial_edges(2.0, 4);
    REQUIRE(r.size() == 5);
    for (std::size_t k = 0; k < r.size(); ++k)
        CHECK(std::pow(r[k], 3) == doctest::Approx(8.0 * double(k) / 4.0));
    CHECK(quantile({4, 1, 3, 2}, 0.5) == doctest::Approx(2.5));
    CHECK(quantile({4, 1, 3, 2}, 0.0) == 1.0);
}

TEST_CASE("well-mixed reference")
{
    Rng rng(62, 0);
    SUBCASE("no channels")
    {
        const auto p = ssa_wellmixed({}, {5, 7}, {0.0, 1.0, 2.0}, rng);
        CHECK(p.events == 0);
        for (const auto& c : p.counts)
            CHECK(c == std::vector<long>{5, 7});
    }
    SUBCASE("isomerisation reaches its stationary mean")
    {
        // A -> B at 2, B -> A at 1: mean A = 300 / 3.
        const std::vector<SsaReaction> rx = {{{0}, {1}, 2.0}, {{1}, {0}, 1.0}};
        std::vector<double> a;
        for (int k = 0; k < 1000; ++k) {
            const auto p = ssa_wellmixed(rx, {300, 0}, {10.0}, rng);
            CHECK(p.counts[0][0] + p.counts[0][1] == 300);
            a.push_back(double(p.counts[0][0]));
        }
        const MeanSE m = mean_se(a);
        CHECK(std::abs(m.mean - 100.0) < 2.5 * m.se);
        // Binomial(300, 1/3) spread.
        CHECK(m.sd * m.sd == doctest::Approx(300.0 / 3.0 * 2.0 / 3.0).epsilon(0.15));
    }
    SUBCASE("decay waiting times are exponential")
    {
        const std::vector<SsaReaction> rx = {{{0}, {}, 3.0}};
        std::vector<double> first;
        for (int k = 0; k < 2000; ++k) {
            const auto p = ssa_wellmixed(rx, {1}, {5.0}, rng, true);
            REQUIRE(p.event_times.size() <= 1);
            first.push_back(p.event_times.empty() ? 5.0 : p.event_times[0]);
        }
        CHECK(ks_one_sample(first, [](double t) { return t >= 5.0 ? 1.0 : 1.0 - std::exp(-3.0 * t); }).p_value >
              0.01);
    }
}

TEST_CASE("mesoscopic rates")
{
    const double R = 1e-6, k_r = 1e-11, k_d = 50.0, T = 3.5;
    const MesoRates m = meso_rates(T, k_r, k_d, R);
    CHECK(m.k_r_meso == doctest::Approx(1.0 / T));
    // Stationary bound fraction matches the line's detailed balance.
    const double f_meso = m.k_r_meso / (m.k_r_meso + m.k_d_meso);
    CHECK(f_meso == doctest::Approx(k_r / (k_r + k_d * M_PI * R * R)).epsilon(1e-12));
    CHECK_THROWS_AS(meso_rates(0.0, k_r, k_d, R), InputError);
}

TEST_CASE("Brownian reference")
{
    Rng rng(63, 0);
    CHECK(bd_kill_probability(1e-9, 1e-9, 1e-10, 0.0) == 0.0);
    double prev = 0.0;
    for (double kappa : {1e7, 1e8, 1e9, 1e10}) {
        const double p = bd_kill_probability(1e-10, 1e-10, 1e-10, kappa);
        CHECK(p > prev);
        CHECK(p <= 1.0);
        prev = p;
    }

    BdOracleConfig cfg;
    cfg.problem.geometry = Geometry::Radial3D;
    cfg.problem.D = 1e-12;
    cfg.problem.sigma = 1e-9;
    cfg.problem.r0 = 2e-9;
    cfg.problem.dt = 1e-5;
    cfg.trials = 2000;
    SUBCASE("no reaction")
    {
        cfg.problem.k_r = 0.0;
        cfg.trials = 300;
        const auto r = bd_oracle(cfg, rng);
        CHECK(r.final_survival().mean == 1.0);
        CHECK(r.reaction_times.empty());
        CHECK(r.final_r.size() == 300);
        for (double x : r.final_r)
            CHECK(x >= cfg.problem.sigma);
    }
    SUBCASE("absorbing sphere")
    {
        // Hitting probability (sigma / r0) erfc((r0 - sigma) / sqrt(4 D t)).
        cfg.problem.k_r = std::numeric_limits<double>::infinity();
        const auto r = bd_oracle(cfg, rng);
        const double p = 0.5 * std::erfc(1e-9 / std::sqrt(4e-12 * 1e-5));
        CHECK(std::abs((1.0 - r.final_survival().mean) - p) < 3.0 * r.final_survival().se + 0.005);
        CHECK(r.reaction_times.size() + r.final_r.size() == cfg.trials);
    }
}

TEST_CASE("binding time grows with the compartment")
{
    const char* text = R"({
      "name": "tb", "seed": 3, "t_final": 1.0, "dt_split": 0.01,
      "boundary": {"type": "cylinder", "radius": RADIUS, "height": 4e-7, "axis": "x"},
      "curves": [{"name": "rod", "type": "line", "from": [-2e-7, 0, 0], "to": [2e-7, 0, 0], "reaction_radius": 1e-9}],
      "species": [{"name": "A", "D": 1e-12}, {"name": "A_cyl", "D": 1e-12, "D_bound": 1e-14}],
      "reactions": [{"kind": "bind", "reactants": ["A"], "products": ["A_cyl"], "rate": "inf"}],
      "initial": [{"species": "A", "count": 1}]
    })";
    auto with_radius = [&](const char* R) {
        std::string t = text;
        t.replace(t.find("RADIUS"), 6, R);
        return parse_scenario(t);
    };
    const auto small = estimate_T_bind(with_radius("1e-7"), "A", 100, 5, 5.0);
    const auto large = estimate_T_bind(with_radius("3e-7"), "A", 100, 5, 5.0);
    CHECK(small.censored == 0);
    CHECK(large.censored == 0);
    CHECK(large.T.mean > small.T.mean);
    CHECK_THROWS_AS(estimate_T_bind(with_radius("1e-7"), "B", 1, 1, 1.0), InputError);
}
