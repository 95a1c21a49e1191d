#include <doctest.h>

#include <cmath>

#include "curvesim/line_dynamics.hpp"
#include "curvesim/stats.hpp"

using namespace curvesim;

namespace {

Species species(const std::string& name, double D, double D_bound, double radius = 0.0)
{
    Species s;
    s.name = name;
    s.D_free = D;
    s.D_bound = D_bound;
    s.radius = radius;
    return s;
}

Molecule bound_at(std::uint64_t id, int sp, int curve, double s)
{
    Molecule m;
    m.id = id;
    m.species = sp;
    m.bound = true;
    m.curve = curve;
    m.s = s;
    return m;
}

double max_pair_error(const PolylineCurve& a, const PolylineCurve& b)
{
    double worst = 0.0;
    const auto& p = a.points();
    const auto& q = b.points();
    for (std::size_t i = 0; i < p.size(); ++i)
        for (std::size_t j = i + 1; j < p.size(); ++j) {
            const double d = (p[i] - p[j]).norm();
            worst = std::max(worst, std::abs((q[i] - q[j]).norm() - d) / d);
        }
    return worst;
}

} // namespace

TEST_CASE("rotation")
{
    const double a = 3e-7;
    const PolylineCurve c({Vec3(0, a, 0), Vec3(0, 0, a), Vec3(a, a, 0)}, 1e-9);
    CHECK(rotate_curve(c, 0.0, 0.0).points() == c.points());
    const auto flipped = rotate_curve(c, M_PI, 0.0);
    CHECK((flipped.points()[0] - Vec3(0, -a, 0)).norm() < 1e-12 * a);
    Rng rng(40, 0);
    const auto s = make_spiral(Vec3(-3e-7, 0, 0), 3e-7, 2.5e-8, 3.0, 30, 0.0, 1e-9);
    double worst = 0.0;
    for (int k = 0; k < 10000; ++k)
        worst = std::max(worst, max_pair_error(s, rotate_curve(s, rng.uniform(-M_PI, M_PI), rng.uniform(-M_PI, M_PI))));
    CHECK(worst < 1e-12);
}

TEST_CASE("growth and shrinkage")
{
    const auto c = make_line(Vec3(-1e-6, 0, 0), Vec3(1e-6, 0, 0), 20, 1e-9);
    CHECK(grow_shrink(c, 0.0, 1e-8, 1e-5).points() == c.points());
    const auto tiny = grow_shrink(c, -3e-6, 1e-8, 1e-5);
    CHECK(tiny.length() == doctest::Approx(1e-8).epsilon(1e-12));
    const auto big = grow_shrink(c, 5e-7, 1e-8, 1e-5);
    CHECK(big.length() == doctest::Approx(2.5e-6).epsilon(1e-12));
    CHECK((big.centroid() - c.centroid()).norm() < 1e-18);
    const auto capped = grow_shrink(c, 1.0, 1e-8, 3e-6);
    CHECK(capped.length() == doctest::Approx(3e-6).epsilon(1e-12));
}

TEST_CASE("reprojection of bound molecules")
{
    const auto c = make_spiral(Vec3::Zero(), 3e-7, 2.5e-8, 3.0, 30, 0.0, 1e-9);
    Rng rng(41, 0);
    SimulationState st;
    st.curves = {c};
    for (std::uint64_t k = 0; k < 200; ++k)
        st.molecules.push_back(bound_at(k, 0, 0, rng.uniform() * c.length()));
    const auto before = st.molecules;

    SUBCASE("identity")
    {
        reproject_bound(st, {c});
        for (std::size_t i = 0; i < before.size(); ++i)
            CHECK(std::abs(st.molecules[i].s - before[i].s) < 1e-12 * c.length());
    }
    SUBCASE("rigid rotation carries bound molecules along")
    {
        const Model model({species("A_cyl", 0, 1e-14)}, {});
        CurveTransform t;
        t.rotate = true;
        for (int w = 0; w < 20; ++w)
            apply_curve_dynamics(st, model, {t}, 0.05);
        CHECK(max_pair_error(c, st.curves[0]) < 1e-12);
        for (std::size_t i = 0; i < before.size(); ++i)
            CHECK(std::abs(st.molecules[i].s - before[i].s) < 1e-12 * c.length());
    }
    SUBCASE("molecule at the end of a halved line")
    {
        const auto line = make_line(Vec3(-1e-6, 0, 0), Vec3(1e-6, 0, 0), 20, 1e-9);
        st.curves = {grow_shrink(line, -1e-6, 1e-8, 1e-5)};
        st.molecules = {bound_at(0, 0, 0, line.length())};
        reproject_bound(st, {line});
        CHECK(st.molecules[0].s == doctest::Approx(st.curves[0].length()).epsilon(1e-12));
        CHECK((st.position(st.molecules[0]) - Vec3(5e-7, 0, 0)).norm() < 1e-18);
    }
}

TEST_CASE("road blocks")
{
    const std::vector<RoadBlock> none;
    CHECK(enforce_road_blocks(0, 1e-7, 5e-8, 1e-9, none) == 5e-8);
    const std::vector<RoadBlock> blocks = {{0, 2e-7, 1e-9}, {0, 6e-7, 1e-9}, {1, 3e-7, 1e-9}};
    // Between blocks at 2e-7 and 6e-7, contact at 2 nm from each.
    CHECK(enforce_road_blocks(0, 4e-7, 5e-7, 1e-9, blocks) == doctest::Approx(6e-7 - 2e-9 - 4e-7));
    CHECK(enforce_road_blocks(0, 4e-7, -5e-7, 1e-9, blocks) == doctest::Approx(2e-7 + 2e-9 - 4e-7));
    CHECK(enforce_road_blocks(0, 4e-7, 1e-8, 1e-9, blocks) == 1e-8);
    CHECK(enforce_road_blocks(2, 4e-7, 5e-7, 1e-9, blocks) == 5e-7);

    SimulationState st;
    st.curves = {make_line(Vec3::Zero(), Vec3(1e-6, 0, 0), 10, 1e-9)};
    st.road_blocks = {blocks[0], blocks[1]};
    const auto [lo, hi] = free_interval(st, 0, 4e-7, 1e-9);
    CHECK(lo == doctest::Approx(2.02e-7));
    CHECK(hi == doctest::Approx(5.98e-7));
    const auto [lo2, hi2] = free_interval(st, 0, 8e-7, 1e-9);
    CHECK(lo2 == doctest::Approx(6.02e-7));
    CHECK(hi2 == doctest::Approx(1e-6));
}

TEST_CASE("overlap resolution")
{
    const double sigma = 1e-9;
    SUBCASE("nothing to do")
    {
        const Model model({species("A", 0, 1e-12, 0.5e-9)}, {});
        SimulationState st;
        st.curves = {make_line(Vec3::Zero(), Vec3(1e-6, 0, 0), 10, sigma)};
        st.molecules = {bound_at(0, 0, 0, 1e-7), bound_at(1, 0, 0, 2e-7)};
        const auto r = resolve_overlaps(st, model);
        CHECK(r.bound_moved == 0);
        CHECK(st.molecules[0].s == 1e-7);
        CHECK(st.molecules[1].s == 2e-7);
    }
    SUBCASE("two bound molecules half a contact apart")
    {
        const Model model({species("A", 0, 1e-12, 0.5e-9)}, {});
        SimulationState st;
        st.curves = {make_line(Vec3::Zero(), Vec3(1e-6, 0, 0), 10, sigma)};
        const double mid = 5e-7;
        st.molecules = {bound_at(0, 0, 0, mid - sigma / 4), bound_at(1, 0, 0, mid + sigma / 4)};
        resolve_overlaps(st, model);
        CHECK(st.molecules[0].s == doctest::Approx(mid - sigma / 2).epsilon(1e-12));
        CHECK(st.molecules[1].s == doctest::Approx(mid + sigma / 2).epsilon(1e-12));
    }
    SUBCASE("free molecule inside the capture radius")
    {
        ReactionRule bind;
        bind.kind = RuleKind::BindToCurve;
        bind.reactants = {0};
        bind.products = {1};
        bind.rate = 1e-11;
        const Model model({species("A", 1e-12, 0), species("A_cyl", 0, 1e-14)}, {bind});
        SimulationState st;
        st.curves = {make_line(Vec3(0, 0, -1e-6), Vec3(0, 0, 1e-6), 10, sigma)};
        Molecule m;
        m.x = Vec3(sigma / 2 / std::sqrt(2.0), sigma / 2 / std::sqrt(2.0), 3e-8);
        st.molecules = {m};
        const auto r = resolve_overlaps(st, model);
        CHECK(r.free_moved == 1);
        const Vec3 x = st.molecules[0].x;
        CHECK(std::hypot(x[0], x[1]) == doctest::Approx(sigma).epsilon(1e-9));
        CHECK(x[0] == doctest::Approx(x[1]).epsilon(1e-9));
        CHECK(x[2] == doctest::Approx(3e-8).epsilon(1e-12));
    }
    SUBCASE("crowded chain stays ordered and inside the curve")
    {
        const Model model({species("A", 0, 1e-12, 0.5e-9)}, {});
        SimulationState st;
        st.curves = {make_line(Vec3::Zero(), Vec3(1e-8, 0, 0), 4, sigma)};
        for (std::uint64_t k = 0; k < 6; ++k)
            st.molecules.push_back(bound_at(k, 0, 0, 5e-9 + 1e-11 * double(k)));
        resolve_overlaps(st, model);
        for (std::size_t k = 1; k < 6; ++k)
            CHECK(st.molecules[k].s - st.molecules[k - 1].s >= sigma * (1 - 1e-9));
        CHECK(st.molecules.front().s >= 0.0);
        CHECK(st.molecules.back().s <= 1e-8);
    }
}

TEST_CASE("curve dynamics per window")
{
    const Model model({species("A", 1e-12, 0), species("A_cyl", 0, 1e-14)}, {});
    SimulationState st;
    st.rng = Rng(42, 0);
    st.curves = {make_line(Vec3(-1e-6, 0, 0), Vec3(1e-6, 0, 0), 20, 1e-9)};
    CurveTransform t;
    t.grow = true;
    t.D_l = 1e-12;
    t.l_min = 1e-8;
    t.l_max = 1e-5;
    // Length increments are N(0, 2 D_l dt) away from the clamps.
    std::vector<double> dl;
    for (int k = 0; k < 4000; ++k) {
        const double l0 = st.curves[0].length();
        apply_curve_dynamics(st, model, {t}, 0.01);
        dl.push_back(st.curves[0].length() - l0);
        st.curves = {make_line(Vec3(-1e-6, 0, 0), Vec3(1e-6, 0, 0), 20, 1e-9)};
    }
    double v = 0.0;
    for (double x : dl)
        v += x * x;
    v /= double(dl.size());
    CHECK(v / (2e-12 * 0.01) == doctest::Approx(1.0).epsilon(0.08));

    CurveTransform off;
    const auto before = st.curves[0].points();
    apply_curve_dynamics(st, model, {off}, 0.01);
    CHECK(st.curves[0].points() == before);
}
