#include <doctest.h>

#include <cmath>
#include <limits>
#include <set>

#include "curvesim/engine.hpp"
#include "curvesim/error.hpp"
#include "curvesim/mesh.hpp"
#include "curvesim/stats.hpp"
#include "curvesim/validation.hpp"

using namespace curvesim;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

Species species(const std::string& name, double D, double D_bound = 0.0)
{
    Species s;
    s.name = name;
    s.D_free = D;
    s.D_bound = D_bound;
    return s;
}

ReactionRule rule(RuleKind kind, std::vector<int> in, std::vector<int> out, double rate, double sigma = 0.0)
{
    ReactionRule r;
    r.kind = kind;
    r.reactants = std::move(in);
    r.products = std::move(out);
    r.rate = rate;
    r.sigma = sigma;
    return r;
}

Molecule free_at(std::uint64_t id, int sp, const Vec3& x)
{
    Molecule m;
    m.id = id;
    m.species = sp;
    m.x = x;
    return m;
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

// A + B -> C in 3D with contact 1e-9.
Model pair_model(double k_r, double D2 = 1e-12)
{
    return Model({species("A", 1e-12), species("B", D2), species("C", 1e-12)},
                 {rule(RuleKind::Bimolecular3D, {0, 1}, {2}, k_r, 1e-9)});
}

} // namespace

TEST_CASE("pairing: two molecules alone form one pair")
{
    const Model model = pair_model(1e-19);
    SimulationState st;
    st.molecules = {free_at(0, 0, Vec3::Zero()), free_at(1, 1, Vec3(1e-7, 0, 0))};
    const auto d = pair_decomposition(st, model, EngineConfig{});
    REQUIRE(d.pairs.size() == 1);
    CHECK(d.singles.empty());
}

TEST_CASE("pairing: equidistant neighbours go to the lower id")
{
    const Model model({species("A", 1e-12)}, {rule(RuleKind::Bimolecular3D, {0, 0}, {}, 1e-19, 1e-9)});
    SimulationState st;
    st.molecules = {free_at(7, 0, Vec3(-1e-7, 0, 0)), free_at(3, 0, Vec3::Zero()), free_at(5, 0, Vec3(1e-7, 0, 0))};
    const auto d = pair_decomposition(st, model, EngineConfig{});
    REQUIRE(d.pairs.size() == 1);
    const auto [i, j] = d.pairs[0];
    CHECK(std::min(st.molecules[i].id, st.molecules[j].id) == 3);
    CHECK(std::max(st.molecules[i].id, st.molecules[j].id) == 5);
    REQUIRE(d.singles.size() == 1);
    CHECK(st.molecules[d.singles[0]].id == 7);
}

TEST_CASE("pairing: mutual nearest neighbours against brute force")
{
    const Model model({species("A", 1e-12)}, {rule(RuleKind::Bimolecular3D, {0, 0}, {}, 1e-19, 1e-9)});
    Rng rng(20, 0);
    for (int trial = 0; trial < 5; ++trial) {
        SimulationState st;
        for (std::uint64_t k = 0; k < 100; ++k)
            st.molecules.push_back(free_at(k, 0, rng.normal3(1e-6)));
        const std::size_t n = st.molecules.size();
        std::vector<std::size_t> nn(n);
        for (std::size_t i = 0; i < n; ++i) {
            double best = kInf;
            for (std::size_t j = 0; j < n; ++j) {
                const double d = (st.molecules[i].x - st.molecules[j].x).norm();
                if (j != i && d < best)
                    best = d, nn[i] = j;
            }
        }
        std::set<std::pair<std::size_t, std::size_t>> expect;
        for (std::size_t i = 0; i < n; ++i)
            if (nn[nn[i]] == i && i < nn[i])
                expect.insert({i, nn[i]});
        std::set<std::pair<std::size_t, std::size_t>> got;
        for (auto [i, j] : pair_decomposition(st, model, EngineConfig{}).pairs)
            got.insert({std::min(i, j), std::max(i, j)});
        CHECK(got == expect);
    }
}

TEST_CASE("pairing ignores non-reactive partners")
{
    const Model model({species("A", 1e-12), species("B", 1e-12)}, {});
    SimulationState st;
    st.molecules = {free_at(0, 0, Vec3::Zero()), free_at(1, 1, Vec3(1e-8, 0, 0))};
    const auto d = pair_decomposition(st, model, EngineConfig{});
    CHECK(d.pairs.empty());
    CHECK(d.singles.size() == 2);
}

TEST_CASE("time step rule")
{
    EngineConfig cfg;
    CHECK(choose_time_step({1.0}, 1e-12, 0.004, cfg) == 0.004);
    const double R = 5e-8;
    CHECK(choose_time_step({R, 2 * R}, 1e-12, 1.0, cfg) == doctest::Approx(R * R / 1.5e-10).epsilon(1e-12));
    CHECK(choose_time_step({0.0}, 1e-12, 1.0, cfg) == cfg.dt_min);
    CHECK(choose_time_step({0.0}, 1e-12, 1e-9, cfg) == 1e-9);
}

TEST_CASE("engine config validation")
{
    EngineConfig c;
    c.K = 0.5;
    CHECK_THROWS_AS(c.validate(), InputError);
    c = EngineConfig{};
    c.dt_min = 1.0;
    CHECK_THROWS_AS(c.validate(), InputError);
    CHECK_NOTHROW(EngineConfig{}.validate());
}

TEST_CASE("pair frame")
{
    const Vec3 a(1e-7, 2e-7, -3e-7), b(-4e-7, 0, 5e-7);
    const PairFrame f = PairFrame::from_positions(a, b, 1e-12, 3e-12);
    CHECK(f.D() == doctest::Approx(4e-12));
    CHECK(f.D_centre() == doctest::Approx(0.75e-12));
    CHECK((f.x1() - a).norm() < 1e-20);
    CHECK((f.x2() - b).norm() < 1e-20);
    CHECK((f.y - (b - a)).norm() < 1e-20);
    const PairFrame z = PairFrame::from_positions(a, b, 0.0, 0.0);
    CHECK(z.w1() == 0.5);
    CHECK((z.x1() - a).norm() < 1e-20);
}

TEST_CASE("pair propagator: decoupled limit")
{
    const Model model = pair_model(0.0, 0.0);
    Engine engine(model, EngineConfig{});
    SimulationState st;
    st.rng = Rng(21, 0);
    const Vec3 a0 = Vec3::Zero(), b0(5e-8, 0, 0);
    st.molecules = {free_at(0, 0, a0), free_at(1, 1, b0)};
    const double dt = 1e-6;
    std::vector<double> sq;
    for (int k = 0; k < 10000; ++k) {
        st.molecules[0].x = a0;
        st.molecules[1].x = b0;
        const StepResult r = engine.propagate_pair_3d(st, 0, 1, dt, 0.0);
        REQUIRE_FALSE(r.reacted);
        CHECK((st.molecules[1].x - b0).norm() == 0.0);
        sq.push_back((st.molecules[0].x - a0).squaredNorm());
    }
    CHECK(mean_se(sq).mean / (6e-12 * dt) == doctest::Approx(1.0).epsilon(0.03));
}

TEST_CASE("pair propagator: contact start with a large rate reacts")
{
    const Model model = pair_model(kInf);
    Engine engine(model, EngineConfig{});
    SimulationState st;
    st.rng = Rng(22, 0);
    int reacted = 0;
    for (int k = 0; k < 1000; ++k) {
        st.molecules = {free_at(0, 0, Vec3::Zero()), free_at(1, 1, Vec3(1e-9, 0, 0))};
        const StepResult r = engine.propagate_pair_3d(st, 0, 1, 1e-6, 0.0);
        reacted += r.reacted;
        if (r.reacted) {
            CHECK_FALSE(st.molecules[0].alive);
            CHECK_FALSE(st.molecules[1].alive);
            CHECK(st.molecules.back().species == 2);
        }
    }
    CHECK(reacted > 990);
}

TEST_CASE("near-curve propagator")
{
    const Model never({species("A", 1e-12), species("A_cyl", 0.0, 1e-14)},
                      {rule(RuleKind::BindToCurve, {0}, {1}, 0.0)});
    const Model always({species("A", 1e-12), species("A_cyl", 0.0, 1e-14)},
                       {rule(RuleKind::BindToCurve, {0}, {1}, kInf)});
    const double sigma = 1e-9, dt = 1e-6;
    auto setup = [&](SimulationState& st, std::uint64_t seed) {
        st.rng = Rng(seed, 0);
        st.curves = {make_line(Vec3(0, 0, -1e-6), Vec3(0, 0, 1e-6), 1, sigma)};
    };
    SUBCASE("no rate, no binding, reflecting radial law")
    {
        Engine engine(never, EngineConfig{});
        SimulationState st;
        setup(st, 23);
        const double r0 = 2 * sigma;
        std::vector<double> r;
        for (int k = 0; k < 20000; ++k) {
            st.molecules = {free_at(0, 0, Vec3(r0, 0, 0))};
            const StepResult s = engine.propagate_near_curve(st, 0, 0, 0, dt, 0.0);
            REQUIRE_FALSE(s.reacted);
            r.push_back(std::hypot(st.molecules[0].x[0], st.molecules[0].x[1]));
            CHECK(r.back() >= sigma * (1 - 1e-9));
        }
        // Reflecting 2D Brownian oracle at the same step.
        RadiationProblem p;
        p.geometry = Geometry::Radial2D;
        p.D = 1e-12;
        p.sigma = sigma;
        p.r0 = r0;
        p.dt = dt;
        BdOracleConfig c;
        c.problem = p;
        c.trials = 20000;
        Rng rng(24, 0);
        const auto bd = bd_oracle(c, rng);
        CHECK(ks_two_sample(r, bd.final_r).p_value > 0.01);
    }
    SUBCASE("contact with an infinite rate binds")
    {
        Engine engine(always, EngineConfig{});
        SimulationState st;
        setup(st, 25);
        int bound = 0;
        for (int k = 0; k < 1000; ++k) {
            st.molecules = {free_at(0, 0, Vec3(sigma, 0, 0))};
            const StepResult s = engine.propagate_near_curve(st, 0, 0, 0, dt, 0.0);
            bound += s.reacted && st.molecules[0].bound && st.molecules[0].species == 1;
        }
        CHECK(bound > 990);
    }
}

TEST_CASE("on-curve pair propagator")
{
    const double sigma = 1e-9, dt = 1e-6;
    SUBCASE("contact with an infinite rate reacts at once")
    {
        const Model model({species("A", 0, 1e-12), species("B", 0, 1e-12), species("C", 0, 1e-12)},
                          {rule(RuleKind::Bimolecular1D, {0, 1}, {2}, kInf, sigma)});
        Engine engine(model, EngineConfig{});
        SimulationState st;
        st.rng = Rng(26, 0);
        st.curves = {make_line(Vec3::Zero(), Vec3(1e-6, 0, 0), 10, sigma)};
        int fast = 0;
        for (int k = 0; k < 1000; ++k) {
            st.molecules = {bound_at(0, 0, 0, 5e-7), bound_at(1, 1, 0, 5e-7 + sigma)};
            const StepResult r = engine.propagate_pair_on_curve(st, 0, 1, dt, 0.0);
            fast += r.reacted && r.advanced <= dt / EngineConfig{}.grid.time_steps;
        }
        CHECK(fast > 990);
    }
    SUBCASE("no rate: separation follows the reflecting 1D law")
    {
        const Model model({species("A", 0, 1e-12), species("B", 0, 1e-12), species("C", 0, 1e-12)},
                          {rule(RuleKind::Bimolecular1D, {0, 1}, {2}, 0.0, sigma)});
        Engine engine(model, EngineConfig{});
        SimulationState st;
        st.rng = Rng(27, 0);
        st.curves = {make_line(Vec3::Zero(), Vec3(1e-6, 0, 0), 10, sigma)};
        std::vector<double> sep;
        for (int k = 0; k < 20000; ++k) {
            st.molecules = {bound_at(0, 0, 0, 5e-7), bound_at(1, 1, 0, 5e-7 + 2 * sigma)};
            REQUIRE_FALSE(engine.propagate_pair_on_curve(st, 0, 1, dt, 0.0).reacted);
            sep.push_back(st.molecules[1].s - st.molecules[0].s);
        }
        RadiationProblem p;
        p.geometry = Geometry::HalfLine1D;
        p.D = 2e-12;
        p.sigma = sigma;
        p.r0 = 2 * sigma;
        p.dt = dt;
        BdOracleConfig c;
        c.problem = p;
        c.trials = 20000;
        Rng rng(28, 0);
        CHECK(ks_two_sample(sep, bd_oracle(c, rng).final_r).p_value > 0.01);
    }
}

TEST_CASE("first-order events")
{
    const Model none({species("A", 1e-12), species("A_cyl", 0, 1e-14)}, {});
    Engine engine(none, EngineConfig{});
    SimulationState st;
    st.molecules = {free_at(0, 0, Vec3::Zero())};
    engine.schedule_all(st);
    CHECK(st.molecules[0].event_time == kNever);

    const Model decay({species("A", 1e-12), species("B", 1e-12), species("C", 1e-12)},
                      {rule(RuleKind::Unimolecular, {0}, {1, 2}, 10.0, 2e-9)});
    Engine e2(decay, EngineConfig{});
    SimulationState s2;
    s2.rng = Rng(29, 0);
    s2.molecules = {free_at(0, 0, Vec3::Zero())};
    s2.next_id = 1;
    e2.schedule(s2, 0, 0.0);
    e2.fire_first_order(s2, 0);
    // The first product takes over the reactant's slot.
    REQUIRE(s2.molecules.size() == 2);
    CHECK(s2.molecules[0].species == 1);
    CHECK(s2.molecules[1].species == 2);
    CHECK((s2.molecules[0].x - s2.molecules[1].x).norm() == doctest::Approx(2e-9).epsilon(1e-9));
    REQUIRE(e2.events().size() == 1);
    CHECK(e2.events()[0].kind == EventKind::Unimolecular);
}

TEST_CASE("window: empty system and conservation")
{
    const Model model = pair_model(0.0);
    Engine engine(model, EngineConfig{});
    SimulationState empty;
    CHECK_NOTHROW(engine.step_window(empty, 0.01));
    CHECK(empty.molecules.empty());

    SimulationState st;
    st.rng = Rng(30, 0);
    st.mesh = std::make_shared<const SurfaceMesh>(make_icosphere(1e-6, 3));
    Rng init(31, 0);
    for (std::uint64_t k = 0; k < 100; ++k)
        st.molecules.push_back(free_at(k, int(k % 2), init.normal3(2e-7)));
    st.next_id = 100;
    engine.schedule_all(st);
    for (int w = 0; w < 10; ++w) {
        engine.step_window(st, 0.01);
        st.time += 0.01;
    }
    const auto c = st.counts(3);
    CHECK(c[0] == 50);
    CHECK(c[1] == 50);
    CHECK(c[2] == 0);
    for (const auto& m : st.molecules)
        CHECK(st.mesh->contains(m.x));
}

TEST_CASE("window: reactions conserve mass")
{
    const Model model({species("A", 1e-12), species("B", 1e-12), species("C", 1e-12)},
                      {rule(RuleKind::Bimolecular3D, {0, 1}, {2}, 1e-17, 5e-9),
                       rule(RuleKind::Unimolecular, {2}, {0, 1}, 20.0, 5e-9)});
    Engine engine(model, EngineConfig{});
    SimulationState st;
    st.rng = Rng(32, 0);
    st.mesh = std::make_shared<const SurfaceMesh>(make_icosphere(2e-7, 2));
    Rng init(33, 0);
    for (std::uint64_t k = 0; k < 40; ++k)
        st.molecules.push_back(free_at(k, int(k % 2), init.normal3(4e-8)));
    st.next_id = 40;
    for (auto& m : st.molecules)
        if (!st.mesh->contains(m.x))
            m.x *= 0.1;
    engine.schedule_all(st);
    long events = 0;
    for (int w = 0; w < 20; ++w) {
        engine.step_window(st, 0.01);
        st.time += 0.01;
        events += long(engine.take_events().size());
        const auto c = st.counts(3);
        REQUIRE(c[0] + c[2] == 20);
        REQUIRE(c[1] + c[2] == 20);
    }
    CHECK(events > 0);
}
