#include <doctest.h>

#include <cmath>
#include <sstream>

#include "curvesim/curve.hpp"
#include "curvesim/error.hpp"
#include "curvesim/mesh.hpp"
#include "curvesim/rng.hpp"
#include "curvesim/scenario.hpp"
#include "curvesim/stats.hpp"

using namespace curvesim;

TEST_CASE("straight line length is the endpoint distance")
{
    const Vec3 p(1e-7, -2e-7, 3e-7), q(-4e-7, 5e-7, 1e-7);
    for (int n : {1, 7, 100}) {
        const auto c = make_line(p, q, n, 1e-9);
        CHECK(c.segment_count() == std::size_t(n));
        CHECK(c.length() == doctest::Approx((q - p).norm()).epsilon(1e-14));
    }
}

TEST_CASE("spiral points follow the parameterization")
{
    const double rc = 3e-7, pitch = 2.5e-8;
    const auto c = make_spiral(Vec3(-3e-7, 0, 0), rc, pitch, 3.0, 30, 0.0, 1e-9);
    REQUIRE(c.points().size() == 31);
    for (int k = 0; k <= 30; ++k) {
        const double s = 3.0 * k / 30;
        const Vec3& p = c.points()[std::size_t(k)];
        CHECK(p[0] == doctest::Approx(-3e-7 + pitch * s).epsilon(1e-14));
        CHECK(std::hypot(p[1], p[2]) == doctest::Approx(rc).epsilon(1e-14));
        CHECK(std::abs(p[1] - rc * std::cos(2 * M_PI * s)) < 1e-20);
        CHECK(std::abs(p[2] - rc * std::sin(2 * M_PI * s)) < 1e-20);
    }
}

TEST_CASE("circle length is the chord sum")
{
    const double R = 1e-6;
    const auto c = make_circle(Vec3::Zero(), R, Vec3(0, 0, 1), 360, 1e-9);
    CHECK(c.length() == doctest::Approx(2 * 360 * R * std::sin(M_PI / 360)).epsilon(1e-12));
    CHECK(std::abs(c.length() / (2 * M_PI * R) - 1.0) < 1e-4);
    CHECK((c.points().front() - c.points().back()).norm() < 1e-18);
}

TEST_CASE("degenerate curves are rejected")
{
    CHECK_THROWS_AS(PolylineCurve({Vec3::Zero()}, 1e-9), InputError);
    CHECK_THROWS_AS(PolylineCurve({Vec3::Zero(), Vec3::Zero()}, 1e-9), InputError);
    CHECK_THROWS_AS(PolylineCurve({Vec3::Zero(), Vec3::UnitX()}, -1.0), InputError);
}

TEST_CASE("arclength addressing")
{
    const auto c = make_spiral(Vec3::Zero(), 3e-7, 2.5e-8, 3.0, 30, 0.0, 1e-9);
    CHECK((c.point_at(0.0) - c.points().front()).norm() == 0.0);
    CHECK((c.point_at(c.length()) - c.points().back()).norm() < 1e-20);
    CHECK(c.segment_at(c.segment_start(3)) == 2);
    Rng rng(1, 0);
    for (int k = 0; k < 10000; ++k) {
        const double s = rng.uniform() * c.length();
        const ClosestPoint cp = c.closest_point(c.point_at(s));
        CHECK(cp.distance < 1e-12 * c.length());
        CHECK(std::abs(cp.s - s) < 1e-12 * c.length());
    }
}

TEST_CASE("closest point against brute force")
{
    const auto c = make_spiral(Vec3::Zero(), 3e-7, 2.5e-8, 3.0, 30, 0.3, 1e-9);
    Rng rng(2, 0);
    for (int k = 0; k < 10000; ++k) {
        const Vec3 x = rng.normal3(4e-7);
        double best = INFINITY;
        std::size_t seg = 0;
        for (std::size_t i = 0; i < c.segment_count(); ++i) {
            const double d = distance_to_segment(c.segment(i), x);
            if (d < best)
                best = d, seg = i;
        }
        const ClosestPoint cp = closest_point(c, x);
        CHECK(cp.distance == doctest::Approx(best).epsilon(1e-12));
        if (std::abs(cp.distance - best) > 1e-12 * best)
            CHECK(cp.segment == seg);
    }
}

TEST_CASE("equidistant shared vertex goes to the lower segment")
{
    const PolylineCurve c({Vec3(-1, 0, 0), Vec3(0, 0, 0), Vec3(0, 1, 0)}, 0.01);
    const ClosestPoint cp = c.closest_point(Vec3(1, -1, 0));
    CHECK(cp.segment == 0);
    CHECK(cp.s == doctest::Approx(1.0));
    CHECK(cp.distance == doctest::Approx(std::sqrt(2.0)));
}

TEST_CASE("protective radius")
{
    const Segment seg{Vec3::Zero(), Vec3(0, 0, 2e-8)};
    CHECK(protective_radius(Vec3(0, 0, 1e-8), seg) == doctest::Approx(1e-8));
    CHECK(protective_radius(Vec3(0, 0, 3e-9), seg) == doctest::Approx(3e-9));
    CHECK(protective_radius(Vec3(5e-9, 0, 1e-8), seg) == doctest::Approx(1e-8));
}

TEST_CASE("cylindrical coordinates")
{
    const Segment seg{Vec3::Zero(), Vec3(0, 0, 1e-8)};
    const auto a = cylindrical_coords(seg, Vec3(1e-9, 0, 0));
    CHECK(a.r == doctest::Approx(1e-9));
    CHECK(a.z == doctest::Approx(0.0));
    const auto b = cylindrical_coords(seg, Vec3(0, 0, 5e-9));
    CHECK(b.r == doctest::Approx(0.0));
    CHECK(b.z == doctest::Approx(5e-9));
    Rng rng(3, 0);
    for (int k = 0; k < 10000; ++k) {
        const Segment s{rng.normal3(1e-7), rng.normal3(1e-7)};
        const CylindricalFrame f = cylindrical_frame(s);
        const Vec3 x = rng.normal3(1e-7);
        CHECK((f.to_cartesian(f.to_local(x)) - x).norm() < 1e-12 * 1e-7 * 10);
    }
}

TEST_CASE("curve transforms")
{
    const auto c = make_spiral(Vec3::Zero(), 3e-7, 2.5e-8, 3.0, 30, 0.0, 1e-9);
    const auto same = apply_transform(c, [](const Vec3& x) { return x; });
    CHECK(same.points() == c.points());
    const auto scaled = apply_transform(c, [](const Vec3& x) { return 2.5 * x; });
    CHECK(scaled.length() == doctest::Approx(2.5 * c.length()).epsilon(1e-14));
    const double t = 0.7;
    const auto rot = apply_transform(c, [t](const Vec3& x) {
        return Vec3(x[0] * std::cos(t) - x[1] * std::sin(t), x[0] * std::sin(t) + x[1] * std::cos(t), x[2]);
    });
    for (std::size_t i = 0; i < c.segment_count(); ++i)
        CHECK(rot.segment_length(i) == doctest::Approx(c.segment_length(i)).epsilon(1e-12));
}

TEST_CASE("icosphere mesh")
{
    const double R = 1e-6;
    const SurfaceMesh m = make_icosphere(R, 3);
    CHECK(m.volume() == doctest::Approx(4.0 / 3.0 * M_PI * R * R * R).epsilon(0.02));
    CHECK(m.contains(Vec3::Zero()));
    CHECK_FALSE(m.contains(Vec3(1.1e-6, 0, 0)));
    CHECK(m.boundary_distance(Vec3::Zero()) == doctest::Approx(R).epsilon(0.02));
    CHECK_THROWS_AS(make_icosphere(-1.0, 2), InputError);
}

TEST_CASE("reflection")
{
    SUBCASE("inside proposals are unchanged")
    {
        const SurfaceMesh m = make_icosphere(1e-6, 3);
        const Vec3 a(1e-7, 0, 0), b(2e-7, 1e-7, 0);
        CHECK((reflect_at_boundary(a, b, m) - b).norm() == 0.0);
    }
    SUBCASE("mirror in a flat face")
    {
        // Box [-1,1]^2 x [-2,0]; the face z = 0 mirrors (0,0,a) to (0,0,-a).
        std::vector<Vec3> v = {{-1, -1, -2}, {1, -1, -2}, {1, 1, -2}, {-1, 1, -2},
                               {-1, -1, 0},  {1, -1, 0},  {1, 1, 0},  {-1, 1, 0}};
        for (auto& x : v)
            x *= 100.0;
        std::vector<Vec3> pts = v;
        // A fine vertex at the top centre so its dual plane is the face itself.
        pts.push_back(Vec3(0, 0, 0));
        const std::vector<std::array<int, 3>> tri = {
            {0, 2, 1}, {0, 3, 2}, {4, 5, 8}, {5, 6, 8}, {6, 7, 8}, {7, 4, 8}, {0, 1, 5}, {0, 5, 4},
            {1, 2, 6}, {1, 6, 5}, {2, 3, 7}, {2, 7, 6}, {3, 0, 4}, {3, 4, 7}};
        const SurfaceMesh m(pts, tri);
        const Vec3 out = reflect_at_boundary(Vec3(0, 0, -1), Vec3(0, 0, 0.5), m);
        CHECK(out[2] == doctest::Approx(-0.5));
        CHECK(out[0] == doctest::Approx(0.0));
    }
    SUBCASE("random steps stay inside")
    {
        const SurfaceMesh m = make_cylinder(1e-6, 2e-6, 0, 32, 12, 6);
        Rng rng(4, 0);
        for (int k = 0; k < 5000; ++k) {
            Vec3 a = rng.normal3(4e-7);
            if (!m.contains(a))
                continue;
            const Vec3 b = reflect_at_boundary(a, a + rng.normal3(5e-7), m);
            CHECK(m.contains(b));
        }
    }
}

TEST_CASE("mesh text round trip")
{
    const SurfaceMesh m = make_icosphere(1e-6, 1);
    std::stringstream ss;
    write_mesh(ss, m);
    const SurfaceMesh r = read_mesh(ss);
    REQUIRE(r.vertices().size() == m.vertices().size());
    for (std::size_t i = 0; i < m.vertices().size(); ++i)
        CHECK((r.vertices()[i] - m.vertices()[i]).norm() == 0.0);
    CHECK(r.triangles() == m.triangles());
    std::stringstream bad("3\n0 0 0\n");
    CHECK_THROWS_AS(read_mesh(bad), InputError);
}

TEST_CASE("uniform sampling inside meshes")
{
    Rng rng(5, 0);
    CHECK(sample_uniform_in_mesh(make_icosphere(1e-6, 3), 0, rng).empty());
    const double R = 1e-6;
    const SurfaceMesh sphere = make_icosphere(R, 4);
    const auto x = sample_uniform_in_mesh(sphere, 10000, rng);
    // r^3 / R_eff^3 is uniform for the volume-equivalent ball.
    const double Reff = std::cbrt(sphere.volume() * 3.0 / (4.0 * M_PI));
    std::vector<double> u;
    for (const Vec3& p : x)
        u.push_back(std::min(1.0, std::pow(p.norm() / Reff, 3)));
    const auto edges = linspace(0.0, 1.0 + 1e-12, 11);
    const auto h = histogram(u, edges);
    CHECK(chi_square_gof(h, std::vector<double>(10, 1000.0)).p_value > 0.01);

    const SurfaceMesh cyl = make_cylinder(R, 2 * R, 0, 64, 16, 8);
    CHECK(cyl.volume() == doctest::Approx(2 * M_PI * R * R * R).epsilon(0.01));
    const Vec3 span = cyl.bbox_max() - cyl.bbox_min();
    CHECK(cyl.volume() / (span[0] * span[1] * span[2]) == doctest::Approx(M_PI / 4).epsilon(0.02));
}
