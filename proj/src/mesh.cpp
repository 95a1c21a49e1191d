#include "curvesim/mesh.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>

#include <boost/geometry.hpp>
#include <boost/geometry/index/rtree.hpp>

#include "curvesim/diagnostics.hpp"
#include "curvesim/error.hpp"

namespace bg = boost::geometry;
namespace bgi = boost::geometry::index;

namespace curvesim {

namespace {

using IndexPoint = bg::model::point<double, 3, bg::cs::cartesian>;

IndexPoint to_point(const Vec3& v)
{
    return {v.x(), v.y(), v.z()};
}

Vec3 raw_normal(const std::vector<Vec3>& v, const std::array<int, 3>& t)
{
    return (v[t[1]] - v[t[0]]).cross(v[t[2]] - v[t[0]]);
}

} // namespace

struct SurfaceMesh::Index {
    using Point = IndexPoint;
    using Value = std::pair<Point, std::size_t>;
    bgi::rtree<Value, bgi::rstar<16>> tree;
};

SurfaceMesh::SurfaceMesh(std::vector<Vec3> vertices, std::vector<std::array<int, 3>> triangles)
    : vertices_(std::move(vertices)), triangles_(std::move(triangles))
{
    if (vertices_.size() < 4 || triangles_.size() < 4)
        throw InputError("mesh needs at least four vertices and four triangles");
    const int nv = int(vertices_.size());
    for (const auto& t : triangles_)
        for (int k : t)
            if (k < 0 || k >= nv)
                throw InputError("mesh triangle index out of range");

    // Orient outward: the signed volume of a closed outward surface is positive.
    double vol6 = 0.0;
    for (const auto& t : triangles_)
        vol6 += vertices_[t[0]].dot(vertices_[t[1]].cross(vertices_[t[2]]));
    if (vol6 < 0.0)
        for (auto& t : triangles_)
            std::swap(t[1], t[2]);

    normals_.assign(vertices_.size(), Vec3::Zero());
    for (const auto& t : triangles_) {
        const Vec3 n = raw_normal(vertices_, t);
        const double a = n.norm();
        if (!(a > 0.0))
            throw InputError("degenerate mesh triangle");
        for (int k : t)
            normals_[k] += n / a;
        for (int e = 0; e < 3; ++e)
            max_edge_ = std::max(max_edge_, (vertices_[t[e]] - vertices_[t[(e + 1) % 3]]).norm());
    }
    for (auto& n : normals_) {
        const double a = n.norm();
        if (!(a > 0.0))
            throw InputError("mesh vertex without incident triangles");
        n /= a;
    }

    lo_ = hi_ = vertices_[0];
    auto idx = std::make_shared<Index>();
    std::vector<Index::Value> values;
    values.reserve(vertices_.size());
    for (std::size_t i = 0; i < vertices_.size(); ++i) {
        values.emplace_back(to_point(vertices_[i]), i);
        lo_ = lo_.cwiseMin(vertices_[i]);
        hi_ = hi_.cwiseMax(vertices_[i]);
    }
    idx->tree = decltype(idx->tree)(values.begin(), values.end());
    index_ = std::move(idx);
}

Vec3 SurfaceMesh::triangle_normal(std::size_t t) const
{
    return raw_normal(vertices_, triangles_[t]).normalized();
}

std::size_t SurfaceMesh::nearest_vertex(const Vec3& x) const
{
    std::size_t best = 0;
    for (auto it = index_->tree.qbegin(bgi::nearest(to_point(x), 1)); it != index_->tree.qend(); ++it)
        best = it->second;
    return best;
}

double SurfaceMesh::signed_distance(const Vec3& x) const
{
    const std::size_t v = nearest_vertex(x);
    return (x - vertices_[v]).dot(normals_[v]);
}

double SurfaceMesh::boundary_distance(const Vec3& x) const
{
    return std::max(0.0, -signed_distance(x));
}

bool SurfaceMesh::reflect(const Vec3& /*x_old*/, Vec3& x) const
{
    constexpr int kMaxReflections = 8;
    for (int i = 0; i < kMaxReflections; ++i) {
        const std::size_t v = nearest_vertex(x);
        const double d = (x - vertices_[v]).dot(normals_[v]);
        if (d <= 0.0)
            return false;
        x -= 2.0 * d * normals_[v];
    }
    // Still outside: pull back just inside the local plane.
    for (int i = 0; i < kMaxReflections; ++i) {
        const std::size_t v = nearest_vertex(x);
        const double d = (x - vertices_[v]).dot(normals_[v]);
        if (d <= 0.0)
            break;
        x -= (d + 1e-6 * max_edge_) * normals_[v];
    }
    warn("boundary reflection clamped");
    return true;
}

double SurfaceMesh::volume() const
{
    double vol6 = 0.0;
    for (const auto& t : triangles_)
        vol6 += vertices_[t[0]].dot(vertices_[t[1]].cross(vertices_[t[2]]));
    return vol6 / 6.0;
}

Vec3 reflect_at_boundary(const Vec3& x_old, const Vec3& x_proposed, const SurfaceMesh& mesh)
{
    Vec3 x = x_proposed;
    mesh.reflect(x_old, x);
    return x;
}

SurfaceMesh make_icosphere(double radius, int subdivisions, const Vec3& centre)
{
    if (!(radius > 0.0) || subdivisions < 0)
        throw InputError("invalid icosphere parameters");
    const double p = (1.0 + std::sqrt(5.0)) / 2.0;
    std::vector<Vec3> v = {{-1, p, 0}, {1, p, 0}, {-1, -p, 0}, {1, -p, 0}, {0, -1, p}, {0, 1, p},
                           {0, -1, -p}, {0, 1, -p}, {p, 0, -1}, {p, 0, 1}, {-p, 0, -1}, {-p, 0, 1}};
    for (auto& x : v)
        x.normalize();
    std::vector<std::array<int, 3>> f = {{0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11},
                                         {1, 5, 9},  {5, 11, 4}, {11, 10, 2}, {10, 7, 6}, {7, 1, 8},
                                         {3, 9, 4},  {3, 4, 2},  {3, 2, 6},   {3, 6, 8},  {3, 8, 9},
                                         {4, 9, 5},  {2, 4, 11}, {6, 2, 10},  {8, 6, 7},  {9, 8, 1}};
    for (int s = 0; s < subdivisions; ++s) {
        std::map<std::pair<int, int>, int> mid;
        auto midpoint = [&](int a, int b) {
            const auto key = std::minmax(a, b);
            if (auto it = mid.find(key); it != mid.end())
                return it->second;
            v.push_back((v[a] + v[b]).normalized());
            return mid[key] = int(v.size()) - 1;
        };
        std::vector<std::array<int, 3>> g;
        g.reserve(f.size() * 4);
        for (const auto& t : f) {
            const int a = midpoint(t[0], t[1]), b = midpoint(t[1], t[2]), c = midpoint(t[2], t[0]);
            g.push_back({t[0], a, c});
            g.push_back({t[1], b, a});
            g.push_back({t[2], c, b});
            g.push_back({a, b, c});
        }
        f.swap(g);
    }
    for (auto& x : v)
        x = centre + radius * x;
    return SurfaceMesh(std::move(v), std::move(f));
}

SurfaceMesh make_cylinder(double radius, double height, int axis, int n_around, int n_along, int n_rings,
                          const Vec3& centre)
{
    if (!(radius > 0.0) || !(height > 0.0) || axis < 0 || axis > 2 || n_around < 3 || n_along < 1 ||
        n_rings < 1)
        throw InputError("invalid cylinder parameters");
    const int ax = axis, u = (axis + 1) % 3, w = (axis + 2) % 3;
    auto make = [&](double a, double r, double phi) {
        Vec3 p = centre;
        p[ax] += a;
        p[u] += r * std::cos(phi);
        p[w] += r * std::sin(phi);
        return p;
    };
    std::vector<Vec3> v;
    std::vector<std::array<int, 3>> f;
    // Side rings j = 0..n_along; ring vertices are rotated by half a step on
    // odd rings so that every rim vertex sees the same triangle pattern.
    auto ring_index = [&](int j, int i) { return j * n_around + (i % n_around); };
    for (int j = 0; j <= n_along; ++j) {
        const double a = -0.5 * height + height * j / n_along;
        for (int i = 0; i < n_around; ++i)
            v.push_back(make(a, radius, 2.0 * kPi * (i + 0.5 * (j % 2)) / n_around));
    }
    for (int j = 0; j < n_along; ++j) {
        for (int i = 0; i < n_around; ++i) {
            const int a = ring_index(j, i), b = ring_index(j, i + 1);
            const int c = ring_index(j + 1, i), d = ring_index(j + 1, i + 1);
            if (j % 2 == 0) {
                f.push_back({a, b, c});
                f.push_back({b, d, c});
            } else {
                f.push_back({a, b, d});
                f.push_back({a, d, c});
            }
        }
    }
    // Caps: concentric rings from the rim inward, then a centre vertex.
    auto cap = [&](int rim_ring, double a, bool top) {
        const double shift = 0.5 * (rim_ring % 2);
        std::vector<int> outer(n_around);
        for (int i = 0; i < n_around; ++i)
            outer[i] = ring_index(rim_ring, i);
        for (int k = 1; k < n_rings; ++k) {
            const double r = radius * (n_rings - k) / n_rings;
            std::vector<int> inner(n_around);
            for (int i = 0; i < n_around; ++i) {
                v.push_back(make(a, r, 2.0 * kPi * (i + shift + 0.5 * k) / n_around));
                inner[i] = int(v.size()) - 1;
            }
            for (int i = 0; i < n_around; ++i) {
                const int o0 = outer[i], o1 = outer[(i + 1) % n_around];
                const int i0 = inner[i], i1 = inner[(i + 1) % n_around];
                if (top) {
                    f.push_back({o0, o1, i0});
                    f.push_back({o1, i1, i0});
                } else {
                    f.push_back({o0, i0, o1});
                    f.push_back({o1, i0, i1});
                }
            }
            outer = std::move(inner);
        }
        v.push_back(make(a, 0.0, 0.0));
        const int c = int(v.size()) - 1;
        for (int i = 0; i < n_around; ++i) {
            const int o0 = outer[i], o1 = outer[(i + 1) % n_around];
            if (top)
                f.push_back({o0, o1, c});
            else
                f.push_back({o0, c, o1});
        }
    };
    cap(n_along, 0.5 * height, true);
    cap(0, -0.5 * height, false);
    return SurfaceMesh(std::move(v), std::move(f));
}

SurfaceMesh read_mesh(std::istream& is)
{
    std::size_t nv = 0, nt = 0;
    if (!(is >> nv))
        throw InputError("mesh: missing vertex count");
    std::vector<Vec3> v(nv);
    for (std::size_t i = 0; i < nv; ++i)
        if (!(is >> v[i].x() >> v[i].y() >> v[i].z()))
            throw InputError("mesh: bad vertex line " + std::to_string(i));
    if (!(is >> nt))
        throw InputError("mesh: missing triangle count");
    std::vector<std::array<int, 3>> t(nt);
    for (std::size_t i = 0; i < nt; ++i)
        if (!(is >> t[i][0] >> t[i][1] >> t[i][2]))
            throw InputError("mesh: bad triangle line " + std::to_string(i));
    return SurfaceMesh(std::move(v), std::move(t));
}

SurfaceMesh read_mesh_file(const std::string& path)
{
    std::ifstream in(path);
    if (!in)
        throw InputError("cannot open mesh file " + path);
    return read_mesh(in);
}

void write_mesh(std::ostream& os, const SurfaceMesh& mesh)
{
    os << mesh.vertices().size() << "\n" << std::setprecision(17);
    for (const auto& x : mesh.vertices())
        os << x.x() << " " << x.y() << " " << x.z() << "\n";
    os << mesh.triangles().size() << "\n";
    for (const auto& t : mesh.triangles())
        os << t[0] << " " << t[1] << " " << t[2] << "\n";
}

} // namespace curvesim
