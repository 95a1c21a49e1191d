#pragma once

#include <array>
#include <cstddef>
#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

#include "curvesim/vec.hpp"

namespace curvesim {

// Closed triangulated outer boundary. Each vertex carries a dual plane
// (point = vertex, normal = normalized mean of incident triangle normals);
// inside/outside and reflection use the plane of the nearest vertex.
class SurfaceMesh {
public:
    SurfaceMesh() = default;
    SurfaceMesh(std::vector<Vec3> vertices, std::vector<std::array<int, 3>> triangles);

    const std::vector<Vec3>& vertices() const { return vertices_; }
    const std::vector<std::array<int, 3>>& triangles() const { return triangles_; }
    const std::vector<Vec3>& vertex_normals() const { return normals_; }
    Vec3 triangle_normal(std::size_t t) const;
    bool empty() const { return vertices_.empty(); }

    std::size_t nearest_vertex(const Vec3& x) const;
    // Distance to the nearest vertex's dual plane; positive outside.
    double signed_distance(const Vec3& x) const;
    bool contains(const Vec3& x) const { return signed_distance(x) <= 0.0; }
    // Non-negative distance from an inside point to the boundary.
    double boundary_distance(const Vec3& x) const;

    // Mirrors x_proposed in the local dual plane until inside. Returns true
    // when the iteration limit forced a clamp.
    bool reflect(const Vec3& x_old, Vec3& x_proposed) const;

    double volume() const;
    double max_edge() const { return max_edge_; }
    Vec3 bbox_min() const { return lo_; }
    Vec3 bbox_max() const { return hi_; }

private:
    struct Index;

    std::vector<Vec3> vertices_;
    std::vector<std::array<int, 3>> triangles_;
    std::vector<Vec3> normals_;
    std::shared_ptr<const Index> index_;
    double max_edge_ = 0.0;
    Vec3 lo_ = Vec3::Zero(), hi_ = Vec3::Zero();
};

Vec3 reflect_at_boundary(const Vec3& x_old, const Vec3& x_proposed, const SurfaceMesh& mesh);

SurfaceMesh make_icosphere(double radius, int subdivisions, const Vec3& centre = Vec3::Zero());
// Capped cylinder whose axis is coordinate `axis` (0 = x), centred on `centre`.
SurfaceMesh make_cylinder(double radius, double height, int axis, int n_around, int n_along, int n_rings,
                          const Vec3& centre = Vec3::Zero());

SurfaceMesh read_mesh(std::istream& is);
SurfaceMesh read_mesh_file(const std::string& path);
void write_mesh(std::ostream& os, const SurfaceMesh& mesh);

} // namespace curvesim
