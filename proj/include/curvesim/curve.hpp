#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "curvesim/vec.hpp"

namespace curvesim {

struct Segment {
    Vec3 a;
    Vec3 b;

    double length() const { return (b - a).norm(); }
};

struct ClosestPoint {
    std::size_t segment = 0;
    double s = 0.0;         // global arclength
    double distance = 0.0;
    Vec3 point = Vec3::Zero();
};

// Piecewise-linear curve p_1 ... p_{N+1}. Positions on the curve are
// addressed by global arclength s in [0, length()].
class PolylineCurve {
public:
    PolylineCurve() = default;
    PolylineCurve(std::vector<Vec3> points, double reaction_radius, int id = 0, std::string name = {});

    int id() const { return id_; }
    const std::string& name() const { return name_; }
    double reaction_radius() const { return reaction_radius_; }
    const std::vector<Vec3>& points() const { return points_; }

    std::size_t segment_count() const { return points_.size() - 1; }
    Segment segment(std::size_t i) const { return {points_[i], points_[i + 1]}; }
    double segment_start(std::size_t i) const { return cumulative_[i]; }
    double segment_length(std::size_t i) const { return cumulative_[i + 1] - cumulative_[i]; }
    double length() const { return cumulative_.back(); }

    // Segment containing arclength s; a shared vertex belongs to the lower index.
    std::size_t segment_at(double s) const;
    // Position at arclength s; out-of-range s is clamped with a warning.
    Vec3 point_at(double s) const;
    // Unit tangent of the segment containing s.
    Vec3 tangent_at(double s) const;
    ClosestPoint closest_point(const Vec3& x) const;
    // Length-weighted centroid of the polyline.
    Vec3 centroid() const;

private:
    std::vector<Vec3> points_;
    std::vector<double> cumulative_{0.0};
    double reaction_radius_ = 0.0;
    int id_ = 0;
    std::string name_;
};

ClosestPoint closest_point(const PolylineCurve& curve, const Vec3& x);
Vec3 arclength_to_point(const PolylineCurve& curve, double s);

// Parameter t in [0, 1] of the point on the segment nearest to x.
double project_onto_segment(const Segment& seg, const Vec3& x);
double distance_to_segment(const Segment& seg, const Vec3& x);

double protective_radius(const Vec3& x, const Segment& seg);

struct CylindricalCoords {
    double r = 0.0;
    double theta = 0.0;
    double z = 0.0;
};

// Frame with origin at the segment start and z along the segment.
struct CylindricalFrame {
    Vec3 origin = Vec3::Zero();
    Vec3 axis = Vec3::UnitZ();
    Vec3 e1 = Vec3::UnitX();
    Vec3 e2 = Vec3::UnitY();

    CylindricalCoords to_local(const Vec3& x) const;
    Vec3 to_cartesian(const CylindricalCoords& c) const;
};

CylindricalFrame cylindrical_frame(const Segment& seg);
CylindricalCoords cylindrical_coords(const Segment& seg, const Vec3& x);

PolylineCurve discretize_curve(const std::function<Vec3(double)>& f, double s0, double s1, int n,
                               double reaction_radius, int id = 0, std::string name = {});

PolylineCurve make_line(const Vec3& p, const Vec3& q, int n, double reaction_radius, int id = 0,
                        std::string name = {});

// offset + (pitch * s, r_c cos(2 pi s + phase), r_c sin(2 pi s + phase)), s in [0, turns].
PolylineCurve make_spiral(const Vec3& offset, double r_c, double pitch, double turns, int n,
                          double phase, double reaction_radius, int id = 0, std::string name = {});

// Closed circle in the plane orthogonal to `normal`.
PolylineCurve make_circle(const Vec3& centre, double radius, const Vec3& normal, int n,
                          double reaction_radius, int id = 0, std::string name = {});

PolylineCurve apply_transform(const PolylineCurve& curve, const std::function<Vec3(const Vec3&)>& T);

} // namespace curvesim
