#include "curvesim/curve.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "curvesim/diagnostics.hpp"
#include "curvesim/error.hpp"

namespace curvesim {

PolylineCurve::PolylineCurve(std::vector<Vec3> points, double reaction_radius, int id, std::string name)
    : points_(std::move(points)), reaction_radius_(reaction_radius), id_(id), name_(std::move(name))
{
    if (points_.size() < 2)
        throw InputError("a curve needs at least two points");
    if (!(reaction_radius >= 0.0))
        throw InputError("negative curve reaction radius");
    cumulative_.assign(1, 0.0);
    for (std::size_t i = 0; i + 1 < points_.size(); ++i) {
        const double l = (points_[i + 1] - points_[i]).norm();
        if (!(l > 0.0)) {
            std::ostringstream os;
            os << "zero-length segment " << i << " in curve " << id;
            throw InputError(os.str());
        }
        cumulative_.push_back(cumulative_.back() + l);
    }
}

std::size_t PolylineCurve::segment_at(double s) const
{
    const auto it = std::lower_bound(cumulative_.begin() + 1, cumulative_.end(), s);
    const std::size_t i = std::size_t(it - cumulative_.begin()) - 1;
    return std::min(i, segment_count() - 1);
}

Vec3 PolylineCurve::point_at(double s) const
{
    const double l = length();
    if (s < 0.0 || s > l) {
        if (s < -1e-9 * l || s > l * (1.0 + 1e-9))
            warn("arclength clamped", std::to_string(s) + " outside [0, " + std::to_string(l) + "]");
        s = std::clamp(s, 0.0, l);
    }
    const std::size_t i = segment_at(s);
    const double t = (s - cumulative_[i]) / segment_length(i);
    return points_[i] + t * (points_[i + 1] - points_[i]);
}

Vec3 PolylineCurve::tangent_at(double s) const
{
    const std::size_t i = segment_at(s);
    return (points_[i + 1] - points_[i]).normalized();
}

ClosestPoint PolylineCurve::closest_point(const Vec3& x) const
{
    ClosestPoint best;
    double best_d2 = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < segment_count(); ++i) {
        const Segment seg = segment(i);
        const double t = project_onto_segment(seg, x);
        const Vec3 p = t <= 0.0 ? seg.a : t >= 1.0 ? seg.b : Vec3(seg.a + t * (seg.b - seg.a));
        const double d2 = (x - p).squaredNorm();
        if (d2 < best_d2) {
            best_d2 = d2;
            best.segment = i;
            best.s = cumulative_[i] + std::clamp(t, 0.0, 1.0) * segment_length(i);
            best.point = p;
        }
    }
    best.distance = std::sqrt(best_d2);
    return best;
}

Vec3 PolylineCurve::centroid() const
{
    Vec3 c = Vec3::Zero();
    for (std::size_t i = 0; i < segment_count(); ++i)
        c += segment_length(i) * 0.5 * (points_[i] + points_[i + 1]);
    return c / length();
}

ClosestPoint closest_point(const PolylineCurve& curve, const Vec3& x)
{
    return curve.closest_point(x);
}

Vec3 arclength_to_point(const PolylineCurve& curve, double s)
{
    return curve.point_at(s);
}

double project_onto_segment(const Segment& seg, const Vec3& x)
{
    const Vec3 d = seg.b - seg.a;
    return std::clamp((x - seg.a).dot(d) / d.squaredNorm(), 0.0, 1.0);
}

double distance_to_segment(const Segment& seg, const Vec3& x)
{
    const double t = project_onto_segment(seg, x);
    return (x - (seg.a + t * (seg.b - seg.a))).norm();
}

double protective_radius(const Vec3& x, const Segment& seg)
{
    return std::min((x - seg.a).norm(), (x - seg.b).norm());
}

CylindricalFrame cylindrical_frame(const Segment& seg)
{
    CylindricalFrame f;
    f.origin = seg.a;
    f.axis = (seg.b - seg.a).normalized();
    // Reference direction: the coordinate axis least aligned with the segment.
    Vec3 ref = Vec3::UnitX();
    const Vec3 a = f.axis.cwiseAbs();
    if (a.y() <= a.x() && a.y() <= a.z())
        ref = Vec3::UnitY();
    else if (a.z() <= a.x() && a.z() <= a.y())
        ref = Vec3::UnitZ();
    f.e1 = (ref - ref.dot(f.axis) * f.axis).normalized();
    f.e2 = f.axis.cross(f.e1);
    return f;
}

CylindricalCoords CylindricalFrame::to_local(const Vec3& x) const
{
    const Vec3 d = x - origin;
    const double u = d.dot(e1);
    const double v = d.dot(e2);
    CylindricalCoords c;
    c.z = d.dot(axis);
    c.r = std::hypot(u, v);
    c.theta = c.r > 0.0 ? std::atan2(v, u) : 0.0;
    return c;
}

Vec3 CylindricalFrame::to_cartesian(const CylindricalCoords& c) const
{
    return origin + c.z * axis + c.r * (std::cos(c.theta) * e1 + std::sin(c.theta) * e2);
}

CylindricalCoords cylindrical_coords(const Segment& seg, const Vec3& x)
{
    return cylindrical_frame(seg).to_local(x);
}

PolylineCurve discretize_curve(const std::function<Vec3(double)>& f, double s0, double s1, int n,
                               double reaction_radius, int id, std::string name)
{
    if (n < 1)
        throw InputError("curve discretization needs at least one segment");
    std::vector<Vec3> pts;
    pts.reserve(std::size_t(n) + 1);
    for (int i = 0; i <= n; ++i) {
        const double s = i == n ? s1 : s0 + (s1 - s0) * i / n;
        pts.push_back(f(s));
    }
    return PolylineCurve(std::move(pts), reaction_radius, id, std::move(name));
}

PolylineCurve make_line(const Vec3& p, const Vec3& q, int n, double reaction_radius, int id, std::string name)
{
    return discretize_curve([&](double t) -> Vec3 { return t == 1.0 ? q : Vec3(p + t * (q - p)); }, 0.0,
                            1.0, n, reaction_radius, id, std::move(name));
}

PolylineCurve make_spiral(const Vec3& offset, double r_c, double pitch, double turns, int n, double phase,
                          double reaction_radius, int id, std::string name)
{
    return discretize_curve(
        [&](double s) -> Vec3 {
            const double a = 2.0 * kPi * s + phase;
            return offset + Vec3(pitch * s, r_c * std::cos(a), r_c * std::sin(a));
        },
        0.0, turns, n, reaction_radius, id, std::move(name));
}

PolylineCurve make_circle(const Vec3& centre, double radius, const Vec3& normal, int n,
                          double reaction_radius, int id, std::string name)
{
    const CylindricalFrame f = cylindrical_frame({centre, centre + normal});
    return discretize_curve(
        [&](double t) -> Vec3 {
            if (t == 1.0)
                return f.to_cartesian({radius, 0.0, 0.0});
            return f.to_cartesian({radius, 2.0 * kPi * t, 0.0});
        },
        0.0, 1.0, n, reaction_radius, id, std::move(name));
}

PolylineCurve apply_transform(const PolylineCurve& curve, const std::function<Vec3(const Vec3&)>& T)
{
    std::vector<Vec3> pts;
    pts.reserve(curve.points().size());
    for (const Vec3& p : curve.points())
        pts.push_back(T(p));
    return PolylineCurve(std::move(pts), curve.reaction_radius(), curve.id(), curve.name());
}

} // namespace curvesim
