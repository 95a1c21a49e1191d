#include "curvesim/line_dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <Eigen/Geometry>

#include "curvesim/diagnostics.hpp"

namespace curvesim {

std::vector<long> SimulationState::counts(std::size_t n_species) const
{
    std::vector<long> c(n_species, 0);
    for (const auto& m : molecules)
        if (m.alive)
            ++c[std::size_t(m.species)];
    return c;
}

void SimulationState::compact()
{
    std::erase_if(molecules, [](const Molecule& m) { return !m.alive; });
}

PolylineCurve rotate_curve(const PolylineCurve& curve, double dtheta, double dphi)
{
    const Eigen::Matrix3d R =
        (Eigen::AngleAxisd(dphi, Vec3::UnitY()) * Eigen::AngleAxisd(dtheta, Vec3::UnitX())).toRotationMatrix();
    return apply_transform(curve, [&](const Vec3& p) -> Vec3 { return R * p; });
}

PolylineCurve grow_shrink(const PolylineCurve& curve, double X, double l_min, double l_max)
{
    const double l = curve.length();
    const double target = std::clamp(l + X, l_min, l_max);
    if (target == l)
        return curve;
    const double ratio = target / l;
    const Vec3 c = curve.centroid();
    return apply_transform(curve, [&](const Vec3& p) -> Vec3 { return c + ratio * (p - c); });
}

void reproject_bound(SimulationState& state, const std::vector<PolylineCurve>& old_curves)
{
    for (auto& m : state.molecules) {
        if (!m.bound)
            continue;
        const Vec3 x = old_curves[std::size_t(m.curve)].point_at(m.s);
        m.s = state.curves[std::size_t(m.curve)].closest_point(x).s;
    }
}

double enforce_road_blocks(int curve, double s, double move, double radius, const std::vector<RoadBlock>& blocks)
{
    for (const auto& b : blocks) {
        if (b.curve != curve)
            continue;
        const double contact = radius + b.radius;
        if (move > 0.0 && b.s > s)
            move = std::min(move, std::max(0.0, b.s - contact - s));
        else if (move < 0.0 && b.s < s)
            move = std::max(move, std::min(0.0, b.s + contact - s));
    }
    return move;
}

std::pair<double, double> free_interval(const SimulationState& state, int curve, double s, double radius)
{
    double lo = 0.0;
    double hi = state.curves[std::size_t(curve)].length();
    for (const auto& b : state.road_blocks) {
        if (b.curve != curve)
            continue;
        if (b.s < s)
            lo = std::max(lo, b.s + b.radius + radius);
        else if (b.s > s)
            hi = std::min(hi, b.s - b.radius - radius);
    }
    return {lo, hi};
}

namespace {

constexpr double kSeparationSlack = 1.0 + 1e-12;

// Separates an ordered chain inside per-molecule bounds. Returns false if
// the chain does not fit.
bool separate_chain(std::vector<double>& s, const std::vector<double>& gap, const std::vector<double>& lo,
                    const std::vector<double>& hi)
{
    const std::size_t n = s.size();
    auto violated = [&] {
        for (std::size_t k = 0; k + 1 < n; ++k)
            if (s[k + 1] - s[k] < gap[k])
                return true;
        return false;
    };
    if (!violated())
        return true;
    // Symmetric pushes first so that isolated overlaps split evenly.
    for (int sweep = 0; sweep < 20 && violated(); ++sweep) {
        for (std::size_t k = 0; k + 1 < n; ++k) {
            const double deficit = gap[k] * kSeparationSlack - (s[k + 1] - s[k]);
            if (deficit <= 0.0)
                continue;
            double left = s[k] - 0.5 * deficit;
            double right = s[k + 1] + 0.5 * deficit;
            if (left < lo[k]) {
                right += lo[k] - left;
                left = lo[k];
            }
            if (right > hi[k + 1]) {
                left -= right - hi[k + 1];
                right = hi[k + 1];
            }
            s[k] = std::max(left, lo[k]);
            s[k + 1] = right;
        }
    }
    if (!violated())
        return true;
    // Exact two-pass packing.
    for (std::size_t k = 0; k + 1 < n; ++k)
        s[k + 1] = std::max(s[k + 1], s[k] + gap[k] * kSeparationSlack);
    for (std::size_t k = n; k-- > 0;) {
        if (k + 1 < n)
            s[k] = std::min(s[k], s[k + 1] - gap[k] * kSeparationSlack);
        s[k] = std::min(s[k], hi[k]);
    }
    for (std::size_t k = 0; k < n; ++k)
        s[k] = std::max(s[k], lo[k]);
    return !violated();
}

double bound_gap(const Model& model, const Molecule& a, const Molecule& b)
{
    const int r = model.bimolecular_1d(a.species, b.species);
    return r >= 0 ? model.pair_sigma(r) : model.species(a.species).radius + model.species(b.species).radius;
}

} // namespace

OverlapReport resolve_overlaps(SimulationState& state, const Model& model)
{
    OverlapReport report;

    // Bound molecules: per curve, ordered by (arclength, id), chains split at
    // road blocks.
    for (std::size_t c = 0; c < state.curves.size(); ++c) {
        std::vector<std::size_t> idx;
        for (std::size_t i = 0; i < state.molecules.size(); ++i)
            if (state.molecules[i].bound && state.molecules[i].curve == int(c))
                idx.push_back(i);
        if (idx.size() < 2)
            continue;
        std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
            const auto& ma = state.molecules[a];
            const auto& mb = state.molecules[b];
            return ma.s != mb.s ? ma.s < mb.s : ma.id < mb.id;
        });
        std::size_t start = 0;
        while (start < idx.size()) {
            const auto& first = state.molecules[idx[start]];
            const auto iv0 = free_interval(state, int(c), first.s, 0.0);
            std::size_t end = start + 1;
            while (end < idx.size() &&
                   free_interval(state, int(c), state.molecules[idx[end]].s, 0.0) == iv0)
                ++end;
            const std::size_t n = end - start;
            if (n >= 2) {
                std::vector<double> s(n), gap(n, 0.0), lo(n), hi(n);
                for (std::size_t k = 0; k < n; ++k) {
                    const auto& m = state.molecules[idx[start + k]];
                    s[k] = m.s;
                    const auto iv = free_interval(state, int(c), m.s, model.species(m.species).radius);
                    lo[k] = iv.first;
                    hi[k] = iv.second;
                    if (k + 1 < n)
                        gap[k] = bound_gap(model, m, state.molecules[idx[start + k + 1]]);
                }
                const std::vector<double> before = s;
                if (!separate_chain(s, gap, lo, hi)) {
                    ++report.infeasible;
                    warn("overlap resolution infeasible on curve " + std::to_string(c));
                }
                for (std::size_t k = 0; k < n; ++k) {
                    if (s[k] != before[k]) {
                        state.molecules[idx[start + k]].s = s[k];
                        ++report.bound_moved;
                    }
                }
            }
            start = end;
        }
    }

    // Free molecules overlapping curves they can bind to.
    for (auto& m : state.molecules) {
        if (m.bound || !model.can_bind_any(m.species))
            continue;
        for (int iter = 0; iter < 4; ++iter) {
            bool moved = false;
            for (const auto& curve : state.curves) {
                if (!model.can_bind(m.species, curve.id()))
                    continue;
                const double sigma = model.binding_sigma(m.species, curve.id(), curve.reaction_radius());
                const ClosestPoint cp = curve.closest_point(m.x);
                if (cp.distance >= sigma)
                    continue;
                Vec3 dir = m.x - cp.point;
                if (cp.distance > 0.0)
                    dir /= cp.distance;
                else
                    dir = cylindrical_frame(curve.segment(cp.segment)).e1;
                m.x = cp.point + sigma * kSeparationSlack * dir;
                moved = true;
            }
            if (!moved)
                break;
            ++report.free_moved;
        }
    }

    // Reactive free pairs closer than contact.
    std::vector<std::size_t> reactive;
    for (std::size_t i = 0; i < state.molecules.size(); ++i)
        if (!state.molecules[i].bound && model.reactive_3d(state.molecules[i].species))
            reactive.push_back(i);
    for (std::size_t a = 0; a < reactive.size(); ++a) {
        for (std::size_t b = a + 1; b < reactive.size(); ++b) {
            auto& m1 = state.molecules[reactive[a]];
            auto& m2 = state.molecules[reactive[b]];
            const int r = model.bimolecular_3d(m1.species, m2.species);
            if (r < 0)
                continue;
            const double sigma = model.pair_sigma(r);
            Vec3 d = m2.x - m1.x;
            const double dist = d.norm();
            if (dist >= sigma)
                continue;
            d = dist > 0.0 ? Vec3(d / dist) : Vec3(Vec3::UnitX());
            const Vec3 mid = 0.5 * (m1.x + m2.x);
            m1.x = mid - 0.5 * sigma * kSeparationSlack * d;
            m2.x = mid + 0.5 * sigma * kSeparationSlack * d;
            ++report.free_moved;
        }
    }
    return report;
}

void apply_curve_dynamics(SimulationState& state, const Model& model, const std::vector<CurveTransform>& transforms,
                          double dt_split)
{
    bool any = false;
    for (const auto& t : transforms)
        any = any || t.rotate || t.grow;
    if (!any)
        return;
    // Bound molecules ride along with a rotation, so only growth needs the
    // projection from the rotated curve.
    std::vector<PolylineCurve> old = state.curves;
    for (std::size_t c = 0; c < state.curves.size() && c < transforms.size(); ++c) {
        const CurveTransform& t = transforms[c];
        if (t.rotate) {
            const double dtheta = 2.0 * kPi * dt_split * state.rng.normal();
            const double dphi = 2.0 * kPi * dt_split * state.rng.normal();
            state.curves[c] = rotate_curve(state.curves[c], dtheta, dphi);
            old[c] = state.curves[c];
        }
        if (t.grow) {
            const double X = state.rng.normal(std::sqrt(2.0 * t.D_l * dt_split));
            state.curves[c] = grow_shrink(state.curves[c], X, t.l_min, t.l_max);
        }
    }
    reproject_bound(state, old);
    resolve_overlaps(state, model);
}

} // namespace curvesim
