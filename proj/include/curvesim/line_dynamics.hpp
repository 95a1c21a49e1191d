#pragma once

#include <vector>

#include "curvesim/curve.hpp"
#include "curvesim/model.hpp"
#include "curvesim/rng.hpp"
#include "curvesim/state.hpp"

namespace curvesim {

// Per-curve random motion applied once per splitting window.
struct CurveTransform {
    bool rotate = false;
    bool grow = false;
    double D_l = 0.0;
    double l_min = 0.0;
    double l_max = kNever;
};

// Rotation about the x-axis by dtheta followed by the y-axis by dphi.
PolylineCurve rotate_curve(const PolylineCurve& curve, double dtheta, double dphi);

// Scales about the centroid so the length becomes clamp(l + X, l_min, l_max).
PolylineCurve grow_shrink(const PolylineCurve& curve, double X, double l_min, double l_max);

// Maps every bound molecule's old 3D position to the closest point of its
// (new) curve in state.curves.
void reproject_bound(SimulationState& state, const std::vector<PolylineCurve>& old_curves);

// Clips an on-curve displacement so the molecule stops at contact with the
// first road block in the direction of motion.
double enforce_road_blocks(int curve, double s, double move, double radius, const std::vector<RoadBlock>& blocks);

// Admissible arclength interval for a molecule of the given radius at s,
// bounded by curve ends and the neighbouring road blocks.
std::pair<double, double> free_interval(const SimulationState& state, int curve, double s, double radius);

struct OverlapReport {
    int bound_moved = 0;
    int free_moved = 0;
    int infeasible = 0;
};

// Separates overlapping bound molecules (reactive pairs use the rule radius,
// others the sum of species radii), pushes free molecules out of curves they
// can bind to and separates overlapping reactive free pairs.
OverlapReport resolve_overlaps(SimulationState& state, const Model& model);

// Samples and applies one window of curve motion, then reprojects and
// resolves overlaps.
void apply_curve_dynamics(SimulationState& state, const Model& model, const std::vector<CurveTransform>& transforms,
                          double dt_split);

} // namespace curvesim
