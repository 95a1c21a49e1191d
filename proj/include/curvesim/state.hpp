#pragma once

#include <cstdint>
#include <limits>
#include <memory>
#include <vector>

#include "curvesim/curve.hpp"
#include "curvesim/mesh.hpp"
#include "curvesim/model.hpp"
#include "curvesim/rng.hpp"
#include "curvesim/vec.hpp"

namespace curvesim {

inline constexpr double kNever = std::numeric_limits<double>::infinity();

struct Molecule {
    std::uint64_t id = 0;
    int species = 0;
    bool bound = false;
    Vec3 x = Vec3::Zero();  // free position
    int curve = -1;         // bound: curve id (index into SimulationState::curves)
    double s = 0.0;         // bound: global arclength
    double event_time = kNever;  // pending first-order event (absolute time)
    bool alive = true;           // false once consumed by a reaction, until compaction
};

struct SimulationState {
    double time = 0.0;
    std::vector<Molecule> molecules;
    std::vector<PolylineCurve> curves;
    std::shared_ptr<const SurfaceMesh> mesh;  // null: unbounded space
    std::vector<RoadBlock> road_blocks;
    std::vector<bool> site_active;
    std::uint64_t next_id = 0;
    Rng rng;

    Vec3 position(const Molecule& m) const { return m.bound ? curves[std::size_t(m.curve)].point_at(m.s) : m.x; }
    std::vector<long> counts(std::size_t n_species) const;
    // Drops molecules consumed by reactions.
    void compact();
};

} // namespace curvesim
