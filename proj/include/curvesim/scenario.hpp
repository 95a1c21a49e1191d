#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "curvesim/engine.hpp"
#include "curvesim/line_dynamics.hpp"
#include "curvesim/mesh.hpp"
#include "curvesim/model.hpp"
#include "curvesim/state.hpp"

namespace curvesim {

// Thrown by parse_scenario with every problem found, each prefixed by its
// JSON pointer.
class ScenarioError : public std::invalid_argument {
public:
    explicit ScenarioError(std::vector<std::string> errors);
    const std::vector<std::string>& errors() const { return errors_; }

private:
    std::vector<std::string> errors_;
};

struct InitialGroup {
    int species = 0;
    long count = 0;
    std::vector<Vec3> positions;  // explicit free positions (count ignored when set)
    int curve = -1;               // bound initial condition on this curve
    std::vector<double> arclengths;
};

struct Scenario {
    nlohmann::json canonical;  // normalized document, defaults filled in
    std::string name;
    std::uint64_t seed = 0;
    double t_final = 1.0;
    double dt_split = 0.01;
    double output_interval = 0.0;  // 0: a snapshot after every window
    bool write_positions = false;
    std::optional<EngineConfig> engine;
    Model model;
    std::shared_ptr<const SurfaceMesh> mesh;
    std::vector<InitialGroup> initial;
    std::vector<std::string> curve_names;
    std::vector<RoadBlock> road_blocks;
    std::string stop_on_event;  // empty: run to t_final

    EngineConfig engine_config() const { return engine.value_or(EngineConfig{}); }
    // Curves and transforms for one trajectory; random generators draw from rng.
    std::vector<PolylineCurve> build_curves(Rng& rng) const;
    std::vector<CurveTransform> transforms() const;
};

Scenario parse_scenario(const std::string& text);
Scenario load_scenario(const std::string& path);
// Canonical text; parse_scenario(serialize(s)) reproduces it exactly.
std::string serialize_scenario(const Scenario& s);
// FNV-1a of the canonical text, as 16 hex digits.
std::string config_hash(const Scenario& s);

// Uniform positions inside the mesh by rejection from its bounding box.
std::vector<Vec3> sample_uniform_in_mesh(const SurfaceMesh& mesh, std::size_t n, Rng& rng);

// Fresh state for trajectory `stream` of the given seed.
SimulationState make_initial_state(const Scenario& sc, std::uint64_t seed, std::uint64_t stream);

struct Snapshot {
    double time = 0.0;
    std::vector<long> counts;
    std::vector<double> curve_lengths;
};

struct TrajectoryObserver {
    std::function<void(const SimulationState&, const Snapshot&)> on_snapshot;
    std::function<void(const std::vector<Event>&)> on_events;
};

struct TrajectoryResult {
    std::vector<Snapshot> snapshots;
    double end_time = 0.0;
    bool stopped_on_event = false;
    double stop_time = 0.0;
    EngineStats stats;
};

TrajectoryResult run_trajectory(const Scenario& sc, std::uint64_t seed, std::uint64_t stream,
                                const TrajectoryObserver& obs = {});

} // namespace curvesim
