#pragma once

#include <algorithm>
#include <cstdint>
#include <limits>
#include <utility>
#include <vector>

#include "curvesim/model.hpp"
#include "curvesim/propagators.hpp"
#include "curvesim/state.hpp"

namespace curvesim {

struct EngineConfig {
    double K = 25.0;
    double dt_min = 1e-8;
    double dt_split = 0.01;
    double pair_distance_factor = 5.0;
    // A contact is treated as unreachable within dt beyond reach * sqrt(2 D dt).
    double reach = 6.0;
    GridParams grid{.radial_cells = 100, .time_steps = 50};
    std::size_t cache_capacity = 4096;
    double r0_bucket = 0.0;
    // Bound molecules on different segments of one curve may pair. When off,
    // only same-segment molecules pair and the rest approach as singles.
    bool cross_segment_pairs = true;
    // Steps limited only by molecules of other groups are not shortened below
    // dt_split / max_epochs.
    int max_epochs = 1000;

    // Rungs per octave onto which constraint-limited propagator steps are
    // rounded down (0 = off). With r0_bucket this lets the cache hit.
    int dt_ladder = 0;

    double neighbour_floor() const { return std::max(dt_min, dt_split / max_epochs); }

    // Throws InputError on inconsistent values.
    void validate() const;
};

enum class EventKind { Bind, Unbind, Bimolecular3D, Bimolecular1D, Unimolecular, SiteAbsorb };

const char* to_string(EventKind k);

inline constexpr std::uint64_t kNoId = std::numeric_limits<std::uint64_t>::max();

struct Event {
    double time = 0.0;
    EventKind kind = EventKind::Unimolecular;
    int rule = -1;
    std::uint64_t reactant_a = kNoId;
    std::uint64_t reactant_b = kNoId;
    std::vector<std::uint64_t> products;
    int species = -1;  // first product species, or the reactant's when there is none
    Vec3 x = Vec3::Zero();
    int curve = -1;
    double s = 0.0;
};

// Centre of diffusion Y and separation y = x2 - x1. For D1 + D2 = 0 the
// weights fall back to 1/2.
struct PairFrame {
    Vec3 Y = Vec3::Zero();
    Vec3 y = Vec3::Zero();
    double D1 = 0.0;
    double D2 = 0.0;

    double D() const { return D1 + D2; }
    // Diffusion coefficient of Y.
    double D_centre() const { return D() > 0.0 ? D1 * D2 / D() : 0.0; }
    double w1() const { return D() > 0.0 ? D1 / D() : 0.5; }
    double w2() const { return D() > 0.0 ? D2 / D() : 0.5; }

    static PairFrame from_positions(const Vec3& x1, const Vec3& x2, double D1, double D2);
    Vec3 x1() const { return Y - w1() * y; }
    Vec3 x2() const { return Y + w2() * y; }
};

struct Decomposition {
    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    std::vector<std::size_t> singles;
    std::vector<std::size_t> near_curve;
    std::vector<std::pair<std::size_t, std::size_t>> on_curve_pairs;
    std::vector<std::size_t> on_curve_singles;
};

// Mutual-nearest-neighbour grouping. Only molecules that share a contact
// rule are candidates; ties go to the lower id. Molecules with active[i] == 0
// are left out entirely.
Decomposition pair_decomposition(const SimulationState& state, const Model& model, const EngineConfig& cfg,
                                 const std::vector<char>* active = nullptr);

// min(clearance^2 / (K 6 D), remaining), floored at dt_min (or at remaining
// when that is shorter).
double choose_time_step(const std::vector<double>& clearances, double D, double remaining, const EngineConfig& cfg);

struct StepResult {
    double advanced = 0.0;  // time consumed; equals tau when a reaction fired
    bool reacted = false;
};

struct EngineStats {
    long free_steps = 0;
    long near_curve_solves = 0;
    long pair_solves = 0;
    long line_pair_solves = 0;
    long site_solves = 0;
    long on_curve_steps = 0;
    long epochs = 0;
};

class Engine {
public:
    Engine(const Model& model, EngineConfig cfg);

    const Model& model() const { return model_; }
    const EngineConfig& config() const { return cfg_; }
    PropagatorCache& cache() { return cache_; }
    const EngineStats& stats() const { return stats_; }

    // Advances every molecule from state.time to state.time + dt and
    // restores the overlap invariants.
    void step_window(SimulationState& state, double dt);

    // Samples the pending first-order event time of molecule i from `now`.
    void schedule(SimulationState& state, std::size_t i, double now);
    void schedule_all(SimulationState& state);

    // Single-step primitives. Each advances its molecules by exactly dt unless
    // a reaction fires first; `now` is the absolute time at the start.
    StepResult propagate_free(SimulationState& state, std::size_t i, double dt, double now);
    StepResult propagate_near_curve(SimulationState& state, std::size_t i, int curve, std::size_t segment, double dt,
                                    double now);
    StepResult propagate_on_curve(SimulationState& state, std::size_t i, double dt, double now);
    StepResult propagate_pair_3d(SimulationState& state, std::size_t i, std::size_t j, double dt, double now);
    StepResult propagate_pair_on_curve(SimulationState& state, std::size_t i, std::size_t j, double dt, double now);
    StepResult propagate_site(SimulationState& state, std::size_t i, int rule, double dt, double now);
    // Executes molecule i's pending first-order event at its event_time.
    void fire_first_order(SimulationState& state, std::size_t i);

    const std::vector<Event>& events() const { return events_; }
    std::vector<Event> take_events();

private:
    struct Group {
        std::size_t a;
        std::size_t b;  // == a for singles
        double t;
        double end = 0.0;
    };

    void run_group(SimulationState& state, Group g, double t_end, std::vector<Group>& spawned);
    void run_single(SimulationState& state, std::size_t i, double t, double t_end, std::vector<Group>& spawned);
    void run_pair(SimulationState& state, std::size_t i, std::size_t j, double t, double t_end,
                  std::vector<Group>& spawned);
    double ladder(double dt) const;
    // Clearance time from molecule i to the nearest reactive partner outside
    // its group (group[j] labels every molecule).
    double isolation_time(const SimulationState& state, const std::vector<std::size_t>& group, std::size_t i) const;
    double free_single_step(SimulationState& state, std::size_t i, double rem, double now, bool& reacted);
    double bound_single_step(SimulationState& state, std::size_t i, double rem, double now, bool& reacted);
    void spawn_products(SimulationState& state, const std::vector<std::size_t>& made, double t,
                        std::vector<Group>& spawned);
    std::vector<std::size_t> last_products_;

    void move_free(SimulationState& state, std::size_t i, const Vec3& x_new);
    void move_on_curve(SimulationState& state, std::size_t i, double move);
    std::size_t add_molecule(SimulationState& state, int species, bool bound, const Vec3& x, int curve, double s,
                             double now, std::uint64_t id);
    int pick_channel(SimulationState& state, const std::vector<int>& rules);
    void bind(SimulationState& state, std::size_t i, int curve, double s, double now);

    const Model& model_;
    EngineConfig cfg_;
    PropagatorCache cache_;
    EngineStats stats_;
    std::vector<Event> events_;
};

} // namespace curvesim
