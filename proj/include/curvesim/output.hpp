#pragma once

#include <cstdint>
#include <fstream>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "curvesim/engine.hpp"
#include "curvesim/scenario.hpp"

namespace curvesim {

// Header fields shared by every output file ("# key: value" lines).
struct OutputHeader {
    std::string kind;  // counts, events or positions
    std::string scenario;
    std::string config_hash;
    std::uint64_t seed = 0;
    std::uint64_t trajectory = 0;
    std::map<std::string, std::string> extra;
};

struct CountsTable {
    OutputHeader header;
    std::vector<std::string> species;
    std::vector<std::string> curves;
    std::vector<double> time;
    std::vector<std::vector<long>> counts;           // [row][species]
    std::vector<std::vector<double>> curve_lengths;  // [row][curve]

    int species_column(const std::string& name) const;
};

struct EventRow {
    double time = 0.0;
    std::string kind;
    int rule = -1;
    std::string species;
    std::uint64_t reactant_a = kNoId;
    std::uint64_t reactant_b = kNoId;
    std::vector<std::uint64_t> products;
    Vec3 x = Vec3::Zero();
    int curve = -1;
    double s = 0.0;
};

struct EventTable {
    OutputHeader header;
    std::vector<EventRow> rows;
};

struct PositionRow {
    double time = 0.0;
    std::uint64_t id = 0;
    std::string species;
    bool bound = false;
    Vec3 x = Vec3::Zero();
    int curve = -1;
    double s = 0.0;
};

struct PositionTable {
    OutputHeader header;
    std::vector<PositionRow> rows;
};

// Per-trajectory writer; file names carry the trajectory index.
class TrajectoryWriter {
public:
    TrajectoryWriter(const std::string& out_dir, const Scenario& sc, std::uint64_t seed, std::uint64_t trajectory);

    void snapshot(const SimulationState& st, const Snapshot& s);
    void events(const std::vector<Event>& ev);
    TrajectoryObserver observer();
    void close();

    static std::string counts_name(std::uint64_t trajectory);
    static std::string events_name(std::uint64_t trajectory);
    static std::string positions_name(std::uint64_t trajectory);

private:
    const Scenario& sc_;
    std::ofstream counts_, events_, positions_;
    std::string dir_;
    bool positions_on_;
};

CountsTable read_counts(const std::string& path);
EventTable read_events(const std::string& path);
PositionTable read_positions(const std::string& path);

} // namespace curvesim
