#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "curvesim/error.hpp"
#include "curvesim/output.hpp"
#include "curvesim/scenario.hpp"

using namespace curvesim;

namespace {

const char* kSmall = R"({
  "name": "small",
  "seed": 9,
  "t_final": 0.05,
  "dt_split": 0.01,
  "output": {"interval": 0.01, "positions": true},
  "boundary": {"type": "sphere", "radius": 5e-7},
  "curves": [{"name": "rod", "type": "line", "from": [-2e-7, 0, 0], "to": [2e-7, 0, 0], "reaction_radius": 1e-9}],
  "species": [{"name": "A", "D": 1e-12}, {"name": "A_cyl", "D": 1e-12, "D_bound": 1e-13}],
  "reactions": [
    {"kind": "bind", "reactants": ["A"], "products": ["A_cyl"], "rate": 1e-10},
    {"kind": "unbind", "reactants": ["A_cyl"], "products": ["A"], "rate": 5}
  ],
  "initial": [{"species": "A", "count": 20}]
})";

std::string scenario_dir()
{
    return CURVESIM_SCENARIO_DIR;
}

std::filesystem::path scratch(const std::string& name)
{
    const auto p = std::filesystem::temp_directory_path() / ("curvesim_test_" + name);
    std::filesystem::remove_all(p);
    return p;
}

std::vector<std::string> errors_of(const std::string& text)
{
    try {
        parse_scenario(text);
    } catch (const ScenarioError& e) {
        return e.errors();
    }
    return {};
}

bool mentions(const std::vector<std::string>& errors, const std::string& what)
{
    for (const auto& e : errors)
        if (e.find(what) != std::string::npos)
            return true;
    return false;
}

} // namespace

TEST_CASE("small scenario parses")
{
    const Scenario sc = parse_scenario(kSmall);
    CHECK(sc.name == "small");
    CHECK(sc.seed == 9);
    CHECK(sc.t_final == 0.05);
    CHECK(sc.write_positions);
    REQUIRE(sc.model.species().size() == 2);
    CHECK(sc.model.species_index("A_cyl") == 1);
    REQUIRE(sc.model.rules().size() == 2);
    CHECK(sc.model.rule(0).kind == RuleKind::BindToCurve);
    CHECK(sc.model.rule(1).kind == RuleKind::UnbindFromCurve);
    CHECK(sc.curve_names == std::vector<std::string>{"rod"});
    REQUIRE(sc.mesh);
    CHECK(sc.mesh->contains(Vec3::Zero()));
}

TEST_CASE("shipped cylinder scenario")
{
    const Scenario sc = load_scenario(scenario_dir() + "/cylinder.json");
    REQUIRE(sc.mesh);
    const Vec3 span = sc.mesh->bbox_max() - sc.mesh->bbox_min();
    CHECK(span[0] == doctest::Approx(2e-6).epsilon(1e-9));
    CHECK(span[1] == doctest::Approx(2e-6).epsilon(0.01));
    CHECK(sc.model.rule(0).rate == 1e-11);
    CHECK(sc.model.rule(1).rate == 50.0);
    REQUIRE(sc.initial.size() == 1);
    CHECK(sc.initial[0].count == 250);
    Rng rng(1, 0);
    const auto curves = sc.build_curves(rng);
    REQUIRE(curves.size() == 1);
    CHECK(curves[0].length() == doctest::Approx(2e-6));
}

TEST_CASE("every shipped scenario loads")
{
    for (const char* f : {"cylinder", "roadblocks", "transport", "growth", "spirals"}) {
        CAPTURE(f);
        CHECK_NOTHROW(load_scenario(scenario_dir() + "/" + f + ".json"));
    }
}

TEST_CASE("invalid scenarios name the offending field")
{
    std::string text = kSmall;
    text.replace(text.find("\"D\": 1e-12"), 10, "\"D\": -1e-12");
    auto e = errors_of(text);
    CHECK(mentions(e, "/species/0/D"));
    CHECK(mentions(e, "non-negative"));

    text = kSmall;
    text.replace(text.find("\"t_final\""), 9, "\"t_finale\"");
    e = errors_of(text);
    CHECK(mentions(e, "/t_finale"));
    CHECK(mentions(e, "/t_final: required"));

    text = kSmall;
    text.replace(text.find("[\"A_cyl\"], \"rate\""), 9, "[\"B_cyl\"]");
    CHECK_FALSE(errors_of(text).empty());

    CHECK_THROWS_AS(parse_scenario("{not json"), ScenarioError);
    CHECK_THROWS_AS(load_scenario("/nonexistent/scenario.json"), InputError);
}

TEST_CASE("serialization round trip")
{
    const Scenario a = parse_scenario(kSmall);
    const std::string text = serialize_scenario(a);
    const Scenario b = parse_scenario(text);
    CHECK(serialize_scenario(b) == text);
    CHECK(config_hash(a) == config_hash(b));
    CHECK(config_hash(a).size() == 16);

    std::string other = kSmall;
    other.replace(other.find("\"count\": 20"), 11, "\"count\": 21");
    CHECK(config_hash(parse_scenario(other)) != config_hash(a));
    for (const char* f : {"cylinder", "spirals"}) {
        const Scenario s = load_scenario(scenario_dir() + "/" + f + ".json");
        CHECK(serialize_scenario(parse_scenario(serialize_scenario(s))) == serialize_scenario(s));
    }
}

TEST_CASE("trajectory files round trip")
{
    const Scenario sc = parse_scenario(kSmall);
    const auto dir = scratch("io");
    std::vector<Snapshot> seen;
    std::vector<Event> events;
    {
        TrajectoryWriter w(dir.string(), sc, 9, 3);
        TrajectoryObserver obs = w.observer();
        auto snap = obs.on_snapshot;
        obs.on_snapshot = [&](const SimulationState& st, const Snapshot& s) {
            seen.push_back(s);
            snap(st, s);
        };
        auto ev = obs.on_events;
        obs.on_events = [&](const std::vector<Event>& e) {
            events.insert(events.end(), e.begin(), e.end());
            ev(e);
        };
        run_trajectory(sc, 9, 3, obs);
        w.close();
    }
    const CountsTable c = read_counts((dir / TrajectoryWriter::counts_name(3)).string());
    CHECK(c.header.kind == "counts");
    CHECK(c.header.seed == 9);
    CHECK(c.header.trajectory == 3);
    CHECK(c.header.config_hash == config_hash(sc));
    CHECK(c.species == std::vector<std::string>{"A", "A_cyl"});
    REQUIRE(c.time.size() == seen.size());
    for (std::size_t k = 0; k < seen.size(); ++k) {
        CHECK(c.time[k] == doctest::Approx(seen[k].time).epsilon(1e-12));
        CHECK(c.counts[k] == seen[k].counts);
        CHECK(c.counts[k][0] + c.counts[k][1] == 20);
        REQUIRE(c.curve_lengths[k].size() == 1);
        CHECK(c.curve_lengths[k][0] == doctest::Approx(seen[k].curve_lengths[0]).epsilon(1e-12));
    }
    const EventTable e = read_events((dir / TrajectoryWriter::events_name(3)).string());
    CHECK(e.rows.size() == events.size());
    const PositionTable p = read_positions((dir / TrajectoryWriter::positions_name(3)).string());
    CHECK(p.rows.size() == 20 * seen.size());
    for (const auto& row : p.rows)
        CHECK((row.species == "A" || row.species == "A_cyl"));
    std::filesystem::remove_all(dir);
}

TEST_CASE("empty population writes zero counts and no events")
{
    std::string text = kSmall;
    text.replace(text.find("\"count\": 20"), 11, "\"count\": 0");
    const auto dir = scratch("empty");
    const Scenario sc = parse_scenario(text);
    {
        TrajectoryWriter w(dir.string(), sc, 1, 0);
        run_trajectory(sc, 1, 0, w.observer());
        w.close();
    }
    const EventTable e = read_events((dir / TrajectoryWriter::events_name(0)).string());
    CHECK(e.rows.empty());
    CHECK(e.header.kind == "events");
    const CountsTable c = read_counts((dir / TrajectoryWriter::counts_name(0)).string());
    for (const auto& row : c.counts)
        for (long n : row)
            CHECK(n == 0);
    std::filesystem::remove_all(dir);
}

TEST_CASE("malformed output files are rejected")
{
    const auto dir = scratch("bad");
    std::filesystem::create_directories(dir);
    const auto path = (dir / "counts_0.csv").string();
    std::ofstream(path) << "time,A\n0.0,1,2\n";
    CHECK_THROWS_AS(read_counts(path), InputError);
    CHECK_THROWS_AS(read_counts((dir / "missing.csv").string()), InputError);
    std::filesystem::remove_all(dir);
}
