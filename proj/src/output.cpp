#include "curvesim/output.hpp"

#include <filesystem>
#include <iomanip>
#include <sstream>

#include "curvesim/error.hpp"

namespace curvesim {

namespace {

void write_header(std::ostream& os, const std::string& kind, const Scenario& sc, std::uint64_t seed,
                  std::uint64_t trajectory, const std::string& units)
{
    os << "# curvesim: " << kind << "\n";
    os << "# scenario: " << sc.name << "\n";
    os << "# config_hash: " << config_hash(sc) << "\n";
    os << "# seed: " << seed << "\n";
    os << "# trajectory: " << trajectory << "\n";
    os << "# units: " << units << "\n";
}

std::ofstream open_out(const std::string& path)
{
    std::ofstream f(path);
    if (!f)
        throw InputError("cannot write '" + path + "'");
    f << std::setprecision(17);
    return f;
}

std::vector<std::string> split(const std::string& line, char sep)
{
    std::vector<std::string> out;
    std::string cur;
    std::istringstream is(line);
    while (std::getline(is, cur, sep))
        out.push_back(cur);
    if (!line.empty() && line.back() == sep)
        out.emplace_back();
    return out;
}

double to_double(const std::string& s, const std::string& ctx)
{
    try {
        std::size_t pos = 0;
        const double v = std::stod(s, &pos);
        if (pos != s.size())
            throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw InputError(ctx + ": expected a number, got '" + s + "'");
    }
}

long to_long(const std::string& s, const std::string& ctx)
{
    try {
        std::size_t pos = 0;
        const long v = std::stol(s, &pos);
        if (pos != s.size())
            throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw InputError(ctx + ": expected an integer, got '" + s + "'");
    }
}

std::uint64_t to_id(const std::string& s, const std::string& ctx)
{
    if (s.empty())
        return kNoId;
    try {
        std::size_t pos = 0;
        const unsigned long long v = std::stoull(s, &pos);
        if (pos != s.size())
            throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw InputError(ctx + ": expected an id, got '" + s + "'");
    }
}

std::string id_text(std::uint64_t id)
{
    return id == kNoId ? std::string() : std::to_string(id);
}

// Reads the "# key: value" header and the column line; returns the data lines.
std::vector<std::string> read_table(const std::string& path, OutputHeader& h, std::vector<std::string>& columns,
                                    const std::string& kind)
{
    std::ifstream in(path);
    if (!in)
        throw InputError("cannot open '" + path + "'");
    std::string line;
    std::vector<std::string> data;
    bool have_columns = false;
    while (std::getline(in, line)) {
        if (line.empty())
            continue;
        if (line[0] == '#') {
            const auto colon = line.find(':');
            if (colon == std::string::npos)
                throw InputError(path + ": malformed header line '" + line + "'");
            const std::string key = line.substr(2, colon - 2);
            const std::string value = colon + 2 <= line.size() ? line.substr(colon + 2) : "";
            if (key == "curvesim")
                h.kind = value;
            else if (key == "scenario")
                h.scenario = value;
            else if (key == "config_hash")
                h.config_hash = value;
            else if (key == "seed")
                h.seed = to_id(value, path + " seed");
            else if (key == "trajectory")
                h.trajectory = to_id(value, path + " trajectory");
            else
                h.extra[key] = value;
            continue;
        }
        if (!have_columns) {
            columns = split(line, ',');
            have_columns = true;
            continue;
        }
        data.push_back(line);
    }
    if (h.kind != kind)
        throw InputError(path + ": not a " + kind + " file");
    if (!have_columns)
        throw InputError(path + ": missing column header");
    return data;
}

} // namespace

int CountsTable::species_column(const std::string& name) const
{
    for (std::size_t i = 0; i < species.size(); ++i)
        if (species[i] == name)
            return int(i);
    return -1;
}

std::string TrajectoryWriter::counts_name(std::uint64_t t)
{
    return "counts_" + std::to_string(t) + ".csv";
}

std::string TrajectoryWriter::events_name(std::uint64_t t)
{
    return "events_" + std::to_string(t) + ".csv";
}

std::string TrajectoryWriter::positions_name(std::uint64_t t)
{
    return "positions_" + std::to_string(t) + ".csv";
}

TrajectoryWriter::TrajectoryWriter(const std::string& out_dir, const Scenario& sc, std::uint64_t seed,
                                   std::uint64_t trajectory)
    : sc_(sc), dir_(out_dir), positions_on_(sc.write_positions)
{
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec)
        throw InputError("cannot create output directory '" + out_dir + "': " + ec.message());
    const std::filesystem::path dir(out_dir);

    counts_ = open_out((dir / counts_name(trajectory)).string());
    write_header(counts_, "counts", sc, seed, trajectory, "time s, counts molecules, len_* m");
    counts_ << "time";
    for (const auto& s : sc.model.species())
        counts_ << "," << s.name;
    for (const auto& c : sc.curve_names)
        counts_ << ",len_" << c;
    counts_ << "\n";

    events_ = open_out((dir / events_name(trajectory)).string());
    write_header(events_, "events", sc, seed, trajectory, "time s, x y z m, s m");
    events_ << "time,kind,rule,species,reactant_a,reactant_b,products,x,y,z,curve,s\n";

    if (positions_on_) {
        positions_ = open_out((dir / positions_name(trajectory)).string());
        write_header(positions_, "positions", sc, seed, trajectory, "time s, x y z m, s m");
        positions_ << "time,id,species,bound,x,y,z,curve,s\n";
    }
}

void TrajectoryWriter::snapshot(const SimulationState& st, const Snapshot& s)
{
    counts_ << s.time;
    for (long c : s.counts)
        counts_ << "," << c;
    for (double l : s.curve_lengths)
        counts_ << "," << l;
    counts_ << "\n";
    if (!positions_on_)
        return;
    for (const auto& m : st.molecules) {
        if (!m.alive)
            continue;
        const Vec3 x = st.position(m);
        positions_ << s.time << "," << m.id << "," << sc_.model.species(m.species).name << "," << (m.bound ? 1 : 0)
                   << "," << x[0] << "," << x[1] << "," << x[2] << "," << (m.bound ? m.curve : -1) << ","
                   << (m.bound ? m.s : 0.0) << "\n";
    }
}

void TrajectoryWriter::events(const std::vector<Event>& ev)
{
    for (const Event& e : ev) {
        events_ << e.time << "," << to_string(e.kind) << "," << e.rule << ","
                << (e.species >= 0 ? sc_.model.species(e.species).name : "") << "," << id_text(e.reactant_a) << ","
                << id_text(e.reactant_b) << ",";
        for (std::size_t k = 0; k < e.products.size(); ++k)
            events_ << (k ? ";" : "") << e.products[k];
        events_ << "," << e.x[0] << "," << e.x[1] << "," << e.x[2] << "," << e.curve << "," << e.s << "\n";
    }
}

TrajectoryObserver TrajectoryWriter::observer()
{
    TrajectoryObserver o;
    o.on_snapshot = [this](const SimulationState& st, const Snapshot& s) { snapshot(st, s); };
    o.on_events = [this](const std::vector<Event>& ev) { events(ev); };
    return o;
}

void TrajectoryWriter::close()
{
    for (std::ofstream* f : {&counts_, &events_, &positions_}) {
        if (!f->is_open())
            continue;
        f->flush();
        if (!*f)
            throw InputError("write failure in output directory '" + dir_ + "'");
        f->close();
    }
}

CountsTable read_counts(const std::string& path)
{
    CountsTable t;
    std::vector<std::string> cols;
    const auto lines = read_table(path, t.header, cols, "counts");
    if (cols.empty() || cols[0] != "time")
        throw InputError(path + ": first column must be 'time'");
    for (std::size_t i = 1; i < cols.size(); ++i) {
        if (cols[i].rfind("len_", 0) == 0)
            t.curves.push_back(cols[i].substr(4));
        else if (t.curves.empty())
            t.species.push_back(cols[i]);
        else
            throw InputError(path + ": species column after curve columns");
    }
    for (std::size_t r = 0; r < lines.size(); ++r) {
        const auto f = split(lines[r], ',');
        const std::string ctx = path + ":" + std::to_string(r + 1);
        if (f.size() != cols.size())
            throw InputError(ctx + ": expected " + std::to_string(cols.size()) + " fields");
        t.time.push_back(to_double(f[0], ctx));
        std::vector<long> c;
        for (std::size_t i = 0; i < t.species.size(); ++i)
            c.push_back(to_long(f[1 + i], ctx));
        std::vector<double> l;
        for (std::size_t i = 0; i < t.curves.size(); ++i)
            l.push_back(to_double(f[1 + t.species.size() + i], ctx));
        t.counts.push_back(std::move(c));
        t.curve_lengths.push_back(std::move(l));
    }
    return t;
}

EventTable read_events(const std::string& path)
{
    EventTable t;
    std::vector<std::string> cols;
    const auto lines = read_table(path, t.header, cols, "events");
    if (cols.size() != 12)
        throw InputError(path + ": expected 12 event columns");
    for (std::size_t r = 0; r < lines.size(); ++r) {
        const auto f = split(lines[r], ',');
        const std::string ctx = path + ":" + std::to_string(r + 1);
        if (f.size() != 12)
            throw InputError(ctx + ": expected 12 fields");
        EventRow e;
        e.time = to_double(f[0], ctx);
        e.kind = f[1];
        e.rule = int(to_long(f[2], ctx));
        e.species = f[3];
        e.reactant_a = to_id(f[4], ctx);
        e.reactant_b = to_id(f[5], ctx);
        if (!f[6].empty())
            for (const auto& p : split(f[6], ';'))
                e.products.push_back(to_id(p, ctx));
        e.x = {to_double(f[7], ctx), to_double(f[8], ctx), to_double(f[9], ctx)};
        e.curve = int(to_long(f[10], ctx));
        e.s = to_double(f[11], ctx);
        t.rows.push_back(std::move(e));
    }
    return t;
}

PositionTable read_positions(const std::string& path)
{
    PositionTable t;
    std::vector<std::string> cols;
    const auto lines = read_table(path, t.header, cols, "positions");
    if (cols.size() != 9)
        throw InputError(path + ": expected 9 position columns");
    for (std::size_t r = 0; r < lines.size(); ++r) {
        const auto f = split(lines[r], ',');
        const std::string ctx = path + ":" + std::to_string(r + 1);
        if (f.size() != 9)
            throw InputError(ctx + ": expected 9 fields");
        PositionRow p;
        p.time = to_double(f[0], ctx);
        p.id = to_id(f[1], ctx);
        p.species = f[2];
        p.bound = to_long(f[3], ctx) != 0;
        p.x = {to_double(f[4], ctx), to_double(f[5], ctx), to_double(f[6], ctx)};
        p.curve = int(to_long(f[7], ctx));
        p.s = to_double(f[8], ctx);
        t.rows.push_back(std::move(p));
    }
    return t;
}

} // namespace curvesim
