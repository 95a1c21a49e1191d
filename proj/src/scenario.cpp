#include "curvesim/scenario.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "curvesim/error.hpp"

namespace curvesim {

using nlohmann::json;

namespace {

std::string join_errors(const std::vector<std::string>& errors)
{
    std::string out = "invalid scenario:";
    for (const auto& e : errors)
        out += "\n  " + e;
    return out;
}

enum class Bound { Any, NonNeg, Pos };

// Validates one JSON object against the schema while writing its normalized
// form into `out`. Errors accumulate instead of throwing.
class Reader {
public:
    explicit Reader(std::vector<std::string>& errors) : errors_(errors) {}

    void error(const std::string& path, const std::string& msg) { errors_.push_back(path + ": " + msg); }

    bool object(const json& j, const std::string& path)
    {
        if (!j.is_object()) {
            error(path, "expected an object");
            return false;
        }
        return true;
    }

    void only(const json& j, const std::string& path, std::initializer_list<const char*> allowed)
    {
        if (!j.is_object())
            return;
        for (auto it = j.begin(); it != j.end(); ++it) {
            bool ok = false;
            for (const char* a : allowed)
                ok = ok || it.key() == a;
            if (!ok)
                error(path + "/" + it.key(), "unknown key");
        }
    }

    double number(const json& j, json& out, const std::string& path, const char* key, std::optional<double> def,
                  Bound bound = Bound::Any)
    {
        const std::string p = path + "/" + key;
        if (!j.contains(key)) {
            if (!def) {
                error(p, "required");
                return 0.0;
            }
            out[key] = *def;
            return *def;
        }
        const json& v = j.at(key);
        if (!v.is_number()) {
            error(p, "expected a number");
            return def.value_or(0.0);
        }
        const double x = v.get<double>();
        if (!std::isfinite(x))
            error(p, "must be finite");
        else if (bound == Bound::NonNeg && x < 0.0)
            error(p, "must be non-negative");
        else if (bound == Bound::Pos && !(x > 0.0))
            error(p, "must be positive");
        out[key] = x;
        return x;
    }

    // Number or the string "inf".
    double rate(const json& j, json& out, const std::string& path, const char* key)
    {
        if (j.contains(key) && j.at(key).is_string()) {
            if (j.at(key).get<std::string>() != "inf")
                error(path + "/" + key, "expected a number or \"inf\"");
            out[key] = "inf";
            return std::numeric_limits<double>::infinity();
        }
        return number(j, out, path, key, std::nullopt, Bound::NonNeg);
    }

    long integer(const json& j, json& out, const std::string& path, const char* key, std::optional<long> def,
                 long min_value)
    {
        const std::string p = path + "/" + key;
        if (!j.contains(key)) {
            if (!def) {
                error(p, "required");
                return min_value;
            }
            out[key] = *def;
            return *def;
        }
        const json& v = j.at(key);
        if (!v.is_number_integer()) {
            error(p, "expected an integer");
            return def.value_or(min_value);
        }
        const long x = v.get<long>();
        if (x < min_value)
            error(p, "must be at least " + std::to_string(min_value));
        out[key] = x;
        return x;
    }

    std::string string(const json& j, json& out, const std::string& path, const char* key,
                       std::optional<std::string> def)
    {
        const std::string p = path + "/" + key;
        if (!j.contains(key)) {
            if (!def) {
                error(p, "required");
                return {};
            }
            out[key] = *def;
            return *def;
        }
        if (!j.at(key).is_string()) {
            error(p, "expected a string");
            return def.value_or("");
        }
        out[key] = j.at(key).get<std::string>();
        return out[key].get<std::string>();
    }

    bool boolean(const json& j, json& out, const std::string& path, const char* key, bool def)
    {
        if (!j.contains(key)) {
            out[key] = def;
            return def;
        }
        if (!j.at(key).is_boolean()) {
            error(path + "/" + key, "expected true or false");
            return def;
        }
        out[key] = j.at(key).get<bool>();
        return out[key].get<bool>();
    }

    Vec3 vec(const json& v, const std::string& p)
    {
        if (!v.is_array() || v.size() != 3 || !v[0].is_number() || !v[1].is_number() || !v[2].is_number()) {
            error(p, "expected [x, y, z]");
            return Vec3::Zero();
        }
        return {v[0].get<double>(), v[1].get<double>(), v[2].get<double>()};
    }

    Vec3 vec(const json& j, json& out, const std::string& path, const char* key, std::optional<Vec3> def)
    {
        const std::string p = path + "/" + key;
        if (!j.contains(key)) {
            if (!def) {
                error(p, "required");
                return Vec3::Zero();
            }
            out[key] = json::array({(*def)[0], (*def)[1], (*def)[2]});
            return *def;
        }
        const Vec3 v = vec(j.at(key), p);
        out[key] = json::array({v[0], v[1], v[2]});
        return v;
    }

    std::vector<std::string> names(const json& j, json& out, const std::string& path, const char* key, bool required)
    {
        const std::string p = path + "/" + key;
        std::vector<std::string> r;
        if (!j.contains(key)) {
            if (required)
                error(p, "required");
            out[key] = json::array();
            return r;
        }
        if (!j.at(key).is_array()) {
            error(p, "expected an array of names");
            out[key] = json::array();
            return r;
        }
        for (std::size_t i = 0; i < j.at(key).size(); ++i) {
            const json& v = j.at(key)[i];
            if (!v.is_string())
                error(p + "/" + std::to_string(i), "expected a name");
            else
                r.push_back(v.get<std::string>());
        }
        out[key] = r;
        return r;
    }

private:
    std::vector<std::string>& errors_;
};

struct CurveDef {
    std::string name;
    json spec;  // normalized
    int first = 0;
    int count = 1;
};

int axis_index(const std::string& a)
{
    return a == "x" ? 0 : a == "y" ? 1 : a == "z" ? 2 : -1;
}

} // namespace

ScenarioError::ScenarioError(std::vector<std::string> errors)
    : std::invalid_argument(join_errors(errors)), errors_(std::move(errors))
{
}

Scenario parse_scenario(const std::string& text)
{
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ScenarioError({std::string("/: ") + e.what()});
    }

    std::vector<std::string> errors;
    Reader rd(errors);
    Scenario sc;
    json out = json::object();
    if (!rd.object(doc, ""))
        throw ScenarioError(errors);
    rd.only(doc, "", {"name", "seed", "t_final", "dt_split", "output", "boundary", "curves", "road_blocks", "sites",
                      "species", "reactions", "initial", "engine", "stop_on_event"});

    sc.name = rd.string(doc, out, "", "name", std::string("scenario"));
    sc.seed = std::uint64_t(rd.integer(doc, out, "", "seed", 1, 0));
    sc.t_final = rd.number(doc, out, "", "t_final", std::nullopt, Bound::Pos);
    sc.dt_split = rd.number(doc, out, "", "dt_split", 0.01, Bound::Pos);

    {
        json o = json::object();
        const json in = doc.value("output", json::object());
        if (rd.object(in, "/output")) {
            rd.only(in, "/output", {"interval", "positions"});
            sc.output_interval = rd.number(in, o, "/output", "interval", 0.0, Bound::NonNeg);
            sc.write_positions = rd.boolean(in, o, "/output", "positions", false);
        }
        out["output"] = o;
    }

    // Boundary.
    {
        json o = json::object();
        const json in = doc.value("boundary", json{{"type", "none"}});
        const std::string p = "/boundary";
        if (rd.object(in, p)) {
            const std::string type = rd.string(in, o, p, "type", std::nullopt);
            if (type == "none") {
                rd.only(in, p, {"type"});
            } else if (type == "sphere") {
                rd.only(in, p, {"type", "radius", "subdivisions", "centre"});
                const double R = rd.number(in, o, p, "radius", std::nullopt, Bound::Pos);
                const long sub = rd.integer(in, o, p, "subdivisions", 4, 0);
                const Vec3 c = rd.vec(in, o, p, "centre", Vec3::Zero());
                if (errors.empty())
                    sc.mesh = std::make_shared<const SurfaceMesh>(make_icosphere(R, int(sub), c));
            } else if (type == "cylinder") {
                rd.only(in, p, {"type", "radius", "height", "axis", "n_around", "n_along", "n_rings", "centre"});
                const double R = rd.number(in, o, p, "radius", std::nullopt, Bound::Pos);
                const double H = rd.number(in, o, p, "height", std::nullopt, Bound::Pos);
                const std::string axis = rd.string(in, o, p, "axis", std::string("z"));
                const long na = rd.integer(in, o, p, "n_around", 48, 3);
                const long nl = rd.integer(in, o, p, "n_along", 16, 1);
                const long nr = rd.integer(in, o, p, "n_rings", 8, 1);
                const Vec3 c = rd.vec(in, o, p, "centre", Vec3::Zero());
                if (axis_index(axis) < 0)
                    rd.error(p + "/axis", "expected \"x\", \"y\" or \"z\"");
                else if (errors.empty())
                    sc.mesh = std::make_shared<const SurfaceMesh>(
                        make_cylinder(R, H, axis_index(axis), int(na), int(nl), int(nr), c));
            } else if (type == "mesh") {
                rd.only(in, p, {"type", "file"});
                const std::string file = rd.string(in, o, p, "file", std::nullopt);
                if (errors.empty()) {
                    try {
                        sc.mesh = std::make_shared<const SurfaceMesh>(read_mesh_file(file));
                    } catch (const std::exception& e) {
                        rd.error(p + "/file", e.what());
                    }
                }
            } else if (!type.empty()) {
                rd.error(p + "/type", "unknown boundary type '" + type + "'");
            }
        }
        out["boundary"] = o;
    }

    // Curves: names first so that later sections can refer to them.
    std::vector<CurveDef> curve_defs;
    {
        json arr = json::array();
        const json in = doc.value("curves", json::array());
        if (!in.is_array())
            rd.error("/curves", "expected an array");
        int next = 0;
        std::set<std::string> seen;
        for (std::size_t i = 0; in.is_array() && i < in.size(); ++i) {
            const std::string p = "/curves/" + std::to_string(i);
            const json& c = in[i];
            json o = json::object();
            if (!rd.object(c, p))
                continue;
            CurveDef def;
            def.name = rd.string(c, o, p, "name", std::nullopt);
            if (!seen.insert(def.name).second)
                rd.error(p + "/name", "duplicate curve name '" + def.name + "'");
            const std::string type = rd.string(c, o, p, "type", std::nullopt);
            rd.number(c, o, p, "reaction_radius", std::nullopt, Bound::Pos);
            rd.boolean(c, o, p, "rotate", false);
            if (c.contains("growth")) {
                json g = json::object();
                const json& gin = c.at("growth");
                if (rd.object(gin, p + "/growth")) {
                    rd.only(gin, p + "/growth", {"D_l", "l_min", "l_max"});
                    rd.number(gin, g, p + "/growth", "D_l", std::nullopt, Bound::NonNeg);
                    const double lo = rd.number(gin, g, p + "/growth", "l_min", std::nullopt, Bound::Pos);
                    const double hi = rd.number(gin, g, p + "/growth", "l_max", std::nullopt, Bound::Pos);
                    if (hi < lo)
                        rd.error(p + "/growth/l_max", "must not be below l_min");
                }
                o["growth"] = g;
            }
            const std::initializer_list<const char*> common = {"name", "type", "reaction_radius", "rotate",
                                                               "growth"};
            auto allow = [&](std::initializer_list<const char*> extra) {
                std::vector<const char*> keys(common);
                keys.insert(keys.end(), extra);
                for (auto it = c.begin(); it != c.end(); ++it)
                    if (std::find_if(keys.begin(), keys.end(), [&](const char* k) { return it.key() == k; }) ==
                        keys.end())
                        rd.error(p + "/" + it.key(), "unknown key");
            };
            if (type == "line") {
                allow({"from", "to", "segments"});
                const Vec3 a = rd.vec(c, o, p, "from", std::nullopt);
                const Vec3 b = rd.vec(c, o, p, "to", std::nullopt);
                rd.integer(c, o, p, "segments", 1, 1);
                if ((a - b).norm() == 0.0)
                    rd.error(p, "line endpoints coincide");
            } else if (type == "spiral") {
                allow({"offset", "r_c", "pitch", "turns", "segments", "phase"});
                rd.vec(c, o, p, "offset", Vec3::Zero());
                rd.number(c, o, p, "r_c", std::nullopt, Bound::Pos);
                rd.number(c, o, p, "pitch", std::nullopt);
                rd.number(c, o, p, "turns", std::nullopt, Bound::Pos);
                rd.integer(c, o, p, "segments", std::nullopt, 1);
                rd.number(c, o, p, "phase", 0.0);
            } else if (type == "circle") {
                allow({"centre", "radius", "normal", "segments"});
                rd.vec(c, o, p, "centre", Vec3::Zero());
                rd.number(c, o, p, "radius", std::nullopt, Bound::Pos);
                const Vec3 n = rd.vec(c, o, p, "normal", Vec3(Vec3::UnitZ()));
                rd.integer(c, o, p, "segments", std::nullopt, 3);
                if (n.norm() == 0.0)
                    rd.error(p + "/normal", "must be non-zero");
            } else if (type == "points") {
                allow({"points"});
                json pts = json::array();
                if (!c.contains("points") || !c.at("points").is_array() || c.at("points").size() < 2)
                    rd.error(p + "/points", "expected at least two points");
                else
                    for (std::size_t k = 0; k < c.at("points").size(); ++k) {
                        const Vec3 v = rd.vec(c.at("points")[k], p + "/points/" + std::to_string(k));
                        pts.push_back({v[0], v[1], v[2]});
                    }
                o["points"] = pts;
            } else if (type == "random_diameters") {
                allow({"count", "radius"});
                def.count = int(rd.integer(c, o, p, "count", std::nullopt, 1));
                rd.number(c, o, p, "radius", std::nullopt, Bound::Pos);
            } else if (!type.empty()) {
                rd.error(p + "/type", "unknown curve type '" + type + "'");
            }
            def.first = next;
            next += def.count;
            def.spec = o;
            curve_defs.push_back(def);
            arr.push_back(o);
        }
        out["curves"] = arr;
        for (const auto& d : curve_defs) {
            if (d.spec.value("type", "") == "random_diameters")
                for (int k = 0; k < d.count; ++k)
                    sc.curve_names.push_back(d.name + "_" + std::to_string(k));
            else
                sc.curve_names.push_back(d.name);
        }
    }
    auto curve_ids = [&](const std::string& name, const std::string& p) {
        std::vector<int> ids;
        for (const auto& d : curve_defs)
            if (d.name == name)
                for (int k = 0; k < d.count; ++k)
                    ids.push_back(d.first + k);
        for (std::size_t k = 0; k < sc.curve_names.size() && ids.empty(); ++k)
            if (sc.curve_names[k] == name)
                ids.push_back(int(k));
        if (ids.empty())
            rd.error(p, "unknown curve '" + name + "'");
        return ids;
    };
    auto single_curve = [&](const std::string& name, const std::string& p) {
        const auto ids = curve_ids(name, p);
        if (ids.size() > 1)
            rd.error(p, "'" + name + "' names a curve group; a single curve is required");
        return ids.empty() ? 0 : ids.front();
    };

    // Road blocks and operator sites.
    std::vector<OperatorSite> sites;
    std::vector<std::string> site_names;
    {
        json arr = json::array();
        const json in = doc.value("road_blocks", json::array());
        for (std::size_t i = 0; in.is_array() && i < in.size(); ++i) {
            const std::string p = "/road_blocks/" + std::to_string(i);
            json o = json::object();
            if (!rd.object(in[i], p))
                continue;
            rd.only(in[i], p, {"curve", "s", "radius"});
            RoadBlock b;
            b.curve = single_curve(rd.string(in[i], o, p, "curve", std::nullopt), p + "/curve");
            b.s = rd.number(in[i], o, p, "s", std::nullopt, Bound::NonNeg);
            b.radius = rd.number(in[i], o, p, "radius", std::nullopt, Bound::NonNeg);
            sc.road_blocks.push_back(b);
            arr.push_back(o);
        }
        out["road_blocks"] = arr;

        json sarr = json::array();
        const json sin = doc.value("sites", json::array());
        for (std::size_t i = 0; sin.is_array() && i < sin.size(); ++i) {
            const std::string p = "/sites/" + std::to_string(i);
            json o = json::object();
            if (!rd.object(sin[i], p))
                continue;
            rd.only(sin[i], p, {"name", "curve", "s", "radius"});
            OperatorSite s;
            s.name = rd.string(sin[i], o, p, "name", std::nullopt);
            s.curve = single_curve(rd.string(sin[i], o, p, "curve", std::nullopt), p + "/curve");
            s.s = rd.number(sin[i], o, p, "s", std::nullopt, Bound::NonNeg);
            s.radius = rd.number(sin[i], o, p, "radius", std::nullopt, Bound::NonNeg);
            sites.push_back(s);
            site_names.push_back(s.name);
            sarr.push_back(o);
        }
        out["sites"] = sarr;
    }

    // Species.
    std::vector<Species> species;
    {
        json arr = json::array();
        const json in = doc.value("species", json());
        if (!in.is_array() || in.empty())
            rd.error("/species", "expected a non-empty array");
        std::set<std::string> seen;
        for (std::size_t i = 0; in.is_array() && i < in.size(); ++i) {
            const std::string p = "/species/" + std::to_string(i);
            json o = json::object();
            if (!rd.object(in[i], p))
                continue;
            rd.only(in[i], p, {"name", "D", "D_bound", "radius", "transport"});
            Species s;
            s.name = rd.string(in[i], o, p, "name", std::nullopt);
            if (!seen.insert(s.name).second)
                rd.error(p + "/name", "duplicate species '" + s.name + "'");
            s.D_free = rd.number(in[i], o, p, "D", std::nullopt, Bound::NonNeg);
            s.D_bound = rd.number(in[i], o, p, "D_bound", 0.0, Bound::NonNeg);
            s.radius = rd.number(in[i], o, p, "radius", 0.0, Bound::NonNeg);
            if (in[i].contains("transport")) {
                const json& t = in[i].at("transport");
                const std::string tp = p + "/transport";
                json to = json::object();
                if (rd.object(t, tp)) {
                    rd.only(t, tp, {"displacement", "coefficient", "step_time", "target"});
                    Transport tr;
                    tr.displacement = rd.number(t, to, tp, "displacement", 0.0, Bound::NonNeg);
                    tr.coefficient = rd.number(t, to, tp, "coefficient", 0.0, Bound::NonNeg);
                    tr.step_time = rd.number(t, to, tp, "step_time", 0.0, Bound::NonNeg);
                    tr.target = rd.vec(t, to, tp, "target", Vec3::Zero());
                    s.transport = tr;
                }
                o["transport"] = to;
            }
            species.push_back(s);
            arr.push_back(o);
        }
        out["species"] = arr;
    }
    auto species_id = [&](const std::string& name, const std::string& p) {
        for (std::size_t k = 0; k < species.size(); ++k)
            if (species[k].name == name)
                return int(k);
        rd.error(p, "unknown species '" + name + "'");
        return -1;
    };

    // Reactions.
    std::vector<ReactionRule> rules;
    {
        json arr = json::array();
        const json in = doc.value("reactions", json::array());
        for (std::size_t i = 0; in.is_array() && i < in.size(); ++i) {
            const std::string p = "/reactions/" + std::to_string(i);
            json o = json::object();
            if (!rd.object(in[i], p))
                continue;
            rd.only(in[i], p, {"kind", "reactants", "products", "rate", "sigma", "curves", "site"});
            ReactionRule r;
            const std::string kind = rd.string(in[i], o, p, "kind", std::nullopt);
            static const std::pair<const char*, RuleKind> kinds[] = {
                {"bimolecular3d", RuleKind::Bimolecular3D}, {"bind", RuleKind::BindToCurve},
                {"unbind", RuleKind::UnbindFromCurve},      {"bimolecular1d", RuleKind::Bimolecular1D},
                {"unimolecular", RuleKind::Unimolecular},   {"absorb_at_site", RuleKind::AbsorbAtSite}};
            bool known = false;
            for (const auto& [n, k] : kinds)
                if (kind == n) {
                    r.kind = k;
                    known = true;
                }
            if (!known && !kind.empty())
                rd.error(p + "/kind", "unknown reaction kind '" + kind + "'");
            bool ok = true;
            for (const auto& n : rd.names(in[i], o, p, "reactants", true)) {
                const int id = species_id(n, p + "/reactants");
                ok = ok && id >= 0;
                r.reactants.push_back(id);
            }
            for (const auto& n : rd.names(in[i], o, p, "products", false)) {
                const int id = species_id(n, p + "/products");
                ok = ok && id >= 0;
                r.products.push_back(id);
            }
            r.rate = rd.rate(in[i], o, p, "rate");
            r.sigma = rd.number(in[i], o, p, "sigma", 0.0, Bound::NonNeg);
            if (r.kind == RuleKind::BindToCurve) {
                for (const auto& n : rd.names(in[i], o, p, "curves", false))
                    for (int id : curve_ids(n, p + "/curves"))
                        r.curves.push_back(id);
            } else if (in[i].contains("curves")) {
                rd.error(p + "/curves", "only binding reactions take a curve filter");
            }
            if (r.kind == RuleKind::AbsorbAtSite) {
                const std::string sname = rd.string(in[i], o, p, "site", std::nullopt);
                const auto it = std::find(site_names.begin(), site_names.end(), sname);
                if (it == site_names.end())
                    rd.error(p + "/site", "unknown site '" + sname + "'");
                else
                    r.site = int(it - site_names.begin());
            } else if (in[i].contains("site")) {
                rd.error(p + "/site", "only absorb_at_site reactions reference a site");
            }
            if (!std::isfinite(r.rate) && r.kind != RuleKind::AbsorbAtSite && r.kind != RuleKind::Bimolecular3D &&
                r.kind != RuleKind::Bimolecular1D && r.kind != RuleKind::BindToCurve)
                rd.error(p + "/rate", "first-order rates must be finite");
            if (ok)
                rules.push_back(r);
            arr.push_back(o);
        }
        out["reactions"] = arr;
    }

    if (errors.empty()) {
        try {
            sc.model = Model(species, rules, sites);
        } catch (const InputError& e) {
            rd.error("/reactions", e.what());
        }
    }

    // Initial condition.
    {
        json arr = json::array();
        const json in = doc.value("initial", json::array());
        for (std::size_t i = 0; in.is_array() && i < in.size(); ++i) {
            const std::string p = "/initial/" + std::to_string(i);
            json o = json::object();
            if (!rd.object(in[i], p))
                continue;
            rd.only(in[i], p, {"species", "count", "positions", "curve", "s"});
            InitialGroup g;
            g.species = species_id(rd.string(in[i], o, p, "species", std::nullopt), p + "/species");
            if (in[i].contains("curve"))
                g.curve = single_curve(rd.string(in[i], o, p, "curve", std::nullopt), p + "/curve");
            if (in[i].contains("positions")) {
                json pts = json::array();
                const json& v = in[i].at("positions");
                for (std::size_t k = 0; v.is_array() && k < v.size(); ++k) {
                    const Vec3 x = rd.vec(v[k], p + "/positions/" + std::to_string(k));
                    g.positions.push_back(x);
                    pts.push_back({x[0], x[1], x[2]});
                }
                if (!v.is_array())
                    rd.error(p + "/positions", "expected an array of points");
                if (g.curve >= 0)
                    rd.error(p + "/positions", "bound molecules are placed with 's'");
                o["positions"] = pts;
                g.count = long(g.positions.size());
            } else if (in[i].contains("s")) {
                json ss = json::array();
                const json& v = in[i].at("s");
                for (std::size_t k = 0; v.is_array() && k < v.size(); ++k) {
                    if (!v[k].is_number() || v[k].get<double>() < 0.0)
                        rd.error(p + "/s/" + std::to_string(k), "expected a non-negative arclength");
                    else {
                        g.arclengths.push_back(v[k].get<double>());
                        ss.push_back(v[k].get<double>());
                    }
                }
                if (g.curve < 0)
                    rd.error(p + "/s", "requires 'curve'");
                o["s"] = ss;
                g.count = long(g.arclengths.size());
            } else {
                g.count = rd.integer(in[i], o, p, "count", std::nullopt, 0);
                if (g.curve < 0 && g.count > 0 && !sc.mesh)
                    rd.error(p + "/count", "uniform initial positions need a bounded domain");
            }
            sc.initial.push_back(g);
            arr.push_back(o);
        }
        out["initial"] = arr;
    }

    if (doc.contains("engine")) {
        const json& e = doc.at("engine");
        const std::string p = "/engine";
        json o = json::object();
        if (rd.object(e, p)) {
            rd.only(e, p, {"K", "dt_min", "pair_distance_factor", "reach", "cache_capacity", "r0_bucket", "grid",
                          "cross_segment_pairs", "max_epochs", "dt_ladder"});
            EngineConfig cfg;
            cfg.dt_split = sc.dt_split;
            cfg.K = rd.number(e, o, p, "K", cfg.K, Bound::Pos);
            cfg.dt_min = rd.number(e, o, p, "dt_min", cfg.dt_min, Bound::Pos);
            cfg.pair_distance_factor = rd.number(e, o, p, "pair_distance_factor", cfg.pair_distance_factor, Bound::Pos);
            cfg.reach = rd.number(e, o, p, "reach", cfg.reach, Bound::Pos);
            cfg.cache_capacity = std::size_t(rd.integer(e, o, p, "cache_capacity", long(cfg.cache_capacity), 0));
            cfg.r0_bucket = rd.number(e, o, p, "r0_bucket", cfg.r0_bucket, Bound::NonNeg);
            cfg.cross_segment_pairs = rd.boolean(e, o, p, "cross_segment_pairs", cfg.cross_segment_pairs);
            cfg.max_epochs = int(rd.integer(e, o, p, "max_epochs", cfg.max_epochs, 1));
            cfg.dt_ladder = int(rd.integer(e, o, p, "dt_ladder", cfg.dt_ladder, 0));
            json g = json::object();
            const json gin = e.value("grid", json::object());
            const std::string gp = p + "/grid";
            if (rd.object(gin, gp)) {
                rd.only(gin, gp, {"radial_cells", "time_steps", "reach", "first_cell", "growth", "curvature_ratio"});
                GridParams& gr = cfg.grid;
                gr.radial_cells = int(rd.integer(gin, g, gp, "radial_cells", gr.radial_cells, 4));
                gr.time_steps = int(rd.integer(gin, g, gp, "time_steps", gr.time_steps, 1));
                gr.reach = rd.number(gin, g, gp, "reach", gr.reach, Bound::Pos);
                gr.first_cell = rd.number(gin, g, gp, "first_cell", gr.first_cell, Bound::Pos);
                gr.growth = rd.number(gin, g, gp, "growth", gr.growth, Bound::Pos);
                gr.curvature_ratio = rd.number(gin, g, gp, "curvature_ratio", gr.curvature_ratio, Bound::Pos);
            }
            o["grid"] = g;
            try {
                cfg.validate();
            } catch (const InputError& ex) {
                rd.error(p, ex.what());
            }
            sc.engine = cfg;
        }
        out["engine"] = o;
    }

    if (doc.contains("stop_on_event")) {
        sc.stop_on_event = rd.string(doc, out, "", "stop_on_event", std::nullopt);
        bool known = false;
        for (EventKind k : {EventKind::Bind, EventKind::Unbind, EventKind::Bimolecular3D, EventKind::Bimolecular1D,
                            EventKind::Unimolecular, EventKind::SiteAbsorb})
            known = known || sc.stop_on_event == to_string(k);
        if (!known)
            rd.error("/stop_on_event", "unknown event kind '" + sc.stop_on_event + "'");
    }

    if (!errors.empty())
        throw ScenarioError(errors);
    sc.canonical = out;
    return sc;
}

Scenario load_scenario(const std::string& path)
{
    std::ifstream in(path);
    if (!in)
        throw InputError("cannot open scenario file '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_scenario(ss.str());
}

std::string serialize_scenario(const Scenario& s)
{
    return s.canonical.dump(2) + "\n";
}

std::string config_hash(const Scenario& s)
{
    std::uint64_t h = 14695981039346656037ull;
    for (unsigned char c : s.canonical.dump()) {
        h ^= c;
        h *= 1099511628211ull;
    }
    std::ostringstream os;
    os << std::hex;
    os.width(16);
    os.fill('0');
    os << h;
    return os.str();
}

std::vector<PolylineCurve> Scenario::build_curves(Rng& rng) const
{
    std::vector<PolylineCurve> out;
    auto v3 = [](const json& a) { return Vec3(a[0].get<double>(), a[1].get<double>(), a[2].get<double>()); };
    for (const json& c : canonical.at("curves")) {
        const std::string type = c.at("type");
        const std::string name = c.at("name");
        const double rr = c.at("reaction_radius");
        const int id = int(out.size());
        if (type == "line") {
            out.push_back(make_line(v3(c.at("from")), v3(c.at("to")), c.at("segments").get<int>(), rr, id, name));
        } else if (type == "spiral") {
            out.push_back(make_spiral(v3(c.at("offset")), c.at("r_c"), c.at("pitch"), c.at("turns"),
                                      c.at("segments").get<int>(), c.at("phase"), rr, id, name));
        } else if (type == "circle") {
            out.push_back(make_circle(v3(c.at("centre")), c.at("radius"), v3(c.at("normal")),
                                      c.at("segments").get<int>(), rr, id, name));
        } else if (type == "points") {
            std::vector<Vec3> pts;
            for (const json& p : c.at("points"))
                pts.push_back(v3(p));
            out.emplace_back(pts, rr, id, name);
        } else if (type == "random_diameters") {
            const double R = c.at("radius");
            for (int k = 0; k < c.at("count").get<int>(); ++k) {
                const Vec3 p = R * rng.unit_vector();
                out.push_back(make_line(p, -p, 1, rr, int(out.size()), name + "_" + std::to_string(k)));
            }
        }
    }
    return out;
}

std::vector<CurveTransform> Scenario::transforms() const
{
    std::vector<CurveTransform> out;
    for (const json& c : canonical.at("curves")) {
        CurveTransform t;
        t.rotate = c.at("rotate").get<bool>();
        if (c.contains("growth")) {
            t.grow = true;
            t.D_l = c.at("growth").at("D_l");
            t.l_min = c.at("growth").at("l_min");
            t.l_max = c.at("growth").at("l_max");
        }
        const int n = c.at("type") == "random_diameters" ? c.at("count").get<int>() : 1;
        for (int k = 0; k < n; ++k)
            out.push_back(t);
    }
    return out;
}

std::vector<Vec3> sample_uniform_in_mesh(const SurfaceMesh& mesh, std::size_t n, Rng& rng)
{
    std::vector<Vec3> out;
    out.reserve(n);
    const Vec3 lo = mesh.bbox_min(), hi = mesh.bbox_max();
    long tries = 0;
    while (out.size() < n) {
        ++tries;
        const Vec3 x(rng.uniform(lo[0], hi[0]), rng.uniform(lo[1], hi[1]), rng.uniform(lo[2], hi[2]));
        if (mesh.contains(x))
            out.push_back(x);
        if (tries >= 100000 && double(out.size()) / double(tries) < 1e-3)
            throw InputError("rejection sampling acceptance below 1e-3; is the mesh degenerate?");
    }
    return out;
}

SimulationState make_initial_state(const Scenario& sc, std::uint64_t seed, std::uint64_t stream)
{
    SimulationState st;
    st.rng = Rng(seed, stream);
    Rng geo = st.rng.derive(1);
    Rng place = st.rng.derive(2);
    st.curves = sc.build_curves(geo);
    st.mesh = sc.mesh;
    st.road_blocks = sc.road_blocks;
    st.site_active.assign(sc.model.sites().size(), true);
    for (const auto& b : st.road_blocks)
        if (b.s > st.curves[std::size_t(b.curve)].length())
            throw InputError("road block beyond the end of curve '" + st.curves[std::size_t(b.curve)].name() + "'");

    for (const InitialGroup& g : sc.initial) {
        auto add = [&](bool bound, const Vec3& x, int curve, double s) {
            Molecule m;
            m.id = st.next_id++;
            m.species = g.species;
            m.bound = bound;
            m.x = x;
            m.curve = bound ? curve : -1;
            m.s = s;
            st.molecules.push_back(m);
        };
        if (g.curve >= 0) {
            const double l = st.curves[std::size_t(g.curve)].length();
            if (!g.arclengths.empty())
                for (double s : g.arclengths)
                    add(true, Vec3::Zero(), g.curve, std::min(s, l));
            else
                for (long k = 0; k < g.count; ++k)
                    add(true, Vec3::Zero(), g.curve, place.uniform(0.0, l));
        } else if (!g.positions.empty()) {
            for (const Vec3& x : g.positions)
                add(false, x, -1, 0.0);
        } else if (g.count > 0) {
            for (const Vec3& x : sample_uniform_in_mesh(*sc.mesh, std::size_t(g.count), place))
                add(false, x, -1, 0.0);
        }
    }
    resolve_overlaps(st, sc.model);
    return st;
}

TrajectoryResult run_trajectory(const Scenario& sc, std::uint64_t seed, std::uint64_t stream,
                                const TrajectoryObserver& obs)
{
    SimulationState st = make_initial_state(sc, seed, stream);
    EngineConfig cfg = sc.engine_config();
    cfg.dt_split = sc.dt_split;
    cfg.dt_min = std::min(cfg.dt_min, cfg.dt_split);
    Engine engine(sc.model, cfg);
    engine.schedule_all(st);
    const std::vector<CurveTransform> transforms = sc.transforms();

    TrajectoryResult res;
    auto snapshot = [&] {
        Snapshot s;
        s.time = st.time;
        s.counts = st.counts(sc.model.species().size());
        for (const auto& c : st.curves)
            s.curve_lengths.push_back(c.length());
        if (obs.on_snapshot)
            obs.on_snapshot(st, s);
        res.snapshots.push_back(std::move(s));
    };
    snapshot();

    const double eps = 1e-9 * sc.dt_split;
    double next_out = sc.output_interval;
    for (long k = 1; st.time < sc.t_final - eps; ++k) {
        const double t_next = std::min(sc.t_final, double(k) * sc.dt_split);
        const double dt = t_next - st.time;
        engine.step_window(st, dt);
        apply_curve_dynamics(st, sc.model, transforms, dt);
        st.time = t_next;
        std::vector<Event> events = engine.take_events();
        if (obs.on_events && !events.empty())
            obs.on_events(events);
        if (!sc.stop_on_event.empty()) {
            const auto it = std::find_if(events.begin(), events.end(),
                                         [&](const Event& e) { return sc.stop_on_event == to_string(e.kind); });
            if (it != events.end()) {
                res.stopped_on_event = true;
                res.stop_time = it->time;
                snapshot();
                break;
            }
        }
        const bool last = st.time >= sc.t_final - eps;
        if (sc.output_interval <= 0.0 || st.time >= next_out - eps || last) {
            if (!last || res.snapshots.back().time != st.time)
                snapshot();
            while (sc.output_interval > 0.0 && next_out <= st.time + eps)
                next_out += sc.output_interval;
        }
    }
    res.end_time = st.time;
    res.stats = engine.stats();
    return res;
}

} // namespace curvesim
