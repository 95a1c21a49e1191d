#include "curvesim/validation.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <limits>
#include <map>

#include "curvesim/engine.hpp"
#include "curvesim/error.hpp"
#include "curvesim/line_dynamics.hpp"

namespace curvesim {

namespace {

double erfcx(double z)
{
    if (z < 25.0)
        return std::exp(z * z) * std::erfc(z);
    const double iz2 = 1.0 / (z * z);
    return (1.0 - 0.5 * iz2 * (1.0 - 1.5 * iz2 * (1.0 - 2.5 * iz2))) / (z * std::sqrt(kPi));
}

int dimension(Geometry g)
{
    switch (g) {
    case Geometry::HalfLine1D: return 1;
    case Geometry::Radial2D: return 2;
    case Geometry::Radial3D: return 3;
    }
    return 3;
}

double contact_area(Geometry g, double sigma)
{
    switch (g) {
    case Geometry::HalfLine1D: return 1.0;
    case Geometry::Radial2D: return 2.0 * kPi * sigma;
    case Geometry::Radial3D: return 4.0 * kPi * sigma * sigma;
    }
    return 1.0;
}

} // namespace

namespace {

// Robin factor of the half-line kernel G(x - y) + G(x + y) B(k).
double robin_factor(double x, double y, double s, double k)
{
    if (std::isinf(k))
        return -1.0;
    const double z = (x + y + k * s * s) / (s * std::sqrt(2.0));
    return 1.0 - k * s * std::sqrt(2.0 * kPi) * erfcx(z);
}

} // namespace

double bd_kill_probability(double x, double y, double s, double kappa, double kappa0)
{
    if (!(kappa > 0.0))
        return 0.0;
    const double q = 2.0 * x * y / (s * s);
    if (q > 700.0)
        return 0.0;
    const double e = std::exp(-q);
    const double b0 = robin_factor(x, y, s, kappa0);
    return std::clamp((b0 - robin_factor(x, y, s, kappa0 + kappa)) * e / (1.0 + b0 * e), 0.0, 1.0);
}

BdOracleResult bd_oracle(const BdOracleConfig& cfg, Rng& rng)
{
    const RadiationProblem& p = cfg.problem;
    if (!(p.D > 0.0) || !(p.sigma > 0.0) || !(p.dt > 0.0) || !(p.r0 >= p.sigma) || !(p.k_r >= 0.0))
        throw InputError("bd_oracle: invalid problem");
    if (!(p.r_outer > p.r0))
        throw InputError("bd_oracle: r0 outside the reflecting wall");
    const int d = dimension(p.geometry);
    const double dt_bd = cfg.dt_bd > 0.0 ? cfg.dt_bd : p.sigma * p.sigma / (100.0 * p.D);
    const double kappa = p.k_r / (p.D * contact_area(p.geometry, p.sigma));
    const double kappa0 = 0.5 * (d - 1) / p.sigma;
    const double power = 0.5 * (d - 1);
    const double T = p.dt;

    BdOracleResult res;
    res.times = cfg.times;
    res.times.push_back(T);
    std::sort(res.times.begin(), res.times.end());
    res.times.erase(std::unique(res.times.begin(), res.times.end()), res.times.end());

    for (std::size_t trial = 0; trial < cfg.trials; ++trial) {
        double r = p.r0;
        double t = 0.0;
        bool reacted = false;
        while (t < T) {
            double dt = dt_bd;
            if (cfg.far_factor > 0.0) {
                double gap = r - p.sigma;
                if (std::isfinite(p.r_outer))
                    gap = std::min(gap, p.r_outer - r);
                const double s_far = gap / cfg.far_factor;
                dt = std::max(dt_bd, s_far * s_far / (2.0 * p.D));
            }
            dt = std::min(dt, T - t);
            const double s = std::sqrt(2.0 * p.D * dt);
            const double x = r - p.sigma;
            // Radial reflecting kernel (r/r0)^power [G- + G+ B(kappa0)] by
            // rejection from the reflected Gaussian G- + G+.
            const double bound = std::pow((r + 8.0 * s) / r, power);
            double y = 0.0, e = 0.0;
            for (;;) {
                y = std::abs(x + rng.normal(s));
                if (p.sigma + y > p.r_outer)
                    y = std::max(0.0, 2.0 * (p.r_outer - p.sigma) - y);
                const double q = 2.0 * x * y / (s * s);
                e = q > 700.0 ? 0.0 : std::exp(-q);
                if (d == 1)
                    break;
                const double w = std::pow((p.sigma + y) / r, power) * (1.0 + robin_factor(x, y, s, kappa0) * e) /
                                 (1.0 + e) / bound;
                if (rng.uniform() < w)
                    break;
            }
            ++res.steps;
            if (kappa > 0.0 && e > 0.0 && rng.uniform() < bd_kill_probability(x, y, s, kappa, kappa0)) {
                res.reaction_times.push_back(t + rng.uniform() * dt);
                reacted = true;
                break;
            }
            r = p.sigma + y;
            t += dt;
        }
        if (!reacted)
            res.final_r.push_back(r);
    }

    std::vector<double> rt = res.reaction_times;
    std::sort(rt.begin(), rt.end());
    for (double tc : res.times) {
        const std::size_t dead = std::size_t(std::upper_bound(rt.begin(), rt.end(), tc) - rt.begin());
        res.survival.push_back(mean_se_binary(cfg.trials - dead, cfg.trials));
    }
    return res;
}

SsaPath ssa_wellmixed(const std::vector<SsaReaction>& reactions, std::vector<long> x,
                      const std::vector<double>& sample_times, Rng& rng, bool record_events)
{
    for (const auto& r : reactions) {
        if (!(r.rate >= 0.0))
            throw InputError("ssa: negative rate");
        for (int s : r.reactants)
            if (s < 0 || std::size_t(s) >= x.size())
                throw InputError("ssa: reactant species out of range");
        for (int s : r.products)
            if (s < 0 || std::size_t(s) >= x.size())
                throw InputError("ssa: product species out of range");
    }
    if (!std::is_sorted(sample_times.begin(), sample_times.end()))
        throw InputError("ssa: sample times must ascend");

    SsaPath path;
    std::vector<double> a(reactions.size());
    auto propensity = [&](const SsaReaction& r) {
        double v = r.rate;
        for (std::size_t k = 0; k < r.reactants.size(); ++k) {
            long n = x[std::size_t(r.reactants[k])];
            for (std::size_t j = 0; j < k; ++j)
                if (r.reactants[j] == r.reactants[k])
                    --n;
            v *= double(std::max(0L, n));
        }
        return v;
    };

    double t = 0.0;
    std::size_t next = 0;
    const double t_end = sample_times.empty() ? 0.0 : sample_times.back();
    while (next < sample_times.size()) {
        double a0 = 0.0;
        for (std::size_t i = 0; i < reactions.size(); ++i)
            a0 += (a[i] = propensity(reactions[i]));
        const double t_next = a0 > 0.0 ? t + rng.exponential(a0) : std::numeric_limits<double>::infinity();
        while (next < sample_times.size() && sample_times[next] < t_next)
            path.counts.push_back(x), ++next;
        if (t_next > t_end)
            break;
        double u = rng.uniform() * a0;
        std::size_t ch = 0;
        while (ch + 1 < reactions.size() && (u -= a[ch]) > 0.0)
            ++ch;
        while (a[ch] <= 0.0 && ch > 0)
            --ch;
        for (int s : reactions[ch].reactants)
            --x[std::size_t(s)];
        for (int s : reactions[ch].products)
            ++x[std::size_t(s)];
        t = t_next;
        ++path.events;
        if (record_events)
            path.event_times.push_back(t);
    }
    return path;
}

MesoRates meso_rates(double T_bind, double k_r, double k_d, double R)
{
    if (!(T_bind > 0.0) || !(k_r > 0.0) || !(k_d >= 0.0) || !(R > 0.0))
        throw InputError("meso_rates: need T_bind > 0, k_r > 0, k_d >= 0, R > 0");
    const double A_disk = kPi * R * R;
    MesoRates m;
    m.k_r_meso = 1.0 / T_bind;
    m.k_d_meso = k_d * m.k_r_meso * A_disk / k_r;
    return m;
}

TBindEstimate estimate_T_bind(const Scenario& sc, const std::string& species, std::size_t trials, std::uint64_t seed,
                              double t_max)
{
    const int sp = sc.model.species_index(species);
    if (sp < 0)
        throw InputError("estimate_T_bind: unknown species '" + species + "'");
    if (!sc.mesh)
        throw InputError("estimate_T_bind: scenario has no boundary");
    std::vector<ReactionRule> rules;
    for (const auto& r : sc.model.rules())
        if (r.kind == RuleKind::BindToCurve && r.reactants.front() == sp)
            rules.push_back(r);
    if (rules.empty())
        throw InputError("estimate_T_bind: species '" + species + "' has no binding rule");

    Scenario one = sc;
    one.model = Model(sc.model.species(), rules, sc.model.sites());
    InitialGroup g;
    g.species = sp;
    g.count = 1;
    one.initial = {g};
    EngineConfig cfg = one.engine_config();
    cfg.dt_split = one.dt_split;
    cfg.dt_min = std::min(cfg.dt_min, cfg.dt_split);
    Engine engine(one.model, cfg);
    const auto transforms = one.transforms();

    TBindEstimate est;
    std::vector<double> times;
    for (std::size_t trial = 0; trial < trials; ++trial) {
        SimulationState st = make_initial_state(one, seed, trial);
        engine.schedule_all(st);
        double hit = -1.0;
        for (long k = 1; hit < 0.0 && st.time < t_max; ++k) {
            const double t_next = std::min(t_max, double(k) * cfg.dt_split);
            const double dt = t_next - st.time;
            engine.step_window(st, dt);
            apply_curve_dynamics(st, one.model, transforms, dt);
            st.time = t_next;
            for (const Event& e : engine.take_events())
                if (e.kind == EventKind::Bind && hit < 0.0)
                    hit = e.time;
        }
        if (hit >= 0.0)
            times.push_back(hit);
        else
            ++est.censored;
    }
    est.T = mean_se(times);
    return est;
}

std::vector<double> count_series(const CountsTable& t, const std::vector<std::string>& species)
{
    std::vector<int> cols;
    for (const auto& s : species) {
        const int c = t.species_column(s);
        if (c < 0)
            throw InputError("counts table has no species '" + s + "'");
        cols.push_back(c);
    }
    std::vector<double> out;
    out.reserve(t.time.size());
    for (const auto& row : t.counts) {
        double v = 0.0;
        for (int c : cols)
            v += double(row[std::size_t(c)]);
        out.push_back(v);
    }
    return out;
}

EnsembleSeries ensemble_series(const std::vector<CountsTable>& tables, const std::vector<std::string>& species)
{
    if (tables.empty())
        throw InputError("ensemble of zero trajectories");
    EnsembleSeries e;
    e.time = tables.front().time;
    std::vector<std::vector<double>> s;
    for (const auto& t : tables) {
        if (t.time.size() != e.time.size())
            throw InputError("trajectories have different time grids");
        for (std::size_t k = 0; k < e.time.size(); ++k)
            if (std::abs(t.time[k] - e.time[k]) > 1e-9 * std::max(1.0, std::abs(e.time[k])))
                throw InputError("trajectories have different time grids");
        s.push_back(count_series(t, species));
    }
    for (std::size_t k = 0; k < e.time.size(); ++k) {
        std::vector<double> col;
        for (const auto& v : s)
            col.push_back(v[k]);
        e.value.push_back(mean_se(col));
    }
    return e;
}

std::vector<double> stationary_fraction(const std::vector<CountsTable>& tables, const std::vector<std::string>& bound,
                                        const std::vector<std::string>& total, double t_from)
{
    std::vector<double> out;
    for (const auto& t : tables) {
        const auto b = count_series(t, bound);
        const auto n = count_series(t, total);
        double acc = 0.0;
        int rows = 0;
        for (std::size_t k = 0; k < t.time.size(); ++k) {
            if (t.time[k] < t_from || !(n[k] > 0.0))
                continue;
            acc += b[k] / n[k];
            ++rows;
        }
        if (rows == 0)
            throw InputError("no rows after t_from for the stationary fraction");
        out.push_back(acc / rows);
    }
    return out;
}

double first_event_time(const EventTable& t, const std::string& kind)
{
    for (const auto& e : t.rows)
        if (e.kind == kind)
            return e.time;
    return -1.0;
}

std::vector<double> radial_positions(const PositionTable& t, double time, const std::vector<std::string>& species,
                                     const Vec3& centre)
{
    if (t.rows.empty())
        return {};
    double best = t.rows.front().time;
    for (const auto& r : t.rows)
        if (std::abs(r.time - time) < std::abs(best - time))
            best = r.time;
    std::vector<double> out;
    for (const auto& r : t.rows) {
        if (r.time != best)
            continue;
        if (!species.empty() && std::find(species.begin(), species.end(), r.species) == species.end())
            continue;
        out.push_back((r.x - centre).norm());
    }
    return out;
}

Correlation correlate(const std::vector<double>& x, const std::vector<double>& y, std::size_t block,
                      std::size_t resamples, Rng& rng)
{
    Correlation c;
    c.r = pearson(x, y);
    c.ci = bootstrap_pearson_ci(x, y, block, resamples, 0.95, rng);
    return c;
}

ObservableReport analyze_observables(const std::string& dir, const AnalyzeOptions& opt)
{
    namespace fs = std::filesystem;
    if (!fs::is_directory(dir))
        throw InputError("'" + dir + "' is not a directory");
    std::map<std::uint64_t, std::string> counts_files, event_files, position_files;
    for (const auto& entry : fs::directory_iterator(dir)) {
        const std::string name = entry.path().filename().string();
        auto index = [&](const std::string& prefix) -> long long {
            if (name.rfind(prefix, 0) != 0 || name.size() < prefix.size() + 5 || name.substr(name.size() - 4) != ".csv")
                return -1;
            const std::string mid = name.substr(prefix.size(), name.size() - prefix.size() - 4);
            if (mid.empty() || !std::all_of(mid.begin(), mid.end(), ::isdigit))
                return -1;
            return std::stoll(mid);
        };
        if (long long k = index("counts_"); k >= 0)
            counts_files[std::uint64_t(k)] = entry.path().string();
        else if (long long k2 = index("events_"); k2 >= 0)
            event_files[std::uint64_t(k2)] = entry.path().string();
        else if (long long k3 = index("positions_"); k3 >= 0)
            position_files[std::uint64_t(k3)] = entry.path().string();
    }
    if (counts_files.empty())
        throw InputError("no counts_*.csv files in '" + dir + "'");

    ObservableReport rep;
    std::vector<CountsTable> tables;
    for (const auto& [k, path] : counts_files)
        tables.push_back(read_counts(path));
    rep.trajectories = tables.size();
    rep.species = tables.front().species;
    for (const auto& t : tables)
        if (t.species != rep.species || t.header.config_hash != tables.front().header.config_hash)
            throw InputError("counts files in '" + dir + "' come from different scenarios");

    // Trajectories stopped on an event are shorter; use the common prefix.
    std::size_t rows = tables.front().time.size();
    for (const auto& t : tables)
        rows = std::min(rows, t.time.size());
    rep.time.assign(tables.front().time.begin(), tables.front().time.begin() + long(rows));
    rep.counts.resize(rep.species.size());
    for (std::size_t s = 0; s < rep.species.size(); ++s)
        for (std::size_t k = 0; k < rows; ++k) {
            std::vector<double> col;
            for (const auto& t : tables)
                col.push_back(double(t.counts[k][s]));
            rep.counts[s].push_back(mean_se(col));
        }

    for (const auto& [k, path] : event_files) {
        const double t = first_event_time(read_events(path), opt.event_kind);
        if (t >= 0.0)
            rep.first_event.push_back(t);
    }
    rep.first_event_mean = mean_se(rep.first_event);

    std::vector<double> radii;
    for (const auto& [k, path] : position_files) {
        const PositionTable p = read_positions(path);
        if (p.rows.empty())
            continue;
        const auto r = radial_positions(p, p.rows.back().time, {}, opt.centre);
        radii.insert(radii.end(), r.begin(), r.end());
    }
    if (!radii.empty()) {
        const double R = opt.radius > 0.0 ? opt.radius : *std::max_element(radii.begin(), radii.end());
        rep.radial_edges = equal_volume_radial_edges(R, std::max<std::size_t>(1, opt.radial_bins));
        rep.radial_hist = histogram(radii, rep.radial_edges);
        rep.radial_mean = mean_se(radii);
    }

    std::vector<std::string> bound = opt.bound_species;
    if (bound.empty())
        for (const auto& s : rep.species)
            if (s.size() > 4 && s.compare(s.size() - 4, 4, "_cyl") == 0)
                bound.push_back(s);
    const CountsTable& first = tables.front();
    if (!bound.empty() && !first.curves.empty() && first.time.size() >= 4) {
        const auto x = count_series(first, bound);
        std::vector<double> y;
        for (const auto& row : first.curve_lengths) {
            double l = 0.0;
            for (double v : row)
                l += v;
            y.push_back(l);
        }
        try {
            Rng rng(opt.seed, 0);
            const auto block = std::size_t(std::max(1.0, std::round(std::sqrt(double(x.size())))));
            rep.length_vs_bound = correlate(x, y, block, 2000, rng);
            rep.have_correlation = true;
        } catch (const StatisticsError&) {
            // constant series (e.g. static curves): no correlation to report
        }
    }
    return rep;
}

} // namespace curvesim
