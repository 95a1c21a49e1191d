#include "curvesim/checks.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <limits>
#include <mutex>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "curvesim/engine.hpp"
#include "curvesim/ensemble.hpp"
#include "curvesim/line_dynamics.hpp"
#include "curvesim/output.hpp"
#include "curvesim/scenario.hpp"
#include "curvesim/stats.hpp"
#include "curvesim/validation.hpp"

namespace curvesim {

namespace {

std::string fmt(const char* f, ...)
{
    char buf[1024];
    va_list ap;
    va_start(ap, f);
    std::vsnprintf(buf, sizeof buf, f, ap);
    va_end(ap);
    return buf;
}

class Stopwatch {
public:
    double seconds() const
    {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    }

private:
    std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

void log(const CheckOptions& opt, const std::string& line)
{
    if (opt.log)
        *opt.log << line << std::endl;
}

Scenario scenario(const CheckOptions& opt, const std::string& file)
{
    return load_scenario((std::filesystem::path(opt.scenario_dir) / file).string());
}

std::uint64_t seed_of(const CheckOptions& opt, const Scenario& sc)
{
    return opt.seed ? opt.seed : sc.seed;
}

int species(const Scenario& sc, const std::string& name)
{
    const int i = sc.model.species_index(name);
    if (i < 0)
        throw InputError("scenario '" + sc.name + "' has no species '" + name + "'");
    return i;
}

double rule_rate(const Scenario& sc, RuleKind kind)
{
    for (const auto& r : sc.model.rules())
        if (r.kind == kind)
            return r.rate;
    throw InputError("scenario '" + sc.name + "' has no " + to_string(kind) + " rule");
}

std::vector<TrajectoryResult> run_ensemble(const Scenario& sc, std::uint64_t seed, std::size_t n, unsigned workers,
                                           const std::function<TrajectoryObserver(std::size_t)>& observer = {})
{
    std::vector<TrajectoryResult> out(n);
    parallel_for(n, workers, [&](std::size_t k) {
        out[k] = run_trajectory(sc, seed, k, observer ? observer(k) : TrajectoryObserver{});
    });
    return out;
}

std::size_t nearest_row(const std::vector<Snapshot>& snaps, double t)
{
    std::size_t best = 0;
    for (std::size_t k = 1; k < snaps.size(); ++k)
        if (std::abs(snaps[k].time - t) < std::abs(snaps[best].time - t))
            best = k;
    return best;
}

CheckResult finish(CheckResult r, const Stopwatch& w)
{
    r.seconds = w.seconds();
    if (!r.parts.empty()) {
        r.pass = std::all_of(r.parts.begin(), r.parts.end(), [](const CheckResult& p) { return p.pass; });
        int ok = 0;
        for (const auto& p : r.parts)
            ok += p.pass;
        r.detail = fmt("%d/%zu parts pass", ok, r.parts.size());
    }
    return r;
}

// Runs one part, turning exceptions into a failed part.
CheckResult part(const CheckOptions& opt, const std::string& id, const std::string& title,
                 const std::function<void(CheckResult&)>& body)
{
    Stopwatch w;
    CheckResult r;
    r.id = id;
    r.title = title;
    try {
        body(r);
    } catch (const std::exception& e) {
        r.pass = false;
        r.detail = std::string("error: ") + e.what();
    }
    r.seconds = w.seconds();
    log(opt, "  " + std::string(r.pass ? "ok   " : "FAIL ") + id + " " + title + ": " + r.detail);
    return r;
}

// ------------------------------------------------------------ AC-1

std::vector<double> series_of(const std::vector<Snapshot>& snaps, int sp)
{
    std::vector<double> v;
    for (const auto& s : snaps)
        v.push_back(double(s.counts[std::size_t(sp)]));
    return v;
}

} // namespace

CheckResult check_ac1(const CheckOptions& opt)
{
    Stopwatch w;
    CheckResult res;
    res.id = "AC-1";
    res.title = "cylinder: microscopic A_cyl(t) vs SSA with calibrated mesoscopic rates";
    try {
        const Scenario sc = scenario(opt, "cylinder.json");
        const std::uint64_t seed = seed_of(opt, sc);
        const int A = species(sc, "A"), Ac = species(sc, "A_cyl");
        const double k_r = rule_rate(sc, RuleKind::BindToCurve);
        const double k_d = rule_rate(sc, RuleKind::UnbindFromCurve);
        const double R = sc.canonical.at("boundary").at("radius").get<double>();
        const std::size_t n_traj = 20;

        log(opt, "AC-1: estimating T_bind (1000 single-molecule trials)");
        const TBindEstimate tb = estimate_T_bind(sc, "A", 1000, seed + 1, 400.0);
        const MesoRates meso = meso_rates(tb.T.mean, k_r, k_d, R);
        log(opt, fmt("AC-1: T_bind = %.4g +- %.2g s (%zu censored); k_r_meso = %.4g, k_d_meso = %.4g", tb.T.mean,
                     tb.T.se, tb.censored, meso.k_r_meso, meso.k_d_meso));

        log(opt, fmt("AC-1: %zu microscopic trajectories", n_traj));
        const auto micro = run_ensemble(sc, seed, n_traj, opt.workers);
        const auto& grid = micro.front().snapshots;
        std::vector<double> times;
        for (const auto& s : grid)
            times.push_back(s.time);
        long total = 0;
        for (long c : grid.front().counts)
            total += c;

        std::vector<long> x0(2, 0);
        x0[0] = total;
        const std::vector<SsaReaction> rx = {{{0}, {1}, meso.k_r_meso}, {{1}, {0}, meso.k_d_meso}};
        const std::size_t n_ssa = 2000;
        std::vector<std::vector<double>> ssa_bound(n_ssa);
        for (std::size_t k = 0; k < n_ssa; ++k) {
            Rng rng(seed + 2, k);
            const SsaPath path = ssa_wellmixed(rx, x0, times, rng);
            for (const auto& row : path.counts)
                ssa_bound[k].push_back(double(row[1]));
        }

        double worst = 0.0;
        std::string rows;
        bool curve_ok = true;
        for (int c = 1; c <= 10; ++c) {
            const double t = sc.t_final * c / 10.0;
            const std::size_t k = nearest_row(grid, t);
            std::vector<double> m, s;
            for (const auto& tr : micro)
                m.push_back(double(tr.snapshots.at(k).counts[std::size_t(Ac)]));
            for (const auto& p : ssa_bound)
                s.push_back(p.at(k));
            const MeanSE a = mean_se(m), b = mean_se(s);
            const double z = joint_z(a, b);
            worst = std::max(worst, z);
            curve_ok = curve_ok && z <= 2.0;
            rows += fmt(" t=%.2f:%.2f/%.2f(z=%.2f)", grid[k].time, a.mean, b.mean, z);
        }

        const double t_from = 0.5 * sc.t_final;
        auto stationary = [&](const std::vector<double>& bound) {
            double acc = 0.0;
            int n = 0;
            for (std::size_t k = 0; k < times.size(); ++k)
                if (times[k] >= t_from - 1e-12)
                    acc += bound[k] / double(total), ++n;
            return acc / n;
        };
        std::vector<double> fm, fs;
        for (const auto& tr : micro)
            fm.push_back(stationary(series_of(tr.snapshots, Ac)));
        for (const auto& p : ssa_bound)
            fs.push_back(stationary(p));
        const MeanSE sm = mean_se(fm), ss = mean_se(fs);
        const double rel = std::abs(sm.mean - ss.mean) / ss.mean;
        const double analytic = k_r / (k_r + k_d * kPi * R * R);
        (void)A;

        res.pass = curve_ok && rel < 0.05;
        res.detail = fmt("T_bind=%.4g+-%.2g s; max z over 10 checkpoints %.2f (<=2); stationary bound fraction "
                         "micro %.4f+-%.4f vs SSA %.4f+-%.4f, rel diff %.1f%% (<5%%); detailed-balance value %.4f;",
                         tb.T.mean, tb.T.se, worst, sm.mean, sm.se, ss.mean, ss.se, 100.0 * rel, analytic) +
                     rows;
    } catch (const std::exception& e) {
        res.pass = false;
        res.detail = std::string("error: ") + e.what();
    }
    return finish(res, w);
}

// ------------------------------------------------------------ AC-2

CheckResult check_ac2(const CheckOptions& opt)
{
    Stopwatch w;
    CheckResult res;
    res.id = "AC-2";
    res.title = "road blocks: T_active decreases with block distance and levels off";
    try {
        const Scenario base = scenario(opt, "roadblocks.json");
        const std::uint64_t seed = seed_of(opt, base);
        const int Ac = species(base, "A_cyl");
        const double D_b = base.model.species(Ac).D_bound;
        const double k_d = rule_rate(base, RuleKind::UnbindFromCurve);
        const double slide = std::sqrt(2.0 * D_b / k_d);
        const auto& site = base.canonical.at("sites").at(0);
        const double s_site = site.at("s").get<double>();
        const std::size_t n = 200;

        std::vector<MeanSE> T;
        std::vector<double> spacing;
        std::string rows;
        for (double f : {0.25, 1.0, 4.0}) {
            const double l = f * slide;
            nlohmann::json j = base.canonical;
            j["road_blocks"][0]["s"] = s_site - l;
            j["road_blocks"][1]["s"] = s_site + l;
            const Scenario sc = parse_scenario(j.dump());
            log(opt, fmt("AC-2: l_rb = %.3g m (%.2f x sliding length), %zu trajectories", l, f, n));
            const auto runs = run_ensemble(sc, seed, n, opt.workers);
            std::vector<double> t;
            std::size_t censored = 0;
            for (const auto& r : runs) {
                if (r.stopped_on_event)
                    t.push_back(r.stop_time);
                else
                    ++censored;
            }
            if (censored)
                throw std::runtime_error(fmt("%zu trajectories never reached the site by t_final", censored));
            T.push_back(mean_se(t));
            spacing.push_back(l);
            rows += fmt(" l=%.3g: T=%.4f+-%.4f;", l, T.back().mean, T.back().se);
        }
        const bool decreasing = T[0].mean > T[1].mean && T[1].mean > T[2].mean;
        const double z01 = (T[0].mean - T[1].mean) / std::sqrt(T[0].se * T[0].se + T[1].se * T[1].se);
        const double z02 = (T[0].mean - T[2].mean) / std::sqrt(T[0].se * T[0].se + T[2].se * T[2].se);
        const double lo1 = T[1].mean - 1.96 * T[1].se, hi1 = T[1].mean + 1.96 * T[1].se;
        const double lo2 = T[2].mean - 1.96 * T[2].se, hi2 = T[2].mean + 1.96 * T[2].se;
        const bool plateau = lo1 <= hi2 && lo2 <= hi1;
        res.pass = decreasing && z01 >= 2.0 && z02 >= 2.0 && plateau;
        res.detail = fmt("sliding length %.3g m;", slide) + rows +
                     fmt(" strictly decreasing: %s; drop z: %.2f (first pair), %.2f (ends) (>=2); 95%% CIs of the "
                         "two largest overlap: %s",
                         decreasing ? "yes" : "no", z01, z02, plateau ? "yes" : "no");
    } catch (const std::exception& e) {
        res.pass = false;
        res.detail = std::string("error: ") + e.what();
    }
    return finish(res, w);
}

// ------------------------------------------------------------ AC-3

CheckResult check_ac3(const CheckOptions& opt)
{
    Stopwatch w;
    CheckResult res;
    res.id = "AC-3";
    res.title = "active transport: radial distribution shifted toward the centre";
    try {
        const Scenario sc = scenario(opt, "transport.json");
        const std::uint64_t seed = seed_of(opt, sc);
        const double R = sc.canonical.at("boundary").at("radius").get<double>();
        const std::size_t n = 3;
        std::vector<std::vector<double>> radii(n);
        const double t_end = sc.t_final;
        log(opt, fmt("AC-3: %zu trajectories to t = %.2f s", n, t_end));
        run_ensemble(sc, seed, n, opt.workers, [&](std::size_t k) {
            TrajectoryObserver o;
            o.on_snapshot = [&radii, k, t_end](const SimulationState& st, const Snapshot& s) {
                if (s.time < t_end - 1e-9)
                    return;
                radii[k].clear();
                for (const auto& m : st.molecules)
                    if (m.alive)
                        radii[k].push_back(st.position(m).norm());
            };
            return o;
        });
        std::vector<double> all;
        std::string rows;
        for (const auto& r : radii) {
            all.insert(all.end(), r.begin(), r.end());
            rows += fmt(" %.3f", mean_se(r).mean / R);
        }
        const MeanSE m = mean_se(all);
        const double z = (0.75 * R - m.mean) / m.se;
        res.pass = z > 3.0;
        res.detail = fmt("mean r/R at t=%.2f: %.4f +- %.4f over %zu molecules (uniform 0.75); shift %.1f SE (>3); "
                         "per trajectory:",
                         t_end, m.mean / R, m.se / R, all.size(), z) +
                     rows;
    } catch (const std::exception& e) {
        res.pass = false;
        res.detail = std::string("error: ") + e.what();
    }
    return finish(res, w);
}

// ------------------------------------------------------------ AC-4

CheckResult check_ac4(const CheckOptions& opt)
{
    Stopwatch w;
    CheckResult res;
    res.id = "AC-4";
    res.title = "growth/shrink: bound count correlates with total line length";
    try {
        const Scenario sc = scenario(opt, "growth.json");
        const std::uint64_t seed = seed_of(opt, sc);
        const int Ac = species(sc, "A_cyl");
        log(opt, fmt("AC-4: one trajectory to t = %.2f s", sc.t_final));
        const TrajectoryResult tr = run_trajectory(sc, seed, 0);
        // The first 0.2 s relax from the all-free start.
        std::vector<double> bound, length;
        for (const auto& s : tr.snapshots) {
            if (s.time < 0.2)
                continue;
            bound.push_back(double(s.counts[std::size_t(Ac)]));
            double l = 0.0;
            for (double v : s.curve_lengths)
                l += v;
            length.push_back(l);
        }
        Rng rng(seed, 1000);
        const auto block = std::size_t(std::lround(std::sqrt(double(bound.size()))));
        const Correlation c = correlate(bound, length, block, 2000, rng);
        res.pass = c.r > 0.5 && c.ci.lo > 0.0;
        res.detail = fmt("Pearson r = %.3f (>0.5), block-bootstrap 95%% CI [%.3f, %.3f] (excludes 0), %zu samples, "
                         "block %zu",
                         c.r, c.ci.lo, c.ci.hi, bound.size(), block);
    } catch (const std::exception& e) {
        res.pass = false;
        res.detail = std::string("error: ") + e.what();
    }
    return finish(res, w);
}

// ------------------------------------------------------------ AC-5

namespace {

constexpr double kSigma = 1e-9;
constexpr double kD = 1e-12;
constexpr double kInf = std::numeric_limits<double>::infinity();

const Geometry kGeometries[] = {Geometry::HalfLine1D, Geometry::Radial2D, Geometry::Radial3D};

// Diffusion-limited rate scale: D / sigma, 2 pi D, 4 pi sigma D.
double rate_scale(Geometry g)
{
    switch (g) {
    case Geometry::HalfLine1D: return kD / kSigma;
    case Geometry::Radial2D: return 2.0 * kPi * kD;
    case Geometry::Radial3D: return 4.0 * kPi * kSigma * kD;
    }
    return 1.0;
}

RadiationProblem problem(Geometry g, double k_r, double r0, double dt)
{
    RadiationProblem p;
    p.geometry = g;
    p.D = kD;
    p.sigma = kSigma;
    p.k_r = k_r;
    p.r0 = r0;
    p.dt = dt;
    return p;
}

// Equiprobable bins from the pooled sample, then a two-sample chi-square.
TestResult compare_samples(const std::vector<double>& a, const std::vector<double>& b, std::size_t bins)
{
    std::vector<double> pooled = a;
    pooled.insert(pooled.end(), b.begin(), b.end());
    std::vector<double> edges{-1e300};
    for (std::size_t k = 1; k < bins; ++k)
        edges.push_back(quantile(pooled, double(k) / double(bins)));
    edges.push_back(1e300);
    edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
    return chi_square_two_sample(histogram(a, edges), histogram(b, edges));
}

std::vector<double> sample_radii(const RadialPropagator& prop, std::size_t n, Rng& rng)
{
    std::vector<double> r;
    r.reserve(n);
    while (r.size() < n) {
        const double u = rng.uniform();
        if (prop.sample_reaction_time(u))
            continue;
        r.push_back(prop.sample_radius(rng.uniform()));
    }
    return r;
}

} // namespace

CheckResult check_ac5(const CheckOptions& opt)
{
    Stopwatch w;
    CheckResult res;
    res.id = "AC-5";
    res.title = "propagator suite";
    log(opt, "AC-5: propagator suite");

    res.parts.push_back(part(opt, "5.1", "conservation survival + absorbed = 1 (1e-6)", [](CheckResult& r) {
        double worst = 0.0;
        int n = 0;
        for (Geometry g : kGeometries)
            for (double kf : {0.0, 1.0, 1e4, kInf})
                for (double r0 : {1.0, 1.5, 4.0}) {
                    GridParams gp;
                    gp.keep_history = true;
                    const auto prop = solve_radiation_pde(problem(g, kf * rate_scale(g), r0 * kSigma, 1e-6), gp);
                    for (std::size_t k = 0; k < prop.survival().size(); ++k)
                        worst = std::max(worst, std::abs(prop.survival()[k] + prop.absorbed()[k] - 1.0));
                    for (std::size_t s = 0; s < prop.snapshot_times().size(); ++s)
                        worst = std::max(worst, std::abs(prop.cdf(s).back() - prop.survival_at(prop.snapshot_times()[s])));
                    ++n;
                }
        r.pass = worst < 1e-6;
        r.detail = fmt("%d propagators, max |S + absorbed - 1| and |cdf(r_max) - S| = %.2e", n, worst);
    }));

    res.parts.push_back(part(opt, "5.2", "reflecting limit: S = 1 and radius histogram vs BD (chi2 p > 0.01)",
                             [](CheckResult& r) {
        std::string d;
        bool ok = true;
        for (Geometry g : kGeometries) {
            const RadiationProblem p = problem(g, 0.0, 2.0 * kSigma, 1e-6);
            const auto prop = solve_radiation_pde(p);
            Rng rng(51, int(g));
            BdOracleConfig c;
            c.problem = p;
            c.trials = 100000;
            const BdOracleResult bd = bd_oracle(c, rng);
            const auto samples = sample_radii(prop, 100000, rng);
            const TestResult t = compare_samples(samples, bd.final_r, 20);
            const double dS = std::abs(prop.survival().back() - 1.0);
            ok = ok && dS < 1e-6 && t.p_value > 0.01 && bd.final_survival().mean == 1.0;
            d += fmt("%s: |S-1|=%.1e, p=%.3f; ", to_string(g), dS, t.p_value);
        }
        r.pass = ok;
        r.detail = d;
    }));

    res.parts.push_back(part(opt, "5.3", "absorbing limit: k_r = 1e4 x diffusion scale vs absorbing BD (2 SE)",
                             [](CheckResult& r) {
        std::string d;
        bool ok = true;
        for (Geometry g : kGeometries) {
            const auto prop = solve_radiation_pde(problem(g, 1e4 * rate_scale(g), 1.5 * kSigma, 1e-6));
            BdOracleConfig c;
            c.problem = problem(g, kInf, 1.5 * kSigma, 1e-6);
            c.trials = 100000;
            Rng rng(53, int(g));
            const MeanSE bd = bd_oracle(c, rng).final_survival();
            const double z = std::abs(prop.survival().back() - bd.mean) / bd.se;
            ok = ok && z <= 2.0;
            d += fmt("%s: PDE %.4f, BD %.4f+-%.4f (z=%.2f); ", to_string(g), prop.survival().back(), bd.mean, bd.se, z);
        }
        r.pass = ok;
        r.detail = d;
    }));

    res.parts.push_back(part(opt, "5.4", "grid convergence: refined grid changes S(dt) by < 1e-4", [](CheckResult& r) {
        double worst = 0.0;
        int n = 0;
        auto check = [&](const RadiationProblem& p) {
            const double a = solve_radiation_pde(p).survival().back();
            const double b = solve_radiation_pde(p, GridParams{}.refined()).survival().back();
            worst = std::max(worst, std::abs(a - b));
            ++n;
        };
        for (Geometry g : kGeometries)
            for (double kf : {1.0, 100.0, kInf})
                for (double r0 : {1.0, 1.5, 3.0})
                    check(problem(g, kf * rate_scale(g), r0 * kSigma, 1e-6));
        check(problem(Geometry::Radial3D, 1e-11, 2e-9, 1e-5));
        r.pass = worst < 1e-4;
        r.detail = fmt("%d problems, max |dS| = %.2e", n, worst);
    }));

    res.parts.push_back(part(opt, "5.5", "BD equivalence: 3D reference rates survival (2 SE, 1e5 trials)",
                             [](CheckResult& r) {
        const RadiationProblem p = problem(Geometry::Radial3D, 1e-11, 2e-9, 1e-5);
        const auto prop = solve_radiation_pde(p);
        BdOracleConfig c;
        c.problem = p;
        c.trials = 100000;
        Rng rng(55, 0);
        const MeanSE bd = bd_oracle(c, rng).final_survival();
        const double z = std::abs(prop.survival().back() - bd.mean) / bd.se;
        r.pass = z <= 2.0;
        r.detail = fmt("PDE %.5f, BD %.5f +- %.5f (z=%.2f)", prop.survival().back(), bd.mean, bd.se, z);
    }));

    res.parts.push_back(part(opt, "5.6", "BD equivalence: partial absorption survival, all geometries (2 SE)",
                             [](CheckResult& r) {
        std::string d;
        bool ok = true;
        for (Geometry g : kGeometries) {
            const RadiationProblem p = problem(g, rate_scale(g), 1.5 * kSigma, 1e-6);
            const auto prop = solve_radiation_pde(p);
            BdOracleConfig c;
            c.problem = p;
            c.trials = 100000;
            Rng rng(56, int(g));
            const MeanSE bd = bd_oracle(c, rng).final_survival();
            const double z = std::abs(prop.survival().back() - bd.mean) / bd.se;
            ok = ok && z <= 2.0;
            d += fmt("%s: PDE %.4f, BD %.4f+-%.4f (z=%.2f); ", to_string(g), prop.survival().back(), bd.mean, bd.se, z);
        }
        r.pass = ok;
        r.detail = d;
    }));

    res.parts.push_back(part(opt, "5.7", "BD equivalence: 2D line parameters radius histogram (chi2 p > 0.01)",
                             [](CheckResult& r) {
        const RadiationProblem p = problem(Geometry::Radial2D, 1e-11, 2.0 * kSigma, 1e-6);
        const auto prop = solve_radiation_pde(p);
        BdOracleConfig c;
        c.problem = p;
        c.trials = 100000;
        Rng rng(57, 0);
        const BdOracleResult bd = bd_oracle(c, rng);
        const auto samples = sample_radii(prop, bd.final_r.size(), rng);
        const TestResult t = compare_samples(samples, bd.final_r, 20);
        const double z = std::abs(prop.survival().back() - bd.final_survival().mean) / bd.final_survival().se;
        r.pass = t.p_value > 0.01 && z <= 2.0;
        r.detail = fmt("chi2 = %.1f (dof %.0f), p = %.3f; survival PDE %.4f vs BD %.4f (z=%.2f)", t.statistic, t.dof,
                       t.p_value, prop.survival().back(), bd.final_survival().mean, z);
    }));

    res.parts.push_back(part(opt, "5.8", "sampling: KS of radii and reaction times against the stored CDFs",
                             [](CheckResult& r) {
        std::string d;
        bool ok = true;
        for (Geometry g : kGeometries) {
            const auto prop = solve_radiation_pde(problem(g, rate_scale(g), 1.5 * kSigma, 1e-6));
            Rng rng(58, int(g));
            std::vector<double> radii, times;
            for (int k = 0; k < 100000; ++k)
                radii.push_back(prop.sample_radius(rng.uniform()));
            while (times.size() < 100000) {
                if (const auto t = prop.sample_reaction_time(rng.uniform()))
                    times.push_back(*t);
            }
            const auto& faces = prop.r_grid();
            const auto& cdf = prop.cdf(prop.snapshot_times().size() - 1);
            auto F = [&](double x) {
                const auto it = std::upper_bound(faces.begin(), faces.end(), x);
                if (it == faces.begin())
                    return 0.0;
                if (it == faces.end())
                    return 1.0;
                const std::size_t k = std::size_t(it - faces.begin());
                const double f = (x - faces[k - 1]) / (faces[k] - faces[k - 1]);
                return ((1.0 - f) * cdf[k - 1] + f * cdf[k]) / cdf.back();
            };
            const double S = prop.survival().back();
            auto G = [&](double t) { return (1.0 - prop.survival_at(t)) / (1.0 - S); };
            const TestResult a = ks_one_sample(radii, F);
            const TestResult b = ks_one_sample(times, G);
            ok = ok && a.p_value > 0.01 && b.p_value > 0.01;
            d += fmt("%s: radius D=%.4f p=%.2f, time D=%.4f p=%.2f; ", to_string(g), a.statistic, a.p_value,
                     b.statistic, b.p_value);
        }
        r.pass = ok;
        r.detail = d;
    }));

    res.parts.push_back(part(opt, "5.9", "delta limit: dt = 1e-12, r0 = 10 sigma", [](CheckResult& r) {
        const auto prop = solve_radiation_pde(problem(Geometry::Radial3D, 1e-11, 10.0 * kSigma, 1e-12));
        Rng rng(59, 0);
        std::vector<double> s;
        for (int k = 0; k < 10000; ++k)
            s.push_back(prop.sample_radius(rng.uniform()));
        const auto& f = prop.r_grid();
        const auto it = std::upper_bound(f.begin(), f.end(), 10.0 * kSigma);
        const double cell = (it == f.end() || it == f.begin()) ? f.back() - f.front() : *it - *(it - 1);
        const double m = mean_se(s).mean;
        const double dS = std::abs(prop.survival().back() - 1.0);
        r.pass = dS < 1e-6 && std::abs(m - 10.0 * kSigma) < cell;
        r.detail = fmt("|S-1| = %.1e, |mean r - r0| = %.3g m, cell %.3g m", dS, std::abs(m - 10.0 * kSigma), cell);
    }));

    res.parts.push_back(part(opt, "5.10", "angular propagator: normalization and limits", [](CheckResult& r) {
        const double rr = 2e-9;
        std::string d;
        bool ok = true;
        double worst = 0.0;
        for (double x : {1e-6, 0.1, 1e3}) {
            const auto a = solve_angular_pde(kD, rr, x * rr * rr / kD);
            worst = std::max(worst, std::abs(a.total() - 1.0));
        }
        ok = worst < 1e-6;
        d += fmt("max |norm - 1| = %.1e; ", worst);

        const auto tiny = solve_angular_pde(kD, rr, 1e-6 * rr * rr / kD);
        Rng rng(510, 0);
        std::vector<double> th;
        for (int k = 0; k < 10000; ++k)
            th.push_back(tiny.sample_theta(rng.uniform()));
        const double first = tiny.theta_grid()[1] - tiny.theta_grid()[0];
        const double sd_small = std::sqrt(4.0 * 1e-6);
        ok = ok && mean_se(th).mean < std::max(first, 3.0 * sd_small);
        d += fmt("small: mean theta %.2e (first cell %.2e); ", mean_se(th).mean, first);

        for (double x : {0.1, 1e3}) {
            const auto a = solve_angular_pde(kD, rr, x * rr * rr / kD);
            std::vector<double> c;
            for (int k = 0; k < 100000; ++k)
                c.push_back(std::cos(a.sample_theta(rng.uniform())));
            const MeanSE m = mean_se(c);
            // Heat kernel on the sphere: <cos theta> = exp(-2 D t / r^2).
            const double expect = std::exp(-2.0 * x);
            const double z = std::abs(m.mean - expect) / m.se;
            ok = ok && z <= 2.0;
            d += fmt("Ddt/r^2=%g: <cos> %.4f+-%.4f vs %.4f (z=%.2f); ", x, m.mean, m.se, expect, z);
        }
        r.pass = ok;
        r.detail = d;
    }));

    res.parts.push_back(part(opt, "5.11", "free displacement and (theta, z) moments (3%, |rho| < 0.01)",
                             [](CheckResult& r) {
        Rng rng(511, 0);
        const double D = 1e-12, dt = 1e-3, v = 2.0 * D * dt;
        std::vector<double> x, msd;
        for (int k = 0; k < 100000; ++k) {
            const Vec3 d = sample_free_displacement(D, dt, rng);
            x.push_back(d[0] * d[0]);
            msd.push_back(d.squaredNorm());
        }
        const double ax = mean_se(x).mean / v, am = mean_se(msd).mean / (3.0 * v);
        const double rr = 1e-8, dth = 0.05 * rr * rr / (2.0 * D);
        std::vector<double> th, z;
        for (int k = 0; k < 100000; ++k) {
            const ThetaZ s = sample_theta_z(D, rr, dth, rng);
            th.push_back(s.dtheta);
            z.push_back(s.dz);
        }
        double vt = 0.0;
        for (double t : th)
            vt += t * t;
        vt /= double(th.size());
        const double at = vt / (2.0 * D * dth / (rr * rr));
        const double rho = pearson(th, z);
        const bool zero = sample_free_displacement(0.0, dt, rng).norm() == 0.0;
        r.pass = std::abs(ax - 1) < 0.03 && std::abs(am - 1) < 0.03 && std::abs(at - 1) < 0.03 &&
                 std::abs(rho) < 0.01 && zero;
        r.detail = fmt("var x / 2Ddt = %.4f, MSD / 6Ddt = %.4f, var theta ratio = %.4f, rho = %.4f", ax, am, at, rho);
    }));

    return finish(res, w);
}

// ------------------------------------------------------------ AC-6

namespace {

Model single_species_model(double D, double D_bound)
{
    Species s;
    s.name = "X";
    s.D_free = D;
    s.D_bound = D_bound;
    return Model({s}, {});
}

// Free non-reactive molecules started at the centre; returns final positions.
std::vector<Vec3> relax_free(std::shared_ptr<const SurfaceMesh> mesh, std::size_t n, double t_end, std::uint64_t seed)
{
    const Model model = single_species_model(1e-12, 0.0);
    EngineConfig cfg;
    cfg.dt_split = 0.01;
    Engine engine(model, cfg);
    SimulationState st;
    st.rng = Rng(seed, 0);
    st.mesh = std::move(mesh);
    for (std::size_t k = 0; k < n; ++k) {
        Molecule m;
        m.id = st.next_id++;
        st.molecules.push_back(m);
    }
    engine.schedule_all(st);
    while (st.time < t_end - 1e-12) {
        engine.step_window(st, cfg.dt_split);
        st.time += cfg.dt_split;
    }
    std::vector<Vec3> x;
    for (const auto& m : st.molecules)
        x.push_back(m.x);
    return x;
}

} // namespace

CheckResult check_ac6(const CheckOptions& opt)
{
    Stopwatch w;
    CheckResult res;
    res.id = "AC-6";
    res.title = "geometry / engine property suite";
    log(opt, "AC-6: geometry / engine suite");

    res.parts.push_back(part(opt, "6.1", "centre-of-diffusion transform round trip", [](CheckResult& r) {
        Rng rng(61, 0);
        double worst = 0.0;
        for (int k = 0; k < 10000; ++k) {
            const Vec3 a = rng.normal3(1e-6), b = rng.normal3(1e-6);
            const double D1 = k % 7 == 0 ? 0.0 : rng.uniform() * 1e-12;
            const double D2 = k % 11 == 0 ? 0.0 : rng.uniform() * 1e-12;
            const PairFrame f = PairFrame::from_positions(a, b, D1, D2);
            const double scale = std::max(a.norm(), b.norm());
            worst = std::max({worst, (f.x1() - a).norm() / scale, (f.x2() - b).norm() / scale});
        }
        r.pass = worst < 1e-12;
        r.detail = fmt("max relative error %.2e over 1e4 pairs (incl. D = 0 cases)", worst);
    }));

    res.parts.push_back(part(opt, "6.2", "uniform stationary distribution in a reflecting sphere (chi2 p > 0.01)",
                             [](CheckResult& r) {
        const double R = 1e-6;
        auto mesh = std::make_shared<const SurfaceMesh>(make_icosphere(R, 4));
        const auto x = relax_free(mesh, 4000, 1.0, 62);
        // 9 equal-volume shells inside 0.95 R, the rest outside; times 8 octants.
        const double V = mesh->volume(), inner = 0.95 * R;
        std::vector<double> obs(80, 0.0), expc(80, 0.0);
        std::vector<double> shell_frac(10);
        for (int k = 0; k < 9; ++k)
            shell_frac[std::size_t(k)] = 4.0 / 3.0 * kPi * inner * inner * inner / 9.0 / V;
        shell_frac[9] = 1.0 - 4.0 / 3.0 * kPi * inner * inner * inner / V;
        int outside = 0;
        for (const Vec3& p : x) {
            if (!mesh->contains(p))
                ++outside;
            const double rr = p.norm();
            const int shell = rr >= inner ? 9 : std::min(8, int(9.0 * std::pow(rr / inner, 3)));
            const int oct = (p[0] > 0) + 2 * (p[1] > 0) + 4 * (p[2] > 0);
            obs[std::size_t(shell * 8 + oct)] += 1.0;
        }
        for (int s = 0; s < 10; ++s)
            for (int o = 0; o < 8; ++o)
                expc[std::size_t(s * 8 + o)] = double(x.size()) * shell_frac[std::size_t(s)] / 8.0;
        const TestResult t = chi_square_gof(obs, expc);
        r.pass = t.p_value > 0.01 && outside == 0;
        r.detail = fmt("4000 molecules after 1 s from the centre: chi2 = %.1f (dof %.0f), p = %.3f; outside %d",
                       t.statistic, t.dof, t.p_value, outside);
    }));

    res.parts.push_back(part(opt, "6.3", "uniform stationary distribution in a reflecting cylinder (chi2 p > 0.01)",
                             [](CheckResult& r) {
        const double R = 1e-6, H = 2e-6;
        auto mesh = std::make_shared<const SurfaceMesh>(make_cylinder(R, H, 0, 48, 16, 8));
        const auto x = relax_free(mesh, 4000, 1.5, 63);
        // 4 equal-area rings inside 0.95 R plus the outer ring, times 4 axial slices.
        const double V = mesh->volume(), inner = 0.95 * R;
        const double f_inner = kPi * inner * inner * H / V;
        std::vector<double> obs(20, 0.0), expc(20, 0.0);
        int outside = 0;
        for (const Vec3& p : x) {
            if (!mesh->contains(p))
                ++outside;
            const double rho = std::hypot(p[1], p[2]);
            const int ring = rho >= inner ? 4 : std::min(3, int(4.0 * (rho / inner) * (rho / inner)));
            const int slice = std::clamp(int((p[0] + 0.5 * H) / H * 4.0), 0, 3);
            obs[std::size_t(ring * 4 + slice)] += 1.0;
        }
        for (int ring = 0; ring < 5; ++ring)
            for (int s = 0; s < 4; ++s)
                expc[std::size_t(ring * 4 + s)] = double(x.size()) * (ring < 4 ? f_inner / 4.0 : 1.0 - f_inner) / 4.0;
        const TestResult t = chi_square_gof(obs, expc);
        r.pass = t.p_value > 0.01 && outside == 0;
        r.detail = fmt("4000 molecules after 1.5 s from the centre: chi2 = %.1f (dof %.0f), p = %.3f; outside %d",
                       t.statistic, t.dof, t.p_value, outside);
    }));

    res.parts.push_back(part(opt, "6.4", "on-curve MSD = 2 D dt on a straight line (3%)", [](CheckResult& r) {
        const Model model = single_species_model(1e-12, 1e-12);
        Engine engine(model, EngineConfig{});
        SimulationState st;
        st.rng = Rng(64, 0);
        st.curves.push_back(make_line(Vec3(0, 0, 0), Vec3(1e-5, 0, 0), 10, 1e-9));
        const double dt = 1e-4, s0 = 5e-6;
        std::vector<double> sq;
        Molecule m;
        m.bound = true;
        m.curve = 0;
        m.s = s0;
        st.molecules.push_back(m);
        for (int k = 0; k < 100000; ++k) {
            st.molecules[0].s = s0;
            engine.propagate_on_curve(st, 0, dt, 0.0);
            const double d = st.molecules[0].s - s0;
            sq.push_back(d * d);
        }
        const double ratio = mean_se(sq).mean / (2.0 * 1e-12 * dt);
        r.pass = std::abs(ratio - 1.0) < 0.03;
        r.detail = fmt("MSD / 2Ddt = %.4f over 1e5 steps", ratio);
    }));

    res.parts.push_back(part(opt, "6.5", "circle (N = 360): effective D from angular MSD within 5%", [](CheckResult& r) {
        const double D = 1e-12, R = 1e-6, dt = 1e-3;
        const int steps = 10;
        const Model model = single_species_model(D, D);
        Engine engine(model, EngineConfig{});
        SimulationState st;
        st.rng = Rng(65, 0);
        st.curves.push_back(make_circle(Vec3::Zero(), R, Vec3::UnitZ(), 360, 1e-9));
        const double s0 = 0.5 * st.curves[0].length();
        Molecule m;
        m.bound = true;
        m.curve = 0;
        st.molecules.push_back(m);
        std::vector<double> sq;
        for (int k = 0; k < 10000; ++k) {
            st.molecules[0].s = s0;
            const Vec3 a = st.position(st.molecules[0]);
            for (int j = 0; j < steps; ++j)
                engine.propagate_on_curve(st, 0, dt, j * dt);
            const Vec3 b = st.position(st.molecules[0]);
            const double dphi = std::atan2(a.cross(b).dot(Vec3::UnitZ()), a.dot(b));
            sq.push_back(R * R * dphi * dphi);
        }
        const double D_eff = mean_se(sq).mean / (2.0 * steps * dt);
        r.pass = std::abs(D_eff / D - 1.0) < 0.05;
        r.detail = fmt("D_eff / D = %.4f", D_eff / D);
    }));

    res.parts.push_back(part(opt, "6.6", "determinism: byte-identical outputs across reruns and worker counts",
                             [&opt](CheckResult& r) {
        Scenario sc = scenario(opt, "spirals.json");
        nlohmann::json j = sc.canonical;
        j["t_final"] = 0.05;
        j["output"]["positions"] = true;
        sc = parse_scenario(j.dump());
        const auto root = std::filesystem::temp_directory_path() /
                          ("curvesim_det_" + std::to_string(std::chrono::steady_clock::now().time_since_epoch().count()));
        auto run = [&](const std::string& name, unsigned workers) {
            const std::string dir = (root / name).string();
            parallel_for(2, workers, [&](std::size_t k) {
                TrajectoryWriter out(dir, sc, sc.seed, k);
                run_trajectory(sc, sc.seed, k, out.observer());
                out.close();
            });
            return dir;
        };
        const std::string a = run("a", 1), b = run("b", 1), c = run("c", 2);
        auto slurp = [](const std::filesystem::path& p) {
            std::ifstream f(p, std::ios::binary);
            return std::string(std::istreambuf_iterator<char>(f), {});
        };
        int files = 0, same = 0;
        for (const auto& e : std::filesystem::directory_iterator(a)) {
            const auto name = e.path().filename();
            const std::string x = slurp(e.path());
            same += x == slurp(std::filesystem::path(b) / name) && x == slurp(std::filesystem::path(c) / name);
            ++files;
        }
        std::filesystem::remove_all(root);
        r.pass = files == 6 && same == files;
        r.detail = fmt("%d/%d files identical (1 worker twice, 2 workers)", same, files);
    }));

    res.parts.push_back(part(opt, "6.7", "conservation audits (spirals, cylinder)", [&opt](CheckResult& r) {
        std::string d;
        bool ok = true;
        {
            Scenario sc = scenario(opt, "spirals.json");
            nlohmann::json j = sc.canonical;
            j["t_final"] = 0.3;
            j["output"]["interval"] = 0.0;
            sc = parse_scenario(j.dump());
            const int A = species(sc, "A"), B = species(sc, "B"), Ac = species(sc, "A_cyl"),
                      Bc = species(sc, "B_cyl"), Cc = species(sc, "C_cyl");
            int bad = 0, rows = 0;
            for (const auto& tr : run_ensemble(sc, sc.seed, 2, opt.workers)) {
                const auto& c0 = tr.snapshots.front().counts;
                const long a0 = c0[std::size_t(A)] + c0[std::size_t(Ac)] + c0[std::size_t(Cc)];
                const long b0 = c0[std::size_t(B)] + c0[std::size_t(Bc)] + c0[std::size_t(Cc)];
                for (const auto& s : tr.snapshots) {
                    const auto& c = s.counts;
                    ++rows;
                    const bool neg = std::any_of(c.begin(), c.end(), [](long v) { return v < 0; });
                    if (neg || c[std::size_t(A)] + c[std::size_t(Ac)] + c[std::size_t(Cc)] != a0 ||
                        c[std::size_t(B)] + c[std::size_t(Bc)] + c[std::size_t(Cc)] != b0)
                        ++bad;
                }
            }
            ok = ok && bad == 0;
            d += fmt("spirals: %d/%d snapshots violate A/B mass or sign; ", bad, rows);
        }
        {
            Scenario sc = scenario(opt, "cylinder.json");
            nlohmann::json j = sc.canonical;
            j["t_final"] = 0.3;
            sc = parse_scenario(j.dump());
            int bad = 0, rows = 0;
            for (const auto& s : run_trajectory(sc, sc.seed, 0).snapshots) {
                long tot = 0;
                for (long v : s.counts)
                    tot += v;
                bad += tot != 250;
                ++rows;
            }
            ok = ok && bad == 0;
            d += fmt("cylinder: %d/%d snapshots with A + A_cyl != 250", bad, rows);
        }
        r.pass = ok;
        r.detail = d;
    }));

    res.parts.push_back(part(opt, "6.8", "bound lifetime with k_d = 50: mean within 2% of 0.02 s", [](CheckResult& r) {
        Species a;
        a.name = "A";
        a.D_free = 1e-12;
        Species ac;
        ac.name = "A_cyl";
        ac.D_bound = 1e-14;
        ReactionRule un;
        un.kind = RuleKind::UnbindFromCurve;
        un.reactants = {1};
        un.products = {0};
        un.rate = 50.0;
        const Model model({a, ac}, {un});
        Engine engine(model, EngineConfig{});
        SimulationState st;
        st.rng = Rng(68, 0);
        Molecule m;
        m.species = 1;
        m.bound = true;
        m.curve = 0;
        st.molecules.push_back(m);
        std::vector<double> life;
        for (int k = 0; k < 100000; ++k) {
            engine.schedule(st, 0, 0.0);
            life.push_back(st.molecules[0].event_time);
        }
        const MeanSE ms = mean_se(life);
        r.pass = std::abs(ms.mean / 0.02 - 1.0) < 0.02;
        r.detail = fmt("mean lifetime %.5f +- %.5f s", ms.mean, ms.se);
    }));

    res.parts.push_back(part(opt, "6.9", "time-step rule and boundary reflection", [](CheckResult& r) {
        EngineConfig cfg;
        const double R = 1e-7;
        const double dt = choose_time_step({R}, 1e-12, 1.0, cfg);
        const double expect = R * R / 1.5e-10;
        const bool rule = std::abs(dt / expect - 1.0) < 1e-12 && choose_time_step({0.0}, 1e-12, 1.0, cfg) == cfg.dt_min;
        const SurfaceMesh mesh = make_icosphere(1e-6, 3);
        Rng rng(69, 0);
        int outside = 0;
        for (int k = 0; k < 10000; ++k) {
            const Vec3 a = rng.unit_vector() * 0.9e-6 * std::cbrt(rng.uniform());
            const Vec3 b = reflect_at_boundary(a, a + rng.normal3(3e-7), mesh);
            outside += !mesh.contains(b);
        }
        r.pass = rule && outside == 0;
        r.detail = fmt("dt(R=1e-7) = %.6g s (expected %.6g); reflected points outside: %d/10000", dt, expect, outside);
    }));

    return finish(res, w);
}

// ------------------------------------------------------------ AC-7

CheckResult check_ac7(const CheckOptions& opt)
{
    Stopwatch w;
    CheckResult res;
    res.id = "AC-7";
    res.title = "spirals: 2 s run, non-negative counts, A-mass conserved, C_cyl forms";
    try {
        const Scenario sc = scenario(opt, "spirals.json");
        const std::uint64_t seed = seed_of(opt, sc);
        const int A = species(sc, "A"), Ac = species(sc, "A_cyl"), Cc = species(sc, "C_cyl");
        const std::size_t n = 10;
        log(opt, fmt("AC-7: %zu seeds to t = %.2f s", n, sc.t_final));
        const auto runs = run_ensemble(sc, seed, n, opt.workers);
        int violations = 0, formed = 0;
        std::string rows;
        for (const auto& tr : runs) {
            const auto& c0 = tr.snapshots.front().counts;
            const long mass = c0[std::size_t(A)] + c0[std::size_t(Ac)] + c0[std::size_t(Cc)];
            for (const auto& s : tr.snapshots) {
                const auto& c = s.counts;
                if (std::any_of(c.begin(), c.end(), [](long v) { return v < 0; }) ||
                    c[std::size_t(A)] + c[std::size_t(Ac)] + c[std::size_t(Cc)] != mass)
                    ++violations;
            }
            const auto& last = tr.snapshots.back();
            formed += last.counts[std::size_t(Cc)] > 0 && last.time >= sc.t_final - 1e-9;
            rows += fmt(" %ld", last.counts[std::size_t(Cc)]);
        }
        res.pass = violations == 0 && formed * 10 >= int(n) * 9;
        res.detail = fmt("snapshots violating sign/A-mass: %d; C_cyl > 0 at t = %.1f in %d/%zu seeds (>= 90%%); "
                         "C_cyl per seed:",
                         violations, sc.t_final, formed, n) +
                     rows;
    } catch (const std::exception& e) {
        res.pass = false;
        res.detail = std::string("error: ") + e.what();
    }
    return finish(res, w);
}

std::vector<std::string> check_ids()
{
    return {"AC-1", "AC-2", "AC-3", "AC-4", "AC-5", "AC-6", "AC-7"};
}

CheckResult run_check(const std::string& id, const CheckOptions& opt)
{
    if (id == "AC-1")
        return check_ac1(opt);
    if (id == "AC-2")
        return check_ac2(opt);
    if (id == "AC-3")
        return check_ac3(opt);
    if (id == "AC-4")
        return check_ac4(opt);
    if (id == "AC-5")
        return check_ac5(opt);
    if (id == "AC-6")
        return check_ac6(opt);
    if (id == "AC-7")
        return check_ac7(opt);
    throw std::invalid_argument("unknown check '" + id + "' (expected AC-1 ... AC-7)");
}

std::string format_check(const CheckResult& r)
{
    std::string s = fmt("%s %s %s (%.1f s): ", r.pass ? "PASS" : "FAIL", r.id.c_str(), r.title.c_str(), r.seconds) +
                    r.detail;
    for (const auto& p : r.parts)
        s += fmt("\n    %s %s %s: ", p.pass ? "pass" : "FAIL", p.id.c_str(), p.title.c_str()) + p.detail;
    return s;
}

} // namespace curvesim
