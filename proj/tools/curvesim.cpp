#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <limits>
#include <mutex>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "curvesim/checks.hpp"
#include "curvesim/ensemble.hpp"
#include "curvesim/output.hpp"
#include "curvesim/propagators.hpp"
#include "curvesim/scenario.hpp"
#include "curvesim/stats.hpp"
#include "curvesim/validation.hpp"

using namespace curvesim;

namespace {

int cmd_run(const std::string& path, std::uint64_t seed, std::size_t n, const std::string& out_dir, unsigned workers,
            bool quiet)
{
    const Scenario sc = load_scenario(path);
    if (seed == 0)
        seed = sc.seed;
    std::filesystem::create_directories(out_dir);
    std::vector<TrajectoryResult> res(n);
    std::mutex io;
    parallel_for(n, workers, [&](std::size_t k) {
        TrajectoryWriter out(out_dir, sc, seed, k);
        res[k] = run_trajectory(sc, seed, k, out.observer());
        out.close();
        if (!quiet) {
            std::lock_guard<std::mutex> lk(io);
            std::fprintf(stderr, "trajectory %zu done: t = %.4g s%s\n", k, res[k].end_time,
                         res[k].stopped_on_event ? " (stop event)" : "");
        }
    });

    std::printf("scenario %s  config %s  seed %llu  trajectories %zu\n", sc.name.c_str(), config_hash(sc).c_str(),
                static_cast<unsigned long long>(seed), n);
    const auto& species = sc.model.species();
    for (std::size_t s = 0; s < species.size(); ++s) {
        std::vector<double> v;
        for (const auto& r : res)
            v.push_back(double(r.snapshots.back().counts[s]));
        const MeanSE m = mean_se(v);
        std::printf("  final %-10s %10.3f +- %.3f\n", species[s].name.c_str(), m.mean, m.se);
    }
    if (!sc.stop_on_event.empty()) {
        std::vector<double> t;
        for (const auto& r : res)
            if (r.stopped_on_event)
                t.push_back(r.stop_time);
        if (!t.empty()) {
            const MeanSE m = mean_se(t);
            std::printf("  first %s: %.5g +- %.2g s (%zu/%zu trajectories)\n", sc.stop_on_event.c_str(), m.mean, m.se,
                        t.size(), n);
        } else {
            std::printf("  no trajectory reached %s\n", sc.stop_on_event.c_str());
        }
    }
    std::printf("  output in %s\n", out_dir.c_str());
    return 0;
}

int cmd_validate(std::vector<std::string> ids, const CheckOptions& opt)
{
    if (ids.empty())
        ids = check_ids();
    int failed = 0;
    for (const auto& id : ids) {
        const CheckResult r = run_check(id, opt);
        std::cout << format_check(r) << std::endl;
        failed += !r.pass;
    }
    return failed ? 1 : 0;
}

Geometry parse_geometry(const std::string& g)
{
    if (g == "1d")
        return Geometry::HalfLine1D;
    if (g == "2d")
        return Geometry::Radial2D;
    if (g == "3d")
        return Geometry::Radial3D;
    throw CLI::ValidationError("--geometry", "expected 1d, 2d or 3d");
}

int cmd_oracle(const RadiationProblem& p, std::size_t trials, double dt_bd, std::uint64_t seed, bool fine)
{
    const auto prop = solve_radiation_pde(p, fine ? GridParams{}.refined() : GridParams{});
    BdOracleConfig cfg;
    cfg.problem = p;
    cfg.trials = trials;
    cfg.dt_bd = dt_bd;
    Rng rng(seed, 0);
    const BdOracleResult bd = bd_oracle(cfg, rng);
    const MeanSE s = bd.final_survival();
    std::printf("%s D=%g sigma=%g k_r=%g r0=%g dt=%g\n", to_string(p.geometry), p.D, p.sigma, p.k_r, p.r0, p.dt);
    std::printf("  PDE survival  %.6f  (absorbed %.6f, %zu faces)\n", prop.survival().back(), prop.absorbed().back(),
                prop.r_grid().size());
    std::printf("  BD survival   %.6f +- %.6f  (%zu trials, %ld steps)\n", s.mean, s.se, trials, bd.steps);
    std::printf("  z = %.2f\n", (prop.survival().back() - s.mean) / s.se);
    if (bd.final_r.size() > 100) {
        std::vector<double> mine;
        Rng r2(seed, 1);
        while (mine.size() < bd.final_r.size())
            if (!prop.sample_reaction_time(r2.uniform()))
                mine.push_back(prop.sample_radius(r2.uniform()));
        const TestResult ks = ks_two_sample(mine, bd.final_r);
        std::printf("  radius KS two-sample D = %.4f p = %.3f\n", ks.statistic, ks.p_value);
    }
    return 0;
}

int cmd_analyze(const std::string& dir, const AnalyzeOptions& opt)
{
    const ObservableReport rep = analyze_observables(dir, opt);
    std::printf("%zu trajectories, %zu rows\n", rep.trajectories, rep.time.size());
    if (!rep.time.empty()) {
        std::printf("final counts at t = %.4g:\n", rep.time.back());
        for (std::size_t s = 0; s < rep.species.size(); ++s)
            std::printf("  %-10s %10.3f +- %.3f\n", rep.species[s].c_str(), rep.counts[s].back().mean,
                        rep.counts[s].back().se);
    }
    if (!rep.first_event.empty())
        std::printf("first %s: %.5g +- %.2g s over %zu trajectories\n", opt.event_kind.c_str(),
                    rep.first_event_mean.mean, rep.first_event_mean.se, rep.first_event.size());
    if (!rep.radial_hist.empty()) {
        std::printf("radial distance at final snapshot: mean %.4g +- %.2g\n", rep.radial_mean.mean, rep.radial_mean.se);
        for (std::size_t k = 0; k < rep.radial_hist.size(); ++k)
            std::printf("  [%.3g, %.3g) %g\n", rep.radial_edges[k], rep.radial_edges[k + 1], rep.radial_hist[k]);
    }
    if (rep.have_correlation)
        std::printf("bound count vs total length: r = %.3f, 95%% CI [%.3f, %.3f]\n", rep.length_vs_bound.r,
                    rep.length_vs_bound.ci.lo, rep.length_vs_bound.ci.hi);
    return 0;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"curvesim: reaction-diffusion with embedded polyline curves"};
    app.require_subcommand(1);

    unsigned workers = default_workers();

    auto* run = app.add_subcommand("run", "simulate trajectories of a scenario and write CSV output");
    std::string scen, out_dir = "out";
    std::uint64_t seed = 0;
    std::size_t n = 1;
    bool quiet = false;
    run->add_option("-s,--scenario", scen, "scenario JSON")->required()->check(CLI::ExistingFile);
    run->add_option("--seed", seed, "master seed (0: the scenario seed)");
    run->add_option("-n,--trajectories", n, "number of trajectories")->check(CLI::PositiveNumber);
    run->add_option("-o,--out-dir", out_dir, "output directory");
    run->add_option("-j,--workers", workers, "worker threads (default: CURVESIM_WORKERS or core count)");
    run->add_flag("-q,--quiet", quiet);

    auto* val = app.add_subcommand("validate", "run acceptance checks");
    std::vector<std::string> ids;
    CheckOptions copt;
    val->add_option("checks", ids, "AC-1 ... AC-7 (default: all)");
    val->add_option("--scenarios", copt.scenario_dir, "directory with the bundled scenarios")->check(CLI::ExistingDirectory);
    val->add_option("--seed", copt.seed, "override scenario seeds");
    val->add_option("-j,--workers", workers, "worker threads");
    val->add_flag("-v,--verbose", quiet, "progress on stderr");

    auto* ora = app.add_subcommand("oracle", "compare one radiation-boundary propagator against Brownian dynamics");
    RadiationProblem p;
    p.D = 1e-12;
    p.sigma = 1e-9;
    p.k_r = 1e-11;
    p.r0 = 2e-9;
    p.dt = 1e-5;
    std::string geom = "3d", k_text;
    std::size_t trials = 100000;
    double dt_bd = 0.0;
    bool fine = false;
    ora->add_option("-g,--geometry", geom, "1d, 2d or 3d");
    ora->add_option("--D", p.D);
    ora->add_option("--sigma", p.sigma);
    ora->add_option("--k-r", k_text, "intrinsic rate, or inf");
    ora->add_option("--r0", p.r0);
    ora->add_option("--dt", p.dt);
    ora->add_option("--trials", trials);
    ora->add_option("--dt-bd", dt_bd, "BD step (0: sigma^2 / 100 D)");
    ora->add_option("--seed", seed);
    ora->add_flag("--fine", fine, "use the refined PDE grid");

    auto* ana = app.add_subcommand("analyze", "summarize the CSV output of a run");
    std::string dir;
    AnalyzeOptions aopt;
    std::vector<double> centre;
    ana->add_option("dir", dir, "output directory of `run`")->required()->check(CLI::ExistingDirectory);
    ana->add_option("--event", aopt.event_kind, "event kind for first-passage times");
    ana->add_option("--bound", aopt.bound_species, "bound species (default: *_cyl)");
    ana->add_option("--centre", centre, "x y z")->expected(3);
    ana->add_option("--radius", aopt.radius, "radial histogram range");
    ana->add_option("--bins", aopt.radial_bins);

    CLI11_PARSE(app, argc, argv);

    try {
        if (*run)
            return cmd_run(scen, seed, n, out_dir, workers, quiet);
        if (*val) {
            copt.workers = workers;
            if (quiet)
                copt.log = &std::cerr;
            return cmd_validate(ids, copt);
        }
        if (*ora) {
            p.geometry = parse_geometry(geom);
            if (!k_text.empty())
                p.k_r = k_text == "inf" ? std::numeric_limits<double>::infinity() : std::stod(k_text);
            return cmd_oracle(p, trials, dt_bd, seed ? seed : 1, fine);
        }
        if (*ana) {
            if (centre.size() == 3)
                aopt.centre = Vec3(centre[0], centre[1], centre[2]);
            return cmd_analyze(dir, aopt);
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << std::endl;
        return 2;
    }
    return 0;
}
