#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "curvesim/output.hpp"
#include "curvesim/propagators.hpp"
#include "curvesim/rng.hpp"
#include "curvesim/scenario.hpp"
#include "curvesim/stats.hpp"

namespace curvesim {

// Small-step Brownian reference for one RadiationProblem, walked in the
// radial coordinate. With u = r^((d-1)/2) p the problem becomes a half-line
// one with Robin constant kappa0 = (d-1) / (2 sigma) when reflecting and
// kappa0 + kappa when reactive, kappa = k_r / (D w(sigma)), w the contact
// area (1, 2 pi sigma, 4 pi sigma^2). Per step of variance s^2 = 2 D dt from
// gap x to gap y, with
//   B(k) = 1 - k s sqrt(2 pi) erfcx((x + y + k s^2) / (s sqrt 2)),  e = exp(-2 x y / s^2),
// y is drawn from (r/r0)^((d-1)/2) [G(x-y) + G(x+y) B(kappa0)] and the pair
// is killed with probability
//   P = (B(kappa0) - B(kappa0 + kappa)) e / (1 + B(kappa0) e).
// Exact in 1D and 3D; in 2D the 1/(4 r^2) potential of the transform is
// dropped, an O(D dt / r^2) error per step.
struct BdOracleConfig {
    RadiationProblem problem;  // problem.dt is the horizon
    double dt_bd = 0.0;        // 0: sigma^2 / (100 D)
    std::size_t trials = 10000;
    // Away from contact the step grows so that s <= gap / far_factor; 0 keeps
    // every step at dt_bd.
    double far_factor = 5.0;
    std::vector<double> times;  // survival checkpoints; the horizon is always added
};

struct BdOracleResult {
    std::vector<double> times;
    std::vector<MeanSE> survival;       // per checkpoint
    std::vector<double> reaction_times;  // of trials that reacted
    std::vector<double> final_r;         // of trials that survived the horizon
    long steps = 0;

    const MeanSE& final_survival() const { return survival.back(); }
};

double bd_kill_probability(double x, double y, double s, double kappa, double kappa0 = 0.0);
BdOracleResult bd_oracle(const BdOracleConfig& cfg, Rng& rng);

// Mass-action channel for the well-mixed reference.
struct SsaReaction {
    std::vector<int> reactants;
    std::vector<int> products;
    double rate = 0.0;
};

struct SsaPath {
    std::vector<std::vector<long>> counts;  // [sample][species]
    long events = 0;
    std::vector<double> event_times;  // filled when requested
};

SsaPath ssa_wellmixed(const std::vector<SsaReaction>& reactions, std::vector<long> initial,
                      const std::vector<double>& sample_times, Rng& rng, bool record_events = false);

// Well-mixed rates equivalent to a line of intrinsic rate k_r (m^2/s) and
// dissociation k_d through a disk of radius R.
struct MesoRates {
    double k_r_meso = 0.0;
    double k_d_meso = 0.0;
};

MesoRates meso_rates(double T_bind, double k_r, double k_d, double R);

struct TBindEstimate {
    MeanSE T;
    std::size_t censored = 0;  // trials still free at t_max
};

// First binding time of one molecule of `species`, started uniformly in the
// scenario boundary, with unbinding and every unrelated rule removed.
TBindEstimate estimate_T_bind(const Scenario& sc, const std::string& species, std::size_t trials,
                              std::uint64_t seed, double t_max);

// ---- observables from output files

// Sum of the listed species columns per row.
std::vector<double> count_series(const CountsTable& t, const std::vector<std::string>& species);

struct EnsembleSeries {
    std::vector<double> time;
    std::vector<MeanSE> value;
};

// Mean over trajectories; every table must share the time grid.
EnsembleSeries ensemble_series(const std::vector<CountsTable>& tables, const std::vector<std::string>& species);

// Per trajectory, time average of sum(species) / sum(total) over rows with
// time >= t_from.
std::vector<double> stationary_fraction(const std::vector<CountsTable>& tables, const std::vector<std::string>& bound,
                                        const std::vector<std::string>& total, double t_from);

// Time of the first event of this kind, or -1.
double first_event_time(const EventTable& t, const std::string& kind);

// Distances from `centre` of every molecule of `species` in the snapshot
// closest to `time`.
std::vector<double> radial_positions(const PositionTable& t, double time, const std::vector<std::string>& species,
                                     const Vec3& centre);

struct Correlation {
    double r = 0.0;
    Interval ci;
};

Correlation correlate(const std::vector<double>& x, const std::vector<double>& y, std::size_t block,
                      std::size_t resamples, Rng& rng);

struct ObservableReport {
    std::size_t trajectories = 0;
    std::vector<std::string> species;
    std::vector<double> time;
    std::vector<std::vector<MeanSE>> counts;  // [species][row]
    std::vector<double> first_event;          // per trajectory, first event of any kind in `event_kind`
    MeanSE first_event_mean;
    std::vector<double> radial_edges;
    std::vector<double> radial_hist;
    MeanSE radial_mean;
    bool have_correlation = false;
    Correlation length_vs_bound;
};

struct AnalyzeOptions {
    std::string event_kind = "site_absorb";
    std::vector<std::string> bound_species;  // empty: names ending in "_cyl"
    Vec3 centre = Vec3::Zero();
    double radius = 0.0;  // radial histogram range; 0 = max observed
    std::size_t radial_bins = 10;
    std::uint64_t seed = 1;
};

// Reads every counts_*/events_*/positions_* file in dir.
ObservableReport analyze_observables(const std::string& dir, const AnalyzeOptions& opt = {});

} // namespace curvesim
