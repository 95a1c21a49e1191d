#pragma once

#include <cstddef>
#include <iosfwd>
#include <limits>
#include <map>
#include <memory>
#include <optional>
#include <tuple>
#include <vector>

#include "curvesim/rng.hpp"
#include "curvesim/vec.hpp"

namespace curvesim {

enum class Geometry { HalfLine1D, Radial2D, Radial3D };

const char* to_string(Geometry g);

struct RadiationProblem {
    Geometry geometry = Geometry::Radial3D;
    double D = 0.0;
    double sigma = 0.0;
    double k_r = 0.0;  // m^3/s (3D), m^2/s (2D), m/s (1D); may be +inf
    double r0 = 0.0;
    double dt = 0.0;
    // Optional reflecting wall; the domain ends at min(r_outer, r0 + reach).
    double r_outer = std::numeric_limits<double>::infinity();
};

struct GridParams {
    int radial_cells = 400;      // cells across the uniform-spacing part
    int time_steps = 200;        // sub-steps per solve
    double reach = 6.0;          // domain half-width in units of sqrt(2 D dt)
    double first_cell = 1e-4;    // first cell width at the contact radius, in units of sigma
    double growth = 1.1;         // geometric growth of cell widths away from contact
    double curvature_ratio = 0.02;  // cap on h / r near contact
    bool keep_history = false;   // keep the cdf at every sub-step, not only at dt

    // Doubles the resolution in space and time.
    GridParams refined() const;
};

// Finite-volume solution of one Delta-t radiation-boundary problem.
// Positions are stored as cell faces; pdf and cdf are per stored snapshot.
class RadialPropagator {
public:
    const RadiationProblem& problem() const { return problem_; }
    const std::vector<double>& r_grid() const { return faces_; }
    const std::vector<double>& t_grid() const { return times_; }
    const std::vector<double>& survival() const { return survival_; }
    const std::vector<double>& absorbed() const { return absorbed_; }

    // Snapshot times for which cdf/pdf are available.
    const std::vector<double>& snapshot_times() const { return snap_times_; }
    // Cumulative probability at each face; last entry equals survival.
    const std::vector<double>& cdf(std::size_t snapshot) const { return cdf_.at(snapshot); }
    // Radial density at cell centres including the geometric weight.
    std::vector<double> pdf(std::size_t snapshot) const;
    std::vector<double> cell_centres() const;

    double survival_at(double t) const;
    double r_min() const { return faces_.front(); }
    double r_max() const { return faces_.back(); }
    // Width of the first cell at the inner boundary.
    double first_cell_width() const { return faces_[1] - faces_[0]; }
    // True when the inner boundary lies beyond the reach of the solve.
    bool contact_unreachable() const { return faces_.front() > problem_.sigma; }

    std::optional<double> sample_reaction_time(double u) const;
    double sample_radius(double t, double u) const;
    double sample_radius(double u) const { return sample_radius(problem_.dt, u); }

    void dump(std::ostream& os) const;

private:
    friend RadialPropagator solve_radiation_pde(const RadiationProblem&, const GridParams&);
    friend class AngularPropagator;

    RadiationProblem problem_;
    std::vector<double> faces_;
    std::vector<double> times_;
    std::vector<double> survival_;
    std::vector<double> absorbed_;
    std::vector<double> snap_times_;
    std::vector<std::vector<double>> cdf_;
};

RadialPropagator solve_radiation_pde(const RadiationProblem& problem,
                                     const GridParams& grid = {});

std::optional<double> sample_reaction_time(const RadialPropagator& prop, double u);
double sample_radius(const RadialPropagator& prop, double t, double u);

// Distribution of the polar angle between the initial and final relative
// position, for diffusion on a shell of radius r.
class AngularPropagator {
public:
    double r() const { return r_; }
    double D() const { return D_; }
    double dt() const { return dt_; }
    const std::vector<double>& theta_grid() const { return faces_; }
    const std::vector<double>& cdf() const { return cdf_; }
    std::vector<double> pdf() const;
    double total() const { return cdf_.back(); }
    double sample_theta(double u) const;

private:
    friend AngularPropagator solve_angular_pde(double, double, double, const GridParams&);

    double r_ = 0.0, D_ = 0.0, dt_ = 0.0;
    std::vector<double> faces_;
    std::vector<double> cdf_;
};

AngularPropagator solve_angular_pde(double D, double r, double dt, const GridParams& grid = {});

Vec3 sample_free_displacement(double D, double dt, Rng& rng);
std::vector<double> sample_free_displacement(double D, double dt, int dim, Rng& rng);

struct ThetaZ {
    double dtheta = 0.0;
    double dz = 0.0;
};

ThetaZ sample_theta_z(double D, double r, double dt, Rng& rng);

// Wraps an angle to (-pi, pi].
double wrap_angle(double a);

// Memoizes solves. With r0_bucket > 0, r0 is snapped to a multiple of
// r0_bucket * sqrt(2 D dt) before solving.
class PropagatorCache {
public:
    explicit PropagatorCache(GridParams grid = {}, std::size_t capacity = 0, double r0_bucket = 0.0);

    std::shared_ptr<const RadialPropagator> radial(const RadiationProblem& p);
    std::shared_ptr<const AngularPropagator> angular(double D, double r, double dt);

    const GridParams& grid() const { return grid_; }
    std::size_t hits() const { return hits_; }
    std::size_t misses() const { return misses_; }

private:
    using Key = std::tuple<int, double, double, double, double, double, double>;

    GridParams grid_;
    std::size_t capacity_;
    double r0_bucket_;
    std::map<Key, std::shared_ptr<const RadialPropagator>> radial_;
    std::size_t hits_ = 0, misses_ = 0;
};

} // namespace curvesim
