#include "curvesim/propagators.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <sstream>

#include "curvesim/error.hpp"

namespace curvesim {

const char* to_string(Geometry g)
{
    switch (g) {
    case Geometry::HalfLine1D: return "halfline1d";
    case Geometry::Radial2D: return "radial2d";
    case Geometry::Radial3D: return "radial3d";
    }
    return "?";
}

GridParams GridParams::refined() const
{
    GridParams g = *this;
    g.radial_cells *= 2;
    g.time_steps *= 2;
    g.first_cell *= 0.5;
    g.curvature_ratio *= 0.5;
    return g;
}

namespace {

// Tridiagonal operator L (lower, diag, upper) acting on densities; the
// system matrix of an implicit stage is V - c L.
struct Operator {
    std::vector<double> lo, di, up;  // lo[i] couples i to i-1, up[i] couples i to i+1
};

// Pre-factored (V - c L) for repeated Thomas solves.
class Factored {
public:
    Factored(const std::vector<double>& V, const Operator& L, double c)
    {
        const std::size_t n = V.size();
        a_.resize(n);
        b_.resize(n);
        cp_.resize(n);
        for (std::size_t i = 0; i < n; ++i) {
            a_[i] = -c * L.lo[i];
            b_[i] = V[i] - c * L.di[i];
            cp_[i] = -c * L.up[i];
        }
        inv_.resize(n);
        for (std::size_t i = 0; i < n; ++i) {
            const double d = b_[i] - (i > 0 ? a_[i] * cp_[i - 1] : 0.0);
            if (!(std::abs(d) > 0.0))
                throw SolverError("singular tridiagonal system in propagator solve");
            inv_[i] = 1.0 / d;
            cp_[i] *= inv_[i];
        }
    }

    void solve(std::vector<double>& x) const
    {
        const std::size_t n = x.size();
        double* xp = x.data();
        xp[0] *= inv_[0];
        for (std::size_t i = 1; i < n; ++i)
            xp[i] = (xp[i] - a_[i] * xp[i - 1]) * inv_[i];
        for (std::size_t i = n - 1; i-- > 0;)
            xp[i] -= cp_[i] * xp[i + 1];
    }

private:
    std::vector<double> a_, b_, cp_, inv_;
};

void apply(const Operator& L, const std::vector<double>& P, std::vector<double>& out)
{
    const std::size_t n = P.size();
    if (n == 1) {
        out[0] = L.di[0] * P[0];
        return;
    }
    out[0] = L.di[0] * P[0] + L.up[0] * P[1];
    for (std::size_t i = 1; i + 1 < n; ++i)
        out[i] = L.lo[i] * P[i - 1] + L.di[i] * P[i] + L.up[i] * P[i + 1];
    out[n - 1] = L.lo[n - 1] * P[n - 2] + L.di[n - 1] * P[n - 1];
}

struct FvResult {
    std::vector<double> survival, absorbed;
    std::vector<std::vector<double>> masses;  // per kept snapshot
    std::vector<double> snap_times;
};

// Integrates dm/dt = L P (P = m / V) with TR-BDF2 on a uniform time grid.
// `absorb` is the first-cell loss coefficient.
FvResult integrate(const std::vector<double>& V, const Operator& L, double absorb,
                   std::vector<double> mass, double dt, int steps, bool keep_history)
{
    const std::size_t n = V.size();
    const double gamma = 2.0 - std::sqrt(2.0);
    const double tau = dt / steps;
    const double c1 = (1.0 - gamma) / (2.0 - gamma);
    const double w_g = 1.0 / (gamma * (2.0 - gamma));
    const double w_n = (1.0 - gamma) * (1.0 - gamma) / (gamma * (2.0 - gamma));

    const Factored stage1(V, L, 0.5 * gamma * tau);
    const Factored stage2(V, L, c1 * tau);
    // Backward-Euler start damps the oscillation the trapezoidal stage
    // produces from a point-mass initial condition.
    constexpr int kStartup = 4;
    const double tau_be = tau / kStartup;
    const Factored euler(V, L, tau_be);

    std::vector<double> P(n), Pg(n), rhs(n), tmp(n);
    for (std::size_t i = 0; i < n; ++i)
        P[i] = mass[i] / V[i];

    FvResult out;
    out.survival.reserve(steps + 1);
    out.absorbed.reserve(steps + 1);
    double total = 0.0;
    for (double m : mass)
        total += m;
    double absorbed = 0.0;
    out.survival.push_back(total);
    out.absorbed.push_back(0.0);
    if (keep_history) {
        out.masses.push_back(mass);
        out.snap_times.push_back(0.0);
    }

    for (int k = 1; k <= steps; ++k) {
        if (k == 1) {
            for (int j = 0; j < kStartup; ++j) {
                for (std::size_t i = 0; i < n; ++i)
                    rhs[i] = V[i] * P[i];
                euler.solve(rhs);
                absorbed += tau_be * absorb * rhs[0];
                P.swap(rhs);
            }
        } else {
            apply(L, P, tmp);
            for (std::size_t i = 0; i < n; ++i)
                Pg[i] = V[i] * P[i] + 0.5 * gamma * tau * tmp[i];
            stage1.solve(Pg);
            const double absorbed_g = absorbed + 0.5 * gamma * tau * absorb * (P[0] + Pg[0]);

            for (std::size_t i = 0; i < n; ++i)
                rhs[i] = V[i] * (w_g * Pg[i] - w_n * P[i]);
            stage2.solve(rhs);
            absorbed = w_g * absorbed_g - w_n * absorbed + c1 * tau * absorb * rhs[0];
            P.swap(rhs);
        }

        total = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            total += V[i] * P[i];
        if (!std::isfinite(total))
            throw SolverError("non-finite mass in propagator solve");
        out.survival.push_back(total);
        out.absorbed.push_back(absorbed);
        if (keep_history || k == steps) {
            for (std::size_t i = 0; i < n; ++i)
                mass[i] = V[i] * P[i];
            out.masses.push_back(mass);
            out.snap_times.push_back(dt * k / steps);
        }
    }
    return out;
}

double weight(Geometry g, double r)
{
    switch (g) {
    case Geometry::Radial3D: return 4.0 * kPi * r * r;
    case Geometry::Radial2D: return 2.0 * kPi * r;
    case Geometry::HalfLine1D: return 1.0;
    }
    return 1.0;
}

double shell_volume(Geometry g, double a, double b)
{
    switch (g) {
    case Geometry::Radial3D: return 4.0 * kPi / 3.0 * (b * b * b - a * a * a);
    case Geometry::Radial2D: return kPi * (b * b - a * a);
    case Geometry::HalfLine1D: return b - a;
    }
    return b - a;
}

std::vector<double> make_faces(double lo, double hi, double sigma, bool graded, const GridParams& gp)
{
    const double hmax = (hi - lo) / gp.radial_cells;
    std::vector<double> f{lo};
    if (!graded) {
        for (int i = 1; i < gp.radial_cells; ++i)
            f.push_back(lo + (hi - lo) * i / gp.radial_cells);
        f.push_back(hi);
        return f;
    }
    double h = std::min(gp.first_cell * sigma, hmax);
    while (f.back() < hi) {
        f.push_back(f.back() + h);
        h = std::min({h * gp.growth, hmax, std::max(gp.curvature_ratio * f.back(), h)});
    }
    f.back() = hi;
    if (f.size() > 2 && f[f.size() - 1] - f[f.size() - 2] < 0.3 * hmax)
        f.erase(f.end() - 2);
    return f;
}

// Splits a unit point mass at x linearly between the bracketing cell centres.
std::vector<double> split_delta(const std::vector<double>& centres, double x)
{
    std::vector<double> m(centres.size(), 0.0);
    const auto it = std::lower_bound(centres.begin(), centres.end(), x);
    const std::size_t k = std::size_t(it - centres.begin());
    if (k == 0)
        m[0] = 1.0;
    else if (k == centres.size())
        m.back() = 1.0;
    else {
        const double w = (x - centres[k - 1]) / (centres[k] - centres[k - 1]);
        m[k - 1] = 1.0 - w;
        m[k] = w;
    }
    return m;
}

std::vector<double> to_cdf(const std::vector<double>& mass, double total)
{
    std::vector<double> c(mass.size() + 1, 0.0);
    double s = 0.0;
    for (std::size_t i = 0; i < mass.size(); ++i) {
        s += std::max(0.0, mass[i]);
        c[i + 1] = s;
    }
    if (s > 0.0)
        for (double& v : c)
            v *= total / s;
    return c;
}

double invert_cdf(const std::vector<double>& faces, const std::vector<double>& cdf, double target)
{
    if (target <= 0.0)
        return faces.front();
    if (target >= cdf.back())
        return faces.back();
    const auto it = std::upper_bound(cdf.begin(), cdf.end(), target);
    const std::size_t k = std::size_t(it - cdf.begin());  // cdf[k-1] <= target < cdf[k]
    const double w = (target - cdf[k - 1]) / (cdf[k] - cdf[k - 1]);
    return faces[k - 1] + w * (faces[k] - faces[k - 1]);
}

void check_grid(const GridParams& gp)
{
    if (gp.radial_cells < 4 || gp.time_steps < 1 || !(gp.reach >= 1.0) || !(gp.first_cell > 0.0) ||
        !(gp.growth >= 1.0) || !(gp.curvature_ratio > 0.0))
        throw InputError("invalid propagator grid parameters");
}

} // namespace

RadialPropagator solve_radiation_pde(const RadiationProblem& p, const GridParams& gp)
{
    check_grid(gp);
    if (!(p.D > 0.0) || !(p.sigma > 0.0) || !(p.k_r >= 0.0) || !(p.dt > 0.0) || !std::isfinite(p.r0)) {
        std::ostringstream os;
        os << "invalid radiation problem (D=" << p.D << ", sigma=" << p.sigma << ", k_r=" << p.k_r
           << ", dt=" << p.dt << ")";
        throw InputError(os.str());
    }
    if (p.r0 < p.sigma)
        throw InputError("r0 below the reaction radius");
    if (!(p.r_outer > p.sigma) || p.r_outer < p.r0)
        throw InputError("reflecting wall must lie beyond the contact radius and r0");

    const double L = gp.reach * std::sqrt(2.0 * p.D * p.dt);
    const double r_max = std::min(p.r0 + L, p.r_outer);
    const double r_min = std::max(p.sigma, p.r0 - L);
    const bool graded = r_min <= p.sigma;

    RadialPropagator prop;
    prop.problem_ = p;
    prop.faces_ = make_faces(r_min, r_max, p.sigma, graded, gp);
    const auto& f = prop.faces_;
    for (std::size_t i = 1; i < f.size(); ++i)
        if (!(f[i] > f[i - 1]))
            throw SolverError("non-monotone radial grid");

    const std::size_t n = f.size() - 1;
    const std::vector<double> c = prop.cell_centres();
    std::vector<double> V(n);
    for (std::size_t i = 0; i < n; ++i)
        V[i] = shell_volume(p.geometry, f[i], f[i + 1]);

    Operator op{std::vector<double>(n, 0.0), std::vector<double>(n, 0.0), std::vector<double>(n, 0.0)};
    for (std::size_t i = 0; i + 1 < n; ++i) {
        const double cf = p.D * weight(p.geometry, f[i + 1]) / (c[i + 1] - c[i]);
        op.di[i] -= cf;
        op.di[i + 1] -= cf;
        op.up[i] = cf;
        op.lo[i + 1] = cf;
    }
    double absorb = 0.0;
    if (graded && p.k_r > 0.0) {
        const double a = p.D * weight(p.geometry, p.sigma) / (c[0] - p.sigma);
        absorb = std::isinf(p.k_r) ? a : p.k_r * a / (a + p.k_r);
        op.di[0] -= absorb;
    }

    FvResult res = integrate(V, op, absorb, split_delta(c, p.r0), p.dt, gp.time_steps, gp.keep_history);

    prop.times_.resize(gp.time_steps + 1);
    for (int k = 0; k <= gp.time_steps; ++k)
        prop.times_[k] = p.dt * k / gp.time_steps;
    // Survival is monotone up to round-off; enforce it for sampling.
    prop.survival_ = std::move(res.survival);
    for (std::size_t k = 1; k < prop.survival_.size(); ++k) {
        if (prop.survival_[k] > prop.survival_[k - 1] + 1e-9)
            throw SolverError("survival increased during propagator solve");
        prop.survival_[k] = std::min(prop.survival_[k], prop.survival_[k - 1]);
    }
    prop.absorbed_ = std::move(res.absorbed);
    prop.snap_times_ = std::move(res.snap_times);
    for (std::size_t s = 0; s < res.masses.size(); ++s) {
        const std::size_t k = std::size_t(std::lround(prop.snap_times_[s] / p.dt * gp.time_steps));
        prop.cdf_.push_back(to_cdf(res.masses[s], prop.survival_[k]));
    }
    return prop;
}

std::vector<double> RadialPropagator::cell_centres() const
{
    std::vector<double> c(faces_.size() - 1);
    for (std::size_t i = 0; i < c.size(); ++i)
        c[i] = 0.5 * (faces_[i] + faces_[i + 1]);
    return c;
}

std::vector<double> RadialPropagator::pdf(std::size_t snapshot) const
{
    const auto& c = cdf_.at(snapshot);
    std::vector<double> d(faces_.size() - 1);
    for (std::size_t i = 0; i < d.size(); ++i)
        d[i] = (c[i + 1] - c[i]) / (faces_[i + 1] - faces_[i]);
    return d;
}

double RadialPropagator::survival_at(double t) const
{
    if (t <= 0.0)
        return 1.0;
    if (t >= problem_.dt)
        return survival_.back();
    const double x = t / problem_.dt * (times_.size() - 1);
    const std::size_t k = std::size_t(x);
    const double w = x - double(k);
    return (1.0 - w) * survival_[k] + w * survival_[k + 1];
}

std::optional<double> RadialPropagator::sample_reaction_time(double u) const
{
    if (!(u > 0.0 && u < 1.0))
        throw InputError("uniform draw outside (0, 1)");
    if (u <= survival_.back())
        return std::nullopt;
    // survival_ is non-increasing: find first k with survival_[k] < u.
    const auto it = std::partition_point(survival_.begin(), survival_.end(),
                                         [u](double s) { return s >= u; });
    const std::size_t k = std::size_t(it - survival_.begin());
    const double s0 = survival_[k - 1], s1 = survival_[k];
    const double w = s0 > s1 ? (s0 - u) / (s0 - s1) : 1.0;
    return times_[k - 1] + w * (times_[k] - times_[k - 1]);
}

double RadialPropagator::sample_radius(double t, double u) const
{
    if (!(u >= 0.0 && u <= 1.0))
        throw InputError("uniform draw outside [0, 1]");
    const double t_first = snap_times_.front();
    const double t_last = snap_times_.back();
    const double tol = 1e-9 * problem_.dt;
    if (t < t_first - tol || t > t_last + tol)
        throw InputError("sample_radius: time has no stored snapshot");
    std::size_t k = std::size_t(std::lower_bound(snap_times_.begin(), snap_times_.end(), t - tol) -
                                snap_times_.begin());
    k = std::min(k, snap_times_.size() - 1);
    if (std::abs(snap_times_[k] - t) <= tol || k == 0) {
        const auto& c = cdf_[k];
        if (!(c.back() > 0.0))
            throw InputError("sample_radius: zero survival, the pair must have reacted");
        return invert_cdf(faces_, c, u * c.back());
    }
    // Between two snapshots: mix the normalized cumulative distributions.
    const double w = (t - snap_times_[k - 1]) / (snap_times_[k] - snap_times_[k - 1]);
    const auto& a = cdf_[k - 1];
    const auto& b = cdf_[k];
    if (!(a.back() > 0.0) || !(b.back() > 0.0))
        throw InputError("sample_radius: zero survival, the pair must have reacted");
    std::vector<double> mix(a.size());
    for (std::size_t i = 0; i < a.size(); ++i)
        mix[i] = (1.0 - w) * a[i] / a.back() + w * b[i] / b.back();
    return invert_cdf(faces_, mix, u * mix.back());
}

void RadialPropagator::dump(std::ostream& os) const
{
    os << "# geometry=" << to_string(problem_.geometry) << " D=" << problem_.D
       << " sigma=" << problem_.sigma << " k_r=" << problem_.k_r << " r0=" << problem_.r0
       << " dt=" << problem_.dt << "\n";
    os << "# t\tsurvival\n";
    for (std::size_t k = 0; k < times_.size(); ++k)
        os << times_[k] << "\t" << survival_[k] << "\n";
    os << "\n# r\tpdf(dt)\n";
    const auto c = cell_centres();
    const auto d = pdf(cdf_.size() - 1);
    for (std::size_t i = 0; i < c.size(); ++i)
        os << c[i] << "\t" << d[i] << "\n";
}

std::optional<double> sample_reaction_time(const RadialPropagator& prop, double u)
{
    return prop.sample_reaction_time(u);
}

double sample_radius(const RadialPropagator& prop, double t, double u)
{
    return prop.sample_radius(t, u);
}

AngularPropagator solve_angular_pde(double D, double r, double dt, const GridParams& gp)
{
    check_grid(gp);
    if (!(r > 0.0) || !(D >= 0.0) || !(dt > 0.0))
        throw InputError("invalid angular problem");
    AngularPropagator prop;
    prop.r_ = r;
    prop.D_ = D;
    prop.dt_ = dt;

    const double Dth = D / (r * r);
    const double hi = std::min(kPi, gp.reach * std::sqrt(2.0 * Dth * dt));
    const int n = gp.radial_cells;
    prop.faces_.resize(n + 1);
    for (int i = 0; i <= n; ++i)
        prop.faces_[i] = hi * i / n;
    const auto& f = prop.faces_;

    std::vector<double> mass(n, 0.0);
    mass[0] = 1.0;
    if (!(hi > 0.0)) {
        prop.faces_ = {0.0, 0.0};
        prop.cdf_ = {0.0, 1.0};
        return prop;
    }
    std::vector<double> V(n);
    for (int i = 0; i < n; ++i)
        V[i] = std::cos(f[i]) - std::cos(f[i + 1]);
    Operator op{std::vector<double>(n, 0.0), std::vector<double>(n, 0.0), std::vector<double>(n, 0.0)};
    for (int i = 0; i + 1 < n; ++i) {
        const double cf = Dth * std::sin(f[i + 1]) / (0.5 * (f[i + 2] - f[i]));
        op.di[i] -= cf;
        op.di[i + 1] -= cf;
        op.up[i] = cf;
        op.lo[i + 1] = cf;
    }
    FvResult res = integrate(V, op, 0.0, mass, dt, gp.time_steps, false);
    if (std::abs(res.survival.back() - 1.0) > 1e-6)
        throw SolverError("angular solve lost probability");
    prop.cdf_ = to_cdf(res.masses.back(), 1.0);
    return prop;
}

std::vector<double> AngularPropagator::pdf() const
{
    std::vector<double> d(faces_.size() - 1);
    for (std::size_t i = 0; i < d.size(); ++i)
        d[i] = (cdf_[i + 1] - cdf_[i]) / (faces_[i + 1] - faces_[i]);
    return d;
}

double AngularPropagator::sample_theta(double u) const
{
    return invert_cdf(faces_, cdf_, u * cdf_.back());
}

Vec3 sample_free_displacement(double D, double dt, Rng& rng)
{
    if (D <= 0.0 || dt <= 0.0)
        return Vec3::Zero();
    return rng.normal3(std::sqrt(2.0 * D * dt));
}

std::vector<double> sample_free_displacement(double D, double dt, int dim, Rng& rng)
{
    std::vector<double> v(std::size_t(dim), 0.0);
    if (D <= 0.0 || dt <= 0.0)
        return v;
    const double sd = std::sqrt(2.0 * D * dt);
    for (double& x : v)
        x = rng.normal(sd);
    return v;
}

double wrap_angle(double a)
{
    a = std::remainder(a, 2.0 * kPi);
    return a <= -kPi ? a + 2.0 * kPi : a;
}

ThetaZ sample_theta_z(double D, double r, double dt, Rng& rng)
{
    if (D <= 0.0 || dt <= 0.0)
        return {};
    const double sd = std::sqrt(2.0 * D * dt);
    const double th = rng.normal(sd / r);
    const double z = rng.normal(sd);
    return {wrap_angle(th), z};
}

PropagatorCache::PropagatorCache(GridParams grid, std::size_t capacity, double r0_bucket)
    : grid_(grid), capacity_(capacity), r0_bucket_(r0_bucket)
{
}

std::shared_ptr<const RadialPropagator> PropagatorCache::radial(const RadiationProblem& p)
{
    RadiationProblem q = p;
    if (r0_bucket_ > 0.0) {
        const double w = r0_bucket_ * std::sqrt(2.0 * p.D * p.dt);
        q.r0 = std::min(p.r_outer, std::max(p.sigma, p.sigma + std::round((p.r0 - p.sigma) / w) * w));
    }
    if (capacity_ == 0) {
        ++misses_;
        return std::make_shared<const RadialPropagator>(solve_radiation_pde(q, grid_));
    }
    const Key key{int(q.geometry), q.D, q.sigma, q.k_r, q.dt, q.r0, q.r_outer};
    if (auto it = radial_.find(key); it != radial_.end()) {
        ++hits_;
        return it->second;
    }
    ++misses_;
    if (radial_.size() >= capacity_)
        radial_.clear();
    auto prop = std::make_shared<const RadialPropagator>(solve_radiation_pde(q, grid_));
    radial_.emplace(key, prop);
    return prop;
}

std::shared_ptr<const AngularPropagator> PropagatorCache::angular(double D, double r, double dt)
{
    return std::make_shared<const AngularPropagator>(solve_angular_pde(D, r, dt, grid_));
}

} // namespace curvesim
