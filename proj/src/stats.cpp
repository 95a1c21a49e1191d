#include "curvesim/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <boost/math/distributions/chi_squared.hpp>

namespace curvesim {

MeanSE mean_se(const std::vector<double>& x)
{
    MeanSE r;
    r.n = x.size();
    if (x.empty())
        return r;
    double s = 0.0;
    for (double v : x)
        s += v;
    r.mean = s / double(r.n);
    if (r.n < 2)
        return r;
    double ss = 0.0;
    for (double v : x)
        ss += (v - r.mean) * (v - r.mean);
    r.sd = std::sqrt(ss / double(r.n - 1));
    r.se = r.sd / std::sqrt(double(r.n));
    return r;
}

MeanSE mean_se_binary(std::size_t successes, std::size_t n)
{
    MeanSE r;
    r.n = n;
    if (n == 0)
        return r;
    r.mean = double(successes) / double(n);
    r.sd = std::sqrt(r.mean * (1.0 - r.mean));
    r.se = std::sqrt(r.mean * (1.0 - r.mean) / double(n));
    return r;
}

double joint_z(const MeanSE& a, const MeanSE& b)
{
    const double d = std::abs(a.mean - b.mean);
    const double se = std::sqrt(a.se * a.se + b.se * b.se);
    if (se > 0.0)
        return d / se;
    return d == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
}

double ks_p_value(double D, double n)
{
    if (n <= 0.0)
        return 1.0;
    const double sn = std::sqrt(n);
    const double lambda = (sn + 0.12 + 0.11 / sn) * D;
    if (lambda < 1e-3)
        return 1.0;
    double q = 0.0;
    for (int j = 1; j <= 100; ++j) {
        const double term = 2.0 * ((j % 2) ? 1.0 : -1.0) * std::exp(-2.0 * j * j * lambda * lambda);
        q += term;
        if (std::abs(term) < 1e-12 * std::abs(q))
            break;
    }
    return std::clamp(q, 0.0, 1.0);
}

TestResult ks_one_sample(std::vector<double> x, const std::function<double(double)>& cdf)
{
    if (x.empty())
        throw StatisticsError("KS test on an empty sample");
    std::sort(x.begin(), x.end());
    const double n = double(x.size());
    double D = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double F = cdf(x[i]);
        D = std::max({D, double(i + 1) / n - F, F - double(i) / n});
    }
    return {D, ks_p_value(D, n), 0.0};
}

TestResult ks_two_sample(std::vector<double> a, std::vector<double> b)
{
    if (a.empty() || b.empty())
        throw StatisticsError("KS test on an empty sample");
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    const double na = double(a.size()), nb = double(b.size());
    std::size_t i = 0, j = 0;
    double D = 0.0;
    while (i < a.size() && j < b.size()) {
        const double v = std::min(a[i], b[j]);
        while (i < a.size() && a[i] <= v)
            ++i;
        while (j < b.size() && b[j] <= v)
            ++j;
        D = std::max(D, std::abs(double(i) / na - double(j) / nb));
    }
    return {D, ks_p_value(D, na * nb / (na + nb)), 0.0};
}

TestResult chi_square_gof(const std::vector<double>& observed, const std::vector<double>& expected,
                          int fitted_parameters, double min_expected)
{
    if (observed.size() != expected.size() || observed.empty())
        throw StatisticsError("chi-square: observed and expected differ in length");
    std::vector<double> o, e;
    double acc_o = 0.0, acc_e = 0.0;
    for (std::size_t i = 0; i < observed.size(); ++i) {
        acc_o += observed[i];
        acc_e += expected[i];
        if (acc_e >= min_expected) {
            o.push_back(acc_o);
            e.push_back(acc_e);
            acc_o = acc_e = 0.0;
        }
    }
    if (acc_e > 0.0 || acc_o > 0.0) {
        if (e.empty()) {
            o.push_back(acc_o);
            e.push_back(acc_e);
        } else {
            o.back() += acc_o;
            e.back() += acc_e;
        }
    }
    const int dof = int(o.size()) - 1 - fitted_parameters;
    if (dof < 1)
        throw StatisticsError("chi-square: too few bins after pooling");
    double stat = 0.0;
    for (std::size_t i = 0; i < o.size(); ++i) {
        if (!(e[i] > 0.0))
            throw StatisticsError("chi-square: non-positive expected count");
        stat += (o[i] - e[i]) * (o[i] - e[i]) / e[i];
    }
    const boost::math::chi_squared dist(dof);
    return {stat, boost::math::cdf(boost::math::complement(dist, stat)), double(dof)};
}

TestResult chi_square_two_sample(const std::vector<double>& a, const std::vector<double>& b)
{
    if (a.size() != b.size() || a.empty())
        throw StatisticsError("chi-square: histograms differ in length");
    double na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i)
        na += a[i], nb += b[i];
    if (!(na > 0.0) || !(nb > 0.0))
        throw StatisticsError("chi-square: empty histogram");
    const double ka = std::sqrt(nb / na), kb = std::sqrt(na / nb);
    double stat = 0.0;
    int bins = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (a[i] + b[i] <= 0.0)
            continue;
        const double d = ka * a[i] - kb * b[i];
        stat += d * d / (a[i] + b[i]);
        ++bins;
    }
    const int dof = bins - 1;
    if (dof < 1)
        throw StatisticsError("chi-square: too few non-empty bins");
    const boost::math::chi_squared dist(dof);
    return {stat, boost::math::cdf(boost::math::complement(dist, stat)), double(dof)};
}

std::vector<double> histogram(const std::vector<double>& x, const std::vector<double>& edges)
{
    if (edges.size() < 2)
        throw StatisticsError("histogram needs at least two edges");
    std::vector<double> h(edges.size() - 1, 0.0);
    for (double v : x) {
        if (v < edges.front() || v > edges.back())
            continue;
        auto it = std::upper_bound(edges.begin(), edges.end(), v);
        std::size_t k = std::size_t(it - edges.begin());
        k = std::min(k, edges.size() - 1);
        h[k - 1] += 1.0;
    }
    return h;
}

std::vector<double> linspace(double lo, double hi, std::size_t n)
{
    std::vector<double> v(n);
    for (std::size_t i = 0; i < n; ++i)
        v[i] = n == 1 ? lo : lo + (hi - lo) * double(i) / double(n - 1);
    return v;
}

std::vector<double> equal_volume_radial_edges(double R, std::size_t n)
{
    std::vector<double> e(n + 1);
    for (std::size_t k = 0; k <= n; ++k)
        e[k] = R * std::cbrt(double(k) / double(n));
    return e;
}

double pearson(const std::vector<double>& x, const std::vector<double>& y)
{
    if (x.size() != y.size() || x.size() < 2)
        throw StatisticsError("Pearson correlation needs two paired series of length >= 2");
    const MeanSE mx = mean_se(x), my = mean_se(y);
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (x[i] - mx.mean) * (y[i] - my.mean);
        sxx += (x[i] - mx.mean) * (x[i] - mx.mean);
        syy += (y[i] - my.mean) * (y[i] - my.mean);
    }
    if (!(sxx > 0.0) || !(syy > 0.0))
        throw StatisticsError("Pearson correlation undefined: a series has zero variance");
    return sxy / std::sqrt(sxx * syy);
}

double quantile(std::vector<double> x, double q)
{
    if (x.empty())
        throw StatisticsError("quantile of an empty sample");
    std::sort(x.begin(), x.end());
    const double pos = std::clamp(q, 0.0, 1.0) * double(x.size() - 1);
    const std::size_t k = std::size_t(pos);
    if (k + 1 >= x.size())
        return x.back();
    const double w = pos - double(k);
    return (1.0 - w) * x[k] + w * x[k + 1];
}

Interval bootstrap_pearson_ci(const std::vector<double>& x, const std::vector<double>& y, std::size_t block,
                              std::size_t resamples, double level, Rng& rng)
{
    const std::size_t n = x.size();
    if (n != y.size() || n < 4)
        throw StatisticsError("bootstrap needs paired series of length >= 4");
    block = std::clamp<std::size_t>(block, 1, n);
    const std::size_t starts = n - block + 1;
    std::vector<double> rs;
    rs.reserve(resamples);
    std::vector<double> bx(n), by(n);
    for (std::size_t b = 0; b < resamples; ++b) {
        std::size_t k = 0;
        while (k < n) {
            const std::size_t s = std::size_t(rng.below(starts));
            for (std::size_t j = 0; j < block && k < n; ++j, ++k) {
                bx[k] = x[s + j];
                by[k] = y[s + j];
            }
        }
        try {
            rs.push_back(pearson(bx, by));
        } catch (const StatisticsError&) {
            // degenerate resample (constant block); skipped
        }
    }
    if (rs.size() < resamples / 2)
        throw StatisticsError("bootstrap: too many degenerate resamples");
    const double a = 0.5 * (1.0 - level);
    return {quantile(rs, a), quantile(rs, 1.0 - a)};
}

} // namespace curvesim
