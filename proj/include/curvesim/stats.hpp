#pragma once

#include <functional>
#include <string>
#include <vector>

#include "curvesim/error.hpp"
#include "curvesim/rng.hpp"

namespace curvesim {

struct MeanSE {
    double mean = 0.0;
    double se = 0.0;
    double sd = 0.0;
    std::size_t n = 0;
};

MeanSE mean_se(const std::vector<double>& x);
MeanSE mean_se_binary(std::size_t successes, std::size_t n);

// |a - b| in units of the joint standard error; inf when both SE vanish and
// the means differ, 0 when they agree exactly.
double joint_z(const MeanSE& a, const MeanSE& b);

struct TestResult {
    double statistic = 0.0;
    double p_value = 1.0;
    double dof = 0.0;
};

// Kolmogorov limiting distribution with the small-sample correction
// lambda = (sqrt(n) + 0.12 + 0.11 / sqrt(n)) D.
double ks_p_value(double D, double n_effective);
TestResult ks_one_sample(std::vector<double> x, const std::function<double(double)>& cdf);
TestResult ks_two_sample(std::vector<double> a, std::vector<double> b);

// Pearson chi-square goodness of fit. Bins with expected count below
// min_expected are pooled with their neighbour.
TestResult chi_square_gof(const std::vector<double>& observed, const std::vector<double>& expected,
                          int fitted_parameters = 0, double min_expected = 5.0);

// Homogeneity of two histograms over the same bins (unequal totals allowed).
// Bins empty in both are dropped.
TestResult chi_square_two_sample(const std::vector<double>& a, const std::vector<double>& b);

// Counts per bin; edges are ascending, values outside are dropped.
std::vector<double> histogram(const std::vector<double>& x, const std::vector<double>& edges);
std::vector<double> linspace(double lo, double hi, std::size_t n);
// Edges of n shells of equal volume in a ball of radius R.
std::vector<double> equal_volume_radial_edges(double R, std::size_t n);

// Throws StatisticsError when either series has zero variance.
double pearson(const std::vector<double>& x, const std::vector<double>& y);

struct Interval {
    double lo = 0.0;
    double hi = 0.0;
    bool contains(double v) const { return lo <= v && v <= hi; }
};

// Moving-block bootstrap percentile interval for the Pearson coefficient of
// a (possibly autocorrelated) paired series.
Interval bootstrap_pearson_ci(const std::vector<double>& x, const std::vector<double>& y, std::size_t block,
                              std::size_t resamples, double level, Rng& rng);

// Percentile of sorted-on-copy data with linear interpolation.
double quantile(std::vector<double> x, double q);

} // namespace curvesim
