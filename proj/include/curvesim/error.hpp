#pragma once

#include <stdexcept>
#include <string>

namespace curvesim {

// Malformed scenario, bad parameters or out-of-range queries.
class InputError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// Numerical failure inside a propagator solve.
class SolverError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Undefined statistic (e.g. correlation of a constant series).
class StatisticsError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

} // namespace curvesim
