#pragma once

#include <map>
#include <string>

namespace curvesim {

// Counts recoverable anomalies (clamped reflections, out-of-range arclengths)
// by category. The first few of each category are also printed to stderr.
void warn(const std::string& category, const std::string& detail = {});
std::map<std::string, long> warning_counts();
void reset_warnings();
void set_warning_echo(int max_per_category);

} // namespace curvesim
