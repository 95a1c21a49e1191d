#include "curvesim/diagnostics.hpp"

#include <iostream>
#include <mutex>

namespace curvesim {

namespace {

std::mutex g_mutex;
std::map<std::string, long> g_counts;
int g_echo = 3;

} // namespace

void warn(const std::string& category, const std::string& detail)
{
    std::lock_guard lock(g_mutex);
    const long n = ++g_counts[category];
    if (n <= g_echo)
        std::cerr << "warning: " << category << (detail.empty() ? "" : ": ") << detail << "\n";
}

std::map<std::string, long> warning_counts()
{
    std::lock_guard lock(g_mutex);
    return g_counts;
}

void reset_warnings()
{
    std::lock_guard lock(g_mutex);
    g_counts.clear();
}

void set_warning_echo(int max_per_category)
{
    std::lock_guard lock(g_mutex);
    g_echo = max_per_category;
}

} // namespace curvesim
