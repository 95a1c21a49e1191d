#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace curvesim {

struct CheckResult {
    std::string id;
    std::string title;
    bool pass = false;
    std::string detail;
    double seconds = 0.0;
    std::vector<CheckResult> parts;
};

struct CheckOptions {
    std::string scenario_dir = "scenarios";
    unsigned workers = 1;
    std::uint64_t seed = 0;  // 0: the scenario's own seed
    std::ostream* log = nullptr;  // progress lines, may be null
};

CheckResult check_ac1(const CheckOptions& opt);  // cylinder: microscopic vs calibrated SSA
CheckResult check_ac2(const CheckOptions& opt);  // road blocks: T_active vs spacing
CheckResult check_ac3(const CheckOptions& opt);  // active transport: radial shift
CheckResult check_ac4(const CheckOptions& opt);  // growth: bound count vs length correlation
CheckResult check_ac5(const CheckOptions& opt);  // propagator suite
CheckResult check_ac6(const CheckOptions& opt);  // geometry / engine suite
CheckResult check_ac7(const CheckOptions& opt);  // spirals: conservation and C_cyl formation

// ids "AC-1" ... "AC-7"; throws std::invalid_argument for anything else.
CheckResult run_check(const std::string& id, const CheckOptions& opt);
std::vector<std::string> check_ids();

// "PASS AC-1 title (12.3 s): detail", followed by one indented line per part.
std::string format_check(const CheckResult& r);

} // namespace curvesim
