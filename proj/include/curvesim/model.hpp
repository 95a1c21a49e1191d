#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "curvesim/vec.hpp"

namespace curvesim {

// Deterministic motion of bound molecules toward the curve point nearest
// `target`. The per-step displacement is `displacement + coefficient * sqrt(dt)`.
struct Transport {
    double displacement = 0.0;  // m per step
    double coefficient = 0.0;   // m / sqrt(s)
    double step_time = 0.0;     // upper bound on the step length, 0 = none
    Vec3 target = Vec3::Zero();

    double per_step(double dt) const;
};

struct Species {
    std::string name;
    double D_free = 0.0;
    double D_bound = 0.0;
    double radius = 0.0;
    std::optional<Transport> transport;
};

enum class RuleKind { Bimolecular3D, BindToCurve, UnbindFromCurve, Bimolecular1D, Unimolecular, AbsorbAtSite };

const char* to_string(RuleKind k);

// Rates: k_r for contact reactions (m^3/s, m^2/s or m/s), k_d (1/s) for
// first-order ones. sigma = 0 means "derive from radii" (pairs) or "use the
// curve's reaction radius" (binding).
struct ReactionRule {
    RuleKind kind = RuleKind::Unimolecular;
    std::vector<int> reactants;
    std::vector<int> products;
    double rate = 0.0;
    double sigma = 0.0;
    std::vector<int> curves;  // BindToCurve: allowed curve ids, empty = all
    int site = -1;            // AbsorbAtSite: site index
};

struct OperatorSite {
    std::string name;
    int curve = 0;
    double s = 0.0;
    double radius = 0.0;
};

struct RoadBlock {
    int curve = 0;
    double s = 0.0;
    double radius = 0.0;
};

// Species and rules with the lookup tables the engine needs.
class Model {
public:
    Model() = default;
    Model(std::vector<Species> species, std::vector<ReactionRule> rules, std::vector<OperatorSite> sites = {});

    const std::vector<Species>& species() const { return species_; }
    const Species& species(int i) const { return species_[std::size_t(i)]; }
    const std::vector<ReactionRule>& rules() const { return rules_; }
    const ReactionRule& rule(int i) const { return rules_[std::size_t(i)]; }
    const std::vector<OperatorSite>& sites() const { return sites_; }
    int species_index(const std::string& name) const;

    // Rule index or -1.
    int bimolecular_3d(int a, int b) const { return pair3d_[index(a, b)]; }
    int bimolecular_1d(int a, int b) const { return pair1d_[index(a, b)]; }
    // Contact radius of a pair rule.
    double pair_sigma(int rule) const;
    // Binding rules for a free species on a curve; empty if none.
    std::vector<int> binding_rules(int species, int curve) const;
    bool can_bind(int species, int curve) const;
    // Contact radius for binding to a curve whose own reaction radius is
    // curve_radius.
    double binding_sigma(int species, int curve, double curve_radius) const;
    // Total intrinsic binding rate of a species to a curve.
    double binding_rate(int species, int curve) const;
    bool can_bind_any(int species) const { return !bind_[std::size_t(species)].empty(); }
    bool reactive_3d(int species) const { return reactive3d_[std::size_t(species)]; }
    bool reactive_1d(int species) const { return reactive1d_[std::size_t(species)]; }
    // First-order channels (unbinding and unimolecular) for a species.
    const std::vector<int>& first_order(int species) const { return first_order_[std::size_t(species)]; }
    double first_order_rate(int species) const { return first_order_rate_[std::size_t(species)]; }
    // AbsorbAtSite rules with this reactant.
    const std::vector<int>& site_rules(int species) const { return site_rules_[std::size_t(species)]; }

private:
    std::size_t index(int a, int b) const { return std::size_t(a) * species_.size() + std::size_t(b); }

    std::vector<Species> species_;
    std::vector<ReactionRule> rules_;
    std::vector<OperatorSite> sites_;
    std::vector<int> pair3d_, pair1d_;
    std::vector<std::vector<int>> bind_, first_order_, site_rules_;
    std::vector<double> first_order_rate_;
    std::vector<bool> reactive3d_, reactive1d_;
};

} // namespace curvesim
