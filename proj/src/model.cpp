#include "curvesim/model.hpp"

#include <algorithm>
#include <cmath>

#include "curvesim/error.hpp"

namespace curvesim {

double Transport::per_step(double dt) const
{
    return displacement + coefficient * std::sqrt(std::max(0.0, dt));
}

const char* to_string(RuleKind k)
{
    switch (k) {
    case RuleKind::Bimolecular3D: return "bimolecular3d";
    case RuleKind::BindToCurve: return "bind";
    case RuleKind::UnbindFromCurve: return "unbind";
    case RuleKind::Bimolecular1D: return "bimolecular1d";
    case RuleKind::Unimolecular: return "unimolecular";
    case RuleKind::AbsorbAtSite: return "absorb_at_site";
    }
    return "?";
}

Model::Model(std::vector<Species> species, std::vector<ReactionRule> rules, std::vector<OperatorSite> sites)
    : species_(std::move(species)), rules_(std::move(rules)), sites_(std::move(sites))
{
    const std::size_t n = species_.size();
    pair3d_.assign(n * n, -1);
    pair1d_.assign(n * n, -1);
    bind_.assign(n, {});
    first_order_.assign(n, {});
    site_rules_.assign(n, {});
    first_order_rate_.assign(n, 0.0);
    reactive3d_.assign(n, false);
    reactive1d_.assign(n, false);

    auto check_species = [&](int s) {
        if (s < 0 || std::size_t(s) >= n)
            throw InputError("reaction references unknown species index " + std::to_string(s));
    };
    for (std::size_t r = 0; r < rules_.size(); ++r) {
        const ReactionRule& rule = rules_[r];
        for (int s : rule.reactants)
            check_species(s);
        for (int s : rule.products)
            check_species(s);
        if (!(rule.rate >= 0.0))
            throw InputError("negative reaction rate in rule " + std::to_string(r));
        const int ri = int(r);
        switch (rule.kind) {
        case RuleKind::Bimolecular3D:
        case RuleKind::Bimolecular1D: {
            if (rule.reactants.size() != 2 || rule.products.size() > 1)
                throw InputError("pair reaction needs two reactants and at most one product");
            auto& table = rule.kind == RuleKind::Bimolecular3D ? pair3d_ : pair1d_;
            auto& flag = rule.kind == RuleKind::Bimolecular3D ? reactive3d_ : reactive1d_;
            const int a = rule.reactants[0], b = rule.reactants[1];
            if (table[index(a, b)] >= 0)
                throw InputError("duplicate pair reaction for the same reactants");
            table[index(a, b)] = table[index(b, a)] = ri;
            flag[std::size_t(a)] = flag[std::size_t(b)] = true;
            break;
        }
        case RuleKind::BindToCurve:
            if (rule.reactants.size() != 1 || rule.products.size() != 1)
                throw InputError("binding needs one reactant and one product");
            bind_[std::size_t(rule.reactants[0])].push_back(ri);
            break;
        case RuleKind::UnbindFromCurve:
            if (rule.reactants.size() != 1 || rule.products.size() != 1)
                throw InputError("unbinding needs one reactant and one product");
            [[fallthrough]];
        case RuleKind::Unimolecular:
            if (rule.reactants.size() != 1 || rule.products.size() > 2)
                throw InputError("first-order reaction needs one reactant and at most two products");
            first_order_[std::size_t(rule.reactants[0])].push_back(ri);
            first_order_rate_[std::size_t(rule.reactants[0])] += rule.rate;
            break;
        case RuleKind::AbsorbAtSite:
            if (rule.reactants.size() != 1 || rule.products.size() > 1)
                throw InputError("site absorption needs one reactant and at most one product");
            if (rule.site < 0 || std::size_t(rule.site) >= sites_.size())
                throw InputError("site absorption references an unknown site");
            site_rules_[std::size_t(rule.reactants[0])].push_back(ri);
            break;
        }
    }
}

int Model::species_index(const std::string& name) const
{
    for (std::size_t i = 0; i < species_.size(); ++i)
        if (species_[i].name == name)
            return int(i);
    return -1;
}

double Model::pair_sigma(int rule) const
{
    const ReactionRule& r = rules_[std::size_t(rule)];
    if (r.sigma > 0.0)
        return r.sigma;
    if (r.kind == RuleKind::AbsorbAtSite)
        return species(r.reactants[0]).radius + sites_[std::size_t(r.site)].radius;
    return species(r.reactants[0]).radius + species(r.reactants[1]).radius;
}

std::vector<int> Model::binding_rules(int s, int curve) const
{
    std::vector<int> out;
    for (int r : bind_[std::size_t(s)]) {
        const auto& c = rules_[std::size_t(r)].curves;
        if (c.empty() || std::find(c.begin(), c.end(), curve) != c.end())
            out.push_back(r);
    }
    return out;
}

bool Model::can_bind(int s, int curve) const
{
    for (int r : bind_[std::size_t(s)]) {
        const auto& c = rules_[std::size_t(r)].curves;
        if (c.empty() || std::find(c.begin(), c.end(), curve) != c.end())
            return true;
    }
    return false;
}

double Model::binding_sigma(int s, int curve, double curve_radius) const
{
    for (int r : binding_rules(s, curve))
        if (rules_[std::size_t(r)].sigma > 0.0)
            return rules_[std::size_t(r)].sigma;
    return curve_radius;
}

double Model::binding_rate(int s, int curve) const
{
    double k = 0.0;
    for (int r : binding_rules(s, curve))
        k += rules_[std::size_t(r)].rate;
    return k;
}

} // namespace curvesim
