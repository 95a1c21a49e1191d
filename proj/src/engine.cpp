#include "curvesim/engine.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

#include <Eigen/Geometry>

#include "curvesim/error.hpp"
#include "curvesim/line_dynamics.hpp"

namespace curvesim {

void EngineConfig::validate() const
{
    if (!(K >= 1.0))
        throw InputError("engine.K must be >= 1");
    if (!(dt_min > 0.0) || !(dt_min <= dt_split))
        throw InputError("engine.dt_min must satisfy 0 < dt_min <= dt_split");
    if (!(pair_distance_factor > 0.0))
        throw InputError("engine.pair_distance_factor must be positive");
    if (!(reach >= 1.0))
        throw InputError("engine.reach must be >= 1");
    if (dt_ladder < 0)
        throw InputError("engine.dt_ladder must be >= 0");
    if (max_epochs < 1)
        throw InputError("engine.max_epochs must be >= 1");
}

const char* to_string(EventKind k)
{
    switch (k) {
    case EventKind::Bind: return "bind";
    case EventKind::Unbind: return "unbind";
    case EventKind::Bimolecular3D: return "bimolecular3d";
    case EventKind::Bimolecular1D: return "bimolecular1d";
    case EventKind::Unimolecular: return "unimolecular";
    case EventKind::SiteAbsorb: return "site_absorb";
    }
    return "?";
}

PairFrame PairFrame::from_positions(const Vec3& x1, const Vec3& x2, double D1, double D2)
{
    PairFrame f;
    f.D1 = D1;
    f.D2 = D2;
    f.y = x2 - x1;
    f.Y = f.w2() * x1 + f.w1() * x2;
    return f;
}

namespace {

double clearance_dt(double gap, double D, double K)
{
    if (!(D > 0.0))
        return kNever;
    return gap > 0.0 ? gap * gap / (K * 6.0 * D) : 0.0;
}

struct CurveHit {
    int curve = -1;
    ClosestPoint cp;
    double sigma = 0.0;
};

CurveHit nearest_bindable(const SimulationState& st, const Model& model, int species, const Vec3& x)
{
    CurveHit h;
    double best = kNever;
    if (!model.can_bind_any(species))
        return h;
    for (std::size_t c = 0; c < st.curves.size(); ++c) {
        if (!model.can_bind(species, int(c)))
            continue;
        const ClosestPoint cp = st.curves[c].closest_point(x);
        if (cp.distance < best) {
            best = cp.distance;
            h.curve = int(c);
            h.cp = cp;
            h.sigma = model.binding_sigma(species, int(c), st.curves[c].reaction_radius());
        }
    }
    return h;
}

// Smallest surface gap from x to any bindable segment other than (c0, k0).
double other_segment_gap(const SimulationState& st, const Model& model, int species, const Vec3& x, int c0,
                         std::size_t k0)
{
    double gap = kNever;
    for (std::size_t c = 0; c < st.curves.size(); ++c) {
        if (!model.can_bind(species, int(c)))
            continue;
        const PolylineCurve& curve = st.curves[c];
        const double sigma = model.binding_sigma(species, int(c), curve.reaction_radius());
        for (std::size_t k = 0; k < curve.segment_count(); ++k) {
            if (int(c) == c0 && k == k0)
                continue;
            gap = std::min(gap, distance_to_segment(curve.segment(k), x) - sigma);
        }
    }
    return gap;
}

bool transported(const Model& model, const Molecule& m)
{
    return model.species(m.species).transport.has_value();
}

// Orthonormal pair spanning the plane orthogonal to unit vector n.
std::pair<Vec3, Vec3> orthonormal_basis(const Vec3& n)
{
    const Vec3 a = std::abs(n.x()) < 0.9 ? Vec3::UnitX() : Vec3::UnitY();
    const Vec3 e1 = (a - a.dot(n) * n).normalized();
    return {e1, n.cross(e1)};
}

} // namespace

double choose_time_step(const std::vector<double>& clearances, double D, double remaining, const EngineConfig& cfg)
{
    double dt = remaining;
    for (double c : clearances)
        dt = std::min(dt, clearance_dt(c, D, cfg.K));
    return std::max(dt, std::min(cfg.dt_min, remaining));
}

Decomposition pair_decomposition(const SimulationState& st, const Model& model, const EngineConfig& cfg,
                                 const std::vector<char>* active)
{
    Decomposition dec;
    const auto& mol = st.molecules;
    const std::size_t n = mol.size();
    std::vector<std::size_t> nn(n, n);
    std::vector<double> dnn(n, kNever);
    auto closer = [&](std::size_t i, double d, std::size_t j) {
        return d < dnn[i] || (d == dnn[i] && nn[i] < n && mol[j].id < mol[nn[i]].id);
    };

    auto on = [&](std::size_t i) { return mol[i].alive && (!active || (*active)[i]); };

    for (std::size_t i = 0; i < n; ++i) {
        const Molecule& a = mol[i];
        if (!on(i))
            continue;
        for (std::size_t j = 0; j < n; ++j) {
            const Molecule& b = mol[j];
            if (j == i || !on(j) || a.bound != b.bound)
                continue;
            double d;
            if (!a.bound) {
                if (model.bimolecular_3d(a.species, b.species) < 0)
                    continue;
                d = (a.x - b.x).norm();
            } else {
                if (a.curve != b.curve || model.bimolecular_1d(a.species, b.species) < 0 ||
                    transported(model, a) || transported(model, b))
                    continue;
                const PolylineCurve& curve = st.curves[std::size_t(a.curve)];
                if (!cfg.cross_segment_pairs && curve.segment_at(a.s) != curve.segment_at(b.s))
                    continue;
                d = std::abs(a.s - b.s);
            }
            if (closer(i, d, j)) {
                dnn[i] = d;
                nn[i] = j;
            }
        }
    }

    std::vector<char> near(n, 0);
    for (std::size_t i = 0; i < n; ++i) {
        const Molecule& m = mol[i];
        if (!on(i) || m.bound)
            continue;
        const CurveHit h = nearest_bindable(st, model, m.species, m.x);
        if (h.curve < 0)
            continue;
        const double thr = cfg.pair_distance_factor * std::sqrt(6.0 * model.species(m.species).D_free * cfg.dt_split);
        near[i] = h.cp.distance < thr && h.cp.distance < dnn[i];
    }

    std::vector<char> used(n, 0);
    for (std::size_t i = 0; i < n; ++i) {
        if (!on(i) || used[i] || near[i])
            continue;
        const std::size_t j = nn[i];
        if (j < n && nn[j] == i && !near[j] && !used[j]) {
            used[i] = used[j] = 1;
            (mol[i].bound ? dec.on_curve_pairs : dec.pairs).emplace_back(i, j);
        }
    }
    for (std::size_t i = 0; i < n; ++i) {
        if (!on(i) || used[i])
            continue;
        if (mol[i].bound)
            dec.on_curve_singles.push_back(i);
        else if (near[i])
            dec.near_curve.push_back(i);
        else
            dec.singles.push_back(i);
    }
    return dec;
}

Engine::Engine(const Model& model, EngineConfig cfg)
    : model_(model), cfg_(cfg), cache_(cfg.grid, cfg.cache_capacity, cfg.r0_bucket)
{
    cfg_.validate();
}

std::vector<Event> Engine::take_events()
{
    std::vector<Event> out;
    out.swap(events_);
    return out;
}

void Engine::schedule(SimulationState& st, std::size_t i, double now)
{
    Molecule& m = st.molecules[i];
    const double rate = model_.first_order_rate(m.species);
    m.event_time = rate > 0.0 ? now + st.rng.exponential(rate) : kNever;
}

void Engine::schedule_all(SimulationState& st)
{
    for (std::size_t i = 0; i < st.molecules.size(); ++i)
        schedule(st, i, st.time);
}

std::size_t Engine::add_molecule(SimulationState& st, int species, bool bound, const Vec3& x, int curve, double s,
                                 double now, std::uint64_t id)
{
    Molecule m;
    m.id = id == kNoId ? st.next_id++ : id;
    m.species = species;
    m.bound = bound;
    m.x = x;
    m.curve = bound ? curve : -1;
    m.s = s;
    st.molecules.push_back(m);
    schedule(st, st.molecules.size() - 1, now);
    return st.molecules.size() - 1;
}

int Engine::pick_channel(SimulationState& st, const std::vector<int>& rules)
{
    if (rules.size() == 1)
        return rules.front();
    double total = 0.0;
    for (int r : rules)
        total += model_.rule(r).rate;
    double u = st.rng.uniform() * total;
    for (int r : rules) {
        u -= model_.rule(r).rate;
        if (u <= 0.0)
            return r;
    }
    return rules.back();
}

void Engine::move_free(SimulationState& st, std::size_t i, const Vec3& x_new)
{
    Molecule& m = st.molecules[i];
    Vec3 x = x_new;
    if (st.mesh && !st.mesh->contains(x))
        st.mesh->reflect(m.x, x);
    m.x = x;
}

void Engine::move_on_curve(SimulationState& st, std::size_t i, double move)
{
    Molecule& m = st.molecules[i];
    const PolylineCurve& curve = st.curves[std::size_t(m.curve)];
    const double radius = model_.species(m.species).radius;
    move = enforce_road_blocks(m.curve, m.s, move, radius, st.road_blocks);
    if (move == 0.0)
        return;
    // Step along the current segment, then project back onto the polyline.
    const Vec3 x = curve.point_at(m.s) + move * curve.tangent_at(m.s);
    const double naive = std::clamp(m.s + move, 0.0, curve.length());
    double s_new = curve.closest_point(x).s;
    if (std::abs(s_new - m.s) > std::abs(move) * (1.0 + 1e-9) + 1e-15)
        s_new = naive;
    bool blocked = false;
    for (const auto& b : st.road_blocks)
        blocked = blocked || b.curve == m.curve;
    if (blocked) {
        const auto [lo, hi] = free_interval(st, m.curve, m.s, radius);
        if (lo <= hi)
            s_new = std::clamp(s_new, lo, hi);
    }
    m.s = std::clamp(s_new, 0.0, curve.length());
}

void Engine::bind(SimulationState& st, std::size_t i, int curve, double s, double now)
{
    Molecule& m = st.molecules[i];
    const int r = pick_channel(st, model_.binding_rules(m.species, curve));
    const ReactionRule& rule = model_.rule(r);
    Event ev;
    ev.time = now;
    ev.kind = EventKind::Bind;
    ev.rule = r;
    ev.reactant_a = m.id;
    ev.products = {m.id};
    ev.species = rule.products[0];
    ev.curve = curve;
    ev.s = s;
    m.species = rule.products[0];
    m.bound = true;
    m.curve = curve;
    m.s = s;
    ev.x = st.curves[std::size_t(curve)].point_at(s);
    schedule(st, i, now);
    events_.push_back(std::move(ev));
}

StepResult Engine::propagate_free(SimulationState& st, std::size_t i, double dt, double /*now*/)
{
    const double D = model_.species(st.molecules[i].species).D_free;
    ++stats_.free_steps;
    if (D > 0.0)
        move_free(st, i, st.molecules[i].x + st.rng.normal3(std::sqrt(2.0 * D * dt)));
    return {dt, false};
}

StepResult Engine::propagate_near_curve(SimulationState& st, std::size_t i, int curve, std::size_t segment, double dt,
                                        double now)
{
    const Molecule m = st.molecules[i];
    const double D = model_.species(m.species).D_free;
    const PolylineCurve& c = st.curves[std::size_t(curve)];
    const Segment seg = c.segment(segment);
    const CylindricalFrame frame = cylindrical_frame(seg);
    const CylindricalCoords cc = frame.to_local(m.x);
    const double sigma = model_.binding_sigma(m.species, curve, c.reaction_radius());
    const double k = model_.binding_rate(m.species, curve);

    RadiationProblem p;
    p.geometry = Geometry::Radial2D;
    p.D = D;
    p.sigma = sigma;
    p.k_r = k;
    p.r0 = std::max(cc.r, sigma);
    p.dt = dt;
    const auto prop = cache_.radial(p);
    ++stats_.near_curve_solves;

    if (const auto tau = prop->sample_reaction_time(st.rng.uniform())) {
        const double z = cc.z + st.rng.normal(std::sqrt(2.0 * D * *tau));
        const double s = c.segment_start(segment) + std::clamp(z, 0.0, c.segment_length(segment));
        bind(st, i, curve, s, now + *tau);
        return {*tau, true};
    }
    const double r = prop->sample_radius(st.rng.uniform());
    const ThetaZ tz = sample_theta_z(D, r, dt, st.rng);
    move_free(st, i, frame.to_cartesian({r, cc.theta + tz.dtheta, cc.z + tz.dz}));
    return {dt, false};
}

StepResult Engine::propagate_on_curve(SimulationState& st, std::size_t i, double dt, double /*now*/)
{
    const Molecule& m = st.molecules[i];
    const Species& sp = model_.species(m.species);
    ++stats_.on_curve_steps;
    double move = 0.0;
    if (sp.transport) {
        const PolylineCurve& curve = st.curves[std::size_t(m.curve)];
        const double target = curve.closest_point(sp.transport->target).s;
        const double step = sp.transport->per_step(dt);
        move = std::clamp(target - m.s, -step, step);
    } else if (sp.D_bound > 0.0) {
        move = st.rng.normal(std::sqrt(2.0 * sp.D_bound * dt));
    }
    if (move != 0.0)
        move_on_curve(st, i, move);
    return {dt, false};
}

StepResult Engine::propagate_site(SimulationState& st, std::size_t i, int rule_index, double dt, double now)
{
    const Molecule m = st.molecules[i];
    const ReactionRule& rule = model_.rule(rule_index);
    const OperatorSite& site = model_.sites()[std::size_t(rule.site)];
    const PolylineCurve& curve = st.curves[std::size_t(m.curve)];
    const double sigma = model_.pair_sigma(rule_index);
    const double radius = model_.species(m.species).radius;
    const double d = m.s - site.s;
    const double side = d >= 0.0 ? 1.0 : -1.0;

    // The nearest road block or curve end on the molecule's side reflects.
    double wall = side > 0.0 ? curve.length() - site.s : site.s;
    for (const auto& b : st.road_blocks) {
        if (b.curve != m.curve || (b.s - site.s) * side <= 0.0)
            continue;
        wall = std::min(wall, std::abs(b.s - site.s) - b.radius - radius);
    }

    RadiationProblem p;
    p.geometry = Geometry::HalfLine1D;
    p.D = model_.species(m.species).D_bound;
    p.sigma = sigma;
    p.k_r = rule.rate;
    p.r0 = std::max(std::abs(d), sigma);
    p.dt = dt;
    if (wall > sigma * (1.0 + 1e-9)) {
        p.r_outer = std::max(wall, p.r0);
    }
    const auto prop = cache_.radial(p);
    ++stats_.site_solves;

    if (const auto tau = prop->sample_reaction_time(st.rng.uniform())) {
        Event ev;
        ev.time = now + *tau;
        ev.kind = EventKind::SiteAbsorb;
        ev.rule = rule_index;
        ev.reactant_a = m.id;
        ev.curve = m.curve;
        ev.s = site.s;
        ev.x = curve.point_at(site.s);
        ev.species = m.species;
        st.molecules[i].alive = false;
        st.site_active[std::size_t(rule.site)] = false;
        last_products_.clear();
        if (!rule.products.empty()) {
            const std::size_t k =
                add_molecule(st, rule.products[0], true, Vec3::Zero(), m.curve, site.s, ev.time, kNoId);
            ev.products = {st.molecules[k].id};
            ev.species = rule.products[0];
            last_products_.push_back(k);
        }
        events_.push_back(std::move(ev));
        return {*tau, true};
    }
    const double r = prop->sample_radius(st.rng.uniform());
    move_on_curve(st, i, site.s + side * r - m.s);
    return {dt, false};
}

StepResult Engine::propagate_pair_3d(SimulationState& st, std::size_t i, std::size_t j, double dt, double now)
{
    const Molecule a = st.molecules[i];
    const Molecule b = st.molecules[j];
    const int r_idx = model_.bimolecular_3d(a.species, b.species);
    if (r_idx < 0)
        throw InputError("pair propagation needs a bimolecular rule");
    const ReactionRule& rule = model_.rule(r_idx);
    const PairFrame f =
        PairFrame::from_positions(a.x, b.x, model_.species(a.species).D_free, model_.species(b.species).D_free);
    if (!(f.D() > 0.0))
        return {dt, false};
    const double sigma = model_.pair_sigma(r_idx);
    const double r0 = f.y.norm();

    RadiationProblem p;
    p.geometry = Geometry::Radial3D;
    p.D = f.D();
    p.sigma = sigma;
    p.k_r = rule.rate;
    p.r0 = std::max(r0, sigma);
    p.dt = dt;
    const auto prop = cache_.radial(p);
    ++stats_.pair_solves;

    if (const auto tau = prop->sample_reaction_time(st.rng.uniform())) {
        Vec3 Y = f.Y + st.rng.normal3(std::sqrt(2.0 * f.D_centre() * *tau));
        if (st.mesh && !st.mesh->contains(Y))
            st.mesh->reflect(f.Y, Y);
        Event ev;
        ev.time = now + *tau;
        ev.kind = EventKind::Bimolecular3D;
        ev.rule = r_idx;
        ev.reactant_a = std::min(a.id, b.id);
        ev.reactant_b = std::max(a.id, b.id);
        ev.x = Y;
        ev.species = a.species;
        st.molecules[i].alive = false;
        st.molecules[j].alive = false;
        last_products_.clear();
        if (!rule.products.empty()) {
            const std::size_t k = add_molecule(st, rule.products[0], false, Y, -1, 0.0, ev.time, kNoId);
            ev.products = {st.molecules[k].id};
            ev.species = rule.products[0];
            last_products_.push_back(k);
        }
        events_.push_back(std::move(ev));
        return {*tau, true};
    }

    const double r = prop->sample_radius(st.rng.uniform());
    const auto ang = cache_.angular(f.D(), r, dt);
    const double theta = ang->sample_theta(st.rng.uniform());
    const double phi = 2.0 * kPi * st.rng.uniform();
    const Vec3 n = r0 > 0.0 ? Vec3(f.y / r0) : st.rng.unit_vector();
    const auto [e1, e2] = orthonormal_basis(n);
    const Vec3 dir = std::cos(theta) * n + std::sin(theta) * (std::cos(phi) * e1 + std::sin(phi) * e2);

    PairFrame g = f;
    g.y = r * dir;
    g.Y = f.Y + st.rng.normal3(std::sqrt(2.0 * f.D_centre() * dt));
    move_free(st, i, g.x1());
    move_free(st, j, g.x2());
    return {dt, false};
}

StepResult Engine::propagate_pair_on_curve(SimulationState& st, std::size_t i, std::size_t j, double dt, double now)
{
    if (st.molecules[j].s < st.molecules[i].s ||
        (st.molecules[j].s == st.molecules[i].s && st.molecules[j].id < st.molecules[i].id))
        std::swap(i, j);
    const Molecule a = st.molecules[i];
    const Molecule b = st.molecules[j];
    const int r_idx = model_.bimolecular_1d(a.species, b.species);
    if (r_idx < 0 || a.curve != b.curve)
        throw InputError("on-curve pair propagation needs a 1D rule and a shared curve");
    const ReactionRule& rule = model_.rule(r_idx);
    const double D1 = model_.species(a.species).D_bound;
    const double D2 = model_.species(b.species).D_bound;
    const double D = D1 + D2;
    if (!(D > 0.0))
        return {dt, false};
    const double w1 = D1 / D, w2 = D2 / D;
    const double sigma = model_.pair_sigma(r_idx);
    const double centre = w2 * a.s + w1 * b.s;
    const double Dc = D1 * D2 / D;
    const PolylineCurve& curve = st.curves[std::size_t(a.curve)];

    RadiationProblem p;
    p.geometry = Geometry::HalfLine1D;
    p.D = D;
    p.sigma = sigma;
    p.k_r = rule.rate;
    p.r0 = std::max(b.s - a.s, sigma);
    p.dt = dt;
    const auto prop = cache_.radial(p);
    ++stats_.line_pair_solves;

    if (const auto tau = prop->sample_reaction_time(st.rng.uniform())) {
        double s = centre + st.rng.normal(std::sqrt(2.0 * Dc * *tau));
        s = std::clamp(s, 0.0, curve.length());
        Event ev;
        ev.time = now + *tau;
        ev.kind = EventKind::Bimolecular1D;
        ev.rule = r_idx;
        ev.reactant_a = std::min(a.id, b.id);
        ev.reactant_b = std::max(a.id, b.id);
        ev.curve = a.curve;
        ev.s = s;
        ev.x = curve.point_at(s);
        ev.species = a.species;
        st.molecules[i].alive = false;
        st.molecules[j].alive = false;
        last_products_.clear();
        if (!rule.products.empty()) {
            const std::size_t k = add_molecule(st, rule.products[0], true, Vec3::Zero(), a.curve, s, ev.time, kNoId);
            move_on_curve(st, k, 0.0);
            ev.products = {st.molecules[k].id};
            ev.species = rule.products[0];
            last_products_.push_back(k);
        }
        events_.push_back(std::move(ev));
        return {*tau, true};
    }
    const double r = prop->sample_radius(st.rng.uniform());
    const double c_new = centre + st.rng.normal(std::sqrt(2.0 * Dc * dt));
    move_on_curve(st, i, c_new - w1 * r - a.s);
    move_on_curve(st, j, c_new + w2 * r - b.s);
    return {dt, false};
}

void Engine::fire_first_order(SimulationState& st, std::size_t i)
{
    const Molecule m = st.molecules[i];
    const double t = m.event_time;
    const int r_idx = pick_channel(st, model_.first_order(m.species));
    const ReactionRule& rule = model_.rule(r_idx);
    Event ev;
    ev.time = t;
    ev.rule = r_idx;
    ev.reactant_a = m.id;
    ev.species = m.species;
    ev.curve = m.curve;
    ev.s = m.s;
    ev.x = st.position(m);
    last_products_.clear();

    if (rule.kind == RuleKind::UnbindFromCurve) {
        ev.kind = EventKind::Unbind;
        const PolylineCurve& curve = st.curves[std::size_t(m.curve)];
        const std::size_t k = curve.segment_at(m.s);
        const CylindricalFrame frame = cylindrical_frame(curve.segment(k));
        const int product = rule.products[0];
        const double sigma = model_.binding_sigma(product, m.curve, curve.reaction_radius());
        const double rho = sigma + cfg_.grid.first_cell * sigma;
        const double z = m.s - curve.segment_start(k);
        Vec3 x = Vec3::Zero();
        for (int attempt = 0; attempt < 10; ++attempt) {
            x = frame.to_cartesian({rho, 2.0 * kPi * st.rng.uniform(), z});
            if (!st.mesh || st.mesh->contains(x))
                break;
        }
        if (st.mesh && !st.mesh->contains(x))
            st.mesh->reflect(ev.x, x);
        Molecule& out = st.molecules[i];
        out.bound = false;
        out.curve = -1;
        out.x = x;
        out.species = product;
        schedule(st, i, t);
        ev.products = {m.id};
        ev.species = product;
        ev.x = x;
        last_products_.push_back(i);
        events_.push_back(std::move(ev));
        return;
    }

    ev.kind = EventKind::Unimolecular;
    if (rule.products.empty()) {
        st.molecules[i].alive = false;
        events_.push_back(std::move(ev));
        return;
    }
    st.molecules[i].species = rule.products[0];
    ev.species = rule.products[0];
    ev.products = {m.id};
    last_products_.push_back(i);
    if (rule.products.size() == 1) {
        schedule(st, i, t);
        events_.push_back(std::move(ev));
        return;
    }

    const int pb = rule.products[0], pc = rule.products[1];
    const Species& B = model_.species(pb);
    const Species& C = model_.species(pc);
    double sigma = rule.sigma;
    if (!(sigma > 0.0)) {
        const int link = m.bound ? model_.bimolecular_1d(pb, pc) : model_.bimolecular_3d(pb, pc);
        sigma = link >= 0 ? model_.pair_sigma(link) : B.radius + C.radius;
    }
    const double DB = m.bound ? B.D_bound : B.D_free;
    const double DC = m.bound ? C.D_bound : C.D_free;
    const double wB = DB + DC > 0.0 ? DB / (DB + DC) : 0.5;
    const double wC = 1.0 - wB;
    std::size_t c_idx;
    if (m.bound) {
        const double side = st.rng.uniform() < 0.5 ? -1.0 : 1.0;
        c_idx = add_molecule(st, pc, true, Vec3::Zero(), m.curve, m.s, t, kNoId);
        move_on_curve(st, i, -side * wB * sigma);
        move_on_curve(st, c_idx, side * wC * sigma);
    } else {
        const Vec3 u = st.rng.unit_vector();
        c_idx = add_molecule(st, pc, false, m.x, -1, 0.0, t, kNoId);
        move_free(st, i, m.x - wB * sigma * u);
        move_free(st, c_idx, m.x + wC * sigma * u);
    }
    schedule(st, i, t);
    ev.products.push_back(st.molecules[c_idx].id);
    last_products_.push_back(c_idx);
    events_.push_back(std::move(ev));
}

void Engine::spawn_products(SimulationState& st, const std::vector<std::size_t>& made, double t,
                            std::vector<Group>& spawned)
{
    if (made.size() == 2) {
        const Molecule& a = st.molecules[made[0]];
        const Molecule& b = st.molecules[made[1]];
        bool linked = false;
        if (a.alive && b.alive && a.bound == b.bound) {
            if (!a.bound)
                linked = model_.bimolecular_3d(a.species, b.species) >= 0;
            else {
                const PolylineCurve& curve = st.curves[std::size_t(a.curve)];
                linked = a.curve == b.curve && model_.bimolecular_1d(a.species, b.species) >= 0 &&
                         !transported(model_, a) && !transported(model_, b) &&
                         (cfg_.cross_segment_pairs || curve.segment_at(a.s) == curve.segment_at(b.s));
            }
        }
        if (linked) {
            spawned.push_back({made[0], made[1], t});
            return;
        }
    }
    for (std::size_t k : made)
        if (st.molecules[k].alive)
            spawned.push_back({k, k, t});
}

double Engine::free_single_step(SimulationState& st, std::size_t i, double rem, double now, bool& reacted)
{
    const Molecule& m = st.molecules[i];
    const double D = model_.species(m.species).D_free;
    if (!(D > 0.0))
        return rem;
    const double C = cfg_.reach;
    const CurveHit hit = nearest_bindable(st, model_, m.species, m.x);
    if (hit.curve < 0 || hit.cp.distance - hit.sigma > C * std::sqrt(2.0 * D * rem))
        return propagate_free(st, i, rem, now).advanced;

    const PolylineCurve& curve = st.curves[std::size_t(hit.curve)];
    const Segment seg = curve.segment(hit.cp.segment);
    const double gap = std::max(0.0, hit.cp.distance - hit.sigma);
    const double dt_reach = gap * gap / (C * C * 2.0 * D);
    const double floor = std::min(cfg_.dt_min, rem);
    const double u = project_onto_segment(seg, m.x);
    if (u <= 0.0 || u >= 1.0) {
        // Beyond the segment ends: move freely while the curve stays out of reach.
        return propagate_free(st, i, std::min(rem, std::max(dt_reach, floor)), now).advanced;
    }

    double dt_pde = std::min(rem, clearance_dt(protective_radius(m.x, seg), D, cfg_.K));
    dt_pde = std::min(dt_pde, clearance_dt(other_segment_gap(st, model_, m.species, m.x, hit.curve, hit.cp.segment),
                                           D, cfg_.K));
    if (st.mesh)
        dt_pde = std::min(dt_pde, clearance_dt(st.mesh->boundary_distance(m.x), D, cfg_.K));
    dt_pde = std::max(dt_pde, floor);
    if (dt_pde < rem)
        dt_pde = std::max(ladder(dt_pde), floor);
    const double dt_fast = std::min(rem, dt_reach);
    if (dt_fast >= dt_pde)
        return propagate_free(st, i, dt_fast, now).advanced;

    const StepResult res = propagate_near_curve(st, i, hit.curve, hit.cp.segment, dt_pde, now);
    reacted = res.reacted;
    return res.advanced;
}

double Engine::bound_single_step(SimulationState& st, std::size_t i, double rem, double now, bool& reacted)
{
    const Molecule& m = st.molecules[i];
    const Species& sp = model_.species(m.species);
    double dt = rem;
    if (sp.transport && sp.transport->step_time > 0.0)
        dt = std::min(dt, sp.transport->step_time);

    // Reactive neighbours outside this molecule's group.
    if (model_.reactive_1d(m.species)) {
        for (std::size_t j = 0; j < st.molecules.size(); ++j) {
            const Molecule& o = st.molecules[j];
            if (j == i || !o.alive || !o.bound || o.curve != m.curve)
                continue;
            const int r = model_.bimolecular_1d(m.species, o.species);
            if (r < 0)
                continue;
            const double gap = std::abs(o.s - m.s) - model_.pair_sigma(r);
            const double cdt = clearance_dt(gap, sp.D_bound + model_.species(o.species).D_bound, cfg_.K);
            dt = std::min(dt, std::max(cdt, std::min(cfg_.neighbour_floor(), rem)));
        }
    }

    if (dt < rem)
        dt = std::max(ladder(dt), std::min(cfg_.dt_min, rem));

    if (!sp.transport && sp.D_bound > 0.0) {
        for (int r : model_.site_rules(m.species)) {
            const ReactionRule& rule = model_.rule(r);
            const OperatorSite& site = model_.sites()[std::size_t(rule.site)];
            if (site.curve != m.curve || !st.site_active[std::size_t(rule.site)])
                continue;
            const double gap = std::abs(m.s - site.s) - model_.pair_sigma(r);
            const bool blocked = std::any_of(st.road_blocks.begin(), st.road_blocks.end(), [&](const RoadBlock& b) {
                return b.curve == m.curve && (b.s - site.s) * (m.s - site.s) > 0.0 &&
                       std::abs(b.s - site.s) < std::abs(m.s - site.s);
            });
            if (!blocked && gap <= cfg_.reach * std::sqrt(2.0 * sp.D_bound * dt)) {
                const StepResult res = propagate_site(st, i, r, dt, now);
                reacted = res.reacted;
                return res.advanced;
            }
        }
    }
    return propagate_on_curve(st, i, dt, now).advanced;
}

void Engine::run_single(SimulationState& st, std::size_t i, double t, double t_end, std::vector<Group>& spawned)
{
    while (t < t_end && st.molecules[i].alive) {
        const double ev = st.molecules[i].event_time;
        if (ev <= t) {
            fire_first_order(st, i);
            spawn_products(st, last_products_, std::max(t, ev), spawned);
            return;
        }
        const double stop = std::min(t_end, ev);
        const double rem = stop - t;
        bool reacted = false;
        const double adv = st.molecules[i].bound ? bound_single_step(st, i, rem, t, reacted)
                                                 : free_single_step(st, i, rem, t, reacted);
        if (reacted) {
            t += adv;
            if (!st.molecules[i].alive) {
                spawn_products(st, last_products_, t, spawned);
                return;
            }
            continue;
        }
        t = adv >= rem ? stop : t + adv;
    }
}

void Engine::run_pair(SimulationState& st, std::size_t i, std::size_t j, double t, double t_end,
                      std::vector<Group>& spawned)
{
    const bool bound = st.molecules[i].bound;
    const double C = cfg_.reach;
    while (t < t_end) {
        const Molecule& a = st.molecules[i];
        const Molecule& b = st.molecules[j];
        const double ev = std::min(a.event_time, b.event_time);
        if (ev <= t) {
            std::size_t first = i, other = j;
            if (b.event_time < a.event_time || (b.event_time == a.event_time && b.id < a.id))
                std::swap(first, other);
            fire_first_order(st, first);
            std::vector<std::size_t> made = last_products_;
            spawn_products(st, made, std::max(t, ev), spawned);
            spawned.push_back({other, other, std::max(t, ev)});
            return;
        }
        const double stop = std::min(t_end, ev);
        const double rem = stop - t;
        const double floor = std::min(cfg_.dt_min, rem);

        double sigma, r0, D;
        if (bound) {
            const int r = model_.bimolecular_1d(a.species, b.species);
            sigma = model_.pair_sigma(r);
            r0 = std::abs(a.s - b.s);
            D = model_.species(a.species).D_bound + model_.species(b.species).D_bound;
        } else {
            const int r = model_.bimolecular_3d(a.species, b.species);
            sigma = model_.pair_sigma(r);
            r0 = (a.x - b.x).norm();
            D = model_.species(a.species).D_free + model_.species(b.species).D_free;
        }
        if (!(D > 0.0)) {
            t = stop;
            continue;
        }
        const double gap = std::max(0.0, r0 - sigma);
        const double dt_reach = gap * gap / (C * C * 2.0 * D);

        double dt_common = rem;
        double dt_pde = rem;
        if (!bound) {
            for (std::size_t k : {i, j}) {
                const Molecule& m = st.molecules[k];
                const double Dm = model_.species(m.species).D_free;
                const CurveHit hit = nearest_bindable(st, model_, m.species, m.x);
                if (hit.curve >= 0)
                    dt_common = std::min(dt_common, std::max(clearance_dt(hit.cp.distance - hit.sigma, Dm, cfg_.K), floor));
                if (st.mesh)
                    dt_pde = std::min(dt_pde, clearance_dt(st.mesh->boundary_distance(m.x), Dm, cfg_.K));
            }
        }
        dt_pde = std::max(std::min(dt_pde, dt_common), floor);
        if (dt_pde < rem)
            dt_pde = std::max(ladder(dt_pde), floor);
        const double dt_fast = std::min(dt_common, dt_reach);

        StepResult res;
        if (dt_fast >= dt_pde) {
            if (bound) {
                propagate_on_curve(st, i, dt_fast, t);
                propagate_on_curve(st, j, dt_fast, t);
            } else {
                propagate_free(st, i, dt_fast, t);
                propagate_free(st, j, dt_fast, t);
            }
            res = {dt_fast, false};
        } else {
            res = bound ? propagate_pair_on_curve(st, i, j, dt_pde, t) : propagate_pair_3d(st, i, j, dt_pde, t);
        }
        if (res.reacted) {
            std::vector<std::size_t> made = last_products_;
            spawn_products(st, made, t + res.advanced, spawned);
            return;
        }
        t = res.advanced >= rem ? stop : t + res.advanced;
    }
}

void Engine::run_group(SimulationState& st, Group g, double t_end, std::vector<Group>& spawned)
{
    if (g.a == g.b)
        run_single(st, g.a, g.t, t_end, spawned);
    else
        run_pair(st, g.a, g.b, g.t, t_end, spawned);
}

double Engine::ladder(double dt) const
{
    if (cfg_.dt_ladder <= 0 || !(dt > 0.0) || !std::isfinite(dt))
        return dt;
    const double m = cfg_.dt_ladder;
    const double k = std::floor(std::log2(dt / cfg_.dt_split) * m);
    return std::min(dt, cfg_.dt_split * std::exp2(k / m));
}

double Engine::isolation_time(const SimulationState& st, const std::vector<std::size_t>& group, std::size_t i) const
{
    const auto& mol = st.molecules;
    const Molecule& a = mol[i];
    double dt = kNever;
    if (a.bound ? !model_.reactive_1d(a.species) : !model_.reactive_3d(a.species))
        return dt;
    for (std::size_t j = 0; j < mol.size(); ++j) {
        const Molecule& b = mol[j];
        if (!b.alive || b.bound != a.bound || group[i] == group[j])
            continue;
        double gap, D;
        if (!a.bound) {
            const int r = model_.bimolecular_3d(a.species, b.species);
            if (r < 0)
                continue;
            gap = (a.x - b.x).norm() - model_.pair_sigma(r);
            D = model_.species(a.species).D_free + model_.species(b.species).D_free;
        } else {
            const int r = model_.bimolecular_1d(a.species, b.species);
            if (r < 0 || a.curve != b.curve)
                continue;
            gap = std::abs(a.s - b.s) - model_.pair_sigma(r);
            D = model_.species(a.species).D_bound + model_.species(b.species).D_bound;
        }
        dt = std::min(dt, clearance_dt(gap, D, cfg_.K));
    }
    return dt;
}

void Engine::step_window(SimulationState& st, double dt)
{
    const double t_window = st.time + dt;
    const std::size_t first_event = events_.size();
    if (st.site_active.size() < model_.sites().size())
        st.site_active.resize(model_.sites().size(), true);

    // Groups that cannot meet a reactive partner before t_window run straight
    // to it and drop out of the later epochs.
    std::unordered_set<std::uint64_t> retired;
    while (st.time < t_window) {
        const double remaining = t_window - st.time;
        const std::size_t n = st.molecules.size();
        std::vector<char> active(n);
        for (std::size_t i = 0; i < n; ++i)
            active[i] = st.molecules[i].alive && !retired.count(st.molecules[i].id);
        const Decomposition dec = pair_decomposition(st, model_, cfg_, &active);

        std::vector<Group> queue;
        for (const auto& [a, b] : dec.pairs)
            queue.push_back({a, b, st.time});
        for (const auto& [a, b] : dec.on_curve_pairs)
            queue.push_back({a, b, st.time});
        for (const auto* list : {&dec.near_curve, &dec.singles, &dec.on_curve_singles})
            for (std::size_t i : *list)
                queue.push_back({i, i, st.time});
        if (queue.empty())
            break;

        std::vector<std::size_t> group(n);
        for (std::size_t i = 0; i < n; ++i)
            group[i] = i;
        for (const Group& g : queue)
            group[g.b] = g.a;
        double dt_epoch = kNever;
        for (Group& g : queue) {
            const double iso = std::min(isolation_time(st, group, g.a), isolation_time(st, group, g.b));
            if (iso >= remaining) {
                g.end = t_window;
            } else {
                g.end = -1.0;
                dt_epoch = std::min(dt_epoch, iso);
            }
        }
        dt_epoch = std::max(dt_epoch, std::min(cfg_.neighbour_floor(), remaining));
        const double t_end = dt_epoch >= remaining ? t_window : st.time + dt_epoch;

        for (std::size_t q = 0; q < queue.size(); ++q) {
            Group g = queue[q];
            if (g.end < 0.0)
                g.end = t_end;
            const std::size_t before = queue.size();
            run_group(st, g, g.end, queue);
            for (std::size_t k = before; k < queue.size(); ++k)
                queue[k].end = g.end;
            if (g.end == t_window && t_end < t_window)
                for (std::size_t k : {g.a, g.b})
                    retired.insert(st.molecules[k].id);
        }
        // Products of retired groups are retired with them.
        for (const Group& g : queue)
            if (g.end == t_window && t_end < t_window)
                for (std::size_t k : {g.a, g.b})
                    if (st.molecules[k].alive)
                        retired.insert(st.molecules[k].id);

        st.compact();
        st.time = t_end;
        ++stats_.epochs;
    }
    st.time = t_window;
    resolve_overlaps(st, model_);

    std::stable_sort(events_.begin() + std::ptrdiff_t(first_event), events_.end(), [](const Event& a, const Event& b) {
        return a.time != b.time ? a.time < b.time : a.reactant_a < b.reactant_a;
    });
}

} // namespace curvesim
