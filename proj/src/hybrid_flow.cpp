#include "pwlnet/hybrid_flow.hpp"

#include <algorithm>
#include <cmath>

namespace pwlnet {

namespace {

int sgn(double x) { return (x > 0.0) - (x < 0.0); }

Vec strip(const Vec& aug) { return aug.head(aug.size() - 1); }

Vec augment(const Vec& z) {
    Vec w(z.size() + 1);
    w.head(z.size()) = z;
    w(z.size()) = 1.0;
    return w;
}

}  // namespace

FlowEngine::FlowEngine(const PiecewiseAffineSystem& sys, FlowSettings settings)
    : sys_(sys), settings_(settings) {}

FlowEngine::RegionData& FlowEngine::region_data(
    const PiecewiseAffineSystem::Label& label, double dt) {
    auto it = cache_.find(label);
    if (it == cache_.end()) {
        RegionData rd;
        rd.A = sys_.region_matrix(label);
        rd.c = sys_.region_offset(label);
        const int m = sys_.dim();
        rd.aug = Mat::Zero(m + 1, m + 1);
        rd.aug.topLeftCorner(m, m) = rd.A;
        rd.aug.topRightCorner(m, 1) = rd.c;
        it = cache_.emplace(label, std::move(rd)).first;
    }
    RegionData& rd = it->second;
    if (rd.dt != dt) {
        rd.dt = dt;
        rd.scan_exp = expm(Mat(rd.aug * dt));
        rd.dyadic.clear();
    }
    return rd;
}

Vec FlowEngine::flow(const PiecewiseAffineSystem::Label& label, const Vec& z0,
                     double t) const {
    auto it = cache_.find(label);
    if (it != cache_.end())
        return (expm(Mat(it->second.aug * t)) * augment(z0)).head(sys_.dim());
    return affine_flow(sys_.region_matrix(label), sys_.region_offset(label), z0, t);
}

std::optional<EventHit> FlowEngine::next_event(
    const Vec& z0, const PiecewiseAffineSystem::Label& label, double t_max) {
    if (t_max <= 0.0) return std::nullopt;
    const double dt = settings_.scan_dt > 0.0
                          ? settings_.scan_dt
                          : std::min(0.01 * settings_.char_time, t_max / 1000.0);
    RegionData& rd = region_data(label, dt);
    const int n_planes = sys_.n_planes();
    const int m = sys_.dim();

    // Effective starting sign per plane; planes we sit on use the field
    // direction so a just-crossed plane is not re-triggered.
    const Vec zdot0 = rd.A * z0 + rd.c;
    std::vector<int> start_sign(n_planes);
    for (int p = 0; p < n_planes; ++p) {
        const double h0 = sys_.plane_h(p, z0);
        if (std::abs(h0) > 1e-11 * (1.0 + z0.norm()))
            start_sign[p] = sgn(h0);
        else
            start_sign[p] = sgn(sys_.plane_normal(p).dot(zdot0));
    }

    Vec w = augment(z0);
    double t_left = 0.0;
    std::vector<int> crossing;
    Vec w_left = w;
    while (t_left < t_max) {
        const double step = std::min(dt, t_max - t_left);
        Vec w_next = (step == dt) ? Vec(rd.scan_exp * w)
                                  : Vec((expm(Mat(rd.aug * step)) * w));
        for (int p = 0; p < n_planes; ++p) {
            const double h1 = sys_.plane_h(p, strip(w_next));
            if (start_sign[p] != 0 && sgn(h1) != start_sign[p]) crossing.push_back(p);
        }
        if (!crossing.empty()) {
            w_left = w;
            break;
        }
        w = w_next;
        t_left += step;
    }
    if (crossing.empty()) return std::nullopt;

    // Dyadic bisection: one matrix-vector product per halving.
    const int depth =
        std::max(1, static_cast<int>(std::ceil(std::log2(dt / settings_.event_time_tol))));
    auto dyadic = [&](int k) -> const Mat& {
        while (static_cast<int>(rd.dyadic.size()) < k)
            rd.dyadic.push_back(
                expm(Mat(rd.aug * (rd.dt / std::pow(2.0, rd.dyadic.size() + 1)))));
        return rd.dyadic[k - 1];
    };

    double best_t = std::numeric_limits<double>::infinity();
    int best_plane = -1;
    Vec best_state;
    for (int p : crossing) {
        Vec wa = w_left;
        double ta = t_left;
        int sign_left = start_sign[p];
        for (int k = 1; k <= depth; ++k) {
            const Vec wm = dyadic(k) * wa;
            if (sgn(sys_.plane_h(p, strip(wm))) == sign_left && sign_left != 0) {
                wa = wm;
                ta += rd.dt / std::pow(2.0, k);
            }
        }
        const double t_star = ta + rd.dt / std::pow(2.0, depth);
        const Vec state = strip(dyadic(depth) * wa);
        if (t_star < best_t - settings_.event_time_tol ||
            (std::abs(t_star - best_t) <= settings_.event_time_tol && p < best_plane)) {
            best_t = t_star;
            best_plane = p;
            best_state = state;
        }
    }
    if (best_t > t_max) return std::nullopt;

    const Vec zdot = rd.A * best_state + rd.c;
    const double denom = sys_.plane_normal(best_plane).dot(zdot);
    if (std::abs(denom) <= settings_.grazing_tol * zdot.norm())
        throw GrazingError("next_event: grazing contact with plane " +
                           std::to_string(best_plane));
    (void)m;
    return EventHit{best_t, best_plane, best_state};
}

Trajectory FlowEngine::simulate(const Vec& z0, double t_end) {
    Trajectory traj;
    Vec z = z0;
    auto label = sys_.label_of(z);
    double t = 0.0;
    if (settings_.scan_dt <= 0.0)
        settings_.scan_dt = std::min(0.01 * settings_.char_time, t_end / 1000.0);

    // switch plane ordinal -> separated region pair (s, s+1)
    std::vector<int> switch_ordinal(sys_.planes_per_node(), -1);
    {
        int ord = 0;
        for (int j = 0; j < sys_.planes_per_node(); ++j)
            if (sys_.node.planes[j].kind == PlaneKind::Switch) switch_ordinal[j] = ord++;
    }

    // Cluster-synchronized nodes cross their plane copies at the same
    // instant; locating one event advances time fractionally past the other
    // nodes' crossings, which a forward sign scan can then never see.  After
    // each event, flip the label of any node whose nudged state already sits
    // in a different region, recording the crossing at the same timestamp.
    auto reconcile_labels = [&](Trajectory& tr, const Vec& state,
                                PiecewiseAffineSystem::Label& lab, double now) {
        const Vec probe = state + settings_.nudge * sys_.field(lab, state);
        for (int node = 0; node < sys_.n_nodes; ++node) {
            const double v = probe[node * sys_.node.dim + sys_.node.split_coord];
            const int reg = sys_.node.region_of_value(v);
            while (reg != lab[node]) {
                const int next = lab[node] + (reg > lab[node] ? 1 : -1);
                const int ord = std::min(lab[node], next);
                int pj = -1;
                for (int j = 0; j < sys_.planes_per_node(); ++j)
                    if (switch_ordinal[j] == ord) pj = j;
                if (pj < 0) break;
                EventRecord se;
                se.time = now;
                se.plane = node * sys_.planes_per_node() + pj;
                se.kind = PlaneKind::Switch;
                se.state_before = state;
                se.state_after = state;
                se.region_before = lab;
                lab[node] = next;
                se.region_after = lab;
                tr.events.push_back(se);
            }
        }
    };

    while (t < t_end) {
        // Fire planes already met or exceeded trigger immediately.
        int immediate = -1;
        double h_best = 0.0;
        for (int p = 0; p < sys_.n_planes(); ++p) {
            if (sys_.plane_kind(p) != PlaneKind::Fire) continue;
            const double h = sys_.plane_h(p, z);
            if (h >= 0.0 && (immediate < 0 || h > h_best)) {
                immediate = p;
                h_best = h;
            }
        }

        EventRecord ev;
        if (immediate >= 0) {
            ev.time = t;
            ev.plane = immediate;
            ev.kind = PlaneKind::Fire;
            ev.state_before = z;
            ev.region_before = label;
            ev.state_after = sys_.apply_reset(immediate, z);
            ev.region_after = sys_.label_of(ev.state_after);
            traj.events.push_back(ev);
            if (static_cast<long>(traj.events.size()) > settings_.max_events)
                throw NumericalError("simulate: max_events exceeded");
            z = ev.state_after;
            label = ev.region_after;
            reconcile_labels(traj, z, label, t);
            continue;
        }

        auto hit = next_event(z, label, t_end - t);
        if (!hit) {
            traj.segments.push_back({label, t, t_end, z});
            z = flow(label, z, t_end - t);
            break;
        }
        traj.segments.push_back({label, t, t + hit->t, z});

        ev.time = t + hit->t;
        ev.plane = hit->plane;
        ev.kind = sys_.plane_kind(hit->plane);
        ev.state_before = hit->state;
        ev.region_before = label;
        auto ref = sys_.plane_ref(hit->plane);
        if (ev.kind == PlaneKind::Switch) {
            ev.state_after = hit->state;
            ev.region_after = label;
            const int s = switch_ordinal[ref.plane];
            const double h0 = sys_.plane_h(hit->plane, z);
            ev.region_after[ref.node] = (h0 < 0.0) ? s + 1 : s;  // crossing direction
        } else {
            ev.state_after = sys_.apply_reset(hit->plane, hit->state);
            Vec probe = ev.state_after;
            const Vec zdot = sys_.field(sys_.label_of(probe), probe);
            probe += settings_.nudge * zdot;
            ev.region_after = sys_.label_of(probe);
        }
        traj.events.push_back(ev);
        if (static_cast<long>(traj.events.size()) > settings_.max_events)
            throw NumericalError("simulate: max_events exceeded");
        z = ev.state_after;
        label = ev.region_after;
        t = ev.time;
        reconcile_labels(traj, z, label, t);
    }
    traj.final_state = z;
    traj.t_end = t_end;
    return traj;
}

Mat saltation(const PiecewiseAffineSystem& sys, const EventRecord& event,
              double grazing_tol) {
    const Mat Dg = sys.reset_linear(event.plane);
    const Vec normal = sys.plane_normal(event.plane);
    const Vec zdot_minus = sys.field(event.region_before, event.state_before);
    const Vec zdot_plus = sys.field(event.region_after, event.state_after);
    const double denom = normal.dot(zdot_minus);
    if (std::abs(denom) <= grazing_tol * zdot_minus.norm())
        throw GrazingError("saltation: grazing event");
    return Dg + (zdot_plus - Dg * zdot_minus) * normal.transpose() / denom;
}

std::optional<EventHit> next_event(const PiecewiseAffineSystem& sys, const Vec& z0,
                                   const PiecewiseAffineSystem::Label& label,
                                   double t_max, const FlowSettings& settings) {
    FlowEngine engine(sys, settings);
    return engine.next_event(z0, label, t_max);
}

Trajectory simulate(const PiecewiseAffineSystem& sys, const Vec& z0, double t_end,
                    const FlowSettings& settings) {
    FlowEngine engine(sys, settings);
    return engine.simulate(z0, t_end);
}

std::vector<std::pair<double, Vec>> sample_trajectory(const PiecewiseAffineSystem& sys,
                                                      const Trajectory& traj,
                                                      double dt_sample) {
    std::vector<std::pair<double, Vec>> out;
    FlowEngine engine(sys);
    for (const auto& seg : traj.segments) {
        for (double t = seg.t_start; t < seg.t_end; t += dt_sample)
            out.emplace_back(t, engine.flow(seg.label, seg.start_state, t - seg.t_start));
    }
    out.emplace_back(traj.t_end, traj.final_state);
    return out;
}

}  // namespace pwlnet
