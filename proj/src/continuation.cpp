#include "pwlnet/continuation.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

namespace pwlnet {

namespace {

std::string partition_id(const ClusterPartition& p) {
    std::ostringstream os;
    for (size_t b = 0; b < p.blocks.size(); ++b) {
        os << (b ? "|" : "") << "{";
        for (size_t i = 0; i < p.blocks[b].size(); ++i)
            os << (i ? "," : "") << p.blocks[b][i];
        os << "}";
    }
    return os.str();
}

}  // namespace

PiecewiseAffineSystem ClusterStateProblem::network(double sigma) const {
    CouplingSpec spec;
    spec.matrix = G;
    spec.mode = mode;
    spec.strength = sigma;
    spec.h_out = h_out;
    spec.h_in = h_in;
    return build_network(node, spec);
}

PiecewiseAffineSystem ClusterStateProblem::quotient(double sigma) const {
    return quotient_system(network(sigma), bd.partition.blocks);
}

std::pair<PeriodicOrbit, MonodromyReport> ClusterStateProblem::solve_at(
    double sigma, const EventSequence& seq, const ShootingGuess& guess,
    const NewtonSettings& settings) const {
    const PiecewiseAffineSystem quot = quotient(sigma);
    PeriodicOrbit orbit = shoot(quot, seq, guess, settings);
    const auto transverse = monodromy_transverse(network(sigma), bd, orbit);
    MonodromyReport report = floquet_report(quot, orbit, transverse);
    return {std::move(orbit), std::move(report)};
}

namespace {

// Generic natural-parameter marcher shared by both continuation entry points.
// solve() throws on failure; reseed() may replace the working sequence/guess.
Branch march(
    const std::function<std::pair<PeriodicOrbit, MonodromyReport>(
        double, const EventSequence&, const ShootingGuess&)>& solve,
    const std::function<bool(double, EventSequence&, ShootingGuess&)>& reseed,
    const std::function<double(double, const PeriodicOrbit&)>& norm_of,
    const PeriodicOrbit& seed, double p_start, double p_end,
    const ContinuationSettings& settings) {
    Branch br;
    EventSequence seq = seed.sequence;
    ShootingGuess guess{seed.start, seed.durations};

    auto add_point = [&](double p, std::pair<PeriodicOrbit, MonodromyReport>&& sol) {
        BranchPoint pt;
        pt.param = p;
        pt.norm = norm_of(p, sol.first);
        pt.stable = sol.second.stable;
        pt.orbit = std::move(sol.first);
        pt.report = std::move(sol.second);
        guess = {pt.orbit.start, pt.orbit.durations};
        seq = pt.orbit.sequence;
        br.points.push_back(std::move(pt));
    };

    try {
        add_point(p_start, solve(p_start, seq, guess));
    } catch (const NumericalError& e) {
        br.ended_early = true;
        br.end_reason = std::string("seed failed: ") + e.what();
        return br;
    }

    const double dir = p_end >= p_start ? 1.0 : -1.0;
    const double base_step = settings.step;
    double p = p_start;
    while (dir * (p_end - p) > 1e-14) {
        double step = base_step;
        bool advanced = false;
        for (int attempt = 0; attempt < 3 && !advanced; ++attempt, step *= 0.5) {
            const double p_next = dir * (p_end - p) <= step ? p_end : p + dir * step;
            try {
                add_point(p_next, solve(p_next, seq, guess));
                p = p_next;
                advanced = true;
            } catch (const NumericalError&) {
                // fall through to a smaller step
            }
        }
        if (!advanced) {
            const double p_next = dir * (p_end - p) <= base_step ? p_end : p + dir * base_step;
            bool reseeded = false;
            try {
                reseeded = reseed(p_next, seq, guess);
                if (reseeded) {
                    add_point(p_next, solve(p_next, seq, guess));
                    p = p_next;
                }
            } catch (const NumericalError&) {
                reseeded = false;
            }
            if (!reseeded) {
                br.ended_early = true;
                br.end_reason = "continuation step failed";
                break;
            }
        }

        // bracket a stability change to the requested width
        const size_t np = br.points.size();
        if (np >= 2 && br.points[np - 1].stable != br.points[np - 2].stable) {
            double lo = br.points[np - 2].param, hi = br.points[np - 1].param;
            MonodromyReport rep_lo = br.points[np - 2].report;
            MonodromyReport rep_hi = br.points[np - 1].report;
            ShootingGuess g{br.points[np - 2].orbit.start, br.points[np - 2].orbit.durations};
            EventSequence s = br.points[np - 2].orbit.sequence;
            const bool stable_lo = br.points[np - 2].stable;
            while (std::abs(hi - lo) > settings.bisection_width) {
                const double mid = 0.5 * (lo + hi);
                try {
                    auto sol = solve(mid, s, g);
                    g = {sol.first.start, sol.first.durations};
                    s = sol.first.sequence;
                    if (sol.second.stable == stable_lo) {
                        lo = mid;
                        rep_lo = std::move(sol.second);
                    } else {
                        hi = mid;
                        rep_hi = std::move(sol.second);
                    }
                } catch (const NumericalError&) {
                    break;
                }
            }
            BifurcationEvent ev = stable_lo ? classify(rep_lo, rep_hi, lo, hi)
                                            : classify(rep_hi, rep_lo, lo, hi);
            ev.param_lo = std::min(lo, hi);
            ev.param_hi = std::max(lo, hi);
            br.events.push_back(ev);
        }
    }
    if (dir < 0) {
        std::reverse(br.points.begin(), br.points.end());
        std::reverse(br.events.begin(), br.events.end());
    }
    return br;
}

}  // namespace

Branch continue_branch(const ClusterStateProblem& prob, const PeriodicOrbit& seed,
                       double sigma_start, double sigma_end,
                       const ContinuationSettings& settings) {
    auto solve = [&](double sigma, const EventSequence& seq, const ShootingGuess& guess) {
        return prob.solve_at(sigma, seq, guess, settings.newton);
    };
    auto reseed = [&](double sigma, EventSequence& seq, ShootingGuess& guess) {
        const PiecewiseAffineSystem quot = prob.quotient(sigma);
        auto traj = simulate_capped(quot, guess.start, settings.reseed_time);
        if (!traj) return false;
        SeedResult sr = extract_sequence(quot, *traj);
        seq = std::move(sr.sequence);
        guess = std::move(sr.guess);
        return true;
    };
    auto norm_of = [&](double sigma, const PeriodicOrbit& orbit) {
        return orbit_l2_norm(prob.quotient(sigma), orbit);
    };
    Branch br = march(solve, reseed, norm_of, seed, sigma_start, sigma_end, settings);
    br.partition = prob.bd.partition;
    br.state_id = partition_id(br.partition);
    return br;
}

Branch continue_parameter(const std::function<PiecewiseAffineSystem(double)>& sys_at,
                          const PeriodicOrbit& seed, double p_start, double p_end,
                          const ContinuationSettings& settings) {
    auto solve = [&](double p, const EventSequence& seq, const ShootingGuess& guess) {
        const PiecewiseAffineSystem sys = sys_at(p);
        PeriodicOrbit orbit = shoot(sys, seq, guess, settings.newton);
        MonodromyReport rep = floquet_report(sys, orbit);
        return std::make_pair(std::move(orbit), std::move(rep));
    };
    auto reseed = [&](double p, EventSequence& seq, ShootingGuess& guess) {
        const PiecewiseAffineSystem sys = sys_at(p);
        auto traj = simulate_capped(sys, guess.start, settings.reseed_time);
        if (!traj) return false;
        SeedResult sr = extract_sequence(sys, *traj);
        seq = std::move(sr.sequence);
        guess = std::move(sr.guess);
        return true;
    };
    auto norm_of = [&](double p, const PeriodicOrbit& orbit) {
        return orbit_l2_norm(sys_at(p), orbit);
    };
    Branch br = march(solve, reseed, norm_of, seed, p_start, p_end, settings);
    br.state_id = "parameter_sweep";
    return br;
}

BifurcationEvent classify(const MonodromyReport& before, const MonodromyReport& after,
                          double param_lo, double param_hi) {
    BifurcationEvent ev;
    ev.param_lo = param_lo;
    ev.param_hi = param_hi;

    // crossing multipliers on the unstable side, conjugates counted once
    std::vector<std::pair<std::complex<double>, int>> crossing;  // (multiplier, block)
    int offset = 0;
    for (size_t b = 0; b < after.block_multipliers.size(); ++b) {
        const CVec& mult = after.block_multipliers[b];
        for (int k = 0; k < mult.size(); ++k) {
            const int idx = offset + k;
            if (idx == after.trivial_index) continue;
            if (std::abs(mult[k]) <= 1.0) continue;
            if (mult[k].imag() < -1e-12) continue;  // keep the upper-half representative
            crossing.push_back({mult[k], static_cast<int>(b)});
        }
        offset += static_cast<int>(mult.size());
    }
    (void)before;
    if (crossing.empty()) {
        ev.type = BifurcationType::BranchEnd;
        return ev;
    }
    if (crossing.size() > 1) {
        ev.type = BifurcationType::Degenerate;
        return ev;
    }
    const auto [lambda, block] = crossing.front();
    ev.block = block;
    if (std::abs(lambda - 1.0) <= 0.05)
        ev.type = BifurcationType::Tangent;
    else if (std::abs(lambda + 1.0) <= 0.05)
        ev.type = BifurcationType::PeriodDoubling;
    else if (std::abs(lambda.imag()) > 1e-12)
        ev.type = BifurcationType::Torus;
    else
        ev.type = BifurcationType::Degenerate;
    return ev;
}

std::optional<Trajectory> simulate_capped(const PiecewiseAffineSystem& sys, const Vec& z0,
                                          double t_end, double cap,
                                          const FlowSettings& settings) {
    const int chunks = 50;
    const double dt = t_end / chunks;
    Trajectory total;
    Vec z = z0;
    double t0 = 0.0;
    for (int c = 0; c < chunks; ++c) {
        Trajectory part = simulate(sys, z, dt, settings);
        for (auto seg : part.segments) {
            seg.t_start += t0;
            seg.t_end += t0;
            total.segments.push_back(std::move(seg));
        }
        for (auto ev : part.events) {
            ev.time += t0;
            total.events.push_back(std::move(ev));
        }
        z = part.final_state;
        t0 += dt;
        if (!z.allFinite() || z.norm() > cap) return std::nullopt;
    }
    total.final_state = z;
    total.t_end = t_end;
    return total;
}

std::optional<double> return_time_ratio(const PiecewiseAffineSystem& sys,
                                        const Trajectory& traj, int node_a, int node_b,
                                        int marker_plane) {
    const int ppn = sys.planes_per_node();
    if (marker_plane < 0) {
        marker_plane = 0;
        for (int p = 0; p < ppn; ++p)
            if (sys.node.planes[p].kind == PlaneKind::Fire) marker_plane = p;
    }
    auto upward_times = [&](int node) {
        std::vector<double> times;
        for (const auto& ev : traj.events) {
            if (ev.plane != node * ppn + marker_plane) continue;
            if (ev.kind == PlaneKind::Switch &&
                ev.region_after[node] <= ev.region_before[node])
                continue;
            times.push_back(ev.time);
        }
        return times;
    };
    auto mean_tail_interval = [&](const std::vector<double>& times) -> std::optional<double> {
        if (times.size() < 3) return std::nullopt;
        // average over the settled second half
        const size_t first = times.size() / 2;
        const size_t count = times.size() - 1 - first;
        if (count < 1) return std::nullopt;
        return (times.back() - times[first]) / static_cast<double>(count);
    };
    const auto ta = mean_tail_interval(upward_times(node_a));
    const auto tb = mean_tail_interval(upward_times(node_b));
    if (!ta || !tb || *tb <= 0.0) return std::nullopt;
    return *ta / *tb;
}

std::vector<Branch> scan_states(const NodeModel& node, const Mat& G, CouplingMode mode,
                                int h_out, int h_in,
                                const std::vector<ClusterPartition>& catalog,
                                double sigma_lo, double sigma_hi,
                                const ScanSettings& settings) {
    std::vector<Branch> out;
    std::mt19937_64 rng(settings.seed);
    std::uniform_real_distribution<double> jitter(-0.5, 0.5);

    for (const auto& part : catalog) {
        ClusterStateProblem prob;
        prob.node = node;
        prob.G = G;
        prob.mode = mode;
        prob.h_out = h_out;
        prob.h_in = h_in;
        try {
            prob.bd = diagonalize_partition(G, part);
        } catch (const std::exception&) {
            continue;
        }

        bool diverged = false;
        for (int s = 0; s < settings.n_sigma_seeds; ++s) {
            const double sigma =
                sigma_lo + (sigma_hi - sigma_lo) * (s + 0.5) / settings.n_sigma_seeds;
            const PiecewiseAffineSystem quot = prob.quotient(sigma);
            Vec z0(quot.dim());
            for (int i = 0; i < z0.size(); ++i) z0[i] = jitter(rng);

            auto traj = simulate_capped(quot, z0, settings.settle_time, settings.divergence_norm);
            if (!traj) {
                diverged = true;
                continue;
            }
            PeriodicOrbit seeded;
            try {
                SeedResult sr = extract_sequence(quot, *traj, settings.match_tol);
                seeded = shoot(quot, sr.sequence, sr.guess, settings.continuation.newton);
            } catch (const std::exception&) {
                continue;  // aperiodic or no recurrence at this sigma
            }

            Branch down = continue_branch(prob, seeded, sigma, sigma_lo, settings.continuation);
            Branch up = continue_branch(prob, seeded, sigma, sigma_hi, settings.continuation);
            Branch merged = std::move(down);
            for (size_t i = 1; i < up.points.size(); ++i)
                merged.points.push_back(std::move(up.points[i]));
            merged.events.insert(merged.events.end(), up.events.begin(), up.events.end());
            merged.ended_early = down.ended_early || up.ended_early;
            merged.end_reason = !down.end_reason.empty() ? down.end_reason : up.end_reason;

            bool duplicate = false;
            for (const auto& existing : out) {
                if (!existing.partition.same_blocks(merged.partition)) continue;
                for (const auto& pe : existing.points)
                    for (const auto& pm : merged.points)
                        if (std::abs(pe.param - pm.param) < 1e-9 &&
                            std::abs(pe.norm - pm.norm) < 1e-4)
                            duplicate = true;
            }
            if (!duplicate && !merged.points.empty()) out.push_back(std::move(merged));
        }
        if (diverged) {
            Branch flag;
            flag.partition = part;
            flag.state_id = partition_id(part);
            flag.ended_early = true;
            flag.end_reason = "divergence detected";
            bool have = false;
            for (const auto& existing : out)
                if (existing.partition.same_blocks(part) && existing.points.empty()) have = true;
            if (!have) out.push_back(std::move(flag));
        }
    }
    return out;
}

}  // namespace pwlnet
