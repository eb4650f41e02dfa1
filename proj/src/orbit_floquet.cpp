#include "pwlnet/orbit_floquet.hpp"

#include <algorithm>
#include <cmath>
#include <thread>

namespace pwlnet {

namespace {

int plane_node(const PiecewiseAffineSystem& sys, int plane) {
    return sys.plane_ref(plane).node;
}

}  // namespace

SeedResult extract_sequence(const PiecewiseAffineSystem& sys, const Trajectory& traj,
                            double match_tol, int anchor_plane) {
    if (traj.events.empty())
        throw ConvergenceError("extract_sequence: trajectory has no events");

    if (anchor_plane < 0) {
        for (const auto& ev : traj.events)
            if (ev.kind == PlaneKind::Fire && plane_node(sys, ev.plane) == 0) {
                anchor_plane = ev.plane;
                break;
            }
        if (anchor_plane < 0)
            for (const auto& ev : traj.events)
                if (plane_node(sys, ev.plane) == 0) {
                    anchor_plane = ev.plane;
                    break;
                }
        if (anchor_plane < 0) anchor_plane = traj.events.front().plane;
    }

    std::vector<int> occ;
    for (size_t e = 0; e < traj.events.size(); ++e)
        if (traj.events[e].plane == anchor_plane) occ.push_back(static_cast<int>(e));
    if (occ.size() < 2)
        throw ConvergenceError("extract_sequence: anchor plane crossed fewer than twice");

    // Spans beyond the cap would hand the shooter an intractably long
    // unknown vector; treat them as no recurrence.
    constexpr int kMaxSpan = 64;
    for (int j = static_cast<int>(occ.size()) - 1; j >= 1; --j) {
        const Vec& zj = traj.events[occ[j]].state_after;
        for (int i = j - 1; i >= 0; --i) {
            if (occ[j] - occ[i] > kMaxSpan) break;
            const Vec& zi = traj.events[occ[i]].state_after;
            if ((zi - zj).norm() > match_tol * (1.0 + zj.norm())) continue;

            SeedResult out;
            out.guess.start = zi;
            double t_prev = traj.events[occ[i]].time;
            for (int e = occ[i] + 1; e <= occ[j]; ++e) {
                const auto& ev = traj.events[e];
                out.sequence.events.push_back({ev.plane, ev.kind});
                out.sequence.labels.push_back(ev.region_before);
                out.guess.durations.push_back(ev.time - t_prev);
                t_prev = ev.time;
            }
            return out;
        }
    }
    throw ConvergenceError("extract_sequence: no recurrence within tolerance");
}

namespace {

struct ShootingFrame {
    int pin = -1;
    double pin_value = 0.0;
    std::vector<int> free_idx;
    std::vector<Mat> A;  // per segment
    std::vector<Vec> c;
};

ShootingFrame make_frame(const PiecewiseAffineSystem& sys, const EventSequence& seq) {
    const int n = sys.dim();
    const int m = sys.node.dim;
    const auto& closing = seq.events.back();
    const auto ref = sys.plane_ref(closing.plane);
    const auto& plane = sys.node_plane(closing.plane);
    const int split = sys.node.split_coord;

    Vec unit = Vec::Zero(m);
    unit[split] = 1.0;
    if ((plane.normal - unit).norm() > 1e-12)
        throw std::invalid_argument("shoot: anchor plane must be a split-coordinate plane");

    ShootingFrame fr;
    fr.pin = ref.node * m + split;
    if (closing.kind == PlaneKind::Fire) {
        if (!plane.reset.linear.row(split).isZero(0.0))
            throw std::invalid_argument("shoot: closing reset must fix the split coordinate");
        fr.pin_value = plane.reset.offset[split];
    } else {
        fr.pin_value = plane.offset;
    }
    for (int i = 0; i < n; ++i)
        if (i != fr.pin) fr.free_idx.push_back(i);
    for (const auto& label : seq.labels) {
        fr.A.push_back(sys.region_matrix(label));
        fr.c.push_back(sys.region_offset(label));
    }
    return fr;
}

}  // namespace

PeriodicOrbit shoot(const PiecewiseAffineSystem& sys, const EventSequence& seq,
                    const ShootingGuess& guess, const NewtonSettings& settings,
                    bool validate) {
    const int K = seq.size();
    if (K == 0) throw std::invalid_argument("shoot: empty event sequence");
    const int n = sys.dim();
    if (guess.start.size() != n || static_cast<int>(guess.durations.size()) != K)
        throw std::invalid_argument("shoot: guess dimensions do not match the sequence");

    const ShootingFrame fr = make_frame(sys, seq);
    const int nf = static_cast<int>(fr.free_idx.size());

    auto unpack = [&](const Vec& x) {
        Vec z0 = Vec::Zero(n);
        z0[fr.pin] = fr.pin_value;
        for (int j = 0; j < nf; ++j) z0[fr.free_idx[j]] = x[K + j];
        return z0;
    };
    auto residual = [&](const Vec& x) {
        Vec r(K + nf);
        Vec z = unpack(x);
        for (int i = 0; i < K; ++i) {
            const Vec z_minus = affine_flow(fr.A[i], fr.c[i], z, x[i]);
            r[i] = sys.plane_h(seq.events[i].plane, z_minus);
            z = seq.events[i].kind == PlaneKind::Fire
                    ? sys.apply_reset(seq.events[i].plane, z_minus)
                    : z_minus;
        }
        for (int j = 0; j < nf; ++j) r[K + j] = z[fr.free_idx[j]] - x[K + j];
        return r;
    };

    Vec x0(K + nf);
    for (int i = 0; i < K; ++i) x0[i] = guess.durations[i];
    for (int j = 0; j < nf; ++j) x0[K + j] = guess.start[fr.free_idx[j]];

    const Vec x = newton_solve(residual, x0, settings);
    for (int i = 0; i < K; ++i)
        if (x[i] <= 0.0) throw ConvergenceError("shoot: nonpositive segment duration");

    PeriodicOrbit orbit;
    orbit.sequence = seq;
    orbit.start = unpack(x);
    Vec z = orbit.start;
    double t = 0.0;
    for (int i = 0; i < K; ++i) {
        orbit.durations.push_back(x[i]);
        t += x[i];
        orbit.times.push_back(t);
        const Vec z_minus = affine_flow(fr.A[i], fr.c[i], z, x[i]);
        orbit.states_minus.push_back(z_minus);
        z = seq.events[i].kind == PlaneKind::Fire
                ? sys.apply_reset(seq.events[i].plane, z_minus)
                : z_minus;
        orbit.states_plus.push_back(z);
    }
    orbit.period = t;
    orbit.residual = residual(x).cwiseAbs().maxCoeff();

    if (validate) {
        FlowSettings fs;
        fs.char_time = orbit.period;
        FlowEngine engine(sys, fs);
        Vec at = orbit.start;
        for (int i = 0; i < K; ++i) {
            auto hit = engine.next_event(at, seq.labels[i],
                                         orbit.durations[i] * (1.0 + 1e-6) + 1e-12);
            if (!hit || hit->plane != seq.events[i].plane ||
                std::abs(hit->t - orbit.durations[i]) > 1e-6 * (1.0 + orbit.durations[i]))
                throw ConvergenceError("shoot: converged orbit fails event re-validation");
            at = orbit.states_plus[i];
        }
    }

    // A slowly converging (or alternating) transient can make the extracted
    // recurrence span several copies of the true orbit.  Detect exact
    // repetition and re-shoot on the shortest sub-sequence.
    for (int sub = 1; 2 * sub <= K; ++sub) {
        if (K % sub != 0) continue;
        bool repeats = true;
        for (int i = 0; i < K && repeats; ++i) {
            const int j = (i + sub) % K;
            if (seq.events[i].plane != seq.events[j].plane ||
                seq.labels[i] != seq.labels[j])
                repeats = false;
            else if ((orbit.states_plus[i] - orbit.states_plus[j]).norm() >
                         1e-8 * (1.0 + orbit.states_plus[i].norm()) ||
                     std::abs(orbit.durations[i] - orbit.durations[j]) >
                         1e-8 * (1.0 + orbit.durations[i]))
                repeats = false;
        }
        if (!repeats) continue;
        EventSequence short_seq;
        short_seq.events.assign(seq.events.begin(), seq.events.begin() + sub);
        short_seq.labels.assign(seq.labels.begin(), seq.labels.begin() + sub);
        ShootingGuess short_guess;
        short_guess.start = orbit.start;
        short_guess.durations.assign(orbit.durations.begin(),
                                     orbit.durations.begin() + sub);
        return shoot(sys, short_seq, short_guess, settings, validate);
    }
    return orbit;
}

PeriodicOrbit find_orbit(const PiecewiseAffineSystem& sys, const Vec& z0,
                         double t_settle, const NewtonSettings& settings,
                         int anchor_plane, double match_tol) {
    Trajectory traj = simulate(sys, z0, t_settle);
    SeedResult seed = extract_sequence(sys, traj, match_tol, anchor_plane);
    return shoot(sys, seed.sequence, seed.guess, settings);
}

namespace {

EventRecord orbit_event_record(const PeriodicOrbit& orbit, int i) {
    const auto& seq = orbit.sequence;
    EventRecord ev;
    ev.time = orbit.times[i];
    ev.plane = seq.events[i].plane;
    ev.kind = seq.events[i].kind;
    ev.state_before = orbit.states_minus[i];
    ev.state_after = orbit.states_plus[i];
    ev.region_before = seq.labels[i];
    ev.region_after = seq.labels[(i + 1) % seq.size()];
    return ev;
}

}  // namespace

Mat monodromy_sync(const PiecewiseAffineSystem& sys, const PeriodicOrbit& orbit) {
    const int n = sys.dim();
    Mat psi = Mat::Identity(n, n);
    for (int i = 0; i < orbit.sequence.size(); ++i) {
        const Mat A = sys.region_matrix(orbit.sequence.labels[i]);
        psi = expm(Mat(A * orbit.durations[i])) * psi;
        psi = saltation(sys, orbit_event_record(orbit, i)) * psi;
    }
    return psi;
}

std::vector<Mat> monodromy_transverse(const PiecewiseAffineSystem& network,
                                      const BlockDiagonalization& bd,
                                      const PeriodicOrbit& orbit) {
    if (!network.coupling)
        throw std::invalid_argument("monodromy_transverse: network has no coupling");
    const auto& cpl = *network.coupling;
    const int m = network.node.dim;
    const int M = bd.partition.n_clusters();
    const double sign = cpl.mode == CouplingMode::Laplacian ? -1.0 : 1.0;
    const Mat DH = cpl.dh(m);
    const int ppn = static_cast<int>(network.node.planes.size());

    PiecewiseAffineSystem quot = quotient_system(network, bd.partition.blocks);

    // node-level saltation of the acting cluster at each event
    struct EventFactor {
        int cluster;
        Mat K;  // m x m
    };
    std::vector<EventFactor> factors;
    for (int i = 0; i < orbit.sequence.size(); ++i) {
        const auto& ev = orbit.sequence.events[i];
        const int k0 = ev.plane / ppn;
        const auto& plane = network.node.planes[ev.plane % ppn];
        const auto& label_before = orbit.sequence.labels[i];
        const auto& label_after = orbit.sequence.labels[(i + 1) % orbit.sequence.size()];
        const Vec fm = quot.field(label_before, orbit.states_minus[i]).segment(k0 * m, m);
        const Vec fp = quot.field(label_after, orbit.states_plus[i]).segment(k0 * m, m);
        const Mat Dg = ev.kind == PlaneKind::Fire ? plane.reset.linear : Mat::Identity(m, m);
        const double denom = plane.normal.dot(fm);
        if (std::abs(denom) <= 1e-8 * fm.norm())
            throw GrazingError("monodromy_transverse: grazing event");
        EventFactor f;
        f.cluster = k0;
        f.K = Dg + (fp - Dg * fm) * plane.normal.transpose() / denom;
        factors.push_back(std::move(f));
    }

    std::vector<Mat> J(M);
    for (int k = 0; k < M; ++k) J[k] = bd.cluster_projector(k);

    std::vector<Mat> out;
    for (const auto& blk : bd.blocks) {
        if (blk.tag == BlockTag::Synchronous) continue;
        const int b = blk.size;
        std::vector<Mat> Jb(M);
        for (int k = 0; k < M; ++k) Jb[k] = J[k].block(blk.start, blk.start, b, b);
        const Mat Gb = bd.transformed.block(blk.start, blk.start, b, b);
        const Mat couple = sign * cpl.strength * kron(Gb, DH);

        Mat psi = Mat::Identity(b * m, b * m);
        for (int i = 0; i < orbit.sequence.size(); ++i) {
            const auto& label = orbit.sequence.labels[i];
            Mat A = couple;
            for (int k = 0; k < M; ++k)
                A += kron(Jb[k], network.node.regions[label[k]].A);
            psi = expm(Mat(A * orbit.durations[i])) * psi;
            const Mat Khat = Mat::Identity(b * m, b * m) +
                             kron(Jb[factors[i].cluster],
                                  factors[i].K - Mat::Identity(m, m));
            psi = Khat * psi;
        }
        out.push_back(std::move(psi));
    }
    return out;
}

MonodromyReport floquet_report(const PiecewiseAffineSystem& sys, const PeriodicOrbit& orbit,
                               const std::vector<Mat>& transverse) {
    MonodromyReport rep;
    const Mat psi = monodromy_sync(sys, orbit);
    ComplexSpectrum spec = eig(psi, true);
    rep.block_multipliers.push_back(spec.eigenvalues);

    const Vec zdot = sys.field(orbit.sequence.labels.front(), orbit.start);
    double best = 0.0;
    for (int k = 0; k < spec.eigenvalues.size(); ++k) {
        const CVec v = spec.eigenvectors.col(k);
        const double cosine =
            std::abs(v.adjoint().dot(zdot.cast<std::complex<double>>())) /
            (v.norm() * zdot.norm());
        if (cosine > best) {
            best = cosine;
            rep.trivial_index = k;
        }
    }
    if (best < 0.999) rep.trivial_index = -1;

    for (const auto& t : transverse) rep.block_multipliers.push_back(eig(t).eigenvalues);

    int total = 0;
    for (const auto& b : rep.block_multipliers) total += static_cast<int>(b.size());
    rep.multipliers.resize(total);
    int pos = 0;
    for (const auto& b : rep.block_multipliers)
        for (int k = 0; k < b.size(); ++k) rep.multipliers[pos++] = b[k];
    rep.exponents.resize(total);
    for (int k = 0; k < total; ++k)
        rep.exponents[k] = std::log(rep.multipliers[k]) / orbit.period;

    rep.max_nontrivial_abs = 0.0;
    for (int k = 0; k < total; ++k) {
        if (k == rep.trivial_index) continue;
        rep.max_nontrivial_abs = std::max(rep.max_nontrivial_abs,
                                          std::abs(rep.multipliers[k]));
    }
    rep.stable = rep.trivial_index >= 0 && rep.max_nontrivial_abs < 1.0 - 1e-6;
    rep.distance_to_unit = std::abs(rep.max_nontrivial_abs - 1.0);
    return rep;
}

MSFProblem msf_problem(const PiecewiseAffineSystem& node_sys, const PeriodicOrbit& orbit,
                       const Mat& DH, CouplingMode mode) {
    MSFProblem prob;
    prob.DH = DH;
    prob.sign = mode == CouplingMode::Laplacian ? -1.0 : 1.0;
    prob.period = orbit.period;
    for (int i = 0; i < orbit.sequence.size(); ++i) {
        prob.A.push_back(node_sys.region_matrix(orbit.sequence.labels[i]));
        prob.d.push_back(orbit.durations[i]);
        prob.K.push_back(saltation(node_sys, orbit_event_record(orbit, i)));
    }
    return prob;
}

double msf_value(const MSFProblem& prob, std::complex<double> beta) {
    const int n = static_cast<int>(prob.A.front().rows());
    CMat psi = CMat::Identity(n, n);
    for (size_t i = 0; i < prob.A.size(); ++i) {
        CMat A = prob.A[i].cast<std::complex<double>>() +
                 prob.sign * beta * prob.DH.cast<std::complex<double>>();
        psi = prob.K[i].cast<std::complex<double>>() * expm(CMat(A * prob.d[i])) * psi;
    }
    const CVec gamma = eig(psi).eigenvalues;
    double out = -std::numeric_limits<double>::infinity();
    for (int k = 0; k < gamma.size(); ++k)
        out = std::max(out, std::log(std::abs(gamma[k])) / prob.period);
    return out;
}

namespace {

void marching_squares(MSFGrid& grid) {
    auto interp = [](double xa, double ya, double va, double xb, double yb, double vb) {
        const double t = va / (va - vb);
        return std::pair<double, double>{xa + t * (xb - xa), ya + t * (yb - ya)};
    };
    for (int iy = 0; iy + 1 < grid.ny; ++iy)
        for (int ix = 0; ix + 1 < grid.nx; ++ix) {
            struct Corner {
                double x, y, v;
            };
            const Corner c[4] = {
                {grid.re(ix), grid.im(iy), grid.at(ix, iy)},
                {grid.re(ix + 1), grid.im(iy), grid.at(ix + 1, iy)},
                {grid.re(ix + 1), grid.im(iy + 1), grid.at(ix + 1, iy + 1)},
                {grid.re(ix), grid.im(iy + 1), grid.at(ix, iy + 1)}};
            std::vector<std::pair<double, double>> pts;
            for (int e = 0; e < 4; ++e) {
                const Corner& a = c[e];
                const Corner& b = c[(e + 1) % 4];
                if ((a.v > 0.0) != (b.v > 0.0))
                    pts.push_back(interp(a.x, a.y, a.v, b.x, b.y, b.v));
            }
            if (pts.size() == 2)
                grid.contour.push_back({pts[0].first, pts[0].second,
                                        pts[1].first, pts[1].second});
            else if (pts.size() == 4) {
                // saddle cell: pair edges by the sign of the center estimate
                const double center = 0.25 * (c[0].v + c[1].v + c[2].v + c[3].v);
                const bool swap = (center > 0.0) == (c[0].v > 0.0);
                const int a0 = swap ? 0 : 0, a1 = swap ? 3 : 1;
                const int b0 = swap ? 1 : 2, b1 = swap ? 2 : 3;
                grid.contour.push_back({pts[a0].first, pts[a0].second,
                                        pts[a1].first, pts[a1].second});
                grid.contour.push_back({pts[b0].first, pts[b0].second,
                                        pts[b1].first, pts[b1].second});
            }
        }
}

}  // namespace

MSFGrid msf(const PiecewiseAffineSystem& node_sys, const PeriodicOrbit& orbit,
            const Mat& DH, CouplingMode mode, double re_min, double re_max,
            double im_min, double im_max, int nx, int ny, int threads) {
    if (nx < 2 || ny < 2) throw std::invalid_argument("msf: resolution must be >= 2");
    const MSFProblem prob = msf_problem(node_sys, orbit, DH, mode);

    MSFGrid grid;
    grid.re_min = re_min;
    grid.re_max = re_max;
    grid.im_min = im_min;
    grid.im_max = im_max;
    grid.nx = nx;
    grid.ny = ny;
    grid.values.assign(static_cast<size_t>(nx) * ny, 0.0);

    auto run_rows = [&](int y0, int y1) {
        for (int iy = y0; iy < y1; ++iy)
            for (int ix = 0; ix < nx; ++ix)
                grid.values[static_cast<size_t>(iy) * nx + ix] =
                    msf_value(prob, {grid.re(ix), grid.im(iy)});
    };
    threads = std::max(1, std::min(threads, ny));
    if (threads == 1) {
        run_rows(0, ny);
    } else {
        std::vector<std::thread> pool;
        for (int t = 0; t < threads; ++t) {
            const int y0 = ny * t / threads, y1 = ny * (t + 1) / threads;
            pool.emplace_back(run_rows, y0, y1);
        }
        for (auto& th : pool) th.join();
    }

    marching_squares(grid);
    return grid;
}

std::complex<double> closed_form_exponent(const PiecewiseAffineSystem& sys,
                                          const PeriodicOrbit& orbit) {
    const auto& name = sys.node.name;
    const auto& seq = orbit.sequence;

    if (name.rfind("pwl_if", 0) == 0 && sys.node.dim == 2) {
        if (seq.size() != 1 || seq.events[0].kind != PlaneKind::Fire)
            throw std::invalid_argument("closed_form_exponent: expected a single-fire orbit");
        const Mat A = sys.region_matrix(seq.labels[0]);
        const double vdot_minus = sys.field(seq.labels[0], orbit.states_minus[0])[0];
        const double vdot_plus = sys.field(seq.labels[0], orbit.start)[0];
        return A.trace() +
               std::log(std::complex<double>(vdot_plus / vdot_minus)) / orbit.period;
    }
    if (name == "absolute" && sys.n_nodes == 1) {
        if (seq.size() != 2)
            throw std::invalid_argument("closed_form_exponent: expected a two-switch orbit");
        const double g = -sys.node.regions[1].A(1, 1);
        double t_right = 0.0;
        for (int i = 0; i < seq.size(); ++i)
            if (seq.labels[i][0] == 1) t_right += orbit.durations[i];
        return -g - (orbit.period - 2.0 * t_right) / orbit.period;
    }
    if (name == "pml" && sys.n_nodes == 1) {
        const double C = -1.0 / sys.node.regions[0].A(0, 1);
        double t_plus = 0.0;  // time on the branch with positive voltage slope
        for (int i = 0; i < seq.size(); ++i)
            if (sys.node.regions[seq.labels[i][0]].A(0, 0) > 0.0)
                t_plus += orbit.durations[i];
        return -1.0 + (2.0 * t_plus - orbit.period) / (C * orbit.period);
    }
    throw std::invalid_argument("closed_form_exponent: no formula for this model/orbit");
}

double orbit_l2_norm(const PiecewiseAffineSystem& sys, const PeriodicOrbit& orbit,
                     int n_quad) {
    const int n = sys.dim();
    const double dt = orbit.period / n_quad;
    double acc = 0.0;
    int k = 0;  // global midpoint index
    double seg_start_time = 0.0;
    Vec z = orbit.start;
    for (int i = 0; i < orbit.sequence.size(); ++i) {
        const Mat A = sys.region_matrix(orbit.sequence.labels[i]);
        const Vec c = sys.region_offset(orbit.sequence.labels[i]);
        // augmented one-step propagator for the uniform midpoint grid
        Mat aug = Mat::Zero(n + 1, n + 1);
        aug.topLeftCorner(n, n) = A;
        aug.topRightCorner(n, 1) = c;
        const Mat step = expm(Mat(aug * dt));
        const double seg_end_time = orbit.times[i];
        Vec w(n + 1);
        bool primed = false;
        while (true) {
            const double t = (k + 0.5) * dt;
            if (t >= seg_end_time || k >= n_quad) break;
            if (!primed) {
                w.head(n) = affine_flow(A, c, z, t - seg_start_time);
                w[n] = 1.0;
                primed = true;
            } else {
                w = step * w;
            }
            acc += w.head(n).squaredNorm();
            ++k;
        }
        z = orbit.states_plus[i];
        seg_start_time = seg_end_time;
    }
    return std::sqrt(acc / n_quad);
}

}  // namespace pwlnet
