#pragma once

#include <array>
#include <complex>

#include "pwlnet/hybrid_flow.hpp"
#include "pwlnet/isotypic.hpp"

namespace pwlnet {

struct SequenceEvent {
    int plane = -1;
    PlaneKind kind = PlaneKind::Switch;
};

/// Frozen event skeleton of a periodic orbit: K events, the last one closing
/// the period, and the region label of each inter-event segment.
struct EventSequence {
    std::vector<SequenceEvent> events;
    std::vector<PiecewiseAffineSystem::Label> labels;  // labels[i] holds on segment i

    int size() const { return static_cast<int>(events.size()); }
};

struct ShootingGuess {
    Vec start;
    std::vector<double> durations;
};

struct SeedResult {
    EventSequence sequence;
    ShootingGuess guess;
};

/// Read one period's worth of events off a settled trajectory, anchored at a
/// recurring crossing of `anchor_plane` (auto-picked from node 0 when -1).
/// Throws ConvergenceError when no recurrence matches within match_tol.
SeedResult extract_sequence(const PiecewiseAffineSystem& sys, const Trajectory& traj,
                            double match_tol = 1e-4, int anchor_plane = -1);

struct PeriodicOrbit {
    EventSequence sequence;
    std::vector<double> durations;
    std::vector<double> times;       // cumulative event times, back() == period
    std::vector<Vec> states_minus;   // z(T_i^-), on the incoming side
    std::vector<Vec> states_plus;    // z(T_i^+), after any reset
    Vec start;                       // z(0^+); equals states_plus.back()
    double period = 0.0;
    double residual = 0.0;
};

/// Multi-segment shooting with a frozen event sequence.  Unknowns are the K
/// segment durations plus the free initial coordinates (the coordinate pinned
/// by the closing event's plane or reset is eliminated); residuals are the K
/// plane conditions plus periodicity.  With validate=true the solution is
/// re-checked against next_event so earlier uncaught crossings reject it.
PeriodicOrbit shoot(const PiecewiseAffineSystem& sys, const EventSequence& seq,
                    const ShootingGuess& guess, const NewtonSettings& settings = {},
                    bool validate = true);

/// Convenience: simulate, settle, extract and shoot in one go.
PeriodicOrbit find_orbit(const PiecewiseAffineSystem& sys, const Vec& z0,
                         double t_settle, const NewtonSettings& settings = {},
                         int anchor_plane = -1, double match_tol = 1e-4);

/// Monodromy of the orbit on its own system: ordered product of segment
/// exponentials and event saltation matrices.
Mat monodromy_sync(const PiecewiseAffineSystem& sys, const PeriodicOrbit& orbit);

/// Per-transverse-block monodromies for a cluster state of `network`; the
/// orbit lives on quotient_system(network, bd.partition.blocks).  Each block B
/// uses the Jacobian sum_k J^(k)|_B (x) A_k plus the coupling term, with the
/// transformed saltation restricted to B at events.
std::vector<Mat> monodromy_transverse(const PiecewiseAffineSystem& network,
                                      const BlockDiagonalization& bd,
                                      const PeriodicOrbit& orbit);

struct MonodromyReport {
    std::vector<CVec> block_multipliers;  // entry 0 = synchronous block
    CVec multipliers;                     // all, synchronous block first
    CVec exponents;                       // principal-branch ln(multiplier)/period
    int trivial_index = -1;               // into multipliers; flow-aligned eigenvector
    bool stable = false;
    double max_nontrivial_abs = 0.0;
    double distance_to_unit = 0.0;
};

/// Floquet analysis: synchronous monodromy plus optional transverse blocks.
/// The trivial multiplier is identified by eigenvector alignment with the
/// flow direction at the orbit start (|cos| >= 0.999), not by value.
MonodromyReport floquet_report(const PiecewiseAffineSystem& sys, const PeriodicOrbit& orbit,
                               const std::vector<Mat>& transverse = {});

/// Per-beta variational problem for the master stability function, built once
/// from a single-node synchronized orbit.
struct MSFProblem {
    std::vector<Mat> A;        // per segment
    std::vector<double> d;     // durations
    std::vector<Mat> K;        // per event saltation
    Mat DH;
    double sign = -1.0;        // Laplacian -, adjacency +
    double period = 0.0;
};

MSFProblem msf_problem(const PiecewiseAffineSystem& node_sys, const PeriodicOrbit& orbit,
                       const Mat& DH, CouplingMode mode);

/// max_gamma Re(ln gamma)/Delta for the monodromy at coupling parameter beta.
double msf_value(const MSFProblem& prob, std::complex<double> beta);

struct MSFGrid {
    double re_min = 0, re_max = 0, im_min = 0, im_max = 0;
    int nx = 0, ny = 0;
    std::vector<double> values;  // row-major: values[iy*nx + ix]
    std::vector<std::array<double, 4>> contour;  // zero-level segments

    double re(int ix) const { return re_min + (re_max - re_min) * ix / (nx - 1); }
    double im(int iy) const { return im_min + (im_max - im_min) * iy / (ny - 1); }
    double at(int ix, int iy) const { return values[static_cast<size_t>(iy) * nx + ix]; }
};

MSFGrid msf(const PiecewiseAffineSystem& node_sys, const PeriodicOrbit& orbit,
            const Mat& DH, CouplingMode mode, double re_min, double re_max,
            double im_min, double im_max, int nx, int ny, int threads = 1);

/// Model-specific closed-form Floquet exponent for cross-validation; complex
/// so a sign flip across a reset reports the period-doubling imaginary part.
std::complex<double> closed_form_exponent(const PiecewiseAffineSystem& sys,
                                          const PeriodicOrbit& orbit);

/// ((1/Delta) int ||z||^2 dt)^(1/2) by fixed-count quadrature on the
/// closed-form segments.
double orbit_l2_norm(const PiecewiseAffineSystem& sys, const PeriodicOrbit& orbit,
                     int n_quad = 1000);

}  // namespace pwlnet
