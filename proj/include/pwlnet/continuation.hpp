#pragma once

#include <functional>
#include <optional>
#include <string>

#include "pwlnet/orbit_floquet.hpp"

namespace pwlnet {

struct BranchPoint {
    double param = 0.0;  // sigma (or the swept model parameter)
    PeriodicOrbit orbit;
    MonodromyReport report;
    double norm = 0.0;  // time-averaged L2 norm over one period
    bool stable = false;
};

enum class BifurcationType { Tangent, PeriodDoubling, Torus, BranchEnd, Degenerate };

struct BifurcationEvent {
    double param_lo = 0.0, param_hi = 0.0;  // bracket, width <= 1e-5 when bisected
    BifurcationType type = BifurcationType::BranchEnd;
    int block = -1;  // diagonalization block of the crossing multiplier
};

struct Branch {
    std::string state_id;
    ClusterPartition partition;
    std::vector<BranchPoint> points;  // ordered by param
    std::vector<BifurcationEvent> events;
    bool ended_early = false;
    std::string end_reason;
};

/// A cluster state of one network, parameterized by sigma.  The block
/// diagonalization is sigma-independent; systems are rebuilt per sigma.
struct ClusterStateProblem {
    NodeModel node;
    Mat G;
    CouplingMode mode = CouplingMode::Laplacian;
    int h_out = 0, h_in = 0;
    BlockDiagonalization bd;

    PiecewiseAffineSystem network(double sigma) const;
    PiecewiseAffineSystem quotient(double sigma) const;
    std::pair<PeriodicOrbit, MonodromyReport> solve_at(
        double sigma, const EventSequence& seq, const ShootingGuess& guess,
        const NewtonSettings& settings = {}) const;
};

struct ContinuationSettings {
    double step = 1e-3;          // natural-parameter step in sigma
    NewtonSettings newton;
    double bisection_width = 1e-5;
    double reseed_time = 400.0;  // simulation horizon when re-extracting
    double norm_jump_tol = 0.1;  // larger jumps trigger re-validation
};

/// Natural-parameter continuation with warm starts from sigma_start towards
/// sigma_end.  Newton failures halve the step twice, then the branch ends;
/// event-sequence changes trigger re-extraction from simulation.  Stability
/// changes are bracketed to bisection_width and classified.
Branch continue_branch(const ClusterStateProblem& prob, const PeriodicOrbit& seed,
                       double sigma_start, double sigma_end,
                       const ContinuationSettings& settings = {});

/// Same marching for a general one-parameter family of systems; synchronous
/// monodromy only (no transverse blocks).
Branch continue_parameter(const std::function<PiecewiseAffineSystem(double)>& sys_at,
                          const PeriodicOrbit& seed, double p_start, double p_end,
                          const ContinuationSettings& settings = {});

/// Crossing-locus classification on a finished bracket: multiplier within
/// 0.05 of +1 -> tangent, of -1 -> period doubling, complex pair -> torus;
/// simultaneous crossings -> degenerate.
BifurcationEvent classify(const MonodromyReport& before, const MonodromyReport& after,
                          double param_lo, double param_hi);

struct ScanSettings {
    int n_sigma_seeds = 8;
    double settle_time = 400.0;
    double match_tol = 1e-4;
    double divergence_norm = 1e6;
    unsigned seed = 2024u;
    ContinuationSettings continuation;
};

/// Seed-and-continue over a catalog of cluster partitions; branches that blow
/// up or never recur are dropped (or flagged) rather than fabricated.
std::vector<Branch> scan_states(const NodeModel& node, const Mat& G, CouplingMode mode,
                                int h_out, int h_in,
                                const std::vector<ClusterPartition>& catalog,
                                double sigma_lo, double sigma_hi,
                                const ScanSettings& settings = {});

/// Simulation with a finite-time divergence detector; returns nullopt when
/// the state norm exceeds `cap` before t_end.
std::optional<Trajectory> simulate_capped(const PiecewiseAffineSystem& sys, const Vec& z0,
                                          double t_end, double cap = 1e6,
                                          const FlowSettings& settings = {});

/// Per-node return times through a marker plane; detects p:q rhythm locking
/// between the slowest and fastest node (e.g. 2:1 multirhythms).
std::optional<double> return_time_ratio(const PiecewiseAffineSystem& sys,
                                        const Trajectory& traj, int node_a, int node_b,
                                        int marker_plane = -1);

}  // namespace pwlnet
