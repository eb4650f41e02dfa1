#pragma once

#include <map>
#include <optional>

#include "pwlnet/pwl_models.hpp"

namespace pwlnet {

struct FlowSettings {
    double event_time_tol = 1e-12;  // bisection bracket width
    double char_time = 1.0;         // scan step = min(0.01*char_time, t_max/1000)
    double scan_dt = 0.0;           // fixed scan step when > 0 (overrides formula)
    double grazing_tol = 1e-8;      // |grad h . zdot| <= tol*|zdot| is grazing
    double nudge = 1e-12;
    long max_events = 1000000;
};

struct EventRecord {
    double time = 0.0;
    int plane = -1;
    PlaneKind kind = PlaneKind::Switch;
    Vec state_before, state_after;
    PiecewiseAffineSystem::Label region_before, region_after;
};

struct TrajectorySegment {
    PiecewiseAffineSystem::Label label;
    double t_start = 0.0, t_end = 0.0;
    Vec start_state;
};

struct Trajectory {
    std::vector<TrajectorySegment> segments;
    std::vector<EventRecord> events;
    Vec final_state;
    double t_end = 0.0;
};

struct EventHit {
    double t = 0.0;  // relative to segment start
    int plane = -1;
    Vec state;  // at the event, on the incoming side
};

/// Event-driven integrator for one PiecewiseAffineSystem.  Caches the
/// per-region matrix exponentials (scan step plus its dyadic halvings) that
/// the scan-and-bisect event location reuses across calls.
class FlowEngine {
  public:
    explicit FlowEngine(const PiecewiseAffineSystem& sys, FlowSettings settings = {});

    const PiecewiseAffineSystem& system() const { return sys_; }
    const FlowSettings& settings() const { return settings_; }

    /// Closed-form flow within a fixed region.
    Vec flow(const PiecewiseAffineSystem::Label& label, const Vec& z0, double t) const;

    /// Earliest transversal plane crossing in (0, t_max], or nullopt.
    /// Throws GrazingError when the located event is tangential.
    std::optional<EventHit> next_event(const Vec& z0,
                                       const PiecewiseAffineSystem::Label& label,
                                       double t_max);

    Trajectory simulate(const Vec& z0, double t_end);

  private:
    struct RegionData {
        Mat A;
        Vec c;
        Mat aug;              // [[A, c], [0, 0]]
        double dt = 0.0;      // scan step the cached exponentials refer to
        Mat scan_exp;         // expm(aug * dt)
        std::vector<Mat> dyadic;  // dyadic[k] = expm(aug * dt / 2^(k+1))
    };
    RegionData& region_data(const PiecewiseAffineSystem::Label& label, double dt);

    const PiecewiseAffineSystem sys_;
    FlowSettings settings_;
    std::map<PiecewiseAffineSystem::Label, RegionData> cache_;
};

/// Saltation matrix for one event: K = Dg + [zdot+ - Dg zdot-] grad_h^T / (grad_h . zdot-).
Mat saltation(const PiecewiseAffineSystem& sys, const EventRecord& event,
              double grazing_tol = 1e-8);

/// Convenience wrappers over a throwaway engine.
std::optional<EventHit> next_event(const PiecewiseAffineSystem& sys, const Vec& z0,
                                   const PiecewiseAffineSystem::Label& label,
                                   double t_max, const FlowSettings& settings = {});
Trajectory simulate(const PiecewiseAffineSystem& sys, const Vec& z0, double t_end,
                    const FlowSettings& settings = {});

/// States sampled at uniform spacing from the stored closed-form segments.
std::vector<std::pair<double, Vec>> sample_trajectory(const PiecewiseAffineSystem& sys,
                                                      const Trajectory& traj,
                                                      double dt_sample);

}  // namespace pwlnet
