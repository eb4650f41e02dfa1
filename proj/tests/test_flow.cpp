#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "pwlnet/hybrid_flow.hpp"
#include "pwlnet/pwl_models.hpp"

using namespace pwlnet;

namespace {

PiecewiseAffineSystem if_node(double a_w = 0.0) {
    PwlIfParams p;
    p.a_w = a_w;
    return single_node(build_pwl_if(p, false));
}

}  // namespace

TEST_CASE("next_event against an analytic crossing time") {
    // In the right-hand piece with the adaptation frozen (w0 = 0, a_w = 0 so
    // w stays 0) the voltage obeys dv/dt = v + I, hence
    // v(t) = (v0 + I) e^t - I and the threshold time is log((vth+I)/(v0+I)).
    auto sys = if_node();
    Vec z0(2);
    z0 << 0.4, 0.0;
    PiecewiseAffineSystem::Label lab = sys.label_of(z0);
    auto hit = next_event(sys, z0, lab, 10.0);
    REQUIRE(hit.has_value());
    const double I = PwlIfParams{}.I;
    const double t_exact = std::log((1.0 + I) / (0.4 + I));
    CHECK(std::abs(hit->t - t_exact) < 1e-10);
    CHECK(std::abs(hit->state[0] - 1.0) < 1e-10);
    CHECK(sys.plane_kind(hit->plane) == PlaneKind::Fire);
}

TEST_CASE("next_event returns nullopt when no plane is reached") {
    auto sys = single_node(build_absolute(AbsoluteParams{}));
    Vec z0(2);
    z0 << 0.05, 0.0;
    auto hit = next_event(sys, z0, sys.label_of(z0), 0.001);
    CHECK(!hit.has_value());
}

TEST_CASE("simulate stitches segments and applies resets") {
    auto sys = if_node();
    Vec z0(2);
    z0 << 0.2, 0.0;
    auto traj = simulate(sys, z0, 30.0);
    REQUIRE(!traj.events.empty());
    int fires = 0;
    for (auto& ev : traj.events) {
        if (ev.kind == PlaneKind::Fire) {
            ++fires;
            CHECK(std::abs(ev.state_before[0] - 1.0) < 1e-9);
            CHECK(std::abs(ev.state_after[0] - 0.2) < 1e-9);
        }
    }
    CHECK(fires >= 5);
    //  segment bookkeeping: contiguous, ordered, labels match the states
    for (size_t i = 0; i + 1 < traj.segments.size(); ++i) {
        CHECK(traj.segments[i].t_end == doctest::Approx(traj.segments[i + 1].t_start));
    }
    CHECK(traj.t_end == doctest::Approx(30.0));

    SUBCASE("sampling reproduces segment endpoints") {
        auto samples = sample_trajectory(sys, traj, 0.25);
        REQUIRE(!samples.empty());
        FlowEngine eng(sys);
        for (auto& [t, z] : samples) {
            // compare against the closed-form flow of the segment strictly
            // containing t; samples pinned at reset times are ambiguous
            for (auto& seg : traj.segments) {
                if (t > seg.t_start + 1e-9 && t < seg.t_end - 1e-9) {
                    Vec ref = eng.flow(seg.label, seg.start_state, t - seg.t_start);
                    CHECK((z - ref).norm() < 1e-9);
                    break;
                }
            }
        }
    }
}

TEST_CASE("deterministic replay") {
    auto sys = if_node(0.05);
    Vec z0(2);
    z0 << 0.3, 0.1;
    auto a = simulate(sys, z0, 50.0);
    auto b = simulate(sys, z0, 50.0);
    REQUIRE(a.events.size() == b.events.size());
    CHECK((a.final_state - b.final_state).norm() == 0.0);
}

TEST_CASE("saltation matrix matches finite differences of the flow map") {
    // Propagate a perturbation through exactly one firing event and compare
    // expm(A dt2) K expm(A dt1) delta against a finite difference of the
    // time-T map. The fire reset makes K differ sharply from identity.
    auto sys = if_node(0.05);
    Vec z0(2);
    z0 << 0.5, 0.2;
    const double T = 1.2;  // brackets the first fire, well before the second
    auto traj = simulate(sys, z0, T);
    REQUIRE(traj.events.size() == 1);
    const EventRecord& ev = traj.events[0];

    FlowEngine eng(sys);
    Mat K = saltation(sys, ev);
    // piecewise-linear system: the fundamental solutions are plain matrix
    // exponentials of the region matrices
    Mat A1 = sys.region_matrix(ev.region_before);
    Mat A2 = sys.region_matrix(ev.region_after);
    Mat Phi = expm(Mat(A2 * (T - ev.time))) * K * expm(Mat(A1 * ev.time));

    std::mt19937_64 rng(17u);
    std::normal_distribution<double> gauss;
    const double h = 1e-7;
    for (int trial = 0; trial < 5; ++trial) {
        Vec d(2);
        d << gauss(rng), gauss(rng);
        d.normalize();
        Vec zp = z0 + h * d;
        auto tp = simulate(sys, zp, T);
        REQUIRE(tp.events.size() == 1);
        Vec fd = (tp.final_state - traj.final_state) / h;
        Vec lin = Phi * d;
        CHECK((fd - lin).norm() / lin.norm() < 1e-4);
    }
}

TEST_CASE("saltation is the identity for continuous switching") {
    // The absolute-value and McKean-type fields are continuous across their
    // switch planes, so perturbations pass through unchanged.
    for (auto* which : {"abs", "pml"}) {
        PiecewiseAffineSystem sys = std::string(which) == "abs"
                                        ? single_node(build_absolute(AbsoluteParams{}))
                                        : single_node(build_pml(PmlParams{}));
        Vec z0(2);
        z0 << (std::string(which) == "abs" ? 0.3 : 0.55),
            (std::string(which) == "abs" ? 0.0 : 0.45);
        auto traj = simulate(sys, z0, 25.0);
        REQUIRE(!traj.events.empty());
        for (auto& ev : traj.events) {
            Mat K = saltation(sys, ev);
            CHECK((K - Mat::Identity(2, 2)).norm() < 1e-9);
        }
    }
}

TEST_CASE("grazing contact throws, near-miss passes through") {
    // Projectile model: dz0/dt = z1, dz1/dt = -1 with a switch plane at the
    // apex height. From (0, 1) the apex z0 = 0.5 is reached at t = 1 with
    // z1 = 0, a tangential contact.
    NodeModel node;
    node.dim = 2;
    node.split_coord = 0;
    node.name = "projectile";
    Mat A(2, 2);
    A << 0.0, 1.0, 0.0, 0.0;
    Vec c(2);
    c << 0.0, -1.0;
    node.regions.push_back({"below", A, c, -std::numeric_limits<double>::infinity(), 0.5});
    node.regions.push_back({"above", A, c, 0.5, std::numeric_limits<double>::infinity()});
    SwitchPlane plane;
    plane.normal = Vec::Zero(2);
    plane.normal[0] = 1.0;
    plane.offset = 0.5;
    plane.kind = PlaneKind::Switch;
    plane.reset.linear = Mat::Identity(2, 2);
    plane.reset.offset = Vec::Zero(2);
    node.planes.push_back(plane);
    auto sys = single_node(node);

    // launch barely above the apex speed: the trajectory pokes through the
    // plane almost tangentially, which the transversality guard must reject
    FlowSettings fs;
    fs.scan_dt = 1e-4;  // the sign-change window is ~9e-4 wide
    fs.grazing_tol = 1e-3;
    Vec z0(2);
    z0 << 0.0, 1.0000001;
    CHECK_THROWS_AS(next_event(sys, z0, sys.label_of(z0), 3.0, fs), GrazingError);

    // launch clearly below the apex speed: the plane is never reached
    Vec zt(2);
    zt << 0.0, 0.9;
    CHECK(!next_event(sys, zt, sys.label_of(zt), 3.0, fs).has_value());

    // launch a bit faster: the crossing is transversal and detected exactly
    Vec z1(2);
    z1 << 0.0, 1.1;
    auto hit = next_event(sys, z1, sys.label_of(z1), 3.0);
    REQUIRE(hit.has_value());
    // z0(t) = 1.1 t - t^2/2 = 0.5 -> earliest root
    const double t_exact = 1.1 - std::sqrt(1.1 * 1.1 - 1.0);
    CHECK(std::abs(hit->t - t_exact) < 1e-9);
}

TEST_CASE("event cap throws instead of looping forever") {
    auto sys = if_node();
    Vec z0(2);
    z0 << 0.2, 0.0;
    FlowSettings fs;
    fs.max_events = 3;
    CHECK_THROWS_AS(simulate(sys, z0, 100.0, fs), NumericalError);
}
