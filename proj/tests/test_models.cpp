#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "pwlnet/hybrid_flow.hpp"
#include "pwlnet/isotypic.hpp"
#include "pwlnet/pwl_models.hpp"

using namespace pwlnet;

namespace {

std::vector<double> sorted_real_eigs(const Mat& M) {
    auto s = eig(M);
    std::vector<double> out;
    for (int i = 0; i < s.eigenvalues.size(); ++i) {
        REQUIRE(std::abs(s.eigenvalues[i].imag()) < 1e-9);
        out.push_back(s.eigenvalues[i].real());
    }
    std::sort(out.begin(), out.end());
    return out;
}

}  // namespace

TEST_CASE("five node Laplacian basics") {
    Mat G = five_node_laplacian();
    REQUIRE(G.rows() == 5);
    // Laplacian sign convention: zero row sums, nonnegative diagonal.
    for (int i = 0; i < 5; ++i) {
        CHECK(std::abs(G.row(i).sum()) < 1e-14);
        CHECK(G(i, i) >= 0.0);
    }
    CHECK((G - G.transpose()).norm() < 1e-14);
    auto ev = sorted_real_eigs(G);
    std::vector<double> expected = {0.0, 3.0, 3.0, 5.0, 5.0};
    for (int i = 0; i < 5; ++i) CHECK(std::abs(ev[i] - expected[i]) < 1e-10);
}

TEST_CASE("ring coupling is balanced and circulant") {
    CouplingSpec ring = ring_coupling(31, 3.0);
    const Mat& W = ring.matrix;
    REQUIRE(W.rows() == 31);
    for (int i = 0; i < 31; ++i) CHECK(std::abs(W.row(i).sum()) < 1e-12);
    CHECK((W - W.transpose()).norm() < 1e-12);
    // circulant: W(i,j) depends only on ring distance
    for (int i = 0; i < 31; ++i)
        for (int j = 0; j < 31; ++j)
            CHECK(std::abs(W(i, j) - W(0, (j - i + 31) % 31)) < 1e-14);

    // closed-form circulant eigenvalues against a direct dense solve
    CVec lam = ring_eigenvalues(ring);
    auto dense = eig(W);
    std::vector<double> a, b;
    for (int i = 0; i < 31; ++i) {
        CHECK(std::abs(lam[i].imag()) < 1e-10);  // symmetric => real
        a.push_back(lam[i].real());
        b.push_back(dense.eigenvalues[i].real());
    }
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    for (int i = 0; i < 31; ++i) CHECK(std::abs(a[i] - b[i]) < 1e-9);
}

TEST_CASE("partition balance matches brute-force row sums") {
    Mat G = five_node_laplacian();
    std::mt19937_64 rng(3u);
    // brute-force oracle: for every pair of clusters, the row sums of G over
    // the source cluster must agree across all nodes of the target cluster
    auto oracle = [&](const std::vector<std::vector<int>>& blocks) {
        for (const auto& tgt : blocks)
            for (const auto& src : blocks) {
                double ref = 0.0;
                bool first = true;
                for (int i : tgt) {
                    double s = 0.0;
                    for (int j : src) s += G(i, j);
                    if (first) {
                        ref = s;
                        first = false;
                    } else if (std::abs(s - ref) > 1e-12) {
                        return false;
                    }
                }
            }
        return true;
    };
    std::vector<std::vector<std::vector<int>>> cases = {
        {{0, 1, 2, 3, 4}},
        {{0, 1, 2, 3}, {4}},
        {{0, 2}, {1, 3}, {4}},
        {{0, 2, 4}, {1, 3}},
        {{0, 1}, {2, 3, 4}},
        {{0, 4}, {1, 2, 3}},
        {{0, 3}, {1, 2}, {4}},
    };
    for (const auto& blocks : cases) {
        CHECK(partition_balanced(G, blocks) == oracle(blocks));
    }
}

TEST_CASE("integrate-and-fire node pieces") {
    PwlIfParams p;
    NodeModel node = build_pwl_if(p, false);
    REQUIRE(node.dim == 2);
    REQUIRE(node.regions.size() == 2);
    // left piece: dv/dt = -v - w + I, right piece: dv/dt = +v - w + I
    CHECK(node.regions[0].A(0, 0) == doctest::Approx(-1.0));
    CHECK(node.regions[1].A(0, 0) == doctest::Approx(1.0));
    CHECK(node.regions[0].A(0, 1) == doctest::Approx(-1.0));
    CHECK(node.regions[0].c[0] == doctest::Approx(p.I));
    // adaptation: dw/dt = (a_w v + b_w w)/tau with defaults a_w=0, b_w=-1
    CHECK(node.regions[0].A(1, 1) == doctest::Approx(p.b_w / p.tau));
    CHECK(node.regions[0].A(1, 0) == doctest::Approx(p.a_w / p.tau));

    // firing plane at v_th with reset v -> v_r and adaptation kick kappa/tau
    const SwitchPlane* fire = nullptr;
    for (auto& pl : node.planes)
        if (pl.kind == PlaneKind::Fire) fire = &pl;
    REQUIRE(fire != nullptr);
    CHECK(fire->offset == doctest::Approx(p.v_th));
    Vec z(2);
    z << p.v_th, 0.37;
    Vec zr = fire->reset.linear * z + fire->reset.offset;
    CHECK(zr[0] == doctest::Approx(p.v_r));
    CHECK(zr[1] == doctest::Approx(0.37 + p.kappa / p.tau));

    SUBCASE("synaptic 4d variant appends relaxation chain") {
        NodeModel n4 = build_pwl_if(p, true);
        REQUIRE(n4.dim == 4);
        // ds/dt = alpha (u - s), du/dt = -alpha u, fire kicks u by alpha
        CHECK(n4.regions[0].A(2, 2) == doctest::Approx(-p.alpha));
        CHECK(n4.regions[0].A(2, 3) == doctest::Approx(p.alpha));
        CHECK(n4.regions[0].A(3, 3) == doctest::Approx(-p.alpha));
        const SwitchPlane* f4 = nullptr;
        for (auto& pl : n4.planes)
            if (pl.kind == PlaneKind::Fire) f4 = &pl;
        REQUIRE(f4 != nullptr);
        CHECK(f4->reset.offset[3] == doctest::Approx(p.alpha));
        // voltage pieces unchanged
        CHECK(n4.regions[0].A.topLeftCorner(2, 2).isApprox(node.regions[0].A));
    }
}

TEST_CASE("absolute-value node is continuous") {
    NodeModel node = build_absolute(AbsoluteParams{});
    REQUIRE(node.regions.size() == 2);
    auto sys = single_node(node);
    CHECK(sys.continuous_at_switches());
    // |v| kink at v=0: the two pieces differ only in the dv/dv entry sign
    CHECK(node.regions[0].A(0, 0) == doctest::Approx(-node.regions[1].A(0, 0)));
}

TEST_CASE("McKean-type node pieces and parameters") {
    PmlParams p;
    NodeModel node = build_pml(p);
    REQUIRE(node.dim == 2);
    REQUIRE(node.regions.size() == 4);
    // breakpoints of the cubic-like voltage nullcline caricature
    CHECK(node.regions[0].hi == doctest::Approx(p.b / 4.0));
    CHECK(node.regions[1].hi == doctest::Approx(p.b));
    CHECK(node.regions[2].hi == doctest::Approx(p.b + p.b / 4.0));
    // falling-rising-rising-falling voltage slopes: the break at v = b only
    // switches the recovery rate, not the nullcline branch
    CHECK(node.regions[0].A(0, 0) == doctest::Approx(-1.0 / p.C));
    CHECK(node.regions[1].A(0, 0) == doctest::Approx(1.0 / p.C));
    CHECK(node.regions[2].A(0, 0) == doctest::Approx(1.0 / p.C));
    CHECK(node.regions[3].A(0, 0) == doctest::Approx(-1.0 / p.C));
    for (auto& r : node.regions) CHECK(r.A(0, 1) == doctest::Approx(-1.0 / p.C));
    // slow variable: dw/dt = v/gamma - w + offset, gamma switching at v=b
    CHECK(node.regions[0].A(1, 0) == doctest::Approx(1.0 / p.gamma1));
    CHECK(node.regions[3].A(1, 0) == doctest::Approx(1.0 / p.gamma2));
    for (auto& r : node.regions) CHECK(r.A(1, 1) == doctest::Approx(-1.0));
    auto sys = single_node(node);
    CHECK(sys.continuous_at_switches());

    SUBCASE("bistable rest point and unstable focus") {
        // rest state in the leftmost piece
        const Mat& A0 = node.regions[0].A;
        Vec fp0 = A0.fullPivLu().solve(Vec(-node.regions[0].c));
        CHECK(node.region_of(fp0) == 0);
        auto s0 = eig(A0);
        for (int i = 0; i < 2; ++i) CHECK(s0.eigenvalues[i].real() < 0.0);
        // focus in the third piece sits inside that piece and is unstable
        const Mat& A2 = node.regions[2].A;
        Vec fp2 = A2.fullPivLu().solve(Vec(-node.regions[2].c));
        CHECK(node.region_of(fp2) == 2);
        auto s2 = eig(A2);
        CHECK(s2.eigenvalues[0].real() > 0.0);
        CHECK(std::abs(s2.eigenvalues[0].imag()) > 0.0);
    }
}

TEST_CASE("coupling spec helpers") {
    CouplingSpec cs;
    cs.matrix = five_node_laplacian();
    CHECK(cs.balanced());
    Mat dh = cs.dh(4);
    CHECK(dh.rows() == 4);
    CHECK(dh.sum() == doctest::Approx(1.0));
    CHECK(dh(cs.h_in, cs.h_out) == doctest::Approx(1.0));
    cs.matrix(0, 0) += 0.5;
    CHECK(!cs.balanced());
}

TEST_CASE("network assembly couples one component pair") {
    NodeModel node = build_absolute(AbsoluteParams{});
    CouplingSpec cs;
    cs.matrix = five_node_laplacian();
    cs.strength = 0.1;
    cs.h_out = 0;
    cs.h_in = 0;
    auto net = build_network(node, cs);
    REQUIRE(net.dim() == 10);
    PiecewiseAffineSystem::Label lab(5, 0);
    Mat A = net.region_matrix(lab);
    Mat expected = Mat::Zero(10, 10);
    for (int n = 0; n < 5; ++n) expected.block(2 * n, 2 * n, 2, 2) = node.regions[0].A;
    expected -= cs.strength * kron(cs.matrix, cs.dh(2));
    CHECK((A - expected).norm() < 1e-12);
}

TEST_CASE("quotient network flow agrees with the full network") {
    NodeModel node = build_absolute(AbsoluteParams{});
    CouplingSpec cs;
    cs.matrix = five_node_laplacian();
    cs.mode = CouplingMode::Laplacian;
    cs.strength = -0.03;
    auto net = build_network(node, cs);
    std::vector<std::vector<int>> blocks = {{0, 2, 4}, {1, 3}};
    auto quo = quotient_system(net, blocks);
    REQUIRE(quo.dim() == 4);
    // reduced coupling rows are the per-cluster row sums of G
    Mat Ghat = quo.coupling->matrix;
    Mat expected(2, 2);
    expected << 2.0, -2.0, -3.0, 3.0;
    CHECK((Ghat - expected).norm() < 1e-12);

    // cluster-constant initial data: lifted quotient flow == full flow
    Vec q0(4);
    q0 << 0.31, -0.02, 0.24, 0.06;
    Vec z0(10);
    for (int n : {0, 2, 4}) z0.segment(2 * n, 2) = q0.segment(0, 2);
    for (int n : {1, 3}) z0.segment(2 * n, 2) = q0.segment(2, 2);
    auto tq = simulate(quo, q0, 20.0);
    auto tf = simulate(net, z0, 20.0);
    Vec lifted(10);
    for (int n : {0, 2, 4}) lifted.segment(2 * n, 2) = tq.final_state.segment(0, 2);
    for (int n : {1, 3}) lifted.segment(2 * n, 2) = tq.final_state.segment(2, 2);
    CHECK((lifted - tf.final_state).norm() < 1e-9);
}
