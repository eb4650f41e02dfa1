#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "pwlnet/numerics.hpp"

using namespace pwlnet;

namespace {

Mat random_matrix(int n, unsigned seed, double scale = 1.0) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-scale, scale);
    Mat M(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) M(i, j) = u(rng);
    return M;
}

// Fixed-step classical RK4 for dz/dt = A z + c, used as an independent check
// of the closed-form affine flow.
Vec rk4_affine(const Mat& A, const Vec& c, Vec z, double t, int steps) {
    const double h = t / steps;
    for (int s = 0; s < steps; ++s) {
        Vec k1 = A * z + c;
        Vec k2 = A * (z + 0.5 * h * k1) + c;
        Vec k3 = A * (z + 0.5 * h * k2) + c;
        Vec k4 = A * (z + h * k3) + c;
        z += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
    return z;
}

}  // namespace

TEST_CASE("expm matches closed forms") {
    SUBCASE("planar rotation") {
        const double th = 0.831;
        Mat A(2, 2);
        A << 0.0, -th, th, 0.0;
        Mat E = expm(A);
        CHECK(std::abs(E(0, 0) - std::cos(th)) < 1e-14);
        CHECK(std::abs(E(0, 1) + std::sin(th)) < 1e-14);
        CHECK(std::abs(E(1, 0) - std::sin(th)) < 1e-14);
        CHECK(std::abs(E(1, 1) - std::cos(th)) < 1e-14);
    }
    SUBCASE("diagonal") {
        Mat A = Mat::Zero(3, 3);
        A(0, 0) = -1.5;
        A(1, 1) = 0.25;
        A(2, 2) = 3.0;
        Mat E = expm(A);
        for (int i = 0; i < 3; ++i) CHECK(std::abs(E(i, i) - std::exp(A(i, i))) < 1e-12);
        CHECK(std::abs(E(0, 1)) < 1e-15);
    }
    SUBCASE("nilpotent shift") {
        Mat A = Mat::Zero(2, 2);
        A(0, 1) = 1.0;
        Mat E = expm(A);
        CHECK(std::abs(E(0, 0) - 1.0) < 1e-15);
        CHECK(std::abs(E(0, 1) - 1.0) < 1e-15);
        CHECK(std::abs(E(1, 0)) < 1e-15);
        CHECK(std::abs(E(1, 1) - 1.0) < 1e-15);
    }
    SUBCASE("large norm still accurate (scaling/squaring)") {
        const double th = 40.0;  // many wraps
        Mat A(2, 2);
        A << 0.0, -th, th, 0.0;
        Mat E = expm(A);
        CHECK(std::abs(E(0, 0) - std::cos(th)) < 1e-10);
        CHECK(std::abs(E(1, 0) - std::sin(th)) < 1e-10);
    }
}

TEST_CASE("expm semigroup property") {
    Mat A = random_matrix(5, 11u);
    Mat whole = expm(Mat(1.3 * A));
    Mat parts = expm(Mat(0.9 * A)) * expm(Mat(0.4 * A));
    CHECK((whole - parts).norm() / whole.norm() < 1e-12);
}

TEST_CASE("expm eigenvalue similarity") {
    Mat A = random_matrix(6, 23u);
    auto sa = eig(A);
    auto se = eig(expm(A));
    // exp maps the spectrum; compare as multisets via sorted |.| and arg-free
    // matching on exp(lambda).
    std::vector<std::complex<double>> expected, got;
    for (int i = 0; i < 6; ++i) {
        expected.push_back(std::exp(sa.eigenvalues[i]));
        got.push_back(se.eigenvalues[i]);
    }
    for (auto& e : expected) {
        double best = 1e9;
        for (auto& g : got) best = std::min(best, std::abs(e - g));
        CHECK(best < 1e-9 * (1.0 + std::abs(e)));
    }
}

TEST_CASE("complex expm agrees with real expm on real input") {
    Mat A = random_matrix(4, 5u);
    CMat Ac = A.cast<std::complex<double>>();
    CMat Ec = expm(Ac);
    Mat E = expm(A);
    CHECK((Ec - E.cast<std::complex<double>>()).norm() < 1e-12 * (1.0 + E.norm()));
}

TEST_CASE("affine_flow matches RK4") {
    Mat A = random_matrix(4, 77u);
    Vec c = random_matrix(4, 78u).col(0);
    Vec z0 = random_matrix(4, 79u).col(1);
    Vec closed = affine_flow(A, c, z0, 0.7);
    Vec stepped = rk4_affine(A, c, z0, 0.7, 4000);
    CHECK((closed - stepped).norm() < 1e-9 * (1.0 + closed.norm()));
}

TEST_CASE("affine_flow with singular A and negative time") {
    // A singular: constant drift along the kernel direction is handled by the
    // augmented exponential, and t < 0 inverts the flow.
    Mat A = Mat::Zero(2, 2);
    A(0, 1) = 2.0;  // dz0/dt = 2 z1 + c0, dz1/dt = c1
    Vec c(2);
    c << 0.3, 0.5;
    Vec z0(2);
    z0 << 1.0, -1.0;
    // exact: z1(t) = z1 + c1 t; z0(t) = z0 + (2 z1 + c0) t + c1 t^2
    const double t = 1.7;
    Vec zt = affine_flow(A, c, z0, t);
    CHECK(std::abs(zt[1] - (z0[1] + c[1] * t)) < 1e-12);
    CHECK(std::abs(zt[0] - (z0[0] + (2 * z0[1] + c[0]) * t + c[1] * t * t)) < 1e-12);
    Vec back = affine_flow(A, c, zt, -t);
    CHECK((back - z0).norm() < 1e-12);
}

TEST_CASE("newton_solve finds roots") {
    SUBCASE("2d polynomial system") {
        auto res = [](const Vec& x) {
            Vec r(2);
            r[0] = x[0] * x[0] + x[1] * x[1] - 4.0;
            r[1] = x[0] - x[1];
            return r;
        };
        Vec x0(2);
        x0 << 1.0, 0.5;
        Vec x = newton_solve(res, x0);
        CHECK(std::abs(x[0] - std::sqrt(2.0)) < 1e-9);
        CHECK(std::abs(x[1] - std::sqrt(2.0)) < 1e-9);
    }
    SUBCASE("damping rescues an overshooting step") {
        auto res = [](const Vec& x) {
            Vec r(1);
            r[0] = std::atan(x[0]);  // undamped Newton diverges from |x|>1.39
            return r;
        };
        Vec x0(1);
        x0 << 3.0;
        Vec x = newton_solve(res, x0);
        CHECK(std::abs(x[0]) < 1e-9);
    }
    SUBCASE("throws on no root") {
        auto res = [](const Vec& x) {
            Vec r(1);
            r[0] = x[0] * x[0] + 1.0;
            return r;
        };
        Vec x0(1);
        x0 << 0.5;
        CHECK_THROWS_AS(newton_solve(res, x0), ConvergenceError);
    }
}
