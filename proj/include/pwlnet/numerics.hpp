#pragma once

#include <Eigen/Dense>
#include <complex>
#include <functional>
#include <stdexcept>

namespace pwlnet {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;
using CMat = Eigen::MatrixXcd;
using CVec = Eigen::VectorXcd;

struct NumericalError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct ConvergenceError : NumericalError {
    using NumericalError::NumericalError;
};
struct GrazingError : NumericalError {
    using NumericalError::NumericalError;
};

/// Global tolerances shared across modules.
struct NumericTolerances {
    double event_tol = 1e-12;            // event time bracketing width
    double multiplier_unity_tol = 1e-6;  // |multiplier - 1| for the trivial one
};

struct NewtonSettings {
    double residual_tol = 1e-10;  // infinity norm
    double fd_step = 1e-7;        // forward difference step
    int max_iter = 50;
    int max_halvings = 20;
};

/// Matrix exponential, Pade scaling-and-squaring (Higham 2005).
Mat expm(const Mat& M);
CMat expm(const CMat& M);

/// Flow of dz/dt = A z + c through time t, via the augmented (m+1)
/// exponential of [[A, c], [0, 0]].  Valid for singular A and t < 0.
Vec affine_flow(const Mat& A, const Vec& c, const Vec& z0, double t);

struct ComplexSpectrum {
    CVec eigenvalues;
    CMat eigenvectors;  // column k pairs with eigenvalue k, empty unless requested
    bool has_vectors = false;
};

ComplexSpectrum eig(const Mat& M, bool want_vectors = false);
ComplexSpectrum eig(const CMat& M, bool want_vectors = false);

/// Damped Newton with forward-difference Jacobian.  Throws ConvergenceError
/// on iteration cap or a numerically singular Jacobian.
Vec newton_solve(const std::function<Vec(const Vec&)>& residual, Vec x0,
                 const NewtonSettings& settings = {});

}  // namespace pwlnet
