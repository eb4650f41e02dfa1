#include "pwlnet/numerics.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>

namespace pwlnet {

namespace {

// Higham's scaling-and-squaring with the degree-13 Pade approximant.
template <typename MatT>
MatT expm_pade13(const MatT& M) {
    using Scalar = typename MatT::Scalar;
    const Eigen::Index n = M.rows();
    const MatT I = MatT::Identity(n, n);

    const double norm1 = M.cwiseAbs().colwise().sum().maxCoeff();
    static const double theta13 = 5.371920351148152;
    int squarings = 0;
    if (norm1 > theta13) {
        squarings = static_cast<int>(std::ceil(std::log2(norm1 / theta13)));
    }
    const MatT A = M / std::pow(2.0, squarings);

    static const double b[] = {64764752532480000., 32382376266240000., 7771770303897600.,
                               1187353796428800.,  129060195264000.,   10559470521600.,
                               670442572800.,      33522128640.,       1323241920.,
                               40840800.,          960960.,            16380.,
                               182.,               1.};
    const MatT A2 = A * A;
    const MatT A4 = A2 * A2;
    const MatT A6 = A2 * A4;
    const MatT U = A * (A6 * (Scalar(b[13]) * A6 + Scalar(b[11]) * A4 + Scalar(b[9]) * A2) +
                        Scalar(b[7]) * A6 + Scalar(b[5]) * A4 + Scalar(b[3]) * A2 +
                        Scalar(b[1]) * I);
    const MatT V = A6 * (Scalar(b[12]) * A6 + Scalar(b[10]) * A4 + Scalar(b[8]) * A2) +
                   Scalar(b[6]) * A6 + Scalar(b[4]) * A4 + Scalar(b[2]) * A2 + Scalar(b[0]) * I;

    MatT R = (V - U).partialPivLu().solve(V + U);
    for (int i = 0; i < squarings; ++i) R = R * R;
    return R;
}

template <typename MatT>
void require_square_finite(const MatT& M, const char* op) {
    if (M.rows() != M.cols())
        throw std::invalid_argument(std::string(op) + ": matrix must be square");
    if (!M.allFinite())
        throw std::invalid_argument(std::string(op) + ": non-finite entries");
}

}  // namespace

Mat expm(const Mat& M) {
    require_square_finite(M, "expm");
    return expm_pade13(M);
}

CMat expm(const CMat& M) {
    require_square_finite(M, "expm");
    return expm_pade13(M);
}

Vec affine_flow(const Mat& A, const Vec& c, const Vec& z0, double t) {
    const Eigen::Index m = A.rows();
    if (A.cols() != m || c.size() != m || z0.size() != m)
        throw std::invalid_argument("affine_flow: dimension mismatch");
    Mat aug = Mat::Zero(m + 1, m + 1);
    aug.topLeftCorner(m, m) = A * t;
    aug.topRightCorner(m, 1) = c * t;
    Vec w(m + 1);
    w.head(m) = z0;
    w(m) = 1.0;
    return (expm_pade13(aug) * w).head(m);
}

ComplexSpectrum eig(const Mat& M, bool want_vectors) {
    require_square_finite(M, "eig");
    Eigen::EigenSolver<Mat> solver(M, want_vectors);
    if (solver.info() != Eigen::Success)
        throw ConvergenceError("eig: QR iteration did not converge");
    ComplexSpectrum s;
    s.eigenvalues = solver.eigenvalues();
    if (want_vectors) {
        s.eigenvectors = solver.eigenvectors();
        s.has_vectors = true;
    }
    return s;
}

ComplexSpectrum eig(const CMat& M, bool want_vectors) {
    require_square_finite(M, "eig");
    Eigen::ComplexEigenSolver<CMat> solver(M, want_vectors);
    if (solver.info() != Eigen::Success)
        throw ConvergenceError("eig: QR iteration did not converge");
    ComplexSpectrum s;
    s.eigenvalues = solver.eigenvalues();
    if (want_vectors) {
        s.eigenvectors = solver.eigenvectors();
        s.has_vectors = true;
    }
    return s;
}

Vec newton_solve(const std::function<Vec(const Vec&)>& residual, Vec x0,
                 const NewtonSettings& settings) {
    Vec r = residual(x0);
    if (!r.allFinite()) throw NumericalError("newton_solve: residual non-finite at x0");
    const Eigen::Index n = x0.size();
    if (r.size() != n)
        throw std::invalid_argument("newton_solve: residual/unknown size mismatch");

    for (int iter = 0; iter < settings.max_iter; ++iter) {
        double rnorm = r.lpNorm<Eigen::Infinity>();
        if (rnorm <= settings.residual_tol) return x0;

        Mat J(n, n);
        for (Eigen::Index j = 0; j < n; ++j) {
            Vec xp = x0;
            xp(j) += settings.fd_step;
            Vec rp = residual(xp);
            if (!rp.allFinite()) throw NumericalError("newton_solve: residual non-finite");
            J.col(j) = (rp - r) / settings.fd_step;
        }

        Eigen::JacobiSVD<Mat> svd(J, Eigen::ComputeThinU | Eigen::ComputeThinV);
        const double smax = svd.singularValues()(0);
        const double smin = svd.singularValues()(n - 1);
        if (smin <= 0.0 || smax / smin > 1e14)
            throw ConvergenceError("newton_solve: Jacobian numerically singular");
        Vec dx = svd.solve(-r);

        double step = 1.0;
        bool accepted = false;
        for (int h = 0; h <= settings.max_halvings; ++h) {
            Vec xn = x0 + step * dx;
            Vec rn = residual(xn);
            if (rn.allFinite() &&
                rn.lpNorm<Eigen::Infinity>() < rnorm) {
                x0 = xn;
                r = rn;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if (!accepted) {
            // Full step anyway: near the root the FD Jacobian can stall the
            // backtracking test on roundoff.
            x0 += dx;
            r = residual(x0);
            if (!r.allFinite()) throw NumericalError("newton_solve: residual non-finite");
        }
    }
    if (r.lpNorm<Eigen::Infinity>() <= settings.residual_tol) return x0;
    throw ConvergenceError("newton_solve: max_iter exceeded");
}

}  // namespace pwlnet
