#include "qlab/linalg.hpp"

#include <unsupported/Eigen/MatrixFunctions>

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace qlab {

StabilityVerdict is_stable(const Mat& m) {
    if (m.rows() != m.cols()) throw std::invalid_argument("is_stable: matrix is not square");
    if (m.size() == 0) return {true, -std::numeric_limits<double>::infinity()};
    Eigen::EigenSolver<Mat> es(m, false);
    if (es.info() != Eigen::Success) throw std::runtime_error("is_stable: eigenvalue computation failed");
    double mx = -std::numeric_limits<double>::infinity();
    for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i) mx = std::max(mx, es.eigenvalues()[i].real());
    return {mx < -kStabilityTol, mx};
}

double min_sym_eigenvalue(const Mat& m) {
    if (m.size() == 0) return 0.0;
    Eigen::SelfAdjointEigenSolver<Mat> es(symmetrize(m), Eigen::EigenvaluesOnly);
    return es.eigenvalues().minCoeff();
}

Mat psd_sqrt(const Mat& m, double* clipped_mass) {
    const Eigen::Index k = m.rows();
    if (k == 0) return Mat(0, 0);
    Eigen::SelfAdjointEigenSolver<Mat> es(symmetrize(m));
    Vec ev = es.eigenvalues();
    double clipped = 0.0;
    for (Eigen::Index i = 0; i < k; ++i) {
        if (ev[i] < 0.0) {
            clipped += -ev[i];
            ev[i] = 0.0;
        }
    }
    if (clipped_mass) *clipped_mass = clipped;
    return es.eigenvectors() * ev.cwiseSqrt().asDiagonal();
}

Mat expm(const Mat& m) {
    if (m.rows() != m.cols()) throw std::invalid_argument("expm: matrix is not square");
    if (m.size() == 0) return Mat(0, 0);
    return m.exp();
}

double condition_number(const Mat& m) {
    if (m.size() == 0) return 1.0;
    Eigen::JacobiSVD<Mat> svd(m);
    const auto& s = svd.singularValues();
    const double smin = s[s.size() - 1];
    if (smin <= 0.0) return std::numeric_limits<double>::infinity();
    return s[0] / smin;
}

std::string format_matrix(const Mat& m) {
    std::ostringstream os;
    os.precision(6);
    os << '[';
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        if (i) os << "; ";
        for (Eigen::Index j = 0; j < m.cols(); ++j) {
            if (j) os << ", ";
            os << m(i, j);
        }
    }
    os << ']';
    return os.str();
}

std::string format_vector(const Vec& v) {
    std::ostringstream os;
    os.precision(6);
    os << '[';
    for (Eigen::Index i = 0; i < v.size(); ++i) {
        if (i) os << ", ";
        os << v[i];
    }
    os << ']';
    return os.str();
}

}  // namespace qlab
