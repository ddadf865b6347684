#pragma once

#include "qlab/model.hpp"

namespace qlab::testing {

inline Mat m1(double v) { return Mat::Constant(1, 1, v); }
inline Vec v1(double v) { return Vec::Constant(1, v); }

/// Scalar model with every coefficient given explicitly.
inline QtsmModel scalar_model(double r0, double r1, double R2, double a, double A, double b, double B,
                              double Lambda, double Sigma) {
    QtsmCoefficients c;
    c.r0 = r0;
    c.r1 = v1(r1);
    c.R2 = m1(R2);
    c.a = v1(a);
    c.A = m1(A);
    c.b = v1(b);
    c.B = m1(B);
    c.Lambda = m1(Lambda);
    c.Sigma = m1(Sigma);
    return QtsmModel::create(c);
}

/// Vasicek-type: affine rate, constant market price of risk.
inline QtsmModel vasicek() { return scalar_model(0.05, 1.0, 0.0, 0.3, 0.0, 0.0, -1.0, 0.2, 0.2); }

/// Quadratic rate with state-dependent market price of risk.
inline QtsmModel quadratic() { return scalar_model(0.1, 0.5, 0.1, 0.2, 0.5, 0.0, -1.0, 0.3, 0.2); }

/// Model of the acceptance configuration.
inline QtsmModel acceptance_model() { return scalar_model(0.8, 0.0, 0.2, 0.1, 0.0, 0.0, -1.0, 0.2, 0.2); }

}  // namespace qlab::testing
