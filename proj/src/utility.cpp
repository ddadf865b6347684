#include "qlab/utility.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

namespace qlab {

namespace {

void require_positive(double z, const char* what) {
    if (!(z > 0.0) || !std::isfinite(z)) throw std::domain_error(std::string(what) + ": argument must be positive");
}

void check_exponents(const std::vector<double>& p) {
    if (p.size() < 2) throw std::invalid_argument("collective utility needs at least two investors");
    for (std::size_t i = 0; i < p.size(); ++i) {
        if (!std::isfinite(p[i]) || p[i] > 0.0)
            throw std::invalid_argument("collective exponents must satisfy p_i <= 0");
        if (i && !(p[i - 1] < p[i])) throw std::invalid_argument("collective exponents must be strictly increasing");
    }
}

void check_simplex(const std::vector<double>& w, std::size_t n, const char* name) {
    if (w.size() != n) throw std::invalid_argument(std::string(name) + ": size mismatch with exponents");
    double s = 0.0;
    for (double v : w) {
        if (!(v > 0.0) || !std::isfinite(v)) throw std::invalid_argument(std::string(name) + " must be positive");
        s += v;
    }
    if (std::abs(s - 1.0) > 1e-12) throw std::invalid_argument(std::string(name) + " must sum to 1");
}

// Solves log(sum_i c_i exp(k_i s)) = target for s, all k_i < 0. The left side
// is convex and strictly decreasing in s, so Newton iterates approach the root
// from the left after the first step; a bracket guards against overflow.
double solve_log_exp_sum(const std::vector<double>& log_c, const std::vector<double>& k, double target,
                         double lo = std::log(1e-12), double hi = std::log(1e12)) {
    auto eval = [&](double s, double& f, double& df) {
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < k.size(); ++i) mx = std::max(mx, log_c[i] + k[i] * s);
        double sum = 0.0, dsum = 0.0;
        for (std::size_t i = 0; i < k.size(); ++i) {
            const double e = std::exp(log_c[i] + k[i] * s - mx);
            sum += e;
            dsum += k[i] * e;
        }
        f = mx + std::log(sum) - target;
        df = dsum / sum;
    };
    double f = 0.0, df = 0.0;
    // Expand bracket geometrically until f(lo) > 0 > f(hi).
    for (int it = 0;; ++it) {
        eval(lo, f, df);
        if (f > 0.0) break;
        if (it > 60) throw std::runtime_error("inverse marginal: lower bracket expansion failed");
        lo -= std::max(1.0, std::abs(lo));
    }
    for (int it = 0;; ++it) {
        eval(hi, f, df);
        if (f < 0.0) break;
        if (it > 60) throw std::runtime_error("inverse marginal: upper bracket expansion failed");
        hi += std::max(1.0, std::abs(hi));
    }
    // Start from the dominant-term estimate, clipped into the bracket.
    double s = (target - log_c.back()) / k.back();
    if (!(s > lo && s < hi)) s = 0.5 * (lo + hi);
    for (int it = 0; it < 200; ++it) {
        eval(s, f, df);
        if (f == 0.0) return s;
        if (f > 0.0) lo = s; else hi = s;
        double next = s - f / df;
        if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
        const double step = std::abs(next - s);
        s = next;
        if (step <= 1e-14 * std::max(1.0, std::abs(s)) || hi - lo <= 1e-15 * std::max(1.0, std::abs(s))) return s;
    }
    return s;
}

struct PowerLawTerms {
    std::vector<double> log_c;  // log coefficient
    std::vector<double> k;      // exponent
};

// Pareto: I(z) = sum beta_i^(1-q_i) z^(q_i-1).
PowerLawTerms pareto_terms(const ParetoCollective& pc) {
    PowerLawTerms t;
    for (std::size_t i = 0; i < pc.exponents.size(); ++i) {
        const double q = crra_q(pc.exponents[i]);
        t.log_c.push_back((1.0 - q) * std::log(pc.weights[i]));
        t.k.push_back(q - 1.0);
    }
    return t;
}

// Linear sharing: U'(x) = sum w_i x^(p_i - 1).
PowerLawTerms sharing_terms(const LinearSharing& ls) {
    PowerLawTerms t;
    for (std::size_t i = 0; i < ls.exponents.size(); ++i) {
        t.log_c.push_back(std::log(ls.w[i]));
        t.k.push_back(ls.exponents[i] - 1.0);
    }
    return t;
}

double crra_value(double p, double x) { return p == 0.0 ? std::log(x) : std::pow(x, p) / p; }

struct SharingDerivs {
    double u1 = 0.0, u2 = 0.0, u3 = 0.0;  // U', U'', U'''
};

SharingDerivs sharing_derivs(const LinearSharing& ls, double x) {
    SharingDerivs d;
    for (std::size_t i = 0; i < ls.exponents.size(); ++i) {
        const double p = ls.exponents[i];
        const double t = ls.w[i] * std::pow(x, p - 1.0);
        d.u1 += t;
        d.u2 += (p - 1.0) * t / x;
        d.u3 += (p - 1.0) * (p - 2.0) * t / (x * x);
    }
    return d;
}

template <class... Ts>
struct Overloaded : Ts... {
    using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

}  // namespace

double crra_q(double p) {
    if (p == 0.0) return 0.0;
    if (!(p < 1.0)) throw std::domain_error("crra_q: exponent must be < 1");
    return p / (p - 1.0);
}

Utility Utility::power(double p) {
    if (!std::isfinite(p) || !(p < 1.0) || p == 0.0)
        throw std::invalid_argument("power utility requires p < 1, p != 0 (use log for p = 0)");
    return Utility(PowerUtility{p}, 1.0);
}

Utility Utility::log() { return Utility(LogUtility{}, 1.0); }

Utility Utility::pareto(std::vector<double> weights, std::vector<double> exponents) {
    check_exponents(exponents);
    check_simplex(weights, exponents.size(), "Pareto weights");
    return Utility(ParetoCollective{std::move(weights), std::move(exponents)}, 1.0);
}

Utility Utility::linear_sharing(std::vector<double> proportions, std::vector<double> weights,
                                std::vector<double> exponents) {
    check_exponents(exponents);
    check_simplex(proportions, exponents.size(), "sharing proportions");
    check_simplex(weights, exponents.size(), "sharing weights");
    LinearSharing ls{std::move(proportions), std::move(weights), std::move(exponents), {}};
    for (std::size_t i = 0; i < ls.exponents.size(); ++i)
        ls.w.push_back(ls.weights[i] * std::pow(ls.proportions[i], ls.exponents[i]));
    return Utility(std::move(ls), 1.0);
}

Utility Utility::linear_sharing_from_weights(std::vector<double> w, std::vector<double> exponents) {
    check_exponents(exponents);
    if (w.size() != exponents.size()) throw std::invalid_argument("sharing weights: size mismatch with exponents");
    for (double v : w)
        if (!(v > 0.0) || !std::isfinite(v)) throw std::invalid_argument("sharing weights must be positive");
    return Utility(LinearSharing{{}, {}, std::move(exponents), std::move(w)}, 1.0);
}

Utility Utility::scaled(double c) const {
    if (!(c > 0.0) || !std::isfinite(c)) throw std::invalid_argument("utility scale must be positive");
    return Utility(v_, scale_ * c);
}

UtilityKind Utility::kind() const {
    return std::visit(Overloaded{[](const PowerUtility&) { return UtilityKind::Power; },
                                 [](const LogUtility&) { return UtilityKind::Log; },
                                 [](const ParetoCollective&) { return UtilityKind::Pareto; },
                                 [](const LinearSharing&) { return UtilityKind::LinearSharing; }},
                      v_);
}

std::vector<double> Utility::exponents() const {
    return std::visit(Overloaded{[](const PowerUtility& u) { return std::vector<double>{u.p}; },
                                 [](const LogUtility&) { return std::vector<double>{0.0}; },
                                 [](const ParetoCollective& u) { return u.exponents; },
                                 [](const LinearSharing& u) { return u.exponents; }},
                      v_);
}

std::string Utility::describe() const {
    std::ostringstream os;
    os.precision(10);
    auto list = [&](const std::vector<double>& v) {
        os << '(';
        for (std::size_t i = 0; i < v.size(); ++i) os << (i ? "," : "") << v[i];
        os << ')';
    };
    std::visit(Overloaded{[&](const PowerUtility& u) { os << "power(p=" << u.p << ')'; },
                          [&](const LogUtility&) { os << "log"; },
                          [&](const ParetoCollective& u) {
                              os << "pareto(beta=";
                              list(u.weights);
                              os << ",p=";
                              list(u.exponents);
                              os << ')';
                          },
                          [&](const LinearSharing& u) {
                              os << "linear_sharing(w=";
                              list(u.w);
                              os << ",p=";
                              list(u.exponents);
                              os << ')';
                          }},
               v_);
    if (scale_ != 1.0) os << "*" << scale_;
    return os.str();
}

double Utility::value(double x) const {
    require_positive(x, "utility value");
    const double base = std::visit(
        Overloaded{[&](const PowerUtility& u) { return crra_value(u.p, x); },
                   [&](const LogUtility&) { return std::log(x); },
                   [&](const ParetoCollective& u) {
                       // Optimal split x_i = I_i(z / beta_i) with z = U'(x).
                       const auto t = pareto_terms(u);
                       const double z = std::exp(solve_log_exp_sum(t.log_c, t.k, std::log(x)));
                       double v = 0.0;
                       for (std::size_t i = 0; i < u.exponents.size(); ++i) {
                           const double xi = std::pow(z / u.weights[i], crra_q(u.exponents[i]) - 1.0);
                           v += u.weights[i] * crra_value(u.exponents[i], xi);
                       }
                       return v;
                   },
                   [&](const LinearSharing& u) {
                       double v = 0.0;
                       for (std::size_t i = 0; i < u.exponents.size(); ++i) v += u.w[i] * crra_value(u.exponents[i], x);
                       return v;
                   }},
        v_);
    return scale_ * base;
}

double Utility::marginal(double x) const {
    require_positive(x, "marginal utility");
    const double base =
        std::visit(Overloaded{[&](const PowerUtility& u) { return std::pow(x, u.p - 1.0); },
                              [&](const LogUtility&) { return 1.0 / x; },
                              [&](const ParetoCollective& u) {
                                  const auto t = pareto_terms(u);
                                  return std::exp(solve_log_exp_sum(t.log_c, t.k, std::log(x)));
                              },
                              [&](const LinearSharing& u) { return sharing_derivs(u, x).u1; }},
                   v_);
    return scale_ * base;
}

double Utility::inverse_marginal(double z) const {
    require_positive(z, "inverse marginal");
    const double zs = z / scale_;
    return std::visit(Overloaded{[&](const PowerUtility& u) { return std::pow(zs, crra_q(u.p) - 1.0); },
                                 [&](const LogUtility&) { return 1.0 / zs; },
                                 [&](const ParetoCollective& u) {
                                     double s = 0.0;
                                     for (std::size_t i = 0; i < u.exponents.size(); ++i)
                                         s += std::pow(zs / u.weights[i], crra_q(u.exponents[i]) - 1.0);
                                     return s;
                                 },
                                 [&](const LinearSharing& u) {
                                     const auto t = sharing_terms(u);
                                     return std::exp(solve_log_exp_sum(t.log_c, t.k, std::log(zs)));
                                 }},
                      v_);
}

double Utility::inverse_marginal_derivative_weighted(double z) const {
    require_positive(z, "inverse marginal derivative");
    const double zs = z / scale_;
    return std::visit(Overloaded{[&](const PowerUtility& u) {
                                     const double q = crra_q(u.p);
                                     return (q - 1.0) * std::pow(zs, q - 1.0);
                                 },
                                 [&](const LogUtility&) { return -1.0 / zs; },
                                 [&](const ParetoCollective& u) {
                                     double s = 0.0;
                                     for (std::size_t i = 0; i < u.exponents.size(); ++i) {
                                         const double q = crra_q(u.exponents[i]);
                                         s += (q - 1.0) * std::pow(zs / u.weights[i], q - 1.0);
                                     }
                                     return s;
                                 },
                                 [&](const LinearSharing& u) {
                                     const auto t = sharing_terms(u);
                                     const double x = std::exp(solve_log_exp_sum(t.log_c, t.k, std::log(zs)));
                                     const auto d = sharing_derivs(u, x);
                                     return d.u1 / d.u2;  // -ART(x)
                                 }},
                      v_);
}

double Utility::inverse_marginal_curvature(double z) const {
    require_positive(z, "inverse marginal curvature");
    const double zs = z / scale_;
    return std::visit(Overloaded{[&](const PowerUtility& u) {
                                     const double q = crra_q(u.p);
                                     return (q - 1.0) * (q - 1.0) * std::pow(zs, q - 1.0);
                                 },
                                 [&](const LogUtility&) { return 1.0 / zs; },
                                 [&](const ParetoCollective& u) {
                                     double s = 0.0;
                                     for (std::size_t i = 0; i < u.exponents.size(); ++i) {
                                         const double q = crra_q(u.exponents[i]);
                                         s += (q - 1.0) * (q - 1.0) * std::pow(zs / u.weights[i], q - 1.0);
                                     }
                                     return s;
                                 },
                                 [&](const LinearSharing& u) {
                                     const auto t = sharing_terms(u);
                                     const double x = std::exp(solve_log_exp_sum(t.log_c, t.k, std::log(zs)));
                                     const auto d = sharing_derivs(u, x);
                                     const double art = -d.u1 / d.u2;
                                     const double dart = -1.0 + d.u1 * d.u3 / (d.u2 * d.u2);
                                     return dart * art;
                                 }},
                      v_);
}

void Utility::inverse_marginal_pair(double z, double& i_out, double& j_out) const {
    require_positive(z, "inverse marginal");
    const double zs = z / scale_;
    std::visit(Overloaded{[&](const PowerUtility& u) {
                              const double q = crra_q(u.p);
                              i_out = std::pow(zs, q - 1.0);
                              j_out = (q - 1.0) * i_out;
                          },
                          [&](const LogUtility&) {
                              i_out = 1.0 / zs;
                              j_out = -1.0 / zs;
                          },
                          [&](const ParetoCollective& u) {
                              double si = 0.0, sj = 0.0;
                              for (std::size_t i = 0; i < u.exponents.size(); ++i) {
                                  const double q = crra_q(u.exponents[i]);
                                  const double t = std::pow(zs / u.weights[i], q - 1.0);
                                  si += t;
                                  sj += (q - 1.0) * t;
                              }
                              i_out = si;
                              j_out = sj;
                          },
                          [&](const LinearSharing& u) {
                              const auto t = sharing_terms(u);
                              const double x = std::exp(solve_log_exp_sum(t.log_c, t.k, std::log(zs)));
                              const auto d = sharing_derivs(u, x);
                              i_out = x;
                              j_out = d.u1 / d.u2;
                          }},
               v_);
}

double Utility::risk_tolerance(double x) const {
    require_positive(x, "risk tolerance");
    return std::visit(Overloaded{[&](const PowerUtility& u) { return x / (1.0 - u.p); },
                                 [&](const LogUtility&) { return x; },
                                 [&](const ParetoCollective&) {
                                     // ART(x) = -J(U'(x)); scale cancels.
                                     return -inverse_marginal_derivative_weighted(marginal(x));
                                 },
                                 [&](const LinearSharing& u) {
                                     const auto d = sharing_derivs(u, x);
                                     return -d.u1 / d.u2;
                                 }},
                      v_);
}

bool Utility::same_as(const Utility& o) const {
    if (kind() != o.kind() || scale_ != o.scale_) return false;
    return std::visit(
        Overloaded{[&](const PowerUtility& u) { return u.p == std::get<PowerUtility>(o.v_).p; },
                   [&](const LogUtility&) { return true; },
                   [&](const ParetoCollective& u) {
                       const auto& v = std::get<ParetoCollective>(o.v_);
                       return u.weights == v.weights && u.exponents == v.exponents;
                   },
                   [&](const LinearSharing& u) {
                       const auto& v = std::get<LinearSharing>(o.v_);
                       return u.w == v.w && u.exponents == v.exponents;
                   }},
        v_);
}

std::optional<double> reference_exponent(const Utility& u) {
    switch (u.kind()) {
        case UtilityKind::Power: return std::get<PowerUtility>(u.variant()).p;
        case UtilityKind::Log: return 0.0;
        default: return std::nullopt;
    }
}

std::vector<double> default_zgrid(std::size_t points, double lo, double hi) {
    if (points < 2 || !(lo > 0.0) || !(hi > lo)) throw std::invalid_argument("default_zgrid: bad range");
    std::vector<double> z(points);
    const double a = std::log(lo), b = std::log(hi);
    for (std::size_t i = 0; i < points; ++i) z[i] = std::exp(a + (b - a) * double(i) / double(points - 1));
    return z;
}

std::pair<double, double> linear_sharing_beta_range(const Utility& u) {
    if (u.kind() != UtilityKind::LinearSharing) throw std::invalid_argument("not a linear sharing utility");
    const auto p = u.exponents();
    const std::size_t n = p.size();
    return {std::max(0.0, 1.0 + p[n - 2] - p[n - 1]), 1.0};
}

DiffBoundEstimate estimate_diff_bound(const Utility& u1, const Utility& u2, std::span<const double> zgrid,
                                      std::optional<double> alpha_override, std::optional<double> sharing_beta) {
    const auto p_ref = reference_exponent(u2);
    if (!p_ref) throw std::invalid_argument("estimate_diff_bound: reference utility must be power or log");
    if (zgrid.size() < 2) throw std::invalid_argument("estimate_diff_bound: grid too small");
    for (std::size_t i = 1; i < zgrid.size(); ++i)
        if (!(zgrid[i] > zgrid[i - 1]) || !(zgrid[0] > 0.0))
            throw std::invalid_argument("estimate_diff_bound: grid must be positive and ascending");
    if (std::log10(zgrid.back() / zgrid.front()) < 8.0 - 1e-9)
        throw std::invalid_argument("estimate_diff_bound: grid must span at least 8 decades");

    const double q = crra_q(*p_ref);
    DiffBoundEstimate est;
    est.zgrid.assign(zgrid.begin(), zgrid.end());

    // Normalization C = lim_{z->0} I1(z) / I2(z), from the dominant block of u1.
    double base_c = 1.0;
    std::optional<double> alpha_theory;
    const auto p1 = u1.exponents();
    if (u1.kind() == UtilityKind::Power || u1.kind() == UtilityKind::Log) {
        if (p1[0] == *p_ref) alpha_theory = 0.0;
    } else if (p1.back() == *p_ref) {
        if (u1.kind() == UtilityKind::Pareto) {
            const auto& pc = std::get<ParetoCollective>(u1.variant());
            base_c = std::pow(pc.weights.back(), 1.0 - q);
            alpha_theory = crra_q(p1[p1.size() - 2]) - 1.0;
        } else {
            const auto& ls = std::get<LinearSharing>(u1.variant());
            base_c = std::pow(ls.w.back(), 1.0 - q);
            const auto [lo, hi] = linear_sharing_beta_range(u1);
            const double beta = sharing_beta.value_or(0.5 * (lo + hi));
            if (!(beta > lo && beta < hi) && !(beta == 0.0 && lo == 0.0))
                throw std::domain_error("estimate_diff_bound: sharing beta outside admissible interval");
            alpha_theory = beta * (q - 1.0);
        }
    }
    // I_{cU}(z) = I(z/c): scales enter through (c2/c1)^(q-1).
    est.normalization = base_c * std::pow(u2.scale() / u1.scale(), q - 1.0);

    if (alpha_override) {
        est.alpha = *alpha_override;
        est.alpha_from_theory = false;
    } else if (alpha_theory) {
        est.alpha = *alpha_theory;
        est.alpha_from_theory = true;
    } else {
        throw std::invalid_argument("estimate_diff_bound: no theoretical alpha for this pair; supply one");
    }
    if (!(est.alpha > q - 1.0 && est.alpha <= 0.0))
        throw std::domain_error("estimate_diff_bound: alpha must lie in (q-1, 0]");

    const std::size_t N = zgrid.size();
    std::vector<double> ratio(N), lhs(N), bound_shape(N);
    for (std::size_t i = 0; i < N; ++i) {
        const double z = zgrid[i];
        double i1, j1, i2, j2;
        u1.inverse_marginal_pair(z, i1, j1);
        u2.inverse_marginal_pair(z, i2, j2);
        const double d0 = std::abs(i1 - est.normalization * i2);
        const double d1 = std::abs(j1 - est.normalization * j2);
        lhs[i] = std::max(d0, d1);
        bound_shape[i] = 1.0 + std::pow(z, est.alpha);
        ratio[i] = lhs[i] / bound_shape[i];
    }
    est.K = *std::max_element(ratio.begin(), ratio.end());
    est.max_violation = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < N; ++i) est.max_violation = std::max(est.max_violation, lhs[i] - est.K * bound_shape[i]);

    // Tail diagnostic: does the ratio keep growing toward either grid edge?
    auto sup_between = [&](double lo, double hi) {
        double s = 0.0;
        for (std::size_t i = 0; i < N; ++i)
            if (zgrid[i] >= lo && zgrid[i] <= hi) s = std::max(s, ratio[i]);
        return s;
    };
    const double zlo = zgrid.front(), zhi = zgrid.back();
    double growth = 1.0;
    if (est.K > 0.0) {
        const double low_edge = sup_between(zlo, zlo * 10.0), low_inner = sup_between(zlo * 10.0, zlo * 100.0);
        const double hi_edge = sup_between(zhi / 10.0, zhi), hi_inner = sup_between(zhi / 100.0, zhi / 10.0);
        if (low_inner > 0.0) growth = std::max(growth, low_edge / low_inner);
        if (hi_inner > 0.0) growth = std::max(growth, hi_edge / hi_inner);
    }
    est.edge_growth = growth;
    est.feasible = est.max_violation <= 0.0 && growth <= 1.05;
    std::ostringstream os;
    os << "K=" << est.K << " alpha=" << est.alpha << " C=" << est.normalization << " edge_growth=" << growth;
    if (!est.feasible) os << " (ratio grows toward the grid edge: alpha too large for this pair)";
    est.diagnostic = os.str();
    return est;
}

}  // namespace qlab
