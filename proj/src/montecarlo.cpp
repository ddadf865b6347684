#include "qlab/montecarlo.hpp"
#include "qlab/rng.hpp"

#include <algorithm>
#include <atomic>
#include <bit>
#include <cmath>
#include <cstring>
#include <exception>
#include <iomanip>
#include <iostream>
#include <mutex>
#include <sstream>
#include <thread>
#include <type_traits>

namespace qlab {

SimGrid SimGrid::make(double T, std::size_t nsteps) {
    if (!(T > 0.0) || !std::isfinite(T)) throw std::invalid_argument("SimGrid: horizon must be positive");
    if (nsteps < 2) throw std::invalid_argument("SimGrid: at least 2 steps required");
    return SimGrid{T, nsteps};
}

SimGrid SimGrid::per_unit(double T, double steps_per_unit) {
    if (!(steps_per_unit > 0.0)) throw std::invalid_argument("SimGrid: steps per unit must be positive");
    const auto n = static_cast<std::size_t>(std::llround(T * steps_per_unit));
    return make(T, std::max<std::size_t>(2, n));
}

std::string MeasureTag::describe() const {
    switch (kind) {
        case MeasureKind::Physical: return "physical";
        case MeasureKind::RiskNeutral: return "risk-neutral";
        case MeasureKind::Myopic: {
            std::ostringstream os;
            os << std::setprecision(17) << "myopic(" << gamma << ")";
            return os.str();
        }
    }
    return "unknown";
}

FactorDynamics FactorDynamics::physical(const QtsmModel& model) {
    FactorDynamics d;
    d.tag_ = {MeasureKind::Physical, 0.0};
    d.Lambda_ = model.Lambda();
    d.constant_ = {model.b(), model.B(), Vec::Zero(model.n()), Mat::Zero(model.n(), model.m())};
    return d;
}

FactorDynamics FactorDynamics::risk_neutral(const QtsmModel& model) {
    FactorDynamics d;
    d.tag_ = {MeasureKind::RiskNeutral, 0.0};
    d.Lambda_ = model.Lambda();
    d.constant_ = {model.b() - model.Lambda() * model.a(), model.B() - model.Lambda() * model.A(), -model.a(),
                   -model.A()};
    return d;
}

FactorDynamics FactorDynamics::myopic(const QtsmModel& model, const MyopicMeasureCoeffs& coeffs) {
    FactorDynamics d;
    d.tag_ = {MeasureKind::Myopic, coeffs.gamma()};
    d.Lambda_ = model.Lambda();
    d.horizon_ = coeffs.horizon();
    if (coeffs.gamma() == 0.0) {
        d.constant_ = {model.b(), model.B(), Vec::Zero(model.n()), Mat::Zero(model.n(), model.m())};
        return d;
    }
    d.coeff_ = [coeffs](double t) {
        return Frozen{coeffs.drift_intercept(t), coeffs.drift_slope(t), coeffs.kernel_intercept(t),
                      coeffs.kernel_slope(t)};
    };
    return d;
}

FactorDynamics::Frozen FactorDynamics::at(double t) const { return coeff_ ? coeff_(t) : constant_; }

void Functionals::resize(std::size_t npaths, int m) {
    int_r.assign(npaths, 0.0);
    stoch_int_theta.assign(npaths, 0.0);
    int_theta_sq.assign(npaths, 0.0);
    H.assign(npaths, 0.0);
    L.assign(npaths * static_cast<std::size_t>(m), 0.0);
}

Vec PathEnsemble::terminal_factor(std::size_t path) const {
    Vec y(m);
    for (int i = 0; i < m; ++i) y[i] = YT[path * static_cast<std::size_t>(m) + i];
    return y;
}

OuStep ou_step(const Mat& D, const Vec& c, const Mat& Lambda, double dt) {
    const Eigen::Index m = D.rows();
    OuStep s;
    Mat aug = Mat::Zero(2 * m, 2 * m);
    aug.topLeftCorner(m, m) = D * dt;
    aug.topRightCorner(m, m) = Mat::Identity(m, m) * dt;
    const Mat F = expm(aug);
    s.E = F.topLeftCorner(m, m);
    const Mat Phi = F.topRightCorner(m, m);  // int_0^dt e^{Du} du
    s.mvec = Phi * c;
    const Mat G = Phi * Lambda;  // Cov(xi, dW)

    Mat vl = Mat::Zero(2 * m, 2 * m);
    vl.topLeftCorner(m, m) = -D * dt;
    vl.topRightCorner(m, m) = Lambda * Lambda.transpose() * dt;
    vl.bottomRightCorner(m, m) = D.transpose() * dt;
    const Mat V = expm(vl);
    const Mat Q = symmetrize(V.bottomRightCorner(m, m).transpose() * V.topRightCorner(m, m));

    s.G_over_dt = G / dt;
    const Mat cond = symmetrize(Q - G * G.transpose() / dt);
    s.S = psd_sqrt(cond, &s.clipped_mass);
    return s;
}

namespace {

constexpr int kMaxDim = 16;

// Coefficients for the per-path loop. Each step record packs
// E (m x m), mvec (m), G/dt (m x n), S (m x m), k0 (n), k1 (n x m), row-major.
struct SimPlan {
    int m = 0, n = 0;
    double dt = 0.0, sqrt_dt = 0.0;
    std::size_t nsteps = 0;
    bool physical = true;
    bool constant = true;
    std::size_t stride = 0;
    std::size_t oM = 0, oG = 0, oS = 0, oK0 = 0, oK1 = 0;
    std::vector<double> coef;
    std::vector<double> expBt;  // e^{B' t_k}, nodes 0..nsteps, m x m each
    double r0 = 0.0;
    std::vector<double> r1, R2, a, A;  // A is n x m
    double clipped_mass = 0.0;

    const double* step(std::size_t k) const { return coef.data() + (constant ? 0 : k * stride); }
    const double* expb(std::size_t k) const { return expBt.data() + k * static_cast<std::size_t>(m * m); }
};

void append(std::vector<double>& v, const Mat& M) {
    for (Eigen::Index i = 0; i < M.rows(); ++i)
        for (Eigen::Index j = 0; j < M.cols(); ++j) v.push_back(M(i, j));
}

std::vector<double> flat_mat(const Mat& M) {
    std::vector<double> v;
    append(v, M);
    return v;
}

void append_step(SimPlan& p, const OuStep& s, const FactorDynamics::Frozen& f) {
    append(p.coef, s.E);
    append(p.coef, s.mvec);
    append(p.coef, s.G_over_dt);
    append(p.coef, s.S);
    append(p.coef, f.k0);
    append(p.coef, f.k1);
    p.clipped_mass = std::max(p.clipped_mass, s.clipped_mass);
}

SimPlan make_plan(const QtsmModel& model, const FactorDynamics& dyn, double dt, std::size_t nsteps) {
    SimPlan p;
    p.m = model.m();
    p.n = model.n();
    const std::size_t m = static_cast<std::size_t>(p.m), n = static_cast<std::size_t>(p.n);
    p.dt = dt;
    p.sqrt_dt = std::sqrt(dt);
    p.nsteps = nsteps;
    p.physical = dyn.measure().kind == MeasureKind::Physical;
    p.oM = m * m;
    p.oG = p.oM + m;
    p.oS = p.oG + m * n;
    p.oK0 = p.oS + m * m;
    p.oK1 = p.oK0 + n;
    p.stride = p.oK1 + n * m;
    p.constant = !dyn.time_varying();
    if (p.constant) {
        const auto f = dyn.at(0.0);
        append_step(p, ou_step(f.D, f.c, dyn.Lambda(), dt), f);
    } else {
        p.coef.reserve(nsteps * p.stride);
        for (std::size_t k = 0; k < nsteps; ++k) {
            const auto f = dyn.at((static_cast<double>(k) + 0.5) * dt);
            append_step(p, ou_step(f.D, f.c, dyn.Lambda(), dt), f);
        }
    }
    if (p.clipped_mass > 0.0)
        std::clog << "warning: OU conditional covariance repaired by eigenvalue clipping (mass " << p.clipped_mass
                  << ")\n";
    p.expBt.reserve((nsteps + 1) * m * m);
    const Mat Bt = model.B().transpose();
    for (std::size_t k = 0; k <= nsteps; ++k) append(p.expBt, expm(Bt * (static_cast<double>(k) * dt)));
    p.r0 = model.r0();
    p.r1 = flat_mat(model.r1());
    p.R2 = flat_mat(model.R2());
    p.a = flat_mat(model.a());
    p.A = flat_mat(model.A());
    return p;
}

// Path kernel; MF/NF fix the dimensions at compile time (0 = runtime).
// Running functionals are replayable: the same (Y, dW) sequence yields the same bits.
template <int MF, int NF>
class Kernel {
public:
    explicit Kernel(const SimPlan& p) : p_(p) {}

    // One exact transition; consumes n + m normals from the path stream.
    void transition(std::size_t k, CounterStream& rs, const double* y, double* dW, double* y_next) const {
        const int m = MF ? MF : p_.m, n = NF ? NF : p_.n;
        const double* sc = p_.step(k);
        const double* E = sc;
        const double* mv = sc + p_.oM;
        const double* Gd = sc + p_.oG;
        const double* S = sc + p_.oS;
        for (int j = 0; j < n; ++j) dW[j] = p_.sqrt_dt * rs.normal();
        double eta[kMaxDim];
        for (int i = 0; i < m; ++i) eta[i] = rs.normal();
        for (int i = 0; i < m; ++i) {
            double s = mv[i];
            for (int l = 0; l < m; ++l) s += E[i * m + l] * y[l];
            for (int j = 0; j < n; ++j) s += Gd[i * n + j] * dW[j];
            for (int l = 0; l < m; ++l) s += S[i * m + l] * eta[l];
            y_next[i] = s;
        }
    }

    void begin(const double* y0) {
        const int m = MF ? MF : p_.m;
        int_r_ = stoch_ = sq_ = 0.0;
        for (int i = 0; i < m; ++i) L_[i] = 0.0;
        node(0, y0, r_prev_, th2_prev_, theta_prev_, g_prev_);
    }

    void advance(std::size_t k, const double* y_k, const double* dW, const double* y_next) {
        const int m = MF ? MF : p_.m, n = NF ? NF : p_.n;
        const double dt = p_.dt;
        double dwp[kMaxDim];
        for (int j = 0; j < n; ++j) dwp[j] = dW[j];
        if (!p_.physical) {
            const double* sc = p_.step(k);
            const double* k0 = sc + p_.oK0;
            const double* k1 = sc + p_.oK1;
            for (int j = 0; j < n; ++j) {
                double kv = k0[j];
                for (int i = 0; i < m; ++i) kv += k1[j * m + i] * y_k[i];
                dwp[j] += kv * dt;
            }
        }
        const double* A = p_.A.data();
        for (int j = 0; j < n; ++j) stoch_ += theta_prev_[j] * dwp[j];
        double atw[kMaxDim];
        for (int i = 0; i < m; ++i) {
            double s = 0.0;
            for (int j = 0; j < n; ++j) s += A[j * m + i] * dwp[j];
            atw[i] = s;
        }
        const double* Ek = p_.expb(k);
        for (int i = 0; i < m; ++i) {
            double s = 0.0;
            for (int l = 0; l < m; ++l) s += Ek[i * m + l] * atw[l];
            L_[i] += s;
        }
        double r_next, th2_next, theta_next[kMaxDim], g_next[kMaxDim];
        node(k + 1, y_next, r_next, th2_next, theta_next, g_next);
        int_r_ += 0.5 * (r_prev_ + r_next) * dt;
        sq_ += 0.5 * (th2_prev_ + th2_next) * dt;
        for (int i = 0; i < m; ++i) L_[i] += 0.5 * (g_prev_[i] + g_next[i]) * dt;
        r_prev_ = r_next;
        th2_prev_ = th2_next;
        for (int j = 0; j < n; ++j) theta_prev_[j] = theta_next[j];
        for (int i = 0; i < m; ++i) g_prev_[i] = g_next[i];
    }

    void finish(Functionals& f, std::size_t path) const {
        const int m = MF ? MF : p_.m;
        f.int_r[path] = int_r_;
        f.stoch_int_theta[path] = stoch_;
        f.int_theta_sq[path] = sq_;
        f.H[path] = std::exp(-int_r_ - stoch_ - 0.5 * sq_);
        for (int i = 0; i < m; ++i) f.L[path * static_cast<std::size_t>(m) + i] = L_[i];
    }

private:
    // r, |theta|^2, theta and g = e^{B't}[(r1 + R2 y) + A' theta] at node k.
    void node(std::size_t k, const double* y, double& r, double& th2, double* theta, double* g) const {
        const int m = MF ? MF : p_.m, n = NF ? NF : p_.n;
        const double* R2 = p_.R2.data();
        const double* r1 = p_.r1.data();
        const double* a = p_.a.data();
        const double* A = p_.A.data();
        double R2y[kMaxDim];
        r = p_.r0;
        for (int i = 0; i < m; ++i) {
            double s = 0.0;
            for (int l = 0; l < m; ++l) s += R2[i * m + l] * y[l];
            R2y[i] = s;
            r += r1[i] * y[i] + 0.5 * y[i] * s;
        }
        th2 = 0.0;
        for (int j = 0; j < n; ++j) {
            double s = a[j];
            for (int i = 0; i < m; ++i) s += A[j * m + i] * y[i];
            theta[j] = s;
            th2 += s * s;
        }
        double v[kMaxDim];
        for (int i = 0; i < m; ++i) {
            double s = r1[i] + R2y[i];
            for (int j = 0; j < n; ++j) s += A[j * m + i] * theta[j];
            v[i] = s;
        }
        const double* Ek = p_.expb(k);
        for (int i = 0; i < m; ++i) {
            double s = 0.0;
            for (int l = 0; l < m; ++l) s += Ek[i * m + l] * v[l];
            g[i] = s;
        }
    }

    const SimPlan& p_;
    double int_r_ = 0.0, stoch_ = 0.0, sq_ = 0.0;
    double L_[kMaxDim];
    double r_prev_ = 0.0, th2_prev_ = 0.0;
    double theta_prev_[kMaxDim];
    double g_prev_[kMaxDim];
};

template <int V>
using Dim = std::integral_constant<int, V>;

// Calls f(Dim<M>, Dim<N>) with compile-time dimensions for common small shapes.
template <class F>
void with_dims(int m, int n, F&& f) {
    if (m == 1 && n == 1)
        f(Dim<1>{}, Dim<1>{});
    else if (m == 2 && n == 2)
        f(Dim<2>{}, Dim<2>{});
    else if (m == 3 && n == 3)
        f(Dim<3>{}, Dim<3>{});
    else if (m == 2 && n == 1)
        f(Dim<2>{}, Dim<1>{});
    else if (m == 1 && n == 2)
        f(Dim<1>{}, Dim<2>{});
    else
        f(Dim<0>{}, Dim<0>{});
}

std::uint64_t ensemble_id(const PathEnsemble& e, const std::string& fingerprint, std::uint32_t stream) {
    std::ostringstream os;
    os << std::setprecision(17) << e.seed << '|' << stream << '|' << e.grid.T << '|' << e.grid.nsteps << '|'
       << e.npaths << '|' << e.measure.describe() << '|';
    for (Eigen::Index i = 0; i < e.y0.size(); ++i) os << e.y0[i] << ',';
    os << '|' << fingerprint;
    return fnv1a(os.str());
}

void check_dims(const QtsmModel& model, const Vec& y0) {
    if (y0.size() != model.m()) throw ModelError("y0", "dimension mismatch");
    if (model.m() > kMaxDim || model.n() > kMaxDim) throw ModelError("B", "dimension above simulator limit of 16");
}

}  // namespace

std::uint64_t fnv1a(std::string_view data, std::uint64_t h) {
    for (unsigned char c : data) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

void parallel_chunks(std::size_t count, std::size_t chunk, std::size_t threads,
                     const std::function<void(std::size_t, std::size_t)>& body) {
    if (chunk == 0) chunk = 1;
    const std::size_t nchunks = (count + chunk - 1) / chunk;
    threads = std::max<std::size_t>(1, std::min(threads, nchunks));
    if (threads == 1) {
        for (std::size_t c = 0; c < nchunks; ++c) body(c * chunk, std::min(count, (c + 1) * chunk));
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr err;
    std::mutex mu;
    auto worker = [&] {
        for (;;) {
            const std::size_t c = next.fetch_add(1);
            if (c >= nchunks) return;
            try {
                body(c * chunk, std::min(count, (c + 1) * chunk));
            } catch (...) {
                std::lock_guard<std::mutex> lock(mu);
                if (!err) err = std::current_exception();
                next = nchunks;
            }
        }
    };
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
    if (err) std::rethrow_exception(err);
}

PathEnsemble simulate_factor(const QtsmModel& model, const FactorDynamics& dyn, const SimGrid& grid,
                             std::size_t npaths, std::uint64_t seed, const Vec& y0, const SimOptions& opts) {
    check_dims(model, y0);
    if (npaths == 0) throw std::invalid_argument("simulate_factor: npaths must be positive");
    if (dyn.time_varying() && std::abs(grid.T - dyn.horizon()) > 1e-12 * grid.T)
        throw std::invalid_argument("simulate_factor: grid horizon differs from the myopic measure horizon");
    PathEnsemble e;
    e.npaths = npaths;
    e.seed = seed;
    e.grid = SimGrid::make(grid.T, grid.nsteps);
    e.m = model.m();
    e.n = model.n();
    e.y0 = y0;
    e.measure = dyn.measure();
    const std::string fp = model.fingerprint();
    e.model_hash = fnv1a(fp);
    e.id = ensemble_id(e, fp, opts.stream);
    const SimPlan plan = make_plan(model, dyn, e.grid.dt(), e.grid.nsteps);
    const std::size_t N = e.grid.nsteps;
    const std::size_t m = static_cast<std::size_t>(e.m), n = static_cast<std::size_t>(e.n);
    e.has_paths = true;
    e.Y.assign(npaths * (N + 1) * m, 0.0);
    e.dW.assign(npaths * N * n, 0.0);
    e.YT.assign(npaths * m, 0.0);
    with_dims(e.m, e.n, [&](auto MF, auto NF) {
        const Kernel<decltype(MF)::value, decltype(NF)::value> ker(plan);
        parallel_chunks(npaths, opts.chunk, opts.threads, [&](std::size_t begin, std::size_t end) {
            for (std::size_t p = begin; p < end; ++p) {
                CounterStream rs(seed, p, opts.stream);
                double* Y = &e.Y[p * (N + 1) * m];
                double* dW = &e.dW[p * N * n];
                for (std::size_t i = 0; i < m; ++i) Y[i] = y0[static_cast<Eigen::Index>(i)];
                for (std::size_t k = 0; k < N; ++k) ker.transition(k, rs, Y + k * m, dW + k * n, Y + (k + 1) * m);
                std::copy(Y + N * m, Y + (N + 1) * m, &e.YT[p * m]);
            }
        });
    });
    return e;
}

void attach_functionals(PathEnsemble& e, const QtsmModel& model, const FactorDynamics& dyn) {
    if (!e.has_paths) throw std::invalid_argument("attach_functionals: ensemble has no stored paths");
    if (e.m != model.m() || e.n != model.n()) throw std::invalid_argument("attach_functionals: model dimensions differ");
    if (fnv1a(model.fingerprint()) != e.model_hash)
        throw std::invalid_argument("attach_functionals: ensemble was simulated under a different model");
    if (dyn.measure().describe() != e.measure.describe())
        throw std::invalid_argument("attach_functionals: dynamics do not match the ensemble measure");
    const SimPlan plan = make_plan(model, dyn, e.grid.dt(), e.grid.nsteps);
    const std::size_t N = e.grid.nsteps;
    const std::size_t m = static_cast<std::size_t>(e.m), n = static_cast<std::size_t>(e.n);
    e.f.resize(e.npaths, e.m);
    with_dims(e.m, e.n, [&](auto MF, auto NF) {
        Kernel<decltype(MF)::value, decltype(NF)::value> acc(plan);
        for (std::size_t p = 0; p < e.npaths; ++p) {
            const double* Y = &e.Y[p * (N + 1) * m];
            const double* dW = &e.dW[p * N * n];
            acc.begin(Y);
            for (std::size_t k = 0; k < N; ++k) acc.advance(k, Y + k * m, dW + k * n, Y + (k + 1) * m);
            acc.finish(e.f, p);
        }
    });
    e.has_functionals = true;
}

std::vector<PathEnsemble> simulate_horizons(const QtsmModel& model, const FactorDynamics& dyn,
                                            const std::vector<double>& horizons, double steps_per_unit,
                                            std::size_t npaths, std::uint64_t seed, const Vec& y0,
                                            const SimOptions& opts) {
    check_dims(model, y0);
    if (horizons.empty()) throw std::invalid_argument("simulate_horizons: no horizons");
    if (npaths == 0) throw std::invalid_argument("simulate_horizons: npaths must be positive");
    if (dyn.time_varying() && (horizons.size() > 1 || std::abs(horizons[0] - dyn.horizon()) > 1e-12 * horizons[0]))
        throw std::invalid_argument("simulate_horizons: myopic dynamics are tied to a single horizon");
    std::vector<SimGrid> grids;
    for (std::size_t i = 0; i < horizons.size(); ++i) {
        if (i && !(horizons[i] > horizons[i - 1])) throw std::invalid_argument("simulate_horizons: horizons must ascend");
        grids.push_back(SimGrid::per_unit(horizons[i], steps_per_unit));
    }
    const double dt = grids.back().dt();
    for (const auto& g : grids)
        if (g.dt() != dt || std::abs(g.T * steps_per_unit - static_cast<double>(g.nsteps)) > 1e-9 * g.T * steps_per_unit)
            throw std::invalid_argument("simulate_horizons: every horizon must be an integer multiple of 1/steps_per_unit");

    const std::string fp = model.fingerprint();
    std::vector<PathEnsemble> out(grids.size());
    for (std::size_t h = 0; h < grids.size(); ++h) {
        auto& e = out[h];
        e.npaths = npaths;
        e.seed = seed;
        e.grid = grids[h];
        e.m = model.m();
        e.n = model.n();
        e.y0 = y0;
        e.measure = dyn.measure();
        e.model_hash = fnv1a(fp);
        e.id = ensemble_id(e, fp, opts.stream);
        e.f.resize(npaths, e.m);
        e.YT.assign(npaths * static_cast<std::size_t>(e.m), 0.0);
        e.has_functionals = true;
    }
    const SimPlan plan = make_plan(model, dyn, dt, grids.back().nsteps);
    const std::size_t m = static_cast<std::size_t>(model.m());
    const std::size_t N = grids.back().nsteps;
    with_dims(model.m(), model.n(), [&](auto MF, auto NF) {
        using K = Kernel<decltype(MF)::value, decltype(NF)::value>;
        parallel_chunks(npaths, opts.chunk, opts.threads, [&](std::size_t begin, std::size_t end) {
            K ker(plan);
            double ya[kMaxDim], yb[kMaxDim], dW[kMaxDim];
            for (std::size_t p = begin; p < end; ++p) {
                CounterStream rs(seed, p, opts.stream);
                double* y = ya;
                double* y_next = yb;
                for (std::size_t i = 0; i < m; ++i) y[i] = y0[static_cast<Eigen::Index>(i)];
                ker.begin(y);
                std::size_t h = 0;
                for (std::size_t k = 0; k < N; ++k) {
                    ker.transition(k, rs, y, dW, y_next);
                    ker.advance(k, y, dW, y_next);
                    std::swap(y, y_next);
                    while (h < grids.size() && grids[h].nsteps == k + 1) {
                        ker.finish(out[h].f, p);
                        std::copy(y, y + m, &out[h].YT[p * m]);
                        ++h;
                    }
                }
            }
        });
    });
    return out;
}

HolderCheck empirical_holder(const PathEnsemble& ens, double q, double alpha, double rel_tol) {
    if (!ens.has_functionals || ens.f.H.empty()) throw std::invalid_argument("empirical_holder: no functionals");
    if (!(q >= 0.0 && q < 1.0) || !(alpha > q - 1.0 && alpha <= 0.0))
        throw std::domain_error("empirical_holder: need q in [0, 1) and alpha in (q - 1, 0]");
    const double theta = alpha / (q - 1.0);
    double s1 = 0.0, sq = 0.0, sa = 0.0;
    for (double h : ens.f.H) {
        s1 += h;
        sq += std::pow(h, q);
        sa += std::pow(h, 1.0 + alpha);
    }
    const double n = static_cast<double>(ens.f.H.size());
    HolderCheck r;
    r.lhs = sa / n;
    r.rhs = std::pow(sq / n, theta) * std::pow(s1 / n, 1.0 - theta);
    r.holds = r.lhs <= r.rhs * (1.0 + rel_tol);
    return r;
}

McEstimate estimate(std::span<const double> x, std::span<const double> w) {
    if (x.empty()) throw std::invalid_argument("estimate: empty sample");
    McEstimate est;
    est.npaths = x.size();
    const double n = static_cast<double>(x.size());
    if (w.empty()) {
        double s = 0.0;
        for (double v : x) s += v;
        est.mean = s / n;
        if (x.size() == 1) {
            est.se = std::numeric_limits<double>::infinity();
            return est;
        }
        double ss = 0.0;
        for (double v : x) ss += (v - est.mean) * (v - est.mean);
        est.se = std::sqrt(ss / (n - 1.0) / n);
        return est;
    }
    if (w.size() != x.size()) throw std::invalid_argument("estimate: weights and samples differ in length");
    double sw = 0.0, swx = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (!(w[i] >= 0.0)) throw std::invalid_argument("estimate: negative or non-finite weight");
        sw += w[i];
        swx += w[i] * x[i];
    }
    if (!(sw > 0.0)) throw std::domain_error("estimate: degenerate (all weights zero)");
    est.mean = swx / sw;
    double s2 = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double d = w[i] * (x[i] - est.mean);
        s2 += d * d;
    }
    est.se = std::sqrt(s2) / sw;
    return est;
}

McVecEstimate estimate_vec(std::span<const double> samples, std::size_t dim, std::span<const double> weights) {
    if (dim == 0 || samples.size() % dim != 0) throw std::invalid_argument("estimate_vec: bad dimension");
    const std::size_t N = samples.size() / dim;
    McVecEstimate out;
    out.mean.resize(static_cast<Eigen::Index>(dim));
    out.se.resize(static_cast<Eigen::Index>(dim));
    out.npaths = N;
    std::vector<double> col(N);
    for (std::size_t d = 0; d < dim; ++d) {
        for (std::size_t i = 0; i < N; ++i) col[i] = samples[i * dim + d];
        const auto e = estimate(col, weights);
        out.mean[static_cast<Eigen::Index>(d)] = e.mean;
        out.se[static_cast<Eigen::Index>(d)] = e.se;
    }
    return out;
}

PathEnsemble coarsen(const PathEnsemble& fine, std::size_t factor) {
    if (!fine.has_paths) throw std::invalid_argument("coarsen: ensemble has no stored paths");
    if (factor == 0 || fine.grid.nsteps % factor != 0)
        throw std::invalid_argument("coarsen: factor must divide the number of steps");
    PathEnsemble c = fine;
    c.grid = SimGrid::make(fine.grid.T, fine.grid.nsteps / factor);
    c.has_functionals = false;
    c.f = {};
    const std::size_t Nf = fine.grid.nsteps, Nc = c.grid.nsteps;
    const std::size_t m = static_cast<std::size_t>(fine.m), n = static_cast<std::size_t>(fine.n);
    c.Y.assign(fine.npaths * (Nc + 1) * m, 0.0);
    c.dW.assign(fine.npaths * Nc * n, 0.0);
    for (std::size_t p = 0; p < fine.npaths; ++p) {
        for (std::size_t k = 0; k <= Nc; ++k)
            for (std::size_t i = 0; i < m; ++i)
                c.Y[(p * (Nc + 1) + k) * m + i] = fine.Y[(p * (Nf + 1) + k * factor) * m + i];
        for (std::size_t k = 0; k < Nc; ++k)
            for (std::size_t j = 0; j < n; ++j) {
                double s = 0.0;
                for (std::size_t f = 0; f < factor; ++f) s += fine.dW[(p * Nf + k * factor + f) * n + j];
                c.dW[(p * Nc + k) * n + j] = s;
            }
    }
    std::ostringstream os;
    os << fine.id << "/coarsen " << factor;
    c.id = fnv1a(os.str());
    return c;
}

ConvergenceReport convergence_study(const QtsmModel& model, const FactorDynamics& dyn, double T,
                                    std::vector<std::size_t> ladder, std::size_t npaths, std::uint64_t seed,
                                    const Vec& y0, const PathFunctional& functional, const SimOptions& opts,
                                    double order) {
    if (ladder.size() < 2) throw std::invalid_argument("convergence_study: ladder needs at least two levels");
    std::sort(ladder.begin(), ladder.end());
    ladder.erase(std::unique(ladder.begin(), ladder.end()), ladder.end());
    const std::size_t finest = ladder.back();
    for (auto l : ladder)
        if (l < 2 || finest % l != 0) throw std::invalid_argument("convergence_study: ladder entries must divide the finest level");
    const auto fine = simulate_factor(model, dyn, SimGrid::make(T, finest), npaths, seed, y0, opts);
    ConvergenceReport rep;
    rep.order = order;
    std::vector<double> vals(npaths);
    for (auto l : ladder) {
        PathEnsemble e = coarsen(fine, finest / l);
        attach_functionals(e, model, dyn);
        for (std::size_t p = 0; p < npaths; ++p) vals[p] = functional(e, p);
        ConvergenceLevel lev;
        lev.nsteps = l;
        lev.value = estimate(vals);
        rep.levels.push_back(lev);
    }
    const auto& f1 = rep.levels[rep.levels.size() - 2];
    const auto& f2 = rep.levels.back();
    const double rho = std::pow(static_cast<double>(f2.nsteps) / static_cast<double>(f1.nsteps), order);
    rep.extrapolated = (rho * f2.value.mean - f1.value.mean) / (rho - 1.0);
    for (auto& lev : rep.levels) {
        lev.bias = lev.value.mean - rep.extrapolated;
        lev.flagged = std::abs(lev.bias) > lev.value.se / 3.0;
    }
    return rep;
}

namespace {

static_assert(std::endian::native == std::endian::little, "binary dump assumes a little-endian host");

constexpr char kMagic[8] = {'Q', 'L', 'A', 'B', 'F', 'N', '0', '1'};

template <class T>
void put(std::ostream& os, T v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T get(std::istream& is) {
    T v{};
    is.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!is) throw std::runtime_error("read_functionals: truncated input");
    return v;
}

}  // namespace

void write_functionals(std::ostream& os, const PathEnsemble& e) {
    if (!e.has_functionals) throw std::invalid_argument("write_functionals: no functionals");
    os.write(kMagic, sizeof kMagic);
    put<std::uint64_t>(os, e.seed);
    put<double>(os, e.grid.T);
    put<std::uint64_t>(os, e.grid.nsteps);
    put<std::uint64_t>(os, e.npaths);
    put<std::uint64_t>(os, static_cast<std::uint64_t>(e.m));
    put<std::uint64_t>(os, e.model_hash);
    for (std::size_t p = 0; p < e.npaths; ++p) {
        put<double>(os, e.f.int_r[p]);
        put<double>(os, e.f.stoch_int_theta[p]);
        put<double>(os, e.f.int_theta_sq[p]);
        put<double>(os, e.f.H[p]);
        for (int i = 0; i < e.m; ++i) put<double>(os, e.f.L_at(p, i, e.m));
    }
}

PathEnsemble read_functionals(std::istream& is) {
    char magic[8];
    is.read(magic, sizeof magic);
    if (!is || std::memcmp(magic, kMagic, sizeof magic) != 0) throw std::runtime_error("read_functionals: bad magic");
    PathEnsemble e;
    e.seed = get<std::uint64_t>(is);
    const double T = get<double>(is);
    const auto nsteps = get<std::uint64_t>(is);
    e.grid = SimGrid::make(T, nsteps);
    e.npaths = get<std::uint64_t>(is);
    e.m = static_cast<int>(get<std::uint64_t>(is));
    e.model_hash = get<std::uint64_t>(is);
    e.f.resize(e.npaths, e.m);
    for (std::size_t p = 0; p < e.npaths; ++p) {
        e.f.int_r[p] = get<double>(is);
        e.f.stoch_int_theta[p] = get<double>(is);
        e.f.int_theta_sq[p] = get<double>(is);
        e.f.H[p] = get<double>(is);
        for (int i = 0; i < e.m; ++i) e.f.L[p * static_cast<std::size_t>(e.m) + i] = get<double>(is);
    }
    e.has_functionals = true;
    std::ostringstream os;
    os << "dump|" << e.seed << '|' << e.model_hash << '|' << T << '|' << nsteps << '|' << e.npaths;
    e.id = fnv1a(os.str());
    return e;
}

}  // namespace qlab
