#pragma once

// CARMA(p, q) spot model
//
//     S(t) = exp(mu t + b'X(t)),   dX = (xi + A X) dt + vartheta e_p dW,
//
// with A the companion matrix of (alpha_1..alpha_p). The pricing measure keeps X an
// OU process with companion matrix C (betas) and level xi~ when the premium vector c
// equals b; forwards are then available in closed form.

#include <Eigen/Dense>
#include <unsupported/Eigen/MatrixFunctions>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "cmem/core/errors.hpp"
#include "cmem/core/parallel.hpp"
#include "cmem/core/quadrature.hpp"
#include "cmem/core/rng.hpp"
#include "cmem/core/stats.hpp"
#include "cmem/core/time_function.hpp"

namespace cmem::carma {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

inline constexpr std::uint32_t kStreamCarmaP = 4;
inline constexpr std::uint32_t kStreamCarmaQ = 5;

enum class Measure { P, Q };

/// Companion matrix: ones on the superdiagonal, last row (-a_p, ..., -a_1).
inline Mat companion(const std::vector<double>& coeffs) {
    const std::size_t p = coeffs.size();
    if (p == 0) throw DomainError("companion: need at least one coefficient");
    if (!(coeffs.back() > 0.0)) throw DomainError("companion: last coefficient must be > 0");
    Mat m = Mat::Zero(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(p));
    const auto n = static_cast<Eigen::Index>(p);
    for (Eigen::Index i = 0; i + 1 < n; ++i) m(i, i + 1) = 1.0;
    for (Eigen::Index j = 0; j < n; ++j) m(n - 1, j) = -coeffs[p - 1 - static_cast<std::size_t>(j)];
    return m;
}

struct Stationarity {
    bool stationary = false;
    double abscissa = 0.0;  ///< largest real part of the spectrum
};

inline Stationarity stationarity_check(const Mat& A) {
    const Eigen::EigenSolver<Mat> es(A, false);
    double a = -std::numeric_limits<double>::infinity();
    for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i) a = std::max(a, es.eigenvalues()[i].real());
    return {a < 0.0, a};
}

inline Vec unit(std::size_t p, std::size_t i) {
    Vec e = Vec::Zero(static_cast<Eigen::Index>(p));
    e[static_cast<Eigen::Index>(i)] = 1.0;
    return e;
}

struct CarmaModel {
    std::size_t q = 0;
    std::vector<double> alphas;  ///< alpha_1..alpha_p
    Vec b;                       ///< (b_0..b_{p-1})
    std::optional<Vec> c;        ///< premium vector, b when absent
    std::vector<double> betas;   ///< beta_1..beta_p
    double vartheta = 1.0;
    double mu = 0.0;
    Vec xi;
    Vec theta;
    double r = 0.0;

    [[nodiscard]] std::size_t p() const { return alphas.size(); }
    [[nodiscard]] Mat A() const { return companion(alphas); }
    [[nodiscard]] Mat C() const { return companion(betas); }
    [[nodiscard]] Vec premium_vector() const { return c ? *c : b; }
    [[nodiscard]] Vec ep() const { return unit(p(), p() - 1); }

    void validate() const {
        const std::size_t n = p();
        if (n == 0) throw ConfigError("carma: p must be >= 1");
        if (q >= n) throw ConfigError("carma: need q < p");
        for (double a : alphas)
            if (!(a >= 0.0)) throw ConfigError("carma: alphas must be >= 0");
        if (!(alphas.back() > 0.0)) throw DomainError("carma: alpha_p must be > 0");
        if (betas.size() != n) throw ConfigError("carma: betas must have p entries");
        for (double v : betas)
            if (!(v > 0.0)) throw ConfigError("carma: betas must be > 0");
        const auto sz = static_cast<Eigen::Index>(n);
        if (b.size() != sz || xi.size() != sz || theta.size() != sz)
            throw ConfigError("carma: b, xi and theta must have p entries");
        if (c && c->size() != sz) throw ConfigError("carma: c must have p entries");
        if (b[static_cast<Eigen::Index>(q)] != 1.0) throw ConfigError("carma: b_q must equal 1");
        for (std::size_t j = q + 1; j < n; ++j)
            if (b[static_cast<Eigen::Index>(j)] != 0.0) throw ConfigError("carma: b_j must vanish for j > q");
        if (!(vartheta > 0.0)) throw ConfigError("carma: vartheta must be > 0");
    }

    [[nodiscard]] bool c_equals_b() const { return !c || *c == b; }

    void require_pricing_form() const {
        validate();
        if (q + 1 != p()) throw ModelError("carma: a martingale measure needs q = p - 1");
        if (!c_equals_b()) throw ModelError("carma: the pricing dynamics need c = b");
    }
};

/// rho = c'(theta + C x).
inline double risk_premium(const CarmaModel& m, const Vec& x) {
    return m.premium_vector().dot(m.theta + m.C() * x);
}

/// Girsanov kernel theta(t, X) as a constant plus a linear form in X.
inline double market_price_of_risk(const CarmaModel& m, const Vec& x) {
    m.validate();
    if (m.q + 1 != m.p()) throw ModelError("carma: q < p - 1 leaves no martingale term to reweight");
    const Vec c = m.premium_vector();
    const double level = m.mu + 0.5 * m.vartheta * m.vartheta - m.r + m.b.dot(m.xi) - c.dot(m.theta);
    const Vec lin = (m.b.transpose() * m.A() - c.transpose() * m.C()).transpose();
    return (level + lin.dot(x)) / m.vartheta;
}

/// theta' = b'A - c'C as a column vector.
inline Vec theta_prime(const CarmaModel& m) {
    return (m.b.transpose() * m.A() - m.premium_vector().transpose() * m.C()).transpose();
}

/// max |A - (e_p b')A + (e_p c')C - C|, evaluated as (A - C) - e_p[b'(A - C) + (b - c)'C]
/// so that the cancellation happens between exactly representable differences.
inline double q_drift_identity_residual(const CarmaModel& m) {
    const Mat D = m.A() - m.C();
    const Vec c = m.premium_vector();
    const Eigen::RowVectorXd row = m.b.transpose() * D + (m.b - c).transpose() * m.C();
    return (D - m.ep() * row).cwiseAbs().maxCoeff();
}

inline Vec xi_tilde(const CarmaModel& m) {
    const Vec e = m.ep();
    Vec out = m.xi - e * (m.mu + 0.5 * m.vartheta * m.vartheta - m.r) + e * m.b.dot(m.theta - m.xi);
    const auto head = static_cast<Eigen::Index>(m.p()) - 1;
    if (out.head(head) != m.xi.head(head)) throw NumericError("xi_tilde: leading coordinates moved");
    return out;
}

/// theta'_j < alpha_{p-j+1} for every column j (last-row ordering of the companion matrix).
inline bool structure_preserving_check(const CarmaModel& m) {
    const Vec tp = theta_prime(m);
    const std::size_t p = m.p();
    for (std::size_t j = 0; j < p; ++j)
        if (!(tp[static_cast<Eigen::Index>(j)] < m.alphas[p - 1 - j])) return false;
    return true;
}

/// Exact one-step map of dY = (k + M Y) dt + s dW for a fixed step h:
/// Y(t+h) = F Y(t) + offset + root * N(0, I).
struct GaussianStep {
    Mat F;
    Vec offset;
    Mat cov;
    Mat root;

    GaussianStep(const Mat& M, const Vec& k, const Vec& s, double h) {
        const Eigen::Index n = M.rows();
        F = (M * h).exp();

        Mat aug = Mat::Zero(n + 1, n + 1);
        aug.topLeftCorner(n, n) = M;
        aug.topRightCorner(n, 1) = k;
        offset = (aug * h).exp().topRightCorner(n, 1);

        Mat vl = Mat::Zero(2 * n, 2 * n);
        vl.topLeftCorner(n, n) = -M;
        vl.topRightCorner(n, n) = s * s.transpose();
        vl.bottomRightCorner(n, n) = M.transpose();
        const Mat E = (vl * h).exp();
        cov = E.bottomRightCorner(n, n).transpose() * E.topRightCorner(n, n);
        cov = 0.5 * (cov + cov.transpose());

        const Eigen::SelfAdjointEigenSolver<Mat> es(cov);
        root = es.eigenvectors() * es.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal();
    }

    template <class Rng>
    [[nodiscard]] Vec advance(const Vec& y, Rng& rng) const {
        Vec z(y.size());
        for (Eigen::Index i = 0; i < z.size(); ++i) z[i] = rng.normal();
        return F * y + offset + root * z;
    }
};

/// Drift matrix, level and noise loading of X under the requested measure.
struct StateLaw {
    Mat M;
    Vec level;
    Vec loading;
};

inline StateLaw state_law(const CarmaModel& m, Measure measure) {
    m.validate();
    if (measure == Measure::Q) {
        m.require_pricing_form();
        return {m.C(), xi_tilde(m), m.vartheta * m.ep()};
    }
    const Mat A = m.A();
    if (m.xi.cwiseAbs().maxCoeff() > 0.0 && Eigen::FullPivLU<Mat>(A).rank() < A.rows())
        throw DomainError("carma: singular A with non-zero mean level");
    return {A, m.xi, m.vartheta * m.ep()};
}

/// Simulated states, path-major: state(path, k) is X at grid point k.
struct CarmaPaths {
    TimeGrid grid;
    std::size_t n_paths = 0;
    std::size_t p = 0;
    std::vector<double> data;

    [[nodiscard]] Vec state(std::size_t path, std::size_t k) const {
        const std::size_t off = (path * grid.size() + k) * p;
        return Eigen::Map<const Vec>(data.data() + off, static_cast<Eigen::Index>(p));
    }
};

inline CarmaPaths simulate_state(const CarmaModel& m, const TimeGrid& grid, std::size_t n_paths, std::uint64_t seed,
                                 Measure measure, std::optional<Vec> x0 = std::nullopt) {
    const StateLaw law = state_law(m, measure);
    const std::size_t p = m.p();
    const Vec start = x0 ? *x0 : Vec::Zero(static_cast<Eigen::Index>(p));
    if (start.size() != static_cast<Eigen::Index>(p)) throw ConfigError("simulate_state: x0 must have p entries");
    const GaussianStep step(law.M, law.level, law.loading, grid.dt());
    const std::uint32_t stream = measure == Measure::P ? kStreamCarmaP : kStreamCarmaQ;

    CarmaPaths out{grid, n_paths, p, std::vector<double>(n_paths * grid.size() * p)};
    parallel_for(n_paths, [&](std::size_t path) {
        double* dst = out.data.data() + path * grid.size() * p;
        Vec x = start;
        std::copy(x.data(), x.data() + p, dst);
        for (std::size_t k = 1; k < grid.size(); ++k) {
            CounterRng rng(seed, path, k, stream);
            x = step.advance(x, rng);
            std::copy(x.data(), x.data() + p, dst + k * p);
        }
    });
    return out;
}

/// int_0^tau (b' e^{Cs} e_p)^2 ds.
inline double forward_variance_integral(const Mat& C, const Vec& b, double tau) {
    const Vec e = unit(static_cast<std::size_t>(C.rows()), static_cast<std::size_t>(C.rows()) - 1);
    return quad::integrate(
        [&](double s) {
            const double g = b.dot((C * s).exp() * e);
            return g * g;
        },
        0.0, tau, 1e-13);
}

inline double carma_forward_price(const CarmaModel& m, double t, double T, const Vec& x_t) {
    m.require_pricing_form();
    if (!(T >= t)) throw ConfigError("carma_forward_price: need t <= T");
    if (x_t.size() != static_cast<Eigen::Index>(m.p())) throw ConfigError("carma_forward_price: state has wrong size");
    const Mat C = m.C();
    const Eigen::FullPivLU<Mat> lu(C);
    if (!lu.isInvertible()) throw DomainError("carma_forward_price: C is singular");
    const auto st = stationarity_check(C);
    if (!st.stationary)
        throw ModelError("carma_forward_price: C has an eigenvalue with real part " + std::to_string(st.abscissa));
    const double tau = T - t;
    const Mat eC = (C * tau).exp();
    const Mat I = Mat::Identity(C.rows(), C.cols());
    const double mean = m.mu * T + m.b.dot(eC * x_t) + m.b.dot((eC - I) * lu.solve(xi_tilde(m)));
    const double var = m.vartheta * m.vartheta * forward_variance_integral(C, m.b, tau);
    return std::exp(mean + 0.5 * var);
}

/// F(t, T_i) for each maturity, evaluated independently.
inline std::vector<double> forward_curve(const CarmaModel& m, double t, const Vec& x_t,
                                         const std::vector<double>& maturities) {
    std::vector<double> out(maturities.size());
    parallel_for(maturities.size(), [&](std::size_t i) { out[i] = carma_forward_price(m, t, maturities[i], x_t); });
    return out;
}

/// Monte Carlo E^Q[S(T) | X(t) = x_t], one exact step.
inline Estimate mc_forward(const CarmaModel& m, double t, double T, const Vec& x_t, std::size_t n_paths,
                           std::uint64_t seed) {
    const auto paths = simulate_state(m, TimeGrid(t, T, 1), n_paths, seed, Measure::Q, x_t);
    std::vector<double> s(n_paths);
    for (std::size_t i = 0; i < n_paths; ++i) s[i] = std::exp(m.mu * T + m.b.dot(paths.state(i, 1)));
    return summarize(s);
}

/// Monte Carlo E^Q[exp(-rT - int_0^T rho) S(T)] starting from x0 at time 0. X and
/// int X are stepped jointly and exactly, so the only error is statistical.
inline Estimate mc_deflated_spot(const CarmaModel& m, double T, std::size_t steps, std::size_t n_paths,
                                 std::uint64_t seed, const Vec& x0) {
    const StateLaw law = state_law(m, Measure::Q);
    const auto p = static_cast<Eigen::Index>(m.p());
    Mat M = Mat::Zero(2 * p, 2 * p);
    M.topLeftCorner(p, p) = law.M;
    M.bottomLeftCorner(p, p) = Mat::Identity(p, p);
    Vec k = Vec::Zero(2 * p);
    k.head(p) = law.level;
    Vec s = Vec::Zero(2 * p);
    s.head(p) = law.loading;
    const TimeGrid grid(0.0, T, steps);
    const GaussianStep step(M, k, s, grid.dt());
    const Vec bC = (m.b.transpose() * m.C()).transpose();
    const double rho_level = m.b.dot(m.theta);

    std::vector<double> out(n_paths);
    parallel_for(n_paths, [&](std::size_t path) {
        Vec y = Vec::Zero(2 * p);
        y.head(p) = x0;
        for (std::size_t j = 1; j <= steps; ++j) {
            CounterRng rng(seed, path, j, kStreamCarmaQ);
            y = step.advance(y, rng);
        }
        const double int_rho = rho_level * T + bC.dot(y.tail(p));
        out[path] = std::exp(-m.r * T - int_rho + m.mu * T + m.b.dot(y.head(p)));
    });
    return summarize(out);
}

}  // namespace cmem::carma
