#pragma once

// Riccati engine for time-inhomogeneous affine jump-diffusions, and the
// closed-form solution for the LSS (V, rho) system under Q.

#include <Eigen/Dense>
#include <boost/numeric/odeint.hpp>

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cmem/core/csv.hpp"
#include "cmem/core/errors.hpp"
#include "cmem/core/quadrature.hpp"
#include "cmem/core/time_function.hpp"
#include "cmem/levy.hpp"

namespace cmem::affine {

using cplx = std::complex<double>;
using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using CVec = Eigen::VectorXcd;

/// Jump part: size iota(t, z) against weight(t, z) * ell(dz).
struct JumpPart {
    LevyModel law;
    std::function<Vec(double, double)> iota;
    std::function<double(double, double)> weight;  ///< empty means 1
    std::size_t panels_per_piece = 48;
};

/// dX = (varpi + sum x_i beta_i) dt + sigma dW + int iota d(mu - nu),
/// sigma sigma^T = varrho + sum x_i alpha_i, discount R = c + gamma^T X.
struct AffineModelSpec {
    std::size_t d = 1;
    std::function<Vec(double)> varpi;
    std::function<Mat(double)> beta;    ///< column i is beta_i; empty means zero
    std::function<Mat(double)> varrho;  ///< empty means zero
    std::vector<std::function<Mat(double)>> alpha;
    std::optional<JumpPart> jumps;
    double c = 0.0;
    Vec gamma;                       ///< empty means zero
    std::vector<double> breakpoints;  ///< coefficient kinks; the ODE is restarted there

    void validate() const {
        if (d == 0) throw DomainError("affine spec needs d >= 1");
        if (!varpi) throw DomainError("affine spec needs a drift varpi(t)");
        if (!alpha.empty() && alpha.size() != d) throw DomainError("affine spec: alpha needs d matrices");
        if (gamma.size() != 0 && static_cast<std::size_t>(gamma.size()) != d)
            throw DomainError("affine spec: gamma must have length d");
        if (jumps && !jumps->iota) throw DomainError("affine spec: jump part needs iota(t, z)");
    }
};

struct RiccatiSolution {
    std::vector<double> grid;  ///< ascending, grid.front() = t, grid.back() = T
    std::vector<cplx> phi;
    std::vector<CVec> psi;
    CVec u;

    [[nodiscard]] cplx phi_at_start() const { return phi.front(); }
    [[nodiscard]] const CVec& psi_at_start() const { return psi.front(); }
};

namespace detail {

inline void check_psd(const Mat& m, double t, const char* what) {
    if (m.size() == 0) return;
    if ((m - m.transpose()).cwiseAbs().maxCoeff() > 1e-12 * std::max(1.0, m.cwiseAbs().maxCoeff()))
        throw DomainError(std::string(what) + " is not symmetric at t = " + std::to_string(t));
    Eigen::SelfAdjointEigenSolver<Mat> es(m, Eigen::EigenvaluesOnly);
    if (es.eigenvalues().minCoeff() < -1e-12 * std::max(1.0, m.cwiseAbs().maxCoeff()))
        throw DomainError(std::string(what) + " is not positive semidefinite at t = " + std::to_string(t));
}

inline cplx bilinear(const CVec& a, const Mat& m, const CVec& b) {
    return (a.transpose() * m.cast<cplx>() * b)(0, 0);
}

}  // namespace detail

/// Integrates the Riccati system backward from (phi, psi)(T) = (0, u) to t.
/// Runs as a real system of dimension 2(d + 1) in tau = T - s.
inline RiccatiSolution solve_riccati(const AffineModelSpec& spec, double t, double T, const CVec& u,
                                     double tol = 1e-10) {
    spec.validate();
    if (!(t < T)) throw DomainError("solve_riccati needs t < T");
    if (static_cast<std::size_t>(u.size()) != spec.d) throw DomainError("solve_riccati: u must have length d");
    const std::size_t d = spec.d;

    std::vector<double> inner;
    for (double b : spec.breakpoints)
        if (b > t && b < T) inner.push_back(b);
    const auto pts = merge_breakpoints(t, T, {inner});
    for (std::size_t i = 0; i < pts.size(); ++i) {
        const double s = i + 1 < pts.size() ? 0.5 * (pts[i] + pts[i + 1]) : pts[i];
        for (double x : {pts[i], s})
            if (spec.varrho) detail::check_psd(spec.varrho(x), x, "varrho");
    }

    quad::Rule rule;
    if (spec.jumps) rule = jump_rule(spec.jumps->law, spec.jumps->panels_per_piece);

    using State = std::vector<double>;
    auto unpack = [d](const State& y, cplx& phi, CVec& psi) {
        phi = {y[0], y[1]};
        psi.resize(static_cast<Eigen::Index>(d));
        for (std::size_t i = 0; i < d; ++i) psi[static_cast<Eigen::Index>(i)] = {y[2 + 2 * i], y[3 + 2 * i]};
    };

    auto rhs = [&](const State& y, State& dy, double tau) {
        const double s = T - tau;
        cplx phi;
        CVec psi;
        unpack(y, phi, psi);
        const Vec w = spec.varpi(s);
        cplx dphi = (psi.transpose() * w.cast<cplx>())(0, 0) - spec.c;
        if (spec.varrho) dphi += 0.5 * detail::bilinear(psi, spec.varrho(s), psi);
        if (spec.jumps) {
            const auto& J = *spec.jumps;
            cplx acc{};
            for (std::size_t q = 0; q < rule.size(); ++q) {
                const double z = rule.nodes[q];
                const cplx x = (psi.transpose() * J.iota(s, z).cast<cplx>())(0, 0);
                const double wt = J.weight ? J.weight(s, z) : 1.0;
                acc += rule.weights[q] * wt * (std::exp(x) - 1.0 - x);
            }
            dphi += acc;
        }
        CVec dpsi = CVec::Zero(static_cast<Eigen::Index>(d));
        if (spec.beta) dpsi += spec.beta(s).cast<cplx>().transpose() * psi;
        for (std::size_t i = 0; i < spec.alpha.size(); ++i)
            dpsi[static_cast<Eigen::Index>(i)] += 0.5 * detail::bilinear(psi, spec.alpha[i](s), psi);
        if (spec.gamma.size() != 0) dpsi -= spec.gamma.cast<cplx>();
        dy[0] = dphi.real();
        dy[1] = dphi.imag();
        for (std::size_t i = 0; i < d; ++i) {
            dy[2 + 2 * i] = dpsi[static_cast<Eigen::Index>(i)].real();
            dy[3 + 2 * i] = dpsi[static_cast<Eigen::Index>(i)].imag();
        }
        for (double v : dy)
            if (!std::isfinite(v))
                throw NumericError("Riccati right-hand side is not finite at t = " + std::to_string(s) +
                                   " (moment explosion)");
    };

    State y(2 * (d + 1), 0.0);
    for (std::size_t i = 0; i < d; ++i) {
        y[2 + 2 * i] = u[static_cast<Eigen::Index>(i)].real();
        y[3 + 2 * i] = u[static_cast<Eigen::Index>(i)].imag();
    }

    RiccatiSolution sol;
    sol.u = u;
    auto observe = [&](const State& x, double tau) {
        cplx phi;
        CVec psi;
        unpack(x, phi, psi);
        if (psi.cwiseAbs().maxCoeff() > 1e6 || !std::isfinite(std::abs(phi)))
            throw NumericError("Riccati solution blew up at t = " + std::to_string(T - tau));
        const double s = T - tau;
        if (!sol.grid.empty() && std::abs(sol.grid.back() - s) < 1e-15) return;
        sol.grid.push_back(s);
        sol.phi.push_back(phi);
        sol.psi.push_back(psi);
    };

    namespace ode = boost::numeric::odeint;
    auto stepper = ode::make_controlled(tol, tol, ode::runge_kutta_dopri5<State>());
    try {
        for (std::size_t i = pts.size() - 1; i > 0; --i) {
            const double tau0 = T - pts[i];
            const double tau1 = T - pts[i - 1];
            stepper.reset();  // coefficients may jump at pts[i]
            ode::integrate_adaptive(stepper, rhs, y, tau0, tau1, std::min(1e-3, tau1 - tau0), observe);
        }
    } catch (const ode::step_adjustment_error& e) {
        throw NumericError(std::string("Riccati step size underflow: ") + e.what());
    }

    std::reverse(sol.grid.begin(), sol.grid.end());
    std::reverse(sol.phi.begin(), sol.phi.end());
    std::reverse(sol.psi.begin(), sol.psi.end());
    return sol;
}

/// E[exp(-int_t^T R ds) exp(u^T X(T)) | X(t) = x].
inline cplx discounted_char_fn(const AffineModelSpec& spec, double t, double T, const CVec& u, const Vec& x,
                               double tol = 1e-10) {
    if (t == T) return std::exp((u.transpose() * x.cast<cplx>())(0, 0));
    const auto sol = solve_riccati(spec, t, T, u, tol);
    return std::exp(sol.phi_at_start() + (sol.psi_at_start().transpose() * x.cast<cplx>())(0, 0));
}

inline void write_riccati_csv(const RiccatiSolution& sol, const std::string& path) {
    std::vector<std::string> header{"t", "phi_re", "phi_im"};
    std::vector<std::vector<double>> cols(3 + 2 * static_cast<std::size_t>(sol.u.size()));
    cols[0] = sol.grid;
    for (std::size_t k = 0; k < sol.grid.size(); ++k) {
        cols[1].push_back(sol.phi[k].real());
        cols[2].push_back(sol.phi[k].imag());
        for (Eigen::Index i = 0; i < sol.u.size(); ++i) {
            cols[3 + 2 * static_cast<std::size_t>(i)].push_back(sol.psi[k][i].real());
            cols[4 + 2 * static_cast<std::size_t>(i)].push_back(sol.psi[k][i].imag());
        }
    }
    for (Eigen::Index i = 0; i < sol.u.size(); ++i) {
        header.push_back("psi" + std::to_string(i + 1) + "_re");
        header.push_back("psi" + std::to_string(i + 1) + "_im");
    }
    std::vector<std::span<const double>> spans(cols.begin(), cols.end());
    csv::write_columns(path, header, spans);
}

// ---------------------------------------------------------------------------
// LSS model under Q with deterministic r and chi, and B1bar = B3bar = Bbar.

struct LssPricingParams {
    TimeFunction r = 0.0;
    VolProcess chi = 1.0;
    double chi_lower = 1e-8;
    double chi_upper = std::numeric_limits<double>::infinity();
    LevyModel levy;
    TimeFunction A_bar = 0.0;
    TimeFunction B_bar = 0.0;
    TimeFunction B2_bar = 0.0;
    double V = 0.0;    ///< V(t) at the valuation time
    double rho = 0.0;  ///< rho(t) at the valuation time

    void validate() const {
        levy.validate();
        if (!(chi_lower > 0.0 && chi_upper > chi_lower))
            throw ModelError("chi bounds must satisfy 0 < chi_lower < chi_upper");
        if (!(chi.min_value() > chi_lower && chi.max_value() < chi_upper))
            throw ModelError("chi must stay strictly inside (" + std::to_string(chi_lower) + ", " + std::to_string(chi_upper) +
                             "): the measure change needs a volatility bounded away from 0 and infinity");
    }

    [[nodiscard]] std::vector<double> breakpoints(double a, double b) const {
        return merge_breakpoints(a, b,
                                 {r.breakpoints(a, b), chi.breakpoints(a, b), A_bar.breakpoints(a, b),
                                  B_bar.breakpoints(a, b), B2_bar.breakpoints(a, b)});
    }
};

/// chi int z zeta(chi, z) ell(dz) = chi int z (1 - chi z / (e^{chi z} - 1)) ell(dz).
inline double tilted_drift(const LevyModel& L, double chi) {
    if (!L.has_jumps()) return 0.0;
    return chi * jump_integral(L, [&](double z) { return z * zeta(chi, z); }, 1e-13);
}

inline double varpi1(const LssPricingParams& p, double t) {
    const double x = p.chi(t);
    return p.r(t) - 0.5 * x * x * p.levy.c * p.levy.c - tilted_drift(p.levy, x);
}

inline double varpi2(const LssPricingParams& p, double t) {
    return p.A_bar(t) + p.B_bar(t) * (varpi1(p, t) - p.chi(t) * levy_drift(p.levy)) - p.B2_bar(t) * p.r(t);
}

struct LssPhiPsi {
    cplx phi;
    cplx psi1;
    cplx psi2;
};

/// Gauss nodes for J(th) = int (e^{th chi z} - 1 - th chi z)(1 - zeta(chi, z)) ell(dz),
/// refined with |Im th| so each 16-point panel sees about one oscillation.
class TiltedJumpNodes {
public:
    TiltedJumpNodes() = default;
    TiltedJumpNodes(const LevyModel& L, double chi) {
        if (!L.has_jumps()) return;
        const auto s = levy::jump_support(L);
        std::vector<double> pieces{s.lo};
        for (double b : s.breaks)
            if (b > s.lo && b < s.hi) pieces.push_back(b);
        pieces.push_back(s.hi);
        double widest = 0.0;
        for (std::size_t i = 1; i < pieces.size(); ++i) widest = std::max(widest, pieces[i] - pieces[i - 1]);
        for (std::size_t panels : {24u, 48u, 96u, 192u, 384u, 768u}) {
            const auto rule = jump_rule(L, panels);
            Level lv;
            for (std::size_t q = 0; q < rule.size(); ++q) {
                const double z = rule.nodes[q];
                lv.x.push_back(chi * z);
                lv.w.push_back(rule.weights[q] * tilt_weight(chi, z));
            }
            lv.max_width = chi * widest / static_cast<double>(panels);
            levels_.push_back(std::move(lv));
        }
    }

    [[nodiscard]] bool empty() const { return levels_.empty(); }

    [[nodiscard]] cplx operator()(cplx th) const {
        if (levels_.empty()) return {};
        const double freq = std::abs(th.imag());
        std::size_t k = 0;
        while (k + 1 < levels_.size() && levels_[k].max_width * freq > 6.0) ++k;
        const auto& lv = levels_[k];
        cplx acc{};
        for (std::size_t q = 0; q < lv.x.size(); ++q) {
            const cplx y = th * lv.x[q];
            acc += lv.w[q] * (std::exp(y) - 1.0 - y);
        }
        return acc;
    }

    /// J at real argument; Re J(a + ib) <= J(a).
    [[nodiscard]] double real(double th) const {
        if (levels_.empty()) return 0.0;
        const auto& lv = levels_.front();
        double acc = 0.0;
        for (std::size_t q = 0; q < lv.x.size(); ++q) {
            const double y = th * lv.x[q];
            acc += lv.w[q] * (std::expm1(y) - y);
        }
        return acc;
    }

private:
    struct Level {
        std::vector<double> x;  ///< chi z
        std::vector<double> w;  ///< ell weight times (1 - zeta)
        double max_width = 0.0;
    };
    std::vector<Level> levels_;
};

/// Cached time and jump nodes for phi(t, T, u) of the (V, rho) system.
/// phi = int_t^T [c^2 chi^2 th^2 / 2 + varpi1 psi1 + varpi2 psi2 + J(th)] ds,
/// th = psi1 + Bbar psi2, psi1 = u1, psi2 = u2 + u1 (T - s).
class LssCharacteristic {
public:
    LssCharacteristic(const LssPricingParams& p, double t, double T, std::size_t time_panels = 2) : t_(t), T_(T) {
        p.validate();
        if (!(T >= t)) throw DomainError("LssCharacteristic needs t <= T");
        c2_ = p.levy.c * p.levy.c;
        if (T == t) return;
        const auto pts = p.breakpoints(t, T);
        std::map<double, std::size_t> chi_index;
        for (std::size_t i = 1; i < pts.size(); ++i) {
            const auto rule = quad::gauss_legendre_panels(pts[i - 1], pts[i], time_panels);
            for (std::size_t q = 0; q < rule.size(); ++q) {
                const double s = rule.nodes[q];
                Node n{s, rule.weights[q], p.chi(s), p.B_bar(s), varpi1(p, s), varpi2(p, s), 0};
                auto [it, inserted] = chi_index.try_emplace(n.chi, jumps_.size());
                if (inserted) jumps_.emplace_back(p.levy, n.chi);
                n.jump = it->second;
                nodes_.push_back(n);
            }
        }
    }

    [[nodiscard]] LssPhiPsi operator()(cplx u1, cplx u2) const {
        const cplx phi = exponent(u1, u2, true);
        if (!std::isfinite(phi.real()) || !std::isfinite(phi.imag()))
            throw NumericError("LSS phi is not finite (the exponential moment does not exist)");
        return {phi, u1, u2 + u1 * (T_ - t_)};
    }

    /// phi, optionally without the jump integral.
    [[nodiscard]] cplx exponent(cplx u1, cplx u2, bool with_jumps) const {
        cplx phi{};
        for (const auto& n : nodes_) {
            const cplx psi2 = u2 + u1 * (T_ - n.s);
            const cplx th = u1 + n.Bbar * psi2;
            cplx f = 0.5 * c2_ * n.chi * n.chi * th * th + n.varpi1 * u1 + n.varpi2 * psi2;
            if (with_jumps) f += jumps_[n.jump](th);
            phi += n.w * f;
        }
        return phi;
    }

    /// Upper bound for Re of the jump part of phi when Re u = (a1, a2).
    [[nodiscard]] double jump_bound(double a1, double a2) const {
        double acc = 0.0;
        for (const auto& n : nodes_) acc += n.w * jumps_[n.jump].real(a1 + n.Bbar * (a2 + a1 * (T_ - n.s)));
        return acc;
    }

private:
    struct Node {
        double s, w, chi, Bbar, varpi1, varpi2;
        std::size_t jump;
    };

    double t_, T_;
    double c2_ = 0.0;
    std::vector<Node> nodes_;
    std::vector<TiltedJumpNodes> jumps_;
};

inline LssPhiPsi lss_phi_psi(const LssPricingParams& p, double t, double T, cplx u1, cplx u2) {
    return LssCharacteristic(p, t, T)(u1, u2);
}

/// The (V, rho) system as a generic affine spec (Prop. form with beta_2 = e_1).
inline AffineModelSpec lss_affine_spec(const LssPricingParams& p) {
    AffineModelSpec s;
    s.d = 2;
    std::map<double, double> drift;
    for (double x : p.chi.values()) drift.emplace(x, tilted_drift(p.levy, x));
    const double b = levy_drift(p.levy);
    s.varpi = [p, drift, b](double t) {
        const double x = p.chi(t);
        const double w1 = p.r(t) - 0.5 * x * x * p.levy.c * p.levy.c - drift.at(x);
        Vec v(2);
        v << w1, p.A_bar(t) + p.B_bar(t) * (w1 - x * b) - p.B2_bar(t) * p.r(t);
        return v;
    };
    s.beta = [](double) {
        Mat b = Mat::Zero(2, 2);
        b(0, 1) = 1.0;
        return b;
    };
    const double c2 = p.levy.c * p.levy.c;
    s.varrho = [p, c2](double t) {
        const double x = p.chi(t);
        const double b = p.B_bar(t);
        Mat m(2, 2);
        m << 1.0, b, b, b * b;
        return Mat(c2 * x * x * m);
    };
    if (p.levy.has_jumps()) {
        JumpPart J;
        J.law = p.levy;
        J.iota = [p](double t, double z) {
            Vec v(2);
            v << 1.0, p.B_bar(t);
            return Vec(p.chi(t) * z * v);
        };
        J.weight = [p](double t, double z) { return tilt_weight(p.chi(t), z); };
        s.jumps = J;
    }
    const double big = std::numeric_limits<double>::max();
    s.breakpoints = p.breakpoints(-big, big);
    s.breakpoints.erase(std::remove_if(s.breakpoints.begin(), s.breakpoints.end(),
                                       [big](double x) { return std::abs(x) == big; }),
                        s.breakpoints.end());
    return s;
}

}  // namespace cmem::affine
