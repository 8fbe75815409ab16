#pragma once

// Square-integrable Lévy driver L(t) = b t + c W(t) + compensated compound Poisson,
// with Lévy measure ell(dz) = intensity * law(dz), and the jump-size tilt
// zeta(chi, z) = 1 - chi z / (e^{chi z} - 1) used by the pricing measure.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>
#include <string>
#include <variant>
#include <vector>

#include "cmem/core/errors.hpp"
#include "cmem/core/quadrature.hpp"
#include "cmem/core/rng.hpp"

namespace cmem {

struct NoJumps {};

struct NormalJumps {
    double mean = 0.0;
    double stdev = 1.0;
};

/// p * Exp(eta_plus) on the positive axis, (1 - p) * (-Exp(eta_minus)) on the negative axis.
struct DoubleExponentialJumps {
    double p = 0.5;
    double eta_plus = 1.0;
    double eta_minus = 1.0;
};

using JumpLaw = std::variant<NoJumps, NormalJumps, DoubleExponentialJumps>;

struct LevyModel {
    double varsigma = 0.0;  ///< drift of the truncated characteristic triplet
    double c = 0.0;         ///< Gaussian scale
    double intensity = 0.0;
    JumpLaw law = NoJumps{};

    [[nodiscard]] bool has_jumps() const { return intensity > 0.0 && !std::holds_alternative<NoJumps>(law); }

    void validate() const {
        if (!(c >= 0.0) || !std::isfinite(c)) throw DomainError("Gaussian scale c must be >= 0");
        if (!(intensity >= 0.0) || !std::isfinite(intensity)) throw DomainError("jump intensity must be >= 0");
        if (const auto* n = std::get_if<NormalJumps>(&law))
            if (!(n->stdev > 0.0)) throw DomainError("normal jump law needs stdev > 0");
        if (const auto* d = std::get_if<DoubleExponentialJumps>(&law)) {
            if (!(d->p >= 0.0 && d->p <= 1.0)) throw DomainError("double-exponential jump law needs 0 <= p <= 1");
            if (!(d->eta_plus > 0.0 && d->eta_minus > 0.0))
                throw DomainError("double-exponential jump law needs eta_plus, eta_minus > 0");
        }
    }
};

namespace levy {

inline double normal_pdf(double x) { return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi); }
inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

/// Density of the jump-size law (not multiplied by the intensity).
inline double jump_density(const LevyModel& L, double z) {
    if (const auto* n = std::get_if<NormalJumps>(&L.law)) return normal_pdf((z - n->mean) / n->stdev) / n->stdev;
    if (const auto* d = std::get_if<DoubleExponentialJumps>(&L.law))
        return z >= 0.0 ? d->p * d->eta_plus * std::exp(-d->eta_plus * z)
                        : (1.0 - d->p) * d->eta_minus * std::exp(d->eta_minus * z);
    return 0.0;
}

/// E[Z] of the jump-size law.
inline double jump_mean(const LevyModel& L) {
    if (const auto* n = std::get_if<NormalJumps>(&L.law)) return n->mean;
    if (const auto* d = std::get_if<DoubleExponentialJumps>(&L.law))
        return d->p / d->eta_plus - (1.0 - d->p) / d->eta_minus;
    return 0.0;
}

/// E[Z^2] of the jump-size law.
inline double jump_second_moment(const LevyModel& L) {
    if (const auto* n = std::get_if<NormalJumps>(&L.law)) return n->mean * n->mean + n->stdev * n->stdev;
    if (const auto* d = std::get_if<DoubleExponentialJumps>(&L.law))
        return 2.0 * d->p / (d->eta_plus * d->eta_plus) + 2.0 * (1.0 - d->p) / (d->eta_minus * d->eta_minus);
    return 0.0;
}

/// Interval carrying all but a negligible (< 1e-20) part of the jump law, and its interior kinks.
struct Support {
    double lo = 0.0;
    double hi = 0.0;
    std::vector<double> breaks;
};

inline Support jump_support(const LevyModel& L) {
    if (const auto* n = std::get_if<NormalJumps>(&L.law)) {
        Support s{n->mean - 10.0 * n->stdev, n->mean + 10.0 * n->stdev, {n->mean}};
        if (s.lo < 0.0 && s.hi > 0.0) s.breaks.push_back(0.0);
        std::sort(s.breaks.begin(), s.breaks.end());
        return s;
    }
    if (const auto* d = std::get_if<DoubleExponentialJumps>(&L.law))
        return {d->p < 1.0 ? -48.0 / d->eta_minus : 0.0, d->p > 0.0 ? 48.0 / d->eta_plus : 0.0, {0.0}};
    return {};
}

}  // namespace levy

/// b = varsigma + int_{|z| >= 1} z ell(dz), in closed form per law.
inline double levy_drift(const LevyModel& L) {
    double tail = 0.0;
    if (const auto* n = std::get_if<NormalJumps>(&L.law)) {
        // E[Z 1{Z >= 1}] + E[Z 1{Z <= -1}] for Z ~ N(m, s^2)
        const double a = (1.0 - n->mean) / n->stdev;
        const double a2 = (-1.0 - n->mean) / n->stdev;
        tail = n->mean * (1.0 - levy::normal_cdf(a) + levy::normal_cdf(a2)) +
               n->stdev * (levy::normal_pdf(a) - levy::normal_pdf(a2));
    } else if (const auto* d = std::get_if<DoubleExponentialJumps>(&L.law)) {
        tail = d->p * std::exp(-d->eta_plus) * (1.0 + 1.0 / d->eta_plus) -
               (1.0 - d->p) * std::exp(-d->eta_minus) * (1.0 + 1.0 / d->eta_minus);
    }
    return L.varsigma + (L.has_jumps() ? L.intensity * tail : 0.0);
}

/// zeta(chi, z) = 1 - chi z / (e^{chi z} - 1), with zeta -> 0 as chi z -> 0.
inline double zeta(double chi, double z) {
    const double x = chi * z;
    if (std::abs(x) < 1e-6) return x / 2.0 - x * x / 12.0;
    return 1.0 - x / std::expm1(x);
}

/// log(1 - zeta(chi, z)) = log(chi z / (e^{chi z} - 1)).
inline double log_one_minus_zeta(double chi, double z) {
    const double x = chi * z;
    if (std::abs(x) < 1e-6) return -x / 2.0 + x * x / 24.0;
    if (x > 0.0) return std::log(x) - x - std::log1p(-std::exp(-x));  // avoids overflow of e^x
    return std::log(-x) - std::log1p(-std::exp(x));
}

/// 1 - zeta(chi, z), the density of the tilted compensator against ell.
inline double tilt_weight(double chi, double z) { return std::exp(log_one_minus_zeta(chi, z)); }

/// int f(z) ell(dz) by adaptive Gauss-Kronrod over the jump support.
template <class F>
auto jump_integral(const LevyModel& L, F&& f, double tol = 1e-10) -> decltype(f(0.0)) {
    using R = decltype(f(0.0));
    if (!L.has_jumps()) return R{};
    const auto s = levy::jump_support(L);
    return L.intensity *
           quad::integrate([&](double z) { return f(z) * levy::jump_density(L, z); }, s.lo, s.hi, tol, s.breaks);
}

/// Fixed Gauss-Legendre rule for z-integrals against ell: sum_q w_q f(z_q) ~ int f(z) ell(dz).
/// Weights already contain intensity * density.
inline quad::Rule jump_rule(const LevyModel& L, std::size_t panels_per_piece = 24) {
    quad::Rule rule;
    if (!L.has_jumps()) return rule;
    const auto s = levy::jump_support(L);
    std::vector<double> pts{s.lo};
    for (double b : s.breaks)
        if (b > s.lo && b < s.hi) pts.push_back(b);
    pts.push_back(s.hi);
    for (std::size_t i = 1; i < pts.size(); ++i) {
        const auto piece = quad::gauss_legendre_panels(pts[i - 1], pts[i], panels_per_piece);
        for (std::size_t q = 0; q < piece.size(); ++q) {
            const double w = piece.weights[q] * L.intensity * levy::jump_density(L, piece.nodes[q]);
            if (w == 0.0) continue;
            rule.nodes.push_back(piece.nodes[q]);
            rule.weights.push_back(w);
        }
    }
    return rule;
}

/// Draw one jump size from the law under P.
inline double sample_jump(const LevyModel& L, CounterRng& rng) {
    if (const auto* n = std::get_if<NormalJumps>(&L.law)) return n->mean + n->stdev * rng.normal();
    if (const auto* d = std::get_if<DoubleExponentialJumps>(&L.law)) {
        const double u = rng.uniform();
        const double e = -std::log(rng.uniform());
        return u < d->p ? e / d->eta_plus : -e / d->eta_minus;
    }
    return 0.0;
}

/// Jump-size sampler for the tilted Lévy measure (1 - zeta(chi, .)) ell, built from a
/// histogram of the tilted density on a fine grid. Sizes are uniform inside a cell, so
/// every moment reported below is exact for the law actually sampled.
class TiltedJumpSampler {
public:
    TiltedJumpSampler() = default;

    TiltedJumpSampler(const LevyModel& L, double chi, std::size_t cells = 8192) : chi_(chi) {
        if (!L.has_jumps()) return;
        const auto s = levy::jump_support(L);
        // Split cells between the pieces proportionally to their length; kinks land on edges.
        std::vector<double> pts{s.lo};
        for (double b : s.breaks)
            if (b > s.lo && b < s.hi) pts.push_back(b);
        pts.push_back(s.hi);
        const double span = s.hi - s.lo;
        edges_.push_back(s.lo);
        for (std::size_t i = 1; i < pts.size(); ++i) {
            const auto n = std::max<std::size_t>(
                16, static_cast<std::size_t>(std::ceil(static_cast<double>(cells) * (pts[i] - pts[i - 1]) / span)));
            for (std::size_t k = 1; k <= n; ++k)
                edges_.push_back(pts[i - 1] + (pts[i] - pts[i - 1]) * static_cast<double>(k) / static_cast<double>(n));
        }
        // Cell masses by Gauss-Legendre on each cell.
        static const quad::Rule unit = quad::gauss_legendre_panels(0.0, 1.0, 1);
        cdf_.assign(edges_.size(), 0.0);
        mass_.assign(edges_.size() - 1, 0.0);
        for (std::size_t i = 0; i + 1 < edges_.size(); ++i) {
            const double a = edges_[i];
            const double h = edges_[i + 1] - a;
            double m = 0.0;
            for (std::size_t q = 0; q < unit.size(); ++q) {
                const double z = a + h * unit.nodes[q];
                m += unit.weights[q] * h * levy::jump_density(L, z) * tilt_weight(chi, z);
            }
            mass_[i] = m * L.intensity;
            cdf_[i + 1] = cdf_[i] + mass_[i];
        }
        intensity_ = cdf_.back();
        double mean = 0.0;
        for (std::size_t i = 0; i < mass_.size(); ++i) mean += mass_[i] * 0.5 * (edges_[i] + edges_[i + 1]);
        first_moment_ = mean;
    }

    /// Total mass of the tilted measure.
    [[nodiscard]] double intensity() const { return intensity_; }
    /// int z (1 - zeta) ell(dz) for the sampled law.
    [[nodiscard]] double first_moment() const { return first_moment_; }
    [[nodiscard]] double chi() const { return chi_; }

    /// int (e^{k z} - 1 - k z) (1 - zeta) ell(dz) for the sampled law.
    [[nodiscard]] double cumulant(double k) const {
        double sum = 0.0;
        for (std::size_t i = 0; i < mass_.size(); ++i) {
            const double a = edges_[i];
            const double b = edges_[i + 1];
            const double x = k * (b - a);
            const double avg_exp =
                std::abs(x) < 1e-8 ? std::exp(k * 0.5 * (a + b)) : std::exp(k * a) * std::expm1(x) / x;
            sum += mass_[i] * (avg_exp - 1.0 - k * 0.5 * (a + b));
        }
        return sum;
    }

    double sample(CounterRng& rng) const {
        const double u = rng.uniform() * intensity_;
        auto it = std::upper_bound(cdf_.begin(), cdf_.end(), u);
        auto i = static_cast<std::size_t>(it - cdf_.begin());
        i = std::clamp<std::size_t>(i, 1, cdf_.size() - 1) - 1;
        while (mass_[i] == 0.0 && i + 1 < mass_.size()) ++i;
        const double w = (u - cdf_[i]) / mass_[i];
        return edges_[i] + std::clamp(w, 0.0, 1.0) * (edges_[i + 1] - edges_[i]);
    }

private:
    double chi_ = 0.0;
    double intensity_ = 0.0;
    double first_moment_ = 0.0;
    std::vector<double> edges_;
    std::vector<double> cdf_;
    std::vector<double> mass_;
};

}  // namespace cmem
