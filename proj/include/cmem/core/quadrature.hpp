#pragma once

#include <boost/math/quadrature/gauss.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <cmath>
#include <complex>
#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "cmem/core/errors.hpp"

namespace cmem::quad {

/// Fixed nodes and weights: sum_j w_j f(x_j) approximates an integral.
struct Rule {
    std::vector<double> nodes;
    std::vector<double> weights;

    [[nodiscard]] std::size_t size() const { return nodes.size(); }

    template <class F>
    [[nodiscard]] auto apply(F&& f) const -> decltype(f(0.0)) {
        using R = decltype(f(0.0));
        R sum{};
        for (std::size_t j = 0; j < nodes.size(); ++j) sum += weights[j] * f(nodes[j]);
        return sum;
    }
};

/// Composite 16-point Gauss-Legendre on `panels` equal panels of [a, b].
inline Rule gauss_legendre_panels(double a, double b, std::size_t panels) {
    using GL = boost::math::quadrature::gauss<double, 16>;
    const auto& x = GL::abscissa();
    const auto& w = GL::weights();
    Rule rule;
    rule.nodes.reserve(16 * panels);
    rule.weights.reserve(16 * panels);
    const double h = (b - a) / static_cast<double>(panels);
    for (std::size_t p = 0; p < panels; ++p) {
        const double lo = a + static_cast<double>(p) * h;
        const double mid = lo + 0.5 * h;
        for (std::size_t i = 0; i < x.size(); ++i) {
            rule.nodes.push_back(mid - 0.5 * h * x[i]);
            rule.weights.push_back(0.5 * h * w[i]);
            rule.nodes.push_back(mid + 0.5 * h * x[i]);
            rule.weights.push_back(0.5 * h * w[i]);
        }
    }
    return rule;
}

/// Adaptive Gauss-Kronrod (7/15 nested to 31 points) over [a, b], split at the
/// given interior breakpoints. Works for real and complex integrands.
template <class F>
auto integrate(F&& f, double a, double b, double tol = 1e-12, const std::vector<double>& breaks = {},
               unsigned max_depth = 20) -> decltype(f(0.0)) {
    using R = decltype(f(0.0));
    if (a == b) return R{};
    std::vector<double> pts{a};
    for (double x : breaks)
        if (x > a && x < b) pts.push_back(x);
    pts.push_back(b);
    R total{};
    for (std::size_t i = 1; i < pts.size(); ++i) {
        double err = 0.0;
        double l1 = 0.0;
        const R piece = boost::math::quadrature::gauss_kronrod<double, 31>::integrate(f, pts[i - 1], pts[i], max_depth,
                                                                                        tol, &err, &l1);
        if (!std::isfinite(std::abs(piece)))
            throw NumericError("quadrature produced a non-finite value on [" + std::to_string(pts[i - 1]) + ", " +
                               std::to_string(pts[i]) + "]");
        if (err > std::max(1e3 * tol, 1e-6) * std::max(1.0, l1))
            throw NumericError("quadrature failed to converge on [" + std::to_string(pts[i - 1]) + ", " +
                               std::to_string(pts[i]) + "], error estimate " + std::to_string(err));
        total += piece;
    }
    return total;
}

/// Adaptive quadrature on a semi-infinite range [a, inf).
template <class F>
double integrate_to_infinity(F&& f, double a, double tol = 1e-12) {
    double err = 0.0;
    const double v = boost::math::quadrature::gauss_kronrod<double, 31>::integrate(
        f, a, std::numeric_limits<double>::infinity(), 20, tol, &err);
    if (!std::isfinite(v)) throw NumericError("semi-infinite quadrature produced a non-finite value");
    return v;
}

}  // namespace cmem::quad
