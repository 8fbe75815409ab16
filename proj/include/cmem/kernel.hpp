#pragma once

// Memory kernels M and their resolvents H, linked by
//
//     H'(t) = int_0^t M(t-u) H(u) du,   H(0) = 1,
//
// built either from the power-law series H(t) = sum_n b_n(alpha) t^{n(2-alpha)}
// or by marching the integrated Volterra equation
//
//     H(t) = 1 + int_0^t K(t-u) H(u) du,   K(s) = int_0^s M(v) dv,
//
// with product-trapezoid weights that integrate the kernel exactly on each cell.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <string>
#include <variant>
#include <vector>

#include "cmem/core/csv.hpp"
#include "cmem/core/errors.hpp"
#include "cmem/core/quadrature.hpp"

namespace cmem::kernel {

struct PowerLaw {
    double alpha;  ///< M(s) = s^{-alpha}
};

struct Constant {
    double level;  ///< M(s) = level
};

struct Tabulated {
    std::vector<double> grid;    ///< ascending, grid[0] == 0
    std::vector<double> values;  ///< M at the knots, linear in between, flat after the last knot
};

class MemoryKernel {
public:
    using Variant = std::variant<PowerLaw, Constant, Tabulated>;

    /// alpha must lie in (0, 1/2). alpha == 0 is accepted only when
    /// `allow_constant_alias` is set and then behaves as Constant{1}.
    static MemoryKernel power_law(double alpha, bool allow_constant_alias = false) {
        if (alpha == 0.0 && allow_constant_alias) return MemoryKernel(PowerLaw{0.0});
        if (!(alpha > 0.0 && alpha < 0.5))
            throw DomainError("power-law kernel needs 0 < alpha < 1/2 (square integrability), got " +
                              std::to_string(alpha));
        return MemoryKernel(PowerLaw{alpha});
    }

    static MemoryKernel constant(double level) {
        if (!std::isfinite(level)) throw DomainError("constant kernel level must be finite");
        return MemoryKernel(Constant{level});
    }

    static MemoryKernel zero() { return constant(0.0); }

    static MemoryKernel tabulated(std::vector<double> grid, std::vector<double> values) {
        if (grid.size() != values.size() || grid.size() < 2)
            throw DomainError("tabulated kernel needs at least two knots and matching values");
        if (grid.front() != 0.0) throw DomainError("tabulated kernel grid must start at 0");
        for (std::size_t i = 1; i < grid.size(); ++i)
            if (!(grid[i] > grid[i - 1])) throw DomainError("tabulated kernel grid must be strictly increasing");
        for (double v : values)
            if (!std::isfinite(v)) throw DomainError("tabulated kernel values must be finite");
        MemoryKernel k(Tabulated{std::move(grid), std::move(values)});
        k.build_tables();
        return k;
    }

    [[nodiscard]] const Variant& variant() const { return kernel_; }
    [[nodiscard]] bool is_power_law() const { return std::holds_alternative<PowerLaw>(kernel_); }
    [[nodiscard]] double alpha() const { return is_power_law() ? std::get<PowerLaw>(kernel_).alpha : 0.0; }

    [[nodiscard]] bool is_zero() const {
        if (const auto* c = std::get_if<Constant>(&kernel_)) return c->level == 0.0;
        if (const auto* t = std::get_if<Tabulated>(&kernel_))
            return std::all_of(t->values.begin(), t->values.end(), [](double v) { return v == 0.0; });
        return false;
    }

    /// M(s) for s > 0 (M(0) is +inf for a genuine power law).
    [[nodiscard]] double operator()(double s) const {
        return std::visit(
            [s](const auto& k) -> double {
                using K = std::decay_t<decltype(k)>;
                if constexpr (std::is_same_v<K, PowerLaw>) {
                    return k.alpha == 0.0 ? 1.0 : std::pow(s, -k.alpha);
                } else if constexpr (std::is_same_v<K, Constant>) {
                    return k.level;
                } else {
                    return 0.0;  // handled below
                }
            },
            kernel_) +
               (std::holds_alternative<Tabulated>(kernel_) ? tab_eval(s, 0) : 0.0);
    }

    /// order 1: K(s) = int_0^s M, order 2: int_0^s K, order 3: int_0^s int K.
    [[nodiscard]] double antiderivative(double s, int order) const {
        if (s <= 0.0) return 0.0;
        if (const auto* p = std::get_if<PowerLaw>(&kernel_)) {
            double e = 1.0 - p->alpha;
            double denom = 1.0;
            for (int i = 0; i < order; ++i) {
                denom *= e;
                e += 1.0;
            }
            return std::pow(s, e - 1.0) / denom;
        }
        if (const auto* c = std::get_if<Constant>(&kernel_)) {
            double f = 1.0;
            for (int i = 1; i <= order; ++i) f *= i;
            return c->level * std::pow(s, order) / f;
        }
        return tab_eval(s, order);
    }

    /// int_0^T M(s)^2 ds.
    [[nodiscard]] double square_integral(double T) const {
        if (const auto* p = std::get_if<PowerLaw>(&kernel_))
            return std::pow(T, 1.0 - 2.0 * p->alpha) / (1.0 - 2.0 * p->alpha);
        if (const auto* c = std::get_if<Constant>(&kernel_)) return c->level * c->level * T;
        const auto& t = std::get<Tabulated>(kernel_);
        return quad::integrate([this](double s) { return (*this)(s) * (*this)(s); }, 0.0, T, 1e-12, t.grid);
    }

    [[nodiscard]] std::vector<double> knots() const {
        if (const auto* t = std::get_if<Tabulated>(&kernel_)) return t->grid;
        return {};
    }

private:
    explicit MemoryKernel(Variant v) : kernel_(std::move(v)) {}

    // Piecewise-polynomial antiderivatives of the linear interpolant, cumulated at the knots.
    void build_tables() {
        const auto& t = std::get<Tabulated>(kernel_);
        const std::size_t n = t.grid.size();
        cum_.assign(4, std::vector<double>(n, 0.0));
        for (std::size_t i = 0; i + 1 < n; ++i) {
            const double d = t.grid[i + 1] - t.grid[i];
            const auto v = segment(i, d);
            for (int o = 1; o <= 3; ++o) cum_[o][i + 1] = v[o];
        }
    }

    // Values of the order-0..3 antiderivatives at offset d inside segment i.
    [[nodiscard]] std::array<double, 4> segment(std::size_t i, double d) const {
        const auto& t = std::get<Tabulated>(kernel_);
        const double m = t.values[i];
        const double slope =
            (i + 1 < t.grid.size()) ? (t.values[i + 1] - t.values[i]) / (t.grid[i + 1] - t.grid[i]) : 0.0;
        const double k1 = cum_.empty() ? 0.0 : cum_[1][i];
        const double k2 = cum_.empty() ? 0.0 : cum_[2][i];
        const double k3 = cum_.empty() ? 0.0 : cum_[3][i];
        return {m + slope * d, k1 + m * d + slope * d * d / 2.0,
                k2 + k1 * d + m * d * d / 2.0 + slope * d * d * d / 6.0,
                k3 + k2 * d + k1 * d * d / 2.0 + m * d * d * d / 6.0 + slope * d * d * d * d / 24.0};
    }

    [[nodiscard]] double tab_eval(double s, int order) const {
        const auto& t = std::get<Tabulated>(kernel_);
        if (s <= 0.0) return order == 0 ? t.values.front() : 0.0;
        auto it = std::upper_bound(t.grid.begin(), t.grid.end(), s);
        const auto i = static_cast<std::size_t>(it - t.grid.begin()) - 1;
        return segment(i, s - t.grid[i])[static_cast<std::size_t>(order)];
    }

    Variant kernel_;
    std::vector<std::vector<double>> cum_;
};

/// Coefficients b_n(alpha) of the power-law resolvent series, kept in log space.
struct SeriesCoefficients {
    double alpha = 0.0;
    std::vector<double> log_b;  ///< log b_n
    std::vector<double> b;      ///< exp(log_b); underflows to 0 for very large n

    [[nodiscard]] std::size_t size() const { return log_b.size(); }
};

/// b_0 = 1, b_n = b_{n-1} Gamma(1+(n-1)(2-alpha)) Gamma(1-alpha) / Gamma(1+n(2-alpha)).
inline SeriesCoefficients series_coefficients(double alpha, std::size_t n_max) {
    if (!(alpha >= 0.0 && alpha < 0.5))
        throw DomainError("series coefficients need 0 <= alpha < 1/2, got " + std::to_string(alpha));
    SeriesCoefficients out;
    out.alpha = alpha;
    out.log_b.resize(n_max + 1);
    out.b.resize(n_max + 1);
    const double step = 2.0 - alpha;
    const double lg_base = std::lgamma(1.0 - alpha);
    out.log_b[0] = 0.0;
    for (std::size_t n = 1; n <= n_max; ++n) {
        const double prev = 1.0 + static_cast<double>(n - 1) * step;
        const double curr = 1.0 + static_cast<double>(n) * step;
        out.log_b[n] = out.log_b[n - 1] + std::lgamma(prev) - std::lgamma(curr) + lg_base;
    }
    for (std::size_t n = 0; n <= n_max; ++n) out.b[n] = std::exp(out.log_b[n]);
    return out;
}

/// H on a grid together with g = H'.
struct Resolvent {
    std::vector<double> grid;
    std::vector<double> H;
    std::vector<double> g;
    double H0 = 1.0;

    [[nodiscard]] std::size_t size() const { return grid.size(); }
    [[nodiscard]] double step() const { return grid.size() > 1 ? grid[1] - grid[0] : 0.0; }

    /// Linear interpolation of H; throws outside the grid.
    [[nodiscard]] double H_at(double t) const {
        if (t < grid.front() - 1e-12 || t > grid.back() + 1e-12)
            throw ConfigError("resolvent evaluated outside its grid at t = " + std::to_string(t));
        if (t <= grid.front()) return H.front();
        if (t >= grid.back()) return H.back();
        const auto it = std::upper_bound(grid.begin(), grid.end(), t);
        const auto i = static_cast<std::size_t>(it - grid.begin()) - 1;
        const double w = (t - grid[i]) / (grid[i + 1] - grid[i]);
        return H[i] + w * (H[i + 1] - H[i]);
    }
};

namespace detail {

inline void require_grid_from_zero(const std::vector<double>& grid) {
    if (grid.empty() || grid.front() != 0.0) throw DomainError("resolvent grid must start at 0");
    for (std::size_t i = 1; i < grid.size(); ++i)
        if (!(grid[i] > grid[i - 1])) throw DomainError("resolvent grid must be strictly increasing");
}

inline double require_uniform(const std::vector<double>& grid) {
    if (grid.size() < 2) throw DomainError("resolvent grid needs at least two points");
    const double h = grid[1] - grid[0];
    for (std::size_t i = 1; i < grid.size(); ++i)
        if (std::abs((grid[i] - grid[i - 1]) - h) > 1e-9 * std::max(1.0, h) + 1e-12 * grid[i])
            throw DomainError("numeric resolvent needs a uniform grid");
    return h;
}

/// Cell weights (left node, right node) of int_{cell} k(t_n - u) H(u) du with H linear,
/// for cell offset m = n - j >= 1. `anti(s, o)` is the o-th antiderivative of k.
template <class Kernel, class Anti>
std::pair<double, double> cell_weights(std::size_t m, double h, const Kernel& k, const Anti& anti, int base) {
    const double a = static_cast<double>(m - 1) * h;
    const double b = static_cast<double>(m) * h;
    double I0 = 0.0;
    double I1 = 0.0;
    if (m <= 4) {
        // int_a^b k(s) ds and int_a^b k(s)(s-a) ds through antiderivatives.
        I0 = anti(b, base + 1) - anti(a, base + 1);
        I1 = (b * anti(b, base + 1) - anti(b, base + 2)) - (a * anti(a, base + 1) - anti(a, base + 2)) - a * I0;
    } else {
        static const quad::Rule unit = quad::gauss_legendre_panels(0.0, 1.0, 1);
        for (std::size_t q = 0; q < unit.size(); ++q) {
            const double s = a + h * unit.nodes[q];
            const double v = k(s) * h * unit.weights[q];
            I0 += v;
            I1 += v * (s - a);
        }
    }
    // phi_j(u) = (s - a)/h on the left node, 1 - (s - a)/h on the right node.
    return {I1 / h, I0 - I1 / h};
}

}  // namespace detail

/// Evaluates H and H' from the series at one point. Throws if 200 coefficients do not suffice.
inline std::pair<double, double> series_value(const SeriesCoefficients& coeffs, double t, double tol) {
    if (t == 0.0) return {1.0, 0.0};
    const double step = 2.0 - coeffs.alpha;
    const double log_t = std::log(t);
    double H = 1.0;
    double g = 0.0;
    const std::size_t min_terms = 5;
    for (std::size_t n = 1; n < coeffs.size(); ++n) {
        const double e = static_cast<double>(n) * step;
        const double term = std::exp(coeffs.log_b[n] + e * log_t);
        const double dterm = e * term / t;
        H += term;
        g += dterm;
        if (n + 1 >= min_terms && term < tol * std::abs(H) && dterm <= tol * std::abs(g)) return {H, g};
    }
    throw NumericError("resolvent series did not converge at t = " + std::to_string(t) + " within " +
                       std::to_string(coeffs.size()) + " coefficients (partial sum " + std::to_string(H) + ")");
}

/// Power-law resolvent from the series; g by term-wise differentiation.
inline Resolvent resolvent_series(double alpha, const std::vector<double>& grid, double tol = 1e-15) {
    if (!(tol > 0.0)) throw DomainError("series tolerance must be positive");
    detail::require_grid_from_zero(grid);
    const auto coeffs = series_coefficients(alpha, 199);  // cap: 200 coefficients
    Resolvent r;
    r.grid = grid;
    r.H.resize(grid.size());
    r.g.resize(grid.size());
    for (std::size_t k = 0; k < grid.size(); ++k) std::tie(r.H[k], r.g[k]) = series_value(coeffs, grid[k], tol);
    return r;
}

namespace detail {
inline Resolvent resolvent_march(const MemoryKernel& M, const std::vector<double>& grid);
}

/// Resolvent by marching the integrated Volterra equation on a uniform grid.
/// The trapezoid march is second order; with `extrapolate` the grid is also solved
/// at half step and the two are Richardson-combined at the requested nodes.
inline Resolvent resolvent_numeric(const MemoryKernel& M, const std::vector<double>& grid, bool extrapolate = true) {
    detail::require_grid_from_zero(grid);
    detail::require_uniform(grid);
    auto coarse = detail::resolvent_march(M, grid);
    if (!extrapolate) return coarse;
    std::vector<double> fine_grid(2 * grid.size() - 1);
    const double h = (grid.back() - grid.front()) / static_cast<double>(grid.size() - 1);
    for (std::size_t k = 0; k < fine_grid.size(); ++k) fine_grid[k] = 0.5 * h * static_cast<double>(k);
    fine_grid.back() = grid.back();
    const auto fine = detail::resolvent_march(M, fine_grid);
    for (std::size_t k = 1; k < grid.size(); ++k) {
        coarse.H[k] = (4.0 * fine.H[2 * k] - coarse.H[k]) / 3.0;
        coarse.g[k] = (4.0 * fine.g[2 * k] - coarse.g[k]) / 3.0;
    }
    return coarse;
}

inline Resolvent detail::resolvent_march(const MemoryKernel& M, const std::vector<double>& grid) {
    const double h = detail::require_uniform(grid);
    const std::size_t n = grid.size();

    auto K = [&M](double s) { return M.antiderivative(s, 1); };
    auto antiK = [&M](double s, int o) { return M.antiderivative(s, o); };
    auto Mf = [&M](double s) { return M(s); };

    std::vector<double> wH_left(n), wH_right(n), wg_left(n), wg_right(n);
    for (std::size_t m = 1; m < n; ++m) {
        std::tie(wH_left[m], wH_right[m]) = detail::cell_weights(m, h, K, antiK, 1);
        std::tie(wg_left[m], wg_right[m]) = detail::cell_weights(m, h, Mf, antiK, 0);
    }

    Resolvent r;
    r.grid = grid;
    r.H.assign(n, 0.0);
    r.g.assign(n, 0.0);
    r.H[0] = 1.0;
    for (std::size_t k = 1; k < n; ++k) {
        double acc = 1.0;
        for (std::size_t j = 0; j < k; ++j) {
            const std::size_t m = k - j;
            acc += wH_left[m] * r.H[j];
            if (j + 1 < k) acc += wH_right[m] * r.H[j + 1];
        }
        const double denom = 1.0 - wH_right[1];
        r.H[k] = acc / denom;
        if (!std::isfinite(r.H[k]))
            throw NumericError("numeric resolvent became non-finite at t = " + std::to_string(grid[k]));
    }
    for (std::size_t k = 1; k < n; ++k) {
        double acc = 0.0;
        for (std::size_t j = 0; j < k; ++j) {
            const std::size_t m = k - j;
            acc += wg_left[m] * r.H[j] + wg_right[m] * r.H[j + 1];
        }
        r.g[k] = acc;
    }
    return r;
}

/// Product-trapezoid value of int_0^{t_k} M(t_k - u) H(u) du for every grid point.
inline std::vector<double> memory_convolution(const MemoryKernel& M, const Resolvent& R) {
    const double h = detail::require_uniform(R.grid);
    const std::size_t n = R.size();
    auto Mf = [&M](double s) { return M(s); };
    auto antiK = [&M](double s, int o) { return M.antiderivative(s, o); };
    std::vector<double> wl(n), wr(n), out(n, 0.0);
    for (std::size_t m = 1; m < n; ++m) std::tie(wl[m], wr[m]) = detail::cell_weights(m, h, Mf, antiK, 0);
    for (std::size_t k = 1; k < n; ++k) {
        double acc = 0.0;
        for (std::size_t j = 0; j < k; ++j) acc += wl[k - j] * R.H[j] + wr[k - j] * R.H[j + 1];
        out[k] = acc;
    }
    return out;
}

/// max_k |g(t_k) - int_0^{t_k} M(t_k-u) H(u) du| on the resolvent grid.
/// The product-trapezoid convolution is evaluated at steps h and 2h and
/// Richardson-combined, so the residual is taken on the even grid nodes.
inline double resolvent_residual(const MemoryKernel& M, const Resolvent& R) {
    const auto conv = memory_convolution(M, R);
    double worst = 0.0;
    if (R.size() < 5) {
        for (std::size_t k = 0; k < R.size(); ++k) worst = std::max(worst, std::abs(R.g[k] - conv[k]));
        return worst;
    }
    Resolvent coarse;
    for (std::size_t k = 0; k < R.size(); k += 2) {
        coarse.grid.push_back(R.grid[k]);
        coarse.H.push_back(R.H[k]);
        coarse.g.push_back(R.g[k]);
    }
    const auto conv2 = memory_convolution(M, coarse);
    for (std::size_t k = 0; k < coarse.size(); ++k)
        worst = std::max(worst, std::abs(coarse.g[k] - (4.0 * conv[2 * k] - conv2[k]) / 3.0));
    return worst;
}

/// Same residual with H and H' given as functions; the convolution is computed by
/// adaptive quadrature (after u -> (t-u)^{1-alpha} for the power law, which removes the singularity).
inline double resolvent_residual(const MemoryKernel& M, const std::function<double(double)>& H,
                                 const std::function<double(double)>& g, const std::vector<double>& times) {
    double worst = 0.0;
    for (double t : times) {
        if (t <= 0.0) {
            worst = std::max(worst, std::abs(g(0.0)));
            continue;
        }
        double conv = 0.0;
        if (M.is_power_law() && M.alpha() > 0.0) {
            const double e = 1.0 - M.alpha();
            conv = quad::integrate([&](double v) { return H(t - std::pow(v, 1.0 / e)); }, 0.0, std::pow(t, e),
                                   1e-12) /
                   e;
        } else {
            conv = quad::integrate([&](double u) { return M(t - u) * H(u); }, 0.0, t, 1e-12, M.knots());
        }
        worst = std::max(worst, std::abs(g(t) - conv));
    }
    return worst;
}

/// Deterministic-chi estimate of sup_t int_0^T int_0^T M^2(t-u) H^2(u-s) C^2 du ds.
/// The inner integral is monotone in t, so the supremum sits at t = T.
inline double check_fubini_condition(const MemoryKernel& M, const Resolvent& R, double chi_bound, double T) {
    if (!(T > 0.0)) throw DomainError("horizon must be positive");
    if (R.grid.back() < T - 1e-12) throw ConfigError("resolvent grid does not cover the horizon");
    if (M.is_zero()) return 0.0;

    // Q(u) = int_0^u H^2, cumulative trapezoid on the resolvent grid, linear in between.
    // The outer integral int_0^T M^2(T-u) Q(u) du is taken cell by cell.
    static const quad::Rule unit = quad::gauss_legendre_panels(0.0, 1.0, 1);
    const bool power = M.is_power_law() && M.alpha() > 0.0;
    const double e = 1.0 - 2.0 * M.alpha();
    double Q = 0.0;
    double value = 0.0;
    for (std::size_t k = 1; k < R.size() && R.grid[k - 1] < T; ++k) {
        const double a = R.grid[k - 1];
        const double b = std::min(R.grid[k], T);
        const double slope = 0.5 * (R.H[k - 1] * R.H[k - 1] + R.H[k] * R.H[k]);  // dQ/du on the cell
        if (power) {
            // int_{T-b}^{T-a} w^{-2 alpha} (Q + slope (T - a - w)) dw
            const double lo = T - b;
            const double hi = T - a;
            const double P0 = (std::pow(hi, e) - std::pow(lo, e)) / e;
            const double P1 = (std::pow(hi, e + 1.0) - std::pow(lo, e + 1.0)) / (e + 1.0);
            value += (Q + slope * (T - a)) * P0 - slope * P1;
        } else {
            for (std::size_t q = 0; q < unit.size(); ++q) {
                const double u = a + (b - a) * unit.nodes[q];
                const double m = M(T - u);
                value += unit.weights[q] * (b - a) * m * m * (Q + slope * (u - a));
            }
        }
        Q += slope * (b - a);
    }
    value *= chi_bound * chi_bound;
    if (!std::isfinite(value)) throw NumericError("integrability condition fails: quadrature diverged");
    return value;
}

/// Two CSV files: (t, H) and (t, g), 17 significant digits.
inline void write_resolvent_csv(const Resolvent& R, const std::string& h_path, const std::string& g_path) {
    csv::write_columns(h_path, {"t", "H"}, {R.grid, R.H});
    csv::write_columns(g_path, {"t", "g"}, {R.grid, R.g});
}

}  // namespace cmem::kernel
