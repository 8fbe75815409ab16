#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "cmem/core/errors.hpp"

namespace cmem {

/// Deterministic coefficient function of time, piecewise linear between knots
/// and flat outside them. A single knot (or none) gives a constant.
class TimeFunction {
public:
    TimeFunction() = default;
    TimeFunction(double constant) : values_{constant} {}  // NOLINT(google-explicit-constructor)
    TimeFunction(std::vector<double> grid, std::vector<double> values)
        : grid_(std::move(grid)), values_(std::move(values)) {
        if (grid_.size() != values_.size() || grid_.empty())
            throw ConfigError("TimeFunction: grid and values must be non-empty and of equal length");
        for (std::size_t i = 1; i < grid_.size(); ++i)
            if (!(grid_[i] > grid_[i - 1])) throw ConfigError("TimeFunction: grid must be strictly increasing");
        if (grid_.size() == 1) grid_.clear();
    }

    [[nodiscard]] double operator()(double t) const {
        if (grid_.empty()) return values_.empty() ? 0.0 : values_.front();
        if (t <= grid_.front()) return values_.front();
        if (t >= grid_.back()) return values_.back();
        const auto it = std::upper_bound(grid_.begin(), grid_.end(), t);
        const auto i = static_cast<std::size_t>(it - grid_.begin()) - 1;
        const double w = (t - grid_[i]) / (grid_[i + 1] - grid_[i]);
        return values_[i] + w * (values_[i + 1] - values_[i]);
    }

    [[nodiscard]] bool is_constant() const { return grid_.empty(); }
    [[nodiscard]] bool is_zero() const {
        return std::all_of(values_.begin(), values_.end(), [](double v) { return v == 0.0; });
    }
    [[nodiscard]] double sup_abs() const {
        double m = 0.0;
        for (double v : values_) m = std::max(m, std::abs(v));
        return m;
    }

    /// Exact integral over [a, b] (trapezoid on each linear piece).
    [[nodiscard]] double integral(double a, double b) const {
        if (b < a) return -integral(b, a);
        if (grid_.empty()) return (*this)(a) * (b - a);
        std::vector<double> pts{a};
        for (double g : grid_)
            if (g > a && g < b) pts.push_back(g);
        pts.push_back(b);
        double sum = 0.0;
        for (std::size_t i = 1; i < pts.size(); ++i)
            sum += 0.5 * ((*this)(pts[i - 1]) + (*this)(pts[i])) * (pts[i] - pts[i - 1]);
        return sum;
    }

    /// Kinks strictly inside (a, b).
    [[nodiscard]] std::vector<double> breakpoints(double a, double b) const {
        std::vector<double> out;
        for (double g : grid_)
            if (g > a && g < b) out.push_back(g);
        return out;
    }

    [[nodiscard]] const std::vector<double>& grid() const { return grid_; }
    [[nodiscard]] const std::vector<double>& values() const { return values_; }

private:
    std::vector<double> grid_;
    std::vector<double> values_;
};

/// Volatility modulation chi(t): constant, or piecewise constant and càdlàg
/// (values[i] on [grid[i], grid[i+1]), values.back() afterwards).
class VolProcess {
public:
    VolProcess() = default;
    VolProcess(double constant) : values_{constant} {}  // NOLINT(google-explicit-constructor)
    VolProcess(std::vector<double> grid, std::vector<double> values)
        : grid_(std::move(grid)), values_(std::move(values)) {
        if (grid_.size() != values_.size() || grid_.empty())
            throw ConfigError("VolProcess: grid and values must be non-empty and of equal length");
        for (std::size_t i = 1; i < grid_.size(); ++i)
            if (!(grid_[i] > grid_[i - 1])) throw ConfigError("VolProcess: grid must be strictly increasing");
        if (grid_.size() == 1) grid_.clear();
    }

    [[nodiscard]] double operator()(double t) const {
        if (grid_.empty()) return values_.empty() ? 0.0 : values_.front();
        if (t < grid_.front()) return values_.front();
        const auto it = std::upper_bound(grid_.begin(), grid_.end(), t);
        return values_[static_cast<std::size_t>(it - grid_.begin()) - 1];
    }

    /// Left limit chi(t-).
    [[nodiscard]] double left_limit(double t) const {
        if (grid_.empty()) return values_.front();
        const auto it = std::lower_bound(grid_.begin(), grid_.end(), t);
        if (it == grid_.begin()) return values_.front();
        return values_[static_cast<std::size_t>(it - grid_.begin()) - 1];
    }

    [[nodiscard]] bool is_constant() const { return grid_.empty(); }
    [[nodiscard]] double min_value() const { return *std::min_element(values_.begin(), values_.end()); }
    [[nodiscard]] double max_value() const { return *std::max_element(values_.begin(), values_.end()); }

    /// Jump times strictly inside (a, b).
    [[nodiscard]] std::vector<double> breakpoints(double a, double b) const {
        std::vector<double> out;
        for (double g : grid_)
            if (g > a && g < b) out.push_back(g);
        return out;
    }

    [[nodiscard]] const std::vector<double>& grid() const { return grid_; }
    [[nodiscard]] const std::vector<double>& values() const { return values_; }

private:
    std::vector<double> grid_;
    std::vector<double> values_;
};

/// Uniform time grid t_k = start + k * dt, k = 0..steps.
struct TimeGrid {
    double start = 0.0;
    double end = 1.0;
    std::size_t steps = 1;

    TimeGrid() = default;
    TimeGrid(double s, double e, std::size_t n) : start(s), end(e), steps(n) {
        if (n == 0 || !(e > s)) throw ConfigError("TimeGrid: need end > start and at least one step");
    }

    [[nodiscard]] double dt() const { return (end - start) / static_cast<double>(steps); }
    [[nodiscard]] double operator[](std::size_t k) const { return start + static_cast<double>(k) * dt(); }
    [[nodiscard]] std::size_t size() const { return steps + 1; }
    [[nodiscard]] std::vector<double> points() const {
        std::vector<double> out(size());
        for (std::size_t k = 0; k < out.size(); ++k) out[k] = (*this)[k];
        return out;
    }
};

/// Sorted, de-duplicated union of interior breakpoints, bracketed by a and b.
inline std::vector<double> merge_breakpoints(double a, double b, std::vector<std::vector<double>> lists) {
    std::vector<double> pts{a, b};
    for (auto& l : lists) pts.insert(pts.end(), l.begin(), l.end());
    std::sort(pts.begin(), pts.end());
    pts.erase(std::unique(pts.begin(), pts.end(), [](double x, double y) { return std::abs(x - y) < 1e-14; }),
              pts.end());
    return pts;
}

}  // namespace cmem
