#pragma once

#include <cmath>
#include <cstddef>
#include <span>

namespace cmem {

/// Neumaier-compensated running sum.
class CompensatedSum {
public:
    void add(double x) {
        const double t = sum_ + x;
        if (std::abs(sum_) >= std::abs(x))
            comp_ += (sum_ - t) + x;
        else
            comp_ += (x - t) + sum_;
        sum_ = t;
    }
    [[nodiscard]] double value() const { return sum_ + comp_; }

private:
    double sum_ = 0.0;
    double comp_ = 0.0;
};

/// Monte Carlo estimate with its standard error.
struct Estimate {
    double mean = 0.0;
    double stderr_ = 0.0;
    std::size_t n = 0;

    [[nodiscard]] double lower(double z) const { return mean - z * stderr_; }
    [[nodiscard]] double upper(double z) const { return mean + z * stderr_; }
    /// True when x lies inside mean +- z * stderr.
    [[nodiscard]] bool contains(double x, double z) const { return std::abs(x - mean) <= z * stderr_; }
};

/// Two-sided normal quantiles used for confidence intervals.
inline constexpr double kZ99 = 2.5758293035489004;
inline constexpr double kZ95 = 1.959963984540054;

/// Sample mean and standard error of the mean, summed in index order.
inline Estimate summarize(std::span<const double> xs) {
    Estimate e;
    e.n = xs.size();
    if (xs.empty()) return e;
    CompensatedSum s;
    for (double x : xs) s.add(x);
    e.mean = s.value() / static_cast<double>(xs.size());
    if (xs.size() < 2) return e;
    CompensatedSum ss;
    for (double x : xs) ss.add((x - e.mean) * (x - e.mean));
    const double var = ss.value() / static_cast<double>(xs.size() - 1);
    e.stderr_ = std::sqrt(var / static_cast<double>(xs.size()));
    return e;
}

}  // namespace cmem
