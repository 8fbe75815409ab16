#include <gtest/gtest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "cmem/dynamics.hpp"

using namespace cmem;
using namespace cmem::dynamics;

namespace {

MarketModel jump_model(double alpha = 0.25) {
    MarketModel m;
    m.kernel = kernel::MemoryKernel::power_law(alpha);
    m.levy = LevyModel{0.02, 0.3, 2.0, NormalJumps{-0.05, 0.15}};
    m.chi = VolProcess({0.0, 0.5}, {1.0, 0.8});
    m.chi_lower = 0.5;
    m.chi_upper = 2.0;
    m.rate = RateDynamics{0.01, 0.1, 0.5, 0.02};
    m.premium = PremiumDynamics{0.005, 0.1, 0.1, 0.5, 0.01};
    return m;
}

double sum_of_weights(const LevyModel& L, double z_lo, double z_hi) {
    return quad::integrate([&](double z) { return z * levy::jump_density(L, z); }, z_lo, z_hi, 1e-13);
}

}  // namespace

TEST(LevyDrift, NoJumpsIsVarsigma) { EXPECT_EQ(levy_drift(LevyModel{0.1, 0.2, 0.0, NoJumps{}}), 0.1); }

TEST(LevyDrift, NormalMatchesQuadrature) {
    for (auto law : {NormalJumps{0.0, 0.2}, NormalJumps{0.5, 0.7}, NormalJumps{-0.3, 1.5}}) {
        LevyModel L{0.0, 0.0, 1.0, law};
        const double s = law.stdev;
        const double oracle =
            sum_of_weights(L, 1.0, law.mean + 40.0 * s + 1.0) + sum_of_weights(L, law.mean - 40.0 * s - 1.0, -1.0);
        EXPECT_NEAR(levy_drift(L), oracle, 1e-8);
    }
    LevyModel L{0.25, 0.0, 3.0, NormalJumps{0.5, 0.7}};
    EXPECT_NEAR(levy_drift(L), 0.25 + 3.0 * (sum_of_weights(L, 1.0, 40.0) + sum_of_weights(L, -40.0, -1.0)), 1e-8);
}

TEST(LevyDrift, DoubleExponential) {
    EXPECT_NEAR(levy_drift(LevyModel{0.0, 0.0, 2.0, DoubleExponentialJumps{0.5, 3.0, 3.0}}), 0.0, 1e-15);
    LevyModel L{0.0, 0.0, 1.5, DoubleExponentialJumps{0.3, 2.0, 4.0}};
    EXPECT_NEAR(levy_drift(L), 1.5 * (sum_of_weights(L, 1.0, 60.0) + sum_of_weights(L, -60.0, -1.0)), 1e-8);
}

TEST(Zeta, LimitsAndValues) {
    EXPECT_EQ(zeta(1.0, 0.0), 0.0);
    EXPECT_NEAR(zeta(1.0, 1e-9), 5e-10, 1e-18);
    const long double e = std::exp(1.0L);
    EXPECT_NEAR(zeta(1.0, 1.0), static_cast<double>(1.0L - 1.0L / (e - 1.0L)), 1e-15);
    EXPECT_NEAR(zeta(1.0, 1.0), 0.41802, 1e-5);
}

TEST(Zeta, BoundedByChiZ) {
    for (int i = 0; i < 1000; ++i) {
        const double z = -20.0 + 40.0 * i / 999.0;
        for (double chi : {0.3, 1.0, 2.5}) {
            EXPECT_LE(std::abs(zeta(chi, z)), std::abs(chi * z) + 1e-15);
            EXPECT_LE(zeta(chi, z), 1.0);
            EXPECT_GT(tilt_weight(chi, z), 0.0);
            const double x = chi * z;
            if (x != 0.0) {
                EXPECT_NEAR(std::exp(log_one_minus_zeta(chi, z)) / (x / std::expm1(x)), 1.0, 1e-13);
            }
        }
    }
}

TEST(Increments, ZeroWithoutNoise) {
    const auto inc = path_increments(LevyModel{0.0, 0.0, 0.0, NoJumps{}}, TimeGrid(0.0, 1.0, 10), 1, 0);
    for (std::size_t k = 0; k < 10; ++k) EXPECT_EQ(inc.dL(k, 0.0, 0.1), 0.0);
}

TEST(Increments, MomentsMatch) {
    const LevyModel L{0.0, 0.2, 3.0, DoubleExponentialJumps{0.4, 5.0, 3.0}};
    const TimeGrid grid(0.0, 1.0, 1000);
    const auto all = simulate_levy_increments(L, grid, 1000, 42);
    std::vector<double> comp, total, sq;
    for (const auto& inc : all)
        for (std::size_t k = 0; k < grid.steps; ++k) {
            comp.push_back(inc.jumps[k]);
            const double x = inc.gaussian[k] + inc.jumps[k];
            total.push_back(x);
            sq.push_back(x * x);
        }
    EXPECT_TRUE(summarize(comp).contains(0.0, 4.0));
    const double var = (L.c * L.c + L.intensity * levy::jump_second_moment(L)) * grid.dt();
    EXPECT_TRUE(summarize(sq).contains(var, 4.0)) << summarize(sq).mean << " vs " << var;
}

TEST(TiltedSampler, MatchesTiltedMeasure) {
    const LevyModel L{0.0, 0.2, 2.0, NormalJumps{-0.1, 0.3}};
    const double chi = 1.3;
    const TiltedJumpSampler s(L, chi);
    EXPECT_NEAR(s.intensity(), jump_integral(L, [&](double z) { return tilt_weight(chi, z); }), 1e-7);
    EXPECT_NEAR(s.first_moment(), jump_integral(L, [&](double z) { return z * tilt_weight(chi, z); }), 1e-7);
    EXPECT_NEAR(s.cumulant(chi), jump_integral(L, [&](double z) { return z * zeta(chi, z); }) * chi, 1e-6);
    std::vector<double> draws;
    for (std::uint64_t i = 0; i < 200000; ++i) {
        CounterRng rng(7, i, 0, 9);
        draws.push_back(s.sample(rng));
    }
    EXPECT_TRUE(summarize(draws).contains(s.first_moment() / s.intensity(), 4.0));
}

TEST(XiConvolution, ZeroKernelIsLevyProcess) {
    MarketModel m;
    m.levy = LevyModel{0.1, 0.3, 1.0, NormalJumps{0.0, 0.2}};
    m.xi0 = 0.4;
    const TimeGrid grid(0.0, 1.0, 20);
    m.resolvent = kernel::resolvent_numeric(m.kernel, grid.points());
    const StepTable tab(m, grid);
    const auto inc = path_increments(m.levy, grid, 3, 5);
    const auto xi = simulate_xi_convolution(m, tab, inc);
    EXPECT_EQ(xi[0], m.xi0);
    double L = m.xi0;
    for (std::size_t k = 0; k < grid.steps; ++k) {
        L += inc.dL(k, tab.b, tab.dt);
        EXPECT_NEAR(xi[k + 1], L, 1e-13);
    }
    const auto eu = simulate_xi_euler(m, tab, inc);
    for (std::size_t k = 0; k <= grid.steps; ++k) EXPECT_NEAR(eu[k], xi[k], 1e-13);
}

TEST(XiConvolution, ZeroKernelIncrementMoments) {
    MarketModel m;
    m.levy = LevyModel{0.05, 0.3, 2.0, NormalJumps{0.1, 0.2}};
    const TimeGrid grid(0.0, 1.0, 4);
    m.resolvent = kernel::resolvent_numeric(m.kernel, grid.points());
    const StepTable tab(m, grid);
    std::vector<double> d, d2;
    for (std::uint64_t p = 0; p < 40000; ++p) {
        const auto xi = simulate_xi_convolution(m, tab, path_increments(m.levy, grid, 11, p));
        const double x = xi[2] - xi[1];
        d.push_back(x);
        d2.push_back(x * x);
    }
    const double dt = grid.dt();
    const double mean = tab.b * dt;
    const double var = (m.levy.c * m.levy.c + m.levy.intensity * levy::jump_second_moment(m.levy)) * dt;
    EXPECT_TRUE(summarize(d).contains(mean, 4.0));
    EXPECT_TRUE(summarize(d2).contains(var + mean * mean, 4.0));
}

TEST(XiConvolution, MisalignedGridIsConfigError) {
    MarketModel m;
    const TimeGrid grid(0.0, 1.0, 20);
    m.resolvent = kernel::resolvent_numeric(m.kernel, TimeGrid(0.0, 1.0, 10).points());
    const StepTable tab(m, grid);
    EXPECT_THROW(simulate_xi_convolution(m, tab, path_increments(m.levy, grid, 1, 0)), ConfigError);
    m.resolvent.reset();
    EXPECT_THROW(simulate_xi_convolution(m, tab, path_increments(m.levy, grid, 1, 0)), ConfigError);
}

TEST(XiConvolution, TerminalMeanIsResolventTimesStart) {
    MarketModel m;
    m.kernel = kernel::MemoryKernel::power_law(0.25);
    m.levy = LevyModel{0.0, 0.3, 1.0, DoubleExponentialJumps{0.5, 4.0, 4.0}};
    m.xi0 = 0.5;
    const TimeGrid grid(0.0, 1.0, 40);
    m.resolvent = kernel::resolvent_series(0.25, grid.points());
    const StepTable tab(m, grid);
    std::vector<double> xT(100000);
    parallel_for(xT.size(), [&](std::size_t p) {
        xT[p] = simulate_xi_convolution(m, tab, path_increments(m.levy, grid, 99, p)).back();
    });
    const auto e = summarize(xT);
    EXPECT_TRUE(e.contains(m.resolvent->H.back() * m.xi0, 4.0)) << e.mean << " +- " << e.stderr_;
}

TEST(XiEuler, DeterministicMatchesOde) {
    // xi' = int_0^t xi + 0.1 with xi(0) = 0 gives xi = 0.1 sinh(t)
    MarketModel m;
    m.kernel = kernel::MemoryKernel::constant(1.0);
    m.levy = LevyModel{0.1, 0.0, 0.0, NoJumps{}};
    const TimeGrid grid(0.0, 1.0, 4096);
    const StepTable tab(m, grid);
    const auto xi = simulate_xi_euler(m, tab, path_increments(m.levy, grid, 1, 0));
    for (std::size_t k = 0; k <= grid.steps; k += 256) EXPECT_NEAR(xi[k], 0.1 * std::sinh(grid[k]), 1e-4);
}

TEST(XiEuler, StrongGapToConvolutionShrinks) {
    MarketModel m;
    m.kernel = kernel::MemoryKernel::power_law(0.25);
    m.levy = LevyModel{0.0, 0.4, 0.0, NoJumps{}};
    m.xi0 = 0.2;
    const std::size_t fine_steps = 256;
    const TimeGrid fine(0.0, 1.0, fine_steps);
    std::vector<double> rms;
    for (std::size_t steps : {32u, 64u, 128u}) {
        const TimeGrid grid(0.0, 1.0, steps);
        MarketModel mm = m;
        mm.resolvent = kernel::resolvent_series(0.25, grid.points());
        const StepTable tab(mm, grid);
        double acc = 0.0;
        const std::size_t n_paths = 400;
        for (std::uint64_t p = 0; p < n_paths; ++p) {
            // Coarse increments as sums of the same fine Brownian increments.
            const auto f = path_increments(m.levy, fine, 5, p);
            PathIncrements c;
            const std::size_t ratio = fine_steps / steps;
            for (std::size_t k = 0; k < steps; ++k) {
                double s = 0.0;
                for (std::size_t i = 0; i < ratio; ++i) s += f.dW[k * ratio + i];
                c.dW.push_back(s);
                c.gaussian.push_back(m.levy.c * s);
                c.jumps.push_back(0.0);
            }
            c.jump_offset.assign(steps + 1, 0);
            const auto a = simulate_xi_euler(mm, tab, c);
            const auto b = simulate_xi_convolution(mm, tab, c);
            acc += (a.back() - b.back()) * (a.back() - b.back());
        }
        rms.push_back(std::sqrt(acc / n_paths));
    }
    EXPECT_LT(rms[1], rms[0]);
    EXPECT_LT(rms[2], rms[1]);
}

TEST(RateAndPremium, AllZeroCoefficientsStayConstant) {
    MarketModel m;
    m.levy = LevyModel{0.0, 0.3, 1.0, NormalJumps{0.0, 0.1}};
    m.rate.r0 = 0.03;
    m.premium.rho0 = -0.01;
    const TimeGrid grid(0.0, 1.0, 20);
    const StepTable tab(m, grid);
    const auto inc = path_increments(m.levy, grid, 1, 0);
    const auto xi = simulate_xi_euler(m, tab, inc);
    const auto rr = simulate_r_rho(m, tab, xi, inc);
    for (double r : rr.r) EXPECT_EQ(r, 0.03);
    for (double rho : rr.rho) EXPECT_EQ(rho, -0.01);
}

TEST(RateAndPremium, DeterministicOuMeans) {
    MarketModel m;
    m.levy = LevyModel{0.0, 0.3, 0.0, NoJumps{}};
    m.rate = RateDynamics{0.04, 0.0, 2.0, 0.05};
    m.premium = PremiumDynamics{0.03, 0.0, 0.5, 1.5, 0.0};
    const TimeGrid grid(0.0, 2.0, 4000);
    const StepTable tab(m, grid);
    const auto inc = path_increments(m.levy, grid, 1, 0);
    const auto rr = simulate_r_rho(m, tab, simulate_xi_euler(m, tab, inc), inc);
    const double a = 0.04 / 2.0;
    const double d = 0.05 - a;
    const double rho_inf = (0.03 - 0.5 * a) / 1.5;
    const double coef = -0.5 * d / (1.5 - 2.0);
    const double K = 0.0 - rho_inf - coef;
    for (std::size_t k = 0; k <= grid.steps; k += 200) {
        const double t = grid[k];
        EXPECT_NEAR(rr.r[k], a + d * std::exp(-2.0 * t), 1e-4);
        EXPECT_NEAR(rr.rho[k], rho_inf + K * std::exp(-1.5 * t) + coef * std::exp(-2.0 * t), 1e-4);
    }
}

TEST(RateAndPremium, PremiumCorrelatesWithXiNoise) {
    auto m = jump_model();
    m.premium.B1_bar = 0.8;
    const TimeGrid grid(0.0, 1.0, 20);
    const StepTable tab(m, grid);
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::uint64_t p = 0; p < 500; ++p) {
        const auto inc = path_increments(m.levy, grid, 4, p);
        const auto xi = simulate_xi_euler(m, tab, inc);
        const auto rr = simulate_r_rho(m, tab, xi, inc);
        for (std::size_t k = 0; k < grid.steps; ++k) {
            const double x = xi[k + 1] - xi[k];
            const double y = rr.rho[k + 1] - rr.rho[k];
            sxy += x * y;
            sxx += x * x;
            syy += y * y;
        }
    }
    EXPECT_GT(sxy / std::sqrt(sxx * syy), 0.5);
}

TEST(Varphi, Cases) {
    EXPECT_THROW(varphi(0.0, 1.0, 0.0, 0.0, 0.0, 0.0), ModelError);
    // balanced drift
    EXPECT_NEAR(varphi(0.0, 1.0, 0.0, 0.2, 0.01, 0.01), 0.0, 1e-15);
    // GBM: chi b = mu - sigma^2 / 2 makes varphi the Sharpe ratio
    const double mu = 0.08, sigma = 0.25, r = 0.03, rho = 0.01;
    EXPECT_NEAR(varphi(0.0, 1.0, mu - 0.5 * sigma * sigma, sigma, r, rho), (mu - r - rho) / sigma, 1e-14);
}

TEST(Varphi, RecomputedFromRawPath) {
    const auto m = jump_model();
    const TimeGrid grid(0.0, 1.0, 25);
    const StepTable tab(m, grid);
    const auto path = simulate_path_p(m, tab, 3, 17, Scheme::Euler, true);
    const double b = levy_drift(m.levy);
    const double dt = grid.dt();
    for (std::size_t k : {0u, 7u, 24u}) {
        double mem = 0.0;
        for (std::size_t j = 0; j < k; ++j) {
            const double lo = (k - j - 1) * dt, hi = (k - j) * dt;
            mem += (std::pow(hi, 0.75) - std::pow(lo, 0.75)) / 0.75 * path.xi[j];
        }
        const double chi = m.chi(grid[k]);
        const double expect = (mem + chi * b + 0.5 * chi * chi * 0.09 - path.r[k] - path.rho[k]) / (chi * 0.3);
        EXPECT_NEAR(varphi(m, tab, k, path.xi, path.r[k], path.rho[k]), expect, 1e-12);
    }
}

TEST(Girsanov, TrivialDensityIsOne) {
    MarketModel m;
    m.levy = LevyModel{0.0, 0.2, 0.0, NoJumps{}};
    m.levy.varsigma = (0.05 - 0.5 * 0.04);  // chi b + chi^2 c^2 / 2 = r + rho
    m.rate.r0 = 0.03;
    m.premium.rho0 = 0.02;
    const auto ps = simulate_p(m, TimeGrid(0.0, 1.0, 10), 20, 1);
    for (double z : ps.Z) EXPECT_NEAR(z, 1.0, 1e-14);
}

TEST(Girsanov, DensityHasUnitMean) {
    const auto m = jump_model();
    const TimeGrid grid(0.0, 1.0, 40);
    const auto est = mc_p(m, grid, 20000, 2024, Scheme::Euler, true, 4, [](const PathP& p) {
        return std::vector<double>{std::exp(p.logZ[10]), std::exp(p.logZ[20]), std::exp(p.logZ[30]),
                                   std::exp(p.logZ[40])};
    });
    for (const auto& e : est) EXPECT_TRUE(e.contains(1.0, 4.0)) << e.mean << " +- " << e.stderr_;
}

TEST(Girsanov, PositiveEverywhere) {
    const auto ps = simulate_p(jump_model(), TimeGrid(0.0, 1.0, 20), 200, 8);
    for (double z : ps.Z) EXPECT_GT(z, 0.0);
    for (std::size_t p = 0; p < ps.n_paths; ++p) EXPECT_EQ(ps.Z[p * ps.width()], 1.0);
}

TEST(UnderQ, DriftlessGeometricDiffusion) {
    MarketModel m;
    m.levy = LevyModel{0.0, 0.3, 0.0, NoJumps{}};
    m.deterministic_rate = TimeFunction(0.03);
    const auto est = mc_q(m, TimeGrid(0.0, 1.0, 10), 100000, 5, 1,
                          [](const PathQ& q) { return std::vector<double>{q.deflated_spot(q.xi.size() - 1)}; });
    EXPECT_TRUE(est[0].contains(1.0, 4.0));
}

TEST(UnderQ, DeflatedSpotIsMartingale) {
    const auto m = jump_model();
    const auto est = mc_q(m, TimeGrid(0.0, 1.0, 40), 50000, 6, 2, [](const PathQ& q) {
        return std::vector<double>{q.deflated_spot(20), q.deflated_spot(40)};
    });
    for (const auto& e : est) EXPECT_TRUE(e.contains(1.0, 4.0)) << e.mean << " +- " << e.stderr_;
}

TEST(UnderQ, JumpOnlyMartingale) {
    auto m = jump_model();
    m.levy = LevyModel{0.0, 0.01, 5.0, DoubleExponentialJumps{0.4, 6.0, 5.0}};
    const auto est = mc_q(m, TimeGrid(0.0, 1.0, 20), 50000, 7, 1,
                          [](const PathQ& q) { return std::vector<double>{q.deflated_spot(20)}; });
    EXPECT_TRUE(est[0].contains(1.0, 4.0)) << est[0].mean << " +- " << est[0].stderr_;
}

TEST(UnderQ, MeasureChangeConsistency) {
    auto m = jump_model();
    m.deterministic_rate = TimeFunction(0.02);
    const TimeGrid grid(0.0, 1.0, 40);
    const double disc = std::exp(-0.02);
    auto capped_call = [](double s) { return std::min(std::max(s - 1.0, 0.0), 0.5); };
    const auto p = mc_p(m, grid, 40000, 31, Scheme::Euler, true, 1, [&](const PathP& path) {
        return std::vector<double>{std::exp(path.logZ.back()) * disc * capped_call(std::exp(path.xi.back()))};
    });
    const auto q = mc_q(m, grid, 40000, 32, 1, [&](const PathQ& path) {
        return std::vector<double>{disc * capped_call(std::exp(path.xi.back()))};
    });
    EXPECT_LT(std::abs(p[0].mean - q[0].mean), 3.0 * (p[0].stderr_ + q[0].stderr_))
        << p[0].mean << " +- " << p[0].stderr_ << " vs " << q[0].mean << " +- " << q[0].stderr_;
}

TEST(Determinism, SameSeedSamePaths) {
    const auto m = jump_model();
    const TimeGrid grid(0.0, 1.0, 10);
    ::setenv("CMEM_THREADS", "1", 1);
    const auto a = simulate_p(m, grid, 30, 77);
    ::setenv("CMEM_THREADS", "3", 1);
    const auto b = simulate_p(m, grid, 30, 77);
    const auto qa = simulate_under_q(m, grid, 30, 77);
    ::setenv("CMEM_THREADS", "1", 1);
    const auto qb = simulate_under_q(m, grid, 30, 77);
    ::unsetenv("CMEM_THREADS");
    EXPECT_EQ(a.xi, b.xi);
    EXPECT_EQ(a.Z, b.Z);
    EXPECT_EQ(a.rho, b.rho);
    EXPECT_EQ(qa.xi, qb.xi);
    const auto c = simulate_p(m, grid, 30, 78);
    EXPECT_NE(a.xi, c.xi);
}

TEST(Model, ChiOutsideBoundsRejected) {
    auto m = jump_model();
    m.chi = VolProcess(2.5);
    EXPECT_THROW(m.validate(), ModelError);
}

TEST(Lss, OrnsteinUhlenbeckStationaryVariance) {
    const double kappa = 1.0, sigma = 0.3;
    LssSpec spec{[=](double s) { return std::exp(-kappa * s); }, LevyModel{0.0, 1.0, 0.0, NoJumps{}}, sigma};
    const auto out = lss_path(spec, {0.0, 1.0}, 0.002, 8.0, 20000, 3);
    std::vector<double> sq;
    for (std::size_t p = 0; p < out.n_paths; ++p) sq.push_back(out.V[p * 2 + 1] * out.V[p * 2 + 1]);
    const auto e = summarize(sq);
    EXPECT_TRUE(e.contains(sigma * sigma / (2.0 * kappa), 4.0)) << e.mean << " +- " << e.stderr_;
}

TEST(Lss, EmptyIntegralAtZero) {
    LssSpec spec{[](double s) { return std::exp(-s); }, LevyModel{0.1, 1.0, 0.0, NoJumps{}}, 1.0};
    // with no burn-in the tail equals int_0^inf e^{-2s} = 1/2; allow it
    const auto out = lss_path(spec, {0.0}, 0.01, 0.0, 10, 1, 1.0);
    for (double v : out.V) EXPECT_EQ(v, 0.0);
}

TEST(Lss, BurnInDoublingWithinTail) {
    LssSpec spec{[](double s) { return std::exp(-2.0 * s); }, LevyModel{0.05, 0.5, 1.0, NormalJumps{0.1, 0.2}}, 1.0};
    const auto a = lss_path(spec, {1.0}, 0.01, 3.0, 20000, 4, 1e-2);
    const auto b = lss_path(spec, {1.0}, 0.01, 6.0, 20000, 4, 1e-2);
    const auto ea = summarize(a.V);
    const auto eb = summarize(b.V);
    EXPECT_LT(std::abs(ea.mean - eb.mean), a.tail_estimate + 4.0 * (ea.stderr_ + eb.stderr_));
    EXPECT_THROW(lss_path(spec, {1.0}, 0.01, 0.5, 10, 4, 1e-6), ConfigError);
}

TEST(PathSetCsv, CapsExportedPaths) {
    const auto ps = simulate_p(jump_model(), TimeGrid(0.0, 1.0, 5), 120, 1);
    const auto dir = std::filesystem::temp_directory_path() / "cmem_paths";
    std::filesystem::create_directories(dir);
    write_pathset_csv(ps, dir.string());
    std::ifstream in(dir / "S.csv");
    std::string header;
    std::getline(in, header);
    EXPECT_EQ(std::count(header.begin(), header.end(), ','), 100);
    for (double s : ps.S) EXPECT_GT(s, 0.0);
    for (std::size_t i = 0; i < ps.S.size(); ++i) EXPECT_DOUBLE_EQ(ps.S[i], std::exp(ps.xi[i]));
}
