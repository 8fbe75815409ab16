#include <gtest/gtest.h>

#include <cmath>
#include <complex>
#include <filesystem>
#include <fstream>

#include "cmem/affine.hpp"
#include "cmem/dynamics.hpp"

using namespace cmem;
using namespace cmem::affine;

namespace {

const cplx I{0.0, 1.0};

AffineModelSpec ou_spec(double kappa, double theta, double sigma) {
    AffineModelSpec s;
    s.d = 1;
    s.varpi = [=](double) { return Vec::Constant(1, kappa * theta); };
    s.beta = [=](double) { return Mat::Constant(1, 1, -kappa); };
    s.varrho = [=](double) { return Mat::Constant(1, 1, sigma * sigma); };
    return s;
}

LssPricingParams jump_params() {
    LssPricingParams p;
    p.r = TimeFunction({0.0, 1.0}, {0.02, 0.04});
    p.chi = VolProcess({0.0, 0.4}, {1.0, 0.8});
    p.chi_lower = 0.5;
    p.chi_upper = 2.0;
    p.levy = LevyModel{0.02, 0.3, 2.0, NormalJumps{-0.05, 0.15}};
    p.A_bar = 0.01;
    p.B_bar = TimeFunction({0.0, 1.0}, {0.2, 0.1});
    p.B2_bar = 0.3;
    p.V = 0.1;
    p.rho = 0.02;
    return p;
}

CVec vec2(cplx a, cplx b) {
    CVec v(2);
    v << a, b;
    return v;
}

}  // namespace

TEST(Riccati, DriftOnlyIsQuadrature) {
    AffineModelSpec s;
    s.d = 2;
    s.varpi = [](double t) {
        Vec v(2);
        v << std::sin(t), 1.0 + t;
        return v;
    };
    s.varrho = [](double t) {
        Mat m(2, 2);
        m << 1.0 + t, 0.3, 0.3, 0.5;
        return m;
    };
    const CVec u = vec2(0.5 + 2.0 * I, -1.0 + 0.5 * I);
    const auto sol = solve_riccati(s, 0.2, 1.5, u);
    const cplx oracle = quad::integrate(
        [&](double t) {
            const Vec w = s.varpi(t);
            return u[0] * w[0] + u[1] * w[1] + 0.5 * detail::bilinear(u, s.varrho(t), u);
        },
        0.2, 1.5, 1e-14);
    EXPECT_LT(std::abs(sol.phi_at_start() - oracle), 1e-10);
    EXPECT_LT((sol.psi_at_start() - u).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(Riccati, TerminalSlice) {
    const CVec u = CVec::Constant(1, 0.3 + 1.0 * I);
    const auto sol = solve_riccati(ou_spec(1.0, 0.1, 0.2), 0.0, 2.0, u);
    EXPECT_EQ(sol.grid.back(), 2.0);
    EXPECT_EQ(sol.phi.back(), cplx(0.0));
    EXPECT_EQ(sol.psi.back()[0], u[0]);
    EXPECT_EQ(sol.grid.front(), 0.0);
}

TEST(Riccati, RejectsBadInput) {
    EXPECT_THROW(solve_riccati(ou_spec(1.0, 0.0, 0.2), 1.0, 1.0, CVec::Zero(1)), DomainError);
    EXPECT_THROW(solve_riccati(ou_spec(1.0, 0.0, 0.2), 0.0, 1.0, CVec::Zero(2)), DomainError);
    auto s = ou_spec(1.0, 0.0, 0.2);
    s.varrho = [](double) { return Mat::Constant(1, 1, -1.0); };
    EXPECT_THROW(solve_riccati(s, 0.0, 1.0, CVec::Zero(1)), DomainError);
}

TEST(CharFn, NormalisedAtZero) {
    auto s = lss_affine_spec(jump_params());
    EXPECT_NEAR(std::abs(discounted_char_fn(s, 0.0, 1.0, CVec::Zero(2), Vec::Constant(2, 0.3)) - 1.0), 0.0, 1e-12);
}

TEST(CharFn, OrnsteinUhlenbeck) {
    const double kappa = 1.5, theta = 0.2, sigma = 0.4, x0 = -0.1, tau = 1.3;
    const auto spec = ou_spec(kappa, theta, sigma);
    for (double lam : {-4.0, -1.0, 0.5, 2.0, 7.0}) {
        const cplx got = discounted_char_fn(spec, 0.0, tau, CVec::Constant(1, I * lam), Vec::Constant(1, x0));
        const double m = x0 * std::exp(-kappa * tau) + theta * (1.0 - std::exp(-kappa * tau));
        const double v = sigma * sigma * (1.0 - std::exp(-2.0 * kappa * tau)) / (2.0 * kappa);
        const cplx oracle = std::exp(I * lam * m - 0.5 * lam * lam * v);
        EXPECT_LT(std::abs(got - oracle), 1e-8) << lam;
    }
}

TEST(CharFn, VasicekBondPrice) {
    const double kappa = 0.8, theta = 0.05, sigma = 0.02, r0 = 0.03, tau = 5.0;
    auto spec = ou_spec(kappa, theta, sigma);
    spec.gamma = Vec::Constant(1, 1.0);
    const double got = discounted_char_fn(spec, 0.0, tau, CVec::Zero(1), Vec::Constant(1, r0)).real();
    const double B = (1.0 - std::exp(-kappa * tau)) / kappa;
    const double A = (theta - sigma * sigma / (2.0 * kappa * kappa)) * (B - tau) - sigma * sigma * B * B / (4.0 * kappa);
    EXPECT_NEAR(got, std::exp(A - B * r0), 1e-10);
}

TEST(CharFn, ConjugateSymmetry) {
    const auto spec = lss_affine_spec(jump_params());
    const Vec x = Vec::Constant(2, 0.05);
    for (double lam : {-3.0, -0.7, 0.4, 2.5}) {
        const CVec u = vec2(1.5 + I * lam, 0.2 * I * lam);
        const CVec uc = u.conjugate();
        const cplx a = discounted_char_fn(spec, 0.0, 1.0, u, x);
        const cplx b = discounted_char_fn(spec, 0.0, 1.0, uc, x);
        EXPECT_LT(std::abs(b - std::conj(a)), 1e-12 * std::abs(a)) << lam;
    }
}

TEST(CharFn, BoundedByDiscountForImaginaryU) {
    auto spec = ou_spec(1.0, 0.0, 0.5);
    spec.c = 0.04;
    for (double lam : {0.1, 1.0, 5.0}) {
        const cplx v = discounted_char_fn(spec, 0.0, 2.0, CVec::Constant(1, I * lam), Vec::Constant(1, 0.3));
        EXPECT_LE(std::abs(v), std::exp(-2.0 * 0.04) * (1.0 + 1e-12));
    }
}

TEST(Riccati, FlowProperty) {
    const auto spec = lss_affine_spec(jump_params());
    const CVec u = vec2(1.2 + 0.8 * I, -0.3 * I);
    const auto direct = solve_riccati(spec, 0.0, 1.0, u);
    const auto late = solve_riccati(spec, 0.6, 1.0, u);
    const auto early = solve_riccati(spec, 0.0, 0.6, late.psi_at_start());
    EXPECT_LT(std::abs(direct.phi_at_start() - (late.phi_at_start() + early.phi_at_start())), 1e-9);
    EXPECT_LT((direct.psi_at_start() - early.psi_at_start()).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(Riccati, BlowUpIsReported) {
    AffineModelSpec s;
    s.d = 1;
    s.varpi = [](double) { return Vec::Zero(1); };
    s.alpha = {[](double) { return Mat::Constant(1, 1, 1.0); }};
    // psi = u / (1 - u tau / 2) explodes at tau = 2
    try {
        solve_riccati(s, 0.0, 3.0, CVec::Constant(1, 1.0));
        FAIL() << "expected a numeric error";
    } catch (const NumericError& e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find("t = "), std::string::npos);
        const double t = std::stod(msg.substr(msg.find("t = ") + 4));
        EXPECT_NEAR(t, 1.0, 0.05);
    }
    const auto ok = solve_riccati(s, 2.0, 3.0, CVec::Constant(1, 1.0));
    EXPECT_NEAR(ok.psi_at_start()[0].real(), 2.0, 1e-9);
}

TEST(Riccati, CsvDump) {
    const auto path = (std::filesystem::temp_directory_path() / "cmem_riccati.csv").string();
    write_riccati_csv(solve_riccati(ou_spec(1.0, 0.0, 0.2), 0.0, 1.0, CVec::Constant(1, I)), path);
    std::ifstream in(path);
    std::string header;
    std::getline(in, header);
    EXPECT_EQ(header, "t,phi_re,phi_im,psi1_re,psi1_im");
}

TEST(LssPhiPsi, TerminalAndPsi) {
    const auto p = jump_params();
    const auto at_T = lss_phi_psi(p, 1.0, 1.0, 1.5 + I, 0.3);
    EXPECT_EQ(at_T.phi, cplx(0.0));
    EXPECT_EQ(at_T.psi1, 1.5 + I);
    EXPECT_EQ(at_T.psi2, cplx(0.3));
    const auto r = lss_phi_psi(p, 0.25, 1.0, 1.5 + I, 0.3);
    EXPECT_EQ(r.psi1, 1.5 + I);
    EXPECT_LT(std::abs(r.psi2 - (0.3 + (1.5 + I) * 0.75)), 1e-15);
}

TEST(LssPhiPsi, NoJumpPolynomial) {
    LssPricingParams p;
    p.r = 0.03;
    p.chi = 0.9;
    p.levy = LevyModel{0.05, 0.25, 0.0, NoJumps{}};
    p.A_bar = 0.02;
    p.B_bar = 0.4;
    p.B2_bar = 0.7;
    const double c = 0.25, chi = 0.9, B = 0.4, tau = 1.7;
    const double w1 = 0.03 - 0.5 * chi * chi * c * c;
    const double w2 = 0.02 + B * (w1 - chi * 0.05) - 0.7 * 0.03;
    for (auto [u1, u2] : {std::pair<cplx, cplx>{2.0, 0.0}, {1.5 + 3.0 * I, 0.0}, {-1.0 + 0.5 * I, 0.4 - I}}) {
        const cplx a = u1 + B * u2, k = B * u1;
        const cplx oracle = 0.5 * c * c * chi * chi * (a * a * tau + a * k * tau * tau + k * k * tau * tau * tau / 3.0) +
                            w1 * u1 * tau + w2 * (u2 * tau + u1 * tau * tau / 2.0);
        EXPECT_LT(std::abs(lss_phi_psi(p, 0.3, 0.3 + tau, u1, u2).phi - oracle), 1e-12);
    }
}

TEST(LssPhiPsi, Varpi1FromParts) {
    const auto p = jump_params();
    for (double t : {0.1, 0.5, 0.9}) {
        const double chi = p.chi(t);
        const double cum = jump_integral(
            p.levy, [&](double z) { return (std::expm1(chi * z) - chi * z) * tilt_weight(chi, z); }, 1e-12);
        const double parts = p.r(t) - 0.5 * chi * chi * p.levy.c * p.levy.c - cum;
        EXPECT_NEAR(varpi1(p, t), parts, 1e-12);
    }
}

TEST(LssPhiPsi, GenericSolverAgrees) {
    const auto p = jump_params();
    const auto spec = lss_affine_spec(p);
    const LssCharacteristic closed(p, 0.1, 1.2);
    double worst = 0.0;
    for (int k = 0; k < 20; ++k) {
        const cplx u1 = (k % 2 == 0 ? 1.5 : -0.5) + I * (-6.0 + 0.6 * k);
        const cplx u2 = (k % 3 == 0) ? cplx(0.0) : cplx(0.1 * k - 1.0, 0.2);
        const auto g = solve_riccati(spec, 0.1, 1.2, vec2(u1, u2), 1e-11);
        const auto c = closed(u1, u2);
        worst = std::max({worst, std::abs(g.phi_at_start() - c.phi), std::abs(g.psi_at_start()[1] - c.psi2)});
    }
    EXPECT_LT(worst, 1e-8);
}

TEST(LssPhiPsi, MatchesQMonteCarlo) {
    const auto p = jump_params();
    dynamics::MarketModel m;
    m.kernel = kernel::MemoryKernel::power_law(0.25);
    m.levy = p.levy;
    m.chi = p.chi;
    m.chi_lower = p.chi_lower;
    m.chi_upper = p.chi_upper;
    m.deterministic_rate = p.r;
    m.premium = dynamics::PremiumDynamics{p.A_bar, p.B_bar, p.B2_bar, p.B_bar, p.rho};
    m.xi0 = p.V;
    const double lam = 1.7, T = 1.0;
    const auto est = dynamics::mc_q(m, TimeGrid(0.0, T, 50), 40000, 77, 2, [&](const dynamics::PathQ& q) {
        const double v = q.xi.back();
        return std::vector<double>{std::cos(lam * v), std::sin(lam * v)};
    });
    const auto r = lss_phi_psi(p, 0.0, T, I * lam, 0.0);
    const cplx cf = std::exp(r.phi + r.psi1 * p.V + r.psi2 * p.rho);
    EXPECT_TRUE(est[0].contains(cf.real(), 4.0)) << est[0].mean << " vs " << cf.real();
    EXPECT_TRUE(est[1].contains(cf.imag(), 4.0)) << est[1].mean << " vs " << cf.imag();
}
