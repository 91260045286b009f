#include <doctest.h>

#include <cmath>
#include <sstream>

#include "edgevir/cft_oracle.hpp"

using namespace edgevir;

namespace {

constexpr double kPi = 3.14159265358979323846;

// Independent oracle: uniform periodic trapezoid on a fine grid.
cplx grid_fourier(const std::function<double(double)>& f, int m, int points = 1 << 17) {
    cplx acc = 0.0;
    double h = 2 * kPi / points;
    for (int i = 0; i < points; ++i) {
        double x = (i + 0.5) * h;
        acc += f(x) * std::exp(cplx(0, -m * x));
    }
    return acc * h;
}

double rel(double a, double b) { return std::abs(a - b) / std::max(1e-300, std::abs(b)); }

}  // namespace

TEST_CASE("coolness matches the sine-product form and vanishes outside") {
    for (double th : {0.1, 0.5, 1.0, 2.0}) {
        double direct = 2 * std::sin(th / 2) * std::sin((2.2 - th) / 2) / std::sin(1.1);
        CHECK(coolness(th, 0.0, 2.2) == doctest::Approx(direct).epsilon(1e-14));
    }
    CHECK(coolness(3.0, 0.0, 2.2) == 0.0);
    CHECK(coolness(0.0, 0.0, 2.2) == doctest::Approx(0.0));
    // Half circle reduces to sin.
    for (double th : {0.3, 1.2, 2.9}) CHECK(coolness(th, 0.0, kPi) == doctest::Approx(std::sin(th)).epsilon(1e-13));
    // Finite-difference check of the derivatives.
    double h = 1e-5;
    for (double th : {0.4, 1.3}) {
        double fd1 = (coolness(th + h, 0.1, 1.9) - coolness(th - h, 0.1, 1.9)) / (2 * h);
        double fd2 = (coolness(th + h, 0.1, 1.9) - 2 * coolness(th, 0.1, 1.9) + coolness(th - h, 0.1, 1.9)) / (h * h);
        CHECK(coolness_d1(th, 0.1, 1.9) == doctest::Approx(fd1).epsilon(1e-8));
        CHECK(coolness_d2(th, 0.1, 1.9) == doctest::Approx(fd2).epsilon(1e-5));
    }
    CHECK_THROWS_AS(coolness(0.0, 1.0, 1.0), std::invalid_argument);
}

TEST_CASE("beta_n normalization and the n = 1 special case") {
    auto b1 = beta_n(1, Parity::odd);
    for (double th : {0.2, 1.7, 4.0, 5.9}) CHECK(b1(th) == doctest::Approx(std::sin(th) / (2 * kPi)).epsilon(1e-12));
    CHECK(normalization_A(2) == doctest::Approx(3.0 / 8.0).epsilon(1e-14));
    for (int n = 1; n <= 6; ++n) {
        auto bo = beta_n(n, Parity::odd);
        auto be = beta_n(n, Parity::even);
        cplx so = grid_fourier([&](double x) { return bo(x); }, n);
        cplx se = grid_fourier([&](double x) { return be(x); }, n);
        // int beta_o sin(n theta) = -Im(f~_n), int beta_e cos(n theta) = Re(f~_n)
        CHECK(-so.imag() == doctest::Approx(0.5).epsilon(1e-8));
        CHECK(se.real() == doctest::Approx(0.5).epsilon(1e-8));
    }
}

TEST_CASE("lambda_nm closed form agrees with quadrature of the weight functions") {
    CHECK(lambda_nm(2, -6) == doctest::Approx(-1.0 / 35.0).epsilon(1e-15));
    CHECK(lambda_nm(2, 6) == 0.0);
    CHECK(lambda_nm(1, 1) == 1.0);
    CHECK(lambda_nm(1, -3) == 0.0);
    for (int n = 2; n <= 4; ++n) {
        auto bo = beta_n(n, Parity::odd);
        auto be = beta_n(n, Parity::even);
        for (int m = -7 * n; m <= 7 * n; ++m) {
            cplx lt = grid_fourier([&](double x) { return be(x); }, m) +
                      cplx(0, 1) * grid_fourier([&](double x) { return bo(x); }, m);
            CHECK(std::abs(lt - cplx(lambda_nm(n, m))) < 1e-7);
            cplx lo = fourier_coefficient(bo.as_piecewise(), m);
            CHECK(std::abs(lo - lambda_parity(n, m, Parity::odd)) < 1e-9);
        }
    }
}

TEST_CASE("digamma reference values") {
    CHECK(digamma(0.5) == doctest::Approx(-0.57721566490153286 - 2 * std::log(2.0)).epsilon(1e-14));
    CHECK(digamma(1.0) == doctest::Approx(-0.57721566490153286).epsilon(1e-14));
}

TEST_CASE("variance prediction: closed form, direct value and Parseval consistency") {
    CHECK(sigma2_prediction(1, 0.5) == 0.0);
    // n = 2: bracket equals 2 ln 2.
    CHECK(sigma2_prediction(2, 0.5) == doctest::Approx(0.5 / 192 * 2 * 9 * 2 * std::log(2.0)).epsilon(1e-13));
    CHECK(sigma2_prediction(2, 0.5) == doctest::Approx(0.06498).epsilon(1e-4));
    for (int n = 2; n <= 8; ++n) {
        double ms = mode_sum_variance(ModeExpansion::parity(n, Parity::odd), 0.5);
        CHECK(rel(ms, sigma2_prediction(n, 0.5)) < 1e-9);
    }
    CHECK(mode_sum_variance(ModeExpansion::single(0), 0.5) == 0.0);
    CHECK(mode_sum_variance(ModeExpansion::single(2), 0.5) == doctest::Approx(0.25).epsilon(1e-14));
}

TEST_CASE("commutator prediction: reference values, mode identity and interval recombination") {
    CHECK(commutator_prediction(1, 0.5) == doctest::Approx(0.0));
    CHECK(commutator_prediction(2, 0.5) == doctest::Approx(0.24399193).epsilon(1e-7));
    CHECK(commutator_prediction(3, 0.5) == doctest::Approx(0.97201215).epsilon(1e-7));
    CHECK(commutator_prediction(6, 0.5) == doctest::Approx(8.48491574).epsilon(1e-7));
    for (int n = 1; n <= 8; ++n) {
        double dn = n;
        double s = std::sin(kPi / (4 * n));
        double identity = kPi / 2 * dn * (dn * dn - 1) * (dn * dn - 1) * s * s / std::cos(kPi / (2 * n));
        auto lt = ModeExpansion::ltilde(n);
        cplx raw = mode_sum({&lt}, [&](int m) -> cplx {
            double dm = m;
            return std::norm(lt.coefficient(m)) * (dm * dm * dm - dm);
        });
        if (n == 1) {
            CHECK(std::abs(raw) < 1e-12);
            continue;
        }
        CHECK(rel(raw.real(), identity) < 1e-9);
        cplx ms = mode_sum_commutator(lt, ModeExpansion::ltilde(-n), 0.5);
        CHECK(rel(ms.real(), commutator_prediction(n, 0.5)) < 1e-9);
        CHECK(rel(kms_mode_commutator(n, 0.5), commutator_prediction(n, 0.5)) < 1e-9);
    }
}

TEST_CASE("double commutator and Virasoro brackets") {
    CHECK(double_commutator_prediction(1, 0.5) == 0.0);
    CHECK(double_commutator_prediction(2, 0.5) == doctest::Approx(0.58905).epsilon(1e-4));
    for (int n = 2; n <= 8; ++n) {
        cplx ms = mode_sum_double_commutator(ModeExpansion::ltilde(n), ModeExpansion::ltilde(-n), 0.5);
        CHECK(rel(ms.real(), double_commutator_prediction(n, 0.5)) < 1e-9);
    }
    CHECK(virasoro_bracket_expectation(2, 1, -3, 0.5) == doctest::Approx(1.0));
    CHECK(virasoro_bracket_expectation(3, 1, -4, 0.5) == doctest::Approx(5.0));
    CHECK(virasoro_bracket_expectation(3, 2, -5, 0.5) == doctest::Approx(5.0));
    CHECK(virasoro_bracket_expectation(4, 2, -6, 0.5) == doctest::Approx(17.5));
    CHECK(virasoro_bracket_expectation(2, 1, -4, 0.5) == 0.0);
    // Nested algebra oracle: [[L_m, L_n], L_k] = (m - n) [L_{m+n}, L_k], central term only.
    for (int m = 1; m <= 4; ++m)
        for (int n = -3; n <= 3; ++n) {
            int k = -(m + n);
            double dj = m + n;
            double central = 0.5 / 12 * (dj * dj * dj - dj);
            CHECK(virasoro_bracket_expectation(m, n, k, 0.5) == doctest::Approx((m - n) * central));
        }
}

TEST_CASE("kms commutator and fixed-point right-hand side") {
    const double c = 0.5;
    CHECK(kms_commutator({0, 1}, {1, 2}, {2, 3}, c) == doctest::Approx(kPi * c / 6 * (2 * cross_ratio_arcs({0, 1}, {1, 2}, {2, 3}) - 1)));
    double e = 1e-4;
    CHECK(kms_commutator({0, e}, {e, 2 * e}, {2 * e, 3 * e}, c) == doctest::Approx(-kPi * c / 12).epsilon(1e-7));
    CHECK(kms_pair({0, 1}, {0.5, 1.5}, c) == doctest::Approx(-kms_pair({0.5, 1.5}, {0, 1}, c)));
    CHECK(kms_pair({0, 1}, {2, 3}, c) == 0.0);
    CHECK(binary_entropy(0.5) == doctest::Approx(std::log(2.0)));
    CHECK(binary_entropy(0.0) == 0.0);
    CHECK(fixed_point_rhs(0.13397, 0.5) == doctest::Approx(0.0328).epsilon(2e-3));
}

TEST_CASE("Fourier decay exponents") {
    CHECK(fourier_decay_exponent(beta_n(2, Parity::odd).as_piecewise(), 200) == doctest::Approx(-3.0).epsilon(0.1));
    CHECK(fourier_decay_exponent(beta_n(3, Parity::odd).as_piecewise(), 240) == doctest::Approx(-3.0).epsilon(0.1));
    PiecewiseFunction square{[](double x) { return x < kPi ? 1.0 : -1.0; }, [](double) { return 0.0; },
                             [](double) { return 0.0; }, {kPi}};
    CHECK(fourier_decay_exponent(square, 200) == doctest::Approx(-1.0).epsilon(0.05));
    PiecewiseFunction tri{[](double x) { return x < kPi ? x : 2 * kPi - x; },
                          [](double x) { return x < kPi ? 1.0 : -1.0; }, [](double) { return 0.0; }, {kPi}};
    CHECK(fourier_decay_exponent(tri, 200) == doctest::Approx(-2.0).epsilon(0.05));
}

TEST_CASE("Schwarzian leading order equals the mode-sum energy") {
    const double c = 0.5, t = 0.3;
    PiecewiseFunction s2{[](double x) { return std::sin(2 * x) / (2 * kPi); },
                         [](double x) { return std::cos(2 * x) / kPi; },
                         [](double x) { return -2 * std::sin(2 * x) / kPi; }, {}};
    auto r = schwarzian_leading(s2, ModeExpansion::single(2, cplx(0, -0.5)) + ModeExpansion::single(-2, cplx(0, 0.5)), t, c);
    double expected = c * t * t / 12 * 12 / 4;
    CHECK(rel(r.energy_t2, expected) < 1e-12);
    CHECK(rel(r.schwarzian_t2, expected) < 1e-6);
    PiecewiseFunction flat{[](double) { return 1.0; }, [](double) { return 0.0; }, [](double) { return 0.0; }, {}};
    auto z = schwarzian_leading(flat, ModeExpansion::single(0), t, c);
    CHECK(std::abs(z.energy_t2) < 1e-15);
    CHECK(std::abs(z.schwarzian_t2) < 1e-12);
    for (int n : {2, 3}) {
        auto q = schwarzian_leading(beta_n(n, Parity::odd).as_piecewise(), ModeExpansion::parity(n, Parity::odd), t, c);
        CHECK(rel(q.schwarzian_t2, q.energy_t2) < 1e-6);
    }
}

TEST_CASE("predictions scale linearly in c and export as CSV") {
    for (int n = 2; n <= 5; ++n) {
        CHECK(sigma2_prediction(n, 1.0) == doctest::Approx(2 * sigma2_prediction(n, 0.5)));
        CHECK(commutator_prediction(n, 1.0) == doctest::Approx(2 * commutator_prediction(n, 0.5)));
        CHECK(double_commutator_prediction(n, 1.0) == doctest::Approx(2 * double_commutator_prediction(n, 0.5)));
    }
    std::ostringstream os;
    write_prediction_csv(os, prediction_table(0.5, 3));
    CHECK(os.str().rfind("quantity,n_or_triple,c,value\n", 0) == 0);
    CHECK(os.str().find("virasoro_bracket,(2;1;-3),0.5,1") != std::string::npos);
}
