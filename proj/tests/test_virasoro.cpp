#include <doctest.h>

#include <cmath>
#include <set>
#include <string>

#include "edgevir/virasoro.hpp"

using namespace edgevir;

namespace {

constexpr double kPi = 3.14159265358979323846;

bool same_terms(const GeneratorSpec& a, const GeneratorSpec& b, double tol = 1e-14) {
    GeneratorSpec x = a.merged(), y = b.merged();
    if (x.terms.size() != y.terms.size()) return false;
    for (size_t i = 0; i < x.terms.size(); ++i) {
        if (!(x.terms[i].region == y.terms[i].region)) return false;
        if (std::abs(x.terms[i].coefficient - y.terms[i].coefficient) > tol) return false;
        if (x.terms[i].subtract_expectation != y.terms[i].subtract_expectation) return false;
    }
    return true;
}

// |lambda_m|^2 |m^3 - m| summed over a finite window: the weight of the harmonics that spoil the algebra.
double harmonic_weight(const ModeExpansion& e, int target) {
    double s = 0;
    for (const auto& [m, c] : e.truncated(4000))
        if (m != target) s += std::norm(c) * std::abs(double(m) * m * m - m);
    return s;
}

}  // namespace

TEST_CASE("L0 prefactor and normalization") {
    CHECK(l0_prefactor(12) == doctest::Approx(1.0 / (4 * kPi * std::tan(kPi / 12))).epsilon(1e-14));
    CHECK(l0_prefactor(12) == doctest::Approx(0.29700).epsilon(1e-4));
    CHECK_THROWS_AS(l0_prefactor(2), std::invalid_argument);
    CHECK(normalization_A(2) == doctest::Approx(3.0 / 8));
}

TEST_CASE("twisted generator n = 2 is good and has single edge contacts") {
    LatticeGeometry L(48, 16);
    VirasoroSpec s = assemble_Ltilde(L, 2);
    GeneratorSpec all = s.combined();
    std::set<std::vector<int>> regions;
    for (const auto& t : all.terms) regions.insert(t.region.sites());
    CHECK(regions.size() == 16);
    CHECK(is_good(all).good);
    CHECK(is_good(s.real_part).good);
    CHECK(is_good(s.imag_part).good);
    for (const auto& t : all.terms) CHECK_NOTHROW(edge_interval(t.region));
    auto untwisted = build_untwisted_mode(L, 2, Parity::odd);
    auto report = is_good(untwisted);
    CHECK_FALSE(report.good);
    CHECK_FALSE(report.violations.empty());
}

TEST_CASE("adjoint and mode divisibility") {
    LatticeGeometry L(48, 16);
    for (int n : {1, 2, 3}) {
        VirasoroSpec p = assemble_Ltilde(L, n), m = assemble_Ltilde(L, -n);
        CHECK(m.mode == -n);
        CHECK(same_terms(p.adjoint().combined(), m.combined()));
        CHECK(same_terms(p.adjoint().adjoint().combined(), p.combined()));
    }
    try {
        assemble_Ltilde(LatticeGeometry(40, 16), 4);
        FAIL("expected an error");
    } catch (const std::invalid_argument& e) {
        CHECK(std::string(e.what()).find("4n = 16") != std::string::npos);
    }
    CHECK_THROWS_AS(build_mode(LatticeGeometry(44, 16), 2, Parity::odd), std::invalid_argument);
    CHECK_THROWS_AS(assemble_Ltilde(L, 0), std::invalid_argument);
}

TEST_CASE("RegionSet overload matches the lattice construction") {
    LatticeGeometry L(48, 16);
    RegionSet r = twist_preset(L, TwistParams{2, 6, 0, false});
    CHECK(same_terms(build_mode(r, 2, Parity::odd), build_mode(L, 2, Parity::odd)));
    CHECK(same_terms(build_mode(r, 2, Parity::even), build_mode(L, 2, Parity::even)));
    CHECK(same_terms(assemble_Ltilde(r, -2).combined(), assemble_Ltilde(L, -2).combined()));
}

TEST_CASE("L0 construction") {
    LatticeGeometry L(48, 16);
    VirasoroSpec l0 = build_L0(L);
    CHECK(l0.mode == 0);
    CHECK(l0.imag_part.terms.empty());
    CHECK(is_good(l0.real_part).good);
    for (const auto& t : l0.real_part.terms) {
        CHECK(t.subtract_expectation);
        CHECK_NOTHROW(edge_interval(t.region));
    }
    ModeExpansion e = mode_expansion_of(l0);
    CHECK(e.coefficient(0) == cplx(1.0));
    CHECK(std::abs(e.coefficient(2)) == 0.0);
    CHECK_THROWS_AS(build_L0(LatticeGeometry(50, 16)), std::invalid_argument);
}

TEST_CASE("improvement removes the leading harmonic") {
    std::map<int, VirasoroSpec> fam;
    LatticeGeometry L(48, 16);
    for (int n : {2, -2, 6, -6}) fam[n] = assemble_Ltilde(L, n);
    VirasoroSpec same = improve(fam, 2, 0);
    CHECK(same.improvement_level == 0);
    CHECK(same_terms(same.combined(), fam[2].combined()));

    VirasoroSpec one = improve(fam, 2, 1);
    REQUIRE(one.corrections.size() == 1);
    CHECK(one.corrections[0].first == -6);
    // Coefficient of L_{-6} in Ltilde_2, cancelled with the opposite sign.
    const double lam = ModeExpansion::ltilde(2).coefficient(-6).real();
    CHECK(one.corrections[0].second == doctest::Approx(-lam).epsilon(1e-14));
    CHECK(one.corrections[0].second == doctest::Approx(1.0 / 35).epsilon(1e-9));
    CHECK(std::abs(mode_expansion_of(one).coefficient(-6)) < 1e-15);
    CHECK(improvement_modes(2, 1) == std::vector<int>{-6});
    CHECK(improve(fam, -2, 1).corrections[0].first == 6);

    fam.erase(-6);
    try {
        improve(fam, 2, 1);
        FAIL("expected an error");
    } catch (const std::invalid_argument& e) {
        CHECK(std::string(e.what()).find("Ltilde_-6") != std::string::npos);
    }
    CHECK_THROWS_AS(improve(fam, 5, 1), std::invalid_argument);
    CHECK_THROWS_AS(improve(fam, 2, -1), std::invalid_argument);
}

TEST_CASE("harmonic weight strictly decreases with improvement steps") {
    // Only the bookkeeping matters here, so empty generators stand in for the family.
    std::map<int, VirasoroSpec> fam;
    for (int m : improvement_modes(2, 4)) {
        VirasoroSpec s;
        s.mode = m;
        fam[m] = s;
    }
    fam[2].mode = 2;
    double prev = harmonic_weight(mode_expansion_of(improve(fam, 2, 0)), 2);
    CHECK(prev > 0);
    for (int k = 1; k <= 4; ++k) {
        double w = harmonic_weight(mode_expansion_of(improve(fam, 2, k)), 2);
        CHECK(w < prev);
        prev = w;
    }
}

TEST_CASE("fixed-point generator limits") {
    LatticeGeometry L(120, 40);
    RegionSet r = fixed_point_preset(L, FixedPointParams{20, 10, 0});
    GeneratorSpec i_only = build_fixed_point(r, 0.0), d_only = build_fixed_point(r, 1.0);
    CHECK(i_only.terms.size() == 4);
    CHECK(d_only.terms.size() == 4);
    double sum_i = 0, sum_d = 0;
    for (const auto& t : i_only.terms) sum_i += t.coefficient.real();
    for (const auto& t : d_only.terms) sum_d += t.coefficient.real();
    CHECK(sum_i == doctest::Approx(0.0));
    CHECK(sum_d == doctest::Approx(0.0));
    CHECK(is_good(build_fixed_point(r, 0.3)).good);
    const double eta = fixed_point_eta(r);
    CHECK(eta > 0);
    CHECK(eta < 1);
}

TEST_CASE("JSON round trip") {
    LatticeGeometry L(48, 16);
    std::map<int, VirasoroSpec> fam;
    for (int n : {2, -2, 6, -6}) fam[n] = assemble_Ltilde(L, n);
    VirasoroSpec s = improve(fam, 2, 1);
    VirasoroSpec back = virasoro_from_json(virasoro_to_json(s), L);
    CHECK(back.mode == s.mode);
    CHECK(back.improvement_level == 1);
    CHECK(back.corrections == s.corrections);
    CHECK(same_terms(back.combined(), s.combined(), 0.0));
    CHECK_THROWS_AS(virasoro_from_json(virasoro_to_json(s), LatticeGeometry(96, 16)), std::invalid_argument);
}
