#include <doctest.h>

#include <cmath>
#include <sstream>
#include <string>

#include "edgevir/cft_oracle.hpp"
#include "edgevir/experiments.hpp"

using namespace edgevir;

namespace {

std::string csv_of(const RunResult& r, bool runtime = false) {
    std::ostringstream os;
    write_results_csv(os, r.records, runtime);
    return os.str();
}

std::string error_of(const nlohmann::json& j) {
    try {
        config_from_json(j);
    } catch (const ConfigError& e) {
        return e.what();
    }
    return "";
}

ExperimentConfig small_commutator_config() {
    ExperimentConfig c = default_config(ExperimentKind::modular_commutator);
    c.lattice = LatticeGeometry(16, 16);
    c.ells = {2, 3, 4};
    c.thresholds.clear();
    return c;
}

}  // namespace

TEST_CASE("fits recover synthetic series") {
    std::vector<std::pair<double, double>> e, p;
    for (int l = 4; l <= 12; ++l) {
        e.push_back({double(l), 3.0 * std::exp(-1.66 * l)});
        p.push_back({double(l), 0.7 * std::pow(double(l), -2.0)});
    }
    auto fe = fit_exponential(e);
    CHECK(fe.rate == doctest::Approx(1.66).epsilon(1e-12));
    CHECK(fe.r2 == doctest::Approx(1.0).epsilon(1e-12));
    auto fp = fit_powerlaw(p);
    CHECK(fp.exponent == doctest::Approx(-2.0).epsilon(1e-12));
    CHECK(fp.r2 == doctest::Approx(1.0).epsilon(1e-12));
    e[3].second = 0;
    CHECK_THROWS_AS(fit_exponential(e), FitDiagnostics);
    CHECK_THROWS_AS(fit_powerlaw({{1.0, 1.0}}), FitDiagnostics);
    CHECK_THROWS_AS(fit_exponential({{2.0, 1.0}, {2.0, 0.5}}), FitDiagnostics);
}

TEST_CASE("central charge extraction inverts the fixed-point right-hand side") {
    for (double eta : {0.1, 0.3333, 0.5, 0.9}) {
        CHECK(extract_ctot(binary_entropy(eta) / 12, eta) == doctest::Approx(0.5).epsilon(1e-14));
        CHECK(extract_ctot(fixed_point_rhs(eta, 1.0), eta) == doctest::Approx(1.0).epsilon(1e-14));
    }
    CHECK_THROWS_AS(extract_ctot(0.1, 0.0), std::invalid_argument);
}

TEST_CASE("deviation is relative unless the prediction vanishes") {
    CHECK(deviation(1.02, 1.0) == doctest::Approx(0.02));
    CHECK(deviation(-1.02, -1.0) == doctest::Approx(0.02));
    CHECK(deviation(3e-5, 0.0) == doctest::Approx(3e-5));
    CHECK(std::isnan(deviation(1.0, std::nan(""))));
}

TEST_CASE("config schema") {
    CHECK(error_of({{"experiment", "virasoro_commutators"}, {"preset", "octagon"}}).find("twist") != std::string::npos);
    CHECK(error_of({{"experiment", "virasoro_commutators"}, {"lattice", {{"Lx", 100}, {"Ly", 16}}}, {"fallback_lattices", nlohmann::json::array()}})
              .find("4n") != std::string::npos);
    CHECK(error_of({{"experiment", "axioms"}, {"colour", 1}}).find("colour") != std::string::npos);
    CHECK(error_of({{"experiment", "axioms"}, {"model", "semion"}}).find("pip") != std::string::npos);
    CHECK(error_of({{"experiment", "nope"}}).find("semion_suite") != std::string::npos);
    CHECK(error_of({{"experiment", "axioms"}, {"ells", {4, "x"}}}) != "");
    CHECK(error_of({{"experiment", "axioms"}, {"lattice", {{"Lx", 20}, {"Ly", 20}}}, {"ells", {9}}}).find("geometry") !=
          std::string::npos);
    CHECK(error_of({{"experiment", "axioms"}, {"preset", {{"name", "bulk_axioms"}, {"params", {{"radius", 2}}}}}})
              .find("radius") != std::string::npos);
    CHECK(error_of({{"experiment", "fidelity_flow"}, {"thresholds", {{"alpha_bad", {{"min", 0}}}}}}) != "");
    CHECK(error_of({{"experiment", "semion_suite"}, {"legs", {4}}}) != "");

    ExperimentConfig c = config_from_json({{"experiment", "virasoro_commutators"}, {"modes", {2, 4}}});
    CHECK(c.fallback_lattices.size() == 1);
    nlohmann::json v = validate(c);
    REQUIRE(v.at("cells").size() == 2);
    CHECK(v.at("cells")[0].at("lattice").at("Lx") == 120);
    CHECK(v.at("cells")[1].at("lattice").at("Lx") == 144);

    // Round trip through JSON.
    for (const auto& name : experiment_names()) {
        ExperimentConfig d = default_config(experiment_from_string(name));
        ExperimentConfig back = config_from_json(config_to_json(d));
        CHECK(config_to_json(back) == config_to_json(d));
    }
}

TEST_CASE("default and --paper-scale configs are feasible") {
    for (const auto& name : experiment_names())
        for (bool full_size : {false, true}) {
            ExperimentConfig c = default_config(experiment_from_string(name), full_size);
            c.memory_limit_gb = 1e3;
            CHECK_NOTHROW(validate(c));
        }
    ExperimentConfig p = default_config(ExperimentKind::virasoro_commutators, true);
    CHECK(p.lattice == LatticeGeometry(240, 24));
    p.memory_limit_gb = 1e-3;
    CHECK_THROWS_AS(validate(p), MemoryGuardError);
}

TEST_CASE("runs are reproducible and independent of the worker count") {
    ExperimentConfig c = small_commutator_config();
    RunResult a = run(c, 1), b = run(c, 1), w = run(c, 3);
    CHECK(csv_of(a) == csv_of(b));
    CHECK(csv_of(a) == csv_of(w));
    CHECK(csv_of(a).rfind("experiment,quantity,param,ell_or_n,measured,predicted,source,rel_dev,runtime_s\n", 0) == 0);
    REQUIRE(a.records.size() == 3);
    for (const auto& r : a.records) {
        CHECK(r.source == "cft_formula");
        CHECK(r.predicted == doctest::Approx(3.14159265358979 / 6));
        CHECK(!r.passed.has_value());
    }
    // Rows end with an empty runtime column unless requested.
    CHECK(csv_of(a).find(",\n") != std::string::npos);
}

TEST_CASE("thresholds: per-parameter keys override per-quantity keys") {
    ExperimentConfig c = small_commutator_config();
    c.thresholds["J"] = Threshold{std::nullopt, 1.0, std::nullopt, std::nullopt};
    RunResult r = run(c);
    CHECK(r.all_passed);
    c.thresholds["J@ell=3"] = Threshold{std::nullopt, 1e-12, std::nullopt, std::nullopt};
    r = run(c);
    CHECK_FALSE(r.all_passed);
    int failed = 0;
    for (const auto& rec : r.records) failed += rec.passed && !*rec.passed;
    CHECK(failed == 1);
}

TEST_CASE("small oracle suite agrees with exact diagonalization") {
    ExperimentConfig c = default_config(ExperimentKind::oracle_suite);
    c.instances = 8;
    RunResult r = run(c);
    int rows = 0;
    for (const auto& rec : r.records) {
        if (rec.quantity.rfind("err_", 0) != 0) continue;
        ++rows;
        CHECK(rec.measured < 1e-8);
        REQUIRE(rec.passed.has_value());
        CHECK(*rec.passed);
    }
    CHECK(rows == 7);
    CHECK_FALSE(r.all_passed);  // fewer than 50 instances fails its own gate
}

TEST_CASE("axiom ingredients on a small cylinder") {
    ExperimentConfig c = default_config(ExperimentKind::axioms);
    c.lattice = LatticeGeometry(24, 24);
    c.ells = {2, 3, 4, 5};
    c.thresholds.clear();
    RunResult r = run(c);
    std::vector<double> a0;
    for (const auto& rec : r.records)
        if (rec.quantity == "A0") a0.push_back(rec.measured);
    REQUIRE(a0.size() == 4);
    for (size_t i = 1; i < a0.size(); ++i) CHECK(a0[i] < a0[i - 1]);
    for (double v : a0) CHECK(v > 0);
}
