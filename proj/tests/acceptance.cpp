// Acceptance gate: one PASS/FAIL line per criterion. Tolerances are fixed here,
// independent of the thresholds carried by the experiment configs.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "edgevir/cft_oracle.hpp"
#include "edgevir/experiments.hpp"

using namespace edgevir;

namespace {

constexpr double kPi = 3.14159265358979323846;

struct Outcome {
    bool pass = true;
    std::string detail;

    void require(bool ok, const std::string& what) {
        if (!ok) pass = false;
        if (!detail.empty()) detail += "; ";
        detail += (ok ? "" : "!") + what;
    }
};

std::string fmt(const char* f, double a) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, a);
    return buf;
}

std::map<std::string, std::string> params_of(const std::string& p) {
    std::map<std::string, std::string> out;
    std::stringstream ss(p);
    std::string item;
    while (std::getline(ss, item, ';')) {
        auto eq = item.find('=');
        if (eq != std::string::npos) out[item.substr(0, eq)] = item.substr(eq + 1);
    }
    return out;
}

std::vector<PredictionRecord> select(const RunResult& r, const std::string& quantity) {
    std::vector<PredictionRecord> out;
    for (const auto& rec : r.records)
        if (rec.quantity == quantity) out.push_back(rec);
    return out;
}

// The single record of a quantity with the given param; throws when absent.
const PredictionRecord& one(const RunResult& r, const std::string& quantity, const std::string& param) {
    for (const auto& rec : r.records)
        if (rec.quantity == quantity && rec.param == param) return rec;
    throw std::runtime_error("missing record " + quantity + " [" + param + "]");
}

double rel(double a, double b) { return std::abs(a - b) / std::abs(b); }

RunResult run_default(ExperimentKind k) { return run(default_config(k)); }

Outcome check_oracle_equivalence() {
    Outcome o;
    RunResult r = run_default(ExperimentKind::oracle_suite);
    double n = one(r, "instances", "instances=60;modes=3..10").measured;
    o.require(n >= 50, fmt("instances %.0f", n));
    for (const char* q : {"err_entropy", "err_modular_hamiltonian", "err_expectation", "err_variance", "err_commutator",
                          "err_fidelity", "err_evolution"}) {
        auto recs = select(r, q);
        double worst = recs.empty() ? INFINITY : recs.front().measured;
        o.require(worst <= 1e-8, std::string(q).substr(4) + fmt(" %.2e", worst));
    }
    return o;
}

Outcome check_fidelity_flow() {
    Outcome o;
    RunResult r = run_default(ExperimentKind::fidelity_flow);
    double worst_good = 0;
    int good = 0;
    for (const auto& rec : select(r, "infidelity_good")) {
        if (std::abs(std::stod(params_of(rec.param).at("t"))) > 2 + 1e-12) continue;
        worst_good = std::max(worst_good, rec.measured);
        ++good;
    }
    o.require(good > 0 && worst_good <= 1e-4, fmt("bulk good-flow infidelity <= %.2e", worst_good));
    double weakest_bad = INFINITY;
    int bad = 0;
    for (const auto& rec : select(r, "infidelity_bad")) {
        auto p = params_of(rec.param);
        if (std::abs(std::abs(std::stod(p.at("t"))) - 0.5) > 1e-12) continue;
        if (p.at("region") != "R2" && p.at("region") != "R3") continue;
        weakest_bad = std::min(weakest_bad, rec.measured);
        ++bad;
    }
    o.require(bad == 8 && weakest_bad >= 1e-3, fmt("R2/R3 bad-flow infidelity at |t|=0.5 >= %.2e", weakest_bad));
    double min_alpha = INFINITY;
    auto alphas = select(r, "alpha_bad");
    for (const auto& rec : alphas) min_alpha = std::min(min_alpha, rec.measured);
    o.require(alphas.size() == 4 && min_alpha > 0, fmt("bad alpha >= %.3g", min_alpha));
    return o;
}

Outcome check_modular_commutator() {
    Outcome o;
    RunResult r = run_default(ExperimentKind::modular_commutator);
    double J = one(r, "J", "ell=10").measured;
    o.require(std::abs(J - kPi / 6) <= 1e-2, fmt("J(ell=10) = %.7f", J));
    return o;
}

Outcome check_fixed_point() {
    Outcome o;
    RunResult r = run_default(ExperimentKind::fixed_point);
    std::vector<double> sig;
    for (int ell : {8, 12, 16, 20}) sig.push_back(one(r, "sigma_K", "ell=" + std::to_string(ell)).measured);
    bool dec = true;
    for (size_t i = 1; i < sig.size(); ++i) dec = dec && sig[i] < sig[i - 1];
    o.require(dec, fmt("sigma_K decreasing, %.2e at ell=20", sig.back()));
    double c = one(r, "ctot", "ell=20").measured;
    o.require(rel(c, 0.5) <= 0.1, fmt("c_tot(ell=20) = %.6f", c));
    return o;
}

Outcome check_virasoro_commutators() {
    Outcome o;
    RunResult r = run_default(ExperimentKind::virasoro_commutators);
    double c1 = one(r, "commutator", "n=1").measured;
    o.require(std::abs(c1) <= 1e-4, fmt("|n=1| = %.1e", std::abs(c1)));
    for (int n : {2, 3, 4}) {
        double v = one(r, "commutator", "n=" + std::to_string(n)).measured;
        double dev = rel(v, commutator_prediction(n, 0.5));
        double lx = one(r, "lattice_Lx", "n=" + std::to_string(n)).measured;
        o.require(dev <= 0.02, "n=" + std::to_string(n) + fmt(" dev %.1e", dev) + fmt(" (Lx=%.0f)", lx));
    }
    return o;
}

Outcome check_double_commutators() {
    Outcome o;
    RunResult r = run_default(ExperimentKind::double_commutators);
    for (int n : {2, 3}) {
        double v = one(r, "double_commutator", "n=" + std::to_string(n)).measured;
        double dev = rel(v, double_commutator_prediction(n, 0.5));
        o.require(dev <= 0.03, "n=" + std::to_string(n) + fmt(" dev %.2e", dev));
    }
    // Resonant triples set the scale of the off-resonance checks.
    double scale = 0;
    for (const auto& rec : select(r, "triple")) scale = std::max(scale, std::abs(rec.predicted));
    auto off = select(r, "triple_off_resonance");
    double worst = 0;
    for (const auto& rec : off) worst = std::max(worst, std::abs(rec.measured));
    o.require(!off.empty() && scale > 0 && worst <= 1e-3 * scale, fmt("off-resonance max %.1e", worst) + fmt(" (scale %.3g)", scale));
    return o;
}

Outcome check_improvement() {
    Outcome o;
    RunResult r = run_default(ExperimentKind::improvement);
    const double target = 0.5 / 12 * (8 - 2);
    double before = rel(one(r, "commutator_unimproved", "n=2;steps=0").measured, target);
    double after = rel(one(r, "commutator_improved", "n=2;steps=1").measured, target);
    o.require(before >= 0.015 && before <= 0.035, fmt("unimproved dev %.3f%%", 100 * before));
    o.require(after <= 0.006, fmt("improved dev %.3f%%", 100 * after));
    return o;
}

Outcome check_variance_alpha() {
    Outcome o;
    RunResult r = run_default(ExperimentKind::variance_alpha);
    const std::map<int, double> table{{2, 0.065013}, {3, 0.261825}};
    for (int n : {2, 3}) {
        const std::string p = "n=" + std::to_string(n);
        double s2 = one(r, "sigma2", p).measured;
        double a_edge = one(r, "alpha_edge", p).measured, a_all = one(r, "alpha_entire", p).measured;
        o.require(rel(s2, sigma2_prediction(n, 0.5)) <= 0.01, p + fmt(" sigma2 %.6f", s2));
        o.require(rel(s2, table.at(n)) <= 0.01, p + fmt(" vs table %.1e", rel(s2, table.at(n))));
        o.require(rel(a_edge, s2) <= 0.1, p + fmt(" alpha_edge %.6f", a_edge));
        o.require(std::abs(a_all - a_edge) / s2 <= 0.2, p + fmt(" alpha gap %.1e", std::abs(a_all - a_edge) / s2));
    }
    return o;
}

Outcome check_semion_suite() {
    Outcome o;
    RunResult r = run_default(ExperimentKind::semion_suite);
    struct Row {
        int qubits;
        double comm, var, tol;
    };
    for (Row row : {Row{16, 0.242078, 0.110759, 1e-3}, Row{24, 0.442392, 0.122377, 1e-2}}) {
        const std::string p = "qubits=" + std::to_string(row.qubits);
        double c = one(r, "commutator", p).measured, v = one(r, "sigma2", p).measured;
        o.require(std::abs(c - row.comm) <= row.tol, p + fmt(" commutator %.6f", c));
        o.require(std::abs(v - row.var) <= row.tol, p + fmt(" sigma2 %.6f", v));
    }
    return o;
}

Outcome check_cft_identities() {
    Outcome o;
    double worst = 0;
    for (int n = 2; n <= 8; ++n) {
        auto lt = ModeExpansion::ltilde(n), lm = ModeExpansion::ltilde(-n);
        worst = std::max(worst, rel(mode_sum_variance(ModeExpansion::parity(n, Parity::odd), 0.5), sigma2_prediction(n, 0.5)));
        worst = std::max(worst, rel(mode_sum_commutator(lt, lm, 0.5).real(), commutator_prediction(n, 0.5)));
        worst = std::max(worst, rel(mode_sum_double_commutator(lt, lm, 0.5).real(), double_commutator_prediction(n, 0.5)));
    }
    o.require(worst <= 1e-9, fmt("mode sums n<=8 rel %.1e", worst));

    double sch = 0;
    for (int n : {2, 3}) {
        auto q = schwarzian_leading(beta_n(n, Parity::odd).as_piecewise(), ModeExpansion::parity(n, Parity::odd), 0.3, 0.5);
        sch = std::max(sch, rel(q.schwarzian_t2, q.energy_t2));
    }
    o.require(sch <= 1e-6, fmt("Schwarzian vs energy %.1e", sch));

    double e2 = fourier_decay_exponent(beta_n(2, Parity::odd).as_piecewise(), 200);
    double e3 = fourier_decay_exponent(beta_n(3, Parity::odd).as_piecewise(), 240);
    o.require(std::abs(e2 + 3) <= 0.3 && std::abs(e3 + 3) <= 0.3, fmt("beta decay %.3f", e2) + fmt("/%.3f", e3));
    PiecewiseFunction square{[](double x) { return x < kPi ? 1.0 : -1.0; }, [](double) { return 0.0; },
                             [](double) { return 0.0; }, {kPi}};
    double ej = fourier_decay_exponent(square, 200);
    o.require(std::abs(ej + 1) <= 0.05, fmt("jump decay %.3f", ej));
    return o;
}

struct Criterion {
    int id;
    const char* name;
    double budget_s;  // 0: no runtime bound
    std::function<Outcome()> check;
};

}  // namespace

int main() {
    const std::vector<Criterion> criteria{
        {1, "oracle equivalence", 300, check_oracle_equivalence},
        {2, "good-flow invariance", 600, check_fidelity_flow},
        {3, "modular commutator", 0, check_modular_commutator},
        {4, "vector fixed point", 0, check_fixed_point},
        {5, "Virasoro commutators", 0, check_virasoro_commutators},
        {6, "double commutators", 0, check_double_commutators},
        {7, "improvement", 0, check_improvement},
        {8, "variance and alpha", 0, check_variance_alpha},
        {9, "semion suite", 0, check_semion_suite},
        {10, "CFT oracle identities", 60, check_cft_identities},
    };
    int failed = 0;
    for (const auto& c : criteria) {
        auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = c.check();
        } catch (const std::exception& e) {
            o.pass = false;
            o.detail = std::string("exception: ") + e.what();
        }
        double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        if (c.budget_s > 0) o.require(secs <= c.budget_s, fmt("runtime %.1f s", secs) + fmt(" <= %.0f", c.budget_s));
        else o.require(true, fmt("runtime %.1f s", secs));
        failed += !o.pass;
        std::printf("%s criterion %2d (%s): %s\n", o.pass ? "PASS" : "FAIL", c.id, c.name, o.detail.c_str());
        std::fflush(stdout);
    }
    std::printf("%d of %zu criteria passed\n", int(criteria.size()) - failed, criteria.size());
    return failed ? 1 : 0;
}
