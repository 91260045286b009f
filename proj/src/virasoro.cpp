#include "edgevir/virasoro.hpp"

#include <cmath>
#include <cstdlib>
#include <stdexcept>
#include <string>

namespace edgevir {

namespace {

constexpr double kPi = 3.14159265358979323846;
const cplx kI(0.0, 1.0);

void add_all(GeneratorSpec& out, const GeneratorSpec& in, double c) {
    for (const auto& t : in.terms) out.add(t.coefficient * c, t.region, t.subtract_expectation);
}

// Modes (-1)^j (2j+1) n, j >= 1, ordered by |m|.
std::vector<int> harmonics(int n, int count) {
    std::vector<int> out;
    for (int j = 1; j <= count; ++j) out.push_back((j % 2 ? -1 : 1) * (2 * j + 1) * n);
    return out;
}

// Drives the symbolic bookkeeping shared by improve() and improvement_modes().
std::vector<std::pair<int, double>> plan_improvement(int target, int steps) {
    if (std::abs(target) < 2) throw std::invalid_argument("improve: target mode must satisfy |n| >= 2");
    if (steps < 0) throw std::invalid_argument("improve: steps must be >= 0");
    ModeExpansion e = ModeExpansion::ltilde(target);
    std::vector<std::pair<int, double>> plan;
    for (int k = 0; k < steps; ++k) {
        int found = 0;
        double lam = 0;
        for (int m : harmonics(target, 64)) {
            double c = e.coefficient(m).real();
            if (std::abs(c) > 1e-15) {
                found = m;
                lam = c;
                break;
            }
        }
        if (found == 0) break;
        e += cplx(-lam) * ModeExpansion::ltilde(found);
        plan.emplace_back(found, -lam);
    }
    return plan;
}

}  // namespace

GeneratorSpec VirasoroSpec::combined() const {
    GeneratorSpec out = real_part;
    out += imag_part.scaled(kI);
    return out.merged();
}

VirasoroSpec VirasoroSpec::adjoint() const {
    VirasoroSpec out = *this;
    out.imag_part = imag_part.scaled(-1.0);
    out.mode = -mode;
    for (auto& c : out.corrections) c.first = -c.first;
    return out;
}

double l0_prefactor(int N) {
    if (N < 3) throw std::invalid_argument("l0_prefactor: N must be >= 3");
    return 1.0 / (4 * kPi * std::tan(kPi / N));
}

VirasoroSpec build_L0(const LatticeGeometry& lattice, const L0Params& p) {
    if (p.N < 3 || lattice.Lx % p.N != 0) throw std::invalid_argument("build_L0: N must divide Lx");
    RegionSet r = l0_preset(lattice, p);
    const double k = l0_prefactor(p.N);
    VirasoroSpec out;
    for (int i = 0; i < p.N; ++i) {
        const std::string s = std::to_string(i);
        const Region &A = r.at("A" + s), &B = r.at("B" + s), &C = r.at("C" + s);
        out.real_part.add(k, A | B, true);
        out.real_part.add(k, B | C, true);
        out.real_part.add(-k, A, true);
        out.real_part.add(-k, C, true);
    }
    out.real_part = out.real_part.merged();
    return out;
}

GeneratorSpec build_mode(const RegionSet& r, int n, Parity parity) {
    if (n < 1) throw std::invalid_argument("build_mode: n must be >= 1");
    const double a = normalization_A(n) / 2;
    const std::string X = parity == Parity::odd ? "X" : "Y";
    GeneratorSpec out;
    for (int j = 0; j < 2 * n; ++j) {
        const double s = j % 2 ? -a : a;
        out.add(s, r.at(X + "R" + std::to_string(j)));
        out.add(s, r.at(X + "L" + std::to_string(j)));
    }
    return out.merged();
}

GeneratorSpec build_mode(const LatticeGeometry& lattice, int n, Parity parity, const ModeDims& dims) {
    if (n < 1) throw std::invalid_argument("build_mode: n must be >= 1");
    if (lattice.Lx % (4 * n) != 0)
        throw std::invalid_argument("build_mode: Lx = " + std::to_string(lattice.Lx) + " is not divisible by 4n = " +
                                    std::to_string(4 * n));
    return build_mode(twist_preset(lattice, TwistParams{n, dims.ly, dims.x0, dims.mirror}), n, parity);
}

GeneratorSpec build_untwisted_mode(const LatticeGeometry& lattice, int n, Parity parity, const ModeDims& dims) {
    if (n < 1 || lattice.Lx % (4 * n) != 0) throw std::invalid_argument("build_untwisted_mode: need 4n | Lx");
    const int w = lattice.Lx / (2 * n);
    const int shift = parity == Parity::odd ? 0 : -w / 2;
    GeneratorSpec out;
    for (int j = 0; j < 2 * n; ++j) {
        Region x = Region::rectangle(lattice, dims.x0 + shift + j * w, w, 0, 2 * dims.ly);
        out.add(j % 2 ? -normalization_A(n) : normalization_A(n), dims.mirror ? x.mirrored() : x);
    }
    return out;
}

VirasoroSpec assemble_Ltilde(const RegionSet& regions, int n) {
    if (n == 0) throw std::invalid_argument("assemble_Ltilde: use build_L0 for n = 0");
    const int k = std::abs(n);
    VirasoroSpec out;
    out.mode = n;
    out.real_part = build_mode(regions, k, Parity::even);
    out.imag_part = build_mode(regions, k, Parity::odd).scaled(n > 0 ? 1.0 : -1.0);
    return out;
}

VirasoroSpec assemble_Ltilde(const LatticeGeometry& lattice, int n, const ModeDims& dims) {
    if (n == 0) throw std::invalid_argument("assemble_Ltilde: use build_L0 for n = 0");
    const int k = std::abs(n);
    if (lattice.Lx % (4 * k) != 0)
        throw std::invalid_argument("assemble_Ltilde: Lx = " + std::to_string(lattice.Lx) +
                                    " is not divisible by 4n = " + std::to_string(4 * k));
    return assemble_Ltilde(twist_preset(lattice, TwistParams{k, dims.ly, dims.x0, dims.mirror}), n);
}

GeneratorSpec build_fixed_point(const RegionSet& r, double eta) {
    const Region &A = r.at("A"), &Ap = r.at("A'"), &B = r.at("B"), &C = r.at("C"), &Cp = r.at("C'");
    GeneratorSpec out;
    if (eta != 0.0) {
        out.add(eta, A | Ap | B);
        out.add(eta, C | Cp | B);
        out.add(-eta, A | Ap);
        out.add(-eta, C | Cp);
    }
    if (eta != 1.0) {
        out.add(1 - eta, A | B);
        out.add(1 - eta, B | C);
        out.add(-(1 - eta), A | B | C);
        out.add(-(1 - eta), B);
    }
    return out.merged();
}

double fixed_point_eta(const RegionSet& r) {
    auto a = edge_interval(r.at("A")), b = edge_interval(r.at("B")), c = edge_interval(r.at("C"));
    if (!a || !b || !c) throw std::invalid_argument("fixed_point_eta: A, B, C must touch the edge");
    return cross_ratio(*a, *b, *c, r.at("A").lattice().Lx);
}

std::vector<int> improvement_modes(int target, int steps) {
    std::vector<int> out;
    for (const auto& [m, c] : plan_improvement(target, steps)) out.push_back(m);
    return out;
}

VirasoroSpec improve(const std::map<int, VirasoroSpec>& family, int target, int steps) {
    auto base = family.find(target);
    if (base == family.end()) throw std::invalid_argument("improve: family lacks Ltilde_" + std::to_string(target));
    VirasoroSpec out = base->second;
    if (steps == 0) return out;
    for (const auto& [m, c] : plan_improvement(target, steps)) {
        auto it = family.find(m);
        if (it == family.end())
            throw std::invalid_argument("improve: step needs Ltilde_" + std::to_string(m) + ", missing from the family");
        add_all(out.real_part, it->second.real_part, c);
        add_all(out.imag_part, it->second.imag_part, c);
        out.corrections.emplace_back(m, c);
        ++out.improvement_level;
    }
    out.real_part = out.real_part.merged();
    out.imag_part = out.imag_part.merged();
    return out;
}

ModeExpansion mode_expansion_of(const VirasoroSpec& spec) {
    if (spec.mode == 0) return ModeExpansion::single(0);
    ModeExpansion e = ModeExpansion::ltilde(spec.mode);
    for (const auto& [m, c] : spec.corrections) e += cplx(c) * ModeExpansion::ltilde(m);
    return e;
}

nlohmann::json generator_to_json(const GeneratorSpec& spec) {
    nlohmann::json terms = nlohmann::json::array();
    for (const auto& t : spec.terms) {
        nlohmann::json sites = nlohmann::json::array();
        const auto& L = t.region.lattice();
        for (int s : t.region.sites()) sites.push_back({L.x_of(s), L.y_of(s)});
        terms.push_back({{"coefficient", {t.coefficient.real(), t.coefficient.imag()}},
                         {"subtract_expectation", t.subtract_expectation},
                         {"sites", sites}});
    }
    nlohmann::json j = {{"terms", terms}};
    if (!spec.terms.empty()) j["lattice"] = lattice_to_json(spec.terms.front().region.lattice());
    return j;
}

GeneratorSpec generator_from_json(const nlohmann::json& j, const LatticeGeometry& lattice) {
    if (j.contains("lattice") && lattice_from_json(j.at("lattice")) != lattice)
        throw std::invalid_argument("generator_from_json: lattice mismatch");
    GeneratorSpec out;
    for (const auto& t : j.at("terms")) {
        std::vector<int> s;
        for (const auto& p : t.at("sites")) s.push_back(lattice.index(p.at(0).get<int>(), p.at(1).get<int>()));
        const auto& c = t.at("coefficient");
        out.add(cplx(c.at(0).get<double>(), c.at(1).get<double>()), Region(lattice, std::move(s)),
                t.value("subtract_expectation", false));
    }
    return out;
}

nlohmann::json virasoro_to_json(const VirasoroSpec& spec) {
    nlohmann::json corr = nlohmann::json::array();
    for (const auto& [m, c] : spec.corrections) corr.push_back({m, c});
    return {{"mode", spec.mode},
            {"improvement_level", spec.improvement_level},
            {"corrections", corr},
            {"real_part", generator_to_json(spec.real_part)},
            {"imag_part", generator_to_json(spec.imag_part)}};
}

VirasoroSpec virasoro_from_json(const nlohmann::json& j, const LatticeGeometry& lattice) {
    VirasoroSpec out;
    out.mode = j.at("mode").get<int>();
    out.improvement_level = j.value("improvement_level", 0);
    for (const auto& c : j.value("corrections", nlohmann::json::array()))
        out.corrections.emplace_back(c.at(0).get<int>(), c.at(1).get<double>());
    out.real_part = generator_from_json(j.at("real_part"), lattice);
    out.imag_part = generator_from_json(j.at("imag_part"), lattice);
    return out;
}

}  // namespace edgevir
