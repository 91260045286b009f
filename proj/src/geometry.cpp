#include "edgevir/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace edgevir {

namespace {

constexpr double kPi = 3.14159265358979323846;

std::vector<int> sorted_unique(std::vector<int> v) {
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
    return v;
}

void require_same(const LatticeGeometry& a, const LatticeGeometry& b) {
    if (a != b) throw std::invalid_argument("regions live on different lattices");
}

}  // namespace

LatticeGeometry::LatticeGeometry(int lx, int ly, XBoundary xb) : Lx(lx), Ly(ly), x_boundary(xb) {
    if (Lx < 4 || Ly < 2) throw std::invalid_argument("LatticeGeometry: need Lx >= 4 and Ly >= 2");
}

int LatticeGeometry::index(int x, int y) const {
    if (y < 0 || y >= Ly) throw std::out_of_range("LatticeGeometry::index: y out of range");
    return y * Lx + wrap_x(x);
}

Region::Region(const LatticeGeometry& lattice, std::vector<int> sites) : lattice_(lattice), sites_(sorted_unique(std::move(sites))) {
    for (int s : sites_)
        if (s < 0 || s >= lattice_.sites()) throw std::out_of_range("Region: site index out of range");
}

Region Region::rectangle(const LatticeGeometry& lattice, int x0, int w, int y0, int h) {
    if (w < 1 || h < 1 || w > lattice.Lx || y0 < 0 || y0 + h > lattice.Ly)
        throw std::invalid_argument("Region::rectangle: rectangle does not fit the lattice");
    std::vector<int> s;
    s.reserve(size_t(w) * h);
    for (int y = y0; y < y0 + h; ++y)
        for (int x = x0; x < x0 + w; ++x) s.push_back(lattice.index(x, y));
    return Region(lattice, std::move(s));
}

bool Region::contains(int site) const { return std::binary_search(sites_.begin(), sites_.end(), site); }

Region Region::operator|(const Region& o) const {
    require_same(lattice_, o.lattice_);
    std::vector<int> out;
    std::set_union(sites_.begin(), sites_.end(), o.sites_.begin(), o.sites_.end(), std::back_inserter(out));
    return Region(lattice_, std::move(out));
}

Region Region::operator-(const Region& o) const {
    require_same(lattice_, o.lattice_);
    std::vector<int> out;
    std::set_difference(sites_.begin(), sites_.end(), o.sites_.begin(), o.sites_.end(), std::back_inserter(out));
    return Region(lattice_, std::move(out));
}

Region Region::operator&(const Region& o) const {
    require_same(lattice_, o.lattice_);
    std::vector<int> out;
    std::set_intersection(sites_.begin(), sites_.end(), o.sites_.begin(), o.sites_.end(), std::back_inserter(out));
    return Region(lattice_, std::move(out));
}

Region Region::shifted(int dx) const {
    std::vector<int> out;
    out.reserve(sites_.size());
    for (int s : sites_) out.push_back(lattice_.index(lattice_.x_of(s) + dx, lattice_.y_of(s)));
    return Region(lattice_, std::move(out));
}

Region Region::mirrored() const {
    std::vector<int> out;
    out.reserve(sites_.size());
    for (int s : sites_) out.push_back(lattice_.index(lattice_.Lx - 1 - lattice_.x_of(s), lattice_.y_of(s)));
    return Region(lattice_, std::move(out));
}

Region Region::complement() const {
    std::vector<int> out;
    for (int s = 0; s < lattice_.sites(); ++s)
        if (!contains(s)) out.push_back(s);
    return Region(lattice_, std::move(out));
}

std::vector<EdgeSegment> boundary_segments(const Region& region) {
    const auto& L = region.lattice();
    std::set<EdgeSegment> out;
    for (int s : region.sites()) {
        int x = L.x_of(s), y = L.y_of(s);
        int nb[4] = {L.index(x + 1, y), L.index(x - 1, y), y + 1 < L.Ly ? L.index(x, y + 1) : -1,
                     y > 0 ? L.index(x, y - 1) : -1};
        for (int t : nb) {
            if (t < 0 || t == s || region.contains(t)) continue;
            out.insert({std::min(s, t), std::max(s, t)});
        }
    }
    return {out.begin(), out.end()};
}

GeneratorSpec& GeneratorSpec::operator+=(const GeneratorSpec& o) {
    terms.insert(terms.end(), o.terms.begin(), o.terms.end());
    return *this;
}

GeneratorSpec GeneratorSpec::scaled(std::complex<double> s) const {
    GeneratorSpec out = *this;
    for (auto& t : out.terms) t.coefficient *= s;
    return out;
}

GeneratorSpec GeneratorSpec::merged() const {
    std::map<std::pair<Region, bool>, std::complex<double>> acc;
    for (const auto& t : terms) acc[{t.region, t.subtract_expectation}] += t.coefficient;
    GeneratorSpec out;
    for (const auto& [key, c] : acc)
        if (std::abs(c) > 1e-15) out.add(c, key.first, key.second);
    return out;
}

bool GeneratorSpec::is_real() const {
    return std::all_of(terms.begin(), terms.end(), [](const GeneratorTerm& t) { return t.coefficient.imag() == 0.0; });
}

GoodnessReport is_good(const GeneratorSpec& spec, double tol) {
    GoodnessReport rep;
    if (spec.terms.empty()) return rep;
    const auto& L = spec.terms.front().region.lattice();
    std::map<EdgeSegment, std::complex<double>> sums;
    for (const auto& t : spec.terms) {
        require_same(L, t.region.lattice());
        for (const auto& e : boundary_segments(t.region)) sums[e] += t.coefficient;
    }
    for (const auto& [e, v] : sums) {
        if (std::abs(v) > tol) {
            rep.good = false;
            rep.violations[e] = v;
        }
    }
    return rep;
}

std::optional<EdgeInterval> edge_interval(const Region& region) {
    const auto& L = region.lattice();
    std::vector<EdgeInterval> found;
    for (EdgeId edge : {EdgeId::bottom, EdgeId::top}) {
        int y = edge == EdgeId::bottom ? 0 : L.Ly - 1;
        std::vector<bool> hit(L.Lx, false);
        int count = 0;
        for (int x = 0; x < L.Lx; ++x)
            if (region.contains(L.index(x, y))) {
                hit[x] = true;
                ++count;
            }
        if (count == 0) continue;
        if (count == L.Lx) {
            found.push_back({0, L.Lx, edge});
            continue;
        }
        // Components on the ring start where hit[x] && !hit[x-1].
        for (int x = 0; x < L.Lx; ++x) {
            if (hit[x] && !hit[L.wrap_x(x - 1)]) {
                int len = 0;
                while (hit[L.wrap_x(x + len)]) ++len;
                found.push_back({x, len, edge});
            }
        }
    }
    if (found.empty()) return std::nullopt;
    if (found.size() > 1) throw DisconnectedEdgeContact("edge_interval: region meets the physical edge in more than one interval");
    return found.front();
}

double cross_ratio(const EdgeInterval& a, const EdgeInterval& b, const EdgeInterval& c, int Lx) {
    auto wrap = [Lx](int v) { return ((v % Lx) + Lx) % Lx; };
    if (a.edge != b.edge || b.edge != c.edge) throw std::invalid_argument("cross_ratio: intervals on different edges");
    if (wrap(a.start + a.length) != wrap(b.start) || wrap(b.start + b.length) != wrap(c.start))
        throw std::invalid_argument("cross_ratio: intervals are not contiguous");
    if (a.length + b.length + c.length > Lx) throw std::invalid_argument("cross_ratio: intervals exceed the edge");
    auto s = [Lx](int len) { return std::sin(kPi * len / Lx); };
    return s(a.length) * s(c.length) / (s(b.length + c.length) * s(a.length + b.length));
}

const Region& RegionSet::at(const std::string& name) const {
    for (const auto& [n, r] : items)
        if (n == name) return r;
    throw std::out_of_range("RegionSet: no region named " + name);
}

bool RegionSet::has(const std::string& name) const {
    return std::any_of(items.begin(), items.end(), [&](const auto& p) { return p.first == name; });
}

RegionSet twist_preset(const LatticeGeometry& L, const TwistParams& p) {
    if (p.n < 1) throw std::invalid_argument("twist_preset: n must be >= 1");
    if (L.Lx % (4 * p.n) != 0) throw std::invalid_argument("twist_preset: Lx must be divisible by 4n");
    if (p.ly < 1 || 2 * p.ly > L.Ly) throw std::invalid_argument("twist_preset: two blocks of height ly must fit in Ly");
    const int w = L.Lx / (2 * p.n), lx = w / 2;
    const int top = p.ly, bottom = p.ly;
    RegionSet out;
    auto orient = [&](const Region& r) { return p.mirror ? r.mirrored() : r; };
    for (int j = 0; j < 2 * p.n; ++j) {
        int x = p.x0 + j * w;
        Region base = Region::rectangle(L, x, w, 0, bottom);
        // The left twist of interval j shares its upper block with the right twist of interval j+1.
        Region xl = base | Region::rectangle(L, x + lx, w, bottom, top);
        Region xr = base | Region::rectangle(L, x - lx, w, bottom, top);
        out.add("XR" + std::to_string(j), orient(xr));
        out.add("XL" + std::to_string(j), orient(xl));
        out.add("YR" + std::to_string(j), orient(xr.shifted(-lx)));
        out.add("YL" + std::to_string(j), orient(xl.shifted(-lx)));
    }
    return out;
}

RegionSet l0_preset(const LatticeGeometry& L, const L0Params& p) {
    if (p.N < 3 || L.Lx % p.N != 0) throw std::invalid_argument("l0_preset: need N >= 3 dividing Lx");
    const int w = L.Lx / p.N;
    if (w % 2 != 0) throw std::invalid_argument("l0_preset: interval width must be even");
    if (p.bottom < 1 || p.top < 1 || p.bottom + p.top > L.Ly) throw std::invalid_argument("l0_preset: block rows do not fit");
    const int half = w / 2;
    RegionSet out;
    auto orient = [&](const Region& r) { return p.mirror ? r.mirrored() : r; };
    for (int i = 0; i < p.N; ++i) {
        int xb = p.x0 + i * w;
        Region a = Region::rectangle(L, xb - w, w, 0, p.bottom) | Region::rectangle(L, xb - w, w + half, p.bottom, p.top);
        Region b = Region::rectangle(L, xb, w, 0, p.bottom);
        Region c = Region::rectangle(L, xb + w, w, 0, p.bottom) | Region::rectangle(L, xb + half, w + half, p.bottom, p.top);
        out.add("A" + std::to_string(i), orient(a));
        out.add("B" + std::to_string(i), orient(b));
        out.add("C" + std::to_string(i), orient(c));
    }
    return out;
}

RegionSet fixed_point_preset(const LatticeGeometry& L, const FixedPointParams& p) {
    if (p.ell < 2 || p.ell % 2 != 0) throw std::invalid_argument("fixed_point_preset: ell must be even and >= 2");
    if (3 * p.ell > L.Lx || 2 * p.height > L.Ly) throw std::invalid_argument("fixed_point_preset: stack does not fit");
    RegionSet out;
    out.add("A", Region::rectangle(L, p.x0, p.ell, 0, p.height));
    out.add("B", Region::rectangle(L, p.x0 + p.ell, p.ell, 0, p.height));
    out.add("C", Region::rectangle(L, p.x0 + 2 * p.ell, p.ell, 0, p.height));
    out.add("A'", Region::rectangle(L, p.x0 + p.ell / 2, p.ell, p.height, p.height));
    out.add("C'", Region::rectangle(L, p.x0 + 3 * p.ell / 2, p.ell, p.height, p.height));
    return out;
}

RegionSet bulk_axiom_preset(const LatticeGeometry& L, int ell, int cx, int cy) {
    if (ell < 1 || cy - ell < 1 || cy + 2 * ell > L.Ly - 1 || 3 * ell > L.Lx)
        throw std::invalid_argument("bulk_axiom_preset: disk and annulus must stay away from the edges");
    Region c = Region::rectangle(L, cx, ell, cy, ell);
    Region outer = Region::rectangle(L, cx - ell, 3 * ell, cy - ell, 3 * ell);
    Region annulus = outer - c;
    Region left = Region::rectangle(L, cx - ell, ell + ell / 2, cy - ell, 3 * ell);
    RegionSet out;
    out.add("C", c);
    out.add("B", annulus);
    out.add("B1", annulus & left);
    out.add("D1", annulus - left);
    return out;
}

RegionSet boundary_axiom_preset(const LatticeGeometry& L, int h, int w) {
    if (h < 1 || w < 1 || h + 2 * w > L.Ly - 1) throw std::invalid_argument("boundary_axiom_preset: strips do not fit");
    RegionSet out;
    out.add("S0", Region::rectangle(L, 0, L.Lx, 0, h));
    out.add("S1", Region::rectangle(L, 0, L.Lx, h, w));
    out.add("S2", Region::rectangle(L, 0, L.Lx, h + w, w));
    return out;
}

RegionSet modular_commutator_preset(const LatticeGeometry& L, int ell, int cx, int cy) {
    if (cy - ell < 1 || cy + ell > L.Ly - 1 || 2 * ell > L.Lx)
        throw std::invalid_argument("modular_commutator_preset: square must stay in the bulk");
    RegionSet out;
    out.add("A", Region::rectangle(L, cx - ell, 2 * ell, cy, ell));
    // B below-right, C below-left: J = +pi c_-/3 in the handedness where the unmirrored twist gives positive edge commutators.
    out.add("B", Region::rectangle(L, cx, ell, cy - ell, ell));
    out.add("C", Region::rectangle(L, cx - ell, ell, cy - ell, ell));
    return out;
}

RegionSet fidelity_preset(const LatticeGeometry& L, int test) {
    if (L.Lx < 40 || L.Ly < 20) throw std::invalid_argument("fidelity_preset: needs at least a 40 x 20 lattice");
    RegionSet out;
    const int m = L.Lx / 2;
    if (test == 1) {
        // Pair six sites apart (good) and an adjacent pair (bad), 8 x 12 each.
        out.add("A", Region::rectangle(L, m - 11, 8, 4, 12));
        out.add("C", Region::rectangle(L, m + 3, 8, 4, 12));
        out.add("A'", Region::rectangle(L, m - 8, 8, 4, 12));
        out.add("B'", Region::rectangle(L, m, 8, 4, 12));
        out.add("R1", Region::rectangle(L, m - 4, 8, 0, 6));
        out.add("R2", Region::rectangle(L, m - 4, 8, 7, 6));
        out.add("R3", Region::rectangle(L, m - 4, 8, 13, 6));
    } else if (test == 2) {
        // Edge-anchored triple with upper blocks (good) and plain rectangles (bad).
        const int w = 8, hb = 6, ht = 6;
        Region a = Region::rectangle(L, m - 12, w, 0, hb) | Region::rectangle(L, m - 12, w + w / 2, hb, ht);
        Region b = Region::rectangle(L, m - 4, w, 0, hb);
        Region c = Region::rectangle(L, m + 4, w, 0, hb) | Region::rectangle(L, m, w + w / 2, hb, ht);
        out.add("A", a);
        out.add("B", b);
        out.add("C", c);
        out.add("Ab", Region::rectangle(L, m - 12, w, 0, hb + ht));
        out.add("Bb", Region::rectangle(L, m - 4, w, 0, hb + ht));
        out.add("Cb", Region::rectangle(L, m + 4, w, 0, hb + ht));
        out.add("R1", Region::rectangle(L, m - 8, 8, 0, 4));
        out.add("R2", Region::rectangle(L, m - 3, 6, hb + 1, 6));
        out.add("R3", Region::rectangle(L, m - 7, 6, hb + 4, 6));
    } else {
        throw std::invalid_argument("fidelity_preset: test must be 1 or 2");
    }
    return out;
}

RegionSet preset_regions(const std::string& name, const LatticeGeometry& L, const nlohmann::json& params) {
    auto get = [&](const char* key, int def) { return params.contains(key) ? params.at(key).get<int>() : def; };
    if (name == "twist") {
        TwistParams p;
        p.n = get("n", 2);
        p.ly = get("ly", 6);
        p.x0 = get("x0", 0);
        p.mirror = params.value("mirror", false);
        return twist_preset(L, p);
    }
    if (name == "l0") {
        L0Params p;
        p.N = get("N", 12);
        p.bottom = get("bottom", 6);
        p.top = get("top", 6);
        p.x0 = get("x0", 0);
        p.mirror = params.value("mirror", false);
        return l0_preset(L, p);
    }
    if (name == "fixed_point") {
        FixedPointParams p;
        p.ell = get("ell", 20);
        p.height = get("height", p.ell / 2);
        p.x0 = get("x0", 0);
        return fixed_point_preset(L, p);
    }
    if (name == "bulk_axioms") {
        int ell = get("ell", 6);
        return bulk_axiom_preset(L, ell, get("cx", L.Lx / 2 - ell / 2), get("cy", L.Ly / 2 - ell / 2));
    }
    if (name == "boundary_axioms") return boundary_axiom_preset(L, get("h", 4), get("w", 4));
    if (name == "modular_commutator") return modular_commutator_preset(L, get("ell", 10), get("cx", L.Lx / 2), get("cy", L.Ly / 2));
    if (name == "fidelity_test1") return fidelity_preset(L, 1);
    if (name == "fidelity_test2") return fidelity_preset(L, 2);
    throw std::invalid_argument("preset_regions: unknown preset " + name);
}

std::vector<std::string> list_presets() {
    return {"twist", "l0", "fixed_point", "bulk_axioms", "boundary_axioms", "modular_commutator", "fidelity_test1", "fidelity_test2"};
}

nlohmann::json lattice_to_json(const LatticeGeometry& L) {
    return {{"Lx", L.Lx}, {"Ly", L.Ly}, {"x_boundary", L.x_boundary == XBoundary::periodic ? "periodic" : "antiperiodic"}};
}

LatticeGeometry lattice_from_json(const nlohmann::json& j) {
    std::string xb = j.value("x_boundary", std::string("antiperiodic"));
    if (xb != "periodic" && xb != "antiperiodic") throw std::invalid_argument("lattice_from_json: bad x_boundary");
    return LatticeGeometry(j.at("Lx").get<int>(), j.at("Ly").get<int>(), xb == "periodic" ? XBoundary::periodic : XBoundary::antiperiodic);
}

nlohmann::json region_to_json(const Region& r) {
    nlohmann::json sites = nlohmann::json::array();
    for (int s : r.sites()) sites.push_back({r.lattice().x_of(s), r.lattice().y_of(s)});
    return {{"lattice", lattice_to_json(r.lattice())}, {"sites", sites}};
}

Region region_from_json(const nlohmann::json& j) {
    LatticeGeometry L = lattice_from_json(j.at("lattice"));
    std::vector<int> s;
    for (const auto& p : j.at("sites")) {
        int x = p.at(0).get<int>(), y = p.at(1).get<int>();
        if (x < 0 || x >= L.Lx) throw std::out_of_range("region_from_json: x out of range");
        s.push_back(L.index(x, y));
    }
    return Region(L, std::move(s));
}

}  // namespace edgevir
