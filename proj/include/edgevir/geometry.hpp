#pragma once

#include <complex>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

namespace edgevir {

enum class XBoundary { periodic, antiperiodic };

// Cylinder of Lx x Ly sites; x wraps (periodic or antiperiodic for fermions), y is open.
struct LatticeGeometry {
    int Lx = 0;
    int Ly = 0;
    XBoundary x_boundary = XBoundary::antiperiodic;

    LatticeGeometry() = default;
    LatticeGeometry(int lx, int ly, XBoundary xb = XBoundary::antiperiodic);

    int sites() const { return Lx * Ly; }
    int index(int x, int y) const;
    int x_of(int i) const { return i % Lx; }
    int y_of(int i) const { return i / Lx; }
    int wrap_x(int x) const { return ((x % Lx) + Lx) % Lx; }

    bool operator==(const LatticeGeometry& o) const { return Lx == o.Lx && Ly == o.Ly && x_boundary == o.x_boundary; }
    bool operator!=(const LatticeGeometry& o) const { return !(*this == o); }
};

class Region {
public:
    Region() = default;
    Region(const LatticeGeometry& lattice, std::vector<int> sites);

    // Rectangle of width w and height h with lower-left corner (x0, y0); x wraps.
    static Region rectangle(const LatticeGeometry& lattice, int x0, int w, int y0, int h);

    const LatticeGeometry& lattice() const { return lattice_; }
    const std::vector<int>& sites() const { return sites_; }
    size_t size() const { return sites_.size(); }
    bool empty() const { return sites_.empty(); }
    bool contains(int site) const;

    Region operator|(const Region& o) const;
    Region operator-(const Region& o) const;
    Region operator&(const Region& o) const;
    Region shifted(int dx) const;
    Region mirrored() const;
    Region complement() const;

    bool operator==(const Region& o) const { return lattice_ == o.lattice_ && sites_ == o.sites_; }
    bool operator<(const Region& o) const { return sites_ < o.sites_; }

private:
    LatticeGeometry lattice_;
    std::vector<int> sites_;
};

struct EdgeSegment {
    int a;
    int b;  // a < b
    bool operator<(const EdgeSegment& o) const { return a != o.a ? a < o.a : b < o.b; }
    bool operator==(const EdgeSegment& o) const { return a == o.a && b == o.b; }
};

std::vector<EdgeSegment> boundary_segments(const Region& region);

struct GeneratorTerm {
    std::complex<double> coefficient;
    Region region;
    bool subtract_expectation = false;
};

struct GeneratorSpec {
    std::vector<GeneratorTerm> terms;

    void add(std::complex<double> c, const Region& r, bool subtract = false) { terms.push_back({c, r, subtract}); }
    GeneratorSpec& operator+=(const GeneratorSpec& o);
    GeneratorSpec scaled(std::complex<double> s) const;
    // Duplicate regions merged, zero coefficients dropped, sorted by region.
    GeneratorSpec merged() const;
    bool is_real() const;
};

struct GoodnessReport {
    bool good = true;
    std::map<EdgeSegment, std::complex<double>> violations;
};

GoodnessReport is_good(const GeneratorSpec& spec, double tol = 1e-12);

enum class EdgeId { bottom, top };

struct EdgeInterval {
    int start = 0;
    int length = 0;
    EdgeId edge = EdgeId::bottom;
};

struct DisconnectedEdgeContact : std::runtime_error {
    using std::runtime_error::runtime_error;
};

std::optional<EdgeInterval> edge_interval(const Region& region);
double cross_ratio(const EdgeInterval& a, const EdgeInterval& b, const EdgeInterval& c, int Lx);

// Named region families used by the experiments.
struct RegionSet {
    std::vector<std::pair<std::string, Region>> items;

    void add(const std::string& name, const Region& r) { items.emplace_back(name, r); }
    const Region& at(const std::string& name) const;
    bool has(const std::string& name) const;
};

struct TwistParams {
    int n = 2;
    int ly = 6;       // height of each block; a twisted square is 2 lx x ly on the edge plus a shifted 2 lx x ly block above
    int x0 = 0;       // origin of the first interval
    bool mirror = false;
};
// X^R_j, X^L_j (odd component) and Y^R_j, Y^L_j (even component), j = 0..2n-1.
RegionSet twist_preset(const LatticeGeometry& lattice, const TwistParams& p);

struct L0Params {
    int N = 12;
    int bottom = 6;   // rows of the edge blocks
    int top = 6;      // rows of the upper blocks
    int x0 = 0;
    bool mirror = false;
};
// Triples A_i, B_i, C_i anchored on intervals i-1, i, i+1.
RegionSet l0_preset(const LatticeGeometry& lattice, const L0Params& p);

struct FixedPointParams {
    int ell = 20;     // edge length of A, B, C
    int height = 10;  // rows per layer
    int x0 = 0;
};
// A, B, C along the edge; A' above the A/B junction, C' above the B/C junction.
RegionSet fixed_point_preset(const LatticeGeometry& lattice, const FixedPointParams& p);

// Bulk disk C with annulus B (A0) or annulus halves B, D (A1); C is ell x ell, the annulus is ell wide.
RegionSet bulk_axiom_preset(const LatticeGeometry& lattice, int ell, int cx, int cy);
// Stacked full-width strips above the bottom edge: S0 (rows [0,h)), S1, S2 (rows of width w).
RegionSet boundary_axiom_preset(const LatticeGeometry& lattice, int h, int w);
// Square of side 2*ell split into top half A, lower-left B, lower-right C.
RegionSet modular_commutator_preset(const LatticeGeometry& lattice, int ell, int cx, int cy);
// Good/bad generator regions and probe regions 1..3 for the flow tests.
RegionSet fidelity_preset(const LatticeGeometry& lattice, int test);

RegionSet preset_regions(const std::string& name, const LatticeGeometry& lattice, const nlohmann::json& params);
std::vector<std::string> list_presets();

nlohmann::json lattice_to_json(const LatticeGeometry& lattice);
LatticeGeometry lattice_from_json(const nlohmann::json& j);
nlohmann::json region_to_json(const Region& region);
Region region_from_json(const nlohmann::json& j);

}  // namespace edgevir
