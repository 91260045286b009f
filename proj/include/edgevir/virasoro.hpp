#pragma once

#include <map>
#include <utility>
#include <vector>

#include <json.hpp>

#include "edgevir/cft_oracle.hpp"
#include "edgevir/geometry.hpp"

namespace edgevir {

// real_part + i * imag_part. For improved generators, `corrections` lists (m, c) with
// spec = Ltilde_mode + sum c * Ltilde_m.
struct VirasoroSpec {
    GeneratorSpec real_part;
    GeneratorSpec imag_part;
    int mode = 0;
    int improvement_level = 0;
    std::vector<std::pair<int, double>> corrections;

    // One complex-coefficient spec.
    GeneratorSpec combined() const;
    // Ltilde_{-n} from Ltilde_n.
    VirasoroSpec adjoint() const;
};

struct ModeDims {
    int ly = 6;
    int x0 = 0;
    bool mirror = false;
};

double l0_prefactor(int N);
VirasoroSpec build_L0(const LatticeGeometry& lattice, const L0Params& p = {});

// (A_n / 2) sum_j (-1)^j (K_{X^R_j} + K_{X^L_j}); Y regions for even parity.
GeneratorSpec build_mode(const LatticeGeometry& lattice, int n, Parity parity, const ModeDims& dims = {});
// Same sum over an explicit set named XR/XL/YR/YL j (ladders, custom shapes).
GeneratorSpec build_mode(const RegionSet& regions, int n, Parity parity);
// The plain alternating sum over untwisted squares (not good; kept for comparison).
GeneratorSpec build_untwisted_mode(const LatticeGeometry& lattice, int n, Parity parity, const ModeDims& dims = {});

// Ltilde_n = L^(e)_|n| + sign(n) i L^(o)_|n|.
VirasoroSpec assemble_Ltilde(const LatticeGeometry& lattice, int n, const ModeDims& dims = {});
VirasoroSpec assemble_Ltilde(const RegionSet& regions, int n);

// eta Dhat(AA', B, CC') + (1 - eta) Ihat(A:C|B), regions named A, A', B, C, C'.
GeneratorSpec build_fixed_point(const RegionSet& regions, double eta);
// Cross ratio of the edge intervals of A, B, C.
double fixed_point_eta(const RegionSet& regions);

// `family` maps mode m to Ltilde_m; improves the entry for `target` by `steps` cancellations.
VirasoroSpec improve(const std::map<int, VirasoroSpec>& family, int target, int steps);
// Modes that `steps` improvement steps of `target` will call for.
std::vector<int> improvement_modes(int target, int steps);

ModeExpansion mode_expansion_of(const VirasoroSpec& spec);

nlohmann::json generator_to_json(const GeneratorSpec& spec);
GeneratorSpec generator_from_json(const nlohmann::json& j, const LatticeGeometry& lattice);
nlohmann::json virasoro_to_json(const VirasoroSpec& spec);
VirasoroSpec virasoro_from_json(const nlohmann::json& j, const LatticeGeometry& lattice);

}  // namespace edgevir
