#pragma once

#include <array>
#include <complex>
#include <map>
#include <memory>
#include <mutex>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "edgevir/geometry.hpp"

namespace edgevir {

using cplx = std::complex<double>;

struct BdGParams {
    double t = 1.0;
    double Delta = 1.0;
    double mu = 1.3;
    std::array<double, 2> A = {0.0, 1.57079632679489661923};
};

struct GaplessGroundState : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct FitDiagnostics : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Majorana covariance Gamma_ab = (i/2) <[g_a, g_b]> with g_{2j} = a_j + a_j^dag,
// g_{2j+1} = -i (a_j - a_j^dag). Rows 2p, 2p+1 belong to sites()[p].
// A covariance is either dense, or a translation-invariant table whose blocks
// are built on demand.
class MajoranaCovariance {
public:
    MajoranaCovariance() = default;
    MajoranaCovariance(const LatticeGeometry& lattice, std::vector<int> sites, Eigen::MatrixXd M);

    // Gamma((x, y), (x', y')) = table[x - x' + Lx - 1] block (y, y'), covering every site.
    static MajoranaCovariance translation_invariant(const LatticeGeometry& lattice,
                                                    std::vector<Eigen::MatrixXd> table);

    const LatticeGeometry& lattice() const { return lattice_; }
    const std::vector<int>& sites() const { return sites_; }
    int modes() const { return int(sites_.size()); }
    bool lazy() const { return table_ != nullptr; }
    bool contains(int site) const;

    // Covariance block on the given sites, in the given order.
    Eigen::MatrixXd block(const std::vector<int>& sites) const;
    MajoranaCovariance restrict(const Region& region) const;
    // Dense matrix on sites(); built and cached for lazy covariances.
    const Eigen::MatrixXd& matrix() const;

private:
    LatticeGeometry lattice_;
    std::vector<int> sites_;
    mutable std::shared_ptr<Eigen::MatrixXd> dense_;
    std::shared_ptr<const std::vector<Eigen::MatrixXd>> table_;
    std::vector<int> position_;  // site -> row block, -1 if absent
};

// (i/4) g^T P g + c0 with P complex antisymmetric on the support sites.
// Hermitian iff P and c0 are real.
class QuadraticOperator {
public:
    QuadraticOperator() = default;
    QuadraticOperator(Region support, Eigen::MatrixXcd P, cplx c0 = 0.0);

    const Region& support() const { return support_; }
    const Eigen::MatrixXcd& matrix() const { return P_; }
    cplx offset() const { return c0_; }
    bool empty() const { return support_.empty(); }

    bool is_hermitian(double tol = 1e-12) const;
    Eigen::MatrixXd real_matrix() const { return P_.real(); }
    // P on a superset of the support, zero elsewhere.
    Eigen::MatrixXcd embedded(const std::vector<int>& sites) const;

    QuadraticOperator adjoint() const;
    QuadraticOperator operator+(const QuadraticOperator& o) const;
    QuadraticOperator operator-(const QuadraticOperator& o) const;
    QuadraticOperator operator*(cplx s) const;
    QuadraticOperator& operator+=(const QuadraticOperator& o);
    QuadraticOperator shifted(cplx dc) const { return QuadraticOperator(support_, P_, c0_ + dc); }

    // Modes clipped to |nu| = 1 - 1e-12 when built as a modular Hamiltonian.
    int clipped_modes = 0;

private:
    Region support_;
    Eigen::MatrixXcd P_;
    cplx c0_ = 0.0;
};

inline QuadraticOperator operator*(cplx s, const QuadraticOperator& q) { return q * s; }

// Majorana matrix G of H = sum_ij T_ij a_i^dag a_j + sum_ij (D_ij a_i^dag a_j^dag + h.c.) / 2,
// written as (i/4) g^T G g + const. T Hermitian, D antisymmetric.
Eigen::MatrixXd majorana_form(const Eigen::MatrixXcd& T, const Eigen::MatrixXcd& D, double* constant = nullptr);
// Real-space Majorana Hamiltonian of the p+ip model on the full lattice.
Eigen::MatrixXd bdg_hamiltonian(const BdGParams& params, const LatticeGeometry& lattice);
// Ground state of (i/4) g^T G g: Gamma = -G (-G^2)^(-1/2).
Eigen::MatrixXd gaussian_ground_state(const Eigen::MatrixXd& G, double gap_tol = 1e-10);

// Momentum-space construction along x; lazy covariance.
MajoranaCovariance ground_state_covariance(const BdGParams& params, const LatticeGeometry& lattice);
// Direct diagonalization of the full real-space Hamiltonian.
MajoranaCovariance ground_state_dense(const BdGParams& params, const LatticeGeometry& lattice);

// Symplectic eigenvalues nu_k in [0, 1], one per mode, ascending.
Eigen::VectorXd symplectic_spectrum(const Eigen::MatrixXd& M);
double entropy(const MajoranaCovariance& cov);
double entropy(const MajoranaCovariance& cov, const Region& region);

// Delta(B, C) = S_BC + S_C - S_B, or Delta(B, C, D) = S_BC + S_CD - S_B - S_D.
double axiom_residuals(const MajoranaCovariance& cov, const Region& B, const Region& C);
double axiom_residuals(const MajoranaCovariance& cov, const Region& B, const Region& C, const Region& D);

QuadraticOperator modular_hamiltonian(const MajoranaCovariance& cov, const Region& region);

// Thread-safe memo of modular Hamiltonians of one state.
class ModularCache {
public:
    explicit ModularCache(const MajoranaCovariance& cov) : cov_(cov) {}
    QuadraticOperator get(const Region& region);
    double expectation(const Region& region);  // = entropy

private:
    const MajoranaCovariance& cov_;
    std::mutex mutex_;
    std::map<Region, QuadraticOperator> ops_;
};

QuadraticOperator generator_from_spec(const MajoranaCovariance& cov, const GeneratorSpec& spec,
                                      ModularCache* cache = nullptr);

double expectation(const QuadraticOperator& q, const MajoranaCovariance& cov);
cplx complex_expectation(const QuadraticOperator& q, const MajoranaCovariance& cov);
double variance(const QuadraticOperator& q, const MajoranaCovariance& cov);
// The operator commutator [q1, q2]; its matrix is i [P1, P2].
QuadraticOperator commutator(const QuadraticOperator& q1, const QuadraticOperator& q2);
// i <[K_AB, K_BC]>.
double modular_commutator(const MajoranaCovariance& cov, const Region& A, const Region& B, const Region& C);

// exp(tG) for real antisymmetric G.
Eigen::MatrixXd orthogonal_flow(const Eigen::MatrixXd& G, double t);
// exp(G t) for many t from one eigendecomposition of -G^2.
class OrthogonalFlow {
public:
    explicit OrthogonalFlow(const Eigen::MatrixXd& G);
    Eigen::MatrixXd at(double t) const;

private:
    Eigen::MatrixXd G_, V_;
    Eigen::VectorXd w_;
};
// State e^{-i t q} |psi>, kept on sites() of cov (or on scope plus the generator support).
MajoranaCovariance evolve(const MajoranaCovariance& cov, const QuadraticOperator& q, double t);
MajoranaCovariance evolve(const MajoranaCovariance& cov, const QuadraticOperator& q, double t, const Region& scope);
std::vector<MajoranaCovariance> evolve(const MajoranaCovariance& cov, const QuadraticOperator& q,
                                       const std::vector<double>& times, const Region& scope);

// Pfaffian of a real antisymmetric matrix; for a pure covariance its sign is the fermion parity.
double pfaffian(const Eigen::MatrixXd& M);

// Root fidelity Tr sqrt(sqrt(rho) sigma sqrt(rho)).
double fidelity(const MajoranaCovariance& a, const MajoranaCovariance& b);
// |<psi1|psi2>| for pure states.
double global_overlap(const MajoranaCovariance& a, const MajoranaCovariance& b);

struct AlphaFit {
    double alpha = 0.0;       // slope-2 fit, 1 - F = alpha t^2 / 2
    double slope = 0.0;       // free log-log slope
    double intercept_alpha = 0.0;  // alpha from the free-slope intercept
};
AlphaFit fit_alpha_detailed(const std::vector<std::pair<double, double>>& samples);
double fit_alpha(const std::vector<std::pair<double, double>>& samples);
std::vector<double> default_alpha_times();

// Binary container: "MAJCOV01", uint64 header size, JSON header, row-major float64 payload.
void write_covariance(const std::string& path, const MajoranaCovariance& cov);
MajoranaCovariance read_covariance(const std::string& path);

}  // namespace edgevir
