#pragma once

#include <complex>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "edgevir/geometry.hpp"

namespace edgevir {

using cplx = std::complex<double>;

// Bit j of a basis index is the state of unit j (qubit up, or mode occupied).
// Fermionic states use Jordan-Wigner ordering of the modes.
struct DenseState {
    int n = 0;
    bool fermionic = false;
    Eigen::VectorXcd amplitudes;
};

// Operator on the units in `support` (sorted); bit k of the local index is support[k].
// For fermions the local basis is the Jordan-Wigner basis of the support modes in order.
struct DenseOperator {
    std::vector<int> support;
    Eigen::MatrixXcd matrix;
};

struct LadderSpec {
    int legs = 2;
    int rungs = 8;
    std::vector<std::pair<double, double>> coords;  // (theta, phi) per qubit, index leg * rungs + k

    static LadderSpec standard(int legs);
};

// Unnormalized amplitudes delta(sum s = 0) prod_{n<m} (z_n - z_m)^{s_n s_m / 2}, principal branch, then normalized.
DenseState semion_state(const LadderSpec& ladder);
DenseState semion_state(const std::vector<cplx>& z);
cplx stereographic(double theta, double phi);

// Qubit leg * rungs + k sits at (x = k, y = leg).
LatticeGeometry ladder_lattice(const LadderSpec& ladder);
// Twisted regions X/Y R/L j for mode n, named as in twist_preset. Every leg belongs to the squares;
// upper legs are displaced by -/+ Lx/(4n), and the staggered middle leg of a 3-leg ladder by -lx, lx - 1.
RegionSet ladder_twist_preset(const LadderSpec& ladder, int n = 2);

DenseOperator reduced_density_matrix(const DenseState& state, const std::vector<int>& support);
// -ln rho on eigenvalues above cutoff, zero on the rest.
DenseOperator modular_hamiltonian_dense(const DenseOperator& rho, double cutoff = 1e-12);
double dense_entropy(const DenseOperator& rho, double cutoff = 1e-14);

Eigen::VectorXcd apply(const DenseOperator& op, const DenseState& state, const Eigen::VectorXcd& v);
Eigen::VectorXcd apply(const DenseOperator& op, const DenseState& state);
// The operator on all units as a 2^n matrix (n <= 12).
Eigen::MatrixXcd embed(const DenseOperator& op, const DenseState& state);

// sum_A c_A (K_A - s_A) with s_A = <K_A> for flagged terms; action built from local operators.
class DenseGenerator {
public:
    struct Term {
        cplx coefficient;
        DenseOperator op;
    };

    DenseGenerator() = default;
    void add(cplx c, DenseOperator op) { terms_.push_back({c, std::move(op)}); }
    void add_constant(cplx c) { constant_ += c; }
    DenseGenerator adjoint() const;
    DenseGenerator operator+(const DenseGenerator& o) const;
    DenseGenerator operator*(cplx s) const;

    Eigen::VectorXcd apply(const DenseState& state, const Eigen::VectorXcd& v) const;
    Eigen::MatrixXcd matrix(const DenseState& state) const;
    const std::vector<Term>& terms() const { return terms_; }
    cplx constant() const { return constant_; }

private:
    std::vector<Term> terms_;
    cplx constant_ = 0.0;
};

// Region sites are unit indices.
DenseGenerator dense_generator(const DenseState& state, const GeneratorSpec& spec);

cplx dense_expectation(const DenseState& state, const DenseGenerator& g);
double dense_variance(const DenseState& state, const DenseGenerator& g);
// <[X, Y]>
cplx dense_commutator_expectation(const DenseState& state, const DenseGenerator& X, const DenseGenerator& Y);
// <[[X, Y], Z]>
cplx dense_double_commutator_expectation(const DenseState& state, const DenseGenerator& X, const DenseGenerator& Y,
                                         const DenseGenerator& Z);

double dense_fidelity(const Eigen::MatrixXcd& rho, const Eigen::MatrixXcd& sigma);
// Same quantity for the reductions of two pure states to `support`, computed from amplitude factors.
double dense_fidelity(const DenseState& a, const DenseState& b, const std::vector<int>& support);

// Free-fermion oracle on n <= 12 modes.
Eigen::MatrixXcd majorana_matrix(int n, int a);
Eigen::MatrixXcd quadratic_matrix(const Eigen::MatrixXcd& P, cplx c0 = 0.0);
DenseState dense_free_fermion_oracle(const Eigen::MatrixXd& G);
Eigen::MatrixXd dense_covariance(const Eigen::MatrixXcd& rho);
DenseState dense_evolve(const DenseState& state, const Eigen::MatrixXcd& H, double t);

}  // namespace edgevir
