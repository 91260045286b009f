#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <numeric>
#include <random>

#include "edgevir/exactdiag.hpp"
#include "edgevir/gaussian.hpp"

using namespace edgevir;

namespace {

struct Instance {
    LatticeGeometry L{12, 2};
    int n = 0;
    Eigen::MatrixXd H;
    DenseState psi;
    MajoranaCovariance cov;
};

Eigen::MatrixXd random_antisymmetric(int dim, std::mt19937& rng) {
    std::normal_distribution<double> nd;
    Eigen::MatrixXd A(dim, dim);
    for (int i = 0; i < dim; ++i)
        for (int j = 0; j < dim; ++j) A(i, j) = nd(rng);
    return A - A.transpose();
}

Instance random_instance(int n, std::mt19937& rng) {
    Instance in;
    in.n = n;
    in.H = random_antisymmetric(2 * n, rng);
    in.psi = dense_free_fermion_oracle(in.H);
    std::vector<int> sites(n);
    std::iota(sites.begin(), sites.end(), 0);
    in.cov = MajoranaCovariance(in.L, sites, gaussian_ground_state(in.H));
    return in;
}

Region random_region(const Instance& in, std::mt19937& rng, int min_size = 1, int max_size = -1) {
    if (max_size < 0) max_size = in.n - 1;
    for (;;) {
        std::vector<int> s;
        for (int i = 0; i < in.n; ++i)
            if (rng() % 2) s.push_back(i);
        if (int(s.size()) >= min_size && int(s.size()) <= max_size) return Region(in.L, s);
    }
}

Eigen::MatrixXcd exp_minus(const Eigen::MatrixXcd& K) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(0.5 * (K + K.adjoint()));
    Eigen::VectorXcd d = (-es.eigenvalues()).array().exp().cast<cplx>();
    return es.eigenvectors() * d.asDiagonal() * es.eigenvectors().adjoint();
}

double opnorm(const Eigen::MatrixXcd& A) { return Eigen::JacobiSVD<Eigen::MatrixXcd>(A).singularValues()[0]; }

GeneratorSpec random_spec(const Instance& in, std::mt19937& rng, int terms) {
    std::uniform_real_distribution<double> u(-1, 1);
    GeneratorSpec g;
    // at most half the modes, so the reduced state has full rank and K is finite
    for (int k = 0; k < terms; ++k) g.add(u(rng), random_region(in, rng, 1, in.n / 2), rng() % 2);
    return g;
}

}  // namespace

TEST_CASE("conventions on one mode") {
    // H = eps a^dag a  ->  G_01 = eps, ground state Gamma_01 = -1.
    Eigen::MatrixXcd T(1, 1), D = Eigen::MatrixXcd::Zero(1, 1);
    T(0, 0) = 2.0;
    double c = 0;
    Eigen::MatrixXd G = majorana_form(T, D, &c);
    CHECK(G(0, 1) == doctest::Approx(2.0));
    CHECK(c == doctest::Approx(1.0));
    Eigen::MatrixXd Gam = gaussian_ground_state(G);
    CHECK(Gam(0, 1) == doctest::Approx(-1.0));
    auto psi = dense_free_fermion_oracle(G);
    CHECK(std::abs(psi.amplitudes[0]) == doctest::Approx(1.0));
    CHECK_THROWS_AS(gaussian_ground_state(Eigen::MatrixXd::Zero(2, 2)), GaplessGroundState);
}

TEST_CASE("oracle: covariance, entropy and modular Hamiltonian") {
    std::mt19937 rng(11);
    for (int trial = 0; trial < 12; ++trial) {
        auto in = random_instance(3 + trial % 4, rng);
        Eigen::MatrixXcd rho = in.psi.amplitudes * in.psi.amplitudes.adjoint();
        CHECK((dense_covariance(rho) - in.cov.matrix()).cwiseAbs().maxCoeff() < 1e-10);
        CHECK(entropy(in.cov) < 1e-9);
        Region A = random_region(in, rng);
        auto rA = reduced_density_matrix(in.psi, A.sites());
        CHECK(std::abs(entropy(in.cov, A) - dense_entropy(rA)) < 1e-9);
        // Restriction commutes with the partial trace.
        CHECK((dense_covariance(rA.matrix) - in.cov.block(A.sites())).cwiseAbs().maxCoeff() < 1e-10);
        auto K = modular_hamiltonian(in.cov, A);
        CHECK(std::abs(expectation(K, in.cov) - entropy(in.cov, A)) < 1e-9);
        Eigen::MatrixXcd e = exp_minus(quadratic_matrix(K.matrix(), K.offset()));
        CHECK(opnorm(e - rA.matrix) < 1e-8);
    }
}

TEST_CASE("oracle: expectation, variance, commutators") {
    std::mt19937 rng(5);
    for (int trial = 0; trial < 10; ++trial) {
        auto in = random_instance(4 + trial % 3, rng);
        GeneratorSpec s1 = random_spec(in, rng, 3), s2 = random_spec(in, rng, 3), s3 = random_spec(in, rng, 2);
        auto q1 = generator_from_spec(in.cov, s1), q2 = generator_from_spec(in.cov, s2), q3 = generator_from_spec(in.cov, s3);
        auto d1 = dense_generator(in.psi, s1), d2 = dense_generator(in.psi, s2), d3 = dense_generator(in.psi, s3);
        CHECK(std::abs(expectation(q1, in.cov) - dense_expectation(in.psi, d1).real()) < 1e-8);
        CHECK(std::abs(variance(q1, in.cov) - dense_variance(in.psi, d1)) < 1e-8);
        cplx cg = complex_expectation(commutator(q1, q2), in.cov);
        cplx cd = dense_commutator_expectation(in.psi, d1, d2);
        CHECK(std::abs(cg - cd) < 1e-8);
        // Complex combinations and nested brackets.
        auto L = q1 + q2 * cplx(0, 1), Lm = q1 - q2 * cplx(0, 1);
        auto dL = d1 + d2 * cplx(0, 1), dLm = d1 + d2 * cplx(0, -1);
        CHECK(std::abs(complex_expectation(commutator(L, Lm), in.cov) - dense_commutator_expectation(in.psi, dL, dLm)) < 1e-8);
        cplx dd = complex_expectation(commutator(commutator(L, q3), Lm), in.cov);
        CHECK(std::abs(dd - dense_double_commutator_expectation(in.psi, dL, d3, dLm)) < 1e-7);
        // Modular commutator.
        Region A = Region(in.L, {0}), B = Region(in.L, {1, 2}), C = Region(in.L, {3});
        GeneratorSpec kab, kbc;
        kab.add(1, A | B);
        kbc.add(1, B | C);
        double J = modular_commutator(in.cov, A, B, C);
        CHECK(std::abs(J - (cplx(0, 1) * dense_commutator_expectation(in.psi, dense_generator(in.psi, kab),
                                                                      dense_generator(in.psi, kbc)))
                               .real()) < 1e-8);
        CHECK(std::abs(J + modular_commutator(in.cov, C, B, A)) < 1e-10);
    }
}

TEST_CASE("oracle: fidelity and evolution") {
    std::mt19937 rng(19);
    for (int trial = 0; trial < 10; ++trial) {
        const int n = 4 + trial % 3;
        auto a = random_instance(n, rng), b = random_instance(n, rng);
        Region X = random_region(a, rng, 2);
        auto ra = reduced_density_matrix(a.psi, X.sites()), rb = reduced_density_matrix(b.psi, X.sites());
        CHECK(std::abs(fidelity(a.cov.restrict(X), b.cov.restrict(X)) - dense_fidelity(a.psi, b.psi, X.sites())) < 1e-8);
        CHECK(std::abs(dense_fidelity(ra.matrix, rb.matrix) - dense_fidelity(a.psi, b.psi, X.sites())) < 1e-6);
        CHECK(std::abs(fidelity(a.cov.restrict(X), a.cov.restrict(X)) - 1) < 1e-10);
        CHECK(std::abs(global_overlap(a.cov, b.cov) - std::abs(a.psi.amplitudes.dot(b.psi.amplitudes))) < 1e-8);
        CHECK(std::abs(fidelity(a.cov, b.cov) - global_overlap(a.cov, b.cov)) < 1e-8);

        GeneratorSpec s = random_spec(a, rng, 3);
        auto q = generator_from_spec(a.cov, s);
        double t = 0.3 + 0.2 * trial;
        auto ev = evolve(a.cov, q, t);
        Eigen::MatrixXd M = ev.matrix();
        CHECK((M * M.transpose() - Eigen::MatrixXd::Identity(M.rows(), M.rows())).cwiseAbs().maxCoeff() < 1e-9);
        std::vector<int> all(n);
        std::iota(all.begin(), all.end(), 0);
        Eigen::MatrixXcd Hd = quadratic_matrix(q.embedded(all), q.offset());
        auto psit = dense_evolve(a.psi, Hd, t);
        CHECK((dense_covariance(psit.amplitudes * psit.amplitudes.adjoint()) - M).cwiseAbs().maxCoeff() < 1e-8);
        auto rt = reduced_density_matrix(psit, X.sites());
        CHECK(std::abs(fidelity(a.cov.restrict(X), ev.restrict(X)) - dense_fidelity(a.psi, psit, X.sites())) < 1e-8);
        auto back = evolve(ev, q, -t);
        CHECK((back.matrix() - a.cov.matrix()).cwiseAbs().maxCoeff() < 1e-10);
        CHECK((evolve(a.cov, q, 0.0).matrix() - a.cov.matrix()).cwiseAbs().maxCoeff() < 1e-14);
    }
}

TEST_CASE("trivial limits") {
    std::mt19937 rng(3);
    auto in = random_instance(4, rng);
    CHECK(variance(QuadraticOperator().shifted(2.5), in.cov) == 0.0);
    CHECK(generator_from_spec(in.cov, GeneratorSpec{}).empty());
    GeneratorSpec zero;
    Region A(in.L, {0, 2});
    zero.add(1, A);
    zero.add(-1, A);
    auto z = generator_from_spec(in.cov, zero);
    CHECK(z.matrix().cwiseAbs().maxCoeff() < 1e-14);
    auto K = modular_hamiltonian(in.cov, A);
    CHECK(std::abs(complex_expectation(commutator(K, K), in.cov)) < 1e-12);

    // Maximally mixed mode: K = ln 2.
    LatticeGeometry L(4, 2);
    MajoranaCovariance mixed(L, {0}, Eigen::MatrixXd::Zero(2, 2));
    auto Km = modular_hamiltonian(mixed, Region(L, {0}));
    CHECK(Km.matrix().cwiseAbs().maxCoeff() < 1e-12);
    CHECK(Km.offset().real() == doctest::Approx(std::log(2.0)));
    // Two-mode maximally entangled pair.
    Eigen::MatrixXd bell = Eigen::MatrixXd::Zero(4, 4);
    bell(0, 3) = 1;
    bell(3, 0) = -1;
    bell(1, 2) = -1;
    bell(2, 1) = 1;
    MajoranaCovariance pair(L, {0, 1}, bell);
    CHECK(entropy(pair) < 1e-9);
    CHECK(entropy(pair, Region(L, {0})) == doctest::Approx(std::log(2.0)));
    // Orthogonal pure states.
    Eigen::MatrixXd up = Eigen::MatrixXd::Zero(2, 2);
    up(0, 1) = 1;
    up(1, 0) = -1;
    MajoranaCovariance e(L, {0}, up), f(L, {0}, -up);
    CHECK(global_overlap(e, f) < 1e-12);
    CHECK(fidelity(e, f) < 1e-12);
}

TEST_CASE("fit_alpha") {
    std::vector<std::pair<double, double>> s;
    for (double t : default_alpha_times()) s.push_back({t, 1 - t * t});
    auto fit = fit_alpha_detailed(s);
    CHECK(fit.alpha == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(fit.slope == doctest::Approx(2.0).epsilon(1e-12));
    std::vector<std::pair<double, double>> flat;
    for (double t : default_alpha_times()) flat.push_back({t, 1.0});
    CHECK_THROWS_AS(fit_alpha(flat), FitDiagnostics);
    CHECK_THROWS_AS(fit_alpha({{0.01, 0.9}, {0.02, 0.95}, {0.03, 0.8}, {0.04, 0.7}}), FitDiagnostics);
}

TEST_CASE("p+ip ground state") {
    BdGParams p;
    LatticeGeometry L(12, 6);
    auto lazy = ground_state_covariance(p, L);
    auto dense = ground_state_dense(p, L);
    CHECK(lazy.lazy());
    CHECK((lazy.matrix() - dense.matrix()).cwiseAbs().maxCoeff() < 1e-10);
    const Eigen::MatrixXd& M = dense.matrix();
    CHECK((M * M.transpose() - Eigen::MatrixXd::Identity(M.rows(), M.rows())).cwiseAbs().maxCoeff() < 1e-9);
    Region r = Region::rectangle(L, 3, 4, 1, 3);
    CHECK((lazy.restrict(r).matrix() - dense.restrict(r).matrix()).cwiseAbs().maxCoeff() < 1e-10);

    // Empty band: product of identical site blocks.
    BdGParams empty = p;
    empty.mu = -50;
    auto prod = ground_state_covariance(empty, L);
    Eigen::MatrixXd P = prod.block(r.sites());
    for (Eigen::Index i = 0; i < P.rows(); i += 2) {
        CHECK(P(i, i + 1) == doctest::Approx(-1.0).epsilon(1e-2));
        if (i >= 2) CHECK(P.block(i, 0, 2, 2).cwiseAbs().maxCoeff() < 0.05);
    }
    // Entropy additivity on a product covariance.
    Eigen::MatrixXd B = Eigen::MatrixXd::Zero(8, 8);
    std::mt19937 rng(2);
    auto in1 = random_instance(2, rng), in2 = random_instance(2, rng);
    (void)in2;
    Eigen::MatrixXd blk = 0.6 * in1.cov.matrix();
    B.topLeftCorner(4, 4) = blk;
    B.bottomRightCorner(4, 4) = 0.3 * in1.cov.matrix();
    LatticeGeometry L4(4, 2);
    MajoranaCovariance pc(L4, {0, 1, 2, 3}, B);
    CHECK(std::abs(entropy(pc) - entropy(pc, Region(L4, {0, 1})) - entropy(pc, Region(L4, {2, 3}))) < 1e-10);

    // Chain at Delta = 0 against the dense oracle.
    BdGParams chain{1.0, 0.0, 2.0, {0.0, 1.57079632679489661923}};
    LatticeGeometry C(4, 2);
    auto gc = ground_state_covariance(chain, C);
    auto psi = dense_free_fermion_oracle(bdg_hamiltonian(chain, C));
    CHECK((dense_covariance(psi.amplitudes * psi.amplitudes.adjoint()) - gc.matrix()).cwiseAbs().maxCoeff() < 1e-10);

    BdGParams gapless = p;
    gapless.mu = 1.0;
    gapless.Delta = 0.0;
    CHECK_THROWS_AS(ground_state_covariance(gapless, LatticeGeometry(8, 2, XBoundary::periodic)), GaplessGroundState);
}

TEST_CASE("covariance container round trip") {
    BdGParams p;
    LatticeGeometry L(8, 4);
    auto cov = ground_state_covariance(p, L).restrict(Region::rectangle(L, 1, 3, 0, 2));
    std::string path = "test_cov.bin";
    write_covariance(path, cov);
    auto back = read_covariance(path);
    CHECK(back.sites() == cov.sites());
    CHECK(back.lattice() == cov.lattice());
    CHECK((back.matrix() - cov.matrix()).cwiseAbs().maxCoeff() == 0.0);
    std::remove(path.c_str());
}
