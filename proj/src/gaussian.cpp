#include "edgevir/gaussian.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <functional>
#include <numeric>

#include <json.hpp>

namespace edgevir {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kNuMax = 1.0 - 1e-12;

std::vector<int> positions_in(const std::vector<int>& sub, const std::vector<int>& super) {
    std::vector<int> out;
    out.reserve(sub.size());
    for (int s : sub) {
        auto it = std::lower_bound(super.begin(), super.end(), s);
        if (it == super.end() || *it != s) throw std::out_of_range("site outside the index space");
        out.push_back(int(it - super.begin()));
    }
    return out;
}

// Majorana rows of the given site positions.
std::vector<int> majorana_rows(const std::vector<int>& pos) {
    std::vector<int> rows;
    rows.reserve(2 * pos.size());
    for (int p : pos) {
        rows.push_back(2 * p);
        rows.push_back(2 * p + 1);
    }
    return rows;
}

std::vector<int> merge_sites(const std::vector<int>& a, const std::vector<int>& b) {
    std::vector<int> out;
    std::set_union(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
    return out;
}

Region union_support(const Region& a, const Region& b) {
    if (a.empty()) return b;
    if (b.empty()) return a;
    return a | b;
}

double log2cosh(double x) {
    x = std::abs(x);
    return x + std::log1p(std::exp(-2 * x));
}

double binary_entropy_nu(double nu) {
    double p = (1 + nu) / 2, q = (1 - nu) / 2;
    double s = 0;
    if (p > 0) s -= p * std::log(p);
    if (q > 0) s -= q * std::log(q);
    return s;
}

void require_antisymmetric(const Eigen::MatrixXd& M, const char* who) {
    double scale = std::max(1.0, M.cwiseAbs().maxCoeff());
    if ((M + M.transpose()).cwiseAbs().maxCoeff() > 1e-10 * scale)
        throw std::invalid_argument(std::string(who) + ": matrix is not antisymmetric");
}

struct TermMatrices {
    Eigen::MatrixXcd T;
    Eigen::MatrixXcd D;
};

int bdg_site(const LatticeGeometry& L, int x, int y) { return y * L.Lx + x; }

// Hopping and pairing of the p+ip model; x bonds leaving column x_last wrap with sign.
void add_bdg_terms(const BdGParams& p, int Ly, int columns, bool wrap, double wrap_sign,
                   const std::function<int(int, int)>& site, TermMatrices& m, int bond_columns) {
    const cplx ph_x = std::polar(1.0, p.A[0]);
    const cplx ph_y = std::polar(1.0, p.A[1]);
    auto bond = [&](int i, int j, double s, cplx phase) {
        m.T(i, j) += -p.t * s;
        m.T(j, i) += -p.t * s;
        m.D(i, j) += p.Delta * phase * s;
        m.D(j, i) -= p.Delta * phase * s;
    };
    for (int x = 0; x < bond_columns; ++x)
        for (int y = 0; y < Ly; ++y) {
            int s = site(x, y);
            m.T(s, s) += -(p.mu - 4 * p.t);
            if (y + 1 < Ly) bond(s, site(x, y + 1), 1.0, ph_y);
            if (x + 1 < columns)
                bond(s, site(x + 1, y), 1.0, ph_x);
            else if (wrap)
                bond(s, site(0, y), wrap_sign, ph_x);
        }
}

}  // namespace

// ---------------------------------------------------------------- covariance

MajoranaCovariance::MajoranaCovariance(const LatticeGeometry& lattice, std::vector<int> sites, Eigen::MatrixXd M)
    : lattice_(lattice), sites_(std::move(sites)) {
    if (!std::is_sorted(sites_.begin(), sites_.end()) ||
        std::adjacent_find(sites_.begin(), sites_.end()) != sites_.end())
        throw std::invalid_argument("MajoranaCovariance: sites must be sorted and unique");
    if (M.rows() != 2 * Eigen::Index(sites_.size()) || M.cols() != M.rows())
        throw std::invalid_argument("MajoranaCovariance: matrix size does not match the site list");
    require_antisymmetric(M, "MajoranaCovariance");
    dense_ = std::make_shared<Eigen::MatrixXd>(std::move(M));
    position_.assign(lattice_.sites(), -1);
    for (size_t p = 0; p < sites_.size(); ++p) {
        if (sites_[p] < 0 || sites_[p] >= lattice_.sites()) throw std::out_of_range("MajoranaCovariance: site out of range");
        position_[sites_[p]] = int(p);
    }
}

MajoranaCovariance MajoranaCovariance::translation_invariant(const LatticeGeometry& lattice,
                                                             std::vector<Eigen::MatrixXd> table) {
    if (table.size() != size_t(2 * lattice.Lx - 1))
        throw std::invalid_argument("translation_invariant: table needs 2 Lx - 1 entries");
    for (const auto& t : table)
        if (t.rows() != 2 * lattice.Ly || t.cols() != 2 * lattice.Ly)
            throw std::invalid_argument("translation_invariant: blocks must be 2 Ly square");
    MajoranaCovariance c;
    c.lattice_ = lattice;
    c.sites_.resize(lattice.sites());
    std::iota(c.sites_.begin(), c.sites_.end(), 0);
    c.position_ = c.sites_;
    c.table_ = std::make_shared<const std::vector<Eigen::MatrixXd>>(std::move(table));
    return c;
}

bool MajoranaCovariance::contains(int site) const {
    return site >= 0 && site < int(position_.size()) && position_[site] >= 0;
}

Eigen::MatrixXd MajoranaCovariance::block(const std::vector<int>& sites) const {
    const Eigen::Index n = Eigen::Index(sites.size());
    for (int s : sites)
        if (!contains(s)) throw std::out_of_range("MajoranaCovariance::block: site not in scope");
    if (!table_) {
        std::vector<int> rows;
        rows.reserve(2 * n);
        for (int s : sites) {
            rows.push_back(2 * position_[s]);
            rows.push_back(2 * position_[s] + 1);
        }
        return (*dense_)(rows, rows);
    }
    const auto& tab = *table_;
    Eigen::MatrixXd out(2 * n, 2 * n);
    for (Eigen::Index i = 0; i < n; ++i) {
        int xi = lattice_.x_of(sites[i]), yi = lattice_.y_of(sites[i]);
        for (Eigen::Index j = 0; j < n; ++j) {
            int xj = lattice_.x_of(sites[j]), yj = lattice_.y_of(sites[j]);
            out.block<2, 2>(2 * i, 2 * j) = tab[xi - xj + lattice_.Lx - 1].block<2, 2>(2 * yi, 2 * yj);
        }
    }
    return out;
}

MajoranaCovariance MajoranaCovariance::restrict(const Region& region) const {
    return MajoranaCovariance(lattice_, region.sites(), block(region.sites()));
}

const Eigen::MatrixXd& MajoranaCovariance::matrix() const {
    if (!dense_) dense_ = std::make_shared<Eigen::MatrixXd>(block(sites_));
    return *dense_;
}

// ---------------------------------------------------------------- operators

QuadraticOperator::QuadraticOperator(Region support, Eigen::MatrixXcd P, cplx c0)
    : support_(std::move(support)), P_(std::move(P)), c0_(c0) {
    if (P_.rows() != 2 * Eigen::Index(support_.size()) || P_.cols() != P_.rows())
        throw std::invalid_argument("QuadraticOperator: matrix size does not match the support");
}

bool QuadraticOperator::is_hermitian(double tol) const {
    double scale = std::max(1.0, P_.size() ? P_.cwiseAbs().maxCoeff() : 0.0);
    bool real = P_.size() == 0 || P_.imag().cwiseAbs().maxCoeff() <= tol * scale;
    return real && std::abs(c0_.imag()) <= tol * std::max(1.0, std::abs(c0_));
}

Eigen::MatrixXcd QuadraticOperator::embedded(const std::vector<int>& sites) const {
    Eigen::MatrixXcd out = Eigen::MatrixXcd::Zero(2 * sites.size(), 2 * sites.size());
    if (support_.empty()) return out;
    auto rows = majorana_rows(positions_in(support_.sites(), sites));
    out(rows, rows) = P_;
    return out;
}

QuadraticOperator QuadraticOperator::adjoint() const {
    QuadraticOperator q(support_, P_.conjugate(), std::conj(c0_));
    q.clipped_modes = clipped_modes;
    return q;
}

QuadraticOperator& QuadraticOperator::operator+=(const QuadraticOperator& o) {
    if (o.support_.empty()) {
        c0_ += o.c0_;
        return *this;
    }
    if (support_.empty()) {
        cplx c = c0_;
        *this = o;
        c0_ += c;
        return *this;
    }
    if (o.support_.sites() == support_.sites()) {
        P_ += o.P_;
    } else {
        Region u = support_ | o.support_;
        Eigen::MatrixXcd P = embedded(u.sites());
        P += o.embedded(u.sites());
        support_ = std::move(u);
        P_ = std::move(P);
    }
    c0_ += o.c0_;
    clipped_modes += o.clipped_modes;
    return *this;
}

QuadraticOperator QuadraticOperator::operator+(const QuadraticOperator& o) const {
    QuadraticOperator out = *this;
    out += o;
    return out;
}

QuadraticOperator QuadraticOperator::operator-(const QuadraticOperator& o) const { return *this + o * cplx(-1.0); }

QuadraticOperator QuadraticOperator::operator*(cplx s) const {
    QuadraticOperator q(support_, P_ * s, c0_ * s);
    q.clipped_modes = clipped_modes;
    return q;
}

// ---------------------------------------------------------------- Hamiltonians

Eigen::MatrixXd majorana_form(const Eigen::MatrixXcd& T, const Eigen::MatrixXcd& D, double* constant) {
    const Eigen::Index n = T.rows();
    if (T.cols() != n || D.rows() != n || D.cols() != n) throw std::invalid_argument("majorana_form: size mismatch");
    // a_j^dag = (g_{2j} - i g_{2j+1}) / 2, a_j = (g_{2j} + i g_{2j+1}) / 2.
    Eigen::MatrixXcd U = Eigen::MatrixXcd::Zero(2 * n, n), V = Eigen::MatrixXcd::Zero(2 * n, n);
    const cplx I(0, 1);
    for (Eigen::Index j = 0; j < n; ++j) {
        U(2 * j, j) = 0.5;
        U(2 * j + 1, j) = -0.5 * I;
        V(2 * j, j) = 0.5;
        V(2 * j + 1, j) = 0.5 * I;
    }
    Eigen::MatrixXcd M = U * T * V.transpose() + 0.5 * U * D * U.transpose() + 0.5 * V * D.adjoint() * V.transpose();
    Eigen::MatrixXcd G = -2.0 * I * (M - M.transpose());
    if (G.imag().cwiseAbs().maxCoeff() > 1e-10 * std::max(1.0, G.cwiseAbs().maxCoeff()))
        throw std::invalid_argument("majorana_form: Hamiltonian is not Hermitian");
    if (constant) *constant = M.trace().real();
    return G.real();
}

Eigen::MatrixXd bdg_hamiltonian(const BdGParams& params, const LatticeGeometry& L) {
    const int n = L.sites();
    TermMatrices m{Eigen::MatrixXcd::Zero(n, n), Eigen::MatrixXcd::Zero(n, n)};
    double sign = L.x_boundary == XBoundary::antiperiodic ? -1.0 : 1.0;
    add_bdg_terms(params, L.Ly, L.Lx, true, sign, [&](int x, int y) { return bdg_site(L, x, y); }, m, L.Lx);
    return majorana_form(m.T, m.D);
}

Eigen::MatrixXd gaussian_ground_state(const Eigen::MatrixXd& G, double gap_tol) {
    require_antisymmetric(G, "gaussian_ground_state");
    // Gamma = i sign(iG); the eigenvectors of iG keep full accuracy for small gaps, unlike those of -G^2.
    const cplx I(0.0, 1.0);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(I * G.cast<cplx>());
    const Eigen::VectorXd& lam = es.eigenvalues();
    if (lam.size() && lam.cwiseAbs().minCoeff() < gap_tol)
        throw GaplessGroundState("gaussian_ground_state: zero mode in the spectrum");
    Eigen::VectorXcd s = lam.unaryExpr([](double x) { return x > 0 ? 1.0 : -1.0; }).cast<cplx>();
    Eigen::MatrixXd Gam = (I * (es.eigenvectors() * s.asDiagonal() * es.eigenvectors().adjoint())).real();
    return 0.5 * (Gam - Gam.transpose());
}

MajoranaCovariance ground_state_dense(const BdGParams& params, const LatticeGeometry& lattice) {
    std::vector<int> sites(lattice.sites());
    std::iota(sites.begin(), sites.end(), 0);
    return MajoranaCovariance(lattice, sites, gaussian_ground_state(bdg_hamiltonian(params, lattice)));
}

MajoranaCovariance ground_state_covariance(const BdGParams& params, const LatticeGeometry& L) {
    const int Ly = L.Ly, Lx = L.Lx, b = 2 * Ly;
    // Terms of column 0, bonds towards column 1.
    TermMatrices m{Eigen::MatrixXcd::Zero(2 * Ly, 2 * Ly), Eigen::MatrixXcd::Zero(2 * Ly, 2 * Ly)};
    add_bdg_terms(params, Ly, 2, false, 1.0, [&](int x, int y) { return x * Ly + y; }, m, 1);
    Eigen::MatrixXd G2 = majorana_form(m.T, m.D);
    const Eigen::MatrixXd g0 = G2.topLeftCorner(b, b);
    const Eigen::MatrixXd gm = G2.topRightCorner(b, b);    // g_{-1}: x - x' = -1
    const Eigen::MatrixXd gp = G2.bottomLeftCorner(b, b);  // g_{+1}

    const double shift = L.x_boundary == XBoundary::antiperiodic ? 0.5 : 0.0;
    std::vector<Eigen::MatrixXcd> gk(Lx);
    std::vector<double> ks(Lx);
    const cplx I(0, 1);
    for (int q = 0; q < Lx; ++q) {
        double k = 2 * kPi * (q + shift) / Lx;
        ks[q] = k;
        Eigen::MatrixXcd h = g0.cast<cplx>() + gp.cast<cplx>() * std::exp(-I * k) + gm.cast<cplx>() * std::exp(I * k);
        Eigen::MatrixXcd H = I * h;
        H = 0.5 * (H + H.adjoint()).eval();
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(H);
        const Eigen::VectorXd& e = es.eigenvalues();
        if (e.cwiseAbs().minCoeff() < 1e-10)
            throw GaplessGroundState("ground_state_covariance: BdG gap closes at k = " + std::to_string(k));
        Eigen::VectorXd sg = e.unaryExpr([](double v) { return v > 0 ? 1.0 : -1.0; });
        gk[q] = I * (es.eigenvectors() * sg.asDiagonal() * es.eigenvectors().adjoint());
    }
    std::vector<Eigen::MatrixXd> table(2 * Lx - 1);
    for (int d = -(Lx - 1); d <= Lx - 1; ++d) {
        Eigen::MatrixXcd acc = Eigen::MatrixXcd::Zero(b, b);
        for (int q = 0; q < Lx; ++q) acc += gk[q] * std::exp(I * (ks[q] * d));
        table[d + Lx - 1] = acc.real() / Lx;
    }
    return MajoranaCovariance::translation_invariant(L, std::move(table));
}

// ---------------------------------------------------------------- entropies

Eigen::VectorXd symplectic_spectrum(const Eigen::MatrixXd& M) {
    require_antisymmetric(M, "symplectic_spectrum");
    Eigen::MatrixXd S = -(M * M);
    S = 0.5 * (S + S.transpose());
    Eigen::VectorXd lam = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(S, Eigen::EigenvaluesOnly).eigenvalues();
    Eigen::VectorXd nu(lam.size() / 2);
    for (Eigen::Index k = 0; k < nu.size(); ++k)
        nu[k] = std::sqrt(std::clamp(0.5 * (lam[2 * k] + lam[2 * k + 1]), 0.0, 1.0));
    return nu;
}

double entropy(const MajoranaCovariance& cov) {
    Eigen::VectorXd nu = symplectic_spectrum(cov.matrix());
    double s = 0;
    for (double v : nu) s += binary_entropy_nu(std::min(v, kNuMax));
    return s;
}

double entropy(const MajoranaCovariance& cov, const Region& region) {
    if (region.empty()) return 0.0;
    return entropy(cov.restrict(region));
}

double axiom_residuals(const MajoranaCovariance& cov, const Region& B, const Region& C) {
    if (!(B & C).empty()) throw std::invalid_argument("axiom_residuals: regions overlap");
    return entropy(cov, B | C) + entropy(cov, C) - entropy(cov, B);
}

double axiom_residuals(const MajoranaCovariance& cov, const Region& B, const Region& C, const Region& D) {
    if (!(B & C).empty() || !(B & D).empty() || !(C & D).empty())
        throw std::invalid_argument("axiom_residuals: regions overlap");
    return entropy(cov, B | C) + entropy(cov, C | D) - entropy(cov, B) - entropy(cov, D);
}

// ---------------------------------------------------------------- modular Hamiltonians

QuadraticOperator modular_hamiltonian(const MajoranaCovariance& cov, const Region& region) {
    if (region.empty()) throw std::invalid_argument("modular_hamiltonian: empty region");
    Eigen::MatrixXd Gam = cov.block(region.sites());
    Eigen::MatrixXd S = -(Gam * Gam);
    S = 0.5 * (S + S.transpose());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(S);
    const Eigen::VectorXd& lam = es.eigenvalues();
    Eigen::VectorXd phi(lam.size());
    double c0 = 0;
    int clipped = 0;
    for (Eigen::Index i = 0; i < lam.size(); ++i) {
        double l = lam[i];
        if (l > kNuMax * kNuMax) {
            ++clipped;
            l = kNuMax * kNuMax;
        }
        double nu = std::sqrt(std::max(l, 0.0));
        double eps = 2 * std::atanh(nu);
        phi[i] = nu < 1e-8 ? -2.0 : -eps / nu;
        c0 += 0.5 * log2cosh(eps / 2);
    }
    const Eigen::MatrixXd& V = es.eigenvectors();
    Eigen::MatrixXd G = Gam * (V * phi.asDiagonal() * V.transpose());
    G = 0.5 * (G - G.transpose()).eval();
    QuadraticOperator q(region, G.cast<cplx>(), c0);
    q.clipped_modes = clipped / 2;
    return q;
}

QuadraticOperator ModularCache::get(const Region& region) {
    {
        std::lock_guard<std::mutex> lock(mutex_);
        auto it = ops_.find(region);
        if (it != ops_.end()) return it->second;
    }
    QuadraticOperator q = modular_hamiltonian(cov_, region);
    std::lock_guard<std::mutex> lock(mutex_);
    return ops_.emplace(region, std::move(q)).first->second;
}

double ModularCache::expectation(const Region& region) { return edgevir::expectation(get(region), cov_); }

QuadraticOperator generator_from_spec(const MajoranaCovariance& cov, const GeneratorSpec& spec, ModularCache* cache) {
    std::vector<int> sites;
    for (const auto& term : spec.terms) sites = merge_sites(sites, term.region.sites());
    if (sites.empty()) return QuadraticOperator();
    Region support(spec.terms.front().region.lattice(), sites);
    Eigen::MatrixXcd P = Eigen::MatrixXcd::Zero(2 * sites.size(), 2 * sites.size());
    cplx c0 = 0;
    int clipped = 0;
    for (const auto& term : spec.terms) {
        if (term.region.empty()) continue;
        QuadraticOperator K = cache ? cache->get(term.region) : modular_hamiltonian(cov, term.region);
        auto rows = majorana_rows(positions_in(term.region.sites(), sites));
        P(rows, rows) += term.coefficient * K.matrix();
        cplx off = K.offset();
        if (term.subtract_expectation) off -= expectation(K, cov);
        c0 += term.coefficient * off;
        clipped += K.clipped_modes;
    }
    QuadraticOperator q(support, std::move(P), c0);
    q.clipped_modes = clipped;
    return q;
}

// ---------------------------------------------------------------- moments

cplx complex_expectation(const QuadraticOperator& q, const MajoranaCovariance& cov) {
    if (q.empty()) return q.offset();
    Eigen::MatrixXd Gam = cov.block(q.support().sites());
    // -(1/4) Tr(P Gamma) = (1/4) sum_ab P_ab Gamma_ab.
    return 0.25 * (q.matrix().array() * Gam.array().cast<cplx>()).sum() + q.offset();
}

double expectation(const QuadraticOperator& q, const MajoranaCovariance& cov) {
    if (!q.is_hermitian(1e-10)) throw std::invalid_argument("expectation: operator is not Hermitian");
    return complex_expectation(q, cov).real();
}

double variance(const QuadraticOperator& q, const MajoranaCovariance& cov) {
    if (!q.is_hermitian(1e-10)) throw std::invalid_argument("variance: operator is not Hermitian");
    if (q.empty()) return 0.0;
    Eigen::MatrixXd G = q.real_matrix();
    Eigen::MatrixXd Gam = cov.block(q.support().sites());
    Eigen::MatrixXd X = G * Gam;
    double v = (G.squaredNorm() - (X.array() * X.transpose().array()).sum()) / 8;
    return std::max(v, 0.0);
}

QuadraticOperator commutator(const QuadraticOperator& q1, const QuadraticOperator& q2) {
    if (q1.empty() || q2.empty()) return QuadraticOperator();
    Region u = q1.support() | q2.support();
    Eigen::MatrixXcd A = q1.embedded(u.sites()), B = q2.embedded(u.sites());
    Eigen::MatrixXcd C = cplx(0, 1) * (A * B - B * A);
    return QuadraticOperator(u, std::move(C), 0.0);
}

double modular_commutator(const MajoranaCovariance& cov, const Region& A, const Region& B, const Region& C) {
    if (!(A & B).empty() || !(B & C).empty() || !(A & C).empty())
        throw std::invalid_argument("modular_commutator: regions overlap");
    QuadraticOperator k1 = modular_hamiltonian(cov, A | B), k2 = modular_hamiltonian(cov, B | C);
    return (cplx(0, 1) * complex_expectation(commutator(k1, k2), cov)).real();
}

// ---------------------------------------------------------------- flows

OrthogonalFlow::OrthogonalFlow(const Eigen::MatrixXd& G) : G_(G) {
    require_antisymmetric(G, "orthogonal_flow");
    Eigen::MatrixXd S = -(G * G);
    S = 0.5 * (S + S.transpose());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(S);
    w_ = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    V_ = es.eigenvectors();
}

Eigen::MatrixXd OrthogonalFlow::at(double t) const {
    Eigen::VectorXd c(w_.size()), s(w_.size());
    for (Eigen::Index i = 0; i < w_.size(); ++i) {
        c[i] = std::cos(t * w_[i]);
        s[i] = w_[i] * std::abs(t) < 1e-8 ? t * (1 - (t * w_[i]) * (t * w_[i]) / 6) : std::sin(t * w_[i]) / w_[i];
    }
    return V_ * c.asDiagonal() * V_.transpose() + G_ * (V_ * s.asDiagonal() * V_.transpose());
}

Eigen::MatrixXd orthogonal_flow(const Eigen::MatrixXd& G, double t) { return OrthogonalFlow(G).at(t); }

MajoranaCovariance evolve(const MajoranaCovariance& cov, const QuadraticOperator& q, double t) {
    return evolve(cov, q, t, Region(cov.lattice(), cov.sites()));
}

MajoranaCovariance evolve(const MajoranaCovariance& cov, const QuadraticOperator& q, double t, const Region& scope) {
    return evolve(cov, q, std::vector<double>{t}, scope).front();
}

std::vector<MajoranaCovariance> evolve(const MajoranaCovariance& cov, const QuadraticOperator& q,
                                       const std::vector<double>& times, const Region& scope) {
    if (!q.is_hermitian(1e-10)) throw std::invalid_argument("evolve: generator is not Hermitian");
    std::vector<MajoranaCovariance> out;
    if (q.empty()) {
        out.assign(times.size(), cov.restrict(scope));
        return out;
    }
    Region all = union_support(scope, q.support());
    const Eigen::MatrixXd Gam0 = cov.block(all.sites());
    const OrthogonalFlow flow(q.real_matrix());
    auto rows = majorana_rows(positions_in(q.support().sites(), all.sites()));
    for (double t : times) {
        const Eigen::MatrixXd O = flow.at(t);
        Eigen::MatrixXd Gam = Gam0;
        Eigen::MatrixXd R = O * Gam(rows, Eigen::all);
        Gam(rows, Eigen::all) = R;
        Eigen::MatrixXd Cc = Gam(Eigen::all, rows) * O.transpose();
        Gam(Eigen::all, rows) = Cc;
        Gam = 0.5 * (Gam - Gam.transpose()).eval();
        MajoranaCovariance full(cov.lattice(), all.sites(), std::move(Gam));
        out.push_back(all.sites() == scope.sites() ? full : full.restrict(scope));
    }
    return out;
}

// ---------------------------------------------------------------- fidelities

namespace {

void require_same_space(const MajoranaCovariance& a, const MajoranaCovariance& b, const char* who) {
    if (a.lattice() != b.lattice() || a.sites() != b.sites())
        throw std::invalid_argument(std::string(who) + ": covariances live on different index spaces");
}

// (1 + M^2)^{1/2} for a covariance; its small eigenvalues sqrt(1 - nu^2) carry the near-pure modes.
Eigen::MatrixXd mixedness_root(const Eigen::MatrixXd& M) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(Eigen::MatrixXd(M * M.transpose()));
    Eigen::VectorXd r = (1.0 - es.eigenvalues().array()).max(0.0).sqrt();
    return es.eigenvectors() * r.asDiagonal() * es.eigenvectors().transpose();
}

}  // namespace

double pfaffian(const Eigen::MatrixXd& M) {
    const Eigen::Index n = M.rows();
    if (M.cols() != n) throw std::invalid_argument("pfaffian: matrix is not square");
    if (n % 2) return 0.0;
    Eigen::MatrixXd A = M;
    double pf = 1.0;
    // Parlett-Reid elimination with pivoting on the column below the diagonal
    for (Eigen::Index k = 0; k + 1 < n; k += 2) {
        Eigen::Index p;
        A.col(k).tail(n - k - 1).cwiseAbs().maxCoeff(&p);
        p += k + 1;
        if (p != k + 1) {
            A.row(k + 1).swap(A.row(p));
            A.col(k + 1).swap(A.col(p));
            pf = -pf;
        }
        const double piv = A(k, k + 1);
        if (piv == 0.0) return 0.0;
        pf *= piv;
        if (k + 2 < n) {
            const Eigen::Index m = n - k - 2;
            Eigen::VectorXd tau = A.row(k).tail(m).transpose() / piv;
            // A[k+2:, k+2:] += tau u^T - u tau^T with u = A[k+2:, k+1]
            Eigen::VectorXd u = A.col(k + 1).tail(m);
            A.bottomRightCorner(m, m) += tau * u.transpose() - u * tau.transpose();
        }
    }
    return pf;
}

double fidelity(const MajoranaCovariance& a, const MajoranaCovariance& b) {
    require_same_space(a, b, "fidelity");
    const Eigen::MatrixXd& G1 = a.matrix();
    const Eigen::MatrixXd& G2 = b.matrix();
    const Eigen::Index n = G1.rows();
    if (n == 0) return 1.0;
    auto pure = [&](const Eigen::MatrixXd& g) {
        return (g * g.transpose() - Eigen::MatrixXd::Identity(n, n)).cwiseAbs().maxCoeff() < 1e-10;
    };
    // pure pairs carry a parity selection rule the mixed formula only sees through rounding
    if (pure(G1) && pure(G2)) return global_overlap(a, b);
    Eigen::MatrixXd X = Eigen::MatrixXd::Identity(n, n) - G1 * G2;
    Eigen::PartialPivLU<Eigen::MatrixXd> lu(X);
    const Eigen::MatrixXd& LU = lu.matrixLU();
    double logdet = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
        double d = std::abs(LU(i, i));
        if (d < 1e-300) return 0.0;
        logdet += std::log(d);
    }
    // The eigenvalues of 1 + W^2, W = (G1 + G2) X^{-1}, are the squared singular values of
    // R2 X^{-1} R1; taking them from an SVD keeps the tiny ones accurate in absolute terms.
    Eigen::MatrixXd C = mixedness_root(G2) * lu.solve(mixedness_root(G1));
    Eigen::VectorXd s = Eigen::BDCSVD<Eigen::MatrixXd>(C).singularValues();
    double logsq = 0;
    for (Eigen::Index i = 0; i < n; ++i) logsq += std::log1p(std::min(s[i], 1.0));
    double logF = -0.25 * double(n) * std::log(2.0) + 0.25 * logdet + 0.25 * logsq;
    return std::clamp(std::exp(logF), 0.0, 1.0);
}

double global_overlap(const MajoranaCovariance& a, const MajoranaCovariance& b) {
    require_same_space(a, b, "global_overlap");
    const Eigen::MatrixXd& G1 = a.matrix();
    const Eigen::MatrixXd& G2 = b.matrix();
    const Eigen::Index n = G1.rows();
    for (const Eigen::MatrixXd* g : {&G1, &G2})
        if ((*g * g->transpose() - Eigen::MatrixXd::Identity(n, n)).cwiseAbs().maxCoeff() > 1e-6)
            throw std::invalid_argument("global_overlap: state is not pure");
    Eigen::MatrixXd X = 0.5 * (Eigen::MatrixXd::Identity(n, n) - G1 * G2);
    Eigen::PartialPivLU<Eigen::MatrixXd> lu(X);
    double logdet = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
        double d = std::abs(lu.matrixLU()(i, i));
        if (d < 1e-300) return 0.0;
        logdet += std::log(d);
    }
    const double f = std::clamp(std::exp(0.25 * logdet), 0.0, 1.0);
    // Opposite parity makes X exactly singular with all singular values <= 1, so rounding alone
    // cannot lift the overlap above ~(n eps)^(1/4) < 1e-2; only then are the Pfaffians needed.
    if (f < 1e-2 && pfaffian(G1) * pfaffian(G2) < 0) return 0.0;
    return f;
}

std::vector<double> default_alpha_times() { return {0.01, 0.02, 0.03, 0.04, 0.05, 0.06, 0.07, 0.08}; }

AlphaFit fit_alpha_detailed(const std::vector<std::pair<double, double>>& samples) {
    if (samples.size() < 4) throw FitDiagnostics("fit_alpha: need at least 4 samples");
    auto s = samples;
    std::sort(s.begin(), s.end());
    std::vector<double> lx, ly;
    double prev = 0;
    for (const auto& [t, F] : s) {
        double d = 1 - F;
        if (t <= 0) throw FitDiagnostics("fit_alpha: times must be positive");
        if (d <= 0) throw FitDiagnostics("fit_alpha: fidelity saturated at t = " + std::to_string(t));
        if (d < prev) throw FitDiagnostics("fit_alpha: 1 - F is not monotone in t");
        prev = d;
        lx.push_back(std::log(t));
        ly.push_back(std::log(d));
    }
    const double n = double(lx.size());
    double mx = std::accumulate(lx.begin(), lx.end(), 0.0) / n;
    double my = std::accumulate(ly.begin(), ly.end(), 0.0) / n;
    double sxy = 0, sxx = 0;
    for (size_t i = 0; i < lx.size(); ++i) {
        sxy += (lx[i] - mx) * (ly[i] - my);
        sxx += (lx[i] - mx) * (lx[i] - mx);
    }
    AlphaFit fit;
    fit.slope = sxx > 0 ? sxy / sxx : 0.0;
    fit.intercept_alpha = 2 * std::exp(my - fit.slope * mx);
    fit.alpha = 2 * std::exp(my - 2 * mx);
    return fit;
}

double fit_alpha(const std::vector<std::pair<double, double>>& samples) { return fit_alpha_detailed(samples).alpha; }

// ---------------------------------------------------------------- persistence

void write_covariance(const std::string& path, const MajoranaCovariance& cov) {
    static_assert(std::endian::native == std::endian::little, "container payload is little-endian");
    const Eigen::MatrixXd& M = cov.matrix();
    nlohmann::json header = {{"format", "majorana_covariance"},
                             {"version", 1},
                             {"lattice", lattice_to_json(cov.lattice())},
                             {"sites", cov.sites()},
                             {"rows", M.rows()},
                             {"cols", M.cols()}};
    std::string h = header.dump();
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("write_covariance: cannot open " + path);
    out.write("MAJCOV01", 8);
    std::uint64_t len = h.size();
    out.write(reinterpret_cast<const char*>(&len), sizeof len);
    out.write(h.data(), std::streamsize(h.size()));
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> R = M;
    out.write(reinterpret_cast<const char*>(R.data()), std::streamsize(R.size() * sizeof(double)));
    if (!out) throw std::runtime_error("write_covariance: write failed for " + path);
}

MajoranaCovariance read_covariance(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("read_covariance: cannot open " + path);
    char magic[8];
    in.read(magic, 8);
    if (!in || std::memcmp(magic, "MAJCOV01", 8) != 0) throw std::runtime_error("read_covariance: bad magic in " + path);
    std::uint64_t len = 0;
    in.read(reinterpret_cast<char*>(&len), sizeof len);
    if (!in || len > (1u << 30)) throw std::runtime_error("read_covariance: bad header length");
    std::string h(len, '\0');
    in.read(h.data(), std::streamsize(len));
    auto header = nlohmann::json::parse(h);
    if (header.value("format", "") != "majorana_covariance") throw std::runtime_error("read_covariance: wrong format tag");
    LatticeGeometry L = lattice_from_json(header.at("lattice"));
    std::vector<int> sites = header.at("sites").get<std::vector<int>>();
    Eigen::Index rows = header.at("rows"), cols = header.at("cols");
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> R(rows, cols);
    in.read(reinterpret_cast<char*>(R.data()), std::streamsize(R.size() * sizeof(double)));
    if (!in) throw std::runtime_error("read_covariance: truncated payload");
    return MajoranaCovariance(L, std::move(sites), Eigen::MatrixXd(R));
}

}  // namespace edgevir
