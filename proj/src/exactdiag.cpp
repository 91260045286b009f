#include "edgevir/exactdiag.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace edgevir {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr int kMaxOracleModes = 12;
constexpr Eigen::Index kChunk = 4096;

using u64 = std::uint64_t;

bool odd_parity(u64 x) { return std::popcount(x) & 1; }

// Scatter tables for a subset of units.
struct Split {
    int n = 0;
    int k = 0;
    u64 mask = 0;
    u64 rest = 0;
    std::vector<u64> off;    // local index -> global bits
    std::vector<u64> below;  // rest bits below support[k] (fermion reordering signs)
    bool fermionic = false;

    Split(const std::vector<int>& support, int units, bool ferm) : n(units), k(int(support.size())), fermionic(ferm) {
        if (!std::is_sorted(support.begin(), support.end())) throw std::invalid_argument("support must be sorted");
        for (int s : support) {
            if (s < 0 || s >= n) throw std::out_of_range("support unit out of range");
            mask |= u64(1) << s;
        }
        rest = (n == 64 ? ~u64(0) : (u64(1) << n) - 1) & ~mask;
        off.assign(size_t(1) << k, 0);
        for (size_t a = 0; a < off.size(); ++a)
            for (int b = 0; b < k; ++b)
                if (a >> b & 1) off[a] |= u64(1) << support[b];
        for (int b = 0; b < k; ++b) below.push_back(rest & ((u64(1) << support[b]) - 1));
    }

    // Bit b set iff an odd number of occupied rest modes precede support[b].
    u64 sign_mask(u64 r) const {
        if (!fermionic) return 0;
        u64 c = 0;
        for (int b = 0; b < k; ++b)
            if (odd_parity(r & below[b])) c |= u64(1) << b;
        return c;
    }

    template <class F>
    void for_each_chunk(F&& f) const {
        std::vector<u64> rs;
        rs.reserve(kChunk);
        u64 r = 0;
        do {
            rs.push_back(r);
            if (Eigen::Index(rs.size()) == kChunk) {
                f(rs);
                rs.clear();
            }
            r = (r - rest) & rest;
        } while (r != 0);
        if (!rs.empty()) f(rs);
    }

    Eigen::MatrixXcd gather(const Eigen::VectorXcd& v, const std::vector<u64>& rs) const {
        Eigen::MatrixXcd M(off.size(), rs.size());
        for (size_t c = 0; c < rs.size(); ++c) {
            u64 sm = sign_mask(rs[c]);
            for (size_t a = 0; a < off.size(); ++a) {
                cplx x = v[Eigen::Index(off[a] | rs[c])];
                M(a, c) = odd_parity(a & sm) ? -x : x;
            }
        }
        return M;
    }

    void scatter(const Eigen::MatrixXcd& M, const std::vector<u64>& rs, Eigen::VectorXcd& out) const {
        for (size_t c = 0; c < rs.size(); ++c) {
            u64 sm = sign_mask(rs[c]);
            for (size_t a = 0; a < off.size(); ++a) {
                cplx x = M(a, c);
                out[Eigen::Index(off[a] | rs[c])] = odd_parity(a & sm) ? -x : x;
            }
        }
    }
};

void require_units(const DenseState& s) {
    if (s.n < 1 || s.n > 40 || s.amplitudes.size() != (Eigen::Index(1) << s.n))
        throw std::invalid_argument("DenseState: amplitude vector does not match the unit count");
}

Eigen::MatrixXcd hermitian_function(const Eigen::MatrixXcd& A, double (*f)(double)) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(0.5 * (A + A.adjoint()));
    Eigen::VectorXd d = es.eigenvalues().unaryExpr(f);
    return es.eigenvectors() * d.asDiagonal() * es.eigenvectors().adjoint();
}

// g_a |i> = phase |target>.
std::pair<u64, cplx> majorana_action(int a, u64 i) {
    int j = a / 2;
    u64 t = i ^ (u64(1) << j);
    double s = odd_parity(i & ((u64(1) << j) - 1)) ? -1.0 : 1.0;
    if (a % 2 == 0) return {t, s};
    return {t, (i >> j & 1) ? cplx(0, -s) : cplx(0, s)};
}

int modes_of(Eigen::Index dim) {
    int n = 0;
    while ((Eigen::Index(1) << n) < dim) ++n;
    if ((Eigen::Index(1) << n) != dim) throw std::invalid_argument("dimension is not a power of two");
    return n;
}

}  // namespace

// ---------------------------------------------------------------- semion state

LadderSpec LadderSpec::standard(int legs) {
    if (legs != 2 && legs != 3) throw std::invalid_argument("LadderSpec: legs must be 2 or 3");
    LadderSpec l;
    l.legs = legs;
    std::vector<std::pair<double, double>> rows;
    for (int leg = 0; leg < legs; ++leg)
        for (int k = 1; k <= l.rungs; ++k) {
            double phi = k * kPi / 4;
            double theta;
            if (leg == 0)
                theta = kPi / 2 - kPi / 8;
            else if (leg == legs - 1)
                theta = kPi / 2 + kPi / 8;
            else {
                theta = kPi / 2;
                phi += kPi / 8;
            }
            l.coords.emplace_back(theta, phi);
        }
    return l;
}

LatticeGeometry ladder_lattice(const LadderSpec& ladder) { return LatticeGeometry(ladder.rungs, ladder.legs); }

RegionSet ladder_twist_preset(const LadderSpec& ladder, int n) {
    if (n < 1 || ladder.rungs % (4 * n) != 0) throw std::invalid_argument("ladder_twist_preset: need 4n | rungs");
    if (ladder.legs != 2 && ladder.legs != 3) throw std::invalid_argument("ladder_twist_preset: legs must be 2 or 3");
    const LatticeGeometry L = ladder_lattice(ladder);
    const int w = ladder.rungs / (2 * n), lx = w / 2;
    RegionSet out;
    for (int j = 0; j < 2 * n; ++j) {
        const int x = j * w;
        Region xr = Region::rectangle(L, x, w, 0, 1), xl = xr;
        for (int leg = 1; leg < ladder.legs; ++leg) {
            const bool staggered = ladder.legs == 3 && leg == 1;
            xr = xr | Region::rectangle(L, x - lx, w, leg, 1);
            xl = xl | Region::rectangle(L, x + (staggered ? lx - 1 : lx), w, leg, 1);
        }
        out.add("XR" + std::to_string(j), xr);
        out.add("XL" + std::to_string(j), xl);
        out.add("YR" + std::to_string(j), xr.shifted(-lx));
        out.add("YL" + std::to_string(j), xl.shifted(-lx));
    }
    return out;
}

cplx stereographic(double theta, double phi) { return std::sin(theta) / (1 + std::cos(theta)) * std::polar(1.0, phi); }

DenseState semion_state(const LadderSpec& ladder) {
    if (ladder.legs != 2 && ladder.legs != 3) throw std::invalid_argument("semion_state: legs must be 2 or 3");
    if (int(ladder.coords.size()) != ladder.legs * ladder.rungs)
        throw std::invalid_argument("semion_state: coordinate count does not match the ladder");
    std::vector<cplx> z;
    for (auto [th, ph] : ladder.coords) z.push_back(stereographic(th, ph));
    return semion_state(z);
}

DenseState semion_state(const std::vector<cplx>& z) {
    const int n = int(z.size());
    if (n < 2 || n % 2 || n > 30) throw std::invalid_argument("semion_state: need an even number of qubits <= 30");
    // l(n, m) = Log(z_n - z_m) / 2 for n < m, symmetric storage.
    Eigen::MatrixXcd l = Eigen::MatrixXcd::Zero(n, n);
    cplx total = 0;
    for (int a = 0; a < n; ++a)
        for (int b = a + 1; b < n; ++b) {
            cplx d = z[a] - z[b];
            if (std::abs(d) < 1e-12) throw std::invalid_argument("semion_state: coincident coordinates");
            l(a, b) = l(b, a) = 0.5 * std::log(d);
            total += l(a, b);
        }
    Eigen::VectorXcd rowsum = l.rowwise().sum();
    DenseState s;
    s.n = n;
    s.amplitudes = Eigen::VectorXcd::Zero(Eigen::Index(1) << n);
    // Spin up = bit set. sum_{n<m} s_n s_m l = total - 2 sum_{up, down} l.
    std::vector<u64> confs;
    std::vector<cplx> logs;
    u64 c = (u64(1) << (n / 2)) - 1, limit = u64(1) << n;
    double maxre = -1e300;
    std::vector<int> up(n / 2);
    while (c < limit) {
        int m = 0;
        for (int b = 0; b < n; ++b)
            if (c >> b & 1) up[m++] = b;
        cplx cross = 0;
        for (int i = 0; i < m; ++i) {
            cross += rowsum[up[i]];
            for (int j = 0; j < m; ++j) cross -= l(up[i], up[j]);
        }
        cplx lw = total - 2.0 * cross;
        confs.push_back(c);
        logs.push_back(lw);
        maxre = std::max(maxre, lw.real());
        u64 t = c | (c - 1);  // next combination with the same popcount
        c = (t + 1) | (((~t & -~t) - 1) >> (std::countr_zero(c) + 1));
    }
    for (size_t i = 0; i < confs.size(); ++i) s.amplitudes[Eigen::Index(confs[i])] = std::exp(logs[i] - maxre);
    s.amplitudes.normalize();
    return s;
}

// ---------------------------------------------------------------- reduced states

DenseOperator reduced_density_matrix(const DenseState& state, const std::vector<int>& support) {
    require_units(state);
    Split sp(support, state.n, state.fermionic);
    Eigen::MatrixXcd rho = Eigen::MatrixXcd::Zero(sp.off.size(), sp.off.size());
    sp.for_each_chunk([&](const std::vector<u64>& rs) {
        Eigen::MatrixXcd M = sp.gather(state.amplitudes, rs);
        rho.noalias() += M * M.adjoint();
    });
    rho = 0.5 * (rho + rho.adjoint()).eval();
    return {support, rho};
}

DenseOperator modular_hamiltonian_dense(const DenseOperator& rho, double cutoff) {
    const Eigen::MatrixXcd& R = rho.matrix;
    if ((R - R.adjoint()).cwiseAbs().maxCoeff() > 1e-10) throw std::invalid_argument("modular_hamiltonian_dense: not Hermitian");
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(0.5 * (R + R.adjoint()));
    const Eigen::VectorXd& p = es.eigenvalues();
    if (p.size() && p.minCoeff() < -1e-10) throw std::invalid_argument("modular_hamiltonian_dense: not positive semidefinite");
    Eigen::VectorXd k(p.size());
    for (Eigen::Index i = 0; i < p.size(); ++i) k[i] = p[i] > cutoff ? -std::log(p[i]) : 0.0;
    return {rho.support, es.eigenvectors() * k.asDiagonal() * es.eigenvectors().adjoint()};
}

double dense_entropy(const DenseOperator& rho, double cutoff) {
    Eigen::VectorXd p = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd>(0.5 * (rho.matrix + rho.matrix.adjoint()),
                                                                        Eigen::EigenvaluesOnly)
                            .eigenvalues();
    double s = 0;
    for (double v : p)
        if (v > cutoff) s -= v * std::log(v);
    return s;
}

Eigen::VectorXcd apply(const DenseOperator& op, const DenseState& state, const Eigen::VectorXcd& v) {
    require_units(state);
    Split sp(op.support, state.n, state.fermionic);
    if (op.matrix.rows() != Eigen::Index(sp.off.size()) || op.matrix.cols() != op.matrix.rows())
        throw std::invalid_argument("apply: operator size does not match its support");
    Eigen::VectorXcd out(v.size());
    sp.for_each_chunk([&](const std::vector<u64>& rs) { sp.scatter(op.matrix * sp.gather(v, rs), rs, out); });
    return out;
}

Eigen::VectorXcd apply(const DenseOperator& op, const DenseState& state) { return apply(op, state, state.amplitudes); }

Eigen::MatrixXcd embed(const DenseOperator& op, const DenseState& state) {
    if (state.n > kMaxOracleModes) throw std::invalid_argument("embed: more than 12 units");
    const Eigen::Index dim = Eigen::Index(1) << state.n;
    Eigen::MatrixXcd out(dim, dim);
    for (Eigen::Index i = 0; i < dim; ++i) out.col(i) = apply(op, state, Eigen::VectorXcd::Unit(dim, i));
    return out;
}

// ---------------------------------------------------------------- generators

DenseGenerator DenseGenerator::adjoint() const {
    DenseGenerator g;
    for (const auto& t : terms_) g.add(std::conj(t.coefficient), {t.op.support, t.op.matrix.adjoint()});
    g.constant_ = std::conj(constant_);
    return g;
}

DenseGenerator DenseGenerator::operator+(const DenseGenerator& o) const {
    DenseGenerator g = *this;
    for (const auto& t : o.terms_) g.terms_.push_back(t);
    g.constant_ += o.constant_;
    return g;
}

DenseGenerator DenseGenerator::operator*(cplx s) const {
    DenseGenerator g = *this;
    for (auto& t : g.terms_) t.coefficient *= s;
    g.constant_ *= s;
    return g;
}

Eigen::VectorXcd DenseGenerator::apply(const DenseState& state, const Eigen::VectorXcd& v) const {
    Eigen::VectorXcd out = constant_ * v;
    for (const auto& t : terms_)
        if (t.coefficient != 0.0) out += t.coefficient * edgevir::apply(t.op, state, v);
    return out;
}

Eigen::MatrixXcd DenseGenerator::matrix(const DenseState& state) const {
    if (state.n > kMaxOracleModes) throw std::invalid_argument("DenseGenerator::matrix: more than 12 units");
    const Eigen::Index dim = Eigen::Index(1) << state.n;
    Eigen::MatrixXcd out(dim, dim);
    for (Eigen::Index i = 0; i < dim; ++i) out.col(i) = apply(state, Eigen::VectorXcd::Unit(dim, i));
    return out;
}

DenseGenerator dense_generator(const DenseState& state, const GeneratorSpec& spec) {
    DenseGenerator g;
    std::map<std::vector<int>, std::pair<DenseOperator, cplx>> cache;
    for (const auto& term : spec.terms) {
        if (term.region.empty()) continue;
        const auto& sites = term.region.sites();
        auto it = cache.find(sites);
        if (it == cache.end()) {
            DenseOperator rho = reduced_density_matrix(state, sites);
            DenseOperator K = modular_hamiltonian_dense(rho);
            cplx mean = (rho.matrix * K.matrix).trace();
            it = cache.emplace(sites, std::make_pair(std::move(K), mean)).first;
        }
        g.add(term.coefficient, it->second.first);
        if (term.subtract_expectation) g.add_constant(-term.coefficient * it->second.second);
    }
    return g;
}

cplx dense_expectation(const DenseState& state, const DenseGenerator& g) {
    return state.amplitudes.dot(g.apply(state, state.amplitudes));
}

double dense_variance(const DenseState& state, const DenseGenerator& g) {
    Eigen::VectorXcd v = g.apply(state, state.amplitudes);
    cplx m = state.amplitudes.dot(v);
    return v.squaredNorm() - std::norm(m);
}

cplx dense_commutator_expectation(const DenseState& state, const DenseGenerator& X, const DenseGenerator& Y) {
    const auto& psi = state.amplitudes;
    Eigen::VectorXcd xd = X.adjoint().apply(state, psi), yd = Y.adjoint().apply(state, psi);
    Eigen::VectorXcd x = X.apply(state, psi), y = Y.apply(state, psi);
    return xd.dot(y) - yd.dot(x);
}

cplx dense_double_commutator_expectation(const DenseState& state, const DenseGenerator& X, const DenseGenerator& Y,
                                         const DenseGenerator& Z) {
    const auto& psi = state.amplitudes;
    Eigen::VectorXcd z = Z.apply(state, psi), x = X.apply(state, psi);
    Eigen::VectorXcd yz = Y.apply(state, z), xz = X.apply(state, z);
    Eigen::VectorXcd xy = X.apply(state, Y.apply(state, psi)), yx = Y.apply(state, x);
    Eigen::VectorXcd xd = X.adjoint().apply(state, psi), yd = Y.adjoint().apply(state, psi);
    Eigen::VectorXcd zd = Z.adjoint().apply(state, psi);
    return xd.dot(yz) - yd.dot(xz) - zd.dot(xy) + zd.dot(yx);
}

double dense_fidelity(const Eigen::MatrixXcd& rho, const Eigen::MatrixXcd& sigma) {
    Eigen::MatrixXcd s = hermitian_function(rho, [](double v) { return std::sqrt(std::max(v, 0.0)); });
    Eigen::MatrixXcd m = s * sigma * s;
    Eigen::VectorXd ev =
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd>(0.5 * (m + m.adjoint()), Eigen::EigenvaluesOnly).eigenvalues();
    double f = 0;
    for (double v : ev) f += std::sqrt(std::max(v, 0.0));
    return f;
}

// Fidelity of two reduced states from their factors rho = A A^dag, sigma = B B^dag:
// F = ||A^dag B||_1, which avoids square roots of noisy zero eigenvalues.
double dense_fidelity(const DenseState& a, const DenseState& b, const std::vector<int>& support) {
    require_units(a);
    require_units(b);
    if (a.n != b.n || a.fermionic != b.fermionic) throw std::invalid_argument("dense_fidelity: states on different spaces");
    Split sp(support, a.n, a.fermionic);
    std::vector<Eigen::MatrixXcd> ca, cb;
    sp.for_each_chunk([&](const std::vector<u64>& rs) {
        ca.push_back(sp.gather(a.amplitudes, rs));
        cb.push_back(sp.gather(b.amplitudes, rs));
    });
    Eigen::Index cols = 0;
    for (const auto& m : ca) cols += m.cols();
    const Eigen::Index rows = Eigen::Index(sp.off.size());
    Eigen::MatrixXcd A(rows, cols), B(rows, cols);
    for (size_t k = 0, c = 0; k < ca.size(); c += ca[k].cols(), ++k) {
        A.middleCols(c, ca[k].cols()) = ca[k];
        B.middleCols(c, cb[k].cols()) = cb[k];
    }
    Eigen::MatrixXcd C;
    if (cols <= rows) {
        C = A.adjoint() * B;
    } else {
        // A^dag = Q R with Q an isometry, so ||A^dag B||_1 = ||R B||_1
        Eigen::HouseholderQR<Eigen::MatrixXcd> qr(A.adjoint());
        C = qr.matrixQR().topRows(rows).triangularView<Eigen::Upper>() * B;
    }
    return Eigen::BDCSVD<Eigen::MatrixXcd>(C).singularValues().sum();
}

// ---------------------------------------------------------------- free-fermion oracle

Eigen::MatrixXcd majorana_matrix(int n, int a) {
    if (n < 1 || n > kMaxOracleModes) throw std::invalid_argument("majorana_matrix: 1 <= n <= 12 modes");
    if (a < 0 || a >= 2 * n) throw std::out_of_range("majorana_matrix: index out of range");
    const Eigen::Index dim = Eigen::Index(1) << n;
    Eigen::MatrixXcd g = Eigen::MatrixXcd::Zero(dim, dim);
    for (Eigen::Index i = 0; i < dim; ++i) {
        auto [t, ph] = majorana_action(a, u64(i));
        g(Eigen::Index(t), i) = ph;
    }
    return g;
}

Eigen::MatrixXcd quadratic_matrix(const Eigen::MatrixXcd& P, cplx c0) {
    if (P.rows() != P.cols() || P.rows() % 2) throw std::invalid_argument("quadratic_matrix: need a 2n square matrix");
    const int n = int(P.rows() / 2);
    if (n < 1 || n > kMaxOracleModes) throw std::invalid_argument("quadratic_matrix: 1 <= n <= 12 modes");
    const Eigen::Index dim = Eigen::Index(1) << n;
    Eigen::MatrixXcd H = c0 * Eigen::MatrixXcd::Identity(dim, dim);
    const cplx q(0, 0.25);
    for (Eigen::Index i = 0; i < dim; ++i)
        for (int b = 0; b < 2 * n; ++b) {
            auto [t1, p1] = majorana_action(b, u64(i));
            for (int a = 0; a < 2 * n; ++a) {
                if (P(a, b) == 0.0) continue;
                auto [t2, p2] = majorana_action(a, t1);
                H(Eigen::Index(t2), i) += q * P(a, b) * p2 * p1;
            }
        }
    return H;
}

DenseState dense_free_fermion_oracle(const Eigen::MatrixXd& G) {
    if (G.rows() / 2 > kMaxOracleModes) throw std::invalid_argument("dense_free_fermion_oracle: more than 12 modes");
    Eigen::MatrixXcd H = quadratic_matrix(G.cast<cplx>());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(0.5 * (H + H.adjoint()));
    if (es.eigenvalues()[1] - es.eigenvalues()[0] < 1e-9)
        throw std::runtime_error("dense_free_fermion_oracle: degenerate ground state");
    DenseState s;
    s.n = int(G.rows() / 2);
    s.fermionic = true;
    s.amplitudes = es.eigenvectors().col(0);
    return s;
}

Eigen::MatrixXd dense_covariance(const Eigen::MatrixXcd& rho) {
    const int n = modes_of(rho.rows());
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(2 * n, 2 * n);
    const Eigen::Index dim = rho.rows();
    for (int a = 0; a < 2 * n; ++a)
        for (int b = a + 1; b < 2 * n; ++b) {
            // Tr(rho g_a g_b) = sum_i rho(i, t) <t| g_a g_b |i>
            cplx tr = 0;
            for (Eigen::Index i = 0; i < dim; ++i) {
                auto [t1, p1] = majorana_action(b, u64(i));
                auto [t2, p2] = majorana_action(a, t1);
                tr += rho(i, Eigen::Index(t2)) * p2 * p1;
            }
            // (i/2) <[g_a, g_b]> = i <g_a g_b> for a != b.
            out(a, b) = (cplx(0, 1) * tr).real();
            out(b, a) = -out(a, b);
        }
    return out;
}

DenseState dense_evolve(const DenseState& state, const Eigen::MatrixXcd& H, double t) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(0.5 * (H + H.adjoint()));
    Eigen::VectorXcd ph = (es.eigenvalues() * cplx(0, -t)).array().exp();
    DenseState out = state;
    out.amplitudes = es.eigenvectors() * (ph.asDiagonal() * (es.eigenvectors().adjoint() * state.amplitudes));
    return out;
}

}  // namespace edgevir
