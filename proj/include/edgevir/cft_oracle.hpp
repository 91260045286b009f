#pragma once

#include <complex>
#include <functional>
#include <map>
#include <ostream>
#include <string>
#include <vector>

namespace edgevir {

using cplx = std::complex<double>;

enum class Parity { odd, even };

// Arc [lo, hi] on the unit circle, 0 < hi - lo < 2*pi.
struct Arc {
    double lo = 0.0;
    double hi = 0.0;
    double length() const { return hi - lo; }
};

// Coolness function of an arc; zero outside the arc.
double coolness(double theta, double th1, double th2);
double coolness_d1(double theta, double th1, double th2);
double coolness_d2(double theta, double th1, double th2);

// Smooth-by-pieces real function on [0, 2*pi) with known breakpoints.
struct PiecewiseFunction {
    std::function<double(double)> f;
    std::function<double(double)> d1;
    std::function<double(double)> d2;
    std::vector<double> breakpoints;
};

// Linear combination of coolness functions.
class WeightFunction {
public:
    struct Term {
        double coefficient;
        Arc arc;
    };

    WeightFunction() = default;
    explicit WeightFunction(std::vector<Term> terms) : terms_(std::move(terms)) {}

    void add(double coefficient, Arc arc) { terms_.push_back({coefficient, arc}); }
    const std::vector<Term>& terms() const { return terms_; }

    double operator()(double theta) const;
    double derivative(double theta, int order) const;
    std::vector<double> breakpoints() const;
    PiecewiseFunction as_piecewise() const;

private:
    std::vector<Term> terms_;
};

double normalization_A(int n);
WeightFunction beta_n(int n, Parity parity);

// Coefficient of L_m in the expansion of the twisted generator with index n.
double lambda_nm(int n, int m);
// Coefficients of the parity components: odd -> -(i/2)(l_{n,m} - l_{-n,m}), even -> (1/2)(l_{n,m} + l_{-n,m}).
cplx lambda_parity(int n, int m, Parity parity);

// Virasoro mode expansion sum_m lambda_m L_m, stored as a combination of
// twisted families (weight w times the family with seed s) plus explicit modes.
class ModeExpansion {
public:
    ModeExpansion() = default;

    static ModeExpansion ltilde(int n);
    static ModeExpansion parity(int n, Parity parity);
    static ModeExpansion single(int m, cplx coefficient = 1.0);

    cplx coefficient(int m) const;
    // Candidate modes with |m| <= cutoff, sorted ascending.
    std::vector<int> modes(long cutoff) const;
    // Least common multiple of the absolute seeds (1 if none).
    long period() const;

    const std::map<int, cplx>& families() const { return families_; }
    const std::map<int, cplx>& explicit_modes() const { return explicit_; }

    ModeExpansion& operator+=(const ModeExpansion& other);
    ModeExpansion& operator*=(cplx s);
    friend ModeExpansion operator+(ModeExpansion a, const ModeExpansion& b) { return a += b; }
    friend ModeExpansion operator*(cplx s, ModeExpansion a) { return a *= s; }

    // Finite truncation as a plain map (|m| <= cutoff).
    std::map<int, cplx> truncated(long cutoff) const;

private:
    std::map<int, cplx> families_;
    std::map<int, cplx> explicit_;
};

// sum_m term(m) over the candidate modes of the given expansions, extrapolated in the cutoff.
cplx mode_sum(const std::vector<const ModeExpansion*>& expansions,
              const std::function<cplx(int)>& term, double rel_tol = 1e-13);

double digamma(double x);

double sigma2_prediction(int n, double c);
double mode_sum_variance(const ModeExpansion& e, double c);
cplx mode_sum_commutator(const ModeExpansion& a, const ModeExpansion& b, double c);
cplx mode_sum_double_commutator(const ModeExpansion& a, const ModeExpansion& b, double c);

double commutator_prediction(int n, double c_minus);
double double_commutator_prediction(int n, double c);
double virasoro_bracket_expectation(int m, int n, int k, double c);

double chordal(double arc_length);
double cross_ratio_arcs(const Arc& a, const Arc& b, const Arc& c);
double kms_commutator(const Arc& a, const Arc& b, const Arc& c, double c_minus);
// i<[K_x, K_y]> for two arcs of the circle using the chiral vacuum formula.
double kms_pair(const Arc& x, const Arc& y, double c_minus);
// i<[L^(e)_n, L^(o)_n]> recombined from interval pairs of the twisting construction.
double kms_parity_commutator(int n, double c_minus);
double kms_mode_commutator(int n, double c_minus);

double binary_entropy(double eta);
double fixed_point_rhs(double eta, double c_tot);

// f~_m = int_0^{2pi} f(theta) e^{-i m theta} dtheta.
cplx fourier_coefficient(const PiecewiseFunction& f, int m);
double fourier_decay_exponent(const PiecewiseFunction& f, int m_max);

struct SchwarzianLeading {
    double energy_t2;
    double schwarzian_t2;
};
SchwarzianLeading schwarzian_leading(const PiecewiseFunction& f, const ModeExpansion& modes,
                                     double t, double c);

struct PredictionRow {
    std::string quantity;
    std::string n_or_triple;
    double c;
    double value;
};
std::vector<PredictionRow> prediction_table(double c, int n_max);
void write_prediction_csv(std::ostream& os, const std::vector<PredictionRow>& rows);

}  // namespace edgevir
