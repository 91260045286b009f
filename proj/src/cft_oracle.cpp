#include "edgevir/cft_oracle.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <set>
#include <stdexcept>

#include <boost/math/special_functions/digamma.hpp>

namespace edgevir {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kTwoPi = 2.0 * kPi;

double wrap_offset(double theta, double th1) {
    double u = std::fmod(theta - th1, kTwoPi);
    if (u < 0) u += kTwoPi;
    return u;
}

void check_arc(double th1, double th2) {
    double len = th2 - th1;
    if (!(len > 0.0 && len < kTwoPi)) throw std::invalid_argument("coolness: arc length must lie in (0, 2pi)");
}

// Composite Simpson rule on [a, b] with an even number of panels.
template <typename F>
auto simpson(F&& g, double a, double b, int panels) -> decltype(g(a)) {
    if (panels % 2) ++panels;
    double h = (b - a) / panels;
    auto acc = g(a) + g(b);
    for (int i = 1; i < panels; ++i) acc += (i % 2 ? 4.0 : 2.0) * g(a + i * h);
    return acc * (h / 3.0);
}

std::vector<double> segment_edges(const std::vector<double>& breakpoints) {
    std::vector<double> edges{0.0, kTwoPi};
    for (double b : breakpoints) {
        double u = wrap_offset(b, 0.0);
        if (u > 1e-14 && u < kTwoPi - 1e-14) edges.push_back(u);
    }
    std::sort(edges.begin(), edges.end());
    std::vector<double> out;
    for (double e : edges)
        if (out.empty() || e - out.back() > 1e-13) out.push_back(e);
    return out;
}

template <typename F>
auto piecewise_integral(const std::vector<double>& edges, F&& g, double points_per_unit)
    -> decltype(g(0.0)) {
    decltype(g(0.0)) total{};
    for (size_t i = 0; i + 1 < edges.size(); ++i) {
        double a = edges[i], b = edges[i + 1];
        // Evaluate slightly inside the segment so one-sided pieces are used at the ends.
        double eps = 1e-15 * kTwoPi;
        int panels = std::max(64, static_cast<int>(points_per_unit * (b - a)));
        total += simpson(g, a + eps, b - eps, panels);
    }
    return total;
}

long gcd_l(long a, long b) { return std::gcd(a, b); }

}  // namespace

double coolness(double theta, double th1, double th2) {
    check_arc(th1, th2);
    double len = th2 - th1;
    double u = wrap_offset(theta, th1);
    if (u > len) return 0.0;
    return 2.0 * std::sin(u / 2) * std::sin((len - u) / 2) / std::sin(len / 2);
}

double coolness_d1(double theta, double th1, double th2) {
    check_arc(th1, th2);
    double len = th2 - th1;
    double u = wrap_offset(theta, th1);
    if (u > len) return 0.0;
    return -std::sin(u - len / 2) / std::sin(len / 2);
}

double coolness_d2(double theta, double th1, double th2) {
    check_arc(th1, th2);
    double len = th2 - th1;
    double u = wrap_offset(theta, th1);
    if (u > len) return 0.0;
    return -std::cos(u - len / 2) / std::sin(len / 2);
}

double WeightFunction::operator()(double theta) const { return derivative(theta, 0); }

double WeightFunction::derivative(double theta, int order) const {
    double v = 0.0;
    for (const auto& t : terms_) {
        switch (order) {
            case 0: v += t.coefficient * coolness(theta, t.arc.lo, t.arc.hi); break;
            case 1: v += t.coefficient * coolness_d1(theta, t.arc.lo, t.arc.hi); break;
            case 2: v += t.coefficient * coolness_d2(theta, t.arc.lo, t.arc.hi); break;
            default: throw std::invalid_argument("WeightFunction: derivative order must be 0, 1 or 2");
        }
    }
    return v;
}

std::vector<double> WeightFunction::breakpoints() const {
    std::vector<double> b;
    for (const auto& t : terms_) {
        b.push_back(t.arc.lo);
        b.push_back(t.arc.hi);
    }
    return b;
}

PiecewiseFunction WeightFunction::as_piecewise() const {
    WeightFunction self = *this;
    return {[self](double x) { return self.derivative(x, 0); },
            [self](double x) { return self.derivative(x, 1); },
            [self](double x) { return self.derivative(x, 2); }, breakpoints()};
}

double normalization_A(int n) {
    if (n < 1) throw std::invalid_argument("normalization_A: n must be >= 1");
    if (n == 1) return 1.0 / kTwoPi;
    return std::tan(kPi / (2.0 * n)) * (double(n) * n - 1.0) / 8.0;
}

WeightFunction beta_n(int n, Parity parity) {
    double a = normalization_A(n);
    double d = kPi / n;
    double shift = parity == Parity::odd ? 0.0 : -0.5 * d;
    WeightFunction w;
    for (int k = 1; k <= 2 * n; ++k) {
        double sign = (k % 2 == 1) ? 1.0 : -1.0;
        w.add(sign * a, {(k - 1) * d + shift, k * d + shift});
    }
    return w;
}

double lambda_nm(int n, int m) {
    if (n == 0) throw std::invalid_argument("lambda_nm: n must be nonzero");
    if (std::abs(n) == 1) return m == n ? 1.0 : 0.0;
    if (m % n != 0) return 0.0;
    int q = m / n;
    if (q % 2 == 0) return 0.0;
    int k = (std::abs(q) - 1) / 2;
    int expected_sign = (k % 2 == 0) ? 1 : -1;
    if ((q > 0 ? 1 : -1) != expected_sign) return 0.0;
    double dn = n, dm = m;
    return (dn * dn * dn - dn) / (dm * dm * dm - dm);
}

cplx lambda_parity(int n, int m, Parity parity) {
    if (parity == Parity::odd) return cplx(0, -0.5) * (lambda_nm(n, m) - lambda_nm(-n, m));
    return 0.5 * (lambda_nm(n, m) + lambda_nm(-n, m));
}

ModeExpansion ModeExpansion::ltilde(int n) {
    if (n == 0) throw std::invalid_argument("ModeExpansion::ltilde: n must be nonzero");
    ModeExpansion e;
    e.families_[n] = 1.0;
    return e;
}

ModeExpansion ModeExpansion::parity(int n, Parity parity) {
    if (n < 1) throw std::invalid_argument("ModeExpansion::parity: n must be >= 1");
    ModeExpansion e;
    if (parity == Parity::odd) {
        e.families_[n] = cplx(0, -0.5);
        e.families_[-n] = cplx(0, 0.5);
    } else {
        e.families_[n] = 0.5;
        e.families_[-n] = 0.5;
    }
    return e;
}

ModeExpansion ModeExpansion::single(int m, cplx coefficient) {
    ModeExpansion e;
    e.explicit_[m] = coefficient;
    return e;
}

cplx ModeExpansion::coefficient(int m) const {
    cplx v = 0.0;
    for (const auto& [s, w] : families_) v += w * lambda_nm(s, m);
    if (auto it = explicit_.find(m); it != explicit_.end()) v += it->second;
    return v;
}

std::vector<int> ModeExpansion::modes(long cutoff) const {
    std::set<int> out;
    for (const auto& [s, w] : families_) {
        if (std::abs(s) == 1) {
            if (1 <= cutoff) out.insert(s);
            continue;
        }
        for (long k = 0;; ++k) {
            long q = 2 * k + 1;
            if (q * std::abs(s) > cutoff) break;
            long m = (k % 2 == 0 ? q : -q) * s;
            out.insert(static_cast<int>(m));
        }
    }
    for (const auto& [m, w] : explicit_)
        if (std::abs(m) <= cutoff) out.insert(m);
    return {out.begin(), out.end()};
}

long ModeExpansion::period() const {
    long p = 1;
    for (const auto& [s, w] : families_) {
        long a = std::abs(s);
        if (a >= 2) p = p / gcd_l(p, a) * a;
    }
    return p;
}

ModeExpansion& ModeExpansion::operator+=(const ModeExpansion& other) {
    for (const auto& [s, w] : other.families_) families_[s] += w;
    for (const auto& [m, w] : other.explicit_) explicit_[m] += w;
    return *this;
}

ModeExpansion& ModeExpansion::operator*=(cplx s) {
    for (auto& [k, w] : families_) w *= s;
    for (auto& [k, w] : explicit_) w *= s;
    return *this;
}

std::map<int, cplx> ModeExpansion::truncated(long cutoff) const {
    std::map<int, cplx> out;
    for (int m : modes(cutoff)) {
        cplx v = coefficient(m);
        if (std::abs(v) > 0) out[m] = v;
    }
    return out;
}

cplx mode_sum(const std::vector<const ModeExpansion*>& expansions,
              const std::function<cplx(int)>& term, double rel_tol) {
    long period = 1;
    bool infinite = false;
    long max_explicit = 0;
    for (const auto* e : expansions) {
        long p = e->period();
        period = period / gcd_l(period, p) * p;
        for (const auto& [s, w] : e->families())
            if (std::abs(s) >= 2) infinite = true;
        for (const auto& [m, w] : e->explicit_modes()) max_explicit = std::max<long>(max_explicit, std::abs(m));
        for (const auto& [s, w] : e->families()) max_explicit = std::max<long>(max_explicit, std::abs(s));
    }
    auto partial = [&](long cutoff) {
        std::set<int> all;
        for (const auto* e : expansions)
            for (int m : e->modes(cutoff)) all.insert(m);
        // Accumulate from the largest |m| inward to limit rounding.
        std::vector<int> ms(all.begin(), all.end());
        std::sort(ms.begin(), ms.end(), [](int a, int b) { return std::abs(a) > std::abs(b); });
        cplx s = 0.0;
        for (int m : ms) s += term(m);
        return s;
    };
    if (!infinite) return partial(std::max<long>(max_explicit, 1));

    // Cutoffs share the phase of the mode pattern (period 4P), then Neville extrapolation in 1/M.
    const int levels = 5;
    long k0 = std::max<long>(16, (max_explicit / (4 * period)) + 16);
    std::vector<double> h(levels);
    std::vector<cplx> t(levels);
    for (int i = 0; i < levels; ++i) {
        long cutoff = 4 * period * (k0 << i) + period;
        h[i] = 1.0 / double(cutoff);
        t[i] = partial(cutoff);
    }
    std::vector<cplx> p = t;
    for (int j = 1; j < levels; ++j)
        for (int i = levels - 1; i >= j; --i)
            p[i] = (h[i - j] * p[i] - h[i] * p[i - 1]) / (h[i - j] - h[i]);
    (void)rel_tol;
    return p[levels - 1];
}

double digamma(double x) { return boost::math::digamma(x); }

double sigma2_prediction(int n, double c) {
    if (n < 1) throw std::invalid_argument("sigma2_prediction: n must be >= 1");
    if (n == 1) return 0.0;
    double dn = n;
    double bracket = 2.0 * digamma(0.5) - digamma((dn + 1) / (2 * dn)) - digamma((dn - 1) / (2 * dn));
    return c / 192.0 * dn * (dn * dn - 1) * (dn * dn - 1) * bracket;
}

double mode_sum_variance(const ModeExpansion& e, double c) {
    cplx s = mode_sum({&e}, [&](int m) -> cplx {
        if (m < 2) return 0.0;
        double dm = m;
        return std::norm(e.coefficient(m)) * (dm * dm * dm - dm);
    });
    return c / 12.0 * s.real();
}

cplx mode_sum_commutator(const ModeExpansion& a, const ModeExpansion& b, double c) {
    cplx s = mode_sum({&a}, [&](int m) -> cplx {
        double dm = m;
        return a.coefficient(m) * b.coefficient(-m) * (dm * dm * dm - dm);
    });
    return c / 12.0 * s;
}

cplx mode_sum_double_commutator(const ModeExpansion& a, const ModeExpansion& b, double c) {
    cplx s = mode_sum({&a}, [&](int m) -> cplx {
        double dm = m;
        return dm * a.coefficient(m) * b.coefficient(-m) * (dm * dm * dm - dm);
    });
    return c / 12.0 * s;
}

double commutator_prediction(int n, double c_minus) {
    if (n < 1) throw std::invalid_argument("commutator_prediction: n must be >= 1");
    double dn = n;
    double s = std::sin(kPi / (4 * dn));
    return kPi * c_minus / 24.0 * dn * (dn * dn - 1) * (dn * dn - 1) * s * s / std::cos(kPi / (2 * dn));
}

double double_commutator_prediction(int n, double c) {
    if (n < 1) throw std::invalid_argument("double_commutator_prediction: n must be >= 1");
    if (n == 1) return 0.0;
    double dn = n;
    return kPi * c / 48.0 * dn * (dn * dn - 1) * (dn * dn - 1) * std::tan(kPi / (2 * dn));
}

double virasoro_bracket_expectation(int m, int n, int k, double c) {
    if (m + n + k != 0) return 0.0;
    double dk = k;
    return -c / 12.0 * double(m - n) * (dk * dk * dk - dk);
}

double chordal(double arc_length) { return 2.0 * std::sin(arc_length / 2.0); }

double cross_ratio_arcs(const Arc& a, const Arc& b, const Arc& c) {
    return chordal(a.length()) * chordal(c.length()) /
           (chordal(a.length() + b.length()) * chordal(b.length() + c.length()));
}

double kms_commutator(const Arc& a, const Arc& b, const Arc& c, double c_minus) {
    return kPi * c_minus / 6.0 * (2.0 * cross_ratio_arcs(a, b, c) - 1.0);
}

double kms_pair(const Arc& x, const Arc& y, double c_minus) {
    const double tol = 1e-12;
    for (int w = -1; w <= 1; ++w) {
        Arc ys{y.lo + w * kTwoPi, y.hi + w * kTwoPi};
        if (x.lo + tol < ys.lo && ys.lo + tol < x.hi && x.hi + tol < ys.hi) {
            return kms_commutator({x.lo, ys.lo}, {ys.lo, x.hi}, {x.hi, ys.hi}, c_minus);
        }
        if (ys.lo + tol < x.lo && x.lo + tol < ys.hi && ys.hi + tol < x.hi) {
            return -kms_commutator({ys.lo, x.lo}, {x.lo, ys.hi}, {ys.hi, x.hi}, c_minus);
        }
    }
    return 0.0;
}

double kms_parity_commutator(int n, double c_minus) {
    WeightFunction even = beta_n(n, Parity::even);
    WeightFunction odd = beta_n(n, Parity::odd);
    double total = 0.0;
    for (const auto& e : even.terms())
        for (const auto& o : odd.terms()) total += e.coefficient * o.coefficient * kms_pair(e.arc, o.arc, c_minus);
    return total;
}

double kms_mode_commutator(int n, double c_minus) {
    // [Le + i Lo, Le - i Lo] = -2i [Le, Lo].
    return -2.0 * kms_parity_commutator(n, c_minus);
}

double binary_entropy(double eta) {
    if (eta < 0.0 || eta > 1.0) throw std::invalid_argument("binary_entropy: eta must lie in [0, 1]");
    auto xlx = [](double x) { return x > 0 ? x * std::log(x) : 0.0; };
    return -xlx(eta) - xlx(1.0 - eta);
}

double fixed_point_rhs(double eta, double c_tot) { return c_tot / 6.0 * binary_entropy(eta); }

cplx fourier_coefficient(const PiecewiseFunction& f, int m) {
    auto edges = segment_edges(f.breakpoints);
    auto g = [&](double x) { return f.f(x) * std::exp(cplx(0, -double(m) * x)); };
    return piecewise_integral(edges, g, 512.0 + 96.0 * std::abs(m));
}

double fourier_decay_exponent(const PiecewiseFunction& f, int m_max) {
    if (m_max < 8) throw std::invalid_argument("fourier_decay_exponent: m_max too small");
    std::vector<double> mag(m_max + 1, 0.0);
    double peak = 0.0;
    for (int m = 1; m <= m_max; ++m) {
        mag[m] = std::abs(fourier_coefficient(f, m));
        peak = std::max(peak, mag[m]);
    }
    std::vector<double> xs, ys;
    for (int m = m_max / 4; m <= m_max; ++m) {
        if (mag[m] > 1e-7 * peak) {
            xs.push_back(std::log(double(m)));
            ys.push_back(std::log(mag[m]));
        }
    }
    if (xs.size() < 3) throw std::runtime_error("fourier_decay_exponent: too few admissible harmonics");
    double mx = 0, my = 0;
    for (size_t i = 0; i < xs.size(); ++i) {
        mx += xs[i];
        my += ys[i];
    }
    mx /= xs.size();
    my /= xs.size();
    double sxy = 0, sxx = 0;
    for (size_t i = 0; i < xs.size(); ++i) {
        sxy += (xs[i] - mx) * (ys[i] - my);
        sxx += (xs[i] - mx) * (xs[i] - mx);
    }
    return sxy / sxx;
}

SchwarzianLeading schwarzian_leading(const PiecewiseFunction& f, const ModeExpansion& modes, double t, double c) {
    cplx esum = mode_sum({&modes}, [&](int m) -> cplx {
        if (m < 2) return 0.0;
        double dm = m;
        return std::norm(modes.coefficient(m)) * (dm * dm * dm * dm - dm * dm);
    });
    double energy = c * t * t / 12.0 * esum.real();

    // Action with phi = theta + tau f, expanded so that the O(1) parts cancel analytically.
    auto edges = segment_edges(f.breakpoints);
    auto action = [&](double tau) {
        auto g = [&](double x) {
            double d1 = f.d1(x), d2 = f.d2(x);
            double r = tau * d2 / (1.0 + tau * d1);
            return r * r - 2.0 * tau * d1 - tau * tau * d1 * d1;
        };
        return kTwoPi * c / 24.0 * piecewise_integral(edges, g, 2048.0);
    };
    auto even_part = [&](double tau) { return 0.5 * (action(tau) + action(-tau)) / (tau * tau); };
    const double tau = 1e-2;
    double j1 = even_part(tau), j2 = even_part(tau / 2);
    double a2 = (4.0 * j2 - j1) / 3.0;
    return {energy, a2 * t * t};
}

std::vector<PredictionRow> prediction_table(double c, int n_max) {
    std::vector<PredictionRow> rows;
    for (int n = 1; n <= n_max; ++n) {
        std::string tag = std::to_string(n);
        rows.push_back({"sigma2_odd", tag, c, sigma2_prediction(n, c)});
        rows.push_back({"commutator", tag, c, commutator_prediction(n, c)});
        rows.push_back({"double_commutator", tag, c, double_commutator_prediction(n, c)});
    }
    const int triples[][3] = {{2, 1, -3}, {3, 1, -4}, {3, 2, -5}, {4, 2, -6}};
    for (const auto& tr : triples) {
        std::string tag = "(" + std::to_string(tr[0]) + ";" + std::to_string(tr[1]) + ";" + std::to_string(tr[2]) + ")";
        rows.push_back({"virasoro_bracket", tag, c, virasoro_bracket_expectation(tr[0], tr[1], tr[2], c)});
    }
    return rows;
}

void write_prediction_csv(std::ostream& os, const std::vector<PredictionRow>& rows) {
    os << "quantity,n_or_triple,c,value\n";
    os << std::setprecision(12);
    for (const auto& r : rows) os << r.quantity << ',' << r.n_or_triple << ',' << r.c << ',' << r.value << '\n';
}

}  // namespace edgevir
