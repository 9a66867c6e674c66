#include "csmle/integrate.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include <boost/math/tools/roots.hpp>

#include "csmle/hull.hpp"

namespace csmle {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();

bool power_kind(const Transformation& t) { return t.is_power(); }

void check_nodes(const Transformation& t, const std::vector<double>& v) {
    for (double y : v) {
        if (!std::isfinite(y)) throw NonfiniteError("simplex_integral: vertex value at a limit point");
        if (t.kind == Kind::PowerConcave && !(y > 0.0))
            throw NonfiniteError("simplex_integral: vertex value at or below the limit point 0");
    }
}

// Largest spread for which the nodes z[i..j] are expanded instead of differenced.
double cluster_threshold(const Transformation& t, const double* z, int m) {
    if (!power_kind(t)) return kTaylorSwitch;
    double lo = kInf;
    for (int k = 0; k <= m; ++k) lo = std::min(lo, z[k]);
    if (!(lo > 0.0)) return 0.0;
    return kTaylorSwitch * lo;
}

// Taylor expansion of the divided difference of F_j over z[0..m] around z[0].
double cluster_dd(const Transformation& t, int j, const double* z, int m) {
    const double c = z[0];
    if (power_kind(t) && !(c > 0.0)) {
        // nodes coincide at a non-positive value; only the k = 0 term is meaningful
        return F(t, j - m, c) / factorial(m);
    }
    std::vector<double> delta(m + 1);
    bool all_zero = true;
    for (int k = 0; k <= m; ++k) {
        delta[k] = z[k] - c;
        if (delta[k] != 0.0) all_zero = false;
    }
    // hk[i] = complete homogeneous polynomial of degree q in delta[0..i]
    std::vector<double> hk(m + 1, 1.0);
    double sum = F(t, j - m, c) / factorial(m);
    if (all_zero) return sum;
    double fact = factorial(m);
    for (int q = 1; q <= 40; ++q) {
        double prev = 0.0;
        for (int i = 0; i <= m; ++i) {
            hk[i] = prev + delta[i] * hk[i];
            prev = hk[i];
        }
        fact *= (m + q);
        const double term = F(t, j - m - q, c) * hk[m] / fact;
        sum += term;
        if (q >= 8 && std::fabs(term) <= 1e-17 * std::fabs(sum)) break;
    }
    return sum;
}
}  // namespace

double divided_difference(const Transformation& t, int j, std::vector<double> z) {
    std::sort(z.begin(), z.end());
    const int m = static_cast<int>(z.size()) - 1;
    if (m < 0) throw ParameterError("divided_difference: no nodes");
    // T[i] holds the difference over z[i..i+len]
    std::vector<double> T(m + 1);
    for (int i = 0; i <= m; ++i) T[i] = F(t, j, z[i]);
    for (int len = 1; len <= m; ++len) {
        for (int i = 0; i + len <= m; ++i) {
            const double spread = z[i + len] - z[i];
            if (spread <= cluster_threshold(t, &z[i], len))
                T[i] = cluster_dd(t, j, &z[i], len);
            else
                T[i] = (T[i + 1] - T[i]) / spread;
        }
    }
    return T[0];
}

SimplexIntegralPlan plan_simplex_integral(const Transformation& t, const std::vector<double>& values, double volume,
                                          bool allow_mc) {
    SimplexIntegralPlan p;
    p.values = values;
    p.volume = volume;
    p.transform = t;
    const int d = static_cast<int>(values.size()) - 1;
    if (t.kind == Kind::PowerConcave && !(t.s > d)) {
        if (!allow_mc) throw AntiderivUnavailable("simplex_integral: power-concave needs s > d");
        p.method = IntegralMethod::MonteCarlo;
        return p;
    }
    auto [lo, hi] = std::minmax_element(values.begin(), values.end());
    p.method = (*hi - *lo <= cluster_threshold(t, &*lo, 0)) ? IntegralMethod::Taylor
                                                            : IntegralMethod::DividedDifference;
    return p;
}

double run_plan(const SimplexIntegralPlan& p, long mc_budget, std::uint64_t seed) {
    if (p.method == IntegralMethod::MonteCarlo) return simplex_integral_mc(p.transform, p.values, p.volume, mc_budget, seed);
    return simplex_integral(p.transform, p.values, p.volume);
}

double simplex_integral(const Transformation& t, const std::vector<double>& values, double volume) {
    const int d = static_cast<int>(values.size()) - 1;
    if (d < 1) throw ParameterError("simplex_integral: need at least two vertex values");
    if (!(volume >= 0.0)) throw ParameterError("simplex_integral: negative volume");
    if (t.kind == Kind::PowerConcave && !(t.s > d))
        throw AntiderivUnavailable("simplex_integral: power-concave needs s > d");
    if (t.kind == Kind::PowerConvex && std::all_of(values.begin(), values.end(), [](double y) { return y <= 0.0; }))
        return 0.0;
    check_nodes(t, values);
    if (std::all_of(values.begin(), values.end(), [&](double y) { return y == values[0]; }))
        return volume * eval(t, values[0]);
    const double v = factorial(d) * volume * divided_difference(t, d, values);
    return std::max(v, 0.0);
}

double simplex_integral(const Transformation& t, const std::vector<double>& values, double volume,
                        std::vector<double>& grad) {
    const double v = simplex_integral(t, values, volume);
    const int d = static_cast<int>(values.size()) - 1;
    grad.assign(d + 1, 0.0);
    if (t.kind == Kind::PowerConvex && std::all_of(values.begin(), values.end(), [](double y) { return y <= 0.0; }))
        return v;
    std::vector<double> z(values);
    z.push_back(0.0);
    for (int k = 0; k <= d; ++k) {
        z[d + 1] = values[k];
        grad[k] = factorial(d) * volume * divided_difference(t, d, z);
    }
    return v;
}

double simplex_integral_mc(const Transformation& t, const std::vector<double>& values, double volume, long mc_budget,
                           std::uint64_t seed) {
    const int d = static_cast<int>(values.size()) - 1;
    std::mt19937_64 rng(seed);
    std::exponential_distribution<double> E(1.0);
    std::vector<double> w(d + 1);
    double mean = 0.0;
    for (long i = 0; i < mc_budget; ++i) {
        double s = 0.0;
        for (auto& x : w) s += (x = E(rng));
        double y = 0.0;
        for (int k = 0; k <= d; ++k) y += w[k] / s * values[k];
        mean += (eval(t, y) - mean) / static_cast<double>(i + 1);
    }
    return volume * mean;
}

namespace {
// Pairwise summation for an order-independent, well-conditioned total.
double pairwise_sum(const double* v, std::size_t n) {
    if (n <= 8) {
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i) s += v[i];
        return s;
    }
    const std::size_t h = n / 2;
    return pairwise_sum(v, h) + pairwise_sum(v + h, n - h);
}

std::vector<double> vertex_values(const PolyhedralFn& f, const Simplex& S) {
    std::vector<double> y(f.d + 1);
    for (int k = 0; k <= f.d; ++k) y[k] = f.heights[S.v[k]];
    return y;
}

template <class Ex>
[[noreturn]] void rethrow_with_index(const Ex& e, std::size_t s) {
    throw Ex(std::string(e.what()) + " (simplex " + std::to_string(s) + ")");
}
}  // namespace

double integrate_poly(const Transformation& t, const PolyhedralFn& f) {
    if (!t.decreasing()) throw ParameterError("integrate_poly: transformation must be decreasing");
    std::vector<double> parts(f.simplices.size());
    for (std::size_t s = 0; s < f.simplices.size(); ++s) {
        try {
            parts[s] = simplex_integral(t, vertex_values(f, f.simplices[s]), f.simplices[s].volume);
        } catch (const NonfiniteError& e) {
            rethrow_with_index(e, s);
        } catch (const AntiderivUnavailable& e) {
            rethrow_with_index(e, s);
        }
    }
    return pairwise_sum(parts.data(), parts.size());
}

double integrate_poly(const Transformation& t, const PolyhedralFn& f, std::vector<double>& grad) {
    if (!t.decreasing()) throw ParameterError("integrate_poly: transformation must be decreasing");
    grad.assign(f.points.size(), 0.0);
    std::vector<double> parts(f.simplices.size()), g;
    for (std::size_t s = 0; s < f.simplices.size(); ++s) {
        const Simplex& S = f.simplices[s];
        try {
            parts[s] = simplex_integral(t, vertex_values(f, S), S.volume, g);
        } catch (const NonfiniteError& e) {
            rethrow_with_index(e, s);
        } catch (const AntiderivUnavailable& e) {
            rethrow_with_index(e, s);
        }
        for (int k = 0; k <= f.d; ++k) grad[S.v[k]] += g[k];
    }
    return pairwise_sum(parts.data(), parts.size());
}

double integrate_hull(const Transformation& t, const PointSet& X, const std::vector<double>& y,
                      std::vector<double>& grad) {
    if (!t.decreasing()) throw ParameterError("integrate_hull: transformation must be decreasing");
    const int d = X.d;
    const auto cells = detail::lower_hull_simplices(X, y);
    grad.assign(X.size(), 0.0);
    std::vector<double> parts, vals(d + 1), g;
    parts.reserve(cells.size());
    for (const auto& v : cells) {
        double e[3][3] = {};
        for (int k = 0; k < d; ++k)
            for (int c = 0; c < d; ++c) e[k][c] = X[v[k + 1]][c] - X[v[0]][c];
        double det;
        if (d == 1)
            det = e[0][0];
        else if (d == 2)
            det = e[0][0] * e[1][1] - e[0][1] * e[1][0];
        else
            det = e[0][0] * (e[1][1] * e[2][2] - e[1][2] * e[2][1]) - e[0][1] * (e[1][0] * e[2][2] - e[1][2] * e[2][0]) +
                  e[0][2] * (e[1][0] * e[2][1] - e[1][1] * e[2][0]);
        const double vol = std::fabs(det) / factorial(d);
        if (!(vol > 0.0)) continue;
        for (int k = 0; k <= d; ++k) vals[k] = y[v[k]];
        parts.push_back(simplex_integral(t, vals, vol, g));
        for (int k = 0; k <= d; ++k) grad[v[k]] += g[k];
    }
    return pairwise_sum(parts.data(), parts.size());
}

namespace {
void check_max_affine(const Transformation& t, const MaxAffineFn& f) {
    if (t.decreasing()) throw ParameterError("integrate_max_affine: transformation must be increasing");
    if (f.pieces.empty()) throw ParameterError("integrate_max_affine: no pieces");
    for (const auto& p : f.pieces) {
        for (int c = 0; c < f.d; ++c)
            if (!(p.a[c] < 0.0)) throw DivergenceError("integrate_max_affine: slopes must be negative");
        if (!std::isfinite(p.b) || !(p.b < t.y_inf)) throw DivergenceError("integrate_max_affine: offset not below y_inf");
    }
}

}  // namespace

IntegralEstimate integrate_max_affine(const Transformation& t, const MaxAffineFn& f, long mc_budget,
                                      std::uint64_t seed) {
    check_max_affine(t, f);
    IntegralEstimate r;
    if (f.d == 1) {
        const auto segs = envelope_1d(f);
        std::vector<double> parts;
        for (const auto& sg : segs) {
            const auto& p = f.pieces[sg.piece];
            const double a = p.a[0], yl = a * sg.l + p.b;
            if (std::isinf(sg.r)) {
                // tail: A_1 vanishes at -inf for both increasing kinds
                parts.push_back(-antideriv_k(t, 1, yl) / a);
            } else if (sg.r > sg.l) {
                parts.push_back(simplex_integral(t, {yl, a * sg.r + p.b}, sg.r - sg.l));
            }
        }
        r.estimate = pairwise_sum(parts.data(), parts.size());
        return r;
    }
    if (mc_budget < 1) throw ParameterError("integrate_max_affine: mc_budget must be positive");
    // Mixture proposal: piece k alone, h(b_k + a_k.x) on the orthant, has mass J_k in closed form.
    // Since h(g) <= sum_k h(piece_k), the weights h(g) / sum_k h(piece_k) * sum_k J_k stay bounded.
    const int d = f.d;
    const std::size_t m = f.pieces.size();
    std::vector<double> lJ(m, -kInf);
    double lmax = -kInf;
    for (std::size_t k = 0; k < m; ++k) {
        const auto& p = f.pieces[k];
        if (t.kind == Kind::PowerConvex && !(p.b > 0.0)) continue;
        double l = t.kind == Kind::LogConvex ? p.b : std::log(antideriv_k(t, d, p.b));
        for (int c = 0; c < d; ++c) l -= std::log(-p.a[c]);
        lJ[k] = l;
        lmax = std::max(lmax, l);
    }
    if (!std::isfinite(lmax)) {
        if (lmax > 0.0) throw NonfiniteError("integrate_max_affine: integral is infinite");
        return r;
    }
    std::vector<double> wts(m);
    double sumw = 0.0;
    for (std::size_t k = 0; k < m; ++k) sumw += (wts[k] = std::exp(lJ[k] - lmax));
    const double logZ = lmax + std::log(sumw);
    std::mt19937_64 rng(seed);
    std::discrete_distribution<std::size_t> pick(wts.begin(), wts.end());
    std::exponential_distribution<double> E(1.0);
    std::gamma_distribution<double> G(t.kind == Kind::PowerConvex ? t.s + 1.0 : 1.0, 1.0);
    std::vector<double> x(d);
    double mean = 0.0, m2 = 0.0;
    for (long i = 0; i < mc_budget; ++i) {
        const auto& p = f.pieces[pick(rng)];
        if (t.kind == Kind::LogConvex) {
            for (int c = 0; c < d; ++c) x[c] = E(rng) / -p.a[c];
        } else {
            // (u, rest)/b ~ Dirichlet(1, ..., 1, s+1) and x = u / |a|
            double tot = G(rng);
            for (int c = 0; c < d; ++c) tot += (x[c] = E(rng));
            for (int c = 0; c < d; ++c) x[c] *= p.b / tot / -p.a[c];
        }
        const double g = f.eval(x.data());
        double s = 0.0;
        for (const auto& q : f.pieces) {
            double v = q.b;
            for (int c = 0; c < d; ++c) v += q.a[c] * x[c];
            if (t.kind == Kind::LogConvex)
                s += std::exp(v - g);
            else if (v > 0.0)
                s += std::pow(v / g, t.s);
        }
        const double w = 1.0 / s;
        const double dlt = w - mean;
        mean += dlt / static_cast<double>(i + 1);
        m2 += dlt * (w - mean);
    }
    const double Z = std::exp(logZ);
    r.estimate = Z * mean;
    r.std_error = mc_budget > 1 ? Z * std::sqrt(m2 / (mc_budget - 1) / mc_budget) : 0.0;
    return r;
}

namespace {
struct YGrid {
    std::vector<double> y, hp, cum;  // nodes, h'(nodes), cumulative trapezoid of h' from y[0]
    std::string warning;

    YGrid(const Transformation& t, double lo, double hi, int n = 400) {
        y.resize(n);
        hp.resize(n);
        cum.assign(n, 0.0);
        for (int i = 0; i < n; ++i) {
            y[i] = lo + (hi - lo) * i / (n - 1);
            hp[i] = (t.kind == Kind::PowerConvex && !(y[i] > 0.0)) ? 0.0 : deriv(t, y[i]);
        }
        for (int i = 1; i < n; ++i) {
            cum[i] = cum[i - 1] + 0.5 * (hp[i] + hp[i - 1]) * (y[i] - y[i - 1]);
            const double a = std::fabs(hp[i]), b = std::fabs(hp[i - 1]);
            if (warning.empty() && std::max(a, b) > 1e3 * std::min(a, b) && std::min(a, b) > 0.0)
                warning = "layer_cake_integral: h' varies by more than 1e3 across a grid cell; refine the grid";
        }
    }
    // Trapezoid integral of h' from y[0] to v, linear h' inside the cell.
    double upto(double v) const {
        if (v <= y.front()) return 0.0;
        if (v >= y.back()) return cum.back();
        const double step = y[1] - y[0];
        std::size_t i = std::min<std::size_t>(static_cast<std::size_t>((v - y[0]) / step), y.size() - 2);
        const double r = v - y[i];
        const double hv = hp[i] + (hp[i + 1] - hp[i]) * r / step;
        return cum[i] + 0.5 * (hp[i] + hv) * r;
    }
};

IntegralEstimate finish(double mean, double m2, long n, double vol) {
    IntegralEstimate r;
    r.estimate = vol * mean;
    r.std_error = n > 1 ? vol * std::sqrt(m2 / (n - 1) / n) : 0.0;
    return r;
}
}  // namespace

IntegralEstimate layer_cake_integral(const Transformation& t, const PolyhedralFn& f, double a, long mc_budget,
                                     std::uint64_t seed) {
    if (!t.decreasing()) throw ParameterError("layer_cake_integral: polyhedral input needs a decreasing transformation");
    if (mc_budget < 2) throw ParameterError("layer_cake_integral: mc_budget too small");
    const double ymax = f.max_height();
    if (a >= ymax) return {};
    const double lo_y = std::max(a, f.min_height());
    YGrid grid(t, lo_y, ymax);
    const double hmax = eval(t, ymax);
    auto [lo, hi] = f.bbox();
    double vol = 1.0;
    for (int c = 0; c < f.d; ++c) vol *= hi[c] - lo[c];
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> U(0.0, 1.0);
    std::vector<double> x(f.d);
    double mean = 0.0, m2 = 0.0;
    for (long i = 0; i < mc_budget; ++i) {
        for (int c = 0; c < f.d; ++c) x[c] = lo[c] + (hi[c] - lo[c]) * U(rng);
        const double g = f.eval(x.data());
        double v = 0.0;
        // h(g) = h(ymax) - int_g^ymax h'(y) dy
        if (std::isfinite(g) && g > a) v = hmax - (grid.cum.back() - grid.upto(g));
        const double dlt = v - mean;
        mean += dlt / static_cast<double>(i + 1);
        m2 += dlt * (v - mean);
    }
    IntegralEstimate r = finish(mean, m2, mc_budget, vol);
    r.warning = grid.warning;
    return r;
}

IntegralEstimate layer_cake_integral(const Transformation& t, const MaxAffineFn& f, double a, long mc_budget,
                                     std::uint64_t seed) {
    check_max_affine(t, f);
    if (mc_budget < 2) throw ParameterError("layer_cake_integral: mc_budget too small");
    const double ylo = t.kind == Kind::PowerConvex ? 0.0 : a - 40.0;
    if (a <= ylo) return {};
    const double R = superlevel_box(f, ylo);
    if (!(R > 0.0)) return {};
    YGrid grid(t, ylo, a);
    const double vol = std::pow(R, f.d);
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> U(0.0, R);
    std::vector<double> x(f.d);
    double mean = 0.0, m2 = 0.0;
    for (long i = 0; i < mc_budget; ++i) {
        for (int c = 0; c < f.d; ++c) x[c] = U(rng);
        const double g = f.eval(x.data());
        const double v = (g > ylo && g <= a) ? grid.upto(g) : 0.0;
        const double dlt = v - mean;
        mean += dlt / static_cast<double>(i + 1);
        m2 += dlt * (v - mean);
    }
    IntegralEstimate r = finish(mean, m2, mc_budget, vol);
    r.warning = grid.warning;
    return r;
}

namespace {
// Root of T(c) = 1 for monotone T; `up` is true when T increases with c.
template <class Fn>
double solve_unit(Fn T, bool up, double c_lo_limit) {
    auto G = [&](double c) { return std::log(T(c)); };
    double a = 0.0, b = 0.0;
    double ga = G(0.0), gb = ga;
    if (ga == 0.0) return 0.0;
    // need T > 1 on one end and T < 1 on the other
    const bool move_right = up ? (ga < 0.0) : (ga > 0.0);
    if (move_right) {
        double step = 1.0;
        for (int k = 0; k < 200; ++k, step *= 2.0) {
            b = a + step;
            gb = G(b);
            if ((gb > 0.0) != (ga > 0.0)) break;
            a = b;
            ga = gb;
        }
    } else {
        double step = 1.0;
        for (int k = 0; k < 200; ++k, step *= 2.0) {
            double c = b - step;
            if (std::isfinite(c_lo_limit) && c <= c_lo_limit) c = c_lo_limit + 0.5 * (b - c_lo_limit);
            a = c;
            ga = G(a);
            if ((ga > 0.0) != (gb > 0.0)) break;
            b = a;
            gb = ga;
        }
    }
    if ((ga > 0.0) == (gb > 0.0)) throw BracketFailure("normalize: T(c) never crosses 1");
    // T may vanish or overflow at an end; bisect until both ends are finite
    for (int k = 0; k < 200 && !(std::isfinite(ga) && std::isfinite(gb)); ++k) {
        const double c = 0.5 * (a + b), gc = G(c);
        if (gc == 0.0) return c;
        if ((gc > 0.0) == (ga > 0.0)) {
            a = c;
            ga = gc;
        } else {
            b = c;
            gb = gc;
        }
    }
    if (!std::isfinite(ga) || !std::isfinite(gb)) throw BracketFailure("normalize: T(c) never crosses 1");
    if (ga == 0.0) return a;
    if (gb == 0.0) return b;
    std::uintmax_t iters = 200;
    auto res = boost::math::tools::toms748_solve(G, a, b, ga, gb, boost::math::tools::eps_tolerance<double>(52), iters);
    const double c1 = res.first, c2 = res.second;
    return std::fabs(G(c1)) <= std::fabs(G(c2)) ? c1 : c2;
}
}  // namespace

NormalizedPoly normalize(const Transformation& t, const PolyhedralFn& f) {
    if (!t.decreasing()) throw ParameterError("normalize: polyhedral input needs a decreasing transformation");
    NormalizedPoly r;
    if (t.kind == Kind::LogConcave) {
        const double T0 = integrate_poly(t, f);
        if (!(T0 > 0.0) || !std::isfinite(T0)) throw BracketFailure("normalize: integral is not positive and finite");
        r.c = std::log(T0);
    } else {
        // start where every vertex value is inside the positive range
        const double m = f.min_height();
        const double shift = m > 0.0 ? 0.0 : 1.0 - m;
        r.c = shift + solve_unit([&](double c) { return integrate_poly(t, f.shifted(c + shift)); }, false, -m - shift);
    }
    r.f = f.shifted(r.c);
    return r;
}

NormalizedMaxAffine normalize(const Transformation& t, const MaxAffineFn& f, long mc_budget, std::uint64_t seed) {
    check_max_affine(t, f);
    NormalizedMaxAffine r;
    auto T = [&](double c) { return integrate_max_affine(t, f.shifted(c), mc_budget, seed).estimate; };
    if (t.kind == Kind::LogConvex) {
        const double T0 = T(0.0);
        if (!(T0 > 0.0) || !std::isfinite(T0)) throw BracketFailure("normalize: integral is not positive and finite");
        r.c = -std::log(T0);
    } else {
        double B = -kInf;
        for (const auto& p : f.pieces) B = std::max(B, p.b);
        // T vanishes for c <= -B; start the search where T is positive
        const double shift = B > 0.0 ? 0.0 : 1.0 - B;
        r.c = shift + solve_unit([&](double c) { return T(c + shift); }, true, -B - shift);
    }
    r.f = f.shifted(r.c);
    return r;
}

}  // namespace csmle
