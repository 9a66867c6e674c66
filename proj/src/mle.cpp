#include "csmle/mle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "csmle/integrate.hpp"
#include "csmle/optim.hpp"

namespace csmle {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();

std::vector<char> vertex_flags(const PolyhedralFn& f) {
    std::vector<char> v(f.points.size(), 0);
    for (const auto& S : f.simplices)
        for (int k = 0; k <= f.d; ++k) v[S.v[k]] = 1;
    return v;
}

// Gaussian product-kernel pilot density at the sample points (Silverman bandwidths).
std::vector<double> pilot_density(const PointSet& X) {
    const int d = X.d;
    const std::size_t n = X.size();
    std::vector<double> bw(d);
    const double factor = std::pow(4.0 / ((d + 2.0) * n), 1.0 / (d + 4.0));
    for (int c = 0; c < d; ++c) {
        double m = 0.0, s = 0.0;
        for (std::size_t i = 0; i < n; ++i) m += X[i][c];
        m /= n;
        for (std::size_t i = 0; i < n; ++i) s += (X[i][c] - m) * (X[i][c] - m);
        s = std::sqrt(s / std::max<std::size_t>(1, n - 1));
        bw[c] = std::max(s, 1e-12) * factor;
    }
    double norm = 1.0;
    for (int c = 0; c < d; ++c) norm *= bw[c] * std::sqrt(2.0 * M_PI);
    std::vector<double> p(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        double acc = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            double q = 0.0;
            for (int c = 0; c < d; ++c) {
                const double z = (X[i][c] - X[j][c]) / bw[c];
                q += z * z;
            }
            acc += std::exp(-0.5 * q);
        }
        p[i] = acc / (n * norm);
    }
    return p;
}

// Perturbs the first n parameters (heights or log heights) for restart studies.
void jitter(std::vector<double>& theta, std::size_t n, const FitConfig& cfg) {
    if (!(cfg.init_jitter > 0.0)) return;
    std::mt19937_64 rng(stream_seed(cfg.seed, "init-jitter"));
    std::normal_distribution<double> N(0.0, cfg.init_jitter);
    for (std::size_t i = 0; i < n; ++i) theta[i] += N(rng);
}

void finish_decreasing(FitResult& r, const Transformation& t, const PointSet& X, const std::vector<double>& y,
                       double tol) {
    PolyhedralFn hull = lower_convex_hull(X, y);
    r.self_norm_error = std::fabs(integrate_poly(t, hull) - 1.0);
    auto nz = normalize(t, hull);
    r.poly = nz.f;
    r.c_norm = nz.c;
    const double mass = integrate_poly(t, r.poly);
    if (!(std::fabs(mass - 1.0) <= tol))
        r.warnings.push_back("normalized integral is " + std::to_string(mass) + ", outside normalize_tol");
    double ll = 0.0;
    for (double h : r.poly.heights) ll += log_eval(t, h);
    r.loglik = ll / X.size();
}
}  // namespace

double FitResult::g(const double* x) const {
    if (is_polyhedral) return poly.eval(x);
    return max_affine.eval(x);
}

double FitResult::density(const double* x) const {
    if (is_polyhedral) {
        const double v = poly.eval(x);
        if (!std::isfinite(v)) return 0.0;
        return eval(transform, v);
    }
    for (int c = 0; c < max_affine.d; ++c)
        if (x[c] < 0.0) return 0.0;
    return eval(transform, max_affine.eval(x));
}

ExistenceReport check_existence(const Transformation& t, const PointSet& points) {
    ExistenceReport r;
    const int d = points.d;
    auto fail = [&](const char* cond, std::string msg) {
        r.ok = false;
        r.condition = cond;
        r.message = std::move(msg);
        return r;
    };
    if (d < 1) return fail("dimension", "points must have at least one coordinate");
    if (t.decreasing() && d > 3) return fail("dimension", "decreasing fits support d <= 3");
    int nd = 0;
    try {
        nd = existence_threshold(t, d);
    } catch (const ParameterError& e) {
        return fail("model_parameters", e.what());
    }
    const std::size_t n = points.size();
    if (n < static_cast<std::size_t>(nd))
        return fail("sample_size", "n = " + std::to_string(n) + " is below the existence threshold n_d = " +
                                       std::to_string(nd));
    for (double v : points.x)
        if (!std::isfinite(v)) return fail("finite", "points must be finite");
    if (!t.decreasing()) {
        for (std::size_t i = 0; i < n; ++i)
            for (int c = 0; c < d; ++c)
                if (!(points[i][c] > 0.0))
                    return fail("orthant_interior",
                                "point " + std::to_string(i) + " is not in the open positive orthant");
    }
    if (!general_position(points)) return fail("general_position", "points are not in general position");
    return r;
}

ObjectiveValue objective_dec(const Transformation& t, const PointSet& points, const std::vector<double>& heights) {
    if (!t.decreasing()) throw ParameterError("objective_dec: transformation must be decreasing");
    for (double y : heights)
        if (!(y > t.y_inf && y < t.y0)) throw NonfiniteError("objective_dec: height at or beyond a limit point");
    const std::size_t n = points.size();
    PolyhedralFn f = lower_convex_hull(points, heights);
    ObjectiveValue r;
    std::vector<double> igrad;
    const double I = integrate_poly(t, f, igrad);
    const auto isv = vertex_flags(f);
    r.subgradient.assign(n, 0.0);
    double ll = 0.0;
    double bary[4];
    for (std::size_t i = 0; i < n; ++i) {
        const double y = f.heights[i];
        ll += log_eval(t, y);
        const double w = log_deriv(t, y) / n;
        if (isv[i]) {
            r.subgradient[i] += w;
        } else {
            const int s = f.locate(points[i], bary);
            if (s < 0) continue;
            for (int k = 0; k <= f.d; ++k) r.subgradient[f.simplices[s].v[k]] += w * bary[k];
        }
    }
    for (std::size_t i = 0; i < n; ++i) r.subgradient[i] -= igrad[i];
    r.value = ll / n - I + 1.0;
    return r;
}

FitResult fit_decreasing(const PointSet& X, const FitConfig& cfg) {
    const Transformation& t = cfg.transform;
    if (!t.decreasing()) throw ParameterError("fit_decreasing: transformation must be decreasing");
    auto rep = check_existence(t, X);
    if (!rep.ok) throw InfeasibleError("fit_decreasing: " + rep.message);
    const int d = X.d;
    const std::size_t n = X.size();
    FitResult r;
    r.transform = t;
    r.is_polyhedral = true;

    if (n == static_cast<std::size_t>(d + 1)) {
        std::vector<int> idx(d + 1);
        std::iota(idx.begin(), idx.end(), 0);
        const double c = inverse(t, 1.0 / simplex_volume(X, idx.data()));
        finish_decreasing(r, t, X, std::vector<double>(n, c), cfg.normalize_tol);
        r.converged = true;
        r.stop_reason = "n = d + 1: uniform density on the simplex";
        return r;
    }

    const bool logparam = t.kind == Kind::PowerConcave;
    const auto p = pilot_density(X);
    std::vector<double> theta(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double y = inverse(t, std::max(p[i], 1e-300));
        theta[i] = logparam ? std::log(y) : y;
    }
    jitter(theta, n, cfg);
    std::vector<double> y(n), igrad;
    auto fg = [&](const std::vector<double>& th, std::vector<double>& g) -> double {
        for (std::size_t i = 0; i < n; ++i) y[i] = logparam ? std::exp(th[i]) : th[i];
        double I;
        try {
            I = integrate_hull(t, X, y, igrad);
        } catch (const Error&) {
            return kInf;
        }
        if (!std::isfinite(I)) return kInf;
        double ll = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            ll += log_eval(t, y[i]);
            double gi = log_deriv(t, y[i]) / n - igrad[i];
            if (logparam) gi *= y[i];
            g[i] = -gi;
        }
        return -(ll / n - I + 1.0);
    };
    RalgOptions opt;
    opt.max_iters = cfg.max_iters > 0 ? cfg.max_iters : 10000;
    opt.grad_tol = cfg.grad_tol;
    opt.h0 = cfg.step_init;
    auto res = ralg_minimize(fg, theta, opt);
    for (std::size_t i = 0; i < n; ++i) y[i] = logparam ? std::exp(res.x[i]) : res.x[i];
    r.iters = res.iters;
    r.converged = res.converged;
    r.stop_reason = res.reason;
    r.objective_trace.reserve(res.trace.size());
    for (double v : res.trace) r.objective_trace.push_back(-v);
    r.subgradient_norms = res.grad_norms;
    finish_decreasing(r, t, X, y, cfg.normalize_tol);
    if (r.self_norm_error > 1e-6)
        r.warnings.push_back("fitted function was not self-normalized to 1e-6 before the safeguard step");
    return r;
}

namespace {
// Parameters: v[0..n) heights (log heights for power-convex), u[n + i*d + c] log(-slope).
struct IncParam {
    const Transformation& t;
    const PointSet& X;
    int d;
    std::size_t n;

    double height(const std::vector<double>& th, std::size_t i) const {
        return t.kind == Kind::PowerConvex ? std::exp(th[i]) : th[i];
    }
    MaxAffineFn build(const std::vector<double>& th) const {
        MaxAffineFn f;
        f.d = d;
        f.pieces.resize(n);
        for (std::size_t i = 0; i < n; ++i) {
            auto& p = f.pieces[i];
            p.a.resize(d);
            p.b = height(th, i);
            for (int c = 0; c < d; ++c) {
                p.a[c] = -std::exp(th[n + i * d + c]);
                p.b -= p.a[c] * X[i][c];
            }
        }
        return f;
    }
};

// Exact integral of h(g) over [0, inf) for d = 1 with gradients in (b_i, a_i).
double integral_1d(const Transformation& t, const MaxAffineFn& f, std::vector<double>& db, std::vector<double>& da) {
    db.assign(f.pieces.size(), 0.0);
    da.assign(f.pieces.size(), 0.0);
    double I = 0.0;
    for (const auto& sg : envelope_1d(f)) {
        const auto& p = f.pieces[sg.piece];
        const double a = p.a[0], l = sg.l, yl = a * l + p.b;
        if (std::isinf(sg.r)) {
            const double A1 = antideriv_k(t, 1, yl), h = eval(t, yl);
            I += -A1 / a;
            db[sg.piece] += -h / a;
            da[sg.piece] += A1 / (a * a) - l * h / a;
        } else {
            const double w = sg.r - l, yr = a * sg.r + p.b;
            if (!(w > 0.0)) continue;
            I += w * divided_difference(t, 1, {yl, yr});
            const double ih = w * divided_difference(t, 0, {yl, yr});
            db[sg.piece] += ih;
            da[sg.piece] += w * w * divided_difference(t, 1, {yl, yr, yr}) + l * ih;
        }
    }
    return I;
}

// Importance-sampled integral with a fixed sample set (common random numbers).
struct FixedSample {
    PointSet x;
    std::vector<double> inv_q;
};

// Fixed sample from the mixture of the widened pieces of f (slopes scaled by 0.7), each piece
// contributing its closed-form orthant mass; inv_q stores 1/q at every point.
FixedSample make_sample(const Transformation& t, const MaxAffineFn& f, long N, std::uint64_t seed) {
    const int d = f.d;
    MaxAffineFn w = f;
    for (auto& p : w.pieces)
        for (auto& v : p.a) v *= 0.7;
    const std::size_t m = w.pieces.size();
    std::vector<double> lJ(m, -kInf);
    double lmax = -kInf;
    for (std::size_t k = 0; k < m; ++k) {
        const auto& p = w.pieces[k];
        if (t.kind == Kind::PowerConvex && !(p.b > 0.0)) continue;
        double l = t.kind == Kind::LogConvex ? p.b : std::log(antideriv_k(t, d, p.b));
        for (int c = 0; c < d; ++c) l -= std::log(-p.a[c]);
        lmax = std::max(lmax, lJ[k] = l);
    }
    std::vector<double> wts(m);
    double sumw = 0.0;
    for (std::size_t k = 0; k < m; ++k) sumw += (wts[k] = std::exp(lJ[k] - lmax));
    const double logZ = lmax + std::log(sumw);
    FixedSample s;
    s.x = PointSet(d, N);
    s.inv_q.resize(N);
    std::mt19937_64 rng(seed);
    std::discrete_distribution<std::size_t> pick(wts.begin(), wts.end());
    std::exponential_distribution<double> E(1.0);
    std::gamma_distribution<double> G(t.kind == Kind::PowerConvex ? t.s + 1.0 : 1.0, 1.0);
    for (long i = 0; i < N; ++i) {
        const auto& p = w.pieces[pick(rng)];
        double* x = s.x[i];
        if (t.kind == Kind::LogConvex) {
            for (int c = 0; c < d; ++c) x[c] = E(rng) / -p.a[c];
        } else {
            double tot = G(rng);
            for (int c = 0; c < d; ++c) tot += (x[c] = E(rng));
            for (int c = 0; c < d; ++c) x[c] *= p.b / tot / -p.a[c];
        }
        // q(x) = sum_k h(piece_k(x)) / Z, accumulated relative to the top piece
        const double top = w.eval(x);
        double sum = 0.0;
        for (const auto& q : w.pieces) {
            double v = q.b;
            for (int c = 0; c < d; ++c) v += q.a[c] * x[c];
            if (t.kind == Kind::LogConvex)
                sum += std::exp(v - top);
            else if (v > 0.0)
                sum += std::pow(v / top, t.s);
        }
        s.inv_q[i] = std::exp(logZ - log_eval(t, top) - std::log(sum));
    }
    return s;
}

double integral_mc(const Transformation& t, const MaxAffineFn& f, const FixedSample& s, std::vector<double>& db,
                   std::vector<std::vector<double>>& da) {
    const int d = f.d;
    const std::size_t N = s.inv_q.size();
    db.assign(f.pieces.size(), 0.0);
    da.assign(f.pieces.size(), std::vector<double>(d, 0.0));
    double I = 0.0;
    for (std::size_t k = 0; k < N; ++k) {
        int arg;
        const double g = f.eval(s.x[k], arg);
        const double hv = eval(t, g);
        if (hv == 0.0) continue;
        I += hv * s.inv_q[k];
        const double w = deriv(t, g) * s.inv_q[k];
        db[arg] += w;
        for (int c = 0; c < d; ++c) da[arg][c] += w * s.x[k][c];
    }
    I /= N;
    for (auto& v : db) v /= N;
    for (auto& row : da)
        for (auto& v : row) v /= N;
    // Every piece alone over the whole orthant bounds the integral from below; a piece whose
    // dominance region no sample reaches would otherwise be free.
    int best = -1;
    double lbest = -kInf;
    for (std::size_t i = 0; i < f.pieces.size(); ++i) {
        const auto& p = f.pieces[i];
        double lj;
        if (t.kind == Kind::LogConvex) {
            lj = p.b;
        } else {
            if (!(p.b > 0.0)) continue;
            lj = (t.s + d) * std::log(p.b);
            for (int k = 1; k <= d; ++k) lj -= std::log(t.s + k);
        }
        for (int c = 0; c < d; ++c) lj -= std::log(-p.a[c]);
        if (lj > lbest) {
            lbest = lj;
            best = static_cast<int>(i);
        }
    }
    if (best >= 0 && lbest > std::log(I)) {
        const double J = std::exp(lbest);
        const auto& p = f.pieces[best];
        for (auto& v : db) v = 0.0;
        for (auto& row : da)
            for (auto& v : row) v = 0.0;
        db[best] = t.kind == Kind::LogConvex ? J : J * (t.s + d) / p.b;
        for (int c = 0; c < d; ++c) da[best][c] = -J / p.a[c];
        return J;
    }
    return I;
}
}  // namespace

FitResult fit_increasing(const PointSet& X, const FitConfig& cfg) {
    const Transformation& t = cfg.transform;
    if (t.decreasing()) throw ParameterError("fit_increasing: transformation must be increasing");
    auto rep = check_existence(t, X);
    if (!rep.ok) throw InfeasibleError("fit_increasing: " + rep.message);
    const int d = X.d;
    const std::size_t n = X.size();
    FitResult r;
    r.transform = t;
    r.is_polyhedral = false;
    IncParam P{t, X, d, n};

    // pilot: product of Pareto-II marginals p(x) = prod (2/m)(1 + x/m)^-3 with m = 2 mean; g = h^-1(p)
    // is strictly convex and decreasing, and each site starts on its tangent plane
    std::vector<double> m(d, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (int c = 0; c < d; ++c) m[c] += 2.0 * X[i][c] / n;
    std::vector<double> theta(n * (d + 1)), slopes(n * d);
    for (std::size_t i = 0; i < n; ++i) {
        double lp = 0.0;
        for (int c = 0; c < d; ++c) lp += std::log(2.0 / m[c]) - 3.0 * std::log1p(X[i][c] / m[c]);
        const double y = t.kind == Kind::PowerConvex ? std::exp(lp / t.s) : lp;
        theta[i] = t.kind == Kind::PowerConvex ? lp / t.s : y;
        for (int c = 0; c < d; ++c) {
            double a = -3.0 / (m[c] + X[i][c]);
            if (t.kind == Kind::PowerConvex) a *= y / t.s;
            slopes[i * d + c] = a;
        }
    }
    for (std::size_t i = 0; i < n; ++i)
        for (int c = 0; c < d; ++c) theta[n + i * d + c] = std::log(-slopes[i * d + c]);
    jitter(theta, n, cfg);

    FixedSample sample;
    std::vector<double> db, da1;
    std::vector<std::vector<double>> da;
    auto fg = [&](const std::vector<double>& th, std::vector<double>& g) -> double {
        const MaxAffineFn f = P.build(th);
        double I;
        try {
            if (d == 1) {
                I = integral_1d(t, f, db, da1);
            } else {
                I = integral_mc(t, f, sample, db, da);
            }
        } catch (const Error&) {
            return kInf;
        }
        if (!std::isfinite(I)) return kInf;
        double ll = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double y = P.height(th, i);
            ll += log_eval(t, y);
            // d/dy_i: db since b = y - a.X
            double gy = log_deriv(t, y) / n - db[i];
            if (t.kind == Kind::PowerConvex) gy *= y;
            g[i] = -gy;
            for (int c = 0; c < d; ++c) {
                const double a = f.pieces[i].a[c];
                const double dac = (d == 1 ? da1[i] : da[i][c]) - X[i][c] * db[i];
                g[n + i * d + c] = a * dac;  // minus sign of the objective cancels that of -dI
            }
        }
        return -(ll / n - I + 1.0);
    };
    // d >= 2: a few rounds, each with a fixed sample drawn around the current estimate
    const int rounds = d == 1 ? 1 : 4;
    RalgOptions opt;
    const int budget_iters = cfg.max_iters > 0 ? cfg.max_iters : (d == 1 ? 10000 : 2000);
    opt.max_iters = std::max(1, budget_iters / rounds);
    opt.grad_tol = cfg.grad_tol;
    opt.h0 = cfg.step_init;
    RalgResult res;
    res.x = theta;
    for (int round = 0; round < rounds; ++round) {
        if (d >= 2)
            sample = make_sample(t, P.build(res.x), cfg.mc_budget,
                                 stream_seed(cfg.seed, "fit-round", round));
        res = ralg_minimize(fg, res.x, opt);
        r.iters += res.iters;
        for (double v : res.trace) r.objective_trace.push_back(-v);
        r.subgradient_norms.insert(r.subgradient_norms.end(), res.grad_norms.begin(), res.grad_norms.end());
    }
    r.converged = res.converged;
    r.stop_reason = res.reason;

    MaxAffineFn f = P.build(res.x);
    if (d == 1) f = simplify(f);
    else {
        f = simplify(f, &sample.x);
    }
    const long budget = d == 1 ? 0 : std::max<long>(cfg.mc_budget * 10, 200000);
    const std::uint64_t nseed = stream_seed(cfg.seed, "normalize");
    const auto I0 = integrate_max_affine(t, f, budget, nseed);
    r.self_norm_error = std::fabs(I0.estimate - 1.0);
    auto nz = normalize(t, f, budget, nseed);
    r.max_affine = nz.f;
    r.c_norm = nz.c;
    double ll = 0.0;
    for (std::size_t i = 0; i < n; ++i) ll += log_eval(t, r.max_affine.eval(X[i]));
    r.loglik = ll / n;
    if (d >= 2) {
        const auto chk = integrate_max_affine(t, r.max_affine, budget, nseed + 1);
        if (chk.std_error > cfg.grad_tol)
            r.warnings.push_back("Monte Carlo standard error of the final integral (" + std::to_string(chk.std_error) +
                                 ") exceeds grad_tol");
    }
    if (r.self_norm_error > 1e-6)
        r.warnings.push_back("fitted function was not self-normalized to 1e-6 before the safeguard step");
    return r;
}

FitResult fit(const PointSet& points, const FitConfig& cfg) {
    auto rep = check_existence(cfg.transform, points);
    if (!rep.ok) throw InfeasibleError(rep.condition + ": " + rep.message);
    return cfg.transform.decreasing() ? fit_decreasing(points, cfg) : fit_increasing(points, cfg);
}

double mean_loglik(const FitResult& r, const PointSet& points) {
    double ll = 0.0;
    for (std::size_t i = 0; i < points.size(); ++i) ll += std::log(r.density(points[i]));
    return ll / points.size();
}

nlohmann::json to_json(const FitResult& r) {
    nlohmann::json j;
    j["transform"] = to_json(r.transform);
    j["function_kind"] = r.is_polyhedral ? "polyhedral" : "max_affine";
    j["function"] = r.is_polyhedral ? to_json(r.poly) : to_json(r.max_affine);
    j["loglik"] = r.loglik;
    j["c_norm"] = r.c_norm;
    j["iters"] = r.iters;
    j["converged"] = r.converged;
    j["diagnostics"] = {{"objective_trace", r.objective_trace},
                        {"subgradient_norms", r.subgradient_norms},
                        {"warnings", r.warnings},
                        {"self_norm_error", r.self_norm_error},
                        {"stop_reason", r.stop_reason}};
    return j;
}

FitResult fit_result_from_json(const nlohmann::json& j) {
    FitResult r;
    r.transform = transformation_from_json(j.at("transform"));
    r.is_polyhedral = j.at("function_kind").get<std::string>() == "polyhedral";
    if (r.is_polyhedral)
        r.poly = polyhedral_from_json(j.at("function"));
    else
        r.max_affine = max_affine_from_json(j.at("function"));
    r.loglik = j.at("loglik").get<double>();
    r.c_norm = j.at("c_norm").get<double>();
    r.iters = j.at("iters").get<int>();
    r.converged = j.at("converged").get<bool>();
    if (j.contains("diagnostics")) {
        const auto& dg = j.at("diagnostics");
        r.objective_trace = dg.value("objective_trace", std::vector<double>{});
        r.subgradient_norms = dg.value("subgradient_norms", std::vector<double>{});
        r.warnings = dg.value("warnings", std::vector<std::string>{});
        r.self_norm_error = dg.value("self_norm_error", 0.0);
        r.stop_reason = dg.value("stop_reason", std::string{});
    }
    return r;
}

}  // namespace csmle
