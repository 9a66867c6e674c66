#include <doctest.h>

#include <cmath>
#include <random>

#include "csmle/integrate.hpp"
#include "csmle/mle.hpp"
#include "oracles.hpp"

using namespace csmle;

namespace {

PointSet normal_sample(int d, int n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> N(0.0, 1.0);
    PointSet X(d);
    std::vector<double> x(d);
    for (int i = 0; i < n; ++i) {
        for (auto& v : x) v = N(rng);
        X.push(x.data());
    }
    return X;
}

FitConfig config(const Transformation& t) {
    FitConfig c;
    c.transform = t;
    return c;
}

// Standard normal log density restricted to [lo, hi] and renormalized (d = 1).
double truth_loglik_1d(const PointSet& X) {
    double lo = X[0][0], hi = X[0][0];
    for (std::size_t i = 0; i < X.size(); ++i) lo = std::min(lo, X[i][0]), hi = std::max(hi, X[i][0]);
    const double mass = 0.5 * (std::erf(hi / std::sqrt(2.0)) - std::erf(lo / std::sqrt(2.0)));
    double ll = 0.0;
    for (std::size_t i = 0; i < X.size(); ++i) ll += -0.5 * X[i][0] * X[i][0] - 0.5 * std::log(2 * M_PI) - std::log(mass);
    return ll / X.size();
}

}  // namespace

TEST_CASE("mle: existence checks") {
    auto r = check_existence(Transformation::log_concave(), make_points(2, {{0, 0}, {1, 1}, {2, 2}}));
    CHECK_FALSE(r.ok);
    CHECK(r.condition == "general_position");
    r = check_existence(Transformation::power_concave(2.0), make_points(1, {{0.3}}));
    CHECK_FALSE(r.ok);
    CHECK(r.condition == "sample_size");
    r = check_existence(Transformation::log_convex(), make_points(2, {{1, 1}, {0, 2}, {2, 0.5}}));
    CHECK_FALSE(r.ok);
    CHECK(r.condition == "orthant_interior");
    CHECK(check_existence(Transformation::log_concave(), make_points(2, {{0, 0}, {1, 0}, {0, 1}})).ok);

    FitConfig cfg = config(Transformation::log_concave());
    try {
        fit(make_points(2, {{0, 0}, {1, 1}, {2, 2}}), cfg);
        FAIL("expected InfeasibleError");
    } catch (const InfeasibleError& e) {
        CHECK(std::string(e.what()).rfind("general_position", 0) == 0);
    }
    cfg.transform = Transformation::log_convex();
    CHECK_THROWS_AS(fit(make_points(1, {{0.0}, {1.0}, {2.0}}), cfg), InfeasibleError);
}

TEST_CASE("mle: objective at constant heights") {
    // unit square corners plus interior points: conv(X) has area 1
    auto X = make_points(2, {{0, 0}, {1, 0}, {0, 1}, {1, 1}, {0.3, 0.4}, {0.7, 0.2}, {0.5, 0.9}});
    for (double c : {-0.5, 0.0, 1.3}) {
        const auto lc = Transformation::log_concave();
        auto v = objective_dec(lc, X, std::vector<double>(X.size(), c));
        CHECK(v.value == doctest::Approx(-c - std::exp(-c) + 1.0).epsilon(1e-12));
        double sum = 0.0;
        for (double g : v.subgradient) sum += g;
        CHECK(sum == doctest::Approx(-1.0 + std::exp(-c)).epsilon(1e-10));
    }
    const auto pc = Transformation::power_concave(4.0);
    for (double c : {0.7, 1.0, 2.0}) {
        auto v = objective_dec(pc, X, std::vector<double>(X.size(), c));
        CHECK(v.value == doctest::Approx(-4 * std::log(c) - std::pow(c, -4.0) + 1.0).epsilon(1e-12));
        double sum = 0.0;
        for (double g : v.subgradient) sum += g;
        CHECK(sum == doctest::Approx(-4.0 / c + 4 * std::pow(c, -5.0)).epsilon(1e-10));
    }
    CHECK_THROWS_AS(objective_dec(pc, X, std::vector<double>(X.size(), 0.0)), NonfiniteError);
}

TEST_CASE("mle: objective subgradient vs finite differences") {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> U(0.5, 2.5);
    for (int d = 1; d <= 3; ++d) {
        auto X = normal_sample(d, 6 + 4 * d, 20 + d);
        for (const auto& t : {Transformation::log_concave(), Transformation::power_concave(d + 2.0)}) {
            std::vector<double> y(X.size());
            for (auto& v : y) v = U(rng);
            auto base = objective_dec(t, X, y);
            for (std::size_t i = 0; i < y.size(); ++i) {
                const double h = 1e-6;
                auto yp = y, ym = y;
                yp[i] += h;
                ym[i] -= h;
                const double fd = (objective_dec(t, X, yp).value - objective_dec(t, X, ym).value) / (2 * h);
                CHECK(fd == doctest::Approx(base.subgradient[i]).epsilon(1e-5).scale(1.0));
            }
        }
    }
}

TEST_CASE("mle: d=1 three points vs Nelder-Mead oracle") {
    auto X = make_points(1, {{-1.0}, {0.0}, {1.0}});
    auto r = fit(X, config(Transformation::log_concave()));
    // oracle: the same objective written out for three points
    auto negobj = [](const std::vector<double>& y) {
        const double mid = std::min(y[1], 0.5 * (y[0] + y[2]));
        auto seg = [](double a, double b) { return b == a ? std::exp(-a) : -std::exp(-a) * std::expm1(a - b) / (b - a); };
        const double I = seg(y[0], mid) + seg(mid, y[2]);
        return -((-y[0] - mid - y[2]) / 3.0 - I + 1.0);
    };
    const auto best = oracle::nelder_mead(negobj, {1.0, 1.0, 1.0}, 0.5);
    CHECK(r.loglik == doctest::Approx(-negobj(best)).epsilon(1e-7));
    CHECK(integrate_poly(r.transform, r.poly) == doctest::Approx(1.0).epsilon(1e-10));
    // equally spaced points: the uniform density on [-1, 1]
    CHECK(r.loglik == doctest::Approx(-std::log(2.0)).epsilon(1e-9));
    double out = 1.5;
    CHECK(r.density(&out) == 0.0);
}

TEST_CASE("mle: n = d + 1 gives the uniform density") {
    auto X = make_points(2, {{0, 0}, {2, 0}, {0, 1}});
    for (const auto& t : {Transformation::log_concave(), Transformation::power_concave(6.0)}) {
        auto r = fit(X, config(t));
        double q[2] = {0.5, 0.25};
        CHECK(r.density(q) == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(r.loglik == doctest::Approx(0.0).scale(1.0).epsilon(1e-12));
        // stationary over constants
        const double c = r.poly.heights[0];
        auto v = objective_dec(t, X, std::vector<double>(3, c));
        double sum = 0.0;
        for (double g : v.subgradient) sum += g;
        CHECK(sum == doctest::Approx(0.0).scale(1.0).epsilon(1e-12));
    }
}

TEST_CASE("mle: power-convex s=1 two points vs 1-parameter oracle") {
    auto X = make_points(1, {{0.5}, {1.0}});
    auto r = fit(X, config(Transformation::power_convex(1.0)));
    // the fit is a triangle density 2(L - x)/L^2 on [0, L]; maximize its likelihood over L > 1
    const double L = oracle::bisect([](double L) { return -2 / L + 0.5 / (L - 0.5) + 0.5 / (L - 1.0); }, 1.0 + 1e-12, 100.0);
    for (double x : {0.5, 1.0, 0.0, 0.75}) {
        CHECK(r.density(&x) == doctest::Approx(2 * (L - x) / (L * L)).epsilon(1e-5));
    }
    CHECK(integrate_max_affine(r.transform, r.max_affine, 0).estimate == doctest::Approx(1.0).epsilon(1e-10));
    for (const auto& p : r.max_affine.pieces) CHECK(p.a[0] < 0.0);
}

TEST_CASE("mle: increasing d=1 structure and envelope bound") {
    std::mt19937_64 rng(5);
    std::exponential_distribution<double> E(1.0);
    PointSet X(1);
    for (int i = 0; i < 30; ++i) X.push({E(rng)});
    for (const auto& t : {Transformation::log_convex(), Transformation::power_convex(2.0)}) {
        auto r = fit(X, config(t));
        CHECK(integrate_max_affine(t, r.max_affine, 0).estimate == doctest::Approx(1.0).epsilon(1e-10));
        double prev = INFINITY, prev_slope = -INFINITY;
        for (const auto& s : envelope_1d(r.max_affine)) {
            const double a = r.max_affine.pieces[s.piece].a[0];
            CHECK(a < 0.0);
            CHECK(a > prev_slope);  // convex: slopes increase to the right
            prev_slope = a;
            double x = s.l;
            const double v = r.max_affine.eval(&x);
            CHECK(v <= prev);
            prev = v;
        }
        for (std::size_t i = 0; i < X.size(); ++i) CHECK(r.density(X[i]) <= 1.0 / X[i][0]);
    }
}

TEST_CASE("mle: decreasing fits dominate the truth and have the right structure") {
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
        auto X = normal_sample(1, 25, seed);
        auto r = fit(X, config(Transformation::log_concave()));
        CHECK(r.converged);
        CHECK(r.loglik >= truth_loglik_1d(X) - 1e-6);
        CHECK(std::fabs(integrate_poly(r.transform, r.poly) - 1.0) <= 1e-8);
        CHECK(r.self_norm_error <= 1e-6);
        CHECK(r.loglik == doctest::Approx(mean_loglik(r, X)).epsilon(1e-12));
    }
    // d = 2: truth restricted to conv(X), mass by triangle quadrature over the fitted triangulation
    auto X = normal_sample(2, 30, 9);
    auto r = fit(X, config(Transformation::log_concave()));
    double mass = 0.0;
    for (const auto& S : r.poly.simplices)
        mass += oracle::triangle_quadrature(
            [](double x, double y) { return std::exp(-0.5 * (x * x + y * y)) / (2 * M_PI); }, X[S.v[0]], X[S.v[1]],
            X[S.v[2]]);
    double ll = 0.0;
    for (std::size_t i = 0; i < X.size(); ++i)
        ll += -0.5 * (X[i][0] * X[i][0] + X[i][1] * X[i][1]) - std::log(2 * M_PI) - std::log(mass);
    CHECK(r.loglik >= ll / X.size() - 1e-6);
    CHECK(std::fabs(integrate_poly(r.transform, r.poly) - 1.0) <= 1e-8);
    double far[2] = {10.0, 10.0};
    CHECK(r.density(far) == 0.0);
}

TEST_CASE("mle: restarts agree in objective") {
    for (int d = 1; d <= 2; ++d) {
        auto X = normal_sample(d, 25, 40 + d);
        std::vector<double> lls;
        for (std::uint64_t s = 1; s <= 5; ++s) {
            auto cfg = config(Transformation::log_concave());
            cfg.seed = s;
            cfg.init_jitter = 0.5;
            lls.push_back(fit(X, cfg).loglik);
        }
        for (double v : lls) CHECK(v == doctest::Approx(lls[0]).epsilon(1e-6));
    }
}

TEST_CASE("mle: increasing d=2 Monte Carlo path") {
    std::mt19937_64 rng(8);
    std::exponential_distribution<double> E(1.0);
    PointSet X(2);
    for (int i = 0; i < 15; ++i) X.push({E(rng), E(rng)});
    auto cfg = config(Transformation::log_convex());
    cfg.max_iters = 400;
    auto r = fit(X, cfg);
    CHECK(std::isfinite(r.loglik));
    auto I = integrate_max_affine(r.transform, r.max_affine, 400000, 99);
    CHECK(std::fabs(I.estimate - 1.0) <= 4 * I.std_error + 1e-3);
    for (const auto& p : r.max_affine.pieces)
        for (double a : p.a) CHECK(a < 0.0);
}

TEST_CASE("mle: json round trip") {
    auto X = normal_sample(2, 12, 4);
    auto r = fit(X, config(Transformation::power_concave(4.0)));
    auto back = fit_result_from_json(nlohmann::json::parse(to_json(r).dump()));
    CHECK(back.loglik == r.loglik);
    CHECK(back.iters == r.iters);
    CHECK(back.objective_trace == r.objective_trace);
    double q[2] = {0.1, -0.2};
    CHECK(back.density(q) == r.density(q));
}
