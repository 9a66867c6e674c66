#include <doctest.h>

#include <cmath>
#include <random>

#include "csmle/integrate.hpp"
#include "oracles.hpp"

using namespace csmle;

namespace {

PolyhedralFn v_shape(double R) {
    auto X = make_points(1, {{-R}, {0.0}, {R}});
    return lower_convex_hull(X, {R, 0.0, R});
}

std::function<double(double)> hfun(const Transformation& t) {
    return [t](double y) { return eval(t, y); };
}

}  // namespace

TEST_CASE("integrate: simplex integral examples") {
    const auto lc = Transformation::log_concave();
    CHECK(simplex_integral(lc, {0.0, 1.0}, 1.0) == doctest::Approx(1 - std::exp(-1.0)).epsilon(1e-14));
    CHECK(simplex_integral(lc, {0.0, 1.0, 1.0}, 0.5) == doctest::Approx(1 - 2 * std::exp(-1.0)).epsilon(1e-12));
    for (const auto& t : {lc, Transformation::power_concave(5.0)})
        CHECK(simplex_integral(t, {1.3, 1.3, 1.3, 1.3}, 0.7) == doctest::Approx(0.7 * eval(t, 1.3)).epsilon(1e-14));
    CHECK_THROWS_AS(simplex_integral(Transformation::power_concave(2.0), {1.0, 2.0, 3.0}, 1.0), AntiderivUnavailable);
    CHECK_THROWS_AS(simplex_integral(Transformation::power_concave(4.0), {0.0, 2.0, 3.0}, 1.0), NonfiniteError);
    CHECK_THROWS_AS(simplex_integral(lc, {INFINITY, 2.0}, 1.0), NonfiniteError);
    // power-convex over nodes that straddle zero uses the positive part
    const auto pv = Transformation::power_convex(1.0);
    CHECK(simplex_integral(pv, {-1.0, 1.0}, 2.0) == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(simplex_integral(pv, {-1.0, -2.0}, 2.0) == 0.0);
}

TEST_CASE("integrate: simplex integral vs quadrature oracle") {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> U(0.0, 4.0);
    for (int d = 1; d <= 3; ++d) {
        const Transformation ts[] = {Transformation::log_concave(), Transformation::power_concave(d + 2.0),
                                     Transformation::log_convex(), Transformation::power_convex(1.5)};
        for (const auto& t : ts) {
            for (int rep = 0; rep < 10; ++rep) {
                std::vector<double> y(d + 1);
                for (auto& v : y) v = 0.2 + U(rng);
                const double I = simplex_integral(t, y, 0.8);
                const double Q = oracle::simplex_quadrature(hfun(t), y, 0.8);
                INFO("d=", d, " kind=", kind_name(t.kind), " y0=", y[0], " y1=", y[1]);
                CHECK(I == doctest::Approx(Q).epsilon(1e-9));
            }
        }
    }
}

TEST_CASE("integrate: Taylor and divided-difference branches agree at the seam") {
    for (int d = 1; d <= 3; ++d) {
        const Transformation ts[] = {Transformation::log_concave(), Transformation::power_concave(d + 2.0)};
        for (const auto& t : ts) {
            for (double base : {0.3, 1.0, 3.0}) {
                const double thr = t.is_power() ? kTaylorSwitch * base : kTaylorSwitch;
                for (double f : {0.999, 1.001}) {
                    std::vector<double> y(d + 1);
                    for (int k = 0; k <= d; ++k) y[k] = base + thr * f * k / d;
                    const double I = simplex_integral(t, y, 1.0);
                    const double Q = oracle::simplex_quadrature(hfun(t), y, 1.0);
                    CHECK(I == doctest::Approx(Q).epsilon(1e-8));
                }
                // tiny clusters with one separated node
                std::vector<double> y(d + 1, base);
                for (int k = 1; k <= d; ++k) y[k] = base + 1e-9 * k;
                y[d] = base + 1.0;
                CHECK(simplex_integral(t, y, 1.0) ==
                      doctest::Approx(oracle::simplex_quadrature(hfun(t), y, 1.0)).epsilon(1e-8));
            }
        }
    }
    auto p = plan_simplex_integral(Transformation::log_concave(), {1.0, 1.0 + 1e-3, 1.0}, 0.5);
    CHECK(p.method == IntegralMethod::Taylor);
    p = plan_simplex_integral(Transformation::log_concave(), {1.0, 2.0, 1.0}, 0.5);
    CHECK(p.method == IntegralMethod::DividedDifference);
    p = plan_simplex_integral(Transformation::power_concave(1.5), {1.0, 2.0, 1.0}, 0.5, true);
    CHECK(p.method == IntegralMethod::MonteCarlo);
    CHECK(run_plan(p, 200000, 3) > 0.0);
}

TEST_CASE("integrate: simplex gradient matches finite differences") {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> U(0.5, 2.5);
    for (int d = 1; d <= 3; ++d) {
        for (const auto& t : {Transformation::log_concave(), Transformation::power_concave(d + 1.5)}) {
            for (int rep = 0; rep < 10; ++rep) {
                std::vector<double> y(d + 1), g;
                for (auto& v : y) v = U(rng);
                if (rep == 0) y[1] = y[0];  // repeated node
                simplex_integral(t, y, 0.3, g);
                for (int k = 0; k <= d; ++k) {
                    auto yp = y, ym = y;
                    yp[k] += 1e-6;
                    ym[k] -= 1e-6;
                    const double fd = (simplex_integral(t, yp, 0.3) - simplex_integral(t, ym, 0.3)) / 2e-6;
                    CHECK(g[k] == doctest::Approx(fd).epsilon(1e-6));
                }
            }
        }
    }
}

TEST_CASE("integrate: integrate_poly examples") {
    const auto lc = Transformation::log_concave();
    auto f = v_shape(2.0);
    const double Q = oracle::gauss_legendre([](double x) { return std::exp(-std::fabs(x)); }, -2, 0, 50) +
                     oracle::gauss_legendre([](double x) { return std::exp(-std::fabs(x)); }, 0, 2, 50);
    CHECK(integrate_poly(lc, f) == doctest::Approx(Q).epsilon(1e-12));
    CHECK(integrate_poly(lc, f) == doctest::Approx(2 * (1 - std::exp(-2.0))).epsilon(1e-12));
    auto one = lower_convex_hull(make_points(2, {{0, 0}, {1, 0}, {0, 1}}), {0.2, 0.5, 1.0});
    CHECK(integrate_poly(lc, one) == doctest::Approx(simplex_integral(lc, {0.2, 0.5, 1.0}, 0.5)).epsilon(1e-15));
    auto zero = lower_convex_hull(make_points(1, {{0}, {1}}), {0.0, 1.0});
    CHECK_THROWS_AS(integrate_poly(Transformation::power_concave(3.0), zero), NonfiniteError);
    CHECK_THROWS_AS(integrate_poly(Transformation::log_convex(), zero), ParameterError);

    // gradient against finite differences on a random 2-d hull
    std::mt19937_64 rng(2);
    std::normal_distribution<double> N(0, 1);
    PointSet X(2);
    std::vector<double> h;
    for (int i = 0; i < 15; ++i) {
        X.push({N(rng), N(rng)});
        h.push_back(0.5 * (X[i][0] * X[i][0] + X[i][1] * X[i][1]) + 1.0);
    }
    auto g = lower_convex_hull(X, h);
    std::vector<double> grad;
    integrate_poly(lc, g, grad);
    for (int i = 0; i < 15; ++i) {
        if (!g.active[i]) continue;
        auto hp = g.heights, hm = g.heights;
        hp[i] += 1e-6;
        hm[i] -= 1e-6;
        const double fd = (integrate_poly(lc, lower_convex_hull(X, hp)) - integrate_poly(lc, lower_convex_hull(X, hm))) / 2e-6;
        CHECK(grad[i] == doctest::Approx(fd).epsilon(1e-5));
    }
}

TEST_CASE("integrate: shift monotonicity") {
    auto f = v_shape(3.0);
    for (const auto& t : {Transformation::log_concave(), Transformation::power_concave(2.5)}) {
        double prev = INFINITY;
        for (double c = 0.1; c < 5; c += 0.25) {
            const double v = integrate_poly(t, f.shifted(c));
            CHECK(v < prev);
            prev = v;
        }
    }
}

TEST_CASE("integrate: max-affine integrals") {
    auto single = [](std::vector<double> a, double b) {
        MaxAffineFn f;
        f.d = static_cast<int>(a.size());
        f.pieces.push_back({a, b});
        return f;
    };
    auto r = integrate_max_affine(Transformation::log_convex(), single({-1.0}, 0.0), 0);
    CHECK(r.estimate == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(r.std_error == 0.0);
    r = integrate_max_affine(Transformation::power_convex(1.0), single({-1.0}, 1.0), 0);
    CHECK(r.estimate == doctest::Approx(0.5).epsilon(1e-14));
    r = integrate_max_affine(Transformation::log_convex(), single({-1.0, -1.0}, 0.0), 100000, 7);
    CHECK(std::fabs(r.estimate - 1.0) <= 3 * r.std_error + 1e-12);
    CHECK_THROWS_AS(integrate_max_affine(Transformation::log_convex(), single({0.5}, 0.0), 0), DivergenceError);

    // two-piece d=1 against quadrature
    MaxAffineFn g;
    g.d = 1;
    g.pieces = {{{-3.0}, 1.0}, {{-0.5}, -0.5}};
    for (const auto& t : {Transformation::log_convex(), Transformation::power_convex(2.0)}) {
        const double I = integrate_max_affine(t, g, 0).estimate;
        auto fn = [&](double x) { return eval(t, g.eval(&x)); };
        const double Q = oracle::gauss_legendre(fn, 0, 0.6, 200) + oracle::gauss_legendre(fn, 0.6, 80, 4000);
        CHECK(I == doctest::Approx(Q).epsilon(1e-9));
    }
    // d=2 two pieces vs product-structured oracle in each region, MC within 3 sigma
    MaxAffineFn g2;
    g2.d = 2;
    g2.pieces = {{{-1.0, -2.0}, 0.0}, {{-2.0, -1.0}, 0.0}};
    for (const auto& t : {Transformation::log_convex(), Transformation::power_convex(2.0)}) {
        auto m = integrate_max_affine(t, g2, 200000, 9);
        // by symmetry, twice the integral over {x1 > x2} where the first piece is active
        const double R = t.kind == Kind::PowerConvex ? 1.0 : 40.0;
        const double Q = 2 * oracle::gauss_legendre(
                                 [&](double x2) {
                                     return oracle::gauss_legendre(
                                         [&](double x1) { return eval(t, -x1 - 2 * x2); }, x2, R, 60);
                                 },
                                 0, R, 60);
        CHECK(std::fabs(m.estimate - Q) <= 3 * m.std_error + 1e-6);
    }
}

TEST_CASE("integrate: layer cake agrees with exact integrals") {
    const auto lc = Transformation::log_concave();
    auto f = v_shape(2.0);
    auto r = layer_cake_integral(lc, f, 0.0, 200000, 4);
    CHECK(std::fabs(r.estimate - integrate_poly(lc, f)) <= 3 * r.std_error + 1e-4);
    CHECK(r.warning.empty());
    r = layer_cake_integral(lc, f, 2.0, 1000, 4);
    CHECK(r.estimate == 0.0);
    // restricted region {g > 1}: exact value 2 (e^-1 - e^-2)
    r = layer_cake_integral(lc, f, 1.0, 200000, 5);
    CHECK(std::fabs(r.estimate - 2 * (std::exp(-1.0) - std::exp(-2.0))) <= 3 * r.std_error + 1e-4);

    MaxAffineFn g;
    g.d = 1;
    g.pieces = {{{-1.0}, 0.0}};
    r = layer_cake_integral(Transformation::log_convex(), g, 0.0, 400000, 6);
    CHECK(std::fabs(r.estimate - integrate_max_affine(Transformation::log_convex(), g, 0).estimate) <=
          3 * r.std_error + 1e-4);

    // fuzzed 2-d instances
    std::mt19937_64 rng(8);
    std::normal_distribution<double> N(0, 1);
    for (int rep = 0; rep < 20; ++rep) {
        PointSet X(2);
        std::vector<double> h;
        for (int i = 0; i < 12; ++i) {
            X.push({N(rng), N(rng)});
            h.push_back(0.5 * (X[i][0] * X[i][0] + X[i][1] * X[i][1]) + 0.2 * N(rng));
        }
        auto p = lower_convex_hull(X, h);
        const auto t = rep % 2 ? Transformation::power_concave(4.0) : lc;
        auto q = p.shifted(1.0 - p.min_height());
        auto e = layer_cake_integral(t, q, q.min_height(), 100000, 100 + rep);
        CHECK(std::fabs(e.estimate - integrate_poly(t, q)) <= 3 * e.std_error + 1e-3 * integrate_poly(t, q));
    }
}

TEST_CASE("integrate: normalize") {
    const auto lc = Transformation::log_concave();
    auto r = normalize(lc, v_shape(20.0));
    CHECK(r.c == doctest::Approx(std::log(2 * (1 - std::exp(-20.0)))).epsilon(1e-12));
    CHECK(std::fabs(integrate_poly(lc, r.f) - 1) <= 1e-10);
    auto again = normalize(lc, r.f);
    CHECK(std::fabs(again.c) <= 1e-10);
    // constant function on a triangle of area 2: c = h^{-1}(1/2) - y
    auto tri = lower_convex_hull(make_points(2, {{0, 0}, {2, 0}, {0, 2}}), {0.7, 0.7, 0.7});
    for (const auto& t : {lc, Transformation::power_concave(3.0)}) {
        auto n = normalize(t, tri);
        CHECK(n.c == doctest::Approx(inverse(t, 0.5) - 0.7).epsilon(1e-10));
        CHECK(std::fabs(integrate_poly(t, n.f) - 1) <= 1e-10);
    }
    auto pc = normalize(Transformation::power_concave(2.5), v_shape(3.0));
    CHECK(std::fabs(integrate_poly(Transformation::power_concave(2.5), pc.f) - 1) <= 1e-10);

    MaxAffineFn g;
    g.d = 1;
    g.pieces = {{{-3.0}, 1.0}, {{-0.5}, -0.5}};
    for (const auto& t : {Transformation::log_convex(), Transformation::power_convex(1.0)}) {
        auto n = normalize(t, g);
        CHECK(std::fabs(integrate_max_affine(t, n.f, 0).estimate - 1) <= 1e-10);
    }
    MaxAffineFn g2;
    g2.d = 2;
    g2.pieces = {{{-1.0, -2.0}, 0.0}, {{-2.0, -1.0}, 0.0}};
    auto n2 = normalize(Transformation::power_convex(2.0), g2, 50000, 3);
    CHECK(std::fabs(integrate_max_affine(Transformation::power_convex(2.0), n2.f, 50000, 3).estimate - 1) <= 1e-10);
}
