#include <doctest.h>

#include <cmath>
#include <random>

#include "csmle/common.hpp"
#include "csmle/transforms.hpp"

using namespace csmle;

TEST_CASE("transforms: eval examples") {
    CHECK(eval(Transformation::log_concave(), 0.0) == doctest::Approx(1.0));
    CHECK(eval(Transformation::power_concave(2), 2.0) == doctest::Approx(0.25));
    CHECK(std::isinf(eval(Transformation::power_concave(2), -1.0)));
    CHECK(eval(Transformation::power_convex(2), -1.0) == 0.0);
    CHECK(eval(Transformation::log_concave(), INFINITY) == 0.0);
    CHECK(eval(Transformation::log_convex(), -INFINITY) == 0.0);
}

TEST_CASE("transforms: deriv examples") {
    CHECK(deriv(Transformation::log_concave(), 0.0) == doctest::Approx(-1.0));
    CHECK(deriv(Transformation::power_concave(2), 1.0) == doctest::Approx(-2.0));
    CHECK(deriv(Transformation::log_convex(), 0.0) == doctest::Approx(1.0));
    CHECK_THROWS_AS(deriv(Transformation::power_concave(2), 0.0), DomainError);
    CHECK_THROWS_AS(deriv(Transformation::power_convex(2), -1.0), DomainError);
}

TEST_CASE("transforms: antideriv examples") {
    CHECK(antideriv_k(Transformation::log_concave(), 1, 0.0) == doctest::Approx(-1.0));
    CHECK(antideriv_k(Transformation::power_concave(3), 1, 1.0) == doctest::Approx(-0.5));
    CHECK(antideriv_k(Transformation::power_convex(1), 1, 2.0) == doctest::Approx(2.0));
    CHECK_THROWS_AS(antideriv_k(Transformation::power_concave(2), 2, 1.0), AntiderivUnavailable);
}

TEST_CASE("transforms: existence thresholds") {
    CHECK(existence_threshold(Transformation::power_concave(2), 1) == 2);
    CHECK(existence_threshold(Transformation::log_concave(), 2) == 3);
    CHECK(existence_threshold(Transformation::power_concave(6), 2) == 3);
    CHECK(existence_threshold(Transformation::log_convex(), 2) == 3);
    CHECK_THROWS_AS(existence_threshold(Transformation::power_concave(2), 2), ParameterError);
    // scanning alpha over (d, s] never beats alpha = s
    for (double s : {2.0, 3.5, 6.0}) {
        for (int d = 1; d < s; ++d) {
            double best = 1e300;
            for (int k = 1; k <= 1000; ++k) {
                double a = d + (s - d) * k / 1000.0;
                best = std::min(best, d + s * d * d / (a * (s - d)));
            }
            CHECK(existence_threshold(Transformation::power_concave(s), d) == static_cast<int>(std::ceil(best - 1e-9)));
        }
    }
}

TEST_CASE("transforms: model inclusion") {
    CHECK(model_includes(Transformation::log_concave(), Transformation::power_concave(5)));
    CHECK_FALSE(model_includes(Transformation::power_concave(3), Transformation::power_concave(5)));
    CHECK(model_includes(Transformation::power_concave(5), Transformation::power_concave(3)));
    CHECK(model_includes(Transformation::power_concave(3), Transformation::power_concave(3)));
    CHECK(model_includes(Transformation::log_convex(), Transformation::power_convex(2)));
    CHECK(model_includes(Transformation::power_convex(1), Transformation::power_convex(2)));
    CHECK_FALSE(model_includes(Transformation::power_convex(2), Transformation::power_convex(1)));
    CHECK_FALSE(model_includes(Transformation::log_concave(), Transformation::log_convex()));
}

TEST_CASE("transforms: derivative and antiderivative consistency") {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> U(0.2, 4.0);
    const Transformation ts[] = {Transformation::log_concave(), Transformation::power_concave(4.5),
                                 Transformation::log_convex(), Transformation::power_convex(2.5)};
    for (const auto& t : ts) {
        for (int i = 0; i < 100; ++i) {
            const double y = U(rng), e = 1e-5 * y;
            const double fd = (eval(t, y + e) - eval(t, y - e)) / (2 * e);
            CHECK(std::fabs(fd - deriv(t, y)) <= 1e-6 * std::fabs(deriv(t, y)));
            for (int k = 1; k <= 3; ++k) {
                const double fa = (antideriv_k(t, k, y + e) - antideriv_k(t, k, y - e)) / (2 * e);
                const double lower = antideriv_k(t, k - 1, y);
                CHECK(std::fabs(fa - lower) <= 1e-6 * std::fabs(lower));
            }
        }
    }
}

TEST_CASE("transforms: monotonicity and assumption audits") {
    const Transformation dec[] = {Transformation::log_concave(), Transformation::power_concave(3)};
    for (const auto& t : dec) {
        for (double y = 0.1; y < 10; y += 0.1) CHECK(eval(t, y + 0.1) <= eval(t, y));
        // h(y) y^alpha' -> 0 for some alpha' > d (d = 2 here, alpha' = 2.5)
        double prev = INFINITY;
        for (double y = 10; y <= 1e6; y *= 10) {
            double v = eval(t, y) * std::pow(y, 2.5);
            CHECK(v <= prev);
            prev = v;
        }
        CHECK(prev < 1e-2);
    }
    auto lc = Transformation::log_concave();
    double prev = INFINITY;
    double prev2 = INFINITY;
    for (double y = -10; y >= -160; y *= 2) {
        // as stated in the assumption and as used in the existence argument
        double v = std::pow(eval(lc, y), lc.gamma) * eval(lc, -lc.C * y);
        double w = eval(lc, y) * std::pow(eval(lc, -lc.C * y), lc.gamma);
        CHECK(v < prev);
        CHECK(w < prev2);
        prev = v;
        prev2 = w;
    }
    CHECK(prev < 1e-50);
    CHECK(prev2 < 1e-50);
    const Transformation inc[] = {Transformation::log_convex(), Transformation::power_convex(2)};
    for (const auto& t : inc)
        for (double y = -5; y < 5; y += 0.1) CHECK(eval(t, y + 0.1) >= eval(t, y));
}

TEST_CASE("transforms: json round trip") {
    auto t = Transformation::power_concave(3.5);
    auto j = to_json(t);
    CHECK(j["kind"] == "power_concave");
    CHECK(transformation_from_json(j) == t);
    CHECK(transformation_from_name("log-concave", NAN) == Transformation::log_concave());
}
