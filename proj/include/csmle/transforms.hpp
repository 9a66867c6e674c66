#pragma once

#include <limits>
#include <string>

#include <json.hpp>

namespace csmle {

enum class Direction { Increasing, Decreasing };
enum class Kind { LogConcave, PowerConcave, LogConvex, PowerConvex };

// Monotone transformation h with its limit points and assumption parameters.
struct Transformation {
    Direction direction = Direction::Decreasing;
    Kind kind = Kind::LogConcave;
    double s = std::numeric_limits<double>::quiet_NaN();
    double y0 = std::numeric_limits<double>::infinity();
    double y_inf = -std::numeric_limits<double>::infinity();
    double alpha = std::numeric_limits<double>::infinity();
    double beta = std::numeric_limits<double>::quiet_NaN();
    double gamma = std::numeric_limits<double>::quiet_NaN();
    double C = std::numeric_limits<double>::quiet_NaN();

    static Transformation log_concave();
    static Transformation power_concave(double s);
    static Transformation log_convex();
    static Transformation power_convex(double s);

    bool decreasing() const { return direction == Direction::Decreasing; }
    bool is_power() const { return kind == Kind::PowerConcave || kind == Kind::PowerConvex; }
};

bool operator==(const Transformation& a, const Transformation& b);

double eval(const Transformation& t, double y);
double deriv(const Transformation& t, double y);
double antideriv_k(const Transformation& t, int k, double y);

// F_j = A_j for j >= 0 (A_0 = h) and h^(-j) for j < 0. No tail-vanishing check;
// power kinds need y > 0 (PowerConvex returns 0 for y <= 0).
double F(const Transformation& t, int j, double y);

// log h(y), -inf where h vanishes.
double log_eval(const Transformation& t, double y);
// h'(y) / h(y)
double log_deriv(const Transformation& t, double y);
// h^{-1}(p) for p > 0.
double inverse(const Transformation& t, double p);

int existence_threshold(const Transformation& t, int d);
bool model_includes(const Transformation& t1, const Transformation& t2);

std::string kind_name(Kind k);
nlohmann::json to_json(const Transformation& t);
Transformation transformation_from_json(const nlohmann::json& j);
Transformation transformation_from_name(const std::string& name, double s);

}  // namespace csmle
