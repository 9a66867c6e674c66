#include "csmle/transforms.hpp"

#include <cmath>

#include "csmle/common.hpp"

namespace csmle {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();

void require_s(double s) {
    if (!(s > 0.0) || !std::isfinite(s)) throw ParameterError("power transformation needs a finite s > 0");
}

// Coefficient of y^{j-s} in F_j for PowerConcave.
double pc_coeff(double s, int j) {
    double c = 1.0;
    if (j >= 0) {
        for (int i = 1; i <= j; ++i) c /= (i - s);
    } else {
        for (int i = 0; i > j; --i) c *= (i - s);
    }
    return c;
}

// Coefficient of y^{s+j} in F_j for PowerConvex.
double pv_coeff(double s, int j) {
    double c = 1.0;
    if (j >= 0) {
        for (int i = 1; i <= j; ++i) c /= (s + i);
    } else {
        for (int i = 0; i > j; --i) c *= (s + i);
    }
    return c;
}
}  // namespace

Transformation Transformation::log_concave() {
    Transformation t;
    t.direction = Direction::Decreasing;
    t.kind = Kind::LogConcave;
    t.y0 = kInf;
    t.y_inf = -kInf;
    t.alpha = kInf;
    t.gamma = 0.5;
    t.C = 4.0;
    return t;
}

Transformation Transformation::power_concave(double s) {
    require_s(s);
    Transformation t;
    t.direction = Direction::Decreasing;
    t.kind = Kind::PowerConcave;
    t.s = s;
    t.y0 = kInf;
    t.y_inf = 0.0;
    t.alpha = s;
    t.beta = s;
    return t;
}

Transformation Transformation::log_convex() {
    Transformation t;
    t.direction = Direction::Increasing;
    t.kind = Kind::LogConvex;
    t.y0 = -kInf;
    t.y_inf = kInf;
    t.alpha = kInf;
    return t;
}

Transformation Transformation::power_convex(double s) {
    require_s(s);
    Transformation t;
    t.direction = Direction::Increasing;
    t.kind = Kind::PowerConvex;
    t.s = s;
    t.y0 = 0.0;
    t.y_inf = kInf;
    t.alpha = kInf;
    return t;
}

bool operator==(const Transformation& a, const Transformation& b) {
    if (a.kind != b.kind) return false;
    if (a.is_power()) return a.s == b.s;
    return true;
}

double eval(const Transformation& t, double y) {
    switch (t.kind) {
        case Kind::LogConcave:
            return std::exp(-y);
        case Kind::PowerConcave:
            if (!(y > 0.0)) return kInf;
            return std::pow(y, -t.s);
        case Kind::LogConvex:
            return std::exp(y);
        case Kind::PowerConvex:
            if (!(y > 0.0)) return 0.0;
            return std::pow(y, t.s);
    }
    return 0.0;
}

double deriv(const Transformation& t, double y) {
    switch (t.kind) {
        case Kind::LogConcave:
            if (!std::isfinite(y)) throw DomainError("deriv: y outside (y_inf, y0)");
            return -std::exp(-y);
        case Kind::PowerConcave:
            if (!(y > 0.0) || !std::isfinite(y)) throw DomainError("deriv: y outside (0, inf)");
            return -t.s * std::pow(y, -t.s - 1.0);
        case Kind::LogConvex:
            if (!std::isfinite(y)) throw DomainError("deriv: y outside (y0, y_inf)");
            return std::exp(y);
        case Kind::PowerConvex:
            if (!(y > 0.0) || !std::isfinite(y)) throw DomainError("deriv: y outside (0, inf)");
            return t.s * std::pow(y, t.s - 1.0);
    }
    return 0.0;
}

double antideriv_k(const Transformation& t, int k, double y) {
    if (k < 0) throw DomainError("antideriv_k: k must be nonnegative");
    if (k == 0) return eval(t, y);
    switch (t.kind) {
        case Kind::LogConcave:
        case Kind::LogConvex:
            if (!std::isfinite(y)) throw DomainError("antideriv_k: y must be finite");
            break;
        case Kind::PowerConcave:
            if (t.s - k <= 0.0)
                throw AntiderivUnavailable("antideriv_k: no tail-vanishing antiderivative for s <= k");
            if (!(y > 0.0) || !std::isfinite(y)) throw DomainError("antideriv_k: y outside (0, inf)");
            break;
        case Kind::PowerConvex:
            if (!std::isfinite(y)) throw DomainError("antideriv_k: y must be finite");
            break;
    }
    return F(t, k, y);
}

double F(const Transformation& t, int j, double y) {
    switch (t.kind) {
        case Kind::LogConcave:
            return ((j % 2 == 0) ? 1.0 : -1.0) * std::exp(-y);
        case Kind::LogConvex:
            return std::exp(y);
        case Kind::PowerConcave:
            if (!(y > 0.0)) return kInf;
            return pc_coeff(t.s, j) * std::pow(y, j - t.s);
        case Kind::PowerConvex:
            if (!(y > 0.0)) return 0.0;
            return pv_coeff(t.s, j) * std::pow(y, t.s + j);
    }
    return 0.0;
}

double log_eval(const Transformation& t, double y) {
    switch (t.kind) {
        case Kind::LogConcave:
            return -y;
        case Kind::LogConvex:
            return y;
        case Kind::PowerConcave:
            if (!(y > 0.0)) return kInf;
            return -t.s * std::log(y);
        case Kind::PowerConvex:
            if (!(y > 0.0)) return -kInf;
            return t.s * std::log(y);
    }
    return 0.0;
}

double log_deriv(const Transformation& t, double y) {
    switch (t.kind) {
        case Kind::LogConcave:
            return -1.0;
        case Kind::LogConvex:
            return 1.0;
        case Kind::PowerConcave:
            return -t.s / y;
        case Kind::PowerConvex:
            return t.s / y;
    }
    return 0.0;
}

double inverse(const Transformation& t, double p) {
    if (!(p > 0.0)) throw DomainError("inverse: p must be positive");
    switch (t.kind) {
        case Kind::LogConcave:
            return -std::log(p);
        case Kind::LogConvex:
            return std::log(p);
        case Kind::PowerConcave:
            return std::pow(p, -1.0 / t.s);
        case Kind::PowerConvex:
            return std::pow(p, 1.0 / t.s);
    }
    return 0.0;
}

int existence_threshold(const Transformation& t, int d) {
    if (d < 1) throw ParameterError("existence_threshold: d must be positive");
    if (t.direction == Direction::Increasing) return d + 1;
    double nd = 0.0;
    if (t.kind == Kind::LogConcave) {
        if (!(t.gamma > 0.0 && t.C > 0.0 && t.gamma * t.C > 1.0))
            throw ParameterError("existence_threshold: need gamma, C > 0 with gamma * C > 1");
        nd = d * (1.0 + t.gamma);
    } else {
        // alpha ranges over (d, s] and beta = s; the bound decreases in alpha.
        if (!(t.s > d)) throw ParameterError("existence_threshold: power-concave model needs s > d");
        double a = t.s, b = t.s;
        nd = d + b * d * d / (a * (b - d));
    }
    return static_cast<int>(std::ceil(nd - 1e-9));
}

bool model_includes(const Transformation& t1, const Transformation& t2) {
    if (t1.direction != t2.direction) return false;
    if (t1 == t2) return true;
    if (t1.decreasing()) {
        if (t1.kind == Kind::LogConcave) return true;
        if (t2.kind == Kind::LogConcave) return false;
        return t1.s >= t2.s;
    }
    if (t1.kind == Kind::LogConvex) return true;
    if (t2.kind == Kind::LogConvex) return false;
    return t1.s <= t2.s;
}

std::string kind_name(Kind k) {
    switch (k) {
        case Kind::LogConcave: return "log_concave";
        case Kind::PowerConcave: return "power_concave";
        case Kind::LogConvex: return "log_convex";
        case Kind::PowerConvex: return "power_convex";
    }
    return "";
}

nlohmann::json to_json(const Transformation& t) {
    nlohmann::json j;
    j["kind"] = kind_name(t.kind);
    if (t.is_power()) j["s"] = t.s;
    return j;
}

Transformation transformation_from_name(const std::string& name, double s) {
    std::string n = name;
    for (auto& c : n)
        if (c == '-') c = '_';
    if (n == "log_concave") return Transformation::log_concave();
    if (n == "power_concave") return Transformation::power_concave(s);
    if (n == "log_convex") return Transformation::log_convex();
    if (n == "power_convex") return Transformation::power_convex(s);
    throw ParameterError("unknown transformation kind: " + name);
}

Transformation transformation_from_json(const nlohmann::json& j) {
    double s = j.contains("s") ? j.at("s").get<double>() : std::numeric_limits<double>::quiet_NaN();
    return transformation_from_name(j.at("kind").get<std::string>(), s);
}

}  // namespace csmle
