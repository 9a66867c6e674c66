#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "csmle/convexgeom.hpp"
#include "csmle/evalsim.hpp"
#include "csmle/transforms.hpp"

namespace csmle {

enum class DeformDirection { Up, Down, Mode };

// g(x) = 1/2 sum_c curvature[c] x_c^2 + quartic |x|^4 on [-half_width, half_width]^d.
struct BowlSpec {
    std::vector<double> curvature;
    double quartic = 0.0;
    double half_width = 4.0;
    int grid = 0;  // points per axis, 0: 401 (d = 1) or 61 (d = 2)

    int dim() const { return static_cast<int>(curvature.size()); }
    double eval(const double* x) const;
    Eigen::MatrixXd hessian(const double* x) const;
};

struct DeformationFamily {
    Transformation t;
    PolyhedralFn g;  // normalized base
    std::vector<double> x0, x1;
    DeformDirection direction = DeformDirection::Up;
    std::vector<double> u;  // Mode only
    double gamma = 2.0, L = 1.0;
    double delta = 0.25;  // depth of the compensating deformation at x1
    Eigen::MatrixXd G;
    double eps_max = 0.0;
    std::optional<BowlSpec> bowl;  // analytic base, rediscretized per eps by refine_for

    int dim() const { return g.d; }
};

// Largest dyadic eps with sqrt(2 eps / lambda_min(G)) < dist(x0, x1) / 3.
double select_eps_max(const Eigen::MatrixXd& G, const std::vector<double>& x0, const std::vector<double>& x1);

// g is shifted to integrate to one under t.
DeformationFamily make_family(const Transformation& t, const PolyhedralFn& g, std::vector<double> x0,
                              std::vector<double> x1, DeformDirection dir, double delta, Eigen::MatrixXd G);

// Bowl base on the coarse grid. G is the analytic Hessian at x0.
DeformationFamily bowl_family(const Transformation& t, const BowlSpec& bowl, std::vector<double> x0,
                              std::vector<double> x1, DeformDirection dir, double delta = 0.25);
void set_mode(DeformationFamily& fam, std::vector<double> u, double gamma, double L = 1.0);

// For bowl families: the base rediscretized with fine patches around x0 and x1 sized for eps.
// Other families are returned unchanged.
DeformationFamily refine_for(const DeformationFamily& fam, double eps);

// g(x) - 1/2 (x-x0)'G(x-x0) convex on a local probe grid of the given radius: second differences
// >= -tol, less the interpolation slack of the cell containing x0.
bool strongly_convex_near(const DeformationFamily& fam, double radius, double tol = 1e-9);

PolyhedralFn deform_up(const DeformationFamily& fam, double eps);
PolyhedralFn deform_down(const DeformationFamily& fam, double eps);

// Mode shift: xi = g(x0 + eps u) - g(x0) + eps^(gamma + 1).
double mode_depth(const DeformationFamily& fam, double eps);

struct DeformedDensity {
    DensityHandle density;
    PolyhedralFn g;  // g_theta, integrates to one
    double theta = 0.0;
    double xi = 0.0;              // depth at the primary site
    std::vector<double> argmin;   // Mode: x0 + eps u
};

DeformedDensity make_valid_density(const DeformationFamily& fam, double eps);
DeformedDensity deform_mode(const DeformationFamily& fam, double eps);

struct LocalHellinger {
    double estimate = 0.0;
    double std_error = 0.0;
};

// H between h(a) and h(b) for two normalized functions on the same points, integrating
// (sqrt p - sqrt q)^2 only over boxes covering each connected region of changed heights.
LocalHellinger hellinger_local(const Transformation& t, const PolyhedralFn& a, const PolyhedralFn& b, long nodes);

struct RateCell {
    double eps = 0.0;
    double xi = 0.0;
    double theta = 0.0;
    double hellinger = 0.0;
    double std_error = 0.0;
    bool flagged = false;
    std::string flag;
};

struct Regression {
    double slope = 0.0, intercept = 0.0, slope_se = 0.0;
};

Regression loglog_fit(const std::vector<double>& x, const std::vector<double>& y);

struct RateReport {
    int d = 0;
    std::string direction;
    std::vector<RateCell> cells;
    Regression h_vs_eps;
    Regression h_vs_xi;     // Mode only
    Regression theta_vs_eps;
    double expected_slope = 0.0;
};

// nodes: quadrature nodes per change region (0: 400000).
RateReport rate_experiment(const DeformationFamily& fam, const std::vector<double>& eps_grid, long nodes = 0,
                           std::uint64_t seed = 1, int threads = 0);
std::vector<double> dyadic_grid(double eps_max, int count);

nlohmann::json to_json(const RateReport& r);
// Columns: eps, H, stderr, theta, xi.
std::string to_tsv(const RateReport& r);

// det of the least-squares quadratic fitted on a (2m+1)^d probe grid of the given radius.
// Returns 0 when the residual exceeds 10% of the quadratic term (no quadratic behaviour);
// throws IndefiniteFit when the fitted Hessian has a clearly negative eigenvalue.
double curvature_estimate(const std::function<double(const double*)>& g, int d, const std::vector<double>& x0,
                          double probe_radius, Eigen::MatrixXd* hessian = nullptr);
double curvature_estimate(const PolyhedralFn& f, const std::vector<double>& x0, double probe_radius,
                          Eigen::MatrixXd* hessian = nullptr);

std::string direction_name(DeformDirection d);

}  // namespace csmle
