#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "csmle/convexgeom.hpp"
#include "csmle/transforms.hpp"

namespace csmle {

struct FitConfig {
    Transformation transform = Transformation::log_concave();
    int max_iters = 0;  // 0: 10000 for exact objectives, 2000 for the Monte Carlo path (increasing, d >= 2)
    double grad_tol = 1e-9;
    double step_init = 0.1;
    std::uint64_t seed = 1;
    double normalize_tol = 1e-10;
    long mc_budget = 20000;  // increasing fits with d >= 2
    double init_jitter = 0.0;  // sd of Gaussian noise on the starting heights (restart studies)
};

struct FitResult {
    Transformation transform;
    bool is_polyhedral = true;
    PolyhedralFn poly;     // decreasing fits
    MaxAffineFn max_affine;  // increasing fits
    double loglik = 0.0;
    double c_norm = 0.0;
    int iters = 0;
    bool converged = false;
    std::vector<double> objective_trace;
    std::vector<double> subgradient_norms;
    std::vector<std::string> warnings;
    double self_norm_error = 0.0;  // |integral - 1| before the safeguard normalization
    std::string stop_reason;

    int dim() const { return is_polyhedral ? poly.d : max_affine.d; }
    // Fitted density at x.
    double density(const double* x) const;
    // Fitted convex function at x (+inf outside the domain of a decreasing fit).
    double g(const double* x) const;
};

struct ExistenceReport {
    bool ok = true;
    std::string condition;  // "sample_size", "general_position", "orthant_interior", "dimension"
    std::string message;
};

ExistenceReport check_existence(const Transformation& t, const PointSet& points);

struct ObjectiveValue {
    double value = 0.0;
    std::vector<double> subgradient;
};

ObjectiveValue objective_dec(const Transformation& t, const PointSet& points, const std::vector<double>& heights);

FitResult fit_decreasing(const PointSet& points, const FitConfig& cfg);
FitResult fit_increasing(const PointSet& points, const FitConfig& cfg);
// Dispatches on the transformation direction; throws InfeasibleError on an existence violation.
FitResult fit(const PointSet& points, const FitConfig& cfg);

// Mean log density of the fitted model at the points.
double mean_loglik(const FitResult& r, const PointSet& points);

nlohmann::json to_json(const FitResult& r);
FitResult fit_result_from_json(const nlohmann::json& j);

}  // namespace csmle
