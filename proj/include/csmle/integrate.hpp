#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "csmle/convexgeom.hpp"
#include "csmle/transforms.hpp"

namespace csmle {

enum class IntegralMethod { DividedDifference, Taylor, MonteCarlo };

// Spread below which clustered nodes are expanded in a Taylor series
// (absolute for exponential kinds, relative to the smallest node for power kinds).
inline constexpr double kTaylorSwitch = 5e-2;

struct SimplexIntegralPlan {
    std::vector<double> values;  // d+1 vertex values
    double volume = 0.0;
    Transformation transform;
    IntegralMethod method = IntegralMethod::DividedDifference;
};

SimplexIntegralPlan plan_simplex_integral(const Transformation& t, const std::vector<double>& values,
                                          double volume, bool allow_mc = false);
// Runs the plan; mc_budget and seed are used only by the MonteCarlo method.
double run_plan(const SimplexIntegralPlan& plan, long mc_budget = 100000, std::uint64_t seed = 1);

// Divided difference of F_j over the given nodes (any order, repeats allowed).
double divided_difference(const Transformation& t, int j, std::vector<double> nodes);

// Integral of h over a simplex of the given volume where the argument is the
// affine interpolant of the vertex values.
double simplex_integral(const Transformation& t, const std::vector<double>& values, double volume);
// Same, also filling grad[k] = d/dvalues[k].
double simplex_integral(const Transformation& t, const std::vector<double>& values, double volume,
                        std::vector<double>& grad);
// Dirichlet Monte Carlo estimate of the same integral.
double simplex_integral_mc(const Transformation& t, const std::vector<double>& values, double volume,
                           long mc_budget, std::uint64_t seed);

double integrate_poly(const Transformation& t, const PolyhedralFn& f);
// Also returns d/dheights[i] for every site (zero for sites that are not simplex vertices).
double integrate_poly(const Transformation& t, const PolyhedralFn& f, std::vector<double>& grad);

// Integral of h over the lower hull of (points, heights) with d/dheights, without
// building a PolyhedralFn (used inside optimization loops).
double integrate_hull(const Transformation& t, const PointSet& points, const std::vector<double>& heights,
                      std::vector<double>& grad);

struct IntegralEstimate {
    double estimate = 0.0;
    double std_error = 0.0;
    std::string warning;
};

IntegralEstimate integrate_max_affine(const Transformation& t, const MaxAffineFn& f, long mc_budget,
                                      std::uint64_t seed = 1);

// Decreasing t: integral of h(g) over {g > a}. Increasing t: over {g <= a} in the orthant.
IntegralEstimate layer_cake_integral(const Transformation& t, const PolyhedralFn& f, double a, long mc_budget,
                                     std::uint64_t seed = 1);
IntegralEstimate layer_cake_integral(const Transformation& t, const MaxAffineFn& f, double a, long mc_budget,
                                     std::uint64_t seed = 1);

struct NormalizedPoly {
    PolyhedralFn f;
    double c = 0.0;
};
struct NormalizedMaxAffine {
    MaxAffineFn f;
    double c = 0.0;
};

NormalizedPoly normalize(const Transformation& t, const PolyhedralFn& f);
NormalizedMaxAffine normalize(const Transformation& t, const MaxAffineFn& f, long mc_budget = 200000,
                              std::uint64_t seed = 1);

}  // namespace csmle
