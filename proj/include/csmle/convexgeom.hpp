#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <utility>
#include <vector>

#include <json.hpp>

#include "csmle/common.hpp"

namespace csmle {

struct Simplex {
    std::array<int, 4> v{{-1, -1, -1, -1}};  // d+1 used
    std::array<double, 3> a{{0.0, 0.0, 0.0}};  // d used
    double b = 0.0;
    double volume = 0.0;
};

class PointLocator;

// Convex function given as the lower convex hull of (point, height) pairs,
// finite on conv(points) and +inf outside.
class PolyhedralFn {
public:
    int d = 0;
    PointSet points;
    std::vector<double> heights;
    std::vector<Simplex> simplices;
    std::vector<char> active;

    // Index of the simplex containing x (-1 if outside); optional barycentric weights.
    int locate(const double* x, double* bary = nullptr) const;
    double eval(const double* x) const;
    double min_height() const;
    double max_height() const;
    std::pair<std::vector<double>, std::vector<double>> bbox() const;
    double total_volume() const;
    PolyhedralFn shifted(double c) const;

    // Rebuilds the point locator after simplices change.
    void build_locator();

private:
    std::shared_ptr<const PointLocator> locator_;
};

struct AffinePiece {
    std::vector<double> a;
    double b = 0.0;
};

// g(x) = max_i a_i.x + b_i on the nonnegative orthant.
struct MaxAffineFn {
    int d = 0;
    std::vector<AffinePiece> pieces;

    double eval(const double* x) const;
    double eval(const double* x, int& argmax) const;
    MaxAffineFn shifted(double c) const;
};

struct SubgradientResult {
    std::vector<double> a;
    bool on_boundary = false;  // x lies on a face shared by several simplices
};

struct MeasureEstimate {
    double estimate = 0.0;
    double std_error = 0.0;
};

PolyhedralFn lower_convex_hull(const PointSet& points, const std::vector<double>& heights);
double eval_poly(const PolyhedralFn& f, const double* x);
MaxAffineFn minimal_max_affine(const PointSet& points, const std::vector<double>& heights);
PolyhedralFn maximal_convex_minorant_with_dip(const PolyhedralFn& f, const double* x0, double eps);
SubgradientResult subgradient(const PolyhedralFn& f, const double* x);
MeasureEstimate sublevel_measure(const PolyhedralFn& f, double y, long mc_budget, std::uint64_t seed = 1);
// MaxAffineFn sublevel sets are unbounded; this always throws UnboundedLevelSet.
MeasureEstimate sublevel_measure(const MaxAffineFn& f, double y, long mc_budget, std::uint64_t seed = 1);
// Measure of {g > y} on the orthant, which is bounded when all slopes are negative.
MeasureEstimate superlevel_measure(const MaxAffineFn& f, double y, long mc_budget, std::uint64_t seed = 1);
// Side length R with {g > y} contained in [0, R]^d.
double superlevel_box(const MaxAffineFn& f, double y);
bool general_position(const PointSet& points, double tol = 1e-10, std::uint64_t seed = 1);

// Drops pieces that are never the maximum; exact for d = 1, otherwise tested on the probe points.
MaxAffineFn simplify(const MaxAffineFn& f, const PointSet* probes = nullptr);

struct EnvelopeSegment {
    int piece = -1;
    double l = 0.0, r = 0.0;  // r may be +inf
};

// Upper envelope of a d = 1 max-affine function restricted to [0, inf).
std::vector<EnvelopeSegment> envelope_1d(const MaxAffineFn& f);

// Volume of the simplex spanned by d+1 points.
double simplex_volume(const PointSet& pts, const int* idx);

nlohmann::json to_json(const PolyhedralFn& f);
PolyhedralFn polyhedral_from_json(const nlohmann::json& j);
nlohmann::json to_json(const MaxAffineFn& f);
MaxAffineFn max_affine_from_json(const nlohmann::json& j);

}  // namespace csmle
