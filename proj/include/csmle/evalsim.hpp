#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "csmle/mle.hpp"

namespace csmle {

using Rng = std::mt19937_64;

// A density on R^d with an optional exact sampler.
struct DensityHandle {
    std::string kind;            // "fitted" or "reference"
    nlohmann::json descriptor;   // name and parameters, or the fitted model
    int d = 0;
    std::function<double(const double*)> density;
    std::function<void(Rng&, double*)> sampler;  // empty when no sampler exists

    bool has_sampler() const { return static_cast<bool>(sampler); }
};

// Fitted densities sample by rejection: over conv(X) for decreasing fits, from the mixture of
// single-piece densities for increasing fits.
DensityHandle fitted_handle(const FitResult& r);

// Reference families: normal {mean, cov}, student_t {dof, mean, cov}, gamma {shape, rate, d},
// beta {alpha, beta, d}, uniform_polytope {vertices}, pareto {theta, a}, triangular {L}.
// Missing mean/cov default to zero and the identity (then "d" sets the dimension).
DensityHandle reference_handle(const std::string& name, const nlohmann::json& params);
PointSet sample_reference(const std::string& name, const nlohmann::json& params, std::size_t n, std::uint64_t seed);
PointSet sample(const DensityHandle& p, std::size_t n, std::uint64_t seed);

struct HellingerEstimate {
    double estimate = 0.0;  // H = (1 - integral of sqrt(pq))^(1/2)
    double std_error = 0.0;
    bool clamped = false;   // the raw estimate of H^2 fell outside [0, 1]
};

HellingerEstimate hellinger(const DensityHandle& p, const DensityHandle& q, long mc_budget, std::uint64_t seed = 1);

// max |p - q| over the tensor grid with grid_per_dim nodes per axis spanning [lo, hi].
double sup_norm_distance(const DensityHandle& p, const DensityHandle& q, const std::vector<double>& lo,
                         const std::vector<double>& hi, int grid_per_dim);

// Product box of per-axis central quantiles holding about `mass` of p (estimated from a fixed sample).
std::pair<std::vector<double>, std::vector<double>> central_box(const DensityHandle& p, double mass = 0.9,
                                                                std::uint64_t seed = 1);

struct ExperimentCell {
    int n = 0;
    int rep = 0;
    std::uint64_t seed = 0;
    double hellinger = 0.0;
    double hellinger_se = 0.0;
    double sup_norm = 0.0;
    bool flagged = false;
    std::string flag;
    double wall_seconds = 0.0;
};

struct ExperimentSummary {
    int n = 0;
    int flagged = 0;
    double median_h = 0.0, q25_h = 0.0, q75_h = 0.0;
    double median_sup = 0.0;
};

struct ExperimentReport {
    nlohmann::json model;
    nlohmann::json truth;
    std::vector<int> sample_sizes;
    int replications = 0;
    std::uint64_t seed = 0;
    std::vector<double> box_lo, box_hi;
    std::vector<ExperimentCell> cells;  // ordered by (n, rep)

    std::vector<ExperimentSummary> summary() const;
};

struct ExperimentOptions {
    FitConfig fit;             // transform is overwritten by the model
    long hellinger_budget = 50000;
    int grid_per_dim = 0;      // 0: 401, 61, 21 for d = 1, 2, 3
    int threads = 0;           // 0: CSMLE_THREADS or 1
};

ExperimentReport consistency_experiment(const Transformation& model, const DensityHandle& truth,
                                        const std::vector<int>& sample_sizes, int replications, std::uint64_t seed,
                                        const ExperimentOptions& opt = {});

// Wall-clock times vary between runs, so they are only written on request.
nlohmann::json to_json(const ExperimentReport& r, bool include_timing = false);
// Columns: n, median_H, q25, q75.
std::string to_tsv(const ExperimentReport& r);

// Linear-interpolation quantile of the finite values (NaN when there are none).
double quantile(std::vector<double> v, double p);
// Worker count from CSMLE_THREADS (at least 1).
int default_threads();

}  // namespace csmle
