#pragma once

#include <functional>
#include <string>
#include <vector>

namespace csmle {

// Shor's r-algorithm with adaptive step (ralgb5 variant) for nonsmooth minimization.
struct RalgOptions {
    double alpha = 4.0;  // space dilation coefficient
    double h0 = 1.0;
    double q1 = 0.9;
    double q2 = 1.1;
    int nh = 3;
    int max_iters = 5000;
    double grad_tol = 1e-8;
    double step_tol = 1e-13;
    int stall_iters = 50;
    double stall_tol = 1e-12;
};

struct RalgResult {
    std::vector<double> x;
    double f = 0.0;
    int iters = 0;
    bool converged = false;
    std::string reason;
    std::vector<double> trace;       // best value per iteration
    std::vector<double> grad_norms;  // subgradient sup-norm per iteration
};

// fg(x, g) returns f(x) and fills a subgradient; +inf or NaN marks points outside the domain.
using ObjectiveFn = std::function<double(const std::vector<double>&, std::vector<double>&)>;

RalgResult ralg_minimize(const ObjectiveFn& fg, std::vector<double> x0, const RalgOptions& opt = {});

}  // namespace csmle
