#include "csmle/optim.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/Dense>

namespace csmle {

namespace {
double sup_norm(const Eigen::VectorXd& g) { return g.size() ? g.cwiseAbs().maxCoeff() : 0.0; }
}  // namespace

RalgResult ralg_minimize(const ObjectiveFn& fg, std::vector<double> x0, const RalgOptions& opt) {
    const int n = static_cast<int>(x0.size());
    RalgResult res;
    std::vector<double> xs(x0), gs(n);
    auto call = [&](const Eigen::VectorXd& x, Eigen::VectorXd& g) {
        std::copy(x.data(), x.data() + n, xs.begin());
        const double f = fg(xs, gs);
        g = Eigen::Map<const Eigen::VectorXd>(gs.data(), n);
        return f;
    };

    Eigen::VectorXd x = Eigen::Map<const Eigen::VectorXd>(x0.data(), n);
    Eigen::VectorXd g0(n), g1(n);
    double f = call(x, g0);
    if (!std::isfinite(f)) {
        res.x = x0;
        res.f = f;
        res.reason = "objective not finite at the starting point";
        return res;
    }
    const double f_start = f;
    Eigen::VectorXd xbest = x;
    double fbest = f;
    res.reason = "iteration limit";
    if (sup_norm(g0) <= opt.grad_tol) {
        res.x = x0;
        res.f = f;
        res.converged = true;
        res.reason = "subgradient below tolerance";
        return res;
    }
    Eigen::MatrixXd B = Eigen::MatrixXd::Identity(n, n);
    double hs = opt.h0;
    int it = 0;
    bool restarted = false;
    for (it = 1; it <= opt.max_iters; ++it) {
        Eigen::VectorXd bg = B.transpose() * g0;
        const double nbg = bg.norm();
        if (!(nbg > 1e-150)) {
            // the metric collapsed; restart from the identity once per collapse
            if (restarted) {
                res.converged = true;
                res.reason = "degenerate metric";
                break;
            }
            restarted = true;
            B.setIdentity();
            --it;
            continue;
        }
        restarted = false;
        const Eigen::VectorXd dx = B * (bg / nbg);
        const double ndx = dx.norm();
        double moved = 0.0;
        int cal = 0;
        double dd = 1.0;
        bool stop_grad = false;
        while (dd > 0.0 && cal <= 500) {
            Eigen::VectorXd xn = x - hs * dx;
            double f1 = call(xn, g1);
            int halvings = 0;
            while (!std::isfinite(f1) && halvings < 60) {
                hs *= 0.5;
                xn = x - hs * dx;
                f1 = call(xn, g1);
                ++halvings;
            }
            if (!std::isfinite(f1)) break;
            x = xn;
            moved += hs * ndx;
            ++cal;
            if (cal % opt.nh == 0) hs *= opt.q2;
            if (f1 < fbest) {
                fbest = f1;
                xbest = x;
            }
            if (sup_norm(g1) <= opt.grad_tol) {
                stop_grad = true;
                break;
            }
            dd = dx.dot(g1);
        }
        res.trace.push_back(fbest);
        res.grad_norms.push_back(sup_norm(g1));
        if (stop_grad) {
            res.converged = true;
            res.reason = "subgradient below tolerance";
            break;
        }
        if (cal == 1) hs *= opt.q1;
        if (moved < opt.step_tol * (1.0 + x.norm())) {
            res.converged = true;
            res.reason = "step below tolerance";
            break;
        }
        const int k = static_cast<int>(res.trace.size());
        // the first iterations may all overshoot while the step adapts; only count stalls after progress
        const bool progressed = fbest < f_start || k > 10 * opt.stall_iters;
        if (progressed && k > opt.stall_iters && res.trace[k - 1 - opt.stall_iters] - fbest < opt.stall_tol) {
            res.converged = true;
            res.reason = "objective improvement below tolerance";
            break;
        }
        Eigen::VectorXd dg = B.transpose() * (g1 - g0);
        const double ndg = dg.norm();
        if (ndg > 1e-300) {
            const Eigen::VectorXd xi = dg / ndg;
            B += (1.0 / opt.alpha - 1.0) * (B * xi) * xi.transpose();
        }
        g0 = g1;
    }
    res.iters = std::min(it, opt.max_iters);
    res.x.assign(xbest.data(), xbest.data() + n);
    res.f = fbest;
    return res;
}

}  // namespace csmle
