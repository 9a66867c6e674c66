#include "csmle/lowerbound.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <sstream>
#include <thread>

#include <boost/math/tools/roots.hpp>

#include "csmle/integrate.hpp"

namespace csmle {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

double dist(const double* a, const double* b, int d) {
    double s = 0.0;
    for (int c = 0; c < d; ++c) s += (a[c] - b[c]) * (a[c] - b[c]);
    return std::sqrt(s);
}

double lambda_min(const Eigen::MatrixXd& G) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(G);
    return es.eigenvalues().minCoeff();
}

int find_point(const PointSet& P, const double* x) {
    for (std::size_t i = 0; i < P.size(); ++i) {
        bool same = true;
        for (int c = 0; c < P.d && same; ++c) same = P[i][c] == x[c];
        if (same) return static_cast<int>(i);
    }
    return -1;
}

// Same function with x added to the point set (height = g(x), so the hull is unchanged).
PolyhedralFn with_site(const PolyhedralFn& g, const std::vector<double>& x) {
    if (find_point(g.points, x.data()) >= 0) return g;
    const double v = g.eval(x.data());
    if (!std::isfinite(v)) throw DomainError("deformation site outside conv(points)");
    PointSet P = g.points;
    std::vector<double> h = g.heights;
    P.push(x.data());
    h.push_back(v);
    return lower_convex_hull(P, h);
}

// Values of the hull at every point (points above the hull take the hull value).
std::vector<double> hull_values(const PolyhedralFn& f) {
    std::vector<double> v(f.points.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = f.active[i] ? f.heights[i] : f.eval(f.points[i]);
    return v;
}

struct Bump {
    std::vector<double> heights;  // on the base point set
    std::vector<char> changed;
};

// Slope of a supporting plane at x0: at a kink, the average of the slopes of the
// cells met by small probes around x0 (a convex combination, so still a subgradient).
std::vector<double> support_slope(const PolyhedralFn& g, const std::vector<double>& x0) {
    const auto sg = subgradient(g, x0.data());
    if (!sg.on_boundary) return sg.a;
    std::vector<double> avg(g.d, 0.0), x(x0);
    int cnt = 0;
    for (int c = 0; c < g.d; ++c)
        for (double sgn : {-1.0, 1.0}) {
            x = x0;
            x[c] += sgn * 1e-9 * (1.0 + std::abs(x0[c]));
            if (g.locate(x.data()) < 0) continue;
            const auto a = subgradient(g, x.data()).a;
            for (int k = 0; k < g.d; ++k) avg[k] += a[k];
            ++cnt;
        }
    if (cnt == 0) return sg.a;
    for (double& v : avg) v /= cnt;
    return avg;
}

Bump bump_up(const PolyhedralFn& g, const std::vector<double>& x0, double eps) {
    Bump r;
    r.heights = g.heights;
    r.changed.assign(g.heights.size(), 0);
    if (eps == 0.0) return r;
    const auto a = support_slope(g, x0);
    const double v0 = g.eval(x0.data());
    for (std::size_t i = 0; i < r.heights.size(); ++i) {
        double l = v0 + eps;
        for (int c = 0; c < g.d; ++c) l += a[c] * (g.points[i][c] - x0[c]);
        if (l > r.heights[i]) {
            r.heights[i] = l;
            r.changed[i] = 1;
        }
    }
    return r;
}

Bump bump_down(const PolyhedralFn& g, const std::vector<double>& x0, double eps) {
    Bump r;
    r.heights = g.heights;
    r.changed.assign(g.heights.size(), 0);
    if (eps == 0.0) return r;
    const auto m = maximal_convex_minorant_with_dip(g, x0.data(), eps);
    if (m.points.size() != g.points.size()) throw Error("deform_down: site is not a base point");
    const auto v = hull_values(m);
    for (std::size_t i = 0; i < v.size(); ++i) {
        const double tol = 1e-13 * (1.0 + std::abs(g.heights[i]));
        if (v[i] < g.heights[i] - tol) {
            r.heights[i] = v[i];
            r.changed[i] = 1;
        }
    }
    return r;
}

Bump bump(const PolyhedralFn& g, const std::vector<double>& site, double depth, bool up) {
    return up ? bump_up(g, site, depth) : bump_down(g, site, depth);
}

void check_disjoint(const Bump& a, const Bump& b) {
    for (std::size_t i = 0; i < a.changed.size(); ++i)
        if (a.changed[i] && b.changed[i])
            throw SupportOverlap("deformation supports at x0 and x1 intersect; eps exceeds eps_max for this base");
}

// Base with x0 and x1 among its points.
PolyhedralFn base_with_sites(const DeformationFamily& fam) {
    return with_site(with_site(fam.g, fam.x0), fam.x1);
}

void check_eps(double eps) {
    if (!(eps >= 0.0) || !std::isfinite(eps)) throw ParameterError("deformation: eps must be finite and nonnegative");
}

PolyhedralFn one_sided(const DeformationFamily& fam, double eps, bool up) {
    check_eps(eps);
    if (eps == 0.0) return fam.g;
    const auto g = base_with_sites(fam);
    const Bump b = bump(g, fam.x0, eps, up);
    check_disjoint(b, bump(g, fam.x1, fam.delta, !up));
    return lower_convex_hull(g.points, b.heights);
}

DensityHandle poly_handle(const Transformation& t, const PolyhedralFn& g, nlohmann::json desc) {
    auto gp = std::make_shared<const PolyhedralFn>(g);
    DensityHandle h;
    h.kind = "deformed";
    h.descriptor = std::move(desc);
    h.d = g.d;
    h.density = [gp, t](const double* x) {
        const double v = gp->eval(x);
        return std::isfinite(v) ? eval(t, v) : 0.0;
    };
    return h;
}

// Mixes the primary bump at site with the opposite bump at x1 and solves for unit mass.
DeformedDensity mix(const DeformationFamily& fam, const PolyhedralFn& g, const std::vector<double>& site,
                    double depth, bool up, double eps) {
    const Bump p = bump(g, site, depth, up);
    const Bump q = bump(g, fam.x1, fam.delta, !up);
    check_disjoint(p, q);
    const std::size_t n = g.heights.size();
    std::vector<double> h(n), grad;
    auto heights_at = [&](double th) {
        for (std::size_t i = 0; i < n; ++i)
            h[i] = g.heights[i] + (1.0 - th) * (p.heights[i] - g.heights[i]) + th * (q.heights[i] - g.heights[i]);
        return h;
    };
    auto F = [&](double th) { return integrate_hull(fam.t, g.points, heights_at(th), grad) - 1.0; };
    const double f0 = F(0.0), f1 = F(1.0);
    DeformedDensity r;
    r.xi = depth;
    if (f0 == 0.0) {
        r.theta = 0.0;
    } else {
        if (!(f0 * f1 < 0.0))
            throw BracketFailure("make_valid_density: F(0) - 1 and F(1) - 1 have the same sign; eps_max too large");
        std::uintmax_t iters = 200;
        auto res = boost::math::tools::toms748_solve(F, 0.0, 1.0, f0, f1,
                                                     boost::math::tools::eps_tolerance<double>(50), iters);
        r.theta = 0.5 * (res.first + res.second);
    }
    r.g = lower_convex_hull(g.points, heights_at(r.theta));
    r.density = poly_handle(fam.t, r.g,
                            {{"direction", direction_name(fam.direction)}, {"eps", eps}, {"theta", r.theta}});
    return r;
}

std::vector<std::vector<double>> patch_points(const std::vector<double>& center, double hw, double sp, int d,
                                              double W) {
    const int J = static_cast<int>(std::ceil(hw / sp));
    std::vector<std::vector<double>> out;
    std::vector<int> j(d, -J);
    for (;;) {
        std::vector<double> x(d);
        bool in = true;
        for (int c = 0; c < d; ++c) {
            x[c] = center[c] + sp * j[c];
            in = in && std::abs(x[c]) <= W;
        }
        if (in) out.push_back(x);
        int c = 0;
        while (c < d && ++j[c] > J) j[c++] = -J;
        if (c == d) break;
    }
    return out;
}

PolyhedralFn discretize(const Transformation& t, const BowlSpec& b,
                        const std::vector<std::pair<std::vector<double>, std::pair<double, double>>>& patches,
                        const std::vector<std::vector<double>>& extra) {
    const int d = b.dim();
    const int n = b.grid > 0 ? b.grid : (d == 1 ? 401 : 61);
    const double W = b.half_width;
    PointSet P(d);
    auto inside_patch = [&](const double* x) {
        for (const auto& [c0, hs] : patches) {
            bool in = true;
            for (int c = 0; c < d; ++c) in = in && std::abs(x[c] - c0[c]) < hs.first + 0.5 * hs.second;
            if (in) return true;
        }
        return false;
    };
    std::vector<int> j(d, 0);
    for (;;) {
        double x[3];
        for (int c = 0; c < d; ++c) x[c] = -W + 2.0 * W * j[c] / (n - 1);
        if (!inside_patch(x)) P.push(x);
        int c = 0;
        while (c < d && ++j[c] == n) j[c++] = 0;
        if (c == d) break;
    }
    for (const auto& [c0, hs] : patches)
        for (const auto& x : patch_points(c0, hs.first, hs.second, d, W)) P.push(x.data());
    for (const auto& x : extra)
        if (find_point(P, x.data()) < 0) P.push(x.data());
    std::vector<double> h(P.size());
    for (std::size_t i = 0; i < h.size(); ++i) h[i] = b.eval(P[i]);
    return normalize(t, lower_convex_hull(P, h)).f;
}

std::vector<double> shifted_site(const DeformationFamily& fam, double eps) {
    std::vector<double> s(fam.x0);
    for (int c = 0; c < fam.dim(); ++c) s[c] += eps * fam.u[c];
    return s;
}

}  // namespace

std::string direction_name(DeformDirection d) {
    switch (d) {
        case DeformDirection::Up: return "up";
        case DeformDirection::Down: return "down";
        case DeformDirection::Mode: return "mode";
    }
    return "?";
}

double BowlSpec::eval(const double* x) const {
    double q = 0.0, r2 = 0.0;
    for (int c = 0; c < dim(); ++c) {
        q += 0.5 * curvature[c] * x[c] * x[c];
        r2 += x[c] * x[c];
    }
    return q + quartic * r2 * r2;
}

Eigen::MatrixXd BowlSpec::hessian(const double* x) const {
    const int d = dim();
    Eigen::MatrixXd H = Eigen::MatrixXd::Zero(d, d);
    double r2 = 0.0;
    for (int c = 0; c < d; ++c) r2 += x[c] * x[c];
    for (int a = 0; a < d; ++a) {
        H(a, a) = curvature[a] + 4.0 * quartic * r2;
        for (int b = 0; b < d; ++b) H(a, b) += 8.0 * quartic * x[a] * x[b];
    }
    return H;
}

double select_eps_max(const Eigen::MatrixXd& G, const std::vector<double>& x0, const std::vector<double>& x1) {
    const double lm = lambda_min(G);
    if (!(lm > 0.0)) throw ParameterError("select_eps_max: G must be positive definite");
    const double r = dist(x0.data(), x1.data(), static_cast<int>(x0.size())) / 3.0;
    for (int k = -20; k < 200; ++k) {
        const double e = std::ldexp(1.0, -k);
        if (std::sqrt(2.0 * e / lm) < r) return e;
    }
    throw ParameterError("select_eps_max: x0 and x1 coincide");
}

DeformationFamily make_family(const Transformation& t, const PolyhedralFn& g, std::vector<double> x0,
                              std::vector<double> x1, DeformDirection dir, double delta, Eigen::MatrixXd G) {
    if (!t.decreasing()) throw ParameterError("make_family: deformations need a decreasing transformation");
    const int d = g.d;
    if (static_cast<int>(x0.size()) != d || static_cast<int>(x1.size()) != d || G.rows() != d || G.cols() != d)
        throw ParameterError("make_family: dimension mismatch");
    if (!(delta > 0.0)) throw ParameterError("make_family: delta must be positive");
    for (const auto* x : {&x0, &x1}) {
        double lam[4];
        const int s = g.locate(x->data(), lam);
        bool interior = s >= 0;
        for (int k = 0; interior && k <= d; ++k) interior = lam[k] > 1e-12;
        if (!interior && s >= 0) {
            // a vertex or edge of the triangulation is fine as long as the point is not on the boundary of the box
            auto [lo, hi] = g.bbox();
            interior = true;
            for (int c = 0; c < d; ++c) interior = interior && (*x)[c] > lo[c] && (*x)[c] < hi[c];
        }
        if (!interior) throw DomainError("make_family: x0 and x1 must lie in the interior of conv(points)");
    }
    DeformationFamily fam;
    fam.t = t;
    fam.g = normalize(t, g).f;
    fam.x0 = std::move(x0);
    fam.x1 = std::move(x1);
    fam.direction = dir;
    fam.delta = delta;
    fam.G = std::move(G);
    fam.eps_max = select_eps_max(fam.G, fam.x0, fam.x1);
    fam.g = base_with_sites(fam);
    if (dir == DeformDirection::Mode) fam.u.assign(d, 0.0), fam.u[0] = 1.0;
    return fam;
}

DeformationFamily bowl_family(const Transformation& t, const BowlSpec& bowl, std::vector<double> x0,
                              std::vector<double> x1, DeformDirection dir, double delta) {
    const int d = bowl.dim();
    if (d < 1 || d > 2) throw ParameterError("bowl_family: d must be 1 or 2");
    auto g = discretize(t, bowl, {}, {x0, x1});
    Eigen::MatrixXd G = bowl.hessian(x0.data());
    auto fam = make_family(t, g, std::move(x0), std::move(x1), dir, delta, std::move(G));
    fam.bowl = bowl;
    return fam;
}

void set_mode(DeformationFamily& fam, std::vector<double> u, double gamma, double L) {
    if (static_cast<int>(u.size()) != fam.dim()) throw ParameterError("set_mode: u has the wrong dimension");
    double n = 0.0;
    for (double v : u) n += v * v;
    n = std::sqrt(n);
    if (!(n > 0.0)) throw ParameterError("set_mode: u must be nonzero");
    for (double& v : u) v /= n;
    fam.direction = DeformDirection::Mode;
    fam.u = std::move(u);
    fam.gamma = gamma;
    fam.L = L;
}

DeformationFamily refine_for(const DeformationFamily& fam, double eps) {
    if (!fam.bowl || eps <= 0.0) return fam;
    const BowlSpec& b = *fam.bowl;
    const int d = fam.dim();
    const int per = d == 1 ? 200 : 20;
    const double lm = lambda_min(fam.G);
    std::vector<std::vector<double>> extra{fam.x0, fam.x1};
    double r = std::sqrt(2.0 * eps / lm);
    std::vector<double> center = fam.x0;
    if (fam.direction == DeformDirection::Mode) {
        // the dip at x0 + eps u reaches about sqrt(2 xi / lambda) from the shifted site
        center = shifted_site(fam, eps);
        const double xi = b.eval(center.data()) - b.eval(fam.x0.data()) + std::pow(eps, fam.gamma + 1.0);
        r = 1.2 * std::sqrt(2.0 * std::max(xi, 0.0) / lm);
        extra.push_back(center);
    }
    const double r1 = std::sqrt(2.0 * fam.delta / lambda_min(b.hessian(fam.x1.data())));
    DeformationFamily out = fam;
    out.g = discretize(fam.t, b, {{center, {1.5 * r, r / per}}, {fam.x1, {1.5 * r1, r1 / per}}}, extra);
    return out;
}

bool strongly_convex_near(const DeformationFamily& fam, double radius, double tol) {
    const int d = fam.dim();
    const int m = 4;
    const double hstep = radius / m;
    auto q = [&](const std::vector<double>& x) {
        Eigen::VectorXd z(d);
        for (int c = 0; c < d; ++c) z[c] = x[c] - fam.x0[c];
        return fam.g.eval(x.data()) - 0.5 * z.dot(fam.G * z);
    };
    // the interpolant of a G-convex function can miss G-convexity by about |G| diam^2 / 2 on a cell
    const int s0 = fam.g.locate(fam.x0.data());
    if (s0 < 0) throw DomainError("strongly_convex_near: x0 outside conv(points)");
    double diam2 = 0.0;
    const auto& S = fam.g.simplices[s0];
    for (int a = 0; a <= d; ++a)
        for (int b = a + 1; b <= d; ++b) {
            double e = 0.0;
            for (int c = 0; c < d; ++c) e += std::pow(fam.g.points[S.v[a]][c] - fam.g.points[S.v[b]][c], 2);
            diam2 = std::max(diam2, e);
        }
    const double slack = tol + 0.5 * fam.G.norm() * diam2;
    std::vector<std::vector<double>> dirs;
    for (int c = 0; c < d; ++c) {
        std::vector<double> e(d, 0.0);
        e[c] = 1.0;
        dirs.push_back(e);
    }
    if (d == 2) dirs.push_back({1.0, 1.0}), dirs.push_back({1.0, -1.0});
    std::vector<int> j(d, -(m - 2));
    for (;;) {
        std::vector<double> x(d);
        for (int c = 0; c < d; ++c) x[c] = fam.x0[c] + hstep * j[c];
        for (const auto& e : dirs) {
            std::vector<double> a(x), b(x);
            for (int c = 0; c < d; ++c) a[c] += hstep * e[c], b[c] -= hstep * e[c];
            const double qa = q(a), qb = q(b), qx = q(x);
            if (!std::isfinite(qa) || !std::isfinite(qb)) continue;
            if (qa + qb - 2.0 * qx < -slack) return false;
        }
        int c = 0;
        while (c < d && ++j[c] > m - 2) j[c++] = -(m - 2);
        if (c == d) break;
    }
    return true;
}

PolyhedralFn deform_up(const DeformationFamily& fam, double eps) { return one_sided(fam, eps, true); }
PolyhedralFn deform_down(const DeformationFamily& fam, double eps) { return one_sided(fam, eps, false); }

double mode_depth(const DeformationFamily& fam, double eps) {
    const auto s = shifted_site(fam, eps);
    return fam.g.eval(s.data()) - fam.g.eval(fam.x0.data()) + std::pow(eps, fam.gamma + 1.0);
}

DeformedDensity make_valid_density(const DeformationFamily& fam, double eps) {
    check_eps(eps);
    if (fam.direction == DeformDirection::Mode) return deform_mode(fam, eps);
    const auto g = base_with_sites(fam);
    if (eps == 0.0) {
        DeformedDensity r;
        r.g = g;
        r.density = poly_handle(fam.t, g, {{"direction", direction_name(fam.direction)}, {"eps", 0.0}, {"theta", 0.0}});
        return r;
    }
    return mix(fam, g, fam.x0, eps, fam.direction == DeformDirection::Up, eps);
}

DeformedDensity deform_mode(const DeformationFamily& fam, double eps) {
    check_eps(eps);
    if (fam.u.size() != fam.x0.size()) throw ParameterError("deform_mode: family has no mode direction");
    const auto s = shifted_site(fam, eps);
    const auto g = with_site(base_with_sites(fam), s);
    const double xi = mode_depth(fam, eps);
    DeformedDensity r;
    if (eps == 0.0 || xi <= 0.0) {
        if (eps != 0.0) throw DomainError("deform_mode: base minimum is not at x0");
        r.g = g;
        r.density = poly_handle(fam.t, g, {{"direction", "mode"}, {"eps", 0.0}, {"theta", 0.0}});
        r.argmin = fam.x0;
        return r;
    }
    r = mix(fam, g, s, xi, false, eps);
    // the new minimum sits at the dipped site
    const auto v = hull_values(r.g);
    const auto k = static_cast<std::size_t>(std::min_element(v.begin(), v.end()) - v.begin());
    const int is = find_point(r.g.points, s.data());
    if (is < 0 || v[k] < v[is]) throw Error("deform_mode: minimum is not at the shifted site");
    r.argmin = s;
    return r;
}

LocalHellinger hellinger_local(const Transformation& t, const PolyhedralFn& a, const PolyhedralFn& b, long nodes) {
    const int d = a.d;
    if (b.d != d || a.points.size() != b.points.size()) throw ParameterError("hellinger_local: point sets differ");
    const std::size_t n = a.points.size();
    // changed sites joined through shared simplices form the separate change regions
    std::vector<int> parent(n);
    for (std::size_t i = 0; i < n; ++i) parent[i] = static_cast<int>(i);
    auto find = [&](int i) {
        while (parent[i] != i) i = parent[i] = parent[parent[i]];
        return i;
    };
    std::vector<char> changed(n);
    for (std::size_t i = 0; i < n; ++i) changed[i] = a.heights[i] != b.heights[i];
    for (const auto* f : {&a, &b})
        for (const auto& S : f->simplices) {
            int root = -1;
            for (int k = 0; k <= d; ++k) {
                if (!changed[S.v[k]]) continue;
                const int r = find(S.v[k]);
                if (root < 0) root = r;
                else parent[r] = root;
            }
        }
    std::vector<int> region(n, -1);
    int nreg = 0;
    for (std::size_t i = 0; i < n; ++i) {
        if (!changed[i]) continue;
        const int r = find(static_cast<int>(i));
        if (region[r] < 0) region[r] = nreg++;
        region[i] = region[r];
    }
    std::vector<std::vector<double>> lo(nreg, std::vector<double>(d, kInf));
    std::vector<std::vector<double>> hi(nreg, std::vector<double>(d, -kInf));
    for (const auto* f : {&a, &b})
        for (const auto& S : f->simplices)
            for (int k = 0; k <= d; ++k) {
                const int cl = region[S.v[k]];
                if (cl < 0) continue;
                for (int j = 0; j <= d; ++j)
                    for (int c = 0; c < d; ++c) {
                        lo[cl][c] = std::min(lo[cl][c], f->points[S.v[j]][c]);
                        hi[cl][c] = std::max(hi[cl][c], f->points[S.v[j]][c]);
                    }
            }
    const long per = std::max<long>(8, static_cast<long>(std::pow(static_cast<double>(nodes), 1.0 / d)));
    auto midpoint = [&](const std::vector<double>& l, const std::vector<double>& u, long m) {
        double vol = 1.0;
        for (int c = 0; c < d; ++c) vol *= (u[c] - l[c]) / m;
        double sum = 0.0;
        std::vector<long> j(d, 0);
        double x[3];
        for (;;) {
            for (int c = 0; c < d; ++c) x[c] = l[c] + (u[c] - l[c]) * (j[c] + 0.5) / m;
            const double ga = a.eval(x), gb = b.eval(x);
            const double pa = std::isfinite(ga) ? eval(t, ga) : 0.0;
            const double pb = std::isfinite(gb) ? eval(t, gb) : 0.0;
            const double diff = std::sqrt(pa) - std::sqrt(pb);
            sum += diff * diff;
            int c = 0;
            while (c < d && ++j[c] == m) j[c++] = 0;
            if (c == d) break;
        }
        return 0.5 * sum * vol;
    };
    double h2 = 0.0, err = 0.0;
    for (int k = 0; k < nreg; ++k) {
        const double fine = midpoint(lo[k], hi[k], per);
        const double coarse = midpoint(lo[k], hi[k], per / 2);
        h2 += fine;
        err += std::abs(fine - coarse) / 3.0;
    }
    LocalHellinger r;
    r.estimate = std::sqrt(h2);
    r.std_error = h2 > 0.0 ? err / (2.0 * r.estimate) : std::sqrt(err);
    return r;
}

Regression loglog_fit(const std::vector<double>& x, const std::vector<double>& y) {
    std::vector<double> lx, ly;
    for (std::size_t i = 0; i < x.size(); ++i)
        if (x[i] > 0.0 && y[i] > 0.0 && std::isfinite(x[i]) && std::isfinite(y[i]))
            lx.push_back(std::log(x[i])), ly.push_back(std::log(y[i]));
    Regression r;
    const std::size_t n = lx.size();
    if (n < 2) {
        r.slope = r.intercept = r.slope_se = kNaN;
        return r;
    }
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < n; ++i) mx += lx[i], my += ly[i];
    mx /= n;
    my /= n;
    double sxx = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < n; ++i) sxx += (lx[i] - mx) * (lx[i] - mx), sxy += (lx[i] - mx) * (ly[i] - my);
    r.slope = sxy / sxx;
    r.intercept = my - r.slope * mx;
    double rss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double e = ly[i] - r.intercept - r.slope * lx[i];
        rss += e * e;
    }
    r.slope_se = n > 2 ? std::sqrt(rss / (n - 2) / sxx) : 0.0;
    return r;
}

std::vector<double> dyadic_grid(double eps_max, int count) {
    std::vector<double> g;
    for (int k = 0; k < count; ++k) g.push_back(std::ldexp(eps_max, -k));
    return g;
}

RateReport rate_experiment(const DeformationFamily& fam, const std::vector<double>& eps_grid, long nodes,
                           std::uint64_t seed, int threads) {
    (void)seed;  // the local quadrature is deterministic
    if (nodes <= 0) nodes = 400000;
    for (double e : eps_grid)
        if (!(e > 0.0) || e > fam.eps_max) throw ParameterError("rate_experiment: eps outside (0, eps_max]");
    const int d = fam.dim();
    RateReport rep;
    rep.d = d;
    rep.direction = direction_name(fam.direction);
    const bool mode = fam.direction == DeformDirection::Mode;
    rep.expected_slope = (mode ? fam.gamma : 1.0) * (d + 4) / 4.0;
    rep.cells.resize(eps_grid.size());
    auto run = [&](std::size_t k) {
        RateCell& c = rep.cells[k];
        c.eps = eps_grid[k];
        try {
            const auto f = refine_for(fam, c.eps);
            const auto dd = make_valid_density(f, c.eps);
            const auto base = mode ? with_site(base_with_sites(f), shifted_site(f, c.eps)) : base_with_sites(f);
            const auto H = hellinger_local(f.t, base, dd.g, nodes);
            c.xi = dd.xi;
            c.theta = dd.theta;
            c.hellinger = H.estimate;
            c.std_error = H.std_error;
            if (!(c.hellinger > 3.0 * c.std_error)) {
                c.flagged = true;
                c.flag = "H within 3 standard errors of 0";
            }
        } catch (const std::exception& e) {
            c.flagged = true;
            c.flag = e.what();
            c.hellinger = c.std_error = c.theta = kNaN;
        }
    };
    const int nt = std::max(1, std::min<int>(threads > 0 ? threads : default_threads(),
                                             static_cast<int>(eps_grid.size())));
    if (nt == 1) {
        for (std::size_t k = 0; k < eps_grid.size(); ++k) run(k);
    } else {
        std::atomic<std::size_t> next{0};
        std::vector<std::thread> pool;
        for (int w = 0; w < nt; ++w)
            pool.emplace_back([&] {
                for (std::size_t k; (k = next++) < eps_grid.size();) run(k);
            });
        for (auto& th : pool) th.join();
    }
    std::vector<double> e, x, h, th;
    for (const auto& c : rep.cells) {
        if (c.flagged) continue;
        e.push_back(c.eps);
        x.push_back(c.xi);
        h.push_back(c.hellinger);
        th.push_back(c.theta);
    }
    rep.h_vs_eps = loglog_fit(e, h);
    rep.theta_vs_eps = loglog_fit(e, th);
    if (mode) rep.h_vs_xi = loglog_fit(x, h);
    return rep;
}

nlohmann::json to_json(const RateReport& r) {
    auto reg = [](const Regression& g) {
        return nlohmann::json{{"slope", g.slope},
                              {"intercept", g.intercept},
                              {"slope_se", g.slope_se},
                              {"ci95", {g.slope - 1.96 * g.slope_se, g.slope + 1.96 * g.slope_se}}};
    };
    nlohmann::json cells = nlohmann::json::array();
    for (const auto& c : r.cells) {
        nlohmann::json j{{"eps", c.eps}, {"xi", c.xi},        {"theta", c.theta},
                         {"H", c.hellinger}, {"stderr", c.std_error}, {"flagged", c.flagged}};
        if (c.flagged) j["flag"] = c.flag;
        cells.push_back(j);
    }
    nlohmann::json j{{"d", r.d},
                     {"direction", r.direction},
                     {"expected_slope", r.expected_slope},
                     {"h_vs_eps", reg(r.h_vs_eps)},
                     {"theta_vs_eps", reg(r.theta_vs_eps)},
                     {"cells", cells}};
    if (r.direction == "mode") j["h_vs_xi"] = reg(r.h_vs_xi);
    return j;
}

std::string to_tsv(const RateReport& r) {
    std::ostringstream os;
    os.precision(10);
    os << "eps\tH\tstderr\ttheta\txi\n";
    for (const auto& c : r.cells) os << c.eps << '\t' << c.hellinger << '\t' << c.std_error << '\t' << c.theta << '\t' << c.xi << '\n';
    return os.str();
}

double curvature_estimate(const std::function<double(const double*)>& g, int d, const std::vector<double>& x0,
                          double probe_radius, Eigen::MatrixXd* hessian) {
    if (d < 1 || d > 3 || static_cast<int>(x0.size()) != d) throw ParameterError("curvature_estimate: bad dimension");
    if (!(probe_radius > 0.0)) throw ParameterError("curvature_estimate: probe_radius must be positive");
    const int m = 8;
    const int np = 1 + d + d * (d + 1) / 2;
    std::vector<std::vector<double>> Z;
    std::vector<double> vals;
    std::vector<int> j(d, -m);
    for (;;) {
        std::vector<double> z(d), x(d);
        for (int c = 0; c < d; ++c) z[c] = probe_radius * j[c] / m, x[c] = x0[c] + z[c];
        const double v = g(x.data());
        if (!std::isfinite(v)) throw DomainError("curvature_estimate: probe grid leaves the domain");
        Z.push_back(z);
        vals.push_back(v);
        int c = 0;
        while (c < d && ++j[c] > m) j[c++] = -m;
        if (c == d) break;
    }
    Eigen::MatrixXd A(Z.size(), np);
    Eigen::VectorXd y(Z.size());
    for (std::size_t i = 0; i < Z.size(); ++i) {
        int col = 0;
        A(i, col++) = 1.0;
        for (int c = 0; c < d; ++c) A(i, col++) = Z[i][c];
        for (int a = 0; a < d; ++a)
            for (int b = a; b < d; ++b) A(i, col++) = a == b ? 0.5 * Z[i][a] * Z[i][a] : Z[i][a] * Z[i][b];
        y[i] = vals[i];
    }
    const Eigen::VectorXd p = A.colPivHouseholderQr().solve(y);
    Eigen::MatrixXd H(d, d);
    int col = 1 + d;
    for (int a = 0; a < d; ++a)
        for (int b = a; b < d; ++b) H(a, b) = H(b, a) = p[col++];
    if (hessian) *hessian = H;
    double quad = 0.0;
    Eigen::VectorXd qpart = Eigen::VectorXd::Zero(Z.size());
    for (std::size_t i = 0; i < Z.size(); ++i) {
        Eigen::Map<const Eigen::VectorXd> z(Z[i].data(), d);
        qpart[i] = 0.5 * z.dot(H * z);
        quad += qpart[i] * qpart[i];
    }
    const double resid = (A * p - y).norm();
    quad = std::sqrt(quad);
    const Eigen::VectorXd ev = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(H).eigenvalues();
    const double scale = std::max(1.0, ev.cwiseAbs().maxCoeff());
    if (ev.minCoeff() < -1e-6 * scale) throw IndefiniteFit("curvature_estimate: fitted Hessian is indefinite");
    if (!(quad > 0.0) || resid > 0.1 * quad) return 0.0;
    return std::max(0.0, H.determinant());
}

double curvature_estimate(const PolyhedralFn& f, const std::vector<double>& x0, double probe_radius,
                          Eigen::MatrixXd* hessian) {
    return curvature_estimate([&f](const double* x) { return f.eval(x); }, f.d, x0, probe_radius, hessian);
}

}  // namespace csmle
