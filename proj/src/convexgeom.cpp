#include "csmle/convexgeom.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include <Eigen/Dense>

#include "csmle/hull.hpp"

namespace csmle {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kBaryTol = 1e-10;
}  // namespace

// Bucket grid over the bounding box; each bucket lists overlapping simplices and
// crowded buckets are split into finer grids of their own.
class PointLocator {
public:
    PointLocator(const PolyhedralFn& f) : d_(f.d) {
        const std::size_t ns = f.simplices.size();
        lo_.assign(d_, kInf);
        hi_.assign(d_, -kInf);
        origin_.resize(ns * d_);
        inv_.resize(ns * d_ * d_);
        box_lo_.resize(ns * d_);
        box_hi_.resize(ns * d_);
        for (std::size_t s = 0; s < ns; ++s) {
            const Simplex& S = f.simplices[s];
            const double* o = f.points[S.v[0]];
            Eigen::MatrixXd E(d_, d_);
            for (int k = 0; k < d_; ++k)
                for (int c = 0; c < d_; ++c) E(c, k) = f.points[S.v[k + 1]][c] - o[c];
            Eigen::MatrixXd Ei = E.inverse();
            for (int c = 0; c < d_; ++c) origin_[s * d_ + c] = o[c];
            for (int r = 0; r < d_; ++r)
                for (int c = 0; c < d_; ++c) inv_[(s * d_ + r) * d_ + c] = Ei(r, c);
            for (int c = 0; c < d_; ++c) {
                double mn = kInf, mx = -kInf;
                for (int k = 0; k <= d_; ++k) {
                    mn = std::min(mn, f.points[S.v[k]][c]);
                    mx = std::max(mx, f.points[S.v[k]][c]);
                }
                box_lo_[s * d_ + c] = mn - 1e-12 * (1.0 + std::fabs(mn));
                box_hi_[s * d_ + c] = mx + 1e-12 * (1.0 + std::fabs(mx));
                lo_[c] = std::min(lo_[c], mn);
                hi_[c] = std::max(hi_[c], mx);
            }
        }
        std::vector<int> all(ns);
        for (std::size_t s = 0; s < ns; ++s) all[s] = static_cast<int>(s);
        build(lo_.data(), hi_.data(), all, 0);
    }

    int locate(const double* x, double* bary) const {
        for (int c = 0; c < d_; ++c) {
            const double tol = 1e-9 * (1.0 + std::fabs(hi_[c] - lo_[c]));
            if (x[c] < lo_[c] - tol || x[c] > hi_[c] + tol) return -1;
        }
        if (grids_.empty()) return -1;
        const Grid* g = &grids_[0];
        std::size_t b = 0;
        for (;;) {
            int idx[3] = {0, 0, 0};
            for (int c = 0; c < d_; ++c) {
                const int k = static_cast<int>(std::floor((x[c] - g->lo[c]) / g->width[c]));
                idx[c] = std::clamp(k, 0, g->cells - 1);
            }
            b = 0;
            for (int c = d_ - 1; c >= 0; --c) b = b * g->cells + idx[c];
            if (g->child[b] < 0) break;
            g = &grids_[g->child[b]];
        }
        int best = -1;
        double bestmin = -kInf;
        double lam[4], bestlam[4];
        for (std::size_t q = g->start[b]; q < g->start[b + 1]; ++q) {
            const int s = g->items[q];
            const double mn = bary_of(s, x, lam);
            if (mn > bestmin) {
                bestmin = mn;
                best = s;
                std::copy(lam, lam + d_ + 1, bestlam);
                if (mn >= 0.0) break;
            }
        }
        if (best < 0 || bestmin < -kBaryTol) return -1;
        if (bary) std::copy(bestlam, bestlam + d_ + 1, bary);
        return best;
    }

    double bary_of(int s, const double* x, double* lam) const {
        double diff[3];
        for (int c = 0; c < d_; ++c) diff[c] = x[c] - origin_[s * d_ + c];
        double sum = 0.0, mn = kInf;
        for (int r = 0; r < d_; ++r) {
            double v = 0.0;
            for (int c = 0; c < d_; ++c) v += inv_[(s * d_ + r) * d_ + c] * diff[c];
            lam[r + 1] = v;
            sum += v;
            mn = std::min(mn, v);
        }
        lam[0] = 1.0 - sum;
        return std::min(mn, lam[0]);
    }

private:
    struct Grid {
        double lo[3] = {0, 0, 0}, width[3] = {1, 1, 1};
        int cells = 1;
        std::vector<std::size_t> start;
        std::vector<int> items;
        std::vector<int> child;
    };

    static constexpr std::size_t kSplit = 24;

    int build(const double* lo, const double* hi, const std::vector<int>& list, int depth) {
        const int gi = static_cast<int>(grids_.size());
        grids_.emplace_back();
        Grid g;
        const std::size_t ns = list.size();
        int per = std::max(1, static_cast<int>(std::ceil(std::pow(static_cast<double>(ns), 1.0 / d_))));
        per = std::min(per, d_ == 1 ? 1 << 20 : (d_ == 2 ? 2048 : 128));
        g.cells = per;
        std::size_t total = 1;
        for (int c = 0; c < d_; ++c) {
            g.lo[c] = lo[c];
            g.width[c] = (hi[c] - lo[c]) / per;
            if (!(g.width[c] > 0.0)) g.width[c] = 1.0;
            total *= per;
        }
        auto cell_of = [&](int c, double v) {
            const int k = static_cast<int>(std::floor((v - g.lo[c]) / g.width[c]));
            return std::clamp(k, 0, per - 1);
        };
        std::vector<std::vector<int>> bucket(total);
        for (int s : list) {
            int clo[3] = {0, 0, 0}, chi[3] = {0, 0, 0};
            for (int c = 0; c < d_; ++c) {
                clo[c] = cell_of(c, box_lo_[s * d_ + c]);
                chi[c] = cell_of(c, box_hi_[s * d_ + c]);
            }
            int idx[3] = {clo[0], d_ > 1 ? clo[1] : 0, d_ > 2 ? clo[2] : 0};
            while (true) {
                std::size_t f = 0;
                for (int c = d_ - 1; c >= 0; --c) f = f * per + idx[c];
                bucket[f].push_back(s);
                int c = 0;
                while (c < d_) {
                    if (++idx[c] <= chi[c]) break;
                    idx[c] = clo[c];
                    ++c;
                }
                if (c == d_) break;
            }
        }
        g.start.assign(total + 1, 0);
        g.child.assign(total, -1);
        for (std::size_t b = 0; b < total; ++b) g.start[b + 1] = g.start[b] + bucket[b].size();
        if (depth > 0 && g.start.back() > 4 * ns) {
            // overlapping slivers: splitting does not pay off
            grids_.pop_back();
            return -1;
        }
        g.items.reserve(g.start.back());
        for (auto& b : bucket) g.items.insert(g.items.end(), b.begin(), b.end());
        std::vector<std::pair<std::size_t, std::vector<int>>> crowded;
        if (depth < 8)
            for (std::size_t b = 0; b < total; ++b)
                if (bucket[b].size() > kSplit && bucket[b].size() * 2 < ns)
                    crowded.emplace_back(b, std::move(bucket[b]));
        grids_[gi] = std::move(g);
        for (auto& [b, items] : crowded) {
            double clo[3], chi[3];
            std::size_t r = b;
            for (int c = 0; c < d_; ++c) {
                const std::size_t k = r % per;
                r /= per;
                clo[c] = grids_[gi].lo[c] + grids_[gi].width[c] * k;
                chi[c] = clo[c] + grids_[gi].width[c];
            }
            const int child = build(clo, chi, items, depth + 1);
            grids_[gi].child[b] = child;
        }
        return gi;
    }

    int d_;
    std::vector<double> lo_, hi_;
    std::vector<double> origin_, inv_, box_lo_, box_hi_;
    std::vector<Grid> grids_;
};

void PolyhedralFn::build_locator() { locator_ = std::make_shared<const PointLocator>(*this); }

int PolyhedralFn::locate(const double* x, double* bary) const {
    if (!locator_) return -1;
    return locator_->locate(x, bary);
}

double PolyhedralFn::eval(const double* x) const {
    const int s = locate(x);
    if (s < 0) return kInf;
    const Simplex& S = simplices[s];
    double v = S.b;
    for (int c = 0; c < d; ++c) v += S.a[c] * x[c];
    return v;
}

double PolyhedralFn::min_height() const {
    double m = kInf;
    for (std::size_t i = 0; i < heights.size(); ++i)
        if (active[i]) m = std::min(m, heights[i]);
    return m;
}

double PolyhedralFn::max_height() const {
    double m = -kInf;
    for (std::size_t i = 0; i < heights.size(); ++i)
        if (active[i]) m = std::max(m, heights[i]);
    return m;
}

std::pair<std::vector<double>, std::vector<double>> PolyhedralFn::bbox() const {
    std::vector<double> lo(d, kInf), hi(d, -kInf);
    for (std::size_t i = 0; i < points.size(); ++i)
        for (int c = 0; c < d; ++c) {
            lo[c] = std::min(lo[c], points[i][c]);
            hi[c] = std::max(hi[c], points[i][c]);
        }
    return {lo, hi};
}

double PolyhedralFn::total_volume() const {
    std::vector<double> v;
    v.reserve(simplices.size());
    for (const auto& s : simplices) v.push_back(s.volume);
    std::sort(v.begin(), v.end());
    double t = 0.0;
    for (double x : v) t += x;
    return t;
}

PolyhedralFn PolyhedralFn::shifted(double c) const {
    PolyhedralFn g = *this;
    for (auto& h : g.heights) h += c;
    for (auto& s : g.simplices) s.b += c;
    return g;
}

double MaxAffineFn::eval(const double* x) const {
    int k;
    return eval(x, k);
}

double MaxAffineFn::eval(const double* x, int& argmax) const {
    double best = -kInf;
    argmax = -1;
    for (std::size_t i = 0; i < pieces.size(); ++i) {
        double v = pieces[i].b;
        for (int c = 0; c < d; ++c) v += pieces[i].a[c] * x[c];
        if (v > best) {
            best = v;
            argmax = static_cast<int>(i);
        }
    }
    return best;
}

MaxAffineFn MaxAffineFn::shifted(double c) const {
    MaxAffineFn g = *this;
    for (auto& p : g.pieces) p.b += c;
    return g;
}

double simplex_volume(const PointSet& pts, const int* idx) {
    const int d = pts.d;
    Eigen::MatrixXd E(d, d);
    for (int k = 0; k < d; ++k)
        for (int c = 0; c < d; ++c) E(c, k) = pts[idx[k + 1]][c] - pts[idx[0]][c];
    return std::fabs(E.determinant()) / factorial(d);
}

namespace {
// A hull vertex whose lifted point lies (within tolerance) on the lower hull of its
// link is not a kink of the function; clear its active flag so repeated hulls agree.
void unflag_flat_vertices(PolyhedralFn& f, const std::vector<double>& heights) {
    const int d = f.d;
    const std::size_t n = heights.size();
    double hs = 0.0;
    for (double h : heights) hs = std::max(hs, std::fabs(h));
    const double tol = 1e-9 * (1.0 + hs);
    std::vector<std::vector<int>> link(n);
    for (const auto& S : f.simplices)
        for (int k = 0; k <= d; ++k)
            for (int m = 0; m <= d; ++m)
                if (m != k) link[S.v[k]].push_back(S.v[m]);
    for (std::size_t i = 0; i < n; ++i) {
        if (!f.active[i]) continue;
        auto& L = link[i];
        std::sort(L.begin(), L.end());
        L.erase(std::unique(L.begin(), L.end()), L.end());
        if (L.size() < static_cast<std::size_t>(d + 1)) continue;
        PointSet sub;
        sub.d = d;
        std::vector<double> sh;
        for (int j : L) {
            sub.push(f.points[j]);
            sh.push_back(heights[j]);
        }
        std::vector<std::array<int, 4>> tri;
        try {
            tri = detail::lower_hull_simplices(sub, sh);
        } catch (const Error&) {
            continue;
        }
        const double* x = f.points[i];
        for (const auto& t : tri) {
            Eigen::MatrixXd M(d + 1, d + 1);
            Eigen::VectorXd rhs(d + 1);
            for (int k = 0; k <= d; ++k) {
                for (int c = 0; c < d; ++c) M(c, k) = sub[t[k]][c];
                M(d, k) = 1.0;
            }
            for (int c = 0; c < d; ++c) rhs(c) = x[c];
            rhs(d) = 1.0;
            Eigen::FullPivLU<Eigen::MatrixXd> lu(M);
            if (!lu.isInvertible()) continue;
            Eigen::VectorXd lam = lu.solve(rhs);
            if (lam.minCoeff() < -1e-10) continue;
            double v = 0.0;
            for (int k = 0; k <= d; ++k) v += lam(k) * sh[t[k]];
            if (v <= heights[i] + tol) f.active[i] = 0;
            break;
        }
    }
}
}  // namespace

PolyhedralFn lower_convex_hull(const PointSet& points, const std::vector<double>& heights) {
    const int d = points.d;
    const std::size_t n = points.size();
    if (d < 1 || d > 3) throw ParameterError("lower_convex_hull: d must be 1, 2 or 3");
    if (heights.size() != n) throw ParameterError("lower_convex_hull: heights size mismatch");
    if (n < static_cast<std::size_t>(d + 1)) throw DegenerateInput("lower_convex_hull: need at least d+1 points");
    for (double h : heights)
        if (!std::isfinite(h)) throw NonfiniteError("lower_convex_hull: heights must be finite");
    for (double v : points.x)
        if (!std::isfinite(v)) throw NonfiniteError("lower_convex_hull: points must be finite");

    const auto facets = detail::lower_hull_simplices(points, heights);
    PolyhedralFn f;
    f.d = d;
    f.points = points;
    f.active.assign(n, 0);
    for (const auto& v : facets) {
        Simplex S;
        S.v = v;
        S.volume = simplex_volume(points, v.data());
        if (!(S.volume > 0.0)) continue;
        Eigen::MatrixXd M(d + 1, d + 1);
        Eigen::VectorXd rhs(d + 1);
        for (int k = 0; k <= d; ++k) {
            for (int c = 0; c < d; ++c) M(k, c) = points[v[k]][c];
            M(k, d) = 1.0;
            rhs(k) = heights[v[k]];
        }
        Eigen::VectorXd sol = M.fullPivLu().solve(rhs);
        for (int c = 0; c < d; ++c) S.a[c] = sol(c);
        S.b = sol(d);
        for (int k = 0; k <= d; ++k) f.active[v[k]] = 1;
        f.simplices.push_back(S);
    }
    if (f.simplices.empty()) throw DegenerateInput("lower_convex_hull: no full-dimensional simplices");
    unflag_flat_vertices(f, heights);
    f.build_locator();
    f.heights.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        if (f.active[i]) {
            f.heights[i] = heights[i];
        } else {
            double h = f.eval(points[i]);
            if (!std::isfinite(h)) throw DegenerateInput("lower_convex_hull: site not covered by triangulation");
            f.heights[i] = std::min(h, heights[i]);
        }
    }
    return f;
}

double eval_poly(const PolyhedralFn& f, const double* x) { return f.eval(x); }

MaxAffineFn minimal_max_affine(const PointSet& points, const std::vector<double>& heights) {
    if (points.d != 1) throw ParameterError("minimal_max_affine: only d = 1 is supported");
    const std::size_t n = points.size();
    if (n < 2 || heights.size() != n) throw ParameterError("minimal_max_affine: need n >= 2 matching heights");
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](auto a, auto b) { return points[a][0] < points[b][0]; });
    for (std::size_t i = 0; i < n; ++i)
        if (!(points[idx[i]][0] > 0.0)) throw DomainError("minimal_max_affine: points must be positive");
    MaxAffineFn g;
    g.d = 1;
    double prev_slope = -kInf;
    for (std::size_t i = 0; i + 1 < n; ++i) {
        const double x0 = points[idx[i]][0], x1 = points[idx[i + 1]][0];
        if (x1 == x0) throw DegenerateInput("minimal_max_affine: duplicate points");
        const double m = (heights[idx[i + 1]] - heights[idx[i]]) / (x1 - x0);
        if (!(m < 0.0)) throw InfeasibleError("minimal_max_affine: heights must be strictly decreasing");
        if (m < prev_slope - 1e-12 * std::fabs(prev_slope))
            throw InfeasibleError("minimal_max_affine: heights violate convexity");
        const double b = heights[idx[i]] - m * x0;
        if (!g.pieces.empty() && std::fabs(m - prev_slope) <= 1e-12 * std::fabs(m)) {
            continue;  // collinear continuation of the previous piece
        }
        g.pieces.push_back({{m}, b});
        prev_slope = m;
    }
    return g;
}

PolyhedralFn maximal_convex_minorant_with_dip(const PolyhedralFn& f, const double* x0, double eps) {
    if (eps < 0.0) throw ParameterError("maximal_convex_minorant_with_dip: eps must be nonnegative");
    if (eps == 0.0) return f;
    const double v = f.eval(x0);
    if (!std::isfinite(v)) throw DomainError("maximal_convex_minorant_with_dip: x0 outside conv(X)");
    PointSet pts = f.points;
    std::vector<double> h = f.heights;
    bool found = false;
    for (std::size_t i = 0; i < pts.size(); ++i) {
        bool same = true;
        for (int c = 0; c < f.d; ++c) same = same && pts[i][c] == x0[c];
        if (same) {
            h[i] = v - eps;
            found = true;
        }
    }
    if (!found) {
        pts.push(x0);
        h.push_back(v - eps);
    }
    return lower_convex_hull(pts, h);
}

SubgradientResult subgradient(const PolyhedralFn& f, const double* x) {
    double lam[4];
    const int s = f.locate(x, lam);
    if (s < 0) throw DomainError("subgradient: x outside conv(X)");
    SubgradientResult r;
    r.a.assign(f.simplices[s].a.begin(), f.simplices[s].a.begin() + f.d);
    double mn = kInf;
    for (int k = 0; k <= f.d; ++k) mn = std::min(mn, lam[k]);
    r.on_boundary = mn < 1e-12;
    return r;
}

MeasureEstimate sublevel_measure(const PolyhedralFn& f, double y, long mc_budget, std::uint64_t seed) {
    if (mc_budget < 10000) throw ParameterError("sublevel_measure: mc_budget must be at least 1e4");
    auto [lo, hi] = f.bbox();
    double vol = 1.0;
    for (int c = 0; c < f.d; ++c) vol *= hi[c] - lo[c];
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> U(0.0, 1.0);
    long hits = 0;
    double x[3];
    for (long i = 0; i < mc_budget; ++i) {
        for (int c = 0; c < f.d; ++c) x[c] = lo[c] + (hi[c] - lo[c]) * U(rng);
        if (f.eval(x) <= y) ++hits;
    }
    const double p = static_cast<double>(hits) / mc_budget;
    return {vol * p, vol * std::sqrt(p * (1.0 - p) / mc_budget)};
}

MeasureEstimate sublevel_measure(const MaxAffineFn&, double, long, std::uint64_t) {
    throw UnboundedLevelSet("sublevel_measure: sublevel sets of a max-affine function on the orthant are unbounded; "
                            "use superlevel_measure");
}

double superlevel_box(const MaxAffineFn& f, double y) {
    double amin = kInf, R = 0.0;
    for (const auto& p : f.pieces) {
        for (int c = 0; c < f.d; ++c) {
            if (!(p.a[c] < 0.0)) throw UnboundedLevelSet("superlevel_box: slopes must be negative");
            amin = std::min(amin, -p.a[c]);
        }
    }
    for (const auto& p : f.pieces) R = std::max(R, (p.b - y) / amin);
    return R;
}

MeasureEstimate superlevel_measure(const MaxAffineFn& f, double y, long mc_budget, std::uint64_t seed) {
    if (mc_budget < 10000) throw ParameterError("superlevel_measure: mc_budget must be at least 1e4");
    const double R = superlevel_box(f, y);
    if (R <= 0.0) return {0.0, 0.0};
    const double vol = std::pow(R, f.d);
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> U(0.0, R);
    long hits = 0;
    std::vector<double> x(f.d);
    for (long i = 0; i < mc_budget; ++i) {
        for (int c = 0; c < f.d; ++c) x[c] = U(rng);
        if (f.eval(x.data()) > y) ++hits;
    }
    const double p = static_cast<double>(hits) / mc_budget;
    return {vol * p, vol * std::sqrt(p * (1.0 - p) / mc_budget)};
}

bool general_position(const PointSet& points, double tol, std::uint64_t seed) {
    const int d = points.d;
    const std::size_t n = points.size();
    if (n < static_cast<std::size_t>(d + 1)) return false;
    double scale = 0.0;
    if (n <= 2000) {
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = i + 1; j < n; ++j) {
                double s = 0.0;
                for (int c = 0; c < d; ++c) s += (points[i][c] - points[j][c]) * (points[i][c] - points[j][c]);
                scale = std::max(scale, s);
            }
    } else {
        double s = 0.0;
        std::vector<double> lo(d, kInf), hi(d, -kInf);
        for (std::size_t i = 0; i < n; ++i)
            for (int c = 0; c < d; ++c) {
                lo[c] = std::min(lo[c], points[i][c]);
                hi[c] = std::max(hi[c], points[i][c]);
            }
        for (int c = 0; c < d; ++c) s += (hi[c] - lo[c]) * (hi[c] - lo[c]);
        scale = s;
    }
    scale = std::sqrt(scale);
    if (!(scale > 0.0)) return false;
    const double thresh = tol * std::pow(scale, d);
    int idx[4];
    if (n <= 64) {
        // exhaustive over (d+1)-subsets
        const int m = d + 1;
        for (int k = 0; k < m; ++k) idx[k] = k;
        while (true) {
            if (!(simplex_volume(points, idx) > thresh)) return false;
            int k = m - 1;
            while (k >= 0 && idx[k] == static_cast<int>(n) - m + k) --k;
            if (k < 0) break;
            ++idx[k];
            for (int q = k + 1; q < m; ++q) idx[q] = idx[q - 1] + 1;
        }
        return true;
    }
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<std::size_t> U(0, n - 1);
    for (int trial = 0; trial < 10000; ++trial) {
        for (int k = 0; k <= d; ++k) {
            bool dup;
            do {
                idx[k] = static_cast<int>(U(rng));
                dup = false;
                for (int q = 0; q < k; ++q) dup = dup || idx[q] == idx[k];
            } while (dup);
        }
        if (!(simplex_volume(points, idx) > thresh)) return false;
    }
    return true;
}

std::vector<EnvelopeSegment> envelope_1d(const MaxAffineFn& f) {
    if (f.d != 1) throw ParameterError("envelope_1d: d must be 1");
    std::vector<int> order(f.pieces.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int i, int j) {
        if (f.pieces[i].a[0] != f.pieces[j].a[0]) return f.pieces[i].a[0] < f.pieces[j].a[0];
        return f.pieces[i].b > f.pieces[j].b;
    });
    std::vector<int> hull;
    auto cross = [&](int i, int j) {
        return (f.pieces[i].b - f.pieces[j].b) / (f.pieces[j].a[0] - f.pieces[i].a[0]);
    };
    for (int i : order) {
        if (!hull.empty() && f.pieces[hull.back()].a[0] == f.pieces[i].a[0]) continue;
        while (hull.size() >= 2 && cross(hull[hull.size() - 2], i) <= cross(hull[hull.size() - 2], hull.back()))
            hull.pop_back();
        hull.push_back(i);
    }
    std::vector<EnvelopeSegment> segs;
    for (std::size_t k = 0; k < hull.size(); ++k) {
        double l = (k == 0) ? -kInf : cross(hull[k - 1], hull[k]);
        double r = (k + 1 == hull.size()) ? kInf : cross(hull[k], hull[k + 1]);
        l = std::max(l, 0.0);
        if (r <= l) continue;
        segs.push_back({hull[k], l, r});
    }
    return segs;
}

MaxAffineFn simplify(const MaxAffineFn& f, const PointSet* probes) {
    MaxAffineFn g;
    g.d = f.d;
    if (f.d == 1) {
        for (const auto& s : envelope_1d(f)) g.pieces.push_back(f.pieces[s.piece]);
        return g;
    }
    if (!probes) return f;
    std::vector<char> used(f.pieces.size(), 0);
    for (std::size_t i = 0; i < probes->size(); ++i) {
        int k;
        f.eval((*probes)[i], k);
        if (k >= 0) used[k] = 1;
    }
    for (std::size_t i = 0; i < f.pieces.size(); ++i)
        if (used[i]) g.pieces.push_back(f.pieces[i]);
    return g;
}

nlohmann::json to_json(const PolyhedralFn& f) {
    nlohmann::json j;
    j["d"] = f.d;
    j["points"] = nlohmann::json::array();
    for (std::size_t i = 0; i < f.points.size(); ++i)
        j["points"].push_back(std::vector<double>(f.points[i], f.points[i] + f.d));
    j["heights"] = f.heights;
    j["simplices"] = nlohmann::json::array();
    for (const auto& s : f.simplices) {
        nlohmann::json js;
        js["vertices"] = std::vector<int>(s.v.begin(), s.v.begin() + f.d + 1);
        js["a"] = std::vector<double>(s.a.begin(), s.a.begin() + f.d);
        js["b"] = s.b;
        js["volume"] = s.volume;
        j["simplices"].push_back(js);
    }
    std::vector<bool> act(f.active.begin(), f.active.end());
    j["active"] = act;
    return j;
}

PolyhedralFn polyhedral_from_json(const nlohmann::json& j) {
    PolyhedralFn f;
    const auto& pts = j.at("points");
    f.d = j.contains("d") ? j.at("d").get<int>() : static_cast<int>(pts.at(0).size());
    f.points = PointSet(f.d);
    for (const auto& p : pts) {
        auto v = p.get<std::vector<double>>();
        if (static_cast<int>(v.size()) != f.d) throw ParameterError("polyhedral_from_json: bad point");
        f.points.push(v.data());
    }
    f.heights = j.at("heights").get<std::vector<double>>();
    for (const auto& js : j.at("simplices")) {
        Simplex s;
        auto v = js.at("vertices").get<std::vector<int>>();
        auto a = js.at("a").get<std::vector<double>>();
        for (int k = 0; k <= f.d; ++k) s.v[k] = v.at(k);
        for (int c = 0; c < f.d; ++c) s.a[c] = a.at(c);
        s.b = js.at("b").get<double>();
        s.volume = js.at("volume").get<double>();
        f.simplices.push_back(s);
    }
    auto act = j.at("active").get<std::vector<bool>>();
    f.active.assign(act.begin(), act.end());
    f.build_locator();
    return f;
}

nlohmann::json to_json(const MaxAffineFn& f) {
    nlohmann::json j;
    j["d"] = f.d;
    j["pieces"] = nlohmann::json::array();
    for (const auto& p : f.pieces) j["pieces"].push_back({{"a", p.a}, {"b", p.b}});
    return j;
}

MaxAffineFn max_affine_from_json(const nlohmann::json& j) {
    MaxAffineFn f;
    f.d = j.at("d").get<int>();
    for (const auto& p : j.at("pieces")) f.pieces.push_back({p.at("a").get<std::vector<double>>(), p.at("b").get<double>()});
    return f;
}

}  // namespace csmle
