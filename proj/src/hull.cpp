#include "csmle/hull.hpp"

#include <algorithm>
#include <climits>
#include <cmath>
#include <map>
#include <numeric>
#include <random>

#include "csmle/predicates.hpp"

namespace csmle::detail {

namespace {

constexpr int kOmega = -1;  // vertical point at +infinity

// Lifted points (x_i, y_i + e w_i + e^2 r_i) with w_i = -|x_i|^2 and r_i pseudo-random.
class Lifted {
public:
    Lifted(const PointSet& X, const std::vector<double>& y) : X_(X), y_(y), d_(X.d), D_(X.d + 1) {
        const std::size_t n = X.size();
        w_.resize(n);
        r_.resize(n);
        for (std::size_t i = 0; i < n; ++i) {
            double s = 0.0;
            for (int k = 0; k < d_; ++k) s += X[i][k] * X[i][k];
            w_[i] = -s;
            std::uint64_t st = 0x5bd1e995ULL + i;
            r_[i] = static_cast<double>(splitmix64(st) >> 11) * 0x1.0p-53 * 2.0 - 1.0;
        }
    }

    int D() const { return D_; }

    // Sign of det[[q, 1]] over the D+1 given vertices (kOmega allowed).
    // Returns 0 only if every perturbation level vanishes.
    int orient(const int* ids, int levels = 3) const {
        double m[25];
        const int n = D_ + 1;
        for (int level = 0; level < levels; ++level) {
            bool has_nonzero_row_all = true;
            for (int r = 0; r < n; ++r) {
                double* row = m + r * n;
                const int id = ids[r];
                if (id == kOmega) {
                    for (int k = 0; k < d_; ++k) row[k] = 0.0;
                    row[d_] = (level == 0) ? 1.0 : 0.0;
                    row[d_ + 1] = 0.0;
                    if (level > 0) has_nonzero_row_all = false;
                } else {
                    const double* p = X_[id];
                    for (int k = 0; k < d_; ++k) row[k] = p[k];
                    row[d_] = level == 0 ? y_[id] : (level == 1 ? w_[id] : r_[id]);
                    row[d_ + 1] = 1.0;
                }
            }
            if (!has_nonzero_row_all) return 0;
            const int s = pred::det_sign(m, n);
            if (s != 0) return s;
        }
        return 0;
    }

    // Sign of the projected orientation det[[x, 1]] of d+1 finite points.
    int proj_orient(const int* ids) const {
        double m[16];
        const int n = d_ + 1;
        for (int r = 0; r < n; ++r) {
            const double* p = X_[ids[r]];
            for (int k = 0; k < d_; ++k) m[r * n + k] = p[k];
            m[r * n + d_] = 1.0;
        }
        return pred::det_sign(m, n);
    }

    double proj_det(const int* ids) const {
        double m[16];
        const int n = d_ + 1;
        for (int r = 0; r < n; ++r) {
            const double* p = X_[ids[r]];
            for (int k = 0; k < d_; ++k) m[r * n + k] = p[k];
            m[r * n + d_] = 1.0;
        }
        return pred::det_approx(m, n);
    }

private:
    const PointSet& X_;
    const std::vector<double>& y_;
    std::vector<double> w_, r_;
    int d_, D_;
};

struct Facet {
    std::array<int, 4> v{};
    std::array<int, 4> nb{};
    std::vector<int> outside;
    bool alive = true;
    int vis_stamp = -2;
    bool vis = false;
};

class IncrementalHull {
public:
    IncrementalHull(const PointSet& X, const std::vector<double>& y) : X_(X), L_(X, y), D_(X.d + 1) {}

    std::vector<std::array<int, 4>> run() {
        init();
        while (!work_.empty()) {
            const int f = work_.back();
            work_.pop_back();
            if (!facets_[f].alive || facets_[f].outside.empty()) continue;
            const int p = facets_[f].outside.back();
            facets_[f].outside.pop_back();
            insert(p, f);
        }
        std::vector<std::array<int, 4>> out;
        for (const auto& F : facets_) {
            if (!F.alive) continue;
            bool finite = true;
            for (int k = 0; k < D_; ++k)
                if (F.v[k] == kOmega) finite = false;
            if (finite) out.push_back(F.v);
        }
        return out;
    }

private:
    bool is_infinite(const Facet& F) const {
        for (int k = 0; k < D_; ++k)
            if (F.v[k] == kOmega) return true;
        return false;
    }

    bool visible(int fid, int p) {
        Facet& F = facets_[fid];
        if (F.vis_stamp == p) return F.vis;
        int ids[5];
        for (int k = 0; k < D_; ++k) ids[k] = F.v[k];
        ids[D_] = p;
        bool res;
        if (!is_infinite(F)) {
            const int s = L_.orient(ids);
            if (s == 0) throw DegenerateInput("lower_convex_hull: unresolvable degeneracy in lifted points");
            res = s > 0;
        } else {
            const int s = L_.orient(ids, 1);
            if (s != 0) {
                res = s > 0;
            } else {
                int k = 0;
                while (F.v[k] != kOmega) ++k;
                res = visible(F.nb[k], p);
            }
        }
        Facet& G = facets_[fid];
        G.vis_stamp = p;
        G.vis = res;
        return res;
    }

    void init() {
        const int d = X_.d;
        const int n = static_cast<int>(X_.size());
        std::vector<int> S;
        // greedy well-spread start
        int i0 = 0;
        for (int i = 1; i < n; ++i)
            if (X_[i][0] < X_[i0][0]) i0 = i;
        S.push_back(i0);
        for (int k = 1; k <= d; ++k) {
            int best = -1;
            double bestv = -1.0;
            for (int i = 0; i < n; ++i) {
                if (std::find(S.begin(), S.end(), i) != S.end()) continue;
                const double v = spread_measure(S, i);
                if (v > bestv) {
                    bestv = v;
                    best = i;
                }
            }
            if (best < 0 || !(bestv > 0.0)) throw DegenerateInput("lower_convex_hull: points are not full-dimensional");
            S.push_back(best);
        }
        if (L_.proj_orient(S.data()) == 0) {
            bool fixed = false;
            for (int i = 0; i < n && !fixed; ++i) {
                if (std::find(S.begin(), S.end(), i) != S.end()) continue;
                int old = S.back();
                S.back() = i;
                if (L_.proj_orient(S.data()) != 0) fixed = true;
                else S.back() = old;
            }
            if (!fixed) throw DegenerateInput("lower_convex_hull: points are not full-dimensional");
        }
        S.push_back(kOmega);
        // D+1 facets
        facets_.resize(D_ + 1);
        for (int k = 0; k <= D_; ++k) {
            Facet& F = facets_[k];
            int pos = 0;
            std::array<int, 4> owner{};
            for (int j = 0; j <= D_; ++j) {
                if (j == k) continue;
                F.v[pos] = S[j];
                owner[pos] = j;
                ++pos;
            }
            int ids[5];
            for (int q = 0; q < D_; ++q) ids[q] = F.v[q];
            ids[D_] = S[k];
            const int s = L_.orient(ids);
            if (s == 0) throw DegenerateInput("lower_convex_hull: degenerate initial simplex");
            if (s > 0) {
                std::swap(F.v[0], F.v[1]);
                std::swap(owner[0], owner[1]);
            }
            for (int q = 0; q < D_; ++q) F.nb[q] = owner[q];
        }
        std::vector<int> order;
        order.reserve(n);
        for (int i = 0; i < n; ++i)
            if (std::find(S.begin(), S.end(), i) == S.end()) order.push_back(i);
        std::mt19937_64 rng(0x1234abcdULL);
        std::shuffle(order.begin(), order.end(), rng);
        for (int q : order) assign(q, 0, D_ + 1);
        for (int k = 0; k <= D_; ++k)
            if (!facets_[k].outside.empty()) work_.push_back(k);
    }

    // Volume-like spread of S plus candidate i (larger is better).
    double spread_measure(const std::vector<int>& S, int i) const {
        const int d = X_.d;
        const double* o = X_[S[0]];
        std::vector<std::vector<double>> vecs;
        for (std::size_t k = 1; k < S.size(); ++k) {
            std::vector<double> v(d);
            for (int c = 0; c < d; ++c) v[c] = X_[S[k]][c] - o[c];
            vecs.push_back(v);
        }
        std::vector<double> v(d);
        for (int c = 0; c < d; ++c) v[c] = X_[i][c] - o[c];
        vecs.push_back(v);
        // Gram determinant
        const int m = static_cast<int>(vecs.size());
        std::vector<double> G(m * m);
        for (int a = 0; a < m; ++a)
            for (int b = 0; b < m; ++b) {
                double s = 0.0;
                for (int c = 0; c < d; ++c) s += vecs[a][c] * vecs[b][c];
                G[a * m + b] = s;
            }
        // Cholesky-free determinant by elimination
        double det = 1.0;
        for (int c = 0; c < m; ++c) {
            int piv = c;
            for (int r = c + 1; r < m; ++r)
                if (std::fabs(G[r * m + c]) > std::fabs(G[piv * m + c])) piv = r;
            if (G[piv * m + c] == 0.0) return 0.0;
            if (piv != c)
                for (int q = 0; q < m; ++q) std::swap(G[piv * m + q], G[c * m + q]);
            det *= G[c * m + c];
            for (int r = c + 1; r < m; ++r) {
                const double f = G[r * m + c] / G[c * m + c];
                for (int q = c; q < m; ++q) G[r * m + q] -= f * G[c * m + q];
            }
        }
        return std::fabs(det);
    }

    void assign(int q, int first, int last) {
        for (int f = first; f < last; ++f) {
            if (!facets_[f].alive) continue;
            if (visible(f, q)) {
                facets_[f].outside.push_back(q);
                return;
            }
        }
    }

    void assign_list(int q, const std::vector<int>& cands) {
        for (int f : cands) {
            if (visible(f, q)) {
                facets_[f].outside.push_back(q);
                return;
            }
        }
    }

    void insert(int p, int start) {
        // visible region by BFS
        std::vector<int> vis{start};
        std::vector<int> stack{start};
        ++bfs_round_;
        mark(start);
        std::vector<std::pair<int, int>> horizon;  // (visible facet, position)
        while (!stack.empty()) {
            const int f = stack.back();
            stack.pop_back();
            for (int k = 0; k < D_; ++k) {
                const int g = facets_[f].nb[k];
                if (is_marked(g)) continue;
                if (visible(g, p)) {
                    mark(g);
                    vis.push_back(g);
                    stack.push_back(g);
                } else {
                    horizon.emplace_back(f, k);
                }
            }
        }
        // new facets
        std::vector<int> created;
        created.reserve(horizon.size());
        using Key = std::array<int, 3>;
        std::map<Key, std::pair<int, int>> ridges;
        for (const auto& [f, k] : horizon) {
            Facet nf;
            nf.v = facets_[f].v;
            nf.v[k] = p;
            const int g = facets_[f].nb[k];
            nf.nb.fill(-1);
            nf.nb[k] = g;
            const int id = static_cast<int>(facets_.size());
            facets_.push_back(std::move(nf));
            for (int q = 0; q < D_; ++q)
                if (facets_[g].nb[q] == f) facets_[g].nb[q] = id;
            created.push_back(id);
        }
        for (int id : created) {
            for (int j = 0; j < D_; ++j) {
                if (facets_[id].v[j] == p) continue;
                Key key{INT_MAX, INT_MAX, INT_MAX};
                int c = 0;
                for (int q = 0; q < D_; ++q)
                    if (q != j) key[c++] = facets_[id].v[q];
                std::sort(key.begin(), key.begin() + c);
                auto it = ridges.find(key);
                if (it == ridges.end()) {
                    ridges.emplace(key, std::make_pair(id, j));
                } else {
                    facets_[id].nb[j] = it->second.first;
                    facets_[it->second.first].nb[it->second.second] = id;
                    ridges.erase(it);
                }
            }
        }
        for (int f : vis) facets_[f].alive = false;
        for (int f : vis) {
            std::vector<int> pts;
            pts.swap(facets_[f].outside);
            for (int q : pts) assign_list(q, created);
        }
        for (int id : created)
            if (!facets_[id].outside.empty()) work_.push_back(id);
    }

    void mark(int f) {
        if (static_cast<int>(marks_.size()) <= f) marks_.resize(facets_.size() * 2 + 16, 0);
        marks_[f] = bfs_round_;
    }
    bool is_marked(int f) const { return f < static_cast<int>(marks_.size()) && marks_[f] == bfs_round_; }

    const PointSet& X_;
    Lifted L_;
    int D_;
    std::vector<Facet> facets_;
    std::vector<int> work_;
    std::vector<int> marks_;
    int bfs_round_ = 0;
};

std::vector<std::array<int, 4>> chain_1d(const PointSet& X, const std::vector<double>& y) {
    const int n = static_cast<int>(X.size());
    std::vector<int> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](int a, int b) { return X[a][0] < X[b][0]; });
    for (int i = 1; i < n; ++i)
        if (X[idx[i]][0] == X[idx[i - 1]][0]) throw DegenerateInput("lower_convex_hull: duplicate points");
    Lifted L(X, y);
    std::vector<int> chain;
    for (int p : idx) {
        while (chain.size() >= 2) {
            int ids[3] = {chain[chain.size() - 2], chain.back(), p};
            if (L.orient(ids) > 0) break;
            chain.pop_back();
        }
        chain.push_back(p);
    }
    std::vector<std::array<int, 4>> out;
    for (std::size_t i = 0; i + 1 < chain.size(); ++i) out.push_back({chain[i], chain[i + 1], -1, -1});
    return out;
}

}  // namespace

std::vector<std::array<int, 4>> lower_hull_simplices(const PointSet& X, const std::vector<double>& y) {
    if (X.d == 1) return chain_1d(X, y);
    if (X.d < 1 || X.d > 3) throw ParameterError("lower_convex_hull supports d in {1,2,3}");
    IncrementalHull H(X, y);
    return H.run();
}

}  // namespace csmle::detail
