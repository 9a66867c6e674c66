#include "csmle/predicates.hpp"

#include <cmath>
#include <limits>
#include <vector>

#include <gmpxx.h>

namespace csmle::pred {

namespace {

// Expansion plan for Laplace over column subsets: for row k, every mask with
// k+1 bits lists its (column, sub-mask, sign) terms.
struct LaplaceTerm {
    int c, sub;
    double sgn;
};
struct LaplaceStep {
    int mask;
    int first, count;  // range into terms
};
struct LaplacePlan {
    std::vector<LaplaceStep> steps[5];
    std::vector<LaplaceTerm> terms;
};

const LaplacePlan& plan_for(int n) {
    static const auto plans = [] {
        std::vector<LaplacePlan> all(6);
        for (int nn = 1; nn <= 5; ++nn) {
            LaplacePlan& P = all[nn];
            const int full = (1 << nn) - 1;
            for (int k = 0; k < nn; ++k) {
                for (int mask = 0; mask <= full; ++mask) {
                    if (__builtin_popcount(static_cast<unsigned>(mask)) != k + 1) continue;
                    LaplaceStep st{mask, static_cast<int>(P.terms.size()), 0};
                    int pos = 0;
                    for (int c = 0; c < nn; ++c) {
                        if (!(mask & (1 << c))) continue;
                        P.terms.push_back({c, mask & ~(1 << c), ((k + pos) % 2 == 0) ? 1.0 : -1.0});
                        ++st.count;
                        ++pos;
                    }
                    P.steps[k].push_back(st);
                }
            }
        }
        return all;
    }();
    return plans[n];
}

// Laplace expansion over column subsets; returns det and permanent of |m|.
void laplace(const double* m, int n, double& det, double& perm) {
    double D[32], P[32];
    D[0] = 1.0;
    P[0] = 1.0;
    const LaplacePlan& plan = plan_for(n);
    for (int k = 0; k < n; ++k) {
        // masks of row k only read masks of row k-1, so in-place update is safe
        for (const auto& st : plan.steps[k]) {
            double dsum = 0.0, psum = 0.0;
            for (int q = st.first; q < st.first + st.count; ++q) {
                const auto& t = plan.terms[q];
                const double v = m[k * n + t.c];
                dsum += t.sgn * v * D[t.sub];
                psum += std::fabs(v) * P[t.sub];
            }
            D[st.mask] = dsum;
            P[st.mask] = psum;
        }
    }
    det = D[(1 << n) - 1];
    perm = P[(1 << n) - 1];
}

int exact_sign(const double* m, int n) {
    std::vector<mpq_class> a(static_cast<std::size_t>(n * n));
    for (int i = 0; i < n * n; ++i) a[i] = mpq_class(m[i]);
    int sign = 1;
    for (int col = 0; col < n; ++col) {
        int piv = -1;
        for (int r = col; r < n; ++r)
            if (sgn(a[r * n + col]) != 0) {
                piv = r;
                break;
            }
        if (piv < 0) return 0;
        if (piv != col) {
            for (int c = 0; c < n; ++c) std::swap(a[piv * n + c], a[col * n + c]);
            sign = -sign;
        }
        if (sgn(a[col * n + col]) < 0) sign = -sign;
        for (int r = col + 1; r < n; ++r) {
            if (sgn(a[r * n + col]) == 0) continue;
            mpq_class f = a[r * n + col] / a[col * n + col];
            for (int c = col; c < n; ++c) a[r * n + c] -= f * a[col * n + c];
        }
    }
    return sign;
}

}  // namespace

double det_approx(const double* m, int n) {
    double det, perm;
    laplace(m, n, det, perm);
    return det;
}

int det_sign(const double* m, int n) {
    double det, perm;
    laplace(m, n, det, perm);
    const double u = std::numeric_limits<double>::epsilon() * 0.5;
    const double bound = 2.0 * n * n * u * perm;
    if (det > bound) return 1;
    if (det < -bound) return -1;
    if (perm == 0.0) return 0;
    return exact_sign(m, n);
}

}  // namespace csmle::pred
