#include "csmle/evalsim.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <limits>
#include <memory>
#include <sstream>
#include <thread>

#include <Eigen/Dense>

#include "csmle/convexgeom.hpp"

namespace csmle {

namespace {
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// Uniform point in the simplex with the given vertices.
void simplex_point(Rng& rng, const PointSet& P, const int* v, int d, double* x) {
    std::exponential_distribution<double> E(1.0);
    double w[4], tot = 0.0;
    for (int k = 0; k <= d; ++k) tot += (w[k] = E(rng));
    for (int c = 0; c < d; ++c) {
        x[c] = 0.0;
        for (int k = 0; k <= d; ++k) x[c] += w[k] / tot * P[v[k]][c];
    }
}

DensityHandle fitted_decreasing(const FitResult& r) {
    auto fr = std::make_shared<const FitResult>(r);
    DensityHandle h;
    h.kind = "fitted";
    h.descriptor = {{"transform", to_json(r.transform)}, {"function_kind", "polyhedral"}};
    h.d = r.poly.d;
    h.density = [fr](const double* x) { return fr->density(x); };
    std::vector<double> vols;
    for (const auto& S : r.poly.simplices) vols.push_back(S.volume);
    if (vols.empty()) return h;
    const double pmax = eval(r.transform, r.poly.min_height());
    auto pick = std::make_shared<std::discrete_distribution<std::size_t>>(vols.begin(), vols.end());
    h.sampler = [fr, pick, pmax](Rng& rng, double* x) {
        std::uniform_real_distribution<double> U(0.0, 1.0);
        const auto& f = fr->poly;
        for (;;) {
            const auto& S = f.simplices[(*pick)(rng)];
            simplex_point(rng, f.points, S.v.data(), f.d, x);
            if (U(rng) * pmax <= fr->density(x)) return;
        }
    };
    return h;
}

// Mixture of the single-piece densities h(b_k + a_k.x) on the orthant.
struct PieceMixture {
    Transformation t;
    MaxAffineFn f;
    std::vector<double> weights;

    PieceMixture(const Transformation& tt, const MaxAffineFn& ff) : t(tt), f(ff) {
        const int d = f.d;
        std::vector<double> lJ;
        double lmax = -std::numeric_limits<double>::infinity();
        for (const auto& p : f.pieces) {
            double l = -std::numeric_limits<double>::infinity();
            if (t.kind == Kind::LogConvex || p.b > 0.0) {
                l = t.kind == Kind::LogConvex ? p.b : std::log(antideriv_k(t, d, p.b));
                for (int c = 0; c < d; ++c) l -= std::log(-p.a[c]);
            }
            lJ.push_back(l);
            lmax = std::max(lmax, l);
        }
        for (double l : lJ) weights.push_back(std::exp(l - lmax));
    }

    void draw_piece(Rng& rng, std::size_t k, double* x) const {
        const auto& p = f.pieces[k];
        const int d = f.d;
        std::exponential_distribution<double> E(1.0);
        if (t.kind == Kind::LogConvex) {
            for (int c = 0; c < d; ++c) x[c] = E(rng) / -p.a[c];
        } else {
            std::gamma_distribution<double> G(t.s + 1.0, 1.0);
            double tot = G(rng);
            for (int c = 0; c < d; ++c) tot += (x[c] = E(rng));
            for (int c = 0; c < d; ++c) x[c] *= p.b / tot / -p.a[c];
        }
    }

    // h(g(x)) / sum_k h(piece_k(x)), in (0, 1].
    double accept_ratio(const double* x) const {
        const double g = f.eval(x);
        double s = 0.0;
        for (const auto& q : f.pieces) {
            double v = q.b;
            for (int c = 0; c < f.d; ++c) v += q.a[c] * x[c];
            if (t.kind == Kind::LogConvex)
                s += std::exp(v - g);
            else if (v > 0.0)
                s += std::pow(v / g, t.s);
        }
        return 1.0 / s;
    }
};

DensityHandle fitted_increasing(const FitResult& r) {
    auto fr = std::make_shared<const FitResult>(r);
    DensityHandle h;
    h.kind = "fitted";
    h.descriptor = {{"transform", to_json(r.transform)}, {"function_kind", "max_affine"}};
    h.d = r.max_affine.d;
    h.density = [fr](const double* x) { return fr->density(x); };
    auto mix = std::make_shared<const PieceMixture>(r.transform, r.max_affine);
    auto pick = std::make_shared<std::discrete_distribution<std::size_t>>(mix->weights.begin(), mix->weights.end());
    h.sampler = [mix, pick](Rng& rng, double* x) {
        std::uniform_real_distribution<double> U(0.0, 1.0);
        for (;;) {
            mix->draw_piece(rng, (*pick)(rng), x);
            if (U(rng) <= mix->accept_ratio(x)) return;
        }
    };
    return h;
}

int dim_from(const nlohmann::json& p, std::initializer_list<const char*> keys) {
    for (const char* k : keys)
        if (p.contains(k)) return static_cast<int>(p.at(k).size());
    return p.value("d", 1);
}

// Mean and Cholesky factor for normal and Student t families.
struct Location {
    Eigen::VectorXd mu;
    Eigen::MatrixXd L;
    double log_det = 0.0;  // log |Sigma|
};

Location location_from(const nlohmann::json& p, int d) {
    Location loc;
    loc.mu = Eigen::VectorXd::Zero(d);
    if (p.contains("mean")) {
        const auto m = p.at("mean").get<std::vector<double>>();
        if (static_cast<int>(m.size()) != d) throw ParameterError("reference: mean has the wrong length");
        for (int c = 0; c < d; ++c) loc.mu[c] = m[c];
    }
    Eigen::MatrixXd S = Eigen::MatrixXd::Identity(d, d);
    if (p.contains("cov")) {
        const auto rows = p.at("cov").get<std::vector<std::vector<double>>>();
        if (static_cast<int>(rows.size()) != d) throw ParameterError("reference: cov has the wrong shape");
        for (int i = 0; i < d; ++i) {
            if (static_cast<int>(rows[i].size()) != d) throw ParameterError("reference: cov has the wrong shape");
            for (int j = 0; j < d; ++j) S(i, j) = rows[i][j];
        }
    }
    Eigen::LLT<Eigen::MatrixXd> llt(S);
    if (llt.info() != Eigen::Success || !S.isApprox(S.transpose()))
        throw ParameterError("reference: cov must be symmetric positive definite");
    loc.L = llt.matrixL();
    for (int c = 0; c < d; ++c) loc.log_det += 2.0 * std::log(loc.L(c, c));
    return loc;
}

double mahalanobis2(const Location& loc, const double* x) {
    const int d = static_cast<int>(loc.mu.size());
    Eigen::VectorXd z(d);
    for (int c = 0; c < d; ++c) z[c] = x[c] - loc.mu[c];
    return loc.L.triangularView<Eigen::Lower>().solve(z).squaredNorm();
}

void positive(double v, const char* what) {
    if (!(v > 0.0) || !std::isfinite(v)) throw ParameterError(std::string("reference: ") + what + " must be positive");
}
}  // namespace

DensityHandle fitted_handle(const FitResult& r) {
    return r.is_polyhedral ? fitted_decreasing(r) : fitted_increasing(r);
}

DensityHandle reference_handle(const std::string& name, const nlohmann::json& params) {
    DensityHandle h;
    h.kind = "reference";
    h.descriptor = {{"name", name}, {"params", params}};
    const auto& p = params;
    if (name == "normal" || name == "student_t") {
        const int d = dim_from(p, {"mean", "cov"});
        if (d < 1) throw ParameterError("reference: dimension must be positive");
        auto loc = std::make_shared<const Location>(location_from(p, d));
        h.d = d;
        if (name == "normal") {
            const double lc = -0.5 * d * std::log(2.0 * M_PI) - 0.5 * loc->log_det;
            h.density = [loc, lc](const double* x) { return std::exp(lc - 0.5 * mahalanobis2(*loc, x)); };
            h.sampler = [loc, d](Rng& rng, double* x) {
                std::normal_distribution<double> N(0.0, 1.0);
                Eigen::VectorXd z(d);
                for (int c = 0; c < d; ++c) z[c] = N(rng);
                const Eigen::VectorXd v = loc->mu + loc->L * z;
                for (int c = 0; c < d; ++c) x[c] = v[c];
            };
        } else {
            const double nu = p.value("dof", 0.0);
            positive(nu, "dof");
            const double lc = std::lgamma(0.5 * (nu + d)) - std::lgamma(0.5 * nu) - 0.5 * d * std::log(nu * M_PI) -
                              0.5 * loc->log_det;
            h.density = [loc, lc, nu, d](const double* x) {
                return std::exp(lc - 0.5 * (nu + d) * std::log1p(mahalanobis2(*loc, x) / nu));
            };
            h.sampler = [loc, nu, d](Rng& rng, double* x) {
                std::normal_distribution<double> N(0.0, 1.0);
                std::chi_squared_distribution<double> C(nu);
                Eigen::VectorXd z(d);
                for (int c = 0; c < d; ++c) z[c] = N(rng);
                const double s = std::sqrt(nu / C(rng));
                const Eigen::VectorXd v = loc->mu + s * (loc->L * z);
                for (int c = 0; c < d; ++c) x[c] = v[c];
            };
        }
    } else if (name == "gamma") {
        const double r = p.value("shape", 0.0), lam = p.value("rate", 1.0);
        const int d = p.value("d", 1);
        if (!(r > 1.0)) throw ParameterError("reference: gamma shape must exceed 1 (log-concave range)");
        positive(lam, "rate");
        if (d < 1) throw ParameterError("reference: dimension must be positive");
        h.d = d;
        const double lc = r * std::log(lam) - std::lgamma(r);
        h.density = [=](const double* x) {
            double l = 0.0;
            for (int c = 0; c < d; ++c) {
                if (!(x[c] > 0.0)) return 0.0;
                l += lc + (r - 1.0) * std::log(x[c]) - lam * x[c];
            }
            return std::exp(l);
        };
        h.sampler = [=](Rng& rng, double* x) {
            std::gamma_distribution<double> G(r, 1.0 / lam);
            for (int c = 0; c < d; ++c) x[c] = G(rng);
        };
    } else if (name == "beta") {
        const double a = p.value("alpha", 0.0), b = p.value("beta", 0.0);
        const int d = p.value("d", 1);
        if (!(a > 1.0) || !(b > 1.0)) throw ParameterError("reference: beta parameters must exceed 1");
        if (d < 1) throw ParameterError("reference: dimension must be positive");
        h.d = d;
        const double lc = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b);
        h.density = [=](const double* x) {
            double l = 0.0;
            for (int c = 0; c < d; ++c) {
                if (!(x[c] > 0.0 && x[c] < 1.0)) return 0.0;
                l += lc + (a - 1.0) * std::log(x[c]) + (b - 1.0) * std::log1p(-x[c]);
            }
            return std::exp(l);
        };
        h.sampler = [=](Rng& rng, double* x) {
            std::gamma_distribution<double> Ga(a, 1.0), Gb(b, 1.0);
            for (int c = 0; c < d; ++c) {
                const double u = Ga(rng);
                x[c] = u / (u + Gb(rng));
            }
        };
    } else if (name == "uniform_polytope") {
        const auto rows = p.at("vertices").get<std::vector<std::vector<double>>>();
        if (rows.empty()) throw ParameterError("reference: uniform_polytope needs vertices");
        const int d = static_cast<int>(rows[0].size());
        auto P = make_points(d, rows);
        auto f = std::make_shared<const PolyhedralFn>(lower_convex_hull(P, std::vector<double>(P.size(), 0.0)));
        const double V = f->total_volume();
        if (!(V > 0.0)) throw ParameterError("reference: uniform_polytope is not full-dimensional");
        h.d = d;
        h.density = [f, V](const double* x) { return std::isfinite(f->eval(x)) ? 1.0 / V : 0.0; };
        const auto box = f->bbox();
        h.sampler = [f, box, d](Rng& rng, double* x) {
            std::uniform_real_distribution<double> U(0.0, 1.0);
            for (;;) {
                for (int c = 0; c < d; ++c) x[c] = box.first[c] + U(rng) * (box.second[c] - box.first[c]);
                if (f->locate(x) >= 0) return;
            }
        };
    } else if (name == "pareto") {
        const auto theta = p.at("theta").get<std::vector<double>>();
        const double a = p.value("a", 0.0);
        positive(a, "a");
        const int d = static_cast<int>(theta.size());
        if (d < 1) throw ParameterError("reference: pareto theta must be nonempty");
        double lc = 0.0;
        for (int k = 0; k < d; ++k) lc += std::log(a + k);
        for (double t : theta) {
            positive(t, "theta");
            lc -= std::log(t);
        }
        h.d = d;
        h.density = [=](const double* x) {
            double s = 1.0;
            for (int c = 0; c < d; ++c) {
                if (!(x[c] >= 0.0)) return 0.0;
                s += x[c] / theta[c];
            }
            return std::exp(lc - (a + d) * std::log(s));
        };
        // x = theta * E / W with E ~ Exp(1) per axis and a shared W ~ Gamma(a)
        h.sampler = [=](Rng& rng, double* x) {
            std::exponential_distribution<double> E(1.0);
            std::gamma_distribution<double> G(a, 1.0);
            const double w = G(rng);
            for (int c = 0; c < d; ++c) x[c] = theta[c] * E(rng) / w;
        };
    } else if (name == "triangular") {
        const double L = p.value("L", 1.0);
        positive(L, "L");
        h.d = 1;
        h.density = [L](const double* x) { return x[0] >= 0.0 && x[0] <= L ? 2.0 * (L - x[0]) / (L * L) : 0.0; };
        h.sampler = [L](Rng& rng, double* x) {
            std::uniform_real_distribution<double> U(0.0, 1.0);
            x[0] = L * (1.0 - std::sqrt(1.0 - U(rng)));
        };
    } else {
        throw ParameterError("reference: unknown family '" + name + "'");
    }
    return h;
}

PointSet sample(const DensityHandle& p, std::size_t n, std::uint64_t seed) {
    if (!p.has_sampler()) throw SamplerUnavailable("sample: density has no sampler");
    Rng rng(seed);
    PointSet X(p.d, n);
    for (std::size_t i = 0; i < n; ++i) p.sampler(rng, X[i]);
    return X;
}

PointSet sample_reference(const std::string& name, const nlohmann::json& params, std::size_t n, std::uint64_t seed) {
    return sample(reference_handle(name, params), n, seed);
}

HellingerEstimate hellinger(const DensityHandle& p, const DensityHandle& q, long mc_budget, std::uint64_t seed) {
    if (p.d != q.d) throw ParameterError("hellinger: dimensions differ");
    if (mc_budget < 2) throw ParameterError("hellinger: mc_budget must be at least 2");
    if (!p.has_sampler() && !q.has_sampler()) throw SamplerUnavailable("hellinger: neither density has a sampler");
    Rng rng(seed);
    std::bernoulli_distribution coin(0.5);
    std::vector<double> x(p.d);
    double mean = 0.0, m2 = 0.0;
    for (long i = 0; i < mc_budget; ++i) {
        double w;
        if (p.has_sampler() && q.has_sampler()) {
            // balanced mixture (p + q)/2: the integrand sqrt(pq)/m lies in [0, 1]
            (coin(rng) ? p : q).sampler(rng, x.data());
            const double a = p.density(x.data()), b = q.density(x.data());
            w = a + b > 0.0 ? 2.0 * std::sqrt(a * b) / (a + b) : 0.0;
        } else {
            const DensityHandle& s = q.has_sampler() ? q : p;
            const DensityHandle& o = q.has_sampler() ? p : q;
            s.sampler(rng, x.data());
            const double a = o.density(x.data()), b = s.density(x.data());
            w = b > 0.0 ? std::sqrt(a / b) : 0.0;
        }
        const double dl = w - mean;
        mean += dl / static_cast<double>(i + 1);
        m2 += dl * (w - mean);
    }
    const double se_bc = std::sqrt(m2 / (mc_budget - 1) / mc_budget);
    double h2 = 1.0 - mean;
    HellingerEstimate r;
    if (h2 < 0.0 || h2 > 1.0) {
        r.clamped = true;
        h2 = std::clamp(h2, 0.0, 1.0);
    }
    r.estimate = std::sqrt(h2);
    r.std_error = r.estimate > 0.0 ? se_bc / (2.0 * r.estimate) : std::sqrt(se_bc);
    return r;
}

double sup_norm_distance(const DensityHandle& p, const DensityHandle& q, const std::vector<double>& lo,
                         const std::vector<double>& hi, int grid_per_dim) {
    const int d = p.d;
    if (q.d != d || static_cast<int>(lo.size()) != d || static_cast<int>(hi.size()) != d)
        throw ParameterError("sup_norm_distance: dimensions differ");
    if (grid_per_dim < 1) throw ParameterError("sup_norm_distance: grid_per_dim must be positive");
    std::vector<int> idx(d, 0);
    std::vector<double> x(d);
    double best = 0.0;
    for (;;) {
        for (int c = 0; c < d; ++c)
            x[c] = grid_per_dim == 1 ? 0.5 * (lo[c] + hi[c]) : lo[c] + (hi[c] - lo[c]) * idx[c] / (grid_per_dim - 1);
        best = std::max(best, std::fabs(p.density(x.data()) - q.density(x.data())));
        int c = 0;
        while (c < d && ++idx[c] == grid_per_dim) idx[c++] = 0;
        if (c == d) break;
    }
    return best;
}

double quantile(std::vector<double> v, double p) {
    v.erase(std::remove_if(v.begin(), v.end(), [](double a) { return !std::isfinite(a); }), v.end());
    if (v.empty()) return kNaN;
    std::sort(v.begin(), v.end());
    const double pos = p * (v.size() - 1);
    const std::size_t k = static_cast<std::size_t>(pos);
    if (k + 1 >= v.size()) return v.back();
    return v[k] + (pos - k) * (v[k + 1] - v[k]);
}

std::pair<std::vector<double>, std::vector<double>> central_box(const DensityHandle& p, double mass,
                                                                std::uint64_t seed) {
    const auto X = sample(p, 20000, seed);
    const double m = std::pow(mass, 1.0 / p.d);
    std::vector<double> lo(p.d), hi(p.d), col(X.size());
    for (int c = 0; c < p.d; ++c) {
        for (std::size_t i = 0; i < X.size(); ++i) col[i] = X[i][c];
        lo[c] = quantile(col, 0.5 * (1.0 - m));
        hi[c] = quantile(col, 0.5 * (1.0 + m));
    }
    return {lo, hi};
}

int default_threads() {
    if (const char* s = std::getenv("CSMLE_THREADS")) {
        const int v = std::atoi(s);
        if (v > 0) return v;
    }
    return 1;
}

std::vector<ExperimentSummary> ExperimentReport::summary() const {
    std::vector<ExperimentSummary> out;
    for (int n : sample_sizes) {
        ExperimentSummary s;
        s.n = n;
        std::vector<double> hs, sups;
        for (const auto& c : cells) {
            if (c.n != n) continue;
            if (c.flagged) {
                ++s.flagged;
                continue;
            }
            hs.push_back(c.hellinger);
            sups.push_back(c.sup_norm);
        }
        s.median_h = quantile(hs, 0.5);
        s.q25_h = quantile(hs, 0.25);
        s.q75_h = quantile(hs, 0.75);
        s.median_sup = quantile(sups, 0.5);
        out.push_back(s);
    }
    return out;
}

ExperimentReport consistency_experiment(const Transformation& model, const DensityHandle& truth,
                                        const std::vector<int>& sample_sizes, int replications, std::uint64_t seed,
                                        const ExperimentOptions& opt) {
    if (!truth.has_sampler()) throw SamplerUnavailable("consistency_experiment: truth has no sampler");
    if (replications < 1) throw ParameterError("consistency_experiment: replications must be positive");
    ExperimentReport rep;
    rep.model = to_json(model);
    rep.truth = truth.descriptor;
    rep.sample_sizes = sample_sizes;
    rep.replications = replications;
    rep.seed = seed;
    std::tie(rep.box_lo, rep.box_hi) = central_box(truth, 0.9, stream_seed(seed, "box"));
    const int d = truth.d;
    const int grid = opt.grid_per_dim > 0 ? opt.grid_per_dim : (d == 1 ? 401 : d == 2 ? 61 : 21);
    for (int n : sample_sizes)
        for (int r = 0; r < replications; ++r) {
            ExperimentCell c;
            c.n = n;
            c.rep = r;
            c.seed = stream_seed(stream_seed(seed, "size", static_cast<std::uint64_t>(n)), "rep", r);
            rep.cells.push_back(c);
        }
    auto run_cell = [&](ExperimentCell& c) {
        const auto t0 = std::chrono::steady_clock::now();
        try {
            const auto X = sample(truth, static_cast<std::size_t>(c.n), stream_seed(c.seed, "sample"));
            FitConfig cfg = opt.fit;
            cfg.transform = model;
            cfg.seed = stream_seed(c.seed, "fit");
            const auto fitted = fitted_handle(fit(X, cfg));
            const auto H = hellinger(fitted, truth, opt.hellinger_budget, stream_seed(c.seed, "hellinger"));
            c.hellinger = H.estimate;
            c.hellinger_se = H.std_error;
            c.sup_norm = sup_norm_distance(fitted, truth, rep.box_lo, rep.box_hi, grid);
        } catch (const std::exception& e) {
            c.flagged = true;
            c.flag = e.what();
            c.hellinger = c.hellinger_se = c.sup_norm = kNaN;
        }
        c.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    };
    const int nthreads = std::max(1, std::min<int>(opt.threads > 0 ? opt.threads : default_threads(),
                                                   static_cast<int>(rep.cells.size())));
    if (nthreads == 1) {
        for (auto& c : rep.cells) run_cell(c);
    } else {
        std::atomic<std::size_t> next{0};
        std::vector<std::thread> pool;
        for (int w = 0; w < nthreads; ++w)
            pool.emplace_back([&] {
                for (std::size_t k; (k = next++) < rep.cells.size();) run_cell(rep.cells[k]);
            });
        for (auto& th : pool) th.join();
    }
    return rep;
}

nlohmann::json to_json(const ExperimentReport& r, bool include_timing) {
    auto num = [](double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); };
    nlohmann::json j;
    j["model"] = r.model;
    j["truth"] = r.truth;
    j["sample_sizes"] = r.sample_sizes;
    j["replications"] = r.replications;
    j["seed"] = r.seed;
    j["box"] = {{"lo", r.box_lo}, {"hi", r.box_hi}};
    j["cells"] = nlohmann::json::array();
    for (const auto& c : r.cells) {
        nlohmann::json e = {{"n", c.n},
                            {"rep", c.rep},
                            {"seed", c.seed},
                            {"hellinger", num(c.hellinger)},
                            {"hellinger_se", num(c.hellinger_se)},
                            {"sup_norm", num(c.sup_norm)},
                            {"flagged", c.flagged}};
        if (c.flagged) e["flag"] = c.flag;
        if (include_timing) e["wall_seconds"] = c.wall_seconds;
        j["cells"].push_back(e);
    }
    j["summary"] = nlohmann::json::array();
    for (const auto& s : r.summary())
        j["summary"].push_back({{"n", s.n},
                                {"median_hellinger", num(s.median_h)},
                                {"q25_hellinger", num(s.q25_h)},
                                {"q75_hellinger", num(s.q75_h)},
                                {"median_sup_norm", num(s.median_sup)},
                                {"flagged", s.flagged}});
    return j;
}

std::string to_tsv(const ExperimentReport& r) {
    std::ostringstream os;
    os.precision(10);
    os << "n\tmedian_H\tq25\tq75\n";
    for (const auto& s : r.summary()) os << s.n << '\t' << s.median_h << '\t' << s.q25_h << '\t' << s.q75_h << '\n';
    return os.str();
}

}  // namespace csmle
