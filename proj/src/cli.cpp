#include "csmle/cli.hpp"

#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include <CLI11.hpp>

#include "csmle/evalsim.hpp"
#include "csmle/lowerbound.hpp"
#include "csmle/mle.hpp"

namespace csmle {

namespace {

std::string trim(std::string_view s) {
    std::size_t a = 0, b = s.size();
    while (a < b && (s[a] == ' ' || s[a] == '\t' || s[a] == '\r')) ++a;
    while (b > a && (s[b - 1] == ' ' || s[b - 1] == '\t' || s[b - 1] == '\r')) --b;
    return std::string(s.substr(a, b - a));
}

std::vector<std::string> split(const std::string& line, char sep) {
    std::vector<std::string> out;
    std::size_t start = 0;
    for (;;) {
        const std::size_t k = line.find(sep, start);
        out.push_back(trim(std::string_view(line).substr(start, k == std::string::npos ? std::string::npos : k - start)));
        if (k == std::string::npos) break;
        start = k + 1;
    }
    return out;
}

bool parse_double(const std::string& s, double& v) {
    if (s.empty()) return false;
    const char* b = s.data();
    if (*b == '+') ++b;
    const auto [p, ec] = std::from_chars(b, s.data() + s.size(), v);
    return ec == std::errc() && p == s.data() + s.size();
}

std::string fmt(double v) {
    char buf[64];
    const auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, p);
}

std::string hex64(std::uint64_t v) {
    std::ostringstream os;
    os << std::hex;
    os.width(16);
    os.fill('0');
    os << v;
    return os.str();
}

std::string utc_now() {
    const std::time_t t = std::time(nullptr);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

int resolve_threads(int flag) {
    if (flag > 0) return flag;
    if (const char* s = std::getenv("CSMLE_THREADS")) {
        const int v = std::atoi(s);
        if (v > 0) return v;
    }
    return std::max(1u, std::thread::hardware_concurrency());
}

std::vector<double> parse_list(const std::string& s, const char* what) {
    std::vector<double> out;
    if (trim(s).empty()) return out;
    for (const auto& f : split(s, ',')) {
        double v;
        if (!parse_double(f, v)) throw ParameterError(std::string("cannot parse ") + what + " entry '" + f + "'");
        out.push_back(v);
    }
    return out;
}

struct Common {
    std::uint64_t seed = 1;
    int threads = 0;
    bool timing = false;
};

RunManifest manifest(const std::string& cmd, const nlohmann::json& flags, const std::vector<std::string>& inputs,
                     std::uint64_t seed) {
    RunManifest m;
    m.command = cmd;
    m.flags = flags;
    for (const auto& p : inputs) m.inputs.emplace_back(p, fnv1a64(read_file(p)));
    m.seed = seed;
    m.version = tool_version();
    m.timestamp = utc_now();
    return m;
}

// ---- fit ----

struct FitFlags {
    std::string model = "log-concave";
    double s = std::nan("");
    std::string input, output;
    int max_iters = 0;
    double tol = 1e-9;
};

int cmd_fit(const FitFlags& f, const Common& c) {
    const auto data = read_csv(f.input);
    const Transformation t = transformation_from_name(f.model, f.s);
    const auto ex = check_existence(t, data.points);
    if (!ex.ok) {
        std::cerr << "existence violation (" << ex.condition << "): " << ex.message << "\n";
        return 2;
    }
    FitConfig cfg;
    cfg.transform = t;
    cfg.max_iters = f.max_iters;
    cfg.grad_tol = f.tol;
    cfg.seed = stream_seed(c.seed, "fit");
    FitResult r;
    try {
        r = fit(data.points, cfg);
    } catch (const InfeasibleError& e) {
        std::cerr << "existence violation: " << e.what() << "\n";
        return 2;
    }
    nlohmann::json flags{{"model", f.model}, {"input", f.input}, {"output", f.output},
                         {"max_iters", f.max_iters}, {"tol", f.tol}};
    if (t.is_power()) flags["s"] = f.s;
    auto j = to_json(r);
    j["manifest"] = to_json(manifest("fit", flags, {f.input}, c.seed));
    write_file(f.output, j.dump(2) + "\n");
    std::cout << "loglik " << fmt(r.loglik) << "  iterations " << r.iters << "  " << r.stop_reason << "\n";
    for (const auto& w : r.warnings) std::cerr << "warning: " << w << "\n";
    return r.converged ? 0 : 3;
}

// ---- density ----

struct DensityFlags {
    std::string fit, query, output;
    std::string grid, box;
};

int cmd_density(const DensityFlags& f) {
    const auto j = nlohmann::json::parse(read_file(f.fit));
    const FitResult r = fit_result_from_json(j);
    const int d = r.dim();
    PointSet Q(d);
    std::vector<std::string> inputs{f.fit};
    if (!f.query.empty()) {
        const auto data = read_csv(f.query);
        if (data.points.d != d)
            throw ParameterError("query has " + std::to_string(data.points.d) + " columns but the fit has dimension " +
                                 std::to_string(d));
        Q = data.points;
        inputs.push_back(f.query);
    } else {
        const auto counts = parse_list(f.grid, "--grid");
        if (static_cast<int>(counts.size()) != d)
            throw ParameterError("--grid needs one count per dimension (" + std::to_string(d) + ")");
        std::vector<double> lo(d), hi(d);
        if (!f.box.empty()) {
            const auto b = parse_list(f.box, "--box");
            if (static_cast<int>(b.size()) != 2 * d) throw ParameterError("--box needs lo,hi for each dimension");
            for (int c = 0; c < d; ++c) lo[c] = b[2 * c], hi[c] = b[2 * c + 1];
        } else if (r.is_polyhedral) {
            std::tie(lo, hi) = r.poly.bbox();
        } else {
            throw ParameterError("--box is required for increasing fits");
        }
        std::vector<int> n(d);
        for (int c = 0; c < d; ++c) {
            n[c] = static_cast<int>(counts[c]);
            if (n[c] < 1 || counts[c] != n[c]) throw ParameterError("--grid counts must be positive integers");
        }
        std::vector<int> idx(d, 0);
        std::vector<double> x(d);
        for (;;) {
            for (int c = 0; c < d; ++c) x[c] = n[c] == 1 ? lo[c] : lo[c] + (hi[c] - lo[c]) * idx[c] / (n[c] - 1);
            Q.push(x.data());
            int c = d - 1;
            while (c >= 0 && ++idx[c] == n[c]) idx[c--] = 0;
            if (c < 0) break;
        }
    }
    std::ostringstream os;
    for (int c = 0; c < d; ++c) os << "x" << (c + 1) << '\t';
    os << "density\n";
    for (std::size_t i = 0; i < Q.size(); ++i) {
        for (int c = 0; c < d; ++c) os << fmt(Q[i][c]) << '\t';
        os << fmt(r.density(Q[i])) << '\n';
    }
    write_file(f.output, os.str());
    std::cout << Q.size() << " rows written\n";
    return 0;
}

// ---- experiment ----

struct ExperimentFlags {
    std::string kind;
    std::string truth = "normal";
    std::string truth_params;
    std::string model = "log-concave";
    double s = std::nan("");
    int d = 1;
    std::string sizes = "50,100,200,400";
    int reps = 20;
    std::string eps_grid;
    std::string prefix = "experiment";
    long hellinger_budget = 50000;
    int max_iters = 0;
    long nodes = 0;
};

int cmd_consistency(const ExperimentFlags& f, const Common& c, const nlohmann::json& flags) {
    nlohmann::json params = f.truth_params.empty() ? nlohmann::json::object() : nlohmann::json::parse(f.truth_params);
    if (!params.contains("d") && !params.contains("mean") && !params.contains("vertices")) params["d"] = f.d;
    const auto truth = reference_handle(f.truth, params);
    std::vector<int> sizes;
    for (double v : parse_list(f.sizes, "--sizes")) {
        if (!(v >= 1.0) || v != std::floor(v)) throw ParameterError("--sizes entries must be positive integers");
        sizes.push_back(static_cast<int>(v));
    }
    if (sizes.empty()) throw ParameterError("--sizes is empty");
    ExperimentOptions opt;
    opt.threads = resolve_threads(c.threads);
    opt.hellinger_budget = f.hellinger_budget;
    opt.fit.max_iters = f.max_iters;
    const auto model = transformation_from_name(f.model, f.s);
    const auto rep = consistency_experiment(model, truth, sizes, f.reps, c.seed, opt);
    auto j = to_json(rep, c.timing);
    j["manifest"] = to_json(manifest("experiment", flags, {}, c.seed));
    write_file(f.prefix + ".json", j.dump(2) + "\n");
    write_file(f.prefix + ".tsv", to_tsv(rep));
    const auto summ = rep.summary();
    bool decreasing = true;
    int failed = 0;
    for (std::size_t k = 0; k < summ.size(); ++k) {
        std::cout << "n=" << summ[k].n << "  median H " << fmt(summ[k].median_h) << "  IQR [" << fmt(summ[k].q25_h)
                  << ", " << fmt(summ[k].q75_h) << "]  flagged " << summ[k].flagged << "\n";
        if (k > 0 && !(summ[k].median_h < summ[k - 1].median_h)) decreasing = false;
    }
    for (const auto& cell : rep.cells) failed += cell.flagged;
    std::cout << "trend: " << (decreasing ? "median Hellinger decreasing in n" : "median Hellinger not monotone")
              << "\n";
    return failed == static_cast<int>(rep.cells.size()) ? 4 : 0;
}

int cmd_lower_bound(const ExperimentFlags& f, const Common& c, const nlohmann::json& flags, bool mode) {
    if (f.d < 1 || f.d > 2) throw ParameterError("--d must be 1 or 2 for lower-bound experiments");
    const auto t = transformation_from_name(f.model, f.s);
    BowlSpec b;
    b.curvature.assign(f.d, 1.0);
    std::vector<double> x0(f.d, 0.0), x1(f.d, 0.0);
    DeformationFamily fam;
    if (mode) {
        x1[0] = -1.5;
        fam = bowl_family(t, b, x0, x1, DeformDirection::Down, 1.0);
        set_mode(fam, std::vector<double>(f.d, 1.0), 2.0);
    } else {
        x0[0] = 1.5;
        x1[0] = -0.5;
        fam = bowl_family(t, b, x0, x1, DeformDirection::Up, 1.0);
    }
    auto grid = parse_list(f.eps_grid, "--eps-grid");
    if (grid.empty()) grid = dyadic_grid(fam.eps_max, 6);
    const auto rep = rate_experiment(fam, grid, f.nodes, c.seed, resolve_threads(c.threads));
    auto j = to_json(rep);
    j["eps_max"] = fam.eps_max;
    j["manifest"] = to_json(manifest("experiment", flags, {}, c.seed));
    write_file(f.prefix + ".json", j.dump(2) + "\n");
    write_file(f.prefix + ".tsv", to_tsv(rep));
    const auto& r = rep.h_vs_eps;
    std::cout << "slope " << fmt(r.slope) << "  95% CI [" << fmt(r.slope - 1.96 * r.slope_se) << ", "
              << fmt(r.slope + 1.96 * r.slope_se) << "]  expected " << fmt(rep.expected_slope) << "\n";
    if (mode) std::cout << "slope against xi " << fmt(rep.h_vs_xi.slope) << "  expected " << fmt((f.d + 4) / 4.0) << "\n";
    std::cout << "theta slope " << fmt(rep.theta_vs_eps.slope) << "\n";
    int failed = 0;
    for (const auto& cell : rep.cells) failed += cell.flagged;
    return failed == static_cast<int>(rep.cells.size()) ? 4 : 0;
}

}  // namespace

CsvData parse_csv(const std::string& text) {
    CsvData out;
    std::istringstream is(text);
    std::string line;
    int lineno = 0, d = -1;
    bool first = true;
    while (std::getline(is, line)) {
        ++lineno;
        const std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        const auto fields = split(t, ',');
        std::vector<double> row(fields.size());
        bool numeric = true;
        std::size_t bad = 0;
        for (std::size_t k = 0; k < fields.size() && numeric; ++k)
            if (!parse_double(fields[k], row[k])) numeric = false, bad = k;
        if (!numeric && first) {
            out.had_header = true;
            out.header = fields;
            d = static_cast<int>(fields.size());
            first = false;
            continue;
        }
        if (!numeric)
            throw CsvError("line " + std::to_string(lineno) + ": cannot parse field " + std::to_string(bad + 1) +
                           " '" + fields[bad] + "' as a number");
        if (d < 0) d = static_cast<int>(row.size());
        if (static_cast<int>(row.size()) != d)
            throw CsvError("line " + std::to_string(lineno) + ": expected " + std::to_string(d) + " fields, found " +
                           std::to_string(row.size()));
        for (double v : row)
            if (!std::isfinite(v)) throw CsvError("line " + std::to_string(lineno) + ": non-finite value");
        if (out.points.d == 0) out.points = PointSet(d);
        out.points.push(row.data());
        first = false;
    }
    if (out.points.size() == 0) throw CsvError("no data rows");
    return out;
}

CsvData read_csv(const std::string& path) {
    try {
        return parse_csv(read_file(path));
    } catch (const CsvError& e) {
        throw CsvError(path + ": " + e.what());
    }
}

std::string format_csv(const PointSet& points, const std::vector<std::string>& header) {
    std::string s;
    for (std::size_t k = 0; k < header.size(); ++k) s += (k ? "," : "") + header[k];
    if (!header.empty()) s += "\n";
    for (std::size_t i = 0; i < points.size(); ++i) {
        for (int c = 0; c < points.d; ++c) s += (c ? "," : "") + fmt(points[i][c]);
        s += "\n";
    }
    return s;
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CsvError("cannot open " + path);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

void write_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw CsvError("cannot write " + path);
    out << text;
    if (!out) throw CsvError("write failed: " + path);
}

nlohmann::json to_json(const RunManifest& m) {
    nlohmann::json inputs = nlohmann::json::array();
    for (const auto& [p, h] : m.inputs) inputs.push_back({{"path", p}, {"fnv1a64", hex64(h)}});
    return {{"command", m.command}, {"flags", m.flags},     {"inputs", inputs},
            {"seed", m.seed},       {"version", m.version}, {"timestamp", m.timestamp}};
}

std::string tool_version() { return "0.1.0"; }

int cli_main(int argc, char** argv) {
    CLI::App app{"Shape-constrained density estimation: fits, density queries and experiments"};
    app.require_subcommand(1);
    app.set_version_flag("--version", tool_version());
    Common common;
    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--seed", common.seed, "master seed");
        sub->add_option("--threads", common.threads, "worker threads (default: CSMLE_THREADS, then all cores)");
    };

    FitFlags ff;
    auto* fit_cmd = app.add_subcommand("fit", "fit a shape-constrained MLE to a CSV sample");
    fit_cmd->add_option("--model", ff.model, "model")
        ->check(CLI::IsMember({"log-concave", "power-concave", "log-convex", "power-convex"}));
    fit_cmd->add_option("--s", ff.s, "power parameter for the power models");
    fit_cmd->add_option("--input", ff.input, "CSV sample")->required();
    fit_cmd->add_option("--output", ff.output, "FitResult JSON")->required();
    fit_cmd->add_option("--max-iters", ff.max_iters, "iteration limit (0: automatic)");
    fit_cmd->add_option("--tol", ff.tol, "subgradient tolerance");
    add_common(fit_cmd);

    DensityFlags df;
    auto* den_cmd = app.add_subcommand("density", "evaluate a fitted density");
    den_cmd->add_option("--fit", df.fit, "FitResult JSON")->required();
    auto* q = den_cmd->add_option("--query", df.query, "CSV of query points");
    auto* g = den_cmd->add_option("--grid", df.grid, "grid counts per axis, e.g. 50,50");
    den_cmd->add_option("--box", df.box, "grid box lo1,hi1[,lo2,hi2...] (default: the fit domain)");
    den_cmd->add_option("--output", df.output, "TSV output")->required();
    q->excludes(g);
    add_common(den_cmd);

    ExperimentFlags ef;
    auto* exp_cmd = app.add_subcommand("experiment", "consistency and lower-bound experiments");
    exp_cmd->add_option("--kind", ef.kind, "experiment kind")
        ->required()
        ->check(CLI::IsMember({"consistency", "lb-point", "lb-mode"}));
    exp_cmd->add_option("--truth", ef.truth, "reference family for consistency runs");
    exp_cmd->add_option("--truth-params", ef.truth_params, "JSON parameters of the truth");
    exp_cmd->add_option("--model", ef.model, "fitted model")
        ->check(CLI::IsMember({"log-concave", "power-concave", "log-convex", "power-convex"}));
    exp_cmd->add_option("--s", ef.s, "power parameter");
    exp_cmd->add_option("--d", ef.d, "dimension");
    exp_cmd->add_option("--sizes", ef.sizes, "comma-separated sample sizes");
    exp_cmd->add_option("--reps", ef.reps, "replications per size");
    exp_cmd->add_option("--eps-grid", ef.eps_grid, "comma-separated eps values (default: 6 dyadic below eps_max)");
    exp_cmd->add_option("--output-prefix", ef.prefix, "writes PREFIX.json and PREFIX.tsv");
    exp_cmd->add_option("--hellinger-budget", ef.hellinger_budget, "Monte Carlo draws per Hellinger estimate");
    exp_cmd->add_option("--max-iters", ef.max_iters, "fit iteration limit (0: automatic)");
    exp_cmd->add_option("--nodes", ef.nodes, "quadrature nodes per change region (0: default)");
    exp_cmd->add_flag("--timing", common.timing, "include wall-clock times in the JSON");
    add_common(exp_cmd);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);
        std::cerr << "error: " << e.what() << "\n\n";
        CLI::App* sub = nullptr;
        for (auto* s : {fit_cmd, den_cmd, exp_cmd})
            if (s->parsed()) sub = s;
        std::cerr << (sub ? sub->help() : app.help());
        return 1;
    }
    try {
        if (fit_cmd->parsed()) return cmd_fit(ff, common);
        if (den_cmd->parsed()) {
            if (df.query.empty() == df.grid.empty()) throw ParameterError("give exactly one of --query and --grid");
            return cmd_density(df);
        }
        nlohmann::json flags{{"kind", ef.kind},   {"model", ef.model},   {"d", ef.d},
                             {"sizes", ef.sizes}, {"reps", ef.reps},     {"eps_grid", ef.eps_grid},
                             {"truth", ef.truth}, {"truth_params", ef.truth_params},
                             {"hellinger_budget", ef.hellinger_budget}, {"max_iters", ef.max_iters},
                             {"nodes", ef.nodes}};
        if (ef.kind == "consistency") return cmd_consistency(ef, common, flags);
        return cmd_lower_bound(ef, common, flags, ef.kind == "lb-mode");
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}

}  // namespace csmle
