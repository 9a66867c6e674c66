#include <doctest.h>

#include <cstdio>
#include <random>
#include <string>
#include <vector>

#include "csmle/cli.hpp"
#include "csmle/mle.hpp"

using namespace csmle;

namespace {

int run(std::vector<std::string> args) {
    args.insert(args.begin(), "csmle");
    std::vector<char*> argv;
    for (auto& a : args) argv.push_back(a.data());
    return cli_main(static_cast<int>(argv.size()), argv.data());
}

std::string tmp(const std::string& name) { return "/tmp/csmle_test_" + name; }

}  // namespace

TEST_CASE("csv parsing") {
    const auto a = parse_csv("# comment\nx,y\n1,2\n\n 3.5 , -4e-3\n");
    CHECK(a.had_header);
    CHECK(a.header == std::vector<std::string>{"x", "y"});
    REQUIRE(a.points.size() == 2);
    CHECK(a.points[1][0] == 3.5);
    CHECK(a.points[1][1] == -4e-3);
    const auto b = parse_csv("1\n2\n");
    CHECK_FALSE(b.had_header);
    CHECK(b.points.d == 1);
    try {
        parse_csv("1,2\n# c\n1,abc\n");
        FAIL("no error");
    } catch (const CsvError& e) {
        CHECK(std::string(e.what()).find("line 3") != std::string::npos);
    }
    CHECK_THROWS_AS(parse_csv("1,2\n3\n"), CsvError);
    CHECK_THROWS_AS(parse_csv("# only comments\n"), CsvError);
}

TEST_CASE("csv round trip is bit exact") {
    std::mt19937_64 rng(7);
    std::normal_distribution<double> N(0.0, 1e3);
    PointSet P(3);
    for (int i = 0; i < 500; ++i) {
        const double x[3] = {N(rng), N(rng) * 1e-300, N(rng) * 1e200};
        P.push(x);
    }
    const auto back = parse_csv(format_csv(P, {"a", "b", "c"}));
    CHECK(back.points.x == P.x);
}

TEST_CASE("fit and density through the command line") {
    write_file(tmp("sample.csv"), "x\n-1.5\n-0.2\n0.3\n0.9\n2.0\n");
    CHECK(run({"fit", "--input", tmp("sample.csv"), "--output", tmp("fit.json")}) == 0);
    const auto j = nlohmann::json::parse(read_file(tmp("fit.json")));
    CHECK(j.contains("manifest"));
    CHECK(j["manifest"]["inputs"][0]["fnv1a64"].get<std::string>().size() == 16);
    const auto r = fit_result_from_json(j);
    CHECK(run({"density", "--fit", tmp("fit.json"), "--query", tmp("sample.csv"), "--output", tmp("q.tsv")}) == 0);
    const auto rows = parse_csv([&] {
        std::string s = read_file(tmp("q.tsv"));
        for (auto& c : s)
            if (c == '\t') c = ',';
        return s;
    }());
    const double xs[] = {-1.5, -0.2, 0.3, 0.9, 2.0};
    REQUIRE(rows.points.size() == 5);
    for (int i = 0; i < 5; ++i) CHECK(rows.points[i][1] == doctest::Approx(r.density(&xs[i])).epsilon(1e-12));
    write_file(tmp("outside.csv"), "-3\n5\n");
    CHECK(run({"density", "--fit", tmp("fit.json"), "--query", tmp("outside.csv"), "--output", tmp("o.tsv")}) == 0);
    CHECK(read_file(tmp("o.tsv")) == "x1\tdensity\n-3\t0\n5\t0\n");
    CHECK(run({"density", "--fit", tmp("fit.json"), "--grid", "7", "--output", tmp("g.tsv")}) == 0);
    const auto g = read_file(tmp("g.tsv"));
    CHECK(std::count(g.begin(), g.end(), '\n') == 8);
}

TEST_CASE("experiment outputs are reproducible") {
    const std::vector<std::string> base{"experiment", "--kind", "consistency", "--d", "1", "--sizes", "20,40",
                                        "--reps", "2", "--hellinger-budget", "20000", "--seed", "5"};
    auto a = base, b = base;
    a.insert(a.end(), {"--output-prefix", tmp("ca"), "--threads", "1"});
    b.insert(b.end(), {"--output-prefix", tmp("cb"), "--threads", "2"});
    CHECK(run(a) == 0);
    CHECK(run(b) == 0);
    auto ja = nlohmann::json::parse(read_file(tmp("ca.json")));
    auto jb = nlohmann::json::parse(read_file(tmp("cb.json")));
    ja.erase("manifest");
    jb.erase("manifest");
    CHECK(ja == jb);
    CHECK(read_file(tmp("ca.tsv")) == read_file(tmp("cb.tsv")));
    CHECK(read_file(tmp("ca.tsv")).rfind("n\tmedian_H\tq25\tq75\n", 0) == 0);
}

TEST_CASE("usage errors exit with 1") {
    CHECK(run({"experiment", "--kind", "nope"}) == 1);
    CHECK(run({"fit"}) == 1);
    CHECK(run({"density", "--fit", "/nonexistent.json", "--grid", "3", "--output", tmp("x.tsv")}) == 1);
}
