#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "csmle/common.hpp"

namespace csmle {

struct CsvError : Error {
    using Error::Error;
};

struct CsvData {
    PointSet points;
    bool had_header = false;
    std::vector<std::string> header;
};

// Comma separated, '.' decimal, '#' comment lines and blank lines skipped. A first row that
// does not parse as numbers is taken as a header. Errors name the 1-based line.
CsvData parse_csv(const std::string& text);
CsvData read_csv(const std::string& path);
// Shortest round-trip formatting, so parse_csv(format_csv(P)) reproduces P exactly.
std::string format_csv(const PointSet& points, const std::vector<std::string>& header = {});

std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& text);

struct RunManifest {
    std::string command;
    nlohmann::json flags;
    std::vector<std::pair<std::string, std::uint64_t>> inputs;  // path, FNV-1a digest
    std::uint64_t seed = 0;
    std::string version;
    std::string timestamp;  // UTC, ISO 8601
};

nlohmann::json to_json(const RunManifest& m);
std::string tool_version();

// Exit codes: 0 success, 1 usage/I-O/parse error, 2 existence violation,
// 3 fit did not converge (result still written), 4 every experiment cell failed.
int cli_main(int argc, char** argv);

}  // namespace csmle
