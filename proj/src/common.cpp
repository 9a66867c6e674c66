#include "csmle/common.hpp"

namespace csmle {

PointSet make_points(int d, const std::vector<std::vector<double>>& rows) {
    PointSet p(d);
    for (const auto& r : rows) {
        if (static_cast<int>(r.size()) != d) throw ParameterError("make_points: row has wrong dimension");
        p.push(r.data());
    }
    return p;
}

std::uint64_t fnv1a64(std::string_view bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::uint64_t stream_seed(std::uint64_t seed, std::string_view name) {
    std::uint64_t s = seed ^ fnv1a64(name);
    splitmix64(s);
    return splitmix64(s);
}

std::uint64_t stream_seed(std::uint64_t seed, std::string_view name, std::uint64_t index) {
    std::uint64_t s = stream_seed(seed, name) + 0x632be59bd9b4e019ULL * (index + 1);
    return splitmix64(s);
}

double factorial(int k) {
    double f = 1.0;
    for (int i = 2; i <= k; ++i) f *= i;
    return f;
}

}  // namespace csmle
