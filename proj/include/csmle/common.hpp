#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace csmle {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct DomainError : Error { using Error::Error; };
struct ParameterError : Error { using Error::Error; };
struct DegenerateInput : Error { using Error::Error; };
struct NonfiniteError : Error { using Error::Error; };
struct InfeasibleError : Error { using Error::Error; };
struct UnboundedLevelSet : Error { using Error::Error; };
struct BracketFailure : Error { using Error::Error; };
struct AntiderivUnavailable : Error { using Error::Error; };
struct DivergenceError : Error { using Error::Error; };
struct SamplerUnavailable : Error { using Error::Error; };
struct SupportOverlap : Error { using Error::Error; };
struct IndefiniteFit : Error { using Error::Error; };

// Row-major n x d point array.
struct PointSet {
    int d = 0;
    std::vector<double> x;

    PointSet() = default;
    explicit PointSet(int dim) : d(dim) {}
    PointSet(int dim, std::size_t n) : d(dim), x(n * static_cast<std::size_t>(dim), 0.0) {}

    std::size_t size() const { return d == 0 ? 0 : x.size() / static_cast<std::size_t>(d); }
    const double* operator[](std::size_t i) const { return x.data() + i * d; }
    double* operator[](std::size_t i) { return x.data() + i * d; }
    void push(const double* p) { x.insert(x.end(), p, p + d); }
    void push(std::initializer_list<double> p) { x.insert(x.end(), p.begin(), p.end()); }
};

PointSet make_points(int d, const std::vector<std::vector<double>>& rows);

inline std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

std::uint64_t fnv1a64(std::string_view bytes);

// Named stream derived from a master seed.
std::uint64_t stream_seed(std::uint64_t seed, std::string_view name);
std::uint64_t stream_seed(std::uint64_t seed, std::string_view name, std::uint64_t index);

double factorial(int k);

}  // namespace csmle
