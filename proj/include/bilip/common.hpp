#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace bilip {

using Vec2 = Eigen::Vector2d;
using Mat2 = Eigen::Matrix2d;

// Tolerance for geometric predicates (point-in-triangle, segment intersection,
// lattice snapping of input coordinates).
inline constexpr double kGeomTol = 1e-9;

// Invalid or inconsistent input (bad mesh, precondition violation). CLI exit code 2.
struct input_error : std::runtime_error {
    explicit input_error(const std::string& what) : std::runtime_error(what) {}
};

// A numerical routine failed to certify or converge. CLI exit code 3.
struct numeric_error : std::runtime_error {
    explicit numeric_error(const std::string& what) : std::runtime_error(what) {}
};

// --- deterministic RNG -------------------------------------------------------
//
// mt19937_64 with hand-rolled conversions so that streams are identical across
// standard libraries (std::uniform_real_distribution is not pinned down).

class Rng {
  public:
    explicit Rng(std::uint64_t seed = 0) : state_(seed) {}

    std::uint64_t next_u64() { return state_(); }

    // uniform in [0,1)
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // uniform integer in [0, n)
    std::uint64_t below(std::uint64_t n) { return next_u64() % n; }

    // standard normal via Box-Muller (polar form avoided to keep the stream simple)
    double normal() {
        double u1 = uniform();
        double u2 = uniform();
        if (u1 <= 0) u1 = 0x1.0p-53;
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
    }

  private:
    std::mt19937_64 state_;
};

// --- parallelism --------------------------------------------------------------
//
// Results are written into per-index slots, so the outcome is independent of the
// number of workers; BILIP_JOBS / --jobs only affect wall time.

int default_jobs();

void parallel_for(std::size_t n, int jobs, const std::function<void(std::size_t)>& body);

// --- small utilities ----------------------------------------------------------

inline double sqr(double x) { return x * x; }

// FNV-1a, used for config provenance hashes in reports.
inline std::uint64_t fnv1a(const std::string& bytes) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

std::string hex64(std::uint64_t v);

}  // namespace bilip
