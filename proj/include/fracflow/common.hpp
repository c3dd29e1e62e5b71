#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace fracflow {

/// Nodal state vector; one value per grid node.
using NodalVector = std::vector<double>;

/// Configuration rejected before any numerics ran (unknown key, bad value).
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Input outside an operation's mathematical domain (t outside [0,T], s outside (0,1), ...).
struct DomainError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// A guarded floating-point evaluation would have left the finite range.
struct OverflowError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// An iterative solver hit its iteration cap before reaching tolerance.
struct NonConvergenceError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Neumaier compensated accumulator. Keeps pair sums reproducible to ~1 ulp
/// per summand, so reduction order changes results by less than 1e-12 relative.
class Ksum {
public:
    void add(double x) {
        const double t = sum_ + x;
        if (std::abs(sum_) >= std::abs(x))
            comp_ += (sum_ - t) + x;
        else
            comp_ += (x - t) + sum_;
        sum_ = t;
    }
    double value() const { return sum_ + comp_; }

private:
    double sum_ = 0.0;
    double comp_ = 0.0;
};

/// Dense n-by-n table keyed by node pair; writers keep it symmetric.
class PairMatrix {
public:
    PairMatrix() = default;
    PairMatrix(int n, double fill) : n_(n), v_(static_cast<size_t>(n) * static_cast<size_t>(n), fill) {}

    int size() const { return n_; }
    double operator()(int i, int j) const { return v_[static_cast<size_t>(i) * n_ + j]; }
    double& operator()(int i, int j) { return v_[static_cast<size_t>(i) * n_ + j]; }
    void set_sym(int i, int j, double x) {
        (*this)(i, j) = x;
        (*this)(j, i) = x;
    }

    /// Largest relative asymmetry max |m_ij - m_ji| / (1 + |m_ij|) over i < j.
    double asymmetry() const {
        double worst = 0.0;
        for (int i = 0; i < n_; ++i)
            for (int j = i + 1; j < n_; ++j)
                worst = std::max(worst, std::abs((*this)(i, j) - (*this)(j, i)) / (1.0 + std::abs((*this)(i, j))));
        return worst;
    }

    double min_off_diagonal() const { return off_diagonal_extreme(false); }
    double max_off_diagonal() const { return off_diagonal_extreme(true); }

private:
    double off_diagonal_extreme(bool want_max) const {
        if (n_ < 2) throw DomainError("PairMatrix: off-diagonal extremum needs at least two nodes");
        double best = (*this)(0, 1);
        for (int i = 0; i < n_; ++i)
            for (int j = 0; j < n_; ++j) {
                if (i == j) continue;
                const double x = (*this)(i, j);
                best = want_max ? std::max(best, x) : std::min(best, x);
            }
        return best;
    }

    int n_ = 0;
    std::vector<double> v_;
};

/// FNV-1a over bytes; used for config hashing and stream derivation.
inline std::uint64_t fnv1a64(std::string_view bytes) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

/// Deterministic random stream. All draws go through fixed bit-level
/// transforms (never distribution objects from <random>, whose output is
/// implementation defined), so a seed reproduces bit-identical runs anywhere.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : seed_(seed), eng_(seed) {}

    /// Independent stream for a named consumer; adding a consumer never
    /// shifts the draws seen by existing ones.
    Rng fork(std::string_view purpose) const { return Rng(seed_ ^ fnv1a64(purpose)); }

    std::uint64_t bits() { return eng_(); }

    /// Uniform in [0, 1) with 53 random bits.
    double uniform01() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

    double uniform(double a, double b) { return a + (b - a) * uniform01(); }

    /// Standard normal via Box-Muller; one spare value is cached.
    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = uniform01();
        while (u1 <= 0.0) u1 = uniform01();
        const double u2 = uniform01();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 2.0 * 3.14159265358979323846 * u2;
        spare_ = r * std::sin(a);
        have_spare_ = true;
        return r * std::cos(a);
    }

    /// Uniform integer in [0, m).
    int index(int m) { return static_cast<int>(eng_() % static_cast<std::uint64_t>(m)); }

private:
    std::uint64_t seed_ = 0;
    std::mt19937_64 eng_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace fracflow
