#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <span>
#include <stdexcept>
#include <vector>

namespace itl {

/// splitmix64 step; used to derive independent seed streams from one base seed.
inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Deterministic sub-stream seed: hash of a base seed and a path of indices.
inline std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> path) {
    std::uint64_t h = splitmix64(base);
    for (std::uint64_t p : path) h = splitmix64(h ^ p);
    return h;
}

/**
 * Seeded random source with hand-rolled distributions.
 *
 * std::mt19937_64 output is fully specified by the standard, but the
 * std::*_distribution adapters are not, so every distribution used for
 * data generation is implemented here to keep results reproducible
 * across standard libraries.
 */
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(splitmix64(seed)) {}

    std::uint64_t next_u64() {
        // xorshift64* keeps the generator self-contained and portable.
        std::uint64_t x = state_;
        x ^= x >> 12;
        x ^= x << 25;
        x ^= x >> 27;
        state_ = x;
        return x * 0x2545f4914f6cdd1dULL;
    }

    /// Uniform double in [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    /// Uniform double in (0, 1); never returns an exact zero.
    double uniform_pos() {
        double u;
        do { u = uniform(); } while (u <= 0.0);
        return u;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [0, n).
    int uniform_int(int n) {
        if (n <= 0) throw std::invalid_argument("uniform_int: n must be positive");
        // rejection sampling to avoid modulo bias
        const std::uint64_t un = static_cast<std::uint64_t>(n);
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % un;
        std::uint64_t x;
        do { x = next_u64(); } while (x >= limit);
        return static_cast<int>(x % un);
    }

    /// Standard normal via Box-Muller.
    double normal() {
        const double u1 = uniform_pos();
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
    }

    /// Index draw from unnormalized nonnegative weights (inverse CDF).
    int categorical(std::span<const double> weights) {
        double total = 0.0;
        for (double w : weights) total += w;
        if (!(total > 0.0)) throw std::invalid_argument("categorical: weights must have positive sum");
        double u = uniform() * total;
        for (std::size_t i = 0; i + 1 < weights.size(); ++i) {
            u -= weights[i];
            if (u < 0.0) return static_cast<int>(i);
        }
        return static_cast<int>(weights.size()) - 1;
    }

    /// k distinct indices from [0, n), in draw order (partial Fisher-Yates).
    std::vector<int> sample_without_replacement(int n, int k) {
        if (k < 0 || k > n) throw std::invalid_argument("sample_without_replacement: need 0 <= k <= n");
        std::vector<int> pool(n);
        std::iota(pool.begin(), pool.end(), 0);
        std::vector<int> out;
        out.reserve(k);
        for (int i = 0; i < k; ++i) {
            const int j = i + uniform_int(n - i);
            std::swap(pool[i], pool[j]);
            out.push_back(pool[i]);
        }
        return out;
    }

    /// Gamma(shape, 1) via Marsaglia-Tsang; requires shape >= 1.
    double gamma_ge1(double shape) {
        const double d = shape - 1.0 / 3.0;
        const double c = 1.0 / std::sqrt(9.0 * d);
        for (;;) {
            double x, v;
            do {
                x = normal();
                v = 1.0 + c * x;
            } while (v <= 0.0);
            v = v * v * v;
            const double u = uniform_pos();
            if (std::log(u) < 0.5 * x * x + d - d * v + d * std::log(v)) return d * v;
        }
    }

    /**
     * log of a Gamma(shape, 1) draw, valid for any shape > 0.
     *
     * For shape < 1 the boost  G(a) = G(a+1) * U^(1/a)  is applied in log
     * space, so draws with very small shape (e.g. Dirichlet smoothing
     * pseudo-counts) do not underflow to zero.
     */
    double log_gamma_draw(double shape) {
        if (!(shape > 0.0)) throw std::invalid_argument("log_gamma_draw: shape must be positive");
        if (shape >= 1.0) return std::log(gamma_ge1(shape));
        const double g = gamma_ge1(shape + 1.0);
        return std::log(g) + std::log(uniform_pos()) / shape;
    }

    /// Dirichlet draw; stable for arbitrarily small concentration parameters.
    void dirichlet(std::span<const double> alpha, std::span<double> out) {
        if (alpha.size() != out.size() || alpha.empty())
            throw std::invalid_argument("dirichlet: size mismatch");
        std::vector<double> lg(alpha.size());
        double maxlg = -std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < alpha.size(); ++i) {
            lg[i] = log_gamma_draw(alpha[i]);
            maxlg = std::max(maxlg, lg[i]);
        }
        double sum = 0.0;
        for (std::size_t i = 0; i < alpha.size(); ++i) {
            out[i] = std::exp(lg[i] - maxlg);
            sum += out[i];
        }
        for (std::size_t i = 0; i < alpha.size(); ++i) out[i] /= sum;
    }

private:
    std::uint64_t state_;
};

} // namespace itl
