#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

namespace es {

/// Deterministic splitmix64 generator. Every random choice in the project is
/// drawn from one of these, seeded explicitly, so identical configs replay to
/// identical bytes on any platform (no std:: distributions, which are
/// implementation-defined).
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() {
        std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

    /// Uniform in [0,1).
    double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    float next_float() { return static_cast<float>(next_double()); }

    float uniform(float lo, float hi) { return lo + (hi - lo) * next_float(); }

    /// Uniform integer in [0, n). n == 0 returns 0.
    std::uint64_t below(std::uint64_t n) { return n ? next_u64() % n : 0; }

    int below_int(int n) { return static_cast<int>(below(static_cast<std::uint64_t>(n))); }

    /// Standard normal via Box-Muller (single value per call, no cached spare,
    /// so the draw sequence is position-independent).
    float normal() {
        double u1 = 0.0;
        while (u1 <= 1e-12) u1 = next_double();
        const double u2 = next_double();
        return static_cast<float>(std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2));
    }

    /// Derive an independent stream; forking is order-insensitive.
    Rng fork(std::uint64_t stream) const {
        Rng child(state_ ^ (0x632be59bd9b4e019ull + stream * 0x9e3779b97f4a7c15ull));
        child.next_u64();
        return child;
    }

    template <class T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            const std::size_t j = static_cast<std::size_t>(below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

  private:
    std::uint64_t state_;
};

} // namespace es
