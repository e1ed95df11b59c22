#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "causim/numcore/tensor.hpp"

namespace causim::num {

using Rng = std::mt19937_64;

inline Tensor randn(std::size_t rows, std::size_t cols, Rng& rng, double stddev = 1.0) {
    std::normal_distribution<double> d(0.0, stddev);
    std::vector<double> v(rows * cols);
    for (double& x : v) x = d(rng);
    return Tensor::unchecked(rows, cols, std::move(v));
}

inline Tensor uniform(std::size_t rows, std::size_t cols, Rng& rng, double lo, double hi) {
    std::uniform_real_distribution<double> d(lo, hi);
    std::vector<double> v(rows * cols);
    for (double& x : v) x = d(rng);
    return Tensor::unchecked(rows, cols, std::move(v));
}

/// Glorot-uniform initialisation for a fan_in × fan_out weight.
inline Tensor glorot(std::size_t fan_in, std::size_t fan_out, Rng& rng) {
    const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    return uniform(fan_in, fan_out, rng, -a, a);
}

/// Independent child stream; keeps sub-components reproducible regardless of call order elsewhere.
inline Rng derive(std::uint64_t seed, std::uint64_t stream) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
    return Rng(seq);
}

}  // namespace causim::num
