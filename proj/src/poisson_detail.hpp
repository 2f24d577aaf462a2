#pragma once

#include <array>
#include <cmath>

namespace clicktomo::detail {

/// P(X >= 5) for X ~ Poisson(mu) as a sum of positive terms. Small mu sums
/// the tail directly from k = 5; large mu subtracts the (tiny) head, where
/// the subtraction costs no relative precision.
inline double poisson_tail_ge5(double mu) {
    if (mu <= 0.0) return 0.0;
    if (mu > 30.0) {
        long double cdf = 0.0L;
        long double term = expl(-static_cast<long double>(mu));
        for (int k = 0; k <= 4; ++k) {
            cdf += term;
            term *= mu / (k + 1);
        }
        return static_cast<double>(1.0L - cdf);
    }
    long double term = expl(-static_cast<long double>(mu));
    for (int k = 1; k <= 5; ++k) term *= mu / k;
    long double tail = 0.0L;
    int k = 5;
    while (true) {
        tail += term;
        ++k;
        term *= mu / k;
        if (term < tail * 1e-20L && k > mu) break;
    }
    return static_cast<double>(tail);
}

/// e^-mu mu^k / k! for k = 0..4; underflows cleanly to zero for huge mu.
inline std::array<double, 5> poisson_weights_0_4(double mu) {
    std::array<double, 5> w{};
    long double term = expl(-static_cast<long double>(mu));
    for (int k = 0; k <= 4; ++k) {
        w[static_cast<std::size_t>(k)] = static_cast<double>(term);
        term *= mu / (k + 1);
    }
    return w;
}

}  // namespace clicktomo::detail
