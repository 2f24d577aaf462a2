#pragma once

#include <charconv>
#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace clicktomo {

inline constexpr const char* kVersion = "0.1.0";

/// Uniform double in [0, 1) from the top 53 bits of a mt19937_64 draw.
/// Used instead of std::uniform_real_distribution so that seeded streams are
/// identical across standard-library implementations.
inline double uniform01(std::mt19937_64& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline std::vector<double> linspace(double lo, double hi, int count) {
    if (count < 1) throw std::invalid_argument("linspace: count must be >= 1");
    if (count == 1) return {lo};
    std::vector<double> out(static_cast<std::size_t>(count));
    const double step = (hi - lo) / (count - 1);
    for (int i = 0; i < count; ++i) out[static_cast<std::size_t>(i)] = lo + step * i;
    out.back() = hi;
    return out;
}

/// Logarithmically spaced grid from lo to hi inclusive; lo, hi > 0.
inline std::vector<double> logspace(double lo, double hi, int count) {
    if (lo <= 0.0 || hi <= 0.0) throw std::invalid_argument("logspace: bounds must be > 0");
    auto grid = linspace(std::log(lo), std::log(hi), count);
    for (double& g : grid) g = std::exp(g);
    grid.back() = hi;
    if (count > 1) grid.front() = lo;
    return grid;
}

/// Shortest decimal form that parses back to the same double.
inline std::string format_double(double value) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
    if (ec != std::errc()) throw std::runtime_error("format_double: conversion failed");
    return std::string(buf, ptr);
}

}  // namespace clicktomo
