#pragma once

#include "tdcast/series.hpp"

#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace tdcast::fixture {

inline Date day0() { return Date{std::chrono::year{2020} / 1 / 1}; }

inline SalesSeries series(std::string id, std::vector<Count> values) {
    return SalesSeries::make(std::move(id), day0(), std::move(values));
}

inline std::vector<Count> random_counts(std::mt19937_64& rng, std::size_t n, Count hi) {
    std::uniform_int_distribution<Count> d(0, hi);
    std::vector<Count> v(n);
    for (auto& x : v) x = d(rng);
    return v;
}

inline double uniform(std::mt19937_64& rng, double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(rng);
}

inline double rel_err(double a, double b, double floor = 1e-12) {
    return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

}  // namespace tdcast::fixture
