#pragma once

#include "tdcast/series.hpp"

#include <cstddef>
#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <vector>

namespace tdcast::synth {

struct Generated {
    std::vector<SalesSeries> lower;
    std::map<std::string, std::string> parent_of;
    std::map<std::string, double> rates;  // per lower series, when the generator has a constant rate
};

/// Failures before the r-th success (mean r(1-p)/p), drawn as a Gamma-Poisson mixture.
std::int64_t negbin_draw(double r, double p, std::mt19937_64& rng);

/// n_aggregates x n_children hierarchy; every child is i.i.d. Poisson with its own constant rate.
Generated poisson_hierarchy(std::size_t n_aggregates, std::size_t n_children, std::size_t days, std::uint64_t seed);

/// Sparse, over-dispersed series (ADI and CV² above the class thresholds) with persistent on/off demand.
std::vector<SalesSeries> lumpy_population(std::size_t n, std::size_t days, std::uint64_t seed);

/// Item x store sales in the shape of the M5 data: weekly pattern, late launches, NB noise.
/// Lower ids are `<item>_<store>_evaluation`; each lower series' parent is its item id.
Generated m5_like(std::size_t n_items, std::size_t n_stores, std::size_t days, std::uint64_t seed);

}  // namespace tdcast::synth
