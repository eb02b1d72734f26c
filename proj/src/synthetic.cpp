#include "tdcast/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

namespace tdcast::synth {

namespace {

const Date kStart = Date{std::chrono::year{2011} / 1 / 29};

std::int64_t poisson_draw(double lambda, std::mt19937_64& rng) {
    if (lambda <= 0.0) return 0;
    return std::poisson_distribution<std::int64_t>(lambda)(rng);
}

}  // namespace

std::int64_t negbin_draw(double r, double p, std::mt19937_64& rng) {
    if (p >= 1.0) return 0;
    const double rate = std::gamma_distribution<double>(r, (1.0 - p) / p)(rng);
    return poisson_draw(rate, rng);
}

Generated poisson_hierarchy(std::size_t n_aggregates, std::size_t n_children, std::size_t days, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::lognormal_distribution<double> rate_dist(-0.3, 1.0);
    Generated g;
    for (std::size_t a = 0; a < n_aggregates; ++a) {
        char agg[32];
        std::snprintf(agg, sizeof agg, "agg_%03zu", a);
        for (std::size_t c = 0; c < n_children; ++c) {
            char id[48];
            std::snprintf(id, sizeof id, "%s_child_%02zu", agg, c);
            const double lambda = std::clamp(rate_dist(rng), 0.02, 20.0);
            std::vector<Count> v(days);
            for (auto& x : v) x = poisson_draw(lambda, rng);
            g.lower.push_back(SalesSeries::make(id, kStart, std::move(v)));
            g.parent_of[id] = agg;
            g.rates[id] = lambda;
        }
    }
    return g;
}

std::vector<SalesSeries> lumpy_population(std::size_t n, std::size_t days, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::vector<SalesSeries> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double p_on = 0.05 + 0.25 * unit(rng);    // chance a quiet day turns active
        const double p_stay = 0.2 + 0.5 * unit(rng);    // chance an active day stays active
        const double size_mean = 2.0 + 18.0 * unit(rng);
        const double size_r = 0.5 + 1.5 * unit(rng);
        const double p = size_r / (size_r + size_mean);
        std::vector<Count> v(days, 0);
        bool active = false;
        for (auto& x : v) {
            active = unit(rng) < (active ? p_stay : p_on);
            if (active) x = 1 + negbin_draw(size_r, p, rng);
        }
        char id[32];
        std::snprintf(id, sizeof id, "lumpy_%05zu", i);
        out.push_back(SalesSeries::make(id, kStart, std::move(v)));
    }
    return out;
}

Generated m5_like(std::size_t n_items, std::size_t n_stores, std::size_t days, std::uint64_t seed) {
    static const char* const kStores[] = {"CA_1", "CA_2", "CA_3", "CA_4", "TX_1", "TX_2", "TX_3", "WI_1", "WI_2", "WI_3"};
    static const char* const kDepts[] = {"FOODS_1", "FOODS_2", "FOODS_3", "HOBBIES_1", "HOBBIES_2", "HOUSEHOLD_1",
                                         "HOUSEHOLD_2"};
    static const double kWeekly[] = {1.30, 1.35, 0.95, 0.90, 0.90, 0.95, 1.10};  // Sat .. Fri
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::normal_distribution<double> normal(0.0, 1.0);

    std::vector<double> store_mult;
    for (std::size_t s = 0; s < n_stores; ++s) store_mult.push_back(std::exp(0.3 * normal(rng)));

    Generated g;
    for (std::size_t i = 0; i < n_items; ++i) {
        char item[48];
        std::snprintf(item, sizeof item, "%s_%03zu", kDepts[i % 7], i / 7 + 1);
        const double base = std::exp(-0.7 + 1.3 * normal(rng));
        const double trend = 0.3 * normal(rng) / static_cast<double>(days);
        const std::size_t launch = unit(rng) < 0.3 ? static_cast<std::size_t>(unit(rng) * 0.6 * days) : 0;
        const double dispersion = 0.5 + 3.0 * unit(rng);
        for (std::size_t s = 0; s < n_stores; ++s) {
            char id[80];
            std::snprintf(id, sizeof id, "%s_%s_evaluation", item, kStores[s % 10]);
            std::vector<Count> v(days, 0);
            std::size_t stockout_left = 0;
            for (std::size_t t = launch; t < days; ++t) {
                if (stockout_left > 0) {
                    --stockout_left;
                    continue;
                }
                if (unit(rng) < 0.002) stockout_left = 5 + static_cast<std::size_t>(unit(rng) * 25);
                const double mean = base * store_mult[s] * kWeekly[t % 7] *
                                    std::exp(trend * static_cast<double>(t - launch));
                v[t] = negbin_draw(dispersion, dispersion / (dispersion + mean), rng);
            }
            g.lower.push_back(SalesSeries::make(id, kStart, std::move(v)));
            g.parent_of[id] = item;
        }
    }
    return g;
}

}  // namespace tdcast::synth
