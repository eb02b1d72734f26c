#pragma once

#include "tdcast/features.hpp"
#include "tdcast/series.hpp"

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

namespace tdcast {

/// Historical share of each child in its aggregate's training-set sales.
struct ProportionMap {
    std::map<std::string, std::map<std::string, double>> rho;  // aggregate -> child -> share
    /// Aggregates with no training sales; their children get 1/n_j.
    std::set<std::string> uniform_fallback;

    [[nodiscard]] double at(const std::string& aggregate, const std::string& child) const;
};

ProportionMap compute_proportions(const Dataset& dataset);

/// Splits an aggregate path across the children listed in the hierarchy (hierarchy order).
std::vector<ForecastPath> disaggregate(const ForecastPath& aggregate_path, const ProportionMap& proportions,
                                       const HierarchyMap& hierarchy);

enum class Distribution { Poisson, NegBin };

std::string to_string(Distribution d);
Distribution parse_distribution(std::string_view name);

/// Per-step distribution. NegBin counts failures before the r-th success: mean r(1-p)/p, variance mean/p.
struct StepParams {
    Distribution dist = Distribution::Poisson;
    double lambda = 0.0;  // Poisson rate (also the mean for NegBin)
    double r = 0.0;
    double p = 1.0;
    bool fallback = false;  // NegBin requested but Poisson used

    [[nodiscard]] double mean() const { return dist == Distribution::Poisson ? lambda : r * (1.0 - p) / p; }
    [[nodiscard]] double variance() const { return dist == Distribution::Poisson ? lambda : mean() / p; }
};

struct DistributionParams {
    std::string series_id;
    std::vector<StepParams> steps;
    double variance_estimate = 0.0;  // in-sample variance used for NegBin (0 for Poisson)
};

/// Sample variance of the training observations, or of the trailing `window` of them.
double in_sample_variance(const SalesSeries& history, std::size_t train_end,
                          std::optional<std::size_t> window = std::nullopt);

/**
 * Method-of-moments parameters for a clamped point path. NegBin falls back to
 * Poisson (flagged) whenever the variance estimate does not exceed the mean.
 */
DistributionParams estimate_params(const ForecastPath& point, const SalesSeries& history, std::size_t train_end,
                                   Distribution dist, std::optional<std::size_t> variance_window = std::nullopt);

/// Lower-level NegBin with p fixed to the parent's per-step p (non-default variant).
DistributionParams estimate_params_shared_p(const ForecastPath& point, const DistributionParams& parent);

struct QuantileForecastSet {
    std::string series_id;
    std::vector<double> levels;
    std::vector<std::vector<std::int64_t>> values;  // [step][level]

    [[nodiscard]] std::size_t horizon() const noexcept { return values.size(); }
    [[nodiscard]] std::vector<double> at_level(std::size_t level) const;
};

/// Default quantile levels per dataset profile.
std::vector<double> m5_quantile_levels();
std::vector<double> retail_quantile_levels();

void validate_levels(std::span<const double> levels);

/// Smallest k with CDF(k) >= u, for each (sorted) u; CDF by cumulative pmf summation.
std::vector<std::int64_t> poisson_quantiles(double lambda, std::span<const double> levels);
std::vector<std::int64_t> negbin_quantiles(double r, double p, std::span<const double> levels);

QuantileForecastSet quantiles(const DistributionParams& params, std::span<const double> levels);

/// Type-1 empirical quantiles of the training values, repeated over the horizon.
QuantileForecastSet in_sample_quantiles(const SalesSeries& history, std::size_t train_end,
                                        std::span<const double> levels, int horizon);

/// `series_id,step,u,quantile`
void write_quantiles_csv_header(std::ostream& out);
void write_quantiles_csv(std::ostream& out, const QuantileForecastSet& set);
std::map<std::string, QuantileForecastSet> read_quantiles_csv(std::istream& in);

/// `series_id,step,dist,lambda_or_r,p,variance,fallback`
void write_params_csv_header(std::ostream& out);
void write_params_csv(std::ostream& out, const DistributionParams& params);

}  // namespace tdcast
