#pragma once

#include "tdcast/series.hpp"

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace tdcast {

enum class PadPolicy { ZeroPad, Drop };

PadPolicy parse_pad_policy(std::string_view name);

/**
 * Pooled lag-embedded training rows. Row r has features
 * (y[t-1], ..., y[t-n_lags]) stored row-major and target y[t].
 */
struct LagMatrix {
    std::size_t n_lags = 0;
    std::vector<double> features;
    std::vector<double> targets;
    std::vector<std::uint32_t> series_index;  // into series_ids
    std::vector<std::uint32_t> target_time;
    std::vector<std::string> series_ids;
    /// Series that produced no rows under PadPolicy::Drop.
    std::vector<std::string> skipped;

    [[nodiscard]] std::size_t rows() const noexcept { return targets.size(); }
    [[nodiscard]] std::span<const double> row(std::size_t r) const {
        return {features.data() + r * n_lags, n_lags};
    }
};

/// Lag window ending just before `t` (features for target y[t]); zero before the series start.
void lag_window(std::span<const double> history, std::size_t t, std::span<double> out);

/// Pools rows over every series using observations [0, train_end].
LagMatrix embed(std::span<const SalesSeries> series, std::size_t train_end, int n_lags,
                PadPolicy pad = PadPolicy::ZeroPad);

/// Same as embed() but the target for the window ending at t-1 is y[t + shift].
/// Used by direct multi-step models; rows whose target falls past train_end are dropped.
LagMatrix embed_shifted(std::span<const SalesSeries> series, std::size_t train_end, int n_lags, int shift,
                        PadPolicy pad = PadPolicy::ZeroPad);

/// Anything that maps a lag vector (most recent first) to a mean-scale point prediction.
class PointModel {
public:
    virtual ~PointModel() = default;
    [[nodiscard]] virtual double predict(std::span<const double> lags) const = 0;
    [[nodiscard]] virtual std::size_t n_lags() const = 0;
};

struct ForecastPath {
    std::string series_id;
    std::vector<double> values;  // steps T+1 .. T+h, units/day

    [[nodiscard]] bool operator==(const ForecastPath&) const = default;
};

/**
 * Recursive multi-step forecast from observations [0, train_end]. Each step's
 * prediction is clamped at zero and fed back unrounded as lag 1 of the next step.
 */
ForecastPath recursive_forecast(const PointModel& model, const SalesSeries& series, std::size_t train_end,
                                int horizon);

/// Element-wise mean of equally long paths for the same series.
ForecastPath average_paths(std::span<const ForecastPath> paths);

}  // namespace tdcast
